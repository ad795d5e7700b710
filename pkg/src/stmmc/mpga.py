"""Two-branch graph autoencoder with per-layer fusion and contrastive losses.

The expression branch convolves over the proximity graph, the image branch
over the expression-similarity graph.  Branch stacks are independent; their
outputs are blended per layer by a learnable convex weight, and the final
blend feeds a one-layer graph decoder that reconstructs the expression input.
Each branch is additionally regularized by discriminating (embedding,
neighborhood-mean) pairs of the original graph against pairs built from a
row-shuffled copy of the node features.

Gradients are accumulated by :func:`backward` into the model's `Param`s using
the closed-form derivatives of every stage; no autodiff is involved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import CorruptionPlan, corrupt_features
from .tensor_core import (
    Activation,
    BilinearCache,
    GcnLayerCache,
    Param,
    bilinear_discriminator,
    bilinear_discriminator_backward_scores,
    gcn_layer_backward,
    gcn_layer_forward,
    glorot_uniform,
    sigmoid,
)

PROB_EPS = 1e-7  # probabilities are clamped to [PROB_EPS, 1 - PROB_EPS] before log


@dataclass
class LossWeights:
    """Relative strength of the reconstruction and contrastive terms."""

    theta1: float = 10.0
    theta2: float = 1.0

    def __post_init__(self) -> None:
        if self.theta1 < 0 or self.theta2 < 0:
            raise ValueError("loss weights must be nonnegative")


@dataclass
class BranchLayer:
    w: Param
    b: Param


@dataclass
class MpgaModel:
    """All learnable state of the two-branch autoencoder."""

    gene_layers: list[BranchLayer]
    image_layers: list[BranchLayer]
    fusion_logits: Param  # (1, L); alpha_l = sigmoid(logit_l)
    decoder_w: Param
    decoder_b: Param
    disc_gene: Param
    disc_image: Param
    dims_gene: list[int]
    dims_image: list[int]

    @classmethod
    def create(
        cls,
        in_gene: int,
        in_image: int,
        hidden_dims: list[int],
        rng: np.random.Generator,
    ) -> "MpgaModel":
        """Glorot-uniform weights, zero biases, fusion logits at 0 (alpha=0.5)."""
        if not hidden_dims:
            raise ValueError("hidden_dims must be nonempty")
        dims_gene = [in_gene, *hidden_dims]
        dims_image = [in_image, *hidden_dims]
        f = hidden_dims[-1]

        def branch(dims: list[int]) -> list[BranchLayer]:
            layers = []
            for fan_in, fan_out in zip(dims[:-1], dims[1:]):
                layers.append(
                    BranchLayer(
                        w=Param(glorot_uniform(rng, fan_in, fan_out)),
                        b=Param(np.zeros((1, fan_out))),
                    )
                )
            return layers

        gene_layers = branch(dims_gene)
        image_layers = branch(dims_image)
        decoder_w = Param(glorot_uniform(rng, f, in_gene))
        decoder_b = Param(np.zeros((1, in_gene)))
        disc_gene = Param(glorot_uniform(rng, f, f))
        disc_image = Param(glorot_uniform(rng, f, f))
        return cls(
            gene_layers=gene_layers,
            image_layers=image_layers,
            fusion_logits=Param(np.zeros((1, len(hidden_dims)))),
            decoder_w=decoder_w,
            decoder_b=decoder_b,
            disc_gene=disc_gene,
            disc_image=disc_image,
            dims_gene=dims_gene,
            dims_image=dims_image,
        )

    @property
    def n_layers(self) -> int:
        return len(self.gene_layers)

    def alphas(self) -> np.ndarray:
        return sigmoid(self.fusion_logits.value[0])

    def named_params(self) -> dict[str, Param]:
        named: dict[str, Param] = {}
        for tag, layers in (("gene", self.gene_layers), ("image", self.image_layers)):
            for l, layer in enumerate(layers):
                named[f"{tag}_w_{l}"] = layer.w
                named[f"{tag}_b_{l}"] = layer.b
        named["fusion_logits"] = self.fusion_logits
        named["decoder_w"] = self.decoder_w
        named["decoder_b"] = self.decoder_b
        named["disc_gene"] = self.disc_gene
        named["disc_image"] = self.disc_image
        return named

    def params(self) -> list[Param]:
        return list(self.named_params().values())

    def load_values(self, named: dict[str, np.ndarray]) -> None:
        own = self.named_params()
        missing = sorted(set(own) - set(named))
        if missing:
            raise ValueError(f"checkpoint is missing parameters: {missing}")
        for name, p in own.items():
            value = np.asarray(named[name], dtype=np.float64)
            if value.shape != p.value.shape:
                raise ValueError(
                    f"checkpoint parameter {name!r} has shape {value.shape}, "
                    f"expected {p.value.shape}"
                )
            p.value = value.copy()
            p.grad = np.zeros_like(p.value)


def layer_activation(layer_index: int, n_layers: int) -> Activation:
    """ReLU on hidden layers; the top layer stays linear because it feeds both
    the decoder and the pair discriminator."""
    return "relu" if layer_index < n_layers - 1 else "identity"


@dataclass
class ModelInputs:
    """Per-run constants: branch inputs, normalized adjacencies, and the
    neighbor-averaging operators of both graphs."""

    x_gene: np.ndarray
    x_image: np.ndarray
    a_gene: np.ndarray
    a_image: np.ndarray
    c_gene: np.ndarray
    c_image: np.ndarray


def encode(
    model: MpgaModel,
    x_gene: np.ndarray,
    x_image: np.ndarray,
    a_gene: np.ndarray,
    a_image: np.ndarray,
) -> tuple[list[np.ndarray], list[np.ndarray], list[GcnLayerCache], list[GcnLayerCache]]:
    """Run both branch stacks; returns per-layer embeddings and caches."""
    z_gene, caches_gene = _encode_branch(model.gene_layers, x_gene, a_gene)
    z_image, caches_image = _encode_branch(model.image_layers, x_image, a_image)
    return z_gene, z_image, caches_gene, caches_image


def _encode_branch(
    layers: list[BranchLayer], x: np.ndarray, a_norm: np.ndarray
) -> tuple[list[np.ndarray], list[GcnLayerCache]]:
    zs: list[np.ndarray] = []
    caches: list[GcnLayerCache] = []
    z = x
    for l, layer in enumerate(layers):
        z, cache = gcn_layer_forward(
            a_norm, z, layer.w, layer.b, layer_activation(l, len(layers))
        )
        zs.append(z)
        caches.append(cache)
    return zs, caches


def fuse(z_gene: np.ndarray, z_image: np.ndarray, alpha: float) -> np.ndarray:
    """Convex blend alpha * Z_gene + (1 - alpha) * Z_image."""
    if z_gene.shape != z_image.shape:
        raise ValueError(
            f"cannot fuse embeddings of shapes {z_gene.shape} and {z_image.shape}"
        )
    return alpha * z_gene + (1.0 - alpha) * z_image


def decode(
    model: MpgaModel, z_final: np.ndarray, a_gene: np.ndarray
) -> tuple[np.ndarray, GcnLayerCache]:
    """One linear graph convolution over the proximity graph."""
    return gcn_layer_forward(
        a_gene, z_final, model.decoder_w, model.decoder_b, "identity"
    )


def reconstruction_loss(x_gene: np.ndarray, x_rec: np.ndarray) -> float:
    """Sum over spots of squared Euclidean reconstruction error (no averaging)."""
    if x_gene.shape != x_rec.shape:
        raise ValueError("reconstruction shape does not match the input")
    diff = x_rec - x_gene
    return float(np.sum(diff * diff))


@dataclass
class _PairSet:
    """One discriminator evaluation: probabilities plus its backward cache."""

    probs: np.ndarray
    clamped: np.ndarray
    cache: BilinearCache


def _score_pairs(z: np.ndarray, g: np.ndarray, disc: Param) -> _PairSet:
    probs, cache = bilinear_discriminator(z, g, disc)
    clamped = np.clip(probs, PROB_EPS, 1.0 - PROB_EPS)
    return _PairSet(np.asarray(probs), clamped, cache)


def _pair_log_sum(pos: _PairSet, neg: _PairSet) -> float:
    return float(np.sum(np.log(pos.clamped)) + np.sum(np.log(1.0 - neg.clamped)))


def contrastive_loss(
    branches: list[tuple[np.ndarray, np.ndarray, np.ndarray, Param]],
) -> float:
    """Binary cross-entropy over (z_i, g_i) positives and (z*_i, g_i) negatives.

    ``branches`` holds one (Z, Z_corrupted, community, discriminator) tuple per
    modality; the per-pair log terms are summed over modalities and divided by
    the number of spots.
    """
    n = branches[0][0].shape[0]
    total = 0.0
    for z, z_star, g, disc in branches:
        total += _pair_log_sum(_score_pairs(z, g, disc), _score_pairs(z_star, g, disc))
    return -total / n


def symmetric_contrastive_loss(
    branches: list[tuple[np.ndarray, np.ndarray, np.ndarray, Param]],
) -> float:
    """Mirror image of :func:`contrastive_loss` on the corrupted communities:
    positives (z*_i, g*_i), negatives (z_i, g*_i)."""
    n = branches[0][0].shape[0]
    total = 0.0
    for z, z_star, g_star, disc in branches:
        total += _pair_log_sum(
            _score_pairs(z_star, g_star, disc), _score_pairs(z, g_star, disc)
        )
    return -total / n


def total_loss(l_rec: float, l_cl: float, l_cl_c: float, weights: LossWeights) -> float:
    return weights.theta1 * l_rec + weights.theta2 * (l_cl + l_cl_c)


@dataclass
class _BranchState:
    z: list[np.ndarray]
    caches: list[GcnLayerCache]
    z_corr: list[np.ndarray] | None = None
    caches_corr: list[GcnLayerCache] | None = None
    community: np.ndarray | None = None
    community_corr: np.ndarray | None = None
    pos: _PairSet | None = None
    neg: _PairSet | None = None
    sym_pos: _PairSet | None = None
    sym_neg: _PairSet | None = None


@dataclass
class ForwardState:
    """Everything produced by one full forward pass."""

    gene: _BranchState
    image: _BranchState
    fused: list[np.ndarray]
    z_final: np.ndarray
    x_rec: np.ndarray
    decoder_cache: GcnLayerCache
    l_rec: float
    l_cl: float
    l_cl_c: float
    l_total: float


def forward(
    model: MpgaModel,
    inputs: ModelInputs,
    plan: CorruptionPlan | None,
    weights: LossWeights,
    use_contrastive: bool = True,
) -> ForwardState:
    """Full forward pass; pass ``plan=None`` or ``use_contrastive=False`` to
    skip the corrupted passes (the contrastive terms are then zero)."""
    z_g, z_i, caches_g, caches_i = encode(
        model, inputs.x_gene, inputs.x_image, inputs.a_gene, inputs.a_image
    )
    gene = _BranchState(z=z_g, caches=caches_g)
    image = _BranchState(z=z_i, caches=caches_i)

    alphas = model.alphas()
    fused = [
        fuse(zg, zi, float(a)) for zg, zi, a in zip(z_g, z_i, alphas)
    ]
    z_final = fused[-1]
    x_rec, decoder_cache = decode(model, z_final, inputs.a_gene)
    l_rec = reconstruction_loss(inputs.x_gene, x_rec)

    l_cl = 0.0
    l_cl_c = 0.0
    if use_contrastive and plan is not None:
        xc_g = corrupt_features(inputs.x_gene, plan)
        xc_i = corrupt_features(inputs.x_image, plan)
        gene.z_corr, gene.caches_corr = _encode_branch(
            model.gene_layers, xc_g, inputs.a_gene
        )
        image.z_corr, image.caches_corr = _encode_branch(
            model.image_layers, xc_i, inputs.a_image
        )
        n = inputs.x_gene.shape[0]
        for branch, c_m, disc in (
            (gene, inputs.c_gene, model.disc_gene),
            (image, inputs.c_image, model.disc_image),
        ):
            assert branch.z_corr is not None
            z_top = branch.z[-1]
            zc_top = branch.z_corr[-1]
            branch.community = c_m @ z_top
            branch.community_corr = c_m @ zc_top
            branch.pos = _score_pairs(z_top, branch.community, disc)
            branch.neg = _score_pairs(zc_top, branch.community, disc)
            branch.sym_pos = _score_pairs(zc_top, branch.community_corr, disc)
            branch.sym_neg = _score_pairs(z_top, branch.community_corr, disc)
            l_cl -= _pair_log_sum(branch.pos, branch.neg) / n
            l_cl_c -= _pair_log_sum(branch.sym_pos, branch.sym_neg) / n

    l_total = total_loss(l_rec, l_cl, l_cl_c, weights)
    return ForwardState(
        gene=gene,
        image=image,
        fused=fused,
        z_final=z_final,
        x_rec=x_rec,
        decoder_cache=decoder_cache,
        l_rec=l_rec,
        l_cl=l_cl,
        l_cl_c=l_cl_c,
        l_total=l_total,
    )


def _score_grad(pair: _PairSet, coef: float, positive: bool) -> np.ndarray:
    """Score-space gradient of ``coef * log p`` / ``coef * log(1-p)``.

    Exact binary cross-entropy derivatives (clamp ignored): they agree with
    the clamped loss wherever the clamp is inactive and keep the corrective
    signal alive when the sigmoid saturates.
    """
    if positive:
        return coef * (1.0 - pair.probs)
    return -coef * pair.probs


def backward(
    model: MpgaModel,
    inputs: ModelInputs,
    state: ForwardState,
    weights: LossWeights,
) -> None:
    """Accumulate d(l_total)/d(param) into every parameter's ``grad``."""
    # reconstruction path
    d_xrec = weights.theta1 * 2.0 * (state.x_rec - inputs.x_gene)
    d_zfinal = gcn_layer_backward(state.decoder_cache, d_xrec)

    # fusion at the top layer
    top = model.n_layers - 1
    alpha = float(model.alphas()[top])
    z_g_top = state.gene.z[-1]
    z_i_top = state.image.z[-1]
    d_zg = alpha * d_zfinal
    d_zi = (1.0 - alpha) * d_zfinal
    model.fusion_logits.grad[0, top] += float(
        np.sum(d_zfinal * (z_g_top - z_i_top)) * alpha * (1.0 - alpha)
    )

    contrastive_ran = state.gene.pos is not None
    d_zg_corr = np.zeros_like(z_g_top)
    d_zi_corr = np.zeros_like(z_i_top)
    if contrastive_ran:
        n = inputs.x_gene.shape[0]
        coef = -weights.theta2 / n  # both contrastive losses carry -(theta2/N)
        for branch, c_m, d_z, d_zc in (
            (state.gene, inputs.c_gene, d_zg, d_zg_corr),
            (state.image, inputs.c_image, d_zi, d_zi_corr),
        ):
            assert branch.pos and branch.neg and branch.sym_pos and branch.sym_neg
            d_comm = np.zeros_like(branch.community)
            d_comm_corr = np.zeros_like(branch.community_corr)
            dz, dg = bilinear_discriminator_backward_scores(
                branch.pos.cache, _score_grad(branch.pos, coef, positive=True)
            )
            d_z += dz
            d_comm += dg
            dz, dg = bilinear_discriminator_backward_scores(
                branch.neg.cache, _score_grad(branch.neg, coef, positive=False)
            )
            d_zc += dz
            d_comm += dg
            dz, dg = bilinear_discriminator_backward_scores(
                branch.sym_pos.cache, _score_grad(branch.sym_pos, coef, positive=True)
            )
            d_zc += dz
            d_comm_corr += dg
            dz, dg = bilinear_discriminator_backward_scores(
                branch.sym_neg.cache, _score_grad(branch.sym_neg, coef, positive=False)
            )
            d_z += dz
            d_comm_corr += dg
            # neighbor averaging is linear: grad flows through its transpose
            d_z += c_m.T @ d_comm
            d_zc += c_m.T @ d_comm_corr

    _backprop_branch(state.gene.caches, d_zg)
    _backprop_branch(state.image.caches, d_zi)
    if contrastive_ran:
        assert state.gene.caches_corr and state.image.caches_corr
        _backprop_branch(state.gene.caches_corr, d_zg_corr)
        _backprop_branch(state.image.caches_corr, d_zi_corr)


def _backprop_branch(caches: list[GcnLayerCache], d_top: np.ndarray) -> None:
    grad = d_top
    for cache in reversed(caches):
        grad = gcn_layer_backward(cache, grad)


def loss_value(
    model: MpgaModel,
    inputs: ModelInputs,
    plan: CorruptionPlan | None,
    weights: LossWeights,
    use_contrastive: bool = True,
) -> float:
    """Total loss as a pure function of the parameters (finite-difference hook)."""
    return forward(model, inputs, plan, weights, use_contrastive).l_total
