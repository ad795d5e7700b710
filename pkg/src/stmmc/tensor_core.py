"""Dense parameters with hand-derived gradients, plus Adam.

Rather than a general autodiff tape, each primitive the model needs exposes a
forward function returning a cache and a backward function consuming it.  A
layer's weights can therefore be applied several times per step (original and
corrupted passes share weights); gradients accumulate into ``Param.grad`` and
are consumed and zeroed by :func:`adam_step`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .fileio import atomic_write_text, format_float

Activation = Literal["relu", "identity", "sigmoid"]


@dataclass
class Param:
    """A learnable matrix with its gradient and Adam state."""

    value: np.ndarray
    grad: np.ndarray = field(init=False)
    adam_m: np.ndarray = field(init=False)
    adam_v: np.ndarray = field(init=False)
    step_count: int = field(default=0, init=False)

    def __post_init__(self) -> None:
        self.value = np.asarray(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.adam_m = np.zeros_like(self.value)
        self.adam_v = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad.fill(0.0)


@dataclass
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self) -> None:
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")


def adam_step(params: list[Param], cfg: AdamConfig) -> None:
    """One bias-corrected Adam update; gradients are zeroed afterwards."""
    for p in params:
        p.step_count += 1
        t = p.step_count
        p.adam_m = cfg.beta1 * p.adam_m + (1.0 - cfg.beta1) * p.grad
        p.adam_v = cfg.beta2 * p.adam_v + (1.0 - cfg.beta2) * p.grad**2
        m_hat = p.adam_m / (1.0 - cfg.beta1**t)
        v_hat = p.adam_v / (1.0 - cfg.beta2**t)
        p.value -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
        p.zero_grad()


def glorot_uniform(
    rng: np.random.Generator, fan_in: int, fan_out: int
) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _activate(pre: np.ndarray, activation: Activation) -> np.ndarray:
    if activation == "relu":
        return np.maximum(pre, 0.0)
    if activation == "identity":
        return pre
    if activation == "sigmoid":
        return sigmoid(pre)
    raise ValueError(f"unknown activation {activation!r}")


def _activation_grad(
    pre: np.ndarray, out: np.ndarray, activation: Activation
) -> np.ndarray:
    if activation == "relu":
        return (pre > 0.0).astype(np.float64)
    if activation == "identity":
        return np.ones_like(pre)
    if activation == "sigmoid":
        return out * (1.0 - out)
    raise ValueError(f"unknown activation {activation!r}")


@dataclass
class GcnLayerCache:
    """Intermediates of one graph-convolution application."""

    a_norm: np.ndarray
    az: np.ndarray  # A_norm @ Z_in
    pre: np.ndarray  # az @ W + B
    out: np.ndarray
    w: Param
    b: Param
    activation: Activation


def gcn_layer_forward(
    a_norm: np.ndarray,
    z_in: np.ndarray,
    w: Param,
    b: Param,
    activation: Activation,
) -> tuple[np.ndarray, GcnLayerCache]:
    """sigma(A_norm @ Z_in @ W + B); returns the output and a backward cache."""
    n = z_in.shape[0]
    if a_norm.shape != (n, n):
        raise ValueError(f"A_norm shape {a_norm.shape} does not match N={n}")
    if z_in.shape[1] != w.value.shape[0]:
        raise ValueError(
            f"Z_in width {z_in.shape[1]} does not match W rows {w.value.shape[0]}"
        )
    if b.value.shape != (1, w.value.shape[1]):
        raise ValueError(
            f"B shape {b.value.shape} must be (1, {w.value.shape[1]})"
        )
    az = a_norm @ z_in
    pre = az @ w.value + b.value
    out = _activate(pre, activation)
    return out, GcnLayerCache(a_norm, az, pre, out, w, b, activation)


def gcn_layer_backward(cache: GcnLayerCache, grad_out: np.ndarray) -> np.ndarray:
    """Accumulate W/B gradients and return the gradient w.r.t. Z_in."""
    if grad_out.shape != cache.out.shape:
        raise ValueError(
            f"grad_out shape {grad_out.shape} does not match output {cache.out.shape}"
        )
    g = grad_out * _activation_grad(cache.pre, cache.out, cache.activation)
    cache.w.grad += cache.az.T @ g
    cache.b.grad += g.sum(axis=0, keepdims=True)
    return cache.a_norm.T @ (g @ cache.w.value.T)


@dataclass
class BilinearCache:
    z: np.ndarray
    g: np.ndarray
    probs: np.ndarray
    w: Param
    vector_input: bool


def bilinear_discriminator(
    z: np.ndarray, g: np.ndarray, w_disc: Param
) -> tuple[np.ndarray | float, BilinearCache]:
    """Pair score sigmoid(z_i^T W g_i) for each row pair (z_i, g_i).

    Accepts single F-vectors (returns a float) or NxF row batches (returns a
    length-N array).
    """
    z = np.asarray(z, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    vector_input = z.ndim == 1
    if vector_input:
        z = z[None, :]
        g = g[None, :]
    if z.shape != g.shape or z.shape[1] != w_disc.value.shape[0]:
        raise ValueError("z, g and W_disc shapes are inconsistent")
    scores = np.einsum("ij,ij->i", z @ w_disc.value, g)
    probs = sigmoid(scores)
    cache = BilinearCache(z, g, probs, w_disc, vector_input)
    return (float(probs[0]) if vector_input else probs), cache


def bilinear_discriminator_backward(
    cache: BilinearCache, grad_prob: np.ndarray | float
) -> tuple[np.ndarray, np.ndarray]:
    """Accumulate the W_disc gradient, return gradients w.r.t. z and g rows."""
    grad_prob = np.atleast_1d(np.asarray(grad_prob, dtype=np.float64))
    return bilinear_discriminator_backward_scores(
        cache, grad_prob * cache.probs * (1.0 - cache.probs)
    )


def bilinear_discriminator_backward_scores(
    cache: BilinearCache, grad_score: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Backward from gradients w.r.t. the pre-sigmoid scores z_i^T W g_i.

    Losses of the form log(sigmoid) should enter here: their score gradient
    ((p - 1) for positives, p for negatives) stays bounded and alive even when
    the sigmoid saturates, where the probability-space chain rule underflows.
    """
    ds = np.atleast_1d(np.asarray(grad_score, dtype=np.float64))
    w = cache.w.value
    dz = ds[:, None] * (cache.g @ w.T)
    dg = ds[:, None] * (cache.z @ w)
    cache.w.grad += cache.z.T @ (ds[:, None] * cache.g)
    if cache.vector_input:
        return dz[0], dg[0]
    return dz, dg


def save_params(named: dict[str, np.ndarray], path: str) -> None:
    """Write named 2-D matrices as ``name,rows,cols,v11,v12,...`` lines.

    Values use shortest round-trip decimal strings, so load/save is lossless.
    """
    lines = []
    for name, value in named.items():
        value = np.asarray(value, dtype=np.float64)
        if value.ndim != 2:
            raise ValueError(f"checkpoint entries must be 2-D, got {name!r}")
        if "," in name or "\n" in name:
            raise ValueError(f"invalid checkpoint entry name {name!r}")
        cells = ",".join(format_float(v) for v in value.ravel())
        lines.append(f"{name},{value.shape[0]},{value.shape[1]},{cells}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_params(path: str) -> dict[str, np.ndarray]:
    named: dict[str, np.ndarray] = {}
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) < 3:
                raise ValueError(f"{path}: line {lineno}: malformed checkpoint line")
            name, rows, cols = fields[0], int(fields[1]), int(fields[2])
            flat = np.array([float(v) for v in fields[3:]], dtype=np.float64)
            if flat.size != rows * cols:
                raise ValueError(
                    f"{path}: line {lineno}: expected {rows * cols} values, "
                    f"got {flat.size}"
                )
            named[name] = flat.reshape(rows, cols)
    return named
