import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import build_model_instance, central_difference
from stmmc.graph import CorruptionPlan, corrupt_features
from stmmc.mpga import (
    LossWeights,
    MpgaModel,
    backward,
    contrastive_loss,
    decode,
    encode,
    forward,
    fuse,
    loss_value,
    reconstruction_loss,
    symmetric_contrastive_loss,
    total_loss,
)
from stmmc.tensor_core import Param, gcn_layer_forward


class TestEncode:
    def test_identity_stack_passes_input_through(self):
        n = 3
        model = MpgaModel.create(n, n, [n], np.random.default_rng(0))
        model.gene_layers[0].w.value = np.eye(n)
        model.gene_layers[0].b.value = np.zeros((1, n))
        x = np.random.default_rng(1).standard_normal((n, n))
        z_g, _, _, _ = encode(model, x, x, np.eye(n), np.eye(n))
        np.testing.assert_allclose(z_g[-1], x)

    def test_zero_weights_give_zero_embeddings(self):
        model = MpgaModel.create(4, 3, [5, 2], np.random.default_rng(0))
        for layer in model.gene_layers + model.image_layers:
            layer.w.value[:] = 0.0
            layer.b.value[:] = 0.0
        rng = np.random.default_rng(2)
        z_g, z_i, _, _ = encode(
            model,
            rng.standard_normal((6, 4)),
            rng.standard_normal((6, 3)),
            np.eye(6),
            np.eye(6),
        )
        assert np.all(z_g[-1] == 0) and np.all(z_i[-1] == 0)

    def test_matches_layer_composition_oracle(self):
        model, inputs, _ = build_model_instance(seed=3)
        z_g, z_i, _, _ = encode(
            model, inputs.x_gene, inputs.x_image, inputs.a_gene, inputs.a_image
        )
        # independent single-expression recomputation of the two-layer stack
        w0, b0 = model.gene_layers[0].w.value, model.gene_layers[0].b.value
        w1, b1 = model.gene_layers[1].w.value, model.gene_layers[1].b.value
        hidden = np.maximum(inputs.a_gene @ inputs.x_gene @ w0 + b0, 0.0)
        top = inputs.a_gene @ hidden @ w1 + b1
        np.testing.assert_allclose(z_g[-1], top, atol=1e-12)


class TestFuse:
    def test_alpha_one_returns_gene_branch(self):
        rng = np.random.default_rng(0)
        z_g, z_i = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
        np.testing.assert_array_equal(fuse(z_g, z_i, 1.0), z_g)

    def test_equal_inputs_are_fixed_point(self):
        z = np.random.default_rng(1).standard_normal((5, 2))
        np.testing.assert_allclose(fuse(z, z.copy(), 0.5), z)

    def test_elementwise_oracle(self):
        rng = np.random.default_rng(2)
        z_g, z_i = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
        out = fuse(z_g, z_i, 0.3)
        np.testing.assert_allclose(out, 0.3 * z_g + 0.7 * z_i, atol=1e-15)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="fuse"):
            fuse(np.zeros((2, 2)), np.zeros((2, 3)), 0.5)

    @settings(max_examples=25, deadline=None)
    @given(
        st.floats(min_value=0.0, max_value=1.0),
        st.integers(min_value=0, max_value=1000),
    )
    def test_output_within_convex_envelope(self, alpha, seed):
        rng = np.random.default_rng(seed)
        z_g, z_i = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
        out = fuse(z_g, z_i, alpha)
        lo, hi = np.minimum(z_g, z_i), np.maximum(z_g, z_i)
        assert np.all(out >= lo - 1e-12) and np.all(out <= hi + 1e-12)


class TestDecode:
    def test_zero_input_zero_bias(self):
        model, inputs, _ = build_model_instance(seed=4)
        model.decoder_b.value[:] = 0.0
        out, _ = decode(model, np.zeros((6, 3)), inputs.a_gene)
        np.testing.assert_array_equal(out, np.zeros((6, 5)))

    def test_identity_decoder(self):
        rng = np.random.default_rng(5)
        model = MpgaModel.create(3, 3, [3], rng)
        model.decoder_w.value = np.eye(3)
        model.decoder_b.value[:] = 0.0
        z = rng.standard_normal((4, 3))
        out, _ = decode(model, z, np.eye(4))
        np.testing.assert_allclose(out, z)

    def test_matches_gcn_layer_oracle(self):
        model, inputs, _ = build_model_instance(seed=6)
        z = np.random.default_rng(7).standard_normal((6, 3))
        out, _ = decode(model, z, inputs.a_gene)
        expected, _ = gcn_layer_forward(
            inputs.a_gene, z, model.decoder_w, model.decoder_b, "identity"
        )
        np.testing.assert_array_equal(out, expected)


class TestReconstructionLoss:
    def test_perfect_reconstruction(self):
        x = np.random.default_rng(0).standard_normal((4, 3))
        assert reconstruction_loss(x, x.copy()) == 0.0

    def test_three_four_five(self):
        x = np.array([[0.0, 0.0]])
        rec = np.array([[3.0, 4.0]])
        assert reconstruction_loss(x, rec) == pytest.approx(25.0)

    def test_matches_elementwise_sum_oracle(self):
        rng = np.random.default_rng(8)
        x, rec = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
        expected = sum(
            (x[i, j] - rec[i, j]) ** 2 for i in range(4) for j in range(3)
        )
        assert reconstruction_loss(x, rec) == pytest.approx(expected, rel=1e-12)


def _uninformative_branches(n=5, f=3, modalities=2):
    rng = np.random.default_rng(9)
    branches = []
    for _ in range(modalities):
        z = rng.standard_normal((n, f))
        z_star = rng.standard_normal((n, f))
        g = rng.standard_normal((n, f))
        branches.append((z, z_star, g, Param(np.zeros((f, f)))))
    return branches


class TestContrastiveLosses:
    def test_uninformative_discriminator_hits_closed_form(self):
        branches = _uninformative_branches()
        expected = 4.0 * np.log(2.0)
        assert contrastive_loss(branches) == pytest.approx(expected, abs=1e-9)
        assert symmetric_contrastive_loss(branches) == pytest.approx(
            expected, abs=1e-9
        )

    def test_perfect_discriminator_limit(self):
        n, f = 4, 3
        z = np.tile(np.array([50.0, 0.0, 0.0]), (n, 1))
        z_star = -z
        g = z.copy()
        disc = Param(np.eye(f))
        loss = contrastive_loss([(z, z_star, g, disc), (z, z_star, g, disc)])
        assert 0.0 <= loss < 1e-5

    def test_identity_corruption_makes_losses_equal(self):
        model, inputs, _ = build_model_instance(seed=10)
        plan = CorruptionPlan(np.arange(6), seed=0)
        state = forward(model, inputs, plan, LossWeights())
        assert state.l_cl == pytest.approx(state.l_cl_c, abs=1e-12)

    def test_matches_pairwise_loop_oracle(self):
        rng = np.random.default_rng(11)
        n, f = 3, 2
        branches = []
        for _ in range(2):
            branches.append(
                (
                    rng.uniform(-1, 1, (n, f)),
                    rng.uniform(-1, 1, (n, f)),
                    rng.uniform(-1, 1, (n, f)),
                    Param(rng.uniform(-1, 1, (f, f))),
                )
            )
        expected = 0.0
        for z, z_star, g, disc in branches:
            for i in range(n):
                p_pos = 1.0 / (1.0 + np.exp(-(z[i] @ disc.value @ g[i])))
                p_neg = 1.0 / (1.0 + np.exp(-(z_star[i] @ disc.value @ g[i])))
                expected -= np.log(p_pos) + np.log(1.0 - p_neg)
        expected /= n
        assert contrastive_loss(branches) == pytest.approx(expected, abs=1e-10)

        expected_sym = 0.0
        for z, z_star, g_star, disc in branches:
            for i in range(n):
                p_pos = 1.0 / (1.0 + np.exp(-(z_star[i] @ disc.value @ g_star[i])))
                p_neg = 1.0 / (1.0 + np.exp(-(z[i] @ disc.value @ g_star[i])))
                expected_sym -= np.log(p_pos) + np.log(1.0 - p_neg)
        expected_sym /= n
        assert symmetric_contrastive_loss(branches) == pytest.approx(
            expected_sym, abs=1e-10
        )

    def test_invariant_under_simultaneous_relabeling(self):
        rng = np.random.default_rng(12)
        n, f = 6, 3
        z, z_star, g = (rng.standard_normal((n, f)) for _ in range(3))
        disc = Param(rng.standard_normal((f, f)))
        base = contrastive_loss([(z, z_star, g, disc)])
        perm = rng.permutation(n)
        relabeled = contrastive_loss([(z[perm], z_star[perm], g[perm], disc)])
        assert relabeled == pytest.approx(base, rel=1e-12)


class TestTotalLoss:
    def test_default_weights_paper_values(self):
        assert total_loss(1.0, 2.0, 3.0, LossWeights()) == pytest.approx(15.0)

    def test_contrastive_ablation(self):
        assert total_loss(7.0, 2.0, 3.0, LossWeights(theta2=0.0)) == pytest.approx(70.0)

    def test_reconstruction_ablation(self):
        assert total_loss(5.0, 1.0, 1.0, LossWeights(theta1=0.0)) == pytest.approx(2.0)

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError):
            LossWeights(theta1=-1.0)


class TestEndToEndGradients:
    def test_every_parameter_matches_finite_differences(self):
        model, inputs, plan = build_model_instance(seed=0)
        weights = LossWeights()
        state = forward(model, inputs, plan, weights)

        # the instance must sit away from ReLU kinks and sigmoid clamps,
        # otherwise finite differences straddle a nondifferentiable point
        for cache in state.gene.caches[:-1] + state.image.caches[:-1]:
            assert np.min(np.abs(cache.pre)) > 1e-3
        for branch in (state.gene, state.image):
            for pair in (branch.pos, branch.neg, branch.sym_pos, branch.sym_neg):
                assert np.all(pair.probs > 1e-6) and np.all(pair.probs < 1 - 1e-6)

        backward(model, inputs, state, weights)

        def loss():
            return loss_value(model, inputs, plan, weights)

        for name, param in model.named_params().items():
            analytic = param.grad.copy()
            numeric = central_difference(loss, param.value)
            np.testing.assert_allclose(
                analytic, numeric, rtol=1e-4, atol=1e-8, err_msg=f"parameter {name}"
            )

    def test_gradients_without_contrastive_cover_recon_path_only(self):
        model, inputs, plan = build_model_instance(seed=1)
        weights = LossWeights()
        state = forward(model, inputs, None, weights, use_contrastive=False)
        backward(model, inputs, state, weights)
        assert np.all(model.disc_gene.grad == 0)
        assert np.all(model.disc_image.grad == 0)

        def loss():
            return loss_value(model, inputs, None, weights, use_contrastive=False)

        for name, param in model.named_params().items():
            numeric = central_difference(loss, param.value)
            np.testing.assert_allclose(
                param.grad, numeric, rtol=1e-4, atol=1e-8, err_msg=f"parameter {name}"
            )


class TestCheckpointRoundTrip:
    def test_saved_model_reproduces_forward_pass(self, tmp_path):
        from stmmc.tensor_core import load_params, save_params

        model, inputs, plan = build_model_instance(seed=20)
        path = tmp_path / "ckpt.csv"
        save_params({n: p.value for n, p in model.named_params().items()}, str(path))

        fresh, _, _ = build_model_instance(seed=99)  # different weights
        fresh.load_values(load_params(str(path)))
        weights = LossWeights()
        original = loss_value(model, inputs, plan, weights)
        restored = loss_value(fresh, inputs, plan, weights)
        assert restored == original

    def test_load_rejects_missing_or_misshapen_entries(self):
        model, _, _ = build_model_instance(seed=21)
        values = {n: p.value for n, p in model.named_params().items()}
        incomplete = dict(values)
        incomplete.pop("decoder_w")
        with pytest.raises(ValueError, match="missing"):
            model.load_values(incomplete)
        wrong = dict(values)
        wrong["decoder_w"] = np.zeros((2, 2))
        with pytest.raises(ValueError, match="shape"):
            model.load_values(wrong)


class TestForwardState:
    def test_fused_layers_recorded(self):
        model, inputs, plan = build_model_instance(seed=13)
        state = forward(model, inputs, plan, LossWeights())
        assert len(state.fused) == model.n_layers
        alphas = model.alphas()
        np.testing.assert_allclose(
            state.fused[0],
            alphas[0] * state.gene.z[0] + (1 - alphas[0]) * state.image.z[0],
        )
        np.testing.assert_array_equal(state.z_final, state.fused[-1])

    def test_corrupted_embeddings_use_same_weights(self):
        model, inputs, plan = build_model_instance(seed=14)
        state = forward(model, inputs, plan, LossWeights())
        x_corr = corrupt_features(inputs.x_gene, plan)
        z_corr, _, _, _ = encode(
            model, x_corr, corrupt_features(inputs.x_image, plan),
            inputs.a_gene, inputs.a_image,
        )
        np.testing.assert_allclose(state.gene.z_corr[-1], z_corr[-1])
