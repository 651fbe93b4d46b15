import numpy as np
import pytest

from xsep import autodiff as ad
from xsep.kernels import bilinear_downsample, frobenius_sq, gradient_magnitude
from xsep.losses import (
    DegenerateNormalizerError,
    LossWeights,
    error_map,
    exclusion_loss,
    exclusion_loss_var,
    mse,
    training_loss,
)


def exclusion_oracle(x1, x2):
    # Independent re-implementation: multi-scale tanh edge correlation.
    n1 = np.sqrt(np.sum(x1 * x1))
    n2 = np.sqrt(np.sum(x2 * x2))
    s1 = np.sqrt(n2 / n1)
    s2 = np.sqrt(n1 / n2)
    total = 0.0
    for level in (1, 2, 3):
        d1 = bilinear_downsample(gradient_magnitude(x1), level) * s1
        d2 = bilinear_downsample(gradient_magnitude(x2), level) * s2
        total += np.linalg.norm(np.tanh(d1) * np.tanh(d2))
    return total


class TestExclusionLoss:
    def test_constant_planes_give_zero(self):
        assert exclusion_loss(np.full((8, 8), 0.2), np.full((8, 8), 0.9)) == 0.0

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=(16, 16)), rng.normal(size=(16, 16))
        assert exclusion_loss(a, b) == pytest.approx(exclusion_loss(b, a), rel=1e-12)

    def test_matches_independent_oracle(self):
        rng = np.random.default_rng(1)
        a, b = rng.normal(size=(16, 16)), rng.normal(size=(16, 16))
        assert exclusion_loss(a, b) == pytest.approx(exclusion_oracle(a, b), abs=1e-10)

    def test_nonnegative(self):
        rng = np.random.default_rng(2)
        for seed in range(5):
            a = rng.normal(size=(8, 8))
            b = rng.normal(size=(8, 8))
            assert exclusion_loss(a, b) >= 0.0

    def test_single_zero_argument_raises(self):
        rng = np.random.default_rng(3)
        with pytest.raises(DegenerateNormalizerError):
            exclusion_loss(np.zeros((8, 8)), rng.normal(size=(8, 8)))

    def test_both_zero_give_zero(self):
        assert exclusion_loss(np.zeros((8, 8)), np.zeros((8, 8))) == 0.0

    def test_norm_eps_regularizes_degenerate_case(self):
        rng = np.random.default_rng(4)
        value = exclusion_loss(np.zeros((8, 8)), rng.normal(size=(8, 8)), norm_eps=1e-12)
        assert np.isfinite(value) and value >= 0.0

    def test_normalizer_product_is_scale_invariant(self):
        # Scaling one argument moves both normalizers but their product
        # stays 1 (the stated invariant).
        rng = np.random.default_rng(5)
        a, b = rng.normal(size=(8, 8)), rng.normal(size=(8, 8))
        for alpha in (0.1, 1.0, 7.3):
            n1 = np.sqrt(np.sum((alpha * a) ** 2))
            n2 = np.sqrt(np.sum(b * b))
            s1 = np.sqrt(n2 / n1)
            s2 = np.sqrt(n1 / n2)
            assert s1 * s2 == pytest.approx(1.0, rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            exclusion_loss(np.ones((4, 4)), np.ones((5, 5)))

    def test_gradient_with_differentiable_normalizers(self):
        rng = np.random.default_rng(6)
        y1 = rng.normal(size=(8, 8))
        y2 = rng.normal(size=(8, 8))

        def loss(params, compute_grad):
            tape = ad.Tape()
            v1 = tape.leaf(params["y1"], "y1")
            v2 = tape.leaf(params["y2"], "y2")
            out = exclusion_loss_var(v1, v2, norm_eps=1e-12,
                                     differentiate_normalizers=True)
            if compute_grad:
                tape.backward(out)
                return out.value, tuple(tape.fingerprint), ad.collect_gradients(
                    {"y1": v1, "y2": v2}
                )
            return out.value, tuple(tape.fingerprint)

        err = ad.finite_diff_check(loss, {"y1": y1, "y2": y2}, epsilon=1e-5, coords=60)
        assert err <= 1e-5


class TestTrainingLoss:
    def test_perfect_reconstruction_and_constant_images(self):
        rng = np.random.default_rng(7)
        x = rng.random((8, 8))
        r = rng.random((3, 8, 8))
        report = training_loss(x, x, r, r, np.full((8, 8), 0.3), np.full((8, 8), 0.4),
                               LossWeights(0.5, 0.1))
        assert report.total == 0.0

    def test_zero_weights_leave_only_xray_term(self):
        rng = np.random.default_rng(8)
        x, xh = rng.random((8, 8)), rng.random((8, 8))
        r, rh = rng.random((3, 8, 8)), rng.random((3, 8, 8))
        y1, y2 = rng.normal(size=(8, 8)), rng.normal(size=(8, 8))
        report = training_loss(x, xh, r, rh, y1, y2, LossWeights(0.0, 0.0))
        assert report.total == report.recon_xray
        assert report.recon_xray == pytest.approx(frobenius_sq(x - xh), rel=1e-12)

    def test_report_identity(self):
        rng = np.random.default_rng(9)
        x, xh = rng.random((8, 8)), rng.random((8, 8))
        r, rh = rng.random((3, 8, 8)), rng.random((3, 8, 8))
        y1, y2 = rng.normal(size=(8, 8)), rng.normal(size=(8, 8))
        w = LossWeights(0.37, 0.21)
        rep = training_loss(x, xh, r, rh, y1, y2, w)
        recombined = rep.recon_xray + w.eta1 * rep.recon_rgb + w.eta2 * rep.exclusion
        assert abs(rep.total - recombined) <= 1e-12 * max(rep.total, 1.0)

    def test_weights_validated(self):
        with pytest.raises(ValueError):
            LossWeights(-0.1, 0.0)
        with pytest.raises(ValueError):
            LossWeights(float("nan"), 0.0)


class TestMse:
    def test_identical_is_zero(self):
        x = np.random.default_rng(10).random((6, 6))
        assert mse(x, x) == 0.0

    def test_hand_value(self):
        assert mse(np.ones((2, 2)), np.zeros((2, 2))) == 0.5

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mse(np.ones((2, 2)), np.ones((3, 3)))


class TestErrorMap:
    def test_identical_is_zero_plane(self):
        x = np.random.default_rng(11).random((5, 5))
        assert np.abs(error_map(x, x)).max() == 0.0

    def test_constant_offset(self):
        x = np.random.default_rng(12).random((5, 5))
        assert np.allclose(error_map(x, x + 0.1), 0.1)

    def test_consistent_with_mse(self):
        rng = np.random.default_rng(13)
        x, xh = rng.random((7, 9)), rng.random((7, 9))
        em = error_map(x, xh)
        assert np.mean(em**2) / 2.0 == pytest.approx(mse(x, xh), rel=1e-12)
