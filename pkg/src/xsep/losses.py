"""Training losses and evaluation metrics.

The exclusion loss penalizes correlated edges between two images at three
spatial resolutions: gradient magnitudes are downsampled by 1x, 2x, 4x,
scaled by cross normalizers, squashed through tanh, multiplied, and the
Frobenius norm (not squared) of each product map is summed.  The
normalizers sigma1 = sqrt(||b||_F / ||a||_F) and sigma2 = its reciprocal
are treated as stop-gradient constants by default (recomputed every
evaluation); set ``differentiate_normalizers`` to backpropagate through
them.

The composite training loss is
    ||x - x_hat||_F^2 + eta1 * sum_s ||r_s - r_hat_s||_F^2
                      + eta2 * exclusion(y1, y2).

If exactly one exclusion argument is identically zero the normalizers are
undefined and evaluation raises DegenerateNormalizerError; the trainer
passes norm_eps=1e-12 to regularize both norms instead.  Two identically
zero arguments give 0.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .kernels import frobenius_sq

EXCLUSION_LEVELS = 3


class DegenerateNormalizerError(ValueError):
    """Exactly one exclusion-loss argument is identically zero."""


@dataclass(frozen=True)
class LossWeights:
    """Weights of the RGB-reconstruction and exclusion terms."""

    eta1: float = 0.5
    eta2: float = 0.1

    def __post_init__(self):
        if not (math.isfinite(self.eta1) and math.isfinite(self.eta2)):
            raise ValueError("loss weights must be finite")
        if self.eta1 < 0.0 or self.eta2 < 0.0:
            raise ValueError("loss weights must be nonnegative")


@dataclass(frozen=True)
class LossReport:
    total: float
    recon_xray: float
    recon_rgb: float
    exclusion: float


def exclusion_loss_var(v1, v2, norm_eps=0.0, differentiate_normalizers=False):
    """Exclusion loss as a tape node; v1, v2 are plane Vars on one tape."""
    tape = v1.tape
    n1 = math.sqrt(frobenius_sq(v1.value))
    n2 = math.sqrt(frobenius_sq(v2.value))
    if norm_eps == 0.0:
        if n1 == 0.0 and n2 == 0.0:
            return tape.constant(0.0)
        if n1 == 0.0 or n2 == 0.0:
            raise DegenerateNormalizerError(
                "one image is identically zero; cross normalizers undefined"
            )
    if differentiate_normalizers:
        fn1 = ad.sqrt(ad.frobenius_sq(v1))
        fn2 = ad.sqrt(ad.frobenius_sq(v2))
        if norm_eps:
            fn1 = ad.add(fn1, tape.constant(norm_eps))
            fn2 = ad.add(fn2, tape.constant(norm_eps))
        sig1 = ad.sqrt(ad.divide(fn2, fn1))
        sig2 = ad.sqrt(ad.divide(fn1, fn2))
    else:
        sig1 = math.sqrt((n2 + norm_eps) / (n1 + norm_eps))
        sig2 = math.sqrt((n1 + norm_eps) / (n2 + norm_eps))

    g1 = ad.grad_magnitude(v1)
    g2 = ad.grad_magnitude(v2)
    total = None
    for level in range(1, EXCLUSION_LEVELS + 1):
        d1 = ad.scale(ad.downsample(g1, level), sig1)
        d2 = ad.scale(ad.downsample(g2, level), sig2)
        term = ad.sqrt(ad.frobenius_sq(ad.mul(ad.tanh(d1), ad.tanh(d2))))
        total = term if total is None else ad.add(total, term)
    return total


def exclusion_loss(x1, x2, norm_eps=0.0):
    """Exclusion loss between two plain planes; symmetric and >= 0."""
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.shape != x2.shape:
        raise ValueError(f"shape mismatch: {x1.shape} vs {x2.shape}")
    tape = ad.Tape()
    out = exclusion_loss_var(tape.constant(x1), tape.constant(x2), norm_eps=norm_eps)
    return out.value


def training_loss_var(x, x_hat, r1, r1_hat, y1, y2, weights: LossWeights, norm_eps=0.0):
    """Composite loss as a tape node plus the per-component report.

    x and the r1 entries are constants; x_hat, r1_hat, y1, y2 are network
    outputs on the same tape.
    """
    recon_x = ad.frobenius_sq(ad.sub(x_hat, x))
    recon_rgb = None
    for s in range(3):
        term = ad.frobenius_sq(ad.sub(r1_hat[s], r1[s]))
        recon_rgb = term if recon_rgb is None else ad.add(recon_rgb, term)
    excl = exclusion_loss_var(y1, y2, norm_eps=norm_eps)
    total = ad.add(
        recon_x, ad.add(ad.scale(recon_rgb, weights.eta1), ad.scale(excl, weights.eta2))
    )
    report = LossReport(
        total=total.value,
        recon_xray=recon_x.value,
        recon_rgb=recon_rgb.value,
        exclusion=excl.value,
    )
    return total, report


def training_loss(x, x_hat, r1, r1_hat, y1, y2, weights: LossWeights, norm_eps=0.0):
    """Plain-array composite loss; returns a LossReport."""
    tape = ad.Tape()
    c = tape.constant
    _, report = training_loss_var(
        c(x),
        c(x_hat),
        [c(np.asarray(r1)[s]) for s in range(3)],
        [c(np.asarray(r1_hat)[s]) for s in range(3)],
        c(y1),
        c(y2),
        weights,
        norm_eps=norm_eps,
    )
    return report


def mse(target, estimate):
    """||X - X_hat||_F^2 / (2 M N)."""
    target = np.asarray(target, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if target.shape != estimate.shape:
        raise ValueError(f"shape mismatch: {target.shape} vs {estimate.shape}")
    m, n = target.shape
    return frobenius_sq(target - estimate) / (2.0 * m * n)


def error_map(target, estimate):
    """Per-pixel absolute difference |X - X_hat|."""
    target = np.asarray(target, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if target.shape != estimate.shape:
        raise ValueError(f"shape mismatch: {target.shape} vs {estimate.shape}")
    return np.abs(target - estimate)
