"""Synthetic test scenes: two independent geometric "paintings" with a
fixed, documented rendering from RGB to a hypothetical X-ray plane.

Used by the desk-scale benchmarks and the verification suite in place of
real painting data.  Everything is deterministic given the seed.
"""

import numpy as np

from .kernels import conv2d_same
from .patches import grayscale

XRAY_GAIN = 0.55
XRAY_BIAS = 0.05

# Two passes of a 5x5 binomial kernel model the diffuse look of a
# radiograph relative to the sharp visible-light image.
_B5 = np.outer([1.0, 4.0, 6.0, 4.0, 1.0], [1.0, 4.0, 6.0, 4.0, 1.0]) / 256.0


def _soft_disk(h, w, cy, cx, radius, sharpness=2.0):
    yy, xx = np.mgrid[0:h, 0:w]
    dist = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
    return 1.0 / (1.0 + np.exp(sharpness * (dist - radius)))


def _bar(h, w, r0, c0, r1, c1):
    out = np.zeros((h, w))
    out[r0:r1, c0:c1] = 1.0
    return out


def render_scene(height, width, seed, disks=3, bars=2):
    """A colored scene of soft disks and rectangles on a smooth ramp.

    Returns an RGB image (3, H, W) with values in [0, 1].
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width]
    base = 0.15 + 0.2 * (xx / max(width - 1, 1)) + 0.1 * (yy / max(height - 1, 1))
    rgb = np.stack([base * (0.8 + 0.4 * rng.random()) for _ in range(3)])
    for _ in range(disks):
        cy, cx = rng.uniform(0.15, 0.85) * height, rng.uniform(0.15, 0.85) * width
        radius = rng.uniform(0.08, 0.2) * min(height, width)
        disk = _soft_disk(height, width, cy, cx, radius)
        color = rng.uniform(0.3, 0.9, size=3)
        for s in range(3):
            rgb[s] += color[s] * disk
    for _ in range(bars):
        r0 = int(rng.uniform(0.1, 0.6) * height)
        c0 = int(rng.uniform(0.1, 0.6) * width)
        r1 = min(height, r0 + int(rng.uniform(0.1, 0.3) * height))
        c1 = min(width, c0 + int(rng.uniform(0.1, 0.3) * width))
        color = rng.uniform(0.2, 0.8, size=3)
        for s in range(3):
            rgb[s] += color[s] * _bar(height, width, r0, c0, r1, c1)
    peak = rgb.max()
    if peak > 1.0:
        rgb /= peak
    return rgb


def xray_render(rgb):
    """Fixed known rendering of an RGB scene to its X-ray plane: an
    affine map of the twice-smoothed BT.601 luminance."""
    smooth = conv2d_same(conv2d_same(grayscale(rgb), _B5), _B5)
    return XRAY_BIAS + XRAY_GAIN * smooth


def synthetic_pair(height, width, seed):
    """Surface RGB plus ground-truth surface/concealed X-ray planes.

    The surface X-ray is the fixed rendering of the returned RGB; the
    concealed X-ray is rendered from an independent scene (different
    draws from the same generator).
    """
    rgb_surface = render_scene(height, width, seed)
    rgb_concealed = render_scene(height, width, seed + 1)
    x1 = xray_render(rgb_surface)
    x2 = xray_render(rgb_concealed)
    return rgb_surface, x1, x2
