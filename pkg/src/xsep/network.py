"""The learned separation network: parameter containers, initialization,
the unrolled analysis layers (weights tied across layers), and the linear
synthesis maps.

One analysis layer mirrors one solver step of the coupled sparse-coding
model, with every dictionary application replaced by a trainable filter
and every weight by a trainable scalar.  ``params_from_dictionaries``
realizes that correspondence exactly, which is the key unrolling
correctness property: with mapped parameters, L layers reproduce L solver
iterations.

Canonical parameter names (also the checkpoint tensor order):
  code_step, code_synth (filter banks, (K, f, f)), mix_step, mix_synth,
  rgb_step/s, rgb_synth/s (s < 3), tau1, tau2, lambda1, lambda2, gamma,
  mu/i (i < I), rgb_out/s ((K, f, f) per RGB channel), xray_synth.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .kernels import rot180
from .sparse_coding import DictionarySet, RegWeights
from .wavelets import WaveletBank


@dataclass
class AnalysisParams:
    """Trainable filters and scalars of one (tied) analysis layer."""

    code_step: np.ndarray  # (K, f, f): per-channel code update filters
    code_synth: np.ndarray  # (K, f, f): code-to-information-image filters
    mix_step: np.ndarray  # (f, f): mixed-image correction filter
    mix_synth: np.ndarray  # (f, f): information-image-to-mixed-image filter
    rgb_step: np.ndarray  # (3, f, f): RGB correction filters
    rgb_synth: np.ndarray  # (3, f, f): information-image-to-RGB filters
    tau1: float
    tau2: float
    lambda1: float
    lambda2: float
    gamma: float
    mu: np.ndarray  # (I,)

    @property
    def channels(self):
        return self.code_step.shape[0]

    @property
    def transforms(self):
        return self.mu.shape[0]

    @property
    def filter_size(self):
        return self.mix_step.shape[0]


@dataclass
class SynthesisParams:
    """Trainable linear decoders from the surface/concealed code stacks."""

    rgb_out: np.ndarray  # (3, K, f, f): per-RGB-channel filter banks
    xray_out: np.ndarray  # (K, f, f)


@dataclass
class NetworkParams:
    analysis: AnalysisParams
    synthesis: SynthesisParams
    depth: int

    @property
    def channels(self):
        return self.analysis.channels

    @property
    def transforms(self):
        return self.analysis.transforms

    @property
    def filter_size(self):
        return self.analysis.filter_size


@dataclass
class NetworkState:
    """z1/z2 are (K, H, W) code stacks, y1/y2 information images.  Fields
    hold arrays on the plain path and tape nodes during a recorded
    forward."""

    z1: object
    z2: object
    y1: object
    y2: object


def init_params(channels=64, transforms=4, depth=5, filter_size=5, seed=0, filter_std=0.1):
    """Random initialization: filter taps i.i.d. Gaussian (std 0.1 keeps
    initial activations O(1) for 5x5 accumulations over many channels),
    scalars i.i.d. uniform on (0, 1].  Deterministic given the seed."""
    if channels < 1 or depth < 1 or transforms < 1:
        raise ValueError("channels, depth and transforms must be positive")
    if filter_size < 1 or filter_size % 2 == 0:
        raise ValueError(f"filter size must be odd and positive, got {filter_size}")
    rng = np.random.default_rng(seed)
    k, f, i = channels, filter_size, transforms

    def filters(*shape):
        return rng.normal(0.0, filter_std, shape)

    analysis = AnalysisParams(
        code_step=filters(k, f, f),
        code_synth=filters(k, f, f),
        mix_step=filters(f, f),
        mix_synth=filters(f, f),
        rgb_step=filters(3, f, f),
        rgb_synth=filters(3, f, f),
        tau1=0.0,
        tau2=0.0,
        lambda1=0.0,
        lambda2=0.0,
        gamma=0.0,
        mu=np.zeros(i),
    )
    synthesis = SynthesisParams(rgb_out=filters(3, k, f, f), xray_out=filters(k, f, f))
    # Scalars are drawn after all filters, uniform on (0, 1].
    analysis.tau1 = 1.0 - rng.random()
    analysis.tau2 = 1.0 - rng.random()
    analysis.lambda1 = 1.0 - rng.random()
    analysis.lambda2 = 1.0 - rng.random()
    analysis.gamma = 1.0 - rng.random()
    analysis.mu = 1.0 - rng.random(i)
    return NetworkParams(analysis=analysis, synthesis=synthesis, depth=depth)


def init_state(x, g1, channels):
    """Network inputs: zero codes, y1 = g1, y2 = x - g1."""
    if x.shape != g1.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {g1.shape}")
    shape = np.asarray(x, dtype=np.float64).shape
    return NetworkState(
        z1=np.zeros((channels,) + shape),
        z2=np.zeros((channels,) + shape),
        y1=np.array(g1, dtype=np.float64, copy=True),
        y2=np.asarray(x, dtype=np.float64) - g1,
    )


# ---------------------------------------------------------------------------
# canonical flat-dict view (shared by SGD, checkpointing, finite differences)


def params_to_dict(params: NetworkParams):
    a, s = params.analysis, params.synthesis
    out = {
        "code_step": a.code_step,
        "code_synth": a.code_synth,
        "mix_step": a.mix_step,
        "mix_synth": a.mix_synth,
    }
    for i in range(3):
        out[f"rgb_step/{i}"] = a.rgb_step[i]
    for i in range(3):
        out[f"rgb_synth/{i}"] = a.rgb_synth[i]
    out["tau1"] = a.tau1
    out["tau2"] = a.tau2
    out["lambda1"] = a.lambda1
    out["lambda2"] = a.lambda2
    out["gamma"] = a.gamma
    for i in range(a.transforms):
        out[f"mu/{i}"] = float(a.mu[i])
    for i in range(3):
        out[f"rgb_out/{i}"] = s.rgb_out[i]
    out["xray_synth"] = s.xray_out
    return out


def dict_to_params(d, channels, transforms, depth):
    analysis = AnalysisParams(
        code_step=np.asarray(d["code_step"]),
        code_synth=np.asarray(d["code_synth"]),
        mix_step=np.asarray(d["mix_step"]),
        mix_synth=np.asarray(d["mix_synth"]),
        rgb_step=np.stack([d[f"rgb_step/{i}"] for i in range(3)]),
        rgb_synth=np.stack([d[f"rgb_synth/{i}"] for i in range(3)]),
        tau1=float(d["tau1"]),
        tau2=float(d["tau2"]),
        lambda1=float(d["lambda1"]),
        lambda2=float(d["lambda2"]),
        gamma=float(d["gamma"]),
        mu=np.array([d[f"mu/{i}"] for i in range(transforms)]),
    )
    synthesis = SynthesisParams(
        rgb_out=np.stack([d[f"rgb_out/{i}"] for i in range(3)]),
        xray_out=np.asarray(d["xray_synth"]),
    )
    return NetworkParams(analysis=analysis, synthesis=synthesis, depth=depth)


def param_names(channels, transforms):
    """Canonical name order (also the checkpoint payload order)."""
    names = ["code_step", "code_synth", "mix_step", "mix_synth"]
    names += [f"rgb_step/{i}" for i in range(3)]
    names += [f"rgb_synth/{i}" for i in range(3)]
    names += ["tau1", "tau2", "lambda1", "lambda2", "gamma"]
    names += [f"mu/{i}" for i in range(transforms)]
    names += [f"rgb_out/{i}" for i in range(3)]
    names += ["xray_synth"]
    return names


# ---------------------------------------------------------------------------
# taped forward pass


class _LayerVars:
    """Parameter leaves of the (single, tied) analysis layer plus the
    synthesis decoders, shared by every unrolled layer."""

    def __init__(self, tape, params, trainable=True):
        if isinstance(params, AnalysisParams):
            a, s = params, None
        else:
            a, s = params.analysis, params.synthesis
        reg = tape.leaf if trainable else tape.constant
        self.code_step = reg(a.code_step)
        self.code_synth = reg(a.code_synth)
        self.mix_step = reg(a.mix_step)
        self.mix_synth = reg(a.mix_synth)
        self.rgb_step = [reg(a.rgb_step[i]) for i in range(3)]
        self.rgb_synth = [reg(a.rgb_synth[i]) for i in range(3)]
        self.tau1 = reg(a.tau1)
        self.tau2 = reg(a.tau2)
        self.lambda1 = reg(a.lambda1)
        self.lambda2 = reg(a.lambda2)
        self.gamma = reg(a.gamma)
        self.mu = [reg(float(a.mu[i])) for i in range(a.transforms)]
        if s is not None:
            self.rgb_out = [reg(s.rgb_out[i]) for i in range(3)]
            self.xray_out = reg(s.xray_out)
        else:
            self.rgb_out = None
            self.xray_out = None
        self.channels = a.channels
        self.transforms = a.transforms

    def leaves(self):
        out = {
            "code_step": self.code_step,
            "code_synth": self.code_synth,
            "mix_step": self.mix_step,
            "mix_synth": self.mix_synth,
        }
        for i in range(3):
            out[f"rgb_step/{i}"] = self.rgb_step[i]
            out[f"rgb_synth/{i}"] = self.rgb_synth[i]
        out["tau1"] = self.tau1
        out["tau2"] = self.tau2
        out["lambda1"] = self.lambda1
        out["lambda2"] = self.lambda2
        out["gamma"] = self.gamma
        for i in range(self.transforms):
            out[f"mu/{i}"] = self.mu[i]
        if self.rgb_out is not None:
            for i in range(3):
                out[f"rgb_out/{i}"] = self.rgb_out[i]
            out["xray_synth"] = self.xray_out
        return out


def make_leaves(tape, params, trainable=True):
    return _LayerVars(tape, params, trainable)


def _pprox(mu_vars, pivot, target, bank, elementwise):
    acc = None
    for i in range(bank.count):
        cb = ad.wavelet_fwd(pivot, bank, i)
        if elementwise:
            thresh = ad.scale(ad.absval(cb), mu_vars[i])
        else:
            thresh = ad.mul(ad.l1(cb), mu_vars[i])
        shrunk = ad.soft_threshold(ad.wavelet_fwd(target, bank, i), thresh)
        back = ad.wavelet_inv(shrunk, bank, i)
        acc = back if acc is None else ad.add(acc, back)
    return ad.scale(acc, 1.0 / bank.count)


def layer_forward(state: NetworkState, x, r1, pv: _LayerVars, bank: WaveletBank,
                  elementwise=True):
    """One unrolled layer: code-stack updates (shrinkage after a filtered
    residual step), then both information-image updates through the
    averaged wavelet-domain shrinkage with the other image as pivot."""
    resid2 = ad.sub(state.y2, ad.stack_conv_sum(state.z2, pv.code_synth))
    z2 = ad.soft_threshold(
        ad.add(state.z2, ad.conv_bank(resid2, pv.code_step)), pv.lambda2
    )
    resid1 = ad.sub(state.y1, ad.stack_conv_sum(state.z1, pv.code_synth))
    z1 = ad.soft_threshold(
        ad.add(state.z1, ad.conv_bank(resid1, pv.code_step)), pv.lambda1
    )

    mix_res = ad.sub(x, ad.conv2d(ad.add(state.y1, state.y2), pv.mix_synth))
    b2 = ad.add(
        ad.add(state.y2, ad.conv2d(mix_res, pv.mix_step)),
        ad.scale(ad.sub(ad.stack_conv_sum(z2, pv.code_synth), state.y2), pv.tau2),
    )
    y2 = _pprox(pv.mu, state.y1, b2, bank, elementwise)

    mix_res = ad.sub(x, ad.conv2d(ad.add(state.y1, y2), pv.mix_synth))
    rgb_corr = None
    for s in range(3):
        term = ad.conv2d(ad.sub(r1[s], ad.conv2d(state.y1, pv.rgb_synth[s])), pv.rgb_step[s])
        rgb_corr = term if rgb_corr is None else ad.add(rgb_corr, term)
    b1 = ad.add(
        ad.add(
            ad.add(state.y1, ad.conv2d(mix_res, pv.mix_step)),
            ad.scale(ad.sub(ad.stack_conv_sum(z1, pv.code_synth), state.y1), pv.tau1),
        ),
        ad.scale(rgb_corr, pv.gamma),
    )
    y1 = _pprox(pv.mu, y2, b1, bank, elementwise)

    return NetworkState(z1=z1, z2=z2, y1=y1, y2=y2)


def taped_init_state(tape, x_patch, g1_patch, channels):
    if x_patch.shape != g1_patch.shape:
        raise ValueError(f"shape mismatch: {x_patch.shape} vs {g1_patch.shape}")
    return NetworkState(
        z1=tape.constant(np.zeros((channels,) + x_patch.shape)),
        z2=tape.constant(np.zeros((channels,) + x_patch.shape)),
        y1=tape.constant(g1_patch),
        y2=tape.constant(x_patch - g1_patch),
    )


def taped_forward(tape, x_patch, g1_patch, rgb_patch, pv, bank, depth, elementwise=True):
    """Zero-code initialization followed by ``depth`` tied layers."""
    x = tape.constant(x_patch)
    r1 = [tape.constant(rgb_patch[s]) for s in range(3)]
    state = taped_init_state(tape, x_patch, g1_patch, pv.channels)
    for _ in range(depth):
        state = layer_forward(state, x, r1, pv, bank, elementwise)
    return state, x, r1


def taped_synthesize_xray(z1, z2, pv):
    """(surface, concealed, mixed) estimates; mixed = surface + concealed
    computed as that exact sum, so additivity holds bit-exactly."""
    x1 = ad.stack_conv_sum(z1, pv.xray_out)
    x2 = ad.stack_conv_sum(z2, pv.xray_out)
    return x1, x2, ad.add(x1, x2)


def taped_synthesize_rgb(z1, pv):
    return [ad.stack_conv_sum(z1, pv.rgb_out[s]) for s in range(3)]


# ---------------------------------------------------------------------------
# plain-array interface (inference / oracle-equivalence checks)


def analysis_forward(params, x, g1, rgb, bank, depth=None, elementwise=True):
    """Run the unrolled analysis stack without gradients; returns a
    NetworkState of plain arrays ((K, H, W) code stacks)."""
    depth = params.depth if depth is None else depth
    tape = ad.Tape()
    pv = make_leaves(tape, params, trainable=False)
    state, _, _ = taped_forward(tape, x, g1, rgb, pv, bank, depth, elementwise)
    return NetworkState(
        z1=state.z1.value, z2=state.z2.value, y1=state.y1.value, y2=state.y2.value
    )


def synthesize_xray(z1, z2, synthesis: SynthesisParams):
    """Plain-array synthesis of (surface, concealed, mixed) X-ray estimates."""
    from .sparse_coding import stack_synthesis

    z1 = np.asarray(z1)
    z2 = np.asarray(z2)
    if z1.shape[0] != synthesis.xray_out.shape[0] or z2.shape[0] != synthesis.xray_out.shape[0]:
        raise ValueError("code stack channel count does not match the decoder")
    x1 = stack_synthesis(z1, synthesis.xray_out)
    x2 = stack_synthesis(z2, synthesis.xray_out)
    return x1, x2, x1 + x2


def synthesize_rgb(z1, synthesis: SynthesisParams):
    """Plain-array synthesis of the three RGB channel estimates."""
    from .sparse_coding import stack_synthesis

    z1 = np.asarray(z1)
    if z1.shape[0] != synthesis.rgb_out.shape[1]:
        raise ValueError("code stack channel count does not match the decoder")
    return np.stack([stack_synthesis(z1, synthesis.rgb_out[s]) for s in range(3)])


def params_from_dictionaries(dicts: DictionarySet, w: RegWeights):
    """Analysis parameters that make one layer reproduce one solver step.

    Step filters are the transposed (180-degree rotated) dictionaries
    scaled by the step size; synthesis-direction filters are the
    dictionaries themselves; every scalar weight is divided by xi.
    """
    inv_xi = 1.0 / w.xi
    return AnalysisParams(
        code_step=np.ascontiguousarray(dicts.theta[:, ::-1, ::-1]) * inv_xi,
        code_synth=dicts.theta.copy(),
        mix_step=rot180(dicts.psi) * inv_xi,
        mix_synth=dicts.psi.copy(),
        rgb_step=np.ascontiguousarray(dicts.phi[:, ::-1, ::-1]),
        rgb_synth=dicts.phi.copy(),
        tau1=w.tau1 * inv_xi,
        tau2=w.tau2 * inv_xi,
        lambda1=w.lambda1 * inv_xi,
        lambda2=w.lambda2 * inv_xi,
        gamma=w.gamma * inv_xi,
        mu=w.mu * inv_xi,
    )
