"""Built-in verification suite: fast numerical self-checks runnable from
the command line (`xsep check`).

Covers the load-bearing identities: convolution adjointness, wavelet
orthogonality, gradient correctness against finite differences, solver /
network unrolling equivalence, solver descent on a planted instance, and
patch/checkpoint roundtrips.
"""

import os
import tempfile

import numpy as np

from . import autodiff as ad
from .checkpoint import load_checkpoint, save_checkpoint
from .kernels import adjoint_conv2d, conv2d_same, frobenius_sq, inner
from .losses import exclusion_loss_var
from .network import (
    NetworkParams,
    SynthesisParams,
    analysis_forward,
    dict_to_params,
    init_params,
    make_leaves,
    params_from_dictionaries,
    params_to_dict,
    taped_forward,
    taped_synthesize_rgb,
    taped_synthesize_xray,
)
from .patches import extract_patches, reassemble
from .sparse_coding import (
    DictionarySet,
    RegWeights,
    SolverState,
    calibrate_xi,
    coupled_ista_solve,
    stack_synthesis,
)
from .wavelets import build_bank


def make_planted_instance(height=8, width=8, channels=2, transforms=4,
                          density=0.05, seed=7):
    """Sparse ground-truth codes with exact synthesis: the solver should
    drive the objective far below its zero-code start."""
    rng = np.random.default_rng(seed)
    f = 5
    dicts = DictionarySet(
        psi=rng.normal(0, 0.3, (f, f)),
        theta=rng.normal(0, 0.3, (channels, f, f)),
        phi=rng.normal(0, 0.3, (3, f, f)),
    )
    mask = rng.random((2, channels, height, width)) < density
    codes = np.where(mask, rng.normal(0, 1.0, mask.shape), 0.0)
    y1 = stack_synthesis(codes[0], dicts.theta)
    y2 = stack_synthesis(codes[1], dicts.theta)
    x = conv2d_same(y1 + y2, dicts.psi)
    r1 = np.stack([conv2d_same(y1, dicts.phi[s]) for s in range(3)])
    weights = RegWeights(
        gamma=1.0, tau1=0.5, tau2=0.5, lambda1=0.01, lambda2=0.01,
        mu=np.full(transforms, 1e-12),
    )
    weights = weights.with_xi(calibrate_xi(dicts, weights, (height, width), seed=seed))
    return x, r1, dicts, weights, build_bank(transforms)


def check_adjoint(trials=40, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        n = int(rng.choice([8, 16, 50]))
        f = int(rng.choice([3, 5]))
        x = rng.normal(size=(n, n))
        y = rng.normal(size=(n, n))
        a = rng.normal(size=(f, f))
        lhs = inner(conv2d_same(x, a), y)
        rhs = inner(x, adjoint_conv2d(y, a))
        scale = max(abs(lhs), abs(rhs), 1.0)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst, worst <= 1e-10


def check_wavelets(seed=1):
    rng = np.random.default_rng(seed)
    bank = build_bank(4)
    worst = 0.0
    for shape in [(8, 8), (16, 12), (50, 50)]:
        x = rng.normal(size=shape)
        union = np.zeros_like(x)
        for i in range(bank.count):
            c = bank.forward(i, x)
            worst = max(worst, float(np.abs(bank.inverse(i, c) - x).max()))
            worst = max(
                worst, abs(np.sqrt(frobenius_sq(c)) - np.sqrt(frobenius_sq(x)))
            )
            union += bank.inverse(i, c)
        worst = max(worst, float(np.abs(union / bank.count - x).max()))
    return worst, worst <= 1e-10


def check_gradients(coords=60, seed=2):
    rng = np.random.default_rng(seed)
    x8 = rng.random((8, 8)) * 0.8
    g8 = rng.random((8, 8)) * 0.5
    r8 = rng.random((3, 8, 8))
    bank = build_bank(4)
    channels, transforms, depth = 2, 4, 2

    def loss_fn(pd, compute_grad):
        params = dict_to_params(pd, channels, transforms, depth)
        tape = ad.Tape()
        pv = make_leaves(tape, params, trainable=True)
        state, xc, rc = taped_forward(tape, x8, g8, r8, pv, bank, depth)
        _, _, xh = taped_synthesize_xray(state.z1, state.z2, pv)
        rh = taped_synthesize_rgb(state.z1, pv)
        recon_x = ad.frobenius_sq(ad.sub(xh, xc))
        recon_rgb = None
        for s in range(3):
            term = ad.frobenius_sq(ad.sub(rh[s], rc[s]))
            recon_rgb = term if recon_rgb is None else ad.add(recon_rgb, term)
        excl = exclusion_loss_var(
            state.y1, state.y2, norm_eps=1e-12, differentiate_normalizers=True
        )
        total = ad.add(recon_x, ad.add(ad.scale(recon_rgb, 0.5), ad.scale(excl, 0.1)))
        if compute_grad:
            tape.backward(total)
            return total.value, tuple(tape.fingerprint), ad.collect_gradients(pv.leaves())
        return total.value, tuple(tape.fingerprint)

    params = params_to_dict(init_params(channels=channels, transforms=transforms,
                                        depth=depth, seed=3))
    err = ad.finite_diff_check(loss_fn, params, epsilon=1e-5, coords=coords, seed=4)
    return err, err <= 1e-5


def check_unrolling(seed=5):
    rng = np.random.default_rng(seed)
    k, depth, f, n = 2, 3, 5, 8
    bank = build_bank(4)
    dicts = DictionarySet(
        psi=rng.normal(0, 0.3, (f, f)),
        theta=rng.normal(0, 0.3, (k, f, f)),
        phi=rng.normal(0, 0.3, (3, f, f)),
    )
    w = RegWeights(gamma=0.7, tau1=0.4, tau2=0.6, lambda1=0.05, lambda2=0.04,
                   mu=np.abs(rng.normal(0, 0.2, 4)) + 0.01)
    w = w.with_xi(calibrate_xi(dicts, w, (n, n), seed=seed))
    x = rng.normal(size=(n, n))
    g1 = rng.normal(size=(n, n))
    r1 = rng.normal(size=(3, n, n))
    start = SolverState(z1=np.zeros((k, n, n)), z2=np.zeros((k, n, n)),
                        y1=g1.copy(), y2=x - g1)
    ref, _ = coupled_ista_solve(x, r1, start, dicts, w, bank, depth)
    params = NetworkParams(
        analysis=params_from_dictionaries(dicts, w),
        synthesis=SynthesisParams(rgb_out=np.zeros((3, k, f, f)),
                                  xray_out=np.zeros((k, f, f))),
        depth=depth,
    )
    net = analysis_forward(params, x, g1, r1, bank)
    err = max(
        float(np.abs(net.z1 - ref.z1).max()),
        float(np.abs(net.z2 - ref.z2).max()),
        float(np.abs(net.y1 - ref.y1).max()),
        float(np.abs(net.y2 - ref.y2).max()),
    )
    return err, err <= 1e-8


def check_descent(iterations=200):
    x, r1, dicts, w, bank = make_planted_instance()
    state = SolverState.zeros(dicts.channels, x.shape)
    _, traj = coupled_ista_solve(x, r1, state, dicts, w, bank, iterations)
    max_rise = float(np.diff(traj).max())
    drop = 1.0 - traj[-1] / traj[0]
    ok = max_rise <= 1e-9 and drop >= 0.9
    return (max_rise, drop), ok


def check_roundtrips(seed=6):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for shape, overlap in [((100, 100), 45), ((137, 93), 40)]:
        img = rng.random(shape)
        grid, patches = extract_patches(img, 50, overlap)
        worst = max(worst, float(np.abs(reassemble(grid, patches) - img).max()))
    params = init_params(channels=3, transforms=4, depth=2, seed=8)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "p.ckpt")
        save_checkpoint(params, path, patch_size=50)
        loaded, _ = load_checkpoint(path)
    d1, d2 = params_to_dict(params), params_to_dict(loaded)
    bit_exact = all(np.array_equal(d1[k], d2[k]) for k in d1)
    return worst, worst <= 1e-12 and bit_exact


def run_checks(verbose_print=print):
    """Run every check; returns True when all pass."""
    checks = [
        ("adjoint identity", check_adjoint),
        ("wavelet orthogonality", check_wavelets),
        ("gradient vs finite differences", check_gradients),
        ("unrolling equivalence", check_unrolling),
        ("solver descent (planted)", check_descent),
        ("patch/checkpoint roundtrips", check_roundtrips),
    ]
    all_ok = True
    for name, fn in checks:
        metric, ok = fn()
        all_ok &= ok
        verbose_print(f"{'PASS' if ok else 'FAIL'}  {name}  ({metric})")
    return all_ok
