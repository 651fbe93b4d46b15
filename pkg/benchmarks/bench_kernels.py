#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the pure-numpy fallback.

Times the hot kernels in isolation plus one full network layer
forward/backward through each backend.  Force a backend with
XSEP_BACKEND=compiled|numpy; this script compares both in-process by
importing the implementation modules directly.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from xsep import _kernels_np
from xsep.backend import BACKEND

try:
    from xsep import _kernels as _compiled
except ImportError:
    _compiled = None


def timeit(fn, *args, repeats=200):
    fn(*args)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def bench_kernels(repeats):
    rng = np.random.default_rng(0)
    x = np.ascontiguousarray(rng.normal(size=(50, 50)))
    g = np.ascontiguousarray(rng.normal(size=(50, 50)))
    taps = np.ascontiguousarray(rng.normal(size=(5, 5)))
    zs = np.ascontiguousarray(rng.normal(size=(16, 50, 50)))
    ws = np.ascontiguousarray(rng.normal(size=(16, 5, 5)))

    cases = [
        ("conv2d 50x50 f=5", lambda m: m.conv2d(x, taps)),
        ("filter_grad 50x50 f=5", lambda m: m.filter_grad(x, g, 5)),
        ("conv_bank K=16", lambda m: m.conv_bank(x, ws)),
        ("stack_conv_sum K=16", lambda m: m.stack_conv_sum(zs, ws)),
        ("frob_sq 50x50", lambda m: m.frob_sq(x)),
    ]
    print(f"{'kernel':28s} {'numpy':>12s} {'compiled':>12s} {'speedup':>9s}")
    for name, call in cases:
        t_np = timeit(lambda: call(_kernels_np), repeats=repeats)
        if _compiled is None:
            print(f"{name:28s} {t_np * 1e6:10.1f} us {'n/a':>12s}")
            continue
        t_c = timeit(lambda: call(_compiled), repeats=repeats)
        print(
            f"{name:28s} {t_np * 1e6:10.1f} us {t_c * 1e6:10.1f} us {t_np / t_c:8.1f}x"
        )


def bench_layer(repeats):
    import xsep.backend as backend_mod
    from xsep import autodiff as ad
    from xsep.losses import LossWeights, training_loss_var
    from xsep.network import (init_params, make_leaves, taped_forward,
                              taped_synthesize_rgb, taped_synthesize_xray)
    from xsep.wavelets import build_bank

    rng = np.random.default_rng(1)
    x = rng.random((50, 50)) * 0.8
    g1 = rng.random((50, 50)) * 0.5
    rgb = rng.random((3, 50, 50))
    params = init_params(channels=16, transforms=4, depth=5, seed=2877)
    bank = build_bank(4)

    def step():
        tape = ad.Tape()
        pv = make_leaves(tape, params, trainable=True)
        state, xc, rc = taped_forward(tape, x, g1, rgb, pv, bank, params.depth)
        _, _, xh = taped_synthesize_xray(state.z1, state.z2, pv)
        rh = taped_synthesize_rgb(state.z1, pv)
        total, _ = training_loss_var(xc, xh, rc, rh, state.y1, state.y2,
                                     LossWeights(0.5, 0.1), norm_eps=1e-12)
        tape.backward(total)

    impls = [("numpy", _kernels_np)] + ([("compiled", _compiled)] if _compiled else [])
    saved = {n: getattr(backend_mod, n) for n in dir(backend_mod) if n.endswith("_raw")}
    print(f"\nnetwork forward+backward (K=16, L=5, 50x50 patch):")
    for label, impl in impls:
        for name in saved:
            setattr(backend_mod, name, getattr(impl, name[: -len("_raw")]))
        # autodiff binds the raw functions at import; patch them too
        for name in saved:
            if hasattr(ad, name):
                setattr(ad, name, getattr(impl, name[: -len("_raw")]))
        t = timeit(step, repeats=max(3, repeats // 20))
        print(f"  {label:10s} {t * 1e3:8.1f} ms/patch")
    for name, fn in saved.items():
        setattr(backend_mod, name, fn)
        if hasattr(ad, name):
            setattr(ad, name, fn)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()
    print(f"active backend: {BACKEND}")
    bench_kernels(args.repeats)
    bench_layer(args.repeats)


if __name__ == "__main__":
    main()
