"""Command-line interface.

Subcommands:
  synth-mix  combine two X-ray images into a synthetic mixture
  separate   train on a mixed X-ray + RGB pair and write the separation
  eval       mean squared error between an estimate and a reference
  sweep      grid search over the two loss weights (needs ground truth)
  check      run the built-in verification suite

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

import argparse
import os
import sys

import numpy as np

from .checkpoint import CheckpointError
from .config import ConfigError, RunConfig, load_config
from .image_io import ImageFormatError, load_image, save_image
from .losses import error_map, mse
from .patches import grayscale, normalize, synth_mix
from .training import SweepGrid, TrainingDivergedError, sweep, train

USAGE_ERROR, DATA_ERROR, NUMERICAL_ERROR = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(USAGE_ERROR)


def build_parser():
    parser = _Parser(prog="xsep", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-mix", help="pixelwise sum of two X-ray images")
    p.add_argument("--x1", required=True)
    p.add_argument("--x2", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("separate", help="train and separate a mixed X-ray image")
    p.add_argument("--xray", required=True)
    p.add_argument("--rgb", required=True)
    p.add_argument("--init-image", default=None,
                   help="grayscale initialization image replacing the RGB luminance")
    p.add_argument("--config", default=None, help="key=value configuration file")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("eval", help="mean squared error of an estimate")
    p.add_argument("--est", required=True)
    p.add_argument("--gt", required=True)

    p = sub.add_parser("sweep", help="loss-weight grid search on synthetic data")
    p.add_argument("--xray1-gt", required=True)
    p.add_argument("--xray2-gt", required=True)
    p.add_argument("--rgb", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--epochs-per-cell", type=int, default=None)
    p.add_argument("--eta1-steps", type=int, default=41)
    p.add_argument("--eta2-steps", type=int, default=41)

    sub.add_parser("check", help="run the built-in verification suite")
    return parser


def _load_plane(path):
    img = load_image(path)
    if img.ndim != 2:
        raise ImageFormatError(f"{path}: expected a grayscale image, got RGB")
    return img


def _load_rgb(path):
    img = load_image(path)
    if img.ndim != 3:
        raise ImageFormatError(f"{path}: expected an RGB image, got grayscale")
    return img


def _cmd_synth_mix(args):
    out = synth_mix(_load_plane(args.x1), _load_plane(args.x2))
    # The mixture is the literal pixelwise sum.  Sums above 1 cannot be
    # stored losslessly, so only then rescale by the peak and say so.
    peak = float(out.max())
    if peak > 1.0:
        out = out / peak
        print(f"mixture peak {peak:.6g} exceeds 1; rescaled by 1/{peak:.6g}")
    save_image(out, args.out)
    return 0


def _cmd_separate(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    x = _load_plane(args.xray)
    rgb = _load_rgb(args.rgb)
    if cfg.normalization != "none":
        x, _ = normalize(x, cfg.normalization)
    g1 = None
    if args.init_image:
        g1 = _load_plane(args.init_image)
    elif cfg.init_image:
        g1 = _load_plane(cfg.init_image)
    os.makedirs(args.out_dir, exist_ok=True)
    result = train(x, rgb, cfg.train_config(), g1_override=g1, out_dir=args.out_dir)

    def _save(plane, name):
        save_image(np.clip(plane, 0.0, 1.0), os.path.join(args.out_dir, name))

    _save(result.xhat1, "xhat1.png")
    _save(result.xhat2, "xhat2.png")
    _save(result.xhat, "xhat.png")
    _save(error_map(x, result.xhat), "error_map.png")
    print(f"wrote xhat1/xhat2/xhat/error_map images, loss.csv and final.ckpt "
          f"to {args.out_dir}")
    print(f"final epoch loss: {result.history[-1].total:.6g}" if result.history
          else "no training epochs were run")
    return 0


def _cmd_eval(args):
    value = mse(_load_plane(args.gt), _load_plane(args.est))
    print(f"{value:.12g}")
    return 0


def _cmd_sweep(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    x1 = _load_plane(args.xray1_gt)
    x2 = _load_plane(args.xray2_gt)
    rgb = _load_rgb(args.rgb)
    grid = SweepGrid(
        eta1_values=np.linspace(0.0, 1.0, args.eta1_steps),
        eta2_values=np.linspace(0.0, 0.4, args.eta2_steps),
    )
    epochs = args.epochs_per_cell if args.epochs_per_cell else cfg.epochs
    result = sweep(x1, x2, rgb, grid, cfg.train_config(epochs=epochs), csv_path=args.out)
    e1, e2, m1, m2, mm = result.best
    print(f"wrote {len(result.rows)} rows to {args.out}")
    print(f"best cell: eta1={e1:.6g} eta2={e2:.6g} "
          f"mse_surface={m1:.6g} mse_concealed={m2:.6g} mse_mean={mm:.6g}")
    return 0


def _cmd_check(_args):
    from .verify import run_checks

    return 0 if run_checks() else NUMERICAL_ERROR


def main(argv=None):
    args = build_parser().parse_args(argv)
    handlers = {
        "synth-mix": _cmd_synth_mix,
        "separate": _cmd_separate,
        "eval": _cmd_eval,
        "sweep": _cmd_sweep,
        "check": _cmd_check,
    }
    try:
        return handlers[args.command](args)
    except (ImageFormatError, ConfigError, CheckpointError, FileNotFoundError) as exc:
        print(f"xsep: data error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except (TrainingDivergedError, ValueError) as exc:
        print(f"xsep: numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
