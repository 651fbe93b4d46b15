"""Self-supervised training loop: per-patch stochastic gradient descent
on the composite loss, epoch-indexed learning-rate schedule, loss
logging, checkpointing, and the hyper-parameter sweep harness.

Training sees only the mixed X-ray image and the surface RGB image; no
separated ground truth is used anywhere in the loop.  Runs are
deterministic given the config seed (single worker), which makes
checkpoints bit-reproducible.

Loss CSV format: header ``epoch,total,recon_xray,recon_rgb,exclusion``,
one row per epoch (1-based), 12 significant digits.
Sweep CSV format: ``eta1,eta2,mse_surface,mse_concealed,mse_mean``.
"""

import os
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .checkpoint import save_checkpoint
from .losses import LossReport, LossWeights, mse, training_loss_var
from .network import (
    NetworkParams,
    analysis_forward,
    dict_to_params,
    init_params,
    make_leaves,
    params_to_dict,
    synthesize_xray,
    taped_forward,
    taped_synthesize_rgb,
    taped_synthesize_xray,
)
from .patches import extract_patches, grayscale, reassemble, synth_mix
from .wavelets import build_bank


class TrainingDivergedError(RuntimeError):
    """A non-finite loss was produced; training aborts rather than skips."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 120
    batch_size: int = 16
    seed: int = 0
    eta1: float = 0.5
    eta2: float = 0.1
    depth: int = 5
    channels: int = 64
    transforms: int = 4
    filter_size: int = 5
    patch_size: int = 50
    overlap: int = 45
    shuffle_mode: str = "epoch"  # reshuffle every epoch, or "once"
    checkpoint_every: int = 10
    lr_exp_base: float = 3.0
    lr_exp_decay: float = 40.0
    filter_std: float = 0.1
    norm_eps: float = 1e-12
    elementwise_prox: bool = True

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.eta1 < 0 or self.eta2 < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.shuffle_mode not in ("epoch", "once"):
            raise ValueError(f"unknown shuffle mode {self.shuffle_mode!r}")

    @property
    def weights(self):
        return LossWeights(self.eta1, self.eta2)


@dataclass(frozen=True)
class SweepGrid:
    """Cartesian grid of the two loss weights."""

    eta1_values: np.ndarray
    eta2_values: np.ndarray

    @classmethod
    def default(cls):
        # eta1 in [0, 1] step 0.025 and eta2 in [0, 0.4] step 0.01:
        # 41 x 41 cells.
        return cls(np.linspace(0.0, 1.0, 41), np.linspace(0.0, 0.4, 41))

    @property
    def shape(self):
        return (len(self.eta1_values), len(self.eta2_values))

    def cells(self):
        for e1 in self.eta1_values:
            for e2 in self.eta2_values:
                yield float(e1), float(e2)


@dataclass
class TrainResult:
    params: NetworkParams
    history: list
    xhat1: np.ndarray
    xhat2: np.ndarray
    xhat: np.ndarray
    g1: np.ndarray


def lr_schedule(epoch, base=3.0, decay=40.0):
    """Learning rate 10**(-(base + epoch/decay)); strictly decreasing."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return 10.0 ** (-(base + epoch / decay))


def _patch_loss(tape, pv, x_patch, rgb_patch, g1_patch, config, bank):
    state, x_c, r_c = taped_forward(
        tape, x_patch, g1_patch, rgb_patch, pv, bank, config.depth, config.elementwise_prox
    )
    _, _, xhat = taped_synthesize_xray(state.z1, state.z2, pv)
    rhat = taped_synthesize_rgb(state.z1, pv)
    return training_loss_var(
        x_c, xhat, r_c, rhat, state.y1, state.y2, config.weights, norm_eps=config.norm_eps
    )


def patch_gradients(params, x_patch, rgb_patch, g1_patch, config, bank):
    """Loss report and parameter gradients for a single patch."""
    tape = ad.Tape()
    pv = make_leaves(tape, params, trainable=True)
    total, report = _patch_loss(tape, pv, x_patch, rgb_patch, g1_patch, config, bank)
    tape.backward(total)
    return report, ad.collect_gradients(pv.leaves())


def train_epoch(params, dataset, config, epoch, bank=None, patch_ids=None):
    """One epoch of mini-batch SGD over an already-ordered patch dataset.

    ``dataset`` is (x_patches, rgb_patches, g1_patches).  Gradients are
    averaged within each batch; one SGD step per batch at
    lr_schedule(epoch); the l1 weights are projected to >= 0 after every
    step.  Returns (updated params, mean LossReport over the epoch).
    """
    x_patches, rgb_patches, g1_patches = dataset
    n = x_patches.shape[0]
    if n == 0:
        raise ValueError("dataset is empty")
    bank = bank or build_bank(config.transforms)
    lr = lr_schedule(epoch, config.lr_exp_base, config.lr_exp_decay)
    sums = np.zeros(4)

    for start in range(0, n, config.batch_size):
        stop = min(start + config.batch_size, n)
        batch_grads = ad.GradientSet()
        for idx in range(start, stop):
            patch_id = int(patch_ids[idx]) if patch_ids is not None else idx
            try:
                report, grads = patch_gradients(
                    params, x_patches[idx], rgb_patches[idx], g1_patches[idx], config, bank
                )
            except ValueError as exc:
                # Mid-forward overflow surfaces as a non-finite validation
                # error inside a kernel; report it as divergence.
                if "non-finite" in str(exc):
                    raise TrainingDivergedError(
                        f"non-finite values at epoch {epoch}, patch {patch_id}: {exc}"
                    ) from exc
                raise
            if not np.isfinite(report.total):
                raise TrainingDivergedError(
                    f"non-finite loss {report.total!r} at epoch {epoch}, patch {patch_id}"
                )
            sums += (report.total, report.recon_xray, report.recon_rgb, report.exclusion)
            batch_grads.accumulate(grads)
        if lr != 0.0:
            # Mean over the batch and over patch pixels: the SGD step uses
            # per-pixel-mean loss gradients (framework-style mean reduction)
            # so the schedule's rates behave independently of patch size;
            # reported loss values stay the literal patch sums.
            denom = (stop - start) * config.patch_size**2
            params = _sgd_step(params, batch_grads, lr / denom, config)

    mean = sums / n
    return params, LossReport(*mean)


def _sgd_step(params, grads, step, config):
    d = params_to_dict(params)
    out = {}
    for name, value in d.items():
        g = grads.get(name, 0.0)
        out[name] = value - step * g
    out["lambda1"] = max(out["lambda1"], 0.0)
    out["lambda2"] = max(out["lambda2"], 0.0)
    return dict_to_params(out, config.channels, config.transforms, config.depth)


def separate_patches(params, x_patches, rgb_patches, g1_patches, config, bank=None):
    """Forward every patch through the trained network and synthesize the
    surface/concealed/mixed estimates (no gradients)."""
    bank = bank or build_bank(config.transforms)
    out1, out2, outm = [], [], []
    for i in range(x_patches.shape[0]):
        state = analysis_forward(
            params,
            x_patches[i],
            g1_patches[i],
            rgb_patches[i],
            bank,
            elementwise=config.elementwise_prox,
        )
        x1, x2, xm = synthesize_xray(state.z1, state.z2, params.synthesis)
        out1.append(x1)
        out2.append(x2)
        outm.append(xm)
    return np.stack(out1), np.stack(out2), np.stack(outm)


def train(x_image, rgb_image, config: TrainConfig, g1_override=None, out_dir=None):
    """Full self-supervised run on one mixed image + surface RGB pair.

    Extracts patches, trains for config.epochs epochs, then separates all
    patches with the final parameters and reassembles full images.  When
    ``out_dir`` is given, writes the per-epoch loss CSV, a checkpoint
    every config.checkpoint_every epochs, and the final checkpoint.
    """
    x_image = np.asarray(x_image, dtype=np.float64)
    rgb_image = np.asarray(rgb_image, dtype=np.float64)
    if rgb_image.shape != (3,) + x_image.shape:
        raise ValueError(
            f"rgb shape {rgb_image.shape} does not match x-ray {x_image.shape}"
        )
    g1 = np.asarray(g1_override, dtype=np.float64) if g1_override is not None else grayscale(rgb_image)
    if g1.shape != x_image.shape:
        raise ValueError(f"init image shape {g1.shape} does not match {x_image.shape}")

    grid, x_patches = extract_patches(x_image, config.patch_size, config.overlap)
    _, g1_patches = extract_patches(g1, config.patch_size, config.overlap)
    rgb_patches = np.stack(
        [extract_patches(rgb_image[s], config.patch_size, config.overlap)[1] for s in range(3)],
        axis=1,
    )  # (N, 3, p, p)

    bank = build_bank(config.transforms)
    params = init_params(
        channels=config.channels,
        transforms=config.transforms,
        depth=config.depth,
        filter_size=config.filter_size,
        seed=config.seed,
        filter_std=config.filter_std,
    )

    n = grid.count
    order_once = np.random.default_rng([config.seed, 0]).permutation(n)
    history = []
    for epoch in range(config.epochs):
        if config.shuffle_mode == "epoch":
            order = np.random.default_rng([config.seed, epoch]).permutation(n)
        else:
            order = order_once
        dataset = (x_patches[order], rgb_patches[order], g1_patches[order])
        params, report = train_epoch(params, dataset, config, epoch, bank, patch_ids=order)
        history.append(report)
        if out_dir and config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
            save_checkpoint(
                params, os.path.join(out_dir, f"checkpoint_epoch{epoch + 1:04d}.ckpt"),
                patch_size=config.patch_size,
            )

    p1, p2, pm = separate_patches(params, x_patches, rgb_patches, g1_patches, config, bank)
    result = TrainResult(
        params=params,
        history=history,
        xhat1=reassemble(grid, p1),
        xhat2=reassemble(grid, p2),
        xhat=reassemble(grid, pm),
        g1=g1,
    )
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_loss_csv(os.path.join(out_dir, "loss.csv"), history)
        save_checkpoint(
            params, os.path.join(out_dir, "final.ckpt"), patch_size=config.patch_size
        )
    return result


def write_loss_csv(path, history):
    """Epoch-indexed loss curves, 12 significant digits per value."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("epoch,total,recon_xray,recon_rgb,exclusion\n")
        for i, rep in enumerate(history, start=1):
            fh.write(
                f"{i},{rep.total:.12g},{rep.recon_xray:.12g},"
                f"{rep.recon_rgb:.12g},{rep.exclusion:.12g}\n"
            )


@dataclass
class SweepResult:
    rows: list  # (eta1, eta2, mse_surface, mse_concealed, mse_mean)
    best: tuple  # the row with the smallest mse_mean

    def write_csv(self, path):
        with open(path, "w", encoding="ascii") as fh:
            fh.write("eta1,eta2,mse_surface,mse_concealed,mse_mean\n")
            for row in self.rows:
                fh.write(
                    f"{row[0]:.12g},{row[1]:.12g},{row[2]:.12g},"
                    f"{row[3]:.12g},{row[4]:.12g}\n"
                )


def sweep(x1_gt, x2_gt, rgb_image, grid: SweepGrid, config: TrainConfig, csv_path=None):
    """Train once per grid cell and tabulate separation MSE against the
    ground-truth planes (available in synthetic mode only).

    config.epochs acts as the per-cell epoch budget; desk-scale sweeps use
    a reduced value.  Returns every (eta1, eta2, mse_surface,
    mse_concealed, mse_mean) row plus the argmin row.
    """
    x1_gt = np.asarray(x1_gt, dtype=np.float64)
    x2_gt = np.asarray(x2_gt, dtype=np.float64)
    x_image = synth_mix(x1_gt, x2_gt)
    rows = []
    for e1, e2 in grid.cells():
        cell_cfg = replace(config, eta1=e1, eta2=e2)
        result = train(x_image, rgb_image, cell_cfg)
        m1 = mse(x1_gt, result.xhat1)
        m2 = mse(x2_gt, result.xhat2)
        rows.append((e1, e2, m1, m2, (m1 + m2) / 2.0))
    best = min(rows, key=lambda r: r[4])
    result = SweepResult(rows=rows, best=best)
    if csv_path:
        result.write_csv(csv_path)
    return result
