"""Plain-text key=value run configuration.

One `key = value` pair per line; blank lines and `#` comments ignored.
Unknown keys are rejected.  Every key has a default except the input
paths, which the command line supplies.
"""

from dataclasses import dataclass, fields

from .training import TrainConfig


class ConfigError(ValueError):
    """Malformed configuration text or unknown key."""


@dataclass
class RunConfig:
    channels: int = 64
    transforms: int = 4
    depth: int = 5
    filter_size: int = 5
    patch_size: int = 50
    overlap: int = 45
    eta1: float = 0.5
    eta2: float = 0.1
    epochs: int = 120
    batch_size: int = 16
    seed: int = 0
    normalization: str = "minmax"
    shuffle_mode: str = "epoch"
    checkpoint_every: int = 10
    lr_exp_base: float = 3.0
    lr_exp_decay: float = 40.0
    filter_std: float = 0.1
    init_image: str = ""

    def train_config(self, **overrides):
        kwargs = dict(
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
            eta1=self.eta1,
            eta2=self.eta2,
            depth=self.depth,
            channels=self.channels,
            transforms=self.transforms,
            filter_size=self.filter_size,
            patch_size=self.patch_size,
            overlap=self.overlap,
            shuffle_mode=self.shuffle_mode,
            checkpoint_every=self.checkpoint_every,
            lr_exp_base=self.lr_exp_base,
            lr_exp_decay=self.lr_exp_decay,
            filter_std=self.filter_std,
        )
        kwargs.update(overrides)
        return TrainConfig(**kwargs)


_FIELDS = {f.name: f.type for f in fields(RunConfig)}  # annotation is the converter


def parse_config(text):
    """Parse key=value text into a RunConfig."""
    cfg = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            setattr(cfg, key, _FIELDS[key](value))
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    return cfg


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def format_config(cfg: RunConfig):
    """Inverse of parse_config for the populated fields."""
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in fields(RunConfig)]
    return "\n".join(lines) + "\n"
