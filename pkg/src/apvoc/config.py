"""Run configuration and dataset manifests.

A run config is one flat, human-readable ``key = value`` file covering every
tunable (STFT analysis, mel extraction, model dimensions, loss weights,
optimizer settings, discriminator layout). Unknown keys are rejected and all
values are validated on load; load -> save -> load is idempotent.

A manifest is a text file with one ``<split> <path>`` line per clip
(splits: train/val/test) and an optional ``seed <int>`` line recording the
seed of a generated split.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from apvoc.discriminators import (
    DESK_MPD_CHANNELS,
    DESK_MRD_CHANNELS,
    FULL_MPD_CHANNELS,
    FULL_MRD_CHANNELS,
)
from apvoc.dsp import StftConfig
from apvoc.generator import PRESETS
from apvoc.losses import LossWeights
from apvoc.training import TrainConfig


class ConfigError(ValueError):
    """Raised for unknown keys, bad values, or malformed manifests."""


_INT_TUPLE = "int_tuple"
_RESOLUTIONS = "resolutions"

# field name -> parse kind; doubles as the set of legal keys
_SCHEMA: dict[str, str] = {
    "sample_rate": "int",
    "n_fft": "int",
    "hop": "int",
    "win_length": "int",
    "window": "str",
    "centered": "bool",
    "n_mels": "int",
    "f_min": "float",
    "f_max": "float",
    "amp_floor": "float",
    "preset": "str",
    "channels": "int",
    "expansion": "int",
    "num_blocks": "int",
    "kernel_size": "int",
    "lambda_amplitude": "float",
    "lambda_phase": "float",
    "lambda_stft": "float",
    "lambda_waveform": "float",
    "gan_loss": "str",
    "batch_size": "int",
    "crop_samples": "int",
    "lr": "float",
    "beta1": "float",
    "beta2": "float",
    "weight_decay": "float",
    "lr_decay": "float",
    "max_steps": "int",
    "seed": "int",
    "mpd_periods": _INT_TUPLE,
    "mpd_channels": _INT_TUPLE,
    "mrd_resolutions": _RESOLUTIONS,
    "mrd_channels": _INT_TUPLE,
    "log_every": "int",
    "checkpoint_every": "int",
}


@dataclass(frozen=True)
class RunConfig:
    sample_rate: int = 22050
    n_fft: int = 1024
    hop: int = 256
    win_length: int = 1024
    window: str = "hann"
    centered: bool = True
    n_mels: int = 80
    f_min: float = 0.0
    f_max: float = 8000.0
    amp_floor: float = 1e-5
    preset: str = "full"
    channels: int = 512
    expansion: int = 1536
    num_blocks: int = 8
    kernel_size: int = 7
    lambda_amplitude: float = 45.0  # UNVERIFIED-DEFAULT, override freely
    lambda_phase: float = 100.0
    lambda_stft: float = 20.0
    lambda_waveform: float = 1.0
    gan_loss: str = "hinge"
    batch_size: int = 16
    crop_samples: int = 8192
    lr: float = 2e-4
    beta1: float = 0.8
    beta2: float = 0.99
    weight_decay: float = 0.01
    lr_decay: float = 0.999
    max_steps: int = 1_000_000
    seed: int = 1234
    mpd_periods: tuple = (2, 3, 5, 7, 11)
    mpd_channels: tuple = FULL_MPD_CHANNELS
    mrd_resolutions: tuple = ((512, 128, 512), (1024, 256, 1024), (2048, 512, 2048))
    mrd_channels: tuple = FULL_MRD_CHANNELS
    log_every: int = 1
    checkpoint_every: int = 0  # 0 = final checkpoint only

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")
        if self.gan_loss not in ("hinge", "least_squares"):
            raise ConfigError(f"gan_loss must be hinge or least_squares")
        if self.crop_samples % self.hop:
            raise ConfigError(
                f"crop_samples={self.crop_samples} must be a multiple of hop={self.hop}"
            )
        if self.batch_size < 1 or self.max_steps < 1 or self.num_blocks < 1:
            raise ConfigError("batch_size, max_steps, num_blocks must be >= 1")
        if not (0 < self.lr_decay <= 1):
            raise ConfigError("lr_decay must be in (0, 1]")
        self.stft_config()  # validates n_fft/hop/win/window incl. COLA

    @classmethod
    def for_preset(cls, preset: str, **overrides) -> "RunConfig":
        base = {"preset": preset}
        base.update(_PRESET_DEFAULTS.get(preset, {}))
        base.update(overrides)
        return cls(**base)

    # derived views ---------------------------------------------------------
    def stft_config(self) -> StftConfig:
        return StftConfig(self.n_fft, self.hop, self.win_length, self.window,
                          self.centered)

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda_amplitude, self.lambda_phase,
                           self.lambda_stft, self.lambda_waveform)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.batch_size, self.crop_samples, self.lr,
                           self.beta1, self.beta2, self.weight_decay,
                           self.lr_decay, self.max_steps, self.seed,
                           self.preset)

    # serialization ---------------------------------------------------------
    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {_format_value(_SCHEMA[f.name], v)}")
        return "\n".join(lines) + "\n"

    def save(self, path):
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        raw: dict[str, str] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _SCHEMA:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            if key in raw:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            raw[key] = value
        preset = raw.get("preset", "full")
        base = dict(_PRESET_DEFAULTS.get(preset, {}))
        base["preset"] = preset
        for key, value in raw.items():
            base[key] = _parse_value(_SCHEMA[key], key, value)
        try:
            return cls(**base)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text)


_PRESET_DEFAULTS = {
    "full": dict(channels=512, expansion=1536, num_blocks=8,
                 mpd_channels=FULL_MPD_CHANNELS, mrd_channels=FULL_MRD_CHANNELS),
    "desk": dict(channels=64, expansion=192, num_blocks=4,
                 mpd_channels=DESK_MPD_CHANNELS, mrd_channels=DESK_MRD_CHANNELS,
                 max_steps=2000, batch_size=1, lr=1e-3),
}


def _format_value(kind: str, v) -> str:
    if kind == "bool":
        return "true" if v else "false"
    if kind == _INT_TUPLE:
        return ",".join(str(int(x)) for x in v)
    if kind == _RESOLUTIONS:
        return ",".join(":".join(str(int(x)) for x in r) for r in v)
    if kind == "float":
        return repr(float(v))
    return str(v)


def _parse_value(kind: str, key: str, value: str):
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "bool":
            if value.lower() in ("true", "1", "yes"):
                return True
            if value.lower() in ("false", "0", "no"):
                return False
            raise ValueError(value)
        if kind == _INT_TUPLE:
            return tuple(int(x) for x in value.split(",") if x.strip())
        if kind == _RESOLUTIONS:
            out = []
            for item in value.split(","):
                parts = [int(x) for x in item.split(":")]
                if len(parts) != 3:
                    raise ValueError(item)
                out.append(tuple(parts))
            return tuple(out)
        return value
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

_SPLITS = ("train", "val", "test")


@dataclass
class Manifest:
    entries: list[tuple[str, Path]] = field(default_factory=list)
    seed: int | None = None

    def paths(self, split: str) -> list[Path]:
        return [p for s, p in self.entries if s == split]

    def to_text(self) -> str:
        lines = [] if self.seed is None else [f"seed {self.seed}"]
        lines += [f"{s} {p}" for s, p in self.entries]
        return "\n".join(lines) + "\n"

    def save(self, path):
        Path(path).write_text(self.to_text())


def load_manifest(path) -> Manifest:
    base = Path(path).parent
    man = Manifest()
    seen: set[Path] = set()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        rest = rest.strip()
        if head == "seed":
            man.seed = int(rest)
            continue
        if head not in _SPLITS:
            raise ConfigError(f"{path}:{lineno}: unknown split {head!r}")
        p = Path(rest)
        if not p.is_absolute():
            p = base / p
        if p in seen:
            raise ConfigError(f"{path}:{lineno}: duplicate path {p}")
        if not p.exists():
            raise ConfigError(f"{path}:{lineno}: missing file {p}")
        seen.add(p)
        man.entries.append((head, p))
    if not man.entries:
        raise ConfigError(f"{path}: manifest lists no files")
    return man


def make_split(paths: list[Path], n_val: int, n_test: int, seed: int) -> Manifest:
    """Deterministic random split; the seed is recorded in the manifest."""
    import numpy as np

    order = list(np.random.default_rng(seed).permutation(len(paths)))
    man = Manifest(seed=seed)
    for rank, idx in enumerate(order):
        split = "val" if rank < n_val else "test" if rank < n_val + n_test else "train"
        man.entries.append((split, Path(paths[int(idx)])))
    man.entries.sort(key=lambda e: (_SPLITS.index(e[0]), str(e[1])))
    return man
