"""Configuration for the feature pipeline, model, and training loop.

All settings live in nested dataclasses addressed by flat dotted keys
(``ssl.alpha``, ``vocoder.upsample_factors``, ...).  Config files are plain
``key = value`` text, one key per line; lists are comma-separated.  Two
presets exist: ``desk`` (small widths, short runs, CPU-friendly) and
``paper`` (full-size dimensions and schedule).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    """Raised for unknown keys, malformed values, or inconsistent settings."""


@dataclass
class DspConfig:
    """Spectrogram front-end settings.

    Frame count convention: audio is trimmed to ``(len // hop_length) *
    hop_length`` samples, reflect-padded by ``(fft_size - hop_length) // 2``
    on both sides, and analyzed without centering, which yields exactly
    ``len // hop_length`` frames.
    """

    sample_rate: int = 44100
    fft_size: int = 2048
    hop_length: int = 512
    win_length: int = 0  # 0 means "use fft_size"
    n_mels: int = 80
    mel_fmin: float = 0.0
    mel_fmax: float = 0.0  # 0 means "use sample_rate / 2"

    @property
    def win(self) -> int:
        return self.win_length or self.fft_size

    @property
    def fmax(self) -> float:
        return self.mel_fmax or self.sample_rate / 2.0

    @property
    def n_linear(self) -> int:
        return self.fft_size // 2 + 1

    def frame_count(self, n_samples: int) -> int:
        return n_samples // self.hop_length


@dataclass
class TextConfig:
    hidden_dim: int = 192
    bert_dim: int = 192
    n_heads: int = 2
    n_layers: int = 2
    ffn_dim: int = 768
    kernel_size: int = 3
    dropout: float = 0.1
    use_sequence_encoder: bool = True


@dataclass
class SslConfig:
    alpha: float = 1.0
    beta: float = 0.5
    input_dim: int = 256
    hidden_dim: int = 192
    frame_rate: float = 50.0  # native frames/second of the SSL extractor


@dataclass
class PriorConfig:
    hidden_dim: int = 192
    n_blocks: int = 4
    n_heads: int = 2
    ffn_dim: int = 768
    kernel_size: int = 3
    dropout: float = 0.1
    logsigma_clamp: float = 7.0


@dataclass
class DurConfig:
    enabled: bool = False  # re-predict durations at inference
    pace: float = 1.0
    hidden_dim: int = 256
    kernel_size: int = 3
    dropout: float = 0.1


@dataclass
class PosteriorConfig:
    hidden_dim: int = 192
    wn_layers: int = 16
    wn_kernel: int = 5
    wn_dilation: int = 1


@dataclass
class FlowConfig:
    n_blocks: int = 4
    wn_layers: int = 4
    wn_kernel: int = 5


@dataclass
class VocoderConfig:
    initial_channels: int = 512
    upsample_factors: list[int] = field(default_factory=lambda: [8, 8, 4, 2])
    upsample_kernels: list[int] = field(default_factory=lambda: [16, 16, 8, 4])
    resblock_kernels: list[int] = field(default_factory=lambda: [3, 7, 11])
    resblock_dilations: list[int] = field(default_factory=lambda: [1, 3, 5])
    periods: list[int] = field(default_factory=lambda: [2, 3, 5, 7, 11])
    scales: int = 3
    mpd_channels: int = 32
    mpd_max_channels: int = 1024
    msd_channels: int = 128
    msd_max_channels: int = 1024


@dataclass
class ModelGlobalConfig:
    use_flow: bool = True
    speaker_dim: int = 192
    noise_scale: float = 0.667


@dataclass
class TrainConfig:
    batch_size: int = 16
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    beta1: float = 0.8
    beta2: float = 0.99
    total_steps: int = 500_000
    checkpoint_interval: int = 10_000
    seed: int = 1234
    segment_frames: int = 32  # windowed waveform training span
    mel_scale: float = 1.0  # optional reconstruction multiplier; 1.0 keeps the plain sum
    fm_weight: float = 1.0
    weight_rec: float = 1.0
    weight_melpre: float = 1.0
    weight_kl: float = 1.0
    weight_dur: float = 1.0
    weight_adv: float = 1.0

    def validate(self) -> None:
        for name in ("batch_size", "total_steps", "checkpoint_interval", "segment_frames"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"train.{name} must be positive")
        for name in ("lr_g", "lr_d", "mel_scale"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"train.{name} must be positive")


_SECTIONS = {
    "dsp": DspConfig,
    "text": TextConfig,
    "ssl": SslConfig,
    "prior": PriorConfig,
    "dur": DurConfig,
    "posterior": PosteriorConfig,
    "flow": FlowConfig,
    "vocoder": VocoderConfig,
    "model": ModelGlobalConfig,
    "train": TrainConfig,
}


@dataclass
class Config:
    """Full configuration bundle; see module docstring for the file format."""

    dsp: DspConfig = field(default_factory=DspConfig)
    text: TextConfig = field(default_factory=TextConfig)
    ssl: SslConfig = field(default_factory=SslConfig)
    prior: PriorConfig = field(default_factory=PriorConfig)
    dur: DurConfig = field(default_factory=DurConfig)
    posterior: PosteriorConfig = field(default_factory=PosteriorConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    vocoder: VocoderConfig = field(default_factory=VocoderConfig)
    model: ModelGlobalConfig = field(default_factory=ModelGlobalConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> None:
        if not (self.text.hidden_dim == self.ssl.hidden_dim == self.prior.hidden_dim):
            raise ConfigError(
                "text.hidden_dim, ssl.hidden_dim, and prior.hidden_dim must match "
                f"(got {self.text.hidden_dim}, {self.ssl.hidden_dim}, {self.prior.hidden_dim})"
            )
        if math.prod(self.vocoder.upsample_factors) != self.dsp.hop_length:
            raise ConfigError(
                f"product of vocoder.upsample_factors {self.vocoder.upsample_factors} "
                f"must equal dsp.hop_length {self.dsp.hop_length}"
            )
        if len(self.vocoder.upsample_kernels) != len(self.vocoder.upsample_factors):
            raise ConfigError("vocoder.upsample_kernels must pair with upsample_factors")
        if self.dur.pace <= 0:
            raise ConfigError("dur.pace must be positive")
        if self.dsp.hop_length <= 0 or self.dsp.fft_size < self.dsp.hop_length:
            raise ConfigError("dsp.fft_size must be >= dsp.hop_length > 0")
        self.train.validate()

    # -- flat key-value view ------------------------------------------------

    def to_flat(self) -> dict[str, object]:
        out: dict[str, object] = {}
        for section in _SECTIONS:
            sub = getattr(self, section)
            for f in dataclasses.fields(sub):
                out[f"{section}.{f.name}"] = getattr(sub, f.name)
        return out

    def set_flat(self, key: str, raw: object) -> None:
        section, _, name = key.partition(".")
        if section not in _SECTIONS or not name:
            raise ConfigError(f"unknown config key {key!r}")
        sub = getattr(self, section)
        fields = {f.name: f for f in dataclasses.fields(sub)}
        if name not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        current = getattr(sub, name)
        setattr(sub, name, _coerce(key, raw, current))

    def apply_flat(self, items: dict[str, object]) -> None:
        for key, value in items.items():
            self.set_flat(key, value)


def _coerce(key: str, raw: object, current: object) -> object:
    if isinstance(current, bool):
        if isinstance(raw, bool):
            return raw
        text = str(raw).strip().lower()
        if text in ("true", "1", "yes", "on"):
            return True
        if text in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(current, int):
        try:
            return int(str(raw).strip())
        except ValueError as exc:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from exc
    if isinstance(current, float):
        try:
            return float(str(raw).strip())
        except ValueError as exc:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from exc
    if isinstance(current, list):
        if isinstance(raw, (list, tuple)):
            return [int(v) for v in raw]
        parts = [p for p in str(raw).replace(",", " ").split() if p]
        try:
            return [int(p) for p in parts]
        except ValueError as exc:
            raise ConfigError(f"{key}: expected a list of integers, got {raw!r}") from exc
    return str(raw)


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment, blank lines skipped."""
    items: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = stripped.split("=", 1)
        items[key.strip()] = value.strip()
    return items


def load_config_file(path: str | Path, base: Config | None = None) -> Config:
    """Load a flat key-value config file on top of ``base`` (default preset)."""
    cfg = base if base is not None else desk_preset()
    cfg.apply_flat(parse_config_text(Path(path).read_text(encoding="utf-8")))
    cfg.validate()
    return cfg


def save_config_file(cfg: Config, path: str | Path) -> None:
    lines = []
    for key, value in cfg.to_flat().items():
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def paper_preset() -> Config:
    """Full-size configuration: 192-dim encoders, full vocoder widths."""
    cfg = Config()
    cfg.validate()
    return cfg


def desk_preset() -> Config:
    """CPU-scale configuration; same architecture, shrunk widths and schedule."""
    cfg = Config()
    for section in ("text", "ssl", "prior"):
        getattr(cfg, section).hidden_dim = 64
    cfg.text.ffn_dim = 192
    cfg.text.n_layers = 1
    cfg.prior.ffn_dim = 192
    cfg.prior.n_blocks = 2
    cfg.dur.hidden_dim = 64
    cfg.posterior.hidden_dim = 64
    cfg.posterior.wn_layers = 4
    cfg.flow.n_blocks = 2
    cfg.flow.wn_layers = 2
    cfg.vocoder.initial_channels = 128
    cfg.vocoder.upsample_factors = [8, 8, 8]
    cfg.vocoder.upsample_kernels = [16, 16, 16]
    cfg.vocoder.resblock_kernels = [3]
    cfg.vocoder.resblock_dilations = [1, 3]
    cfg.vocoder.mpd_channels = 8
    cfg.vocoder.mpd_max_channels = 64
    cfg.vocoder.msd_channels = 16
    cfg.vocoder.msd_max_channels = 64
    cfg.model.use_flow = False
    cfg.model.speaker_dim = 64
    cfg.train.batch_size = 4
    cfg.train.lr_g = 2e-3
    cfg.train.lr_d = 2e-3
    cfg.train.total_steps = 200
    cfg.train.checkpoint_interval = 50
    cfg.train.segment_frames = 16
    cfg.validate()
    return cfg


PRESETS = {"desk": desk_preset, "paper": paper_preset}


def preset(name: str) -> Config:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
