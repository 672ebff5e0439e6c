"""Shared fixtures: micro-scale configs and synthetic corpora."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from phonevc.audio import write_wav
from phonevc.config import Config
from phonevc.extract import preprocess_corpus
from phonevc.providers import build_provider_set
from phonevc.store import CorpusManifest, ManifestEntry


def micro_config() -> Config:
    """A deliberately tiny configuration so model tests run in milliseconds."""
    cfg = Config()
    cfg.dsp.sample_rate = 8000
    cfg.dsp.fft_size = 256
    cfg.dsp.hop_length = 64
    cfg.dsp.n_mels = 20
    for section in ("text", "ssl", "prior"):
        getattr(cfg, section).hidden_dim = 16
    cfg.text.bert_dim = 16
    cfg.text.ffn_dim = 32
    cfg.text.n_layers = 1
    cfg.text.dropout = 0.0
    cfg.ssl.input_dim = 24
    cfg.prior.ffn_dim = 32
    cfg.prior.n_blocks = 1
    cfg.prior.dropout = 0.0
    cfg.dur.hidden_dim = 16
    cfg.dur.dropout = 0.0
    cfg.posterior.hidden_dim = 16
    cfg.posterior.wn_layers = 2
    cfg.flow.n_blocks = 1
    cfg.flow.wn_layers = 1
    cfg.vocoder.initial_channels = 32
    cfg.vocoder.upsample_factors = [4, 4, 4]
    cfg.vocoder.upsample_kernels = [8, 8, 8]
    cfg.vocoder.resblock_kernels = [3]
    cfg.vocoder.resblock_dilations = [1]
    cfg.vocoder.periods = [2, 3]
    cfg.vocoder.scales = 2
    cfg.vocoder.mpd_channels = 4
    cfg.vocoder.mpd_max_channels = 16
    cfg.vocoder.msd_channels = 8
    cfg.vocoder.msd_max_channels = 16
    cfg.model.use_flow = False
    cfg.model.speaker_dim = 8
    cfg.train.batch_size = 2
    cfg.train.lr_g = 2e-3
    cfg.train.lr_d = 2e-3
    cfg.train.total_steps = 4
    cfg.train.checkpoint_interval = 2
    cfg.train.segment_frames = 8
    cfg.train.seed = 77
    cfg.validate()
    return cfg


@pytest.fixture
def micro_cfg() -> Config:
    return micro_config()


def synth_wave(rng: np.random.Generator, n_samples: int, sample_rate: int, pitch: float) -> np.ndarray:
    t = np.arange(n_samples) / sample_rate
    wave = 0.3 * np.sin(2 * np.pi * pitch * t) + 0.1 * np.sin(2 * np.pi * 2.7 * pitch * t)
    return (wave + 0.05 * rng.standard_normal(n_samples)).astype(np.float32)


def build_wav_corpus(
    root: Path,
    cfg: Config,
    n_speakers: int = 2,
    utts_per_speaker: int = 3,
    seconds: tuple[float, float] = (0.4, 0.6),
    seed: int = 11,
) -> CorpusManifest:
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries = []
    for spk in range(n_speakers):
        for u in range(utts_per_speaker):
            uid = f"s{spk}_u{u}"
            duration = rng.uniform(*seconds)
            n = int(duration * cfg.dsp.sample_rate)
            audio = synth_wave(rng, n, cfg.dsp.sample_rate, pitch=110.0 * (spk + 1))
            path = root / f"{uid}.wav"
            write_wav(path, audio, cfg.dsp.sample_rate)
            entries.append(ManifestEntry(uid, str(path), f"spk{spk}"))
    return CorpusManifest(
        entries,
        sample_rate=cfg.dsp.sample_rate,
        hop_length=cfg.dsp.hop_length,
        fft_size=cfg.dsp.fft_size,
    )


@pytest.fixture(scope="session")
def micro_store(tmp_path_factory):
    """A preprocessed micro corpus shared by training/conversion tests."""
    cfg = micro_config()
    root = tmp_path_factory.mktemp("micro_corpus")
    manifest = build_wav_corpus(root / "wav", cfg)
    providers = build_provider_set(
        "stub",
        cfg.dsp,
        seed=21,
        bert_dim=cfg.text.bert_dim,
        ssl_dim=cfg.ssl.input_dim,
    )
    store = preprocess_corpus(manifest, providers, cfg.dsp, root / "features", seed=21)
    return store, manifest
