"""Pluggable feature extractors: ASR, forced aligner, text embeddings, SSL.

Real acoustic/text models are intentionally not shipped; the stub providers
below emit deterministic synthetic outputs keyed by ``(seed, utterance_id)``
so the whole pipeline is testable without model downloads.  Stubs are pure:
re-extraction of the same utterance is bit-identical.  Register alternative
provider sets with :func:`register_provider_factory` (the ``real`` slot is a
plug-in point, not a bundled implementation).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import numpy as np

from .config import DspConfig
from .features import wframe_from


class ProviderError(RuntimeError):
    """Raised when a provider set is misconfigured or unavailable."""


@dataclass
class AsrResult:
    """Word tokens, per-word phoneme groups, and per-word tone IDs."""

    words: list[str]
    phoneme_groups: list[list[str]]
    tones: list[int]

    @property
    def phonemes(self) -> list[str]:
        return [p for group in self.phoneme_groups for p in group]

    @property
    def w2p(self) -> np.ndarray:
        return np.array([len(g) for g in self.phoneme_groups], dtype=np.int64)


class AsrProvider(Protocol):
    def __call__(self, audio: np.ndarray, utterance_id: str) -> AsrResult: ...


class AlignerProvider(Protocol):
    def __call__(
        self,
        audio: np.ndarray,
        words: Sequence[str],
        phonemes: Sequence[str],
        w2p: np.ndarray,
        utterance_id: str,
    ) -> tuple[np.ndarray, np.ndarray]: ...


class BertProvider(Protocol):
    def __call__(self, words: Sequence[str], utterance_id: str) -> np.ndarray: ...


class SslProvider(Protocol):
    def __call__(self, audio: np.ndarray, utterance_id: str) -> np.ndarray: ...


@dataclass
class ExtractorProviderSet:
    """The four extractors the feature pipeline composes."""

    asr: AsrProvider
    aligner: AlignerProvider
    bert: BertProvider
    ssl: SslProvider
    name: str = "custom"


def _rng(seed: int, role: str, utterance_id: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}:{role}:{utterance_id}".encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


SILENCE_TOKEN = "sil"
NO_TONE_ID = 0

WORD_INVENTORY = [f"w{i:02d}" for i in range(32)]
PHONEME_INVENTORY = [
    "a", "ai", "ao", "e", "i", "o", "u", "n", "ng", "h",
    "k", "s", "sh", "t", "m", "l", "r", "w", "y", "zh",
]


class StubAsr:
    """Synthesizes a plausible token sequence from a seeded hash of the ID.

    The first and last words are always silence (single phoneme, tone 0);
    interior words carry one to three phonemes and tones 1-5.  The number of
    interior words scales with the audio duration.
    """

    def __init__(self, dsp: DspConfig, seed: int, words_per_second: float = 3.0):
        self.dsp = dsp
        self.seed = seed
        self.words_per_second = words_per_second

    def __call__(self, audio: np.ndarray, utterance_id: str) -> AsrResult:
        rng = _rng(self.seed, "asr", utterance_id)
        duration = len(audio) / self.dsp.sample_rate
        n_inner = max(1, int(round(duration * self.words_per_second)))
        words = [SILENCE_TOKEN]
        groups = [[SILENCE_TOKEN]]
        tones = [NO_TONE_ID]
        for _ in range(n_inner):
            words.append(WORD_INVENTORY[rng.integers(len(WORD_INVENTORY))])
            n_ph = int(rng.integers(1, 4))
            groups.append([PHONEME_INVENTORY[rng.integers(len(PHONEME_INVENTORY))] for _ in range(n_ph)])
            tones.append(int(rng.integers(1, 6)))
        words.append(SILENCE_TOKEN)
        groups.append([SILENCE_TOKEN])
        tones.append(NO_TONE_ID)
        return AsrResult(words=words, phoneme_groups=groups, tones=tones)


class StubAligner:
    """Distributes the utterance's frames over phonemes via a seeded draw.

    ``jitter`` > 0 perturbs the total by up to that many frames, leaving the
    shortfall for the repair pass to absorb (useful for exercising it).
    """

    def __init__(self, dsp: DspConfig, seed: int, jitter: int = 0):
        self.dsp = dsp
        self.seed = seed
        self.jitter = jitter

    def __call__(self, audio, words, phonemes, w2p, utterance_id):
        rng = _rng(self.seed, "aligner", utterance_id)
        n_frames = self.dsp.frame_count(len(audio))
        n_ph = len(phonemes)
        if n_frames < n_ph:
            raise ProviderError(
                f"{utterance_id}: {n_frames} frames cannot cover {n_ph} phonemes"
            )
        weights = rng.random(n_ph) + 0.25
        extra = np.floor(weights / weights.sum() * (n_frames - n_ph)).astype(np.int64)
        pframe = extra + 1
        # Hand out the flooring remainder one frame at a time.
        short = n_frames - int(pframe.sum())
        if short:
            for idx in rng.permutation(n_ph)[:short]:
                pframe[idx] += 1
        if self.jitter:
            offset = int(rng.integers(-self.jitter, self.jitter + 1))
            idx = int(np.argmax(pframe))
            pframe[idx] = max(1, pframe[idx] + offset)
        return pframe, wframe_from(pframe, np.asarray(w2p, dtype=np.int64))


class StubBert:
    """Seeded pseudo-random word embeddings of a configured dimension."""

    def __init__(self, seed: int, dim: int = 192):
        self.seed = seed
        self.dim = dim

    def __call__(self, words: Sequence[str], utterance_id: str) -> np.ndarray:
        rng = _rng(self.seed, "bert", utterance_id)
        return rng.standard_normal((self.dim, len(words))).astype(np.float32)


class StubSsl:
    """Seeded pseudo-random SSL features at a configurable native frame rate."""

    def __init__(self, dsp: DspConfig, seed: int, dim: int = 256, frame_rate: float = 50.0):
        self.dsp = dsp
        self.seed = seed
        self.dim = dim
        self.frame_rate = frame_rate

    def __call__(self, audio: np.ndarray, utterance_id: str) -> np.ndarray:
        rng = _rng(self.seed, "ssl", utterance_id)
        n_frames = max(1, int(round(len(audio) / self.dsp.sample_rate * self.frame_rate)))
        return rng.standard_normal((self.dim, n_frames)).astype(np.float32)


def stub_provider_set(
    dsp: DspConfig,
    seed: int,
    bert_dim: int = 192,
    ssl_dim: int = 256,
    ssl_frame_rate: float = 50.0,
    aligner_jitter: int = 0,
) -> ExtractorProviderSet:
    return ExtractorProviderSet(
        asr=StubAsr(dsp, seed),
        aligner=StubAligner(dsp, seed, jitter=aligner_jitter),
        bert=StubBert(seed, dim=bert_dim),
        ssl=StubSsl(dsp, seed, dim=ssl_dim, frame_rate=ssl_frame_rate),
        name="stub",
    )


ProviderFactory = Callable[..., ExtractorProviderSet]

_PROVIDER_FACTORIES: dict[str, ProviderFactory] = {"stub": stub_provider_set}


def register_provider_factory(name: str, factory: ProviderFactory) -> None:
    """Make a provider set available to build_provider_set and the CLI."""
    _PROVIDER_FACTORIES[name] = factory


def build_provider_set(name: str, dsp: DspConfig, seed: int, **kwargs) -> ExtractorProviderSet:
    factory = _PROVIDER_FACTORIES.get(name)
    if factory is None:
        available = ", ".join(sorted(_PROVIDER_FACTORIES))
        raise ProviderError(
            f"no provider set named {name!r} is registered (available: {available}). "
            "Real ASR/aligner/text/SSL models are not bundled; register a factory "
            "with phonevc.providers.register_provider_factory to use them."
        )
    providers = factory(dsp, seed, **kwargs)
    providers.name = name
    return providers
