"""Feature-store dataset, padded batching, and deterministic sampling.

All randomness in the training loop is derived counter-style from
``(seed, step)``, so a resumed run draws exactly the same batches, segment
offsets, and noise as an uninterrupted one.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import torch

from .features import UtteranceFeatures
from .store import FeatureStore


def derive_seed(seed: int, step: int, tag: str = "") -> int:
    """Stable 63-bit stream seed for a given step and purpose."""
    digest = hashlib.sha256(f"{seed}:{step}:{tag}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


@dataclass
class Batch:
    words: torch.Tensor  # (B, W) int64
    tones: torch.Tensor  # (B, W) int64
    words_bert: torch.Tensor  # (B, bert_dim, W)
    w2p: torch.Tensor  # (B, W) int64, zero-padded
    word_lengths: torch.Tensor  # (B,)
    phonemes: torch.Tensor  # (B, P) int64
    pframe: torch.Tensor  # (B, P) int64, zero-padded
    phoneme_lengths: torch.Tensor  # (B,)
    contentvec: torch.Tensor  # (B, ssl_dim, F)
    linear_spec: torch.Tensor  # (B, n_linear, F)
    mel_spec: torch.Tensor  # (B, n_mels, F)
    frame_lengths: torch.Tensor  # (B,)
    audio: torch.Tensor  # (B, F * hop)
    speaker: torch.Tensor  # (B,) int64
    utterance_ids: list[str]

    def to(self, device=None, dtype=None) -> "Batch":
        def cast(t: torch.Tensor) -> torch.Tensor:
            if t.is_floating_point() and dtype is not None:
                return t.to(device=device, dtype=dtype)
            return t.to(device=device) if device is not None else t

        kwargs = {
            name: cast(getattr(self, name))
            for name in self.__dataclass_fields__
            if name != "utterance_ids"
        }
        return Batch(utterance_ids=self.utterance_ids, **kwargs)


def _pad_1d(arrays: list[np.ndarray], dtype) -> torch.Tensor:
    longest = max(len(a) for a in arrays)
    out = torch.zeros(len(arrays), longest, dtype=dtype)
    for i, a in enumerate(arrays):
        out[i, : len(a)] = torch.as_tensor(np.ascontiguousarray(a))
    return out


def _pad_2d(arrays: list[np.ndarray]) -> torch.Tensor:
    channels = arrays[0].shape[0]
    longest = max(a.shape[1] for a in arrays)
    out = torch.zeros(len(arrays), channels, longest, dtype=torch.float32)
    for i, a in enumerate(arrays):
        out[i, :, : a.shape[1]] = torch.as_tensor(np.ascontiguousarray(a))
    return out


def collate(items: list[UtteranceFeatures]) -> Batch:
    """Zero-pad a list of utterances into one batch."""
    if not items:
        raise ValueError("cannot collate an empty list of utterances")
    return Batch(
        words=_pad_1d([f.words for f in items], torch.int64),
        tones=_pad_1d([f.tones for f in items], torch.int64),
        words_bert=_pad_2d([f.words_bert for f in items]),
        w2p=_pad_1d([f.w2p for f in items], torch.int64),
        word_lengths=torch.tensor([f.n_words for f in items], dtype=torch.int64),
        phonemes=_pad_1d([f.phonemes for f in items], torch.int64),
        pframe=_pad_1d([f.pframe for f in items], torch.int64),
        phoneme_lengths=torch.tensor([f.n_phonemes for f in items], dtype=torch.int64),
        contentvec=_pad_2d([f.contentvec for f in items]),
        linear_spec=_pad_2d([f.linear_spec for f in items]),
        mel_spec=_pad_2d([f.mel_spec for f in items]),
        frame_lengths=torch.tensor([f.n_frames for f in items], dtype=torch.int64),
        audio=_pad_1d([f.audio for f in items], torch.float32),
        speaker=torch.tensor([f.speaker for f in items], dtype=torch.int64),
        utterance_ids=[f.utterance_id for f in items],
    )


class FeatureDataset:
    """In-memory view of a feature store, indexed by sorted utterance ID."""

    def __init__(self, store: FeatureStore):
        self.store = store
        self.ids = store.utterance_ids()
        if not self.ids:
            raise ValueError(f"feature store {store.root} contains no utterances")
        self._cache: dict[str, UtteranceFeatures] = {}

    def __len__(self) -> int:
        return len(self.ids)

    def get(self, utterance_id: str) -> UtteranceFeatures:
        if utterance_id not in self._cache:
            self._cache[utterance_id] = self.store.read(utterance_id)
        return self._cache[utterance_id]

    def __getitem__(self, index: int) -> UtteranceFeatures:
        return self.get(self.ids[index])

    def sample_batch(self, seed: int, step: int, batch_size: int) -> Batch:
        """Deterministic batch for a given step; a function of (seed, step)."""
        rng = np.random.default_rng(derive_seed(seed, step, "batch"))
        replace = len(self) < batch_size
        picks = rng.choice(len(self), size=batch_size, replace=replace)
        return collate([self[int(i)] for i in picks])


def slice_columns(x: torch.Tensor, starts: torch.Tensor, length: int) -> torch.Tensor:
    """Per-item fixed-length column slices: x (B, C, T), starts (B,)."""
    idx = starts.view(-1, 1) + torch.arange(length, device=x.device).view(1, -1)
    idx = idx.unsqueeze(1).expand(-1, x.size(1), -1)
    return x.gather(2, idx)


def slice_samples(audio: torch.Tensor, starts: torch.Tensor, length: int) -> torch.Tensor:
    """Per-item fixed-length sample slices: audio (B, T), starts (B,)."""
    idx = starts.view(-1, 1) + torch.arange(length, device=audio.device).view(1, -1)
    return audio.gather(1, idx)
