"""Per-utterance feature bundle and the pure operations that keep it consistent.

An utterance carries word/phoneme/tone token IDs, word-level text embeddings,
per-phoneme and per-word frame counts, the phonemes-per-word map, SSL features
resampled to the spectrogram frame grid, spectrograms, and audio.  The
consistency rules tying these together (frame sums, word/phoneme counts) are
checked by :func:`validate_alignment` and enforced at extraction time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class AlignmentError(ValueError):
    """Raised when an utterance's duration bookkeeping cannot be reconciled."""


@dataclass
class UtteranceFeatures:
    """All features for one utterance, aligned to a single frame grid."""

    utterance_id: str
    words: np.ndarray  # (W,) int64 token IDs
    phonemes: np.ndarray  # (P,) int64 token IDs
    tones: np.ndarray  # (W,) int64 tone IDs
    words_bert: np.ndarray  # (bert_dim, W) float32
    pframe: np.ndarray  # (P,) int64 frames per phoneme
    wframe: np.ndarray  # (W,) int64 frames per word
    w2p: np.ndarray  # (W,) int64 phonemes per word
    speaker: int
    contentvec: np.ndarray  # (ssl_dim, frames) float32
    linear_spec: np.ndarray  # (n_fft // 2 + 1, frames) float32
    mel_spec: np.ndarray  # (n_mels, frames) float32
    audio: np.ndarray  # (frames * hop,) float32
    word_tokens: list[str] = field(default_factory=list)
    phoneme_tokens: list[str] = field(default_factory=list)

    @property
    def n_words(self) -> int:
        return len(self.words)

    @property
    def n_phonemes(self) -> int:
        return len(self.phonemes)

    @property
    def n_frames(self) -> int:
        return self.mel_spec.shape[1]


def wframe_from(pframe: np.ndarray, w2p: np.ndarray) -> np.ndarray:
    """Per-word frame counts: sum each word's slice of per-phoneme counts."""
    pframe = np.asarray(pframe, dtype=np.int64)
    w2p = np.asarray(w2p, dtype=np.int64)
    if w2p.size and w2p.min() < 1:
        raise AlignmentError("every w2p entry must be >= 1")
    ends = np.cumsum(w2p)
    if ends.size and ends[-1] != len(pframe):
        raise AlignmentError(f"sum(w2p)={ends[-1] if ends.size else 0} != len(pframe)={len(pframe)}")
    starts = ends - w2p
    return np.array([pframe[s:e].sum() for s, e in zip(starts, ends)], dtype=np.int64)


def validate_alignment(features: UtteranceFeatures) -> list[str]:
    """Return a description of every violated consistency rule (empty if none).

    Total function: never raises, reports all violations it can detect.
    """
    v: list[str] = []
    f = features
    frames = f.mel_spec.shape[1]

    if f.linear_spec.shape[1] != frames:
        v.append(
            f"linear/mel frame mismatch: linear has {f.linear_spec.shape[1]}, mel has {frames}"
        )
    psum = int(f.pframe.sum()) if f.pframe.size else 0
    if psum != frames:
        v.append(f"sum(pframe)≠frames: sum={psum}, frames={frames}")
    if len(f.pframe) != len(f.phonemes):
        v.append(f"len(pframe)={len(f.pframe)} != P={len(f.phonemes)}")
    wsum = int(f.w2p.sum()) if f.w2p.size else 0
    if wsum != len(f.phonemes):
        v.append(f"sum(w2p)≠P: sum={wsum}, P={len(f.phonemes)}")
    if not (len(f.w2p) == len(f.words) == len(f.tones) == len(f.wframe)):
        v.append(
            "word-level length mismatch: "
            f"w2p={len(f.w2p)}, words={len(f.words)}, tones={len(f.tones)}, wframe={len(f.wframe)}"
        )
    if f.words_bert.shape[1] != len(f.words):
        v.append(f"words_bert has {f.words_bert.shape[1]} columns, expected W={len(f.words)}")

    bad_p = np.nonzero(f.pframe < 1)[0]
    if bad_p.size:
        v.append(f"pframe entries < 1 at indices {bad_p.tolist()}")
    bad_w = np.nonzero(f.w2p < 1)[0]
    if bad_w.size:
        v.append(f"w2p entries < 1 at indices {bad_w.tolist()}")

    # wframe[i] must equal the sum of its word's pframe slice; only checkable
    # when the partition itself is consistent.
    if not bad_w.size and wsum == len(f.pframe) and len(f.w2p) == len(f.wframe):
        expected = wframe_from(f.pframe, f.w2p)
        mismatch = np.nonzero(expected != f.wframe)[0]
        if mismatch.size:
            v.append(
                f"wframe inconsistent with pframe/w2p at words {mismatch.tolist()}: "
                f"expected {expected[mismatch].tolist()}, got {f.wframe[mismatch].tolist()}"
            )

    if f.contentvec.shape[1] != frames:
        v.append(f"contentvec has {f.contentvec.shape[1]} columns, expected frames={frames}")
    return v


def repair_durations(
    pframe: np.ndarray, target_frames: int, budget: int = 3
) -> np.ndarray:
    """Adjust per-phoneme frame counts so they sum to ``target_frames``.

    The deviation is absorbed one frame at a time by the longest phonemes
    first (ties broken by position); no entry may drop below one frame.
    Deviations larger than ``budget`` are treated as alignment failures.
    """
    pframe = np.asarray(pframe, dtype=np.int64).copy()
    if pframe.size == 0:
        raise AlignmentError("cannot repair an empty duration vector")
    if pframe.min() < 1:
        raise AlignmentError("durations must be >= 1 before repair")
    deviation = int(target_frames - pframe.sum())
    if abs(deviation) > budget:
        raise AlignmentError(
            f"duration sum {int(pframe.sum())} deviates from {target_frames} frames "
            f"by {abs(deviation)}, over the repair budget of {budget}"
        )
    step = 1 if deviation > 0 else -1
    for _ in range(abs(deviation)):
        order = np.lexsort((np.arange(len(pframe)), -pframe))
        for idx in order:
            if step > 0 or pframe[idx] > 1:
                pframe[idx] += step
                break
        else:
            raise AlignmentError(
                f"cannot shrink durations to {target_frames} frames without a "
                "phoneme dropping below one frame"
            )
    return pframe


def resample_ssl(raw_ssl: np.ndarray, target_frames: int) -> np.ndarray:
    """Linearly interpolate an (n, f_ssl) feature matrix to ``target_frames`` columns."""
    raw_ssl = np.asarray(raw_ssl)
    if raw_ssl.ndim != 2 or raw_ssl.shape[1] < 1:
        raise ValueError(f"expected a non-empty (n, frames) matrix, got shape {raw_ssl.shape}")
    if target_frames < 1:
        raise ValueError("target_frames must be >= 1")
    n, f_ssl = raw_ssl.shape
    if f_ssl == target_frames:
        return raw_ssl.copy()
    src = np.arange(f_ssl, dtype=np.float64)
    query = np.linspace(0.0, f_ssl - 1.0, target_frames)
    out = np.empty((n, target_frames), dtype=raw_ssl.dtype)
    for row in range(n):
        out[row] = np.interp(query, src, raw_ssl[row].astype(np.float64)).astype(raw_ssl.dtype)
    return out
