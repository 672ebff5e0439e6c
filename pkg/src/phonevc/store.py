"""On-disk corpus layout: manifests, vocabularies, and the feature store.

Feature store layout: one directory per utterance under the store root, each
tensor in a flat binary file (small self-describing header, then raw C-order
data, so files are memory-mappable), plus a ``meta.json`` sidecar.  The root
also holds ``corpus.json`` (DSP settings, dimensions, utterance index),
``vocab_words.txt`` / ``vocab_phonemes.txt`` (token-per-line with integer
IDs), and ``speakers.txt``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import DspConfig
from .features import UtteranceFeatures

MAGIC = b"PVN1"
_DTYPE_CODES = {np.dtype("float32"): 1, np.dtype("float64"): 2, np.dtype("int64"): 3}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}

UNK_TOKEN = "<unk>"


class StoreError(RuntimeError):
    """Raised for malformed manifests, tensors, or store directories."""


# -- flat binary tensors ----------------------------------------------------


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array)
    code = _DTYPE_CODES.get(array.dtype)
    if code is None:
        raise StoreError(f"unsupported dtype {array.dtype} for {path}")
    header = MAGIC + struct.pack("<BB2x", code, array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(array.tobytes())


def read_tensor(path: str | Path, mmap: bool = False) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) < 8 or head[:4] != MAGIC:
            raise StoreError(f"{path} is not a feature tensor file")
        code, ndim = struct.unpack("<BB2x", head[4:8])
        dtype = _CODE_DTYPES.get(code)
        if dtype is None:
            raise StoreError(f"{path}: unknown dtype code {code}")
        shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
        offset = fh.tell()
    if mmap:
        return np.memmap(path, dtype=dtype, mode="r", offset=offset, shape=shape)
    data = np.fromfile(path, dtype=dtype, offset=offset)
    expected = int(np.prod(shape)) if shape else 1
    if data.size != expected:
        raise StoreError(f"{path}: payload has {data.size} elements, header says {expected}")
    return data.reshape(shape)


# -- manifests ----------------------------------------------------------------


@dataclass
class ManifestEntry:
    utterance_id: str
    audio_path: str
    speaker: str
    transcript: str | None = None


@dataclass
class CorpusManifest:
    entries: list[ManifestEntry]
    sample_rate: int = 44100
    hop_length: int = 512
    fft_size: int = 2048

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for entry in self.entries:
            if entry.utterance_id in seen:
                raise StoreError(f"duplicate utterance_id {entry.utterance_id!r} in manifest")
            seen.add(entry.utterance_id)

    @property
    def speakers(self) -> list[str]:
        return sorted({e.speaker for e in self.entries})


def parse_manifest(
    path: str | Path, sample_rate: int = 44100, hop_length: int = 512, fft_size: int = 2048
) -> CorpusManifest:
    """Parse ``utterance_id|audio_path|speaker|transcript?`` lines (UTF-8)."""
    entries = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = [p.strip() for p in line.split("|")]
        if len(parts) not in (3, 4):
            raise StoreError(
                f"{path}:{lineno}: expected 'id|audio|speaker[|transcript]', got {line!r}"
            )
        entries.append(
            ManifestEntry(
                utterance_id=parts[0],
                audio_path=parts[1],
                speaker=parts[2],
                transcript=parts[3] if len(parts) == 4 else None,
            )
        )
    return CorpusManifest(entries, sample_rate=sample_rate, hop_length=hop_length, fft_size=fft_size)


def write_manifest(manifest: CorpusManifest, path: str | Path) -> None:
    lines = []
    for e in manifest.entries:
        fields = [e.utterance_id, e.audio_path, e.speaker]
        if e.transcript is not None:
            fields.append(e.transcript)
        lines.append("|".join(fields))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- vocabularies -------------------------------------------------------------


@dataclass
class Vocabulary:
    """Token -> integer ID map; ID 0 is reserved for unknown tokens."""

    tokens: list[str]
    index: dict[str, int] = field(init=False)

    def __post_init__(self) -> None:
        self.index = {tok: i for i, tok in enumerate(self.tokens)}

    @classmethod
    def build(cls, observed: set[str]) -> "Vocabulary":
        return cls([UNK_TOKEN] + sorted(observed - {UNK_TOKEN}))

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, tokens) -> np.ndarray:
        return np.array([self.index.get(t, 0) for t in tokens], dtype=np.int64)

    def save(self, path: str | Path) -> None:
        lines = [f"{tok}\t{i}" for i, tok in enumerate(self.tokens)]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        tokens = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            tok, _, idx = line.partition("\t")
            if int(idx) != len(tokens):
                raise StoreError(f"{path}: non-contiguous IDs at token {tok!r}")
            tokens.append(tok)
        return cls(tokens)


@dataclass
class CorpusVocabs:
    words: Vocabulary
    phonemes: Vocabulary
    speakers: Vocabulary


# -- the feature store --------------------------------------------------------

_FLOAT_FEATURES = ("words_bert", "contentvec", "linear_spec", "mel_spec", "audio")
_INT_FEATURES = ("words", "phonemes", "tones", "pframe", "wframe", "w2p")


class FeatureStore:
    """Reads and writes per-utterance feature directories under one root."""

    def __init__(self, root: str | Path, create: bool = False):
        self.root = Path(root)
        if create:
            self.root.mkdir(parents=True, exist_ok=True)
        elif not self.root.is_dir():
            raise StoreError(f"feature store root {self.root} does not exist")

    # corpus-level metadata

    def save_meta(self, meta: dict) -> None:
        (self.root / "corpus.json").write_text(
            json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    def load_meta(self) -> dict:
        path = self.root / "corpus.json"
        if not path.is_file():
            raise StoreError(f"{self.root} has no corpus.json; run preprocessing first")
        return json.loads(path.read_text(encoding="utf-8"))

    def save_vocabs(self, vocabs: CorpusVocabs) -> None:
        vocabs.words.save(self.root / "vocab_words.txt")
        vocabs.phonemes.save(self.root / "vocab_phonemes.txt")
        vocabs.speakers.save(self.root / "speakers.txt")

    def load_vocabs(self) -> CorpusVocabs:
        return CorpusVocabs(
            words=Vocabulary.load(self.root / "vocab_words.txt"),
            phonemes=Vocabulary.load(self.root / "vocab_phonemes.txt"),
            speakers=Vocabulary.load(self.root / "speakers.txt"),
        )

    # per-utterance data

    def utterance_ids(self) -> list[str]:
        return sorted(
            p.name for p in self.root.iterdir() if p.is_dir() and (p / "meta.json").is_file()
        )

    def write(self, features: UtteranceFeatures, speaker_name: str) -> None:
        udir = self.root / features.utterance_id
        udir.mkdir(parents=True, exist_ok=True)
        for name in _INT_FEATURES:
            write_tensor(udir / f"{name}.bin", getattr(features, name).astype(np.int64))
        for name in _FLOAT_FEATURES:
            write_tensor(udir / f"{name}.bin", getattr(features, name).astype(np.float32))
        meta = {
            "utterance_id": features.utterance_id,
            "speaker": speaker_name,
            "speaker_id": int(features.speaker),
            "n_frames": int(features.n_frames),
            "n_phonemes": int(features.n_phonemes),
            "n_words": int(features.n_words),
            "word_tokens": features.word_tokens,
            "phoneme_tokens": features.phoneme_tokens,
        }
        (udir / "meta.json").write_text(
            json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    def read(self, utterance_id: str, mmap: bool = False) -> UtteranceFeatures:
        udir = self.root / utterance_id
        meta_path = udir / "meta.json"
        if not meta_path.is_file():
            raise StoreError(f"utterance {utterance_id!r} not found under {self.root}")
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        arrays = {
            name: read_tensor(udir / f"{name}.bin", mmap=mmap)
            for name in _INT_FEATURES + _FLOAT_FEATURES
        }
        return UtteranceFeatures(
            utterance_id=utterance_id,
            speaker=int(meta["speaker_id"]),
            word_tokens=list(meta.get("word_tokens", [])),
            phoneme_tokens=list(meta.get("phoneme_tokens", [])),
            **arrays,
        )

    def speaker_of(self, utterance_id: str) -> str:
        meta = json.loads((self.root / utterance_id / "meta.json").read_text(encoding="utf-8"))
        return meta["speaker"]


def dsp_from_meta(meta: dict) -> DspConfig:
    return DspConfig(**meta["dsp"])


def dsp_to_meta(dsp: DspConfig) -> dict:
    return {
        "sample_rate": dsp.sample_rate,
        "fft_size": dsp.fft_size,
        "hop_length": dsp.hop_length,
        "win_length": dsp.win_length,
        "n_mels": dsp.n_mels,
        "mel_fmin": dsp.mel_fmin,
        "mel_fmax": dsp.mel_fmax,
    }
