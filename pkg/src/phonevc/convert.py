"""End-to-end conversion: source audio to target-speaker audio.

Content features (words, phonemes, tones, text embeddings, SSL) come from the
source audio; only the speaker identity switches to the target.  With
duration re-prediction off, the source per-phoneme durations are reused
verbatim, so the output has exactly the source's frame count; with it on,
durations come from the predictor under the configured pace.

Duration records are written as profile files (``utterance_id`` followed by
whitespace-separated durations, one utterance per line) for the evaluation
tooling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import audio as audio_mod
from .checkpoint import config_from_checkpoint, load_checkpoint
from .config import Config, DspConfig
from .data import collate, derive_seed
from .extract import extract_features
from .nn.model import CorpusDims, VoiceConversionModel
from .providers import ExtractorProviderSet, build_provider_set
from .store import CorpusManifest, CorpusVocabs, ManifestEntry, Vocabulary, dsp_from_meta


class ConversionError(RuntimeError):
    """Raised for unknown speakers or unusable checkpoints."""


@dataclass
class LoadedModel:
    model: VoiceConversionModel
    cfg: Config
    dims: CorpusDims
    vocabs: CorpusVocabs
    dsp: DspConfig

    def speaker_id(self, speaker: str | int) -> int:
        if isinstance(speaker, int) or str(speaker).isdigit():
            sid = int(speaker)
            if not 0 <= sid < self.dims.n_speakers:
                raise ConversionError(
                    f"speaker ID {sid} out of range [0, {self.dims.n_speakers})"
                )
            return sid
        idx = self.vocabs.speakers.index.get(str(speaker))
        if idx is None or idx == 0:  # 0 is the reserved unknown slot
            known = [t for t in self.vocabs.speakers.tokens[1:]]
            raise ConversionError(f"unknown speaker {speaker!r}; trained speakers: {known}")
        return idx


def load_model(ckpt_path: str | Path) -> LoadedModel:
    payload = load_checkpoint(ckpt_path)
    cfg = config_from_checkpoint(payload)
    dims = CorpusDims.from_dict(payload["dims"])
    model = VoiceConversionModel(cfg, dims)
    model.load_state_dict(payload["model"])
    model.eval()
    vocabs = CorpusVocabs(
        words=Vocabulary(payload["vocabs"]["words"]),
        phonemes=Vocabulary(payload["vocabs"]["phonemes"]),
        speakers=Vocabulary(payload["vocabs"]["speakers"]),
    )
    dsp = dsp_from_meta({"dsp": payload["dsp"]})
    return LoadedModel(model=model, cfg=cfg, dims=dims, vocabs=vocabs, dsp=dsp)


@dataclass
class ConversionResult:
    utterance_id: str
    audio: np.ndarray
    source_durations: np.ndarray
    used_durations: np.ndarray
    target_speaker: str


def convert_utterance(
    loaded: LoadedModel,
    entry: ManifestEntry,
    providers: ExtractorProviderSet,
    target_speaker: str | int,
    repredict: bool = False,
    pace: float = 1.0,
    seed: int = 0,
    noise_scale: float | None = None,
) -> ConversionResult:
    """Extract source features and synthesize the target-speaker waveform."""
    sid = loaded.speaker_id(target_speaker)
    features = extract_features(entry, providers, loaded.dsp, vocabs=loaded.vocabs)
    batch = collate([features])
    gen = torch.Generator().manual_seed(derive_seed(seed, 0, f"convert:{entry.utterance_id}"))
    audio, used = loaded.model.convert(
        batch,
        sid,
        repredict=repredict,
        pace=pace,
        noise_scale=noise_scale,
        generator=gen,
    )
    return ConversionResult(
        utterance_id=entry.utterance_id,
        audio=audio.numpy(),
        source_durations=features.pframe.copy(),
        used_durations=used.numpy(),
        target_speaker=str(target_speaker),
    )


def convert_file(
    src_audio: str | Path,
    target_speaker: str | int,
    ckpt_path: str | Path,
    out_wav: str | Path,
    repredict: bool = False,
    pace: float = 1.0,
    seed: int = 0,
    providers: ExtractorProviderSet | None = None,
    provider_name: str = "stub",
) -> ConversionResult:
    """Single-file conversion; writes the WAV plus duration-record sidecars."""
    loaded = load_model(ckpt_path)
    if providers is None:
        providers = _default_providers(loaded, provider_name, seed)
    uid = Path(src_audio).stem
    entry = ManifestEntry(uid, str(src_audio), speaker="source")
    result = convert_utterance(
        loaded, entry, providers, target_speaker, repredict=repredict, pace=pace, seed=seed
    )
    out_wav = Path(out_wav)
    out_wav.parent.mkdir(parents=True, exist_ok=True)
    audio_mod.write_wav(out_wav, result.audio, loaded.dsp.sample_rate)
    _write_profile_line(out_wav.with_suffix(".source.dur"), uid, result.source_durations)
    _write_profile_line(out_wav.with_suffix(".used.dur"), uid, result.used_durations)
    return result


@dataclass
class BatchConversionSummary:
    results: list[ConversionResult] = field(default_factory=list)
    failures: list[tuple[str, str]] = field(default_factory=list)
    output_manifest: CorpusManifest | None = None


def batch_convert(
    manifest: CorpusManifest,
    target_speaker: str | int,
    ckpt_path: str | Path,
    out_dir: str | Path,
    repredict: bool = False,
    pace: float = 1.0,
    seed: int = 0,
    providers: ExtractorProviderSet | None = None,
    provider_name: str = "stub",
) -> BatchConversionSummary:
    """Convert every manifest entry; per-utterance failures do not stop the run.

    Writes one WAV per success, an output manifest, a failure list, and
    per-speaker duration profiles (``profiles_source/`` and
    ``profiles_used/``) for downstream duration-deviation evaluation.
    """
    loaded = load_model(ckpt_path)
    if providers is None:
        providers = _default_providers(loaded, provider_name, seed)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    summary = BatchConversionSummary()
    out_entries = []
    for entry in manifest.entries:
        try:
            result = convert_utterance(
                loaded, entry, providers, target_speaker, repredict=repredict, pace=pace, seed=seed
            )
        except Exception as exc:  # per-utterance isolation by design
            summary.failures.append((entry.utterance_id, str(exc)))
            continue
        wav_path = out_dir / f"{entry.utterance_id}.wav"
        audio_mod.write_wav(wav_path, result.audio, loaded.dsp.sample_rate)
        summary.results.append(result)
        out_entries.append(
            ManifestEntry(entry.utterance_id, str(wav_path), str(target_speaker))
        )

    speaker_name = str(target_speaker)
    for sub, key in (("profiles_source", "source_durations"), ("profiles_used", "used_durations")):
        profile_dir = out_dir / sub
        profile_dir.mkdir(exist_ok=True)
        lines = [
            _profile_line(r.utterance_id, getattr(r, key)) for r in summary.results
        ]
        (profile_dir / f"{speaker_name}.txt").write_text(
            "\n".join(lines) + ("\n" if lines else ""), encoding="utf-8"
        )

    summary.output_manifest = CorpusManifest(
        out_entries,
        sample_rate=loaded.dsp.sample_rate,
        hop_length=loaded.dsp.hop_length,
        fft_size=loaded.dsp.fft_size,
    )
    manifest_lines = [f"{e.utterance_id}|{e.audio_path}|{e.speaker}" for e in out_entries]
    (out_dir / "outputs.txt").write_text(
        "\n".join(manifest_lines) + ("\n" if manifest_lines else ""), encoding="utf-8"
    )
    if summary.failures:
        fail_lines = [f"{uid}|{msg}" for uid, msg in summary.failures]
        (out_dir / "failures.txt").write_text("\n".join(fail_lines) + "\n", encoding="utf-8")
    return summary


def _default_providers(loaded: LoadedModel, provider_name: str, seed: int) -> ExtractorProviderSet:
    return build_provider_set(
        provider_name,
        loaded.dsp,
        seed,
        bert_dim=loaded.dims.bert_dim,
        ssl_dim=loaded.dims.ssl_dim,
        ssl_frame_rate=loaded.cfg.ssl.frame_rate,
    )


def _profile_line(utterance_id: str, durations: np.ndarray) -> str:
    return utterance_id + " " + " ".join(str(int(d)) for d in durations)


def _write_profile_line(path: Path, utterance_id: str, durations: np.ndarray) -> None:
    path.write_text(_profile_line(utterance_id, durations) + "\n", encoding="utf-8")
