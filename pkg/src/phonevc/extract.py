"""Single-step feature extraction: audio in, aligned feature bundle out.

For each manifest entry the pipeline reads audio, trims it to the frame grid,
runs the ASR / aligner / text-embedding / SSL providers, repairs small
duration-sum deviations, resamples SSL features to the spectrogram grid,
computes spectrograms, and validates the assembled bundle before it is
persisted.  Utterances are independent, so corpus extraction can fan out to
worker threads (the bundled stubs are stateless and thread-safe).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import torch

from . import audio as audio_mod
from .config import DspConfig
from .features import AlignmentError, UtteranceFeatures, repair_durations, resample_ssl, validate_alignment, wframe_from
from .providers import ExtractorProviderSet
from .store import CorpusManifest, CorpusVocabs, FeatureStore, ManifestEntry, Vocabulary, dsp_to_meta


class ExtractionError(RuntimeError):
    """Raised when an utterance cannot be turned into a valid feature bundle."""


@dataclass
class RawExtraction:
    """Provider outputs for one utterance, before vocabulary encoding."""

    utterance_id: str
    speaker: str
    words: list[str]
    phonemes: list[str]
    tones: np.ndarray
    w2p: np.ndarray
    pframe: np.ndarray
    wframe: np.ndarray
    words_bert: np.ndarray
    contentvec: np.ndarray
    linear_spec: np.ndarray
    mel_spec: np.ndarray
    audio: np.ndarray


def extract_raw(
    entry: ManifestEntry,
    providers: ExtractorProviderSet,
    dsp: DspConfig,
    repair_budget: int = 3,
) -> RawExtraction:
    uid = entry.utterance_id
    try:
        samples, _ = audio_mod.read_wav(entry.audio_path, expected_rate=dsp.sample_rate)
    except audio_mod.AudioError as exc:
        raise ExtractionError(f"{uid}: {exc}") from exc
    samples = audio_mod.trim_to_frames(samples, dsp)
    n_frames = dsp.frame_count(len(samples))

    asr = providers.asr(samples, uid)
    if not (len(asr.words) == len(asr.tones) == len(asr.phoneme_groups)):
        raise ExtractionError(
            f"{uid}: ASR output mismatch: {len(asr.words)} words, "
            f"{len(asr.tones)} tones, {len(asr.phoneme_groups)} phoneme groups"
        )
    phonemes = asr.phonemes
    w2p = asr.w2p
    if w2p.size == 0 or w2p.min() < 1:
        raise ExtractionError(f"{uid}: ASR produced a word with no phonemes")

    pframe, _ = providers.aligner(samples, asr.words, phonemes, w2p, uid)
    pframe = np.asarray(pframe, dtype=np.int64)
    if len(pframe) != len(phonemes):
        raise ExtractionError(
            f"{uid}: aligner returned {len(pframe)} durations for {len(phonemes)} phonemes"
        )
    try:
        pframe = repair_durations(pframe, n_frames, budget=repair_budget)
    except AlignmentError as exc:
        raise ExtractionError(f"{uid}: {exc}") from exc
    wframe = wframe_from(pframe, w2p)

    words_bert = np.asarray(providers.bert(asr.words, uid), dtype=np.float32)
    if words_bert.shape[1] != len(asr.words):
        raise ExtractionError(
            f"{uid}: text embeddings cover {words_bert.shape[1]} words, expected {len(asr.words)}"
        )
    raw_ssl = np.asarray(providers.ssl(samples, uid), dtype=np.float32)
    contentvec = resample_ssl(raw_ssl, n_frames)

    with torch.no_grad():
        audio_t = torch.from_numpy(samples.astype(np.float32))
        linear = audio_mod.linear_spectrogram(audio_t, dsp)
        mel = audio_mod.mel_from_linear(linear, dsp)

    return RawExtraction(
        utterance_id=uid,
        speaker=entry.speaker,
        words=asr.words,
        phonemes=phonemes,
        tones=np.asarray(asr.tones, dtype=np.int64),
        w2p=w2p,
        pframe=pframe,
        wframe=wframe,
        words_bert=words_bert,
        contentvec=contentvec,
        linear_spec=linear.numpy().astype(np.float32),
        mel_spec=mel.numpy().astype(np.float32),
        audio=samples.astype(np.float32),
    )


def encode_raw(raw: RawExtraction, vocabs: CorpusVocabs) -> UtteranceFeatures:
    features = UtteranceFeatures(
        utterance_id=raw.utterance_id,
        words=vocabs.words.encode(raw.words),
        phonemes=vocabs.phonemes.encode(raw.phonemes),
        tones=raw.tones,
        words_bert=raw.words_bert,
        pframe=raw.pframe,
        wframe=raw.wframe,
        w2p=raw.w2p,
        speaker=int(vocabs.speakers.encode([raw.speaker])[0]),
        contentvec=raw.contentvec,
        linear_spec=raw.linear_spec,
        mel_spec=raw.mel_spec,
        audio=raw.audio,
        word_tokens=list(raw.words),
        phoneme_tokens=list(raw.phonemes),
    )
    violations = validate_alignment(features)
    if violations:
        raise ExtractionError(f"{raw.utterance_id}: " + "; ".join(violations))
    return features


def extract_features(
    entry: ManifestEntry,
    providers: ExtractorProviderSet,
    dsp: DspConfig,
    vocabs: CorpusVocabs | None = None,
    store: FeatureStore | None = None,
    repair_budget: int = 3,
) -> UtteranceFeatures:
    """Extract one utterance; without shared vocabularies a local one is built."""
    raw = extract_raw(entry, providers, dsp, repair_budget=repair_budget)
    if vocabs is None:
        vocabs = CorpusVocabs(
            words=Vocabulary.build(set(raw.words)),
            phonemes=Vocabulary.build(set(raw.phonemes)),
            speakers=Vocabulary.build({raw.speaker}),
        )
    features = encode_raw(raw, vocabs)
    if store is not None:
        store.write(features, raw.speaker)
    return features


def preprocess_corpus(
    manifest: CorpusManifest,
    providers: ExtractorProviderSet,
    dsp: DspConfig,
    out_root,
    seed: int | None = None,
    workers: int = 1,
    repair_budget: int = 3,
) -> FeatureStore:
    """Extract every manifest entry, build vocabularies, and fill a store."""
    if not manifest.entries:
        raise ExtractionError("manifest is empty")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            raws = list(
                pool.map(lambda e: extract_raw(e, providers, dsp, repair_budget), manifest.entries)
            )
    else:
        raws = [extract_raw(e, providers, dsp, repair_budget) for e in manifest.entries]

    vocabs = CorpusVocabs(
        words=Vocabulary.build({w for r in raws for w in r.words}),
        phonemes=Vocabulary.build({p for r in raws for p in r.phonemes}),
        speakers=Vocabulary.build({r.speaker for r in raws}),
    )

    store = FeatureStore(out_root, create=True)
    index = []
    for raw in raws:
        features = encode_raw(raw, vocabs)
        store.write(features, raw.speaker)
        index.append(
            {
                "id": raw.utterance_id,
                "speaker": raw.speaker,
                "speaker_id": int(features.speaker),
                "n_frames": int(features.n_frames),
                "n_phonemes": int(features.n_phonemes),
                "n_words": int(features.n_words),
            }
        )
    store.save_vocabs(vocabs)
    store.save_meta(
        {
            "version": 1,
            "dsp": dsp_to_meta(dsp),
            "provider": providers.name,
            "seed": seed,
            "bert_dim": int(raws[0].words_bert.shape[0]),
            "ssl_dim": int(raws[0].contentvec.shape[0]),
            "n_tones": int(max(int(r.tones.max()) for r in raws) + 1),
            "utterances": index,
        }
    )
    return store
