"""Training loop: CVAE + adversarial updates, logging, checkpointing.

Each step runs one discriminator update followed by one generator update on a
deterministically sampled batch.  All per-step randomness (batch choice,
waveform segment offsets, posterior noise, dropout) is derived from
``(seed, step)``, so a run is bit-reproducible on the same platform and a
resumed run continues the exact loss sequence.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import audio as audio_mod
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import Config
from .data import Batch, FeatureDataset, derive_seed, slice_columns, slice_samples
from .losses import (
    LossReport,
    discriminator_adv_loss,
    duration_loss,
    feature_matching_loss,
    generator_adv_loss,
    kl_divergence,
    kl_sampled,
    l1_loss,
)
from .nn.model import CorpusDims, VoiceConversionModel
from .nn.vocoder import DiscriminatorBank
from .store import FeatureStore, dsp_from_meta


class NonFiniteLossError(RuntimeError):
    """Raised when a loss term stops being finite; names the first offender."""


@dataclass
class TrainState:
    model: VoiceConversionModel
    disc: DiscriminatorBank
    opt_g: torch.optim.Optimizer
    opt_d: torch.optim.Optimizer
    step: int = 0


def build_train_state(cfg: Config, dims: CorpusDims) -> TrainState:
    """Seeded construction of model, discriminators, and optimizers."""
    torch.manual_seed(derive_seed(cfg.train.seed, 0, "init"))
    model = VoiceConversionModel(cfg, dims)
    disc = DiscriminatorBank(cfg.vocoder)
    opt_g = torch.optim.AdamW(
        model.parameters(), lr=cfg.train.lr_g, betas=(cfg.train.beta1, cfg.train.beta2)
    )
    opt_d = torch.optim.AdamW(
        disc.parameters(), lr=cfg.train.lr_d, betas=(cfg.train.beta1, cfg.train.beta2)
    )
    return TrainState(model=model, disc=disc, opt_g=opt_g, opt_d=opt_d)


def _check_finite(named_losses: dict[str, torch.Tensor]) -> None:
    for name, value in named_losses.items():
        if not torch.isfinite(value).all():
            raise NonFiniteLossError(
                f"loss term {name!r} became non-finite ({float(value)}); aborting"
            )


def train_step(state: TrainState, batch: Batch, cfg: Config, step: int) -> LossReport:
    """One discriminator update then one generator update; returns the losses."""
    model, disc = state.model, state.disc
    model.train()
    disc.train()
    tr = cfg.train
    torch.manual_seed(derive_seed(tr.seed, step, "torch"))
    seg_rng = np.random.default_rng(derive_seed(tr.seed, step, "segment"))

    seg = tr.segment_frames
    if int(batch.frame_lengths.min()) < seg:
        raise ValueError(
            f"segment window of {seg} frames does not fit the shortest utterance "
            f"({int(batch.frame_lengths.min())} frames) in the batch"
        )

    outs = model.forward_training(batch)
    if model.flow is not None:
        l_kl = kl_sampled(
            outs.z_for_kl,
            outs.posterior.post_logsigma,
            outs.prior.prior_mu,
            outs.prior.prior_logsigma,
            mask=outs.frame_mask,
        )
    else:
        l_kl = kl_divergence(
            outs.posterior.post_mu,
            outs.posterior.post_logsigma,
            outs.prior.prior_mu,
            outs.prior.prior_logsigma,
            mask=outs.frame_mask,
        )
    l_dur = duration_loss(outs.prior.logw_pred, outs.logw_true, mask=outs.phoneme_mask)
    l_melpre = l1_loss(outs.prior.mel_hat, batch.mel_spec, mask=outs.frame_mask)

    starts = torch.as_tensor(
        seg_rng.integers(0, batch.frame_lengths.numpy() - seg + 1), dtype=torch.int64
    )
    hop = cfg.dsp.hop_length
    z_seg = slice_columns(outs.posterior.z, starts, seg)
    audio_real = slice_samples(batch.audio, starts * hop, seg * hop).unsqueeze(1)
    audio_fake = model.generator(z_seg, outs.spk)
    mel_fake = audio_mod.mel_spectrogram(audio_fake.squeeze(1), cfg.dsp)
    mel_real = slice_columns(batch.mel_spec, starts, seg)
    l_rec = l1_loss(mel_fake, mel_real) * tr.mel_scale

    # Discriminator update on the detached waveform.
    d_out = disc(audio_real, audio_fake.detach())
    l_d = discriminator_adv_loss(d_out)
    _check_finite({"l_d": l_d})
    state.opt_d.zero_grad()
    l_d.backward()
    state.opt_d.step()

    # Generator update, re-scoring against the freshly updated discriminator.
    g_out = disc(audio_real, audio_fake)
    l_adv = generator_adv_loss(g_out.scores_fake)
    l_fm = feature_matching_loss(g_out.fmaps_real, g_out.fmaps_fake)
    l_g = tr.weight_adv * l_adv + tr.fm_weight * l_fm

    l_rec_w = tr.weight_rec * l_rec
    l_melpre_w = tr.weight_melpre * l_melpre
    l_kl_w = tr.weight_kl * l_kl
    l_dur_w = tr.weight_dur * l_dur
    named = {
        "l_rec": l_rec_w,
        "l_melpre": l_melpre_w,
        "l_kl": l_kl_w,
        "l_dur": l_dur_w,
        "l_g": l_g,
    }
    _check_finite(named)
    total_g = l_rec_w + l_melpre_w + l_kl_w + l_dur_w + l_g
    state.opt_g.zero_grad()
    total_g.backward()
    state.opt_g.step()

    vals = {
        name: float(value.detach())
        for name, value in [*named.items(), ("l_d", l_d)]
    }
    report = LossReport(
        l_rec=vals["l_rec"],
        l_melpre=vals["l_melpre"],
        l_kl=vals["l_kl"],
        l_dur=vals["l_dur"],
        l_g=vals["l_g"],
        l_d=vals["l_d"],
        total_g=vals["l_rec"] + vals["l_melpre"] + vals["l_kl"] + vals["l_dur"] + vals["l_g"],
    )
    report.validate()
    return report


def dims_from_store(store: FeatureStore, cfg: Config) -> CorpusDims:
    meta = store.load_meta()
    vocabs = store.load_vocabs()
    return CorpusDims(
        n_words=len(vocabs.words),
        n_phonemes=len(vocabs.phonemes),
        n_tones=int(meta["n_tones"]),
        n_speakers=len(vocabs.speakers),
        bert_dim=int(meta["bert_dim"]),
        ssl_dim=int(meta["ssl_dim"]),
        n_linear=cfg.dsp.n_linear,
        n_mels=cfg.dsp.n_mels,
    )


def train(
    store: FeatureStore,
    cfg: Config,
    out_dir: str | Path,
    resume_from: str | Path | None = None,
    log_every: int = 0,
) -> list[Path]:
    """Run the configured number of steps; returns checkpoint paths written."""
    cfg.validate()
    meta = store.load_meta()
    store_dsp = dsp_from_meta(meta)
    if (store_dsp.sample_rate, store_dsp.hop_length, store_dsp.fft_size) != (
        cfg.dsp.sample_rate,
        cfg.dsp.hop_length,
        cfg.dsp.fft_size,
    ):
        raise CheckpointError(
            "feature store DSP settings do not match the training config: "
            f"store={store_dsp}, config={cfg.dsp}"
        )
    dataset = FeatureDataset(store)
    dims = dims_from_store(store, cfg)
    vocabs = store.load_vocabs()
    vocab_data = {
        "words": vocabs.words.tokens,
        "phonemes": vocabs.phonemes.tokens,
        "speakers": vocabs.speakers.tokens,
    }

    shortest = min(f["n_frames"] for f in meta["utterances"])
    if shortest < cfg.train.segment_frames:
        raise ValueError(
            f"segment window of {cfg.train.segment_frames} frames does not fit the "
            f"shortest corpus utterance ({shortest} frames)"
        )

    state = build_train_state(cfg, dims)
    start_step = 0
    if resume_from is not None:
        if str(resume_from) == "auto":
            candidates = sorted(Path(out_dir).glob("checkpoint_*.pt"))
            if not candidates:
                raise CheckpointError(f"no checkpoints to resume from in {out_dir}")
            resume_from = candidates[-1]
        payload = load_checkpoint(resume_from)
        state.model.load_state_dict(payload["model"])
        state.disc.load_state_dict(payload["disc"])
        state.opt_g.load_state_dict(payload["opt_g"])
        state.opt_d.load_state_dict(payload["opt_d"])
        start_step = int(payload["step"])

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "loss_log.jsonl"
    log_mode = "a" if start_step else "w"

    written: list[Path] = []
    t0 = time.monotonic()
    with open(log_path, log_mode, encoding="utf-8") as log:
        for step in range(start_step + 1, cfg.train.total_steps + 1):
            batch = dataset.sample_batch(cfg.train.seed, step, cfg.train.batch_size)
            report = train_step(state, batch, cfg, step)
            state.step = step
            log.write(report.to_record(step, time.monotonic() - t0) + "\n")
            if log_every and step % log_every == 0:
                print(f"step {step}: total_g={report.total_g:.4f} l_d={report.l_d:.4f}")
            if step % cfg.train.checkpoint_interval == 0:
                path = out_dir / f"checkpoint_{step:08d}.pt"
                save_checkpoint(
                    path,
                    step,
                    state.model,
                    state.disc,
                    state.opt_g,
                    state.opt_d,
                    cfg,
                    dims,
                    vocab_data,
                    meta["dsp"],
                )
                written.append(path)
    return written


def read_loss_log(path: str | Path) -> list[tuple[int, LossReport]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [LossReport.from_record(line) for line in lines if line.strip()]
