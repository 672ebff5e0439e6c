"""Full conversion model: encoders, CVAE prior/posterior, flow, generator."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
import torch.nn as nn

from ..config import Config
from .common import init_conv_weights, sequence_mask
from .flow import SpeakerFlow
from .posterior import LatentPosterior, PosteriorEncoder
from .prior import (
    DurationPredictor,
    MelAuxiliary,
    PriorProjection,
    PriorState,
    SpeakerConditionedEncoder,
    durations_from_log,
    length_regulate,
    log_durations,
)
from .ssl import SslEncoder, SslEncoding
from .text import TextEncoder, TextEncoding
from .vocoder import Generator


@dataclass
class CorpusDims:
    """Vocabulary and feature dimensions the model is sized for."""

    n_words: int
    n_phonemes: int
    n_tones: int
    n_speakers: int
    bert_dim: int
    ssl_dim: int
    n_linear: int
    n_mels: int

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "CorpusDims":
        return cls(**data)


@dataclass
class TrainingOutputs:
    text: TextEncoding
    ssl: SslEncoding
    prior: PriorState
    posterior: LatentPosterior
    logw_true: torch.Tensor
    z_for_kl: torch.Tensor  # posterior z, flow-transported when the flow is on
    frame_mask: torch.Tensor
    phoneme_mask: torch.Tensor
    spk: torch.Tensor


class VoiceConversionModel(nn.Module):
    def __init__(self, cfg: Config, dims: CorpusDims):
        super().__init__()
        cfg.validate()
        if cfg.ssl.input_dim != dims.ssl_dim:
            raise ValueError(
                f"ssl.input_dim {cfg.ssl.input_dim} != corpus SSL dim {dims.ssl_dim}"
            )
        if cfg.text.bert_dim != dims.bert_dim:
            raise ValueError(
                f"text.bert_dim {cfg.text.bert_dim} != corpus embedding dim {dims.bert_dim}"
            )
        self.cfg = cfg
        self.dims = dims
        h = cfg.prior.hidden_dim
        spk_dim = cfg.model.speaker_dim
        self.speaker_emb = nn.Embedding(dims.n_speakers, spk_dim)
        self.text_encoder = TextEncoder(cfg.text, dims.n_words, dims.n_phonemes, dims.n_tones)
        self.ssl_encoder = SslEncoder(cfg.ssl)
        self.prior_encoder = SpeakerConditionedEncoder(cfg.prior, spk_dim)
        self.mel_aux = MelAuxiliary(h, dims.n_mels, spk_dim)
        self.duration_predictor = DurationPredictor(h, cfg.dur, spk_dim)
        self.prior_proj = PriorProjection(h, cfg.prior.logsigma_clamp)
        self.posterior = PosteriorEncoder(dims.n_linear, h, cfg.posterior, spk_dim)
        self.flow = SpeakerFlow(h, cfg.flow, spk_dim) if cfg.model.use_flow else None
        self.generator = Generator(h, cfg.vocoder, spk_dim)
        self.generator.ups.apply(init_conv_weights)

    def embed_speaker(self, speaker: torch.Tensor) -> torch.Tensor:
        if speaker.numel() and (speaker.min() < 0 or speaker.max() >= self.dims.n_speakers):
            raise ValueError(
                f"speaker ID out of range [0, {self.dims.n_speakers}): {speaker.tolist()}"
            )
        return self.speaker_emb(speaker)

    def _prior_path(
        self,
        text: TextEncoding,
        ssl: SslEncoding,
        spk: torch.Tensor,
        durations: torch.Tensor,
    ) -> PriorState:
        c, x_d = self.prior_encoder(text.c_text, ssl.c_ssl, spk, text.phoneme_mask)
        x_f, frame_lengths = length_regulate(x_d, durations)
        frame_mask = sequence_mask(frame_lengths, x_f.size(2))
        mel_hat, x = self.mel_aux(x_f, spk, frame_mask)
        prior_mu, prior_logsigma = self.prior_proj(x, frame_mask)
        logw_pred = self.duration_predictor(x_d, spk, text.phoneme_mask)
        return PriorState(
            c=c,
            x_d=x_d,
            x_f=x_f,
            mel_hat=mel_hat,
            x=x,
            prior_mu=prior_mu,
            prior_logsigma=prior_logsigma,
            frame_lengths=frame_lengths,
            logw_pred=logw_pred,
        )

    def forward_training(self, batch, noise: torch.Tensor | None = None) -> TrainingOutputs:
        """Run the full prior and posterior paths with ground-truth durations."""
        spk = self.embed_speaker(batch.speaker)
        text = self.text_encoder(
            batch.words,
            batch.tones,
            batch.words_bert,
            batch.phonemes,
            batch.w2p,
            batch.word_lengths,
            batch.phoneme_lengths,
        )
        ssl = self.ssl_encoder(text.c_text, batch.contentvec, batch.pframe)
        prior = self._prior_path(text, ssl, spk, batch.pframe)
        if not torch.equal(prior.frame_lengths, batch.frame_lengths):
            raise ValueError(
                "prior frame lengths do not match the spectrogram frame lengths: "
                f"{prior.frame_lengths.tolist()} vs {batch.frame_lengths.tolist()}"
            )
        frame_mask = sequence_mask(batch.frame_lengths, batch.linear_spec.size(2))
        posterior = self.posterior(batch.linear_spec, spk, frame_mask, noise=noise)
        z_for_kl = (
            self.flow(posterior.z, spk, frame_mask, "forward")
            if self.flow is not None
            else posterior.z
        )
        logw_true = log_durations(batch.pframe, text.phoneme_mask, dtype=prior.logw_pred.dtype)
        return TrainingOutputs(
            text=text,
            ssl=ssl,
            prior=prior,
            posterior=posterior,
            logw_true=logw_true,
            z_for_kl=z_for_kl,
            frame_mask=frame_mask,
            phoneme_mask=text.phoneme_mask,
            spk=spk,
        )

    @torch.no_grad()
    def convert(
        self,
        batch,
        target_speaker: int,
        repredict: bool = False,
        pace: float = 1.0,
        noise_scale: float | None = None,
        generator: torch.Generator | None = None,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Convert a single-utterance batch to the target speaker.

        Returns the waveform (T,) and the per-phoneme durations actually used
        for frame expansion.  With ``repredict`` off, the source durations are
        reused verbatim, so the output frame count equals the source's.
        """
        if batch.speaker.numel() != 1:
            raise ValueError("conversion expects a single-utterance batch")
        if noise_scale is None:
            noise_scale = self.cfg.model.noise_scale
        device = batch.contentvec.device
        spk = self.embed_speaker(torch.tensor([target_speaker], device=device))
        text = self.text_encoder(
            batch.words,
            batch.tones,
            batch.words_bert,
            batch.phonemes,
            batch.w2p,
            batch.word_lengths,
            batch.phoneme_lengths,
        )
        # SSL features are aligned to the source frame grid, so pooling always
        # uses the source durations; re-prediction only changes the expansion.
        ssl = self.ssl_encoder(text.c_text, batch.contentvec, batch.pframe)
        c, x_d = self.prior_encoder(text.c_text, ssl.c_ssl, spk, text.phoneme_mask)
        if repredict:
            logw = self.duration_predictor(x_d, spk, text.phoneme_mask)
            durations = durations_from_log(logw, pace) * batch.pframe.gt(0).long()
        else:
            durations = batch.pframe
        x_f, frame_lengths = length_regulate(x_d, durations)
        frame_mask = sequence_mask(frame_lengths, x_f.size(2))
        _, x = self.mel_aux(x_f, spk, frame_mask)
        mu, logsigma = self.prior_proj(x, frame_mask)
        eps = torch.randn(mu.shape, generator=generator, device=device, dtype=mu.dtype)
        z = mu + eps * torch.exp(logsigma) * noise_scale
        if self.flow is not None:
            z = self.flow(z, spk, frame_mask, "inverse")
        audio = self.generator(z, spk)
        return audio.squeeze(0).squeeze(0), durations.squeeze(0)


def build_model(cfg: Config, dims: CorpusDims) -> VoiceConversionModel:
    return VoiceConversionModel(cfg, dims)
