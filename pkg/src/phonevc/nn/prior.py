"""Prior side of the CVAE: phoneme encoder, frame expansion, mel auxiliary
path, duration predictor, and prior distribution parameters."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..config import DurConfig, PriorConfig
from .attention import SequenceEncoder
from .common import ChannelLayerNorm, repeat_columns


def length_regulate(
    x: torch.Tensor, durations: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """Expand phoneme columns to frame level by repetition.

    Column i appears ``durations[i]`` times consecutively.  ``x``: (C, d) or
    (B, C, d); ``durations`` matching, positive (zeros only as batch padding).
    Returns the frame-level tensor and per-item frame counts.
    """
    durations = torch.as_tensor(durations)
    strict = durations if durations.dim() == 1 else durations[durations != 0]
    if strict.numel() and strict.lt(1).any():
        raise ValueError("durations must be positive integers")
    return repeat_columns(x, durations)


def durations_from_log(logw: torch.Tensor, pace: float = 1.0) -> torch.Tensor:
    """Integer frame counts from predicted log durations.

    Rule: ``max(1, round(exp(logw) * pace))`` elementwise, with round half to
    even (the platform default).
    """
    if pace <= 0:
        raise ValueError("pace must be positive")
    return torch.round(torch.exp(logw) * pace).clamp(min=1).long()


class SpeakerConditionedEncoder(nn.Module):
    """Normalizes the summed text/SSL encodings and applies a speaker-aware
    self-attention stack; the speaker embedding is projected to the hidden
    width and added to every column before each block."""

    def __init__(self, cfg: PriorConfig, speaker_dim: int):
        super().__init__()
        self.norm = ChannelLayerNorm(cfg.hidden_dim)
        self.encoder = SequenceEncoder(
            cfg.hidden_dim,
            cfg.ffn_dim,
            cfg.n_heads,
            cfg.n_blocks,
            cfg.kernel_size,
            cfg.dropout,
            cond_dim=speaker_dim,
        )

    def forward(
        self,
        c_text: torch.Tensor,  # (B, H, d)
        c_ssl: torch.Tensor,  # (B, H, d)
        spk: torch.Tensor,  # (B, S)
        mask: torch.Tensor,  # (B, d)
    ) -> tuple[torch.Tensor, torch.Tensor]:
        if c_text.shape != c_ssl.shape:
            raise ValueError(
                f"shape mismatch: c_text {tuple(c_text.shape)} vs c_ssl {tuple(c_ssl.shape)}"
            )
        m = mask.unsqueeze(1).to(c_text.dtype)
        c = self.norm(c_text + c_ssl) * m
        x_d = self.encoder(c, mask, cond=spk)
        return c, x_d


class MelAuxiliary(nn.Module):
    """Predicts a mel spectrogram from the frame-level feature and injects it
    back through a prenet/postnet residual path."""

    def __init__(self, hidden_dim: int, n_mels: int, speaker_dim: int, kernel_size: int = 5):
        super().__init__()
        pad = kernel_size // 2
        self.spk_proj = nn.Conv1d(speaker_dim, hidden_dim, 1)
        self.predictor = nn.Sequential(
            nn.Conv1d(hidden_dim, hidden_dim, kernel_size, padding=pad),
            nn.ReLU(),
            nn.Conv1d(hidden_dim, hidden_dim, kernel_size, padding=pad),
            nn.ReLU(),
            nn.Conv1d(hidden_dim, n_mels, 1),
        )
        self.prenet = nn.Conv1d(n_mels, hidden_dim, kernel_size, padding=pad)
        self.post_conv1 = nn.Conv1d(hidden_dim, hidden_dim, kernel_size, padding=pad)
        self.post_norm = ChannelLayerNorm(hidden_dim)
        self.post_conv2 = nn.Conv1d(hidden_dim, hidden_dim, kernel_size, padding=pad)

    def postnet(self, y: torch.Tensor, m: torch.Tensor) -> torch.Tensor:
        # Residual form: zero-initializing post_conv2 makes this an identity.
        h = self.post_conv2(torch.relu(self.post_norm(self.post_conv1(y * m))) * m)
        return (y + h) * m

    def forward(
        self,
        x_f: torch.Tensor,  # (B, H, F)
        spk: torch.Tensor,  # (B, S)
        mask: torch.Tensor,  # (B, F)
    ) -> tuple[torch.Tensor, torch.Tensor]:
        m = mask.unsqueeze(1).to(x_f.dtype)
        h = x_f + self.spk_proj(spk.unsqueeze(-1))
        mel_hat = self.predictor(h * m) * m
        x = self.postnet(x_f + self.prenet(mel_hat * m) * m, m)
        return mel_hat, x


class DurationPredictor(nn.Module):
    """Per-phoneme log-duration regressor on the encoded phoneme features.

    Inputs are detached so duration gradients stay inside the predictor and do
    not reshape the prior encoder.
    """

    def __init__(self, in_dim: int, cfg: DurConfig, speaker_dim: int):
        super().__init__()
        pad = cfg.kernel_size // 2
        self.spk_proj = nn.Conv1d(speaker_dim, in_dim, 1)
        self.conv1 = nn.Conv1d(in_dim, cfg.hidden_dim, cfg.kernel_size, padding=pad)
        self.norm1 = ChannelLayerNorm(cfg.hidden_dim)
        self.conv2 = nn.Conv1d(cfg.hidden_dim, cfg.hidden_dim, cfg.kernel_size, padding=pad)
        self.norm2 = ChannelLayerNorm(cfg.hidden_dim)
        self.proj = nn.Conv1d(cfg.hidden_dim, 1, 1)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(
        self, x_d: torch.Tensor, spk: torch.Tensor, mask: torch.Tensor
    ) -> torch.Tensor:
        m = mask.unsqueeze(1).to(x_d.dtype)
        x = x_d.detach() + self.spk_proj(spk.detach().unsqueeze(-1))
        x = self.drop(self.norm1(torch.relu(self.conv1(x * m))))
        x = self.drop(self.norm2(torch.relu(self.conv2(x * m))))
        return (self.proj(x * m) * m).squeeze(1)


class PriorProjection(nn.Module):
    """Maps the frame-level prior feature to distribution parameters."""

    def __init__(self, hidden_dim: int, logsigma_clamp: float):
        super().__init__()
        self.proj = nn.Conv1d(hidden_dim, hidden_dim * 2, 1)
        self.logsigma_clamp = logsigma_clamp

    def forward(
        self, x: torch.Tensor, mask: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        m = mask.unsqueeze(1).to(x.dtype)
        mu, logsigma = self.proj(x).chunk(2, dim=1)
        c = self.logsigma_clamp
        return mu * m, logsigma.clamp(-c, c) * m


@dataclass
class PriorState:
    """Everything the prior path produces for one batch."""

    c: torch.Tensor  # (B, H, d) normalized text+SSL sum
    x_d: torch.Tensor  # (B, H, d) encoded phoneme feature
    x_f: torch.Tensor  # (B, H, F) expanded frame feature
    mel_hat: torch.Tensor  # (B, n_mels, F)
    x: torch.Tensor  # (B, H, F) final frame-level feature
    prior_mu: torch.Tensor  # (B, H, F)
    prior_logsigma: torch.Tensor  # (B, H, F)
    frame_lengths: torch.Tensor  # (B,)
    logw_pred: torch.Tensor  # (B, d)


def log_durations(
    durations: torch.Tensor, mask: torch.Tensor, dtype: torch.dtype = torch.float32
) -> torch.Tensor:
    """Log of ground-truth frame counts, zeroed on padding."""
    safe = durations.clamp(min=1).to(dtype)
    return torch.log(safe) * mask.to(dtype)
