"""Waveform generator and the multi-period / multi-scale discriminators.

The generator upsamples the latent with transposed convolutions whose strides
multiply to the hop length, so a latent of f frames decodes to exactly
``f * hop`` samples.  Discriminators return per-layer feature maps plus a
final score map, as needed for least-squares adversarial and
feature-matching losses.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.nn.utils.parametrizations import weight_norm

from ..config import VocoderConfig

LRELU_SLOPE = 0.1


class ResBlock(nn.Module):
    def __init__(self, channels: int, kernel_size: int, dilations: list[int]):
        super().__init__()
        self.convs1 = nn.ModuleList()
        self.convs2 = nn.ModuleList()
        for d in dilations:
            self.convs1.append(
                weight_norm(
                    nn.Conv1d(
                        channels,
                        channels,
                        kernel_size,
                        dilation=d,
                        padding=(kernel_size - 1) * d // 2,
                    )
                )
            )
            self.convs2.append(
                weight_norm(
                    nn.Conv1d(channels, channels, kernel_size, padding=kernel_size // 2)
                )
            )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for c1, c2 in zip(self.convs1, self.convs2):
            h = c1(F.leaky_relu(x, LRELU_SLOPE))
            h = c2(F.leaky_relu(h, LRELU_SLOPE))
            x = x + h
        return x


class Generator(nn.Module):
    """Latent (B, H, f) -> waveform (B, 1, f * hop)."""

    def __init__(self, latent_dim: int, cfg: VocoderConfig, speaker_dim: int):
        super().__init__()
        self.cfg = cfg
        ch = cfg.initial_channels
        self.conv_pre = nn.Conv1d(latent_dim, ch, 7, padding=3)
        self.cond = nn.Conv1d(speaker_dim, ch, 1)
        self.ups = nn.ModuleList()
        self.resblocks = nn.ModuleList()
        self.n_kernels = len(cfg.resblock_kernels)
        for i, (u, k) in enumerate(zip(cfg.upsample_factors, cfg.upsample_kernels)):
            if (k - u) % 2 != 0:
                raise ValueError(f"upsample kernel {k} and factor {u} must differ evenly")
            in_ch, out_ch = ch // (2**i), ch // (2 ** (i + 1))
            self.ups.append(
                weight_norm(nn.ConvTranspose1d(in_ch, out_ch, k, stride=u, padding=(k - u) // 2))
            )
            for rk in cfg.resblock_kernels:
                self.resblocks.append(ResBlock(out_ch, rk, cfg.resblock_dilations))
        self.conv_post = nn.Conv1d(ch // (2 ** len(cfg.upsample_factors)), 1, 7, padding=3)

    def forward(self, z: torch.Tensor, spk: torch.Tensor) -> torch.Tensor:
        x = self.conv_pre(z) + self.cond(spk.unsqueeze(-1))
        for i, up in enumerate(self.ups):
            x = up(F.leaky_relu(x, LRELU_SLOPE))
            acc = None
            for j in range(self.n_kernels):
                y = self.resblocks[i * self.n_kernels + j](x)
                acc = y if acc is None else acc + y
            x = acc / self.n_kernels
        return torch.tanh(self.conv_post(F.leaky_relu(x)))


class PeriodDiscriminator(nn.Module):
    """Folds the waveform into (frames, period) planes and scores them."""

    def __init__(self, period: int, cfg: VocoderConfig):
        super().__init__()
        self.period = period
        self.convs = nn.ModuleList()
        ch_in, ch_out = 1, cfg.mpd_channels
        for _ in range(4):
            self.convs.append(
                weight_norm(nn.Conv2d(ch_in, ch_out, (5, 1), stride=(3, 1), padding=(2, 0)))
            )
            ch_in, ch_out = ch_out, min(ch_out * 2, cfg.mpd_max_channels)
        self.conv_post = weight_norm(nn.Conv2d(ch_in, 1, (3, 1), padding=(1, 0)))

    def fold(self, x: torch.Tensor) -> torch.Tensor:
        b, c, t = x.shape
        if t % self.period != 0:
            pad = self.period - t % self.period
            x = F.pad(x, (0, pad), mode="reflect")
            t = t + pad
        return x.view(b, c, t // self.period, self.period)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        fmaps = []
        x = self.fold(x)
        for conv in self.convs:
            x = F.leaky_relu(conv(x), LRELU_SLOPE)
            fmaps.append(x)
        score = self.conv_post(x)
        fmaps.append(score)
        return torch.flatten(score, 1, -1), fmaps


class ScaleDiscriminator(nn.Module):
    def __init__(self, cfg: VocoderConfig):
        super().__init__()
        ch = cfg.msd_channels
        cap = cfg.msd_max_channels
        self.convs = nn.ModuleList(
            [
                weight_norm(nn.Conv1d(1, ch, 15, stride=1, padding=7)),
                weight_norm(nn.Conv1d(ch, min(ch * 2, cap), 41, stride=4, padding=20)),
                weight_norm(nn.Conv1d(min(ch * 2, cap), min(ch * 4, cap), 41, stride=4, padding=20)),
                weight_norm(nn.Conv1d(min(ch * 4, cap), cap, 41, stride=4, padding=20)),
                weight_norm(nn.Conv1d(cap, cap, 5, stride=1, padding=2)),
            ]
        )
        self.conv_post = weight_norm(nn.Conv1d(cap, 1, 3, padding=1))

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        fmaps = []
        for conv in self.convs:
            x = F.leaky_relu(conv(x), LRELU_SLOPE)
            fmaps.append(x)
        score = self.conv_post(x)
        fmaps.append(score)
        return torch.flatten(score, 1, -1), fmaps


@dataclass
class DiscriminatorOutput:
    """Scores and feature maps for a (real, fake) waveform pair."""

    scores_real: list[torch.Tensor]
    scores_fake: list[torch.Tensor]
    fmaps_real: list[list[torch.Tensor]]
    fmaps_fake: list[list[torch.Tensor]]


class DiscriminatorBank(nn.Module):
    """Multi-period plus multi-scale discriminators behind one interface."""

    def __init__(self, cfg: VocoderConfig):
        super().__init__()
        self.periods = list(cfg.periods)
        self.mpd = nn.ModuleList(PeriodDiscriminator(p, cfg) for p in cfg.periods)
        self.msd = nn.ModuleList(ScaleDiscriminator(cfg) for _ in range(cfg.scales))
        self.pool = nn.AvgPool1d(4, stride=2, padding=2)

    def score(self, x: torch.Tensor) -> tuple[list[torch.Tensor], list[list[torch.Tensor]]]:
        scores, fmaps = [], []
        for disc in self.mpd:
            s, f = disc(x)
            scores.append(s)
            fmaps.append(f)
        y = x
        for i, disc in enumerate(self.msd):
            if i > 0:
                y = self.pool(y)
            s, f = disc(y)
            scores.append(s)
            fmaps.append(f)
        return scores, fmaps

    def forward(self, audio_real: torch.Tensor, audio_fake: torch.Tensor) -> DiscriminatorOutput:
        if audio_real.shape[-1] != audio_fake.shape[-1]:
            raise ValueError(
                f"waveform length mismatch: real {audio_real.shape[-1]} vs fake {audio_fake.shape[-1]}"
            )
        scores_real, fmaps_real = self.score(audio_real)
        scores_fake, fmaps_fake = self.score(audio_fake)
        return DiscriminatorOutput(scores_real, scores_fake, fmaps_real, fmaps_fake)
