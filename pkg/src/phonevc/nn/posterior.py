"""Posterior encoder: latent extraction from the linear spectrogram."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from ..config import PosteriorConfig


class WaveNetStack(nn.Module):
    """Non-causal dilated conv stack with gated activations and skip sums.

    Global conditioning (here: the speaker embedding) is injected into every
    layer's gate, following the usual WaveNet residual-block construction.
    """

    def __init__(
        self,
        channels: int,
        kernel_size: int,
        dilation_rate: int,
        n_layers: int,
        cond_dim: int = 0,
    ):
        super().__init__()
        if kernel_size % 2 != 1:
            raise ValueError("kernel size must be odd")
        self.channels = channels
        self.n_layers = n_layers
        self.in_layers = nn.ModuleList()
        self.res_skip_layers = nn.ModuleList()
        self.cond_layer = (
            nn.Conv1d(cond_dim, 2 * channels * n_layers, 1) if cond_dim else None
        )
        for i in range(n_layers):
            dilation = dilation_rate**i if dilation_rate > 1 else 1
            pad = (kernel_size - 1) * dilation // 2
            self.in_layers.append(
                nn.Conv1d(channels, 2 * channels, kernel_size, dilation=dilation, padding=pad)
            )
            res_skip = 2 * channels if i < n_layers - 1 else channels
            self.res_skip_layers.append(nn.Conv1d(channels, res_skip, 1))

    def forward(
        self, x: torch.Tensor, mask: torch.Tensor, cond: torch.Tensor | None = None
    ) -> torch.Tensor:
        m = mask.unsqueeze(1).to(x.dtype)
        output = torch.zeros_like(x)
        g = None
        if self.cond_layer is not None:
            if cond is None:
                raise ValueError("stack built with conditioning but none was given")
            g = self.cond_layer(cond.unsqueeze(-1))
        for i in range(self.n_layers):
            acts = self.in_layers[i](x * m)
            if g is not None:
                offset = i * 2 * self.channels
                acts = acts + g[:, offset : offset + 2 * self.channels]
            t, s = acts.chunk(2, dim=1)
            acts = torch.tanh(t) * torch.sigmoid(s)
            res_skip = self.res_skip_layers[i](acts)
            if i < self.n_layers - 1:
                x = (x + res_skip[:, : self.channels]) * m
                output = output + res_skip[:, self.channels :]
            else:
                output = output + res_skip
        return output * m


@dataclass
class LatentPosterior:
    post_mu: torch.Tensor
    post_logsigma: torch.Tensor
    z: torch.Tensor
    frame_mask: torch.Tensor  # (B, F)


class PosteriorEncoder(nn.Module):
    """Maps the linear spectrogram to Gaussian latent parameters and samples
    z with the reparameterization trick."""

    def __init__(self, in_dim: int, latent_dim: int, cfg: PosteriorConfig, speaker_dim: int):
        super().__init__()
        self.latent_dim = latent_dim
        self.pre = nn.Conv1d(in_dim, cfg.hidden_dim, 1)
        self.stack = WaveNetStack(
            cfg.hidden_dim, cfg.wn_kernel, cfg.wn_dilation, cfg.wn_layers, cond_dim=speaker_dim
        )
        self.proj = nn.Conv1d(cfg.hidden_dim, latent_dim * 2, 1)

    def forward(
        self,
        linear_spec: torch.Tensor,  # (B, F_lin, F)
        spk: torch.Tensor,  # (B, S)
        mask: torch.Tensor,  # (B, F)
        noise: torch.Tensor | None = None,
        generator: torch.Generator | None = None,
    ) -> LatentPosterior:
        m = mask.unsqueeze(1).to(linear_spec.dtype)
        h = self.pre(linear_spec) * m
        h = self.stack(h, mask, cond=spk)
        mu, logsigma = self.proj(h).chunk(2, dim=1)
        mu, logsigma = mu * m, logsigma * m
        if noise is None:
            noise = torch.randn(
                mu.shape, generator=generator, device=mu.device, dtype=mu.dtype
            )
        if noise.shape != mu.shape:
            raise ValueError(f"noise shape {tuple(noise.shape)} != {tuple(mu.shape)}")
        z = (mu + noise * torch.exp(logsigma)) * m
        return LatentPosterior(post_mu=mu, post_logsigma=logsigma, z=z, frame_mask=mask)
