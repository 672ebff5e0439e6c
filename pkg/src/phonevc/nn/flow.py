"""Speaker-conditioned invertible flow between posterior and prior latents.

Affine coupling layers with shift-only transforms (unit Jacobian), each
followed by a channel flip.  The coupling networks' output projections are
zero-initialized, so a freshly constructed flow is the identity map.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from ..config import FlowConfig
from .posterior import WaveNetStack


class AffineCoupling(nn.Module):
    def __init__(self, channels: int, kernel_size: int, n_layers: int, cond_dim: int):
        super().__init__()
        if channels % 2 != 0:
            raise ValueError("coupling requires an even channel count")
        self.half = channels // 2
        self.pre = nn.Conv1d(self.half, self.half, 1)
        self.stack = WaveNetStack(self.half, kernel_size, 1, n_layers, cond_dim=cond_dim)
        self.post = nn.Conv1d(self.half, self.half, 1)
        self.post.weight.data.zero_()
        self.post.bias.data.zero_()

    def forward(
        self,
        x: torch.Tensor,
        spk: torch.Tensor,
        mask: torch.Tensor,
        inverse: bool = False,
    ) -> torch.Tensor:
        m = mask.unsqueeze(1).to(x.dtype)
        x0, x1 = x.split(self.half, dim=1)
        shift = self.post(self.stack(self.pre(x0) * m, mask, cond=spk)) * m
        x1 = (x1 - shift) if inverse else (x1 + shift)
        return torch.cat([x0, x1 * m], dim=1)


class SpeakerFlow(nn.Module):
    """Stack of coupling layers; ``direction`` selects forward or inverse."""

    def __init__(self, channels: int, cfg: FlowConfig, speaker_dim: int):
        super().__init__()
        self.couplings = nn.ModuleList(
            AffineCoupling(channels, cfg.wn_kernel, cfg.wn_layers, speaker_dim)
            for _ in range(cfg.n_blocks)
        )

    def forward(
        self,
        z: torch.Tensor,  # (B, H, F)
        spk: torch.Tensor,  # (B, S)
        mask: torch.Tensor,  # (B, F)
        direction: str = "forward",
    ) -> torch.Tensor:
        if direction not in ("forward", "inverse"):
            raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
        if direction == "forward":
            for coupling in self.couplings:
                z = coupling(z, spk, mask)
                z = torch.flip(z, dims=[1])
        else:
            for coupling in reversed(self.couplings):
                z = torch.flip(z, dims=[1])
                z = coupling(z, spk, mask, inverse=True)
        return z
