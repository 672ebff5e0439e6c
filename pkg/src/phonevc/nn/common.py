"""Shared tensor utilities for sequence models with per-item lengths.

Everything here operates on (B, C, T) tensors plus integer length/count
tensors; 2-D (C, T) inputs are accepted by the functional helpers and
round-tripped through a singleton batch.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


def sequence_mask(lengths: torch.Tensor, max_len: int | None = None) -> torch.Tensor:
    """Boolean mask (B, T) that is True for positions below each length."""
    if max_len is None:
        max_len = int(lengths.max()) if lengths.numel() else 0
    pos = torch.arange(max_len, device=lengths.device)
    return pos.unsqueeze(0) < lengths.unsqueeze(1)


def _as_batched(x: torch.Tensor, counts: torch.Tensor):
    squeeze = x.dim() == 2
    if squeeze:
        x = x.unsqueeze(0)
        counts = counts.unsqueeze(0)
    return x, counts, squeeze


def repeat_columns(
    x: torch.Tensor, counts: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """Repeat column i of ``x`` ``counts[i]`` times, in order.

    ``x``: (B, C, T) or (C, T); ``counts``: matching (B, T) or (T,) non-negative
    integers (zeros mark padding).  Returns the expanded tensor (padded to the
    longest output in the batch, padded region zeroed) and per-item output
    lengths.
    """
    x, counts, squeeze = _as_batched(x, counts)
    if counts.lt(0).any():
        raise ValueError("repeat counts must be non-negative")
    if counts.shape != (x.size(0), x.size(2)):
        raise ValueError(f"counts shape {tuple(counts.shape)} does not match input columns")
    counts = counts.long()
    ends = counts.cumsum(dim=1)  # (B, T)
    out_lengths = ends[:, -1] if ends.size(1) else counts.new_zeros(x.size(0))
    t_out = int(out_lengths.max()) if out_lengths.numel() else 0
    positions = torch.arange(t_out, device=x.device).unsqueeze(0).expand(x.size(0), -1)
    # Source column for output position p: first i with cumulative count > p.
    src = torch.searchsorted(ends, positions + 1)
    src = src.clamp(max=max(x.size(2) - 1, 0))
    out = torch.gather(x, 2, src.unsqueeze(1).expand(-1, x.size(1), -1))
    mask = sequence_mask(out_lengths, t_out)
    out = out * mask.unsqueeze(1).to(out.dtype)
    if squeeze:
        return out.squeeze(0), out_lengths.squeeze(0)
    return out, out_lengths


def segment_mean_pool(
    x: torch.Tensor, counts: torch.Tensor
) -> torch.Tensor:
    """Mean over consecutive column segments of sizes ``counts``.

    Inverse of :func:`repeat_columns` in the sense that expanding and then
    pooling with the same counts recovers the input.  ``x``: (B, C, F) or
    (C, F); ``counts``: (B, T) or (T,), zeros allowed as padding (their output
    columns are zero).
    """
    x, counts, squeeze = _as_batched(x, counts)
    counts = counts.long()
    cumsum = torch.cat(
        [x.new_zeros(x.size(0), x.size(1), 1), x.cumsum(dim=2)], dim=2
    )
    ends = counts.cumsum(dim=1)
    starts = ends - counts
    idx_e = ends.unsqueeze(1).expand(-1, x.size(1), -1)
    idx_s = starts.unsqueeze(1).expand(-1, x.size(1), -1)
    sums = torch.gather(cumsum, 2, idx_e) - torch.gather(cumsum, 2, idx_s)
    out = sums / counts.clamp(min=1).unsqueeze(1).to(x.dtype)
    out = out * counts.gt(0).unsqueeze(1).to(x.dtype)
    return out.squeeze(0) if squeeze else out


def segment_slice_mask(counts: torch.Tensor, n_frames: int) -> torch.Tensor:
    """(B, T, F) mask: entry [b, i, j] is True iff frame j lies in segment i."""
    if counts.dim() == 1:
        counts = counts.unsqueeze(0)
    counts = counts.long()
    ends = counts.cumsum(dim=1).unsqueeze(2)  # (B, T, 1)
    starts = ends - counts.unsqueeze(2)
    pos = torch.arange(n_frames, device=counts.device).view(1, 1, -1)
    return (pos >= starts) & (pos < ends)


class ChannelLayerNorm(nn.Module):
    """LayerNorm over the channel dimension of (B, C, T) tensors."""

    def __init__(self, channels: int, eps: float = 1e-5):
        super().__init__()
        self.channels = channels
        self.eps = eps
        self.gamma = nn.Parameter(torch.ones(channels))
        self.beta = nn.Parameter(torch.zeros(channels))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x.transpose(1, -1)
        x = F.layer_norm(
            x, (self.channels,), self.gamma.to(x.dtype), self.beta.to(x.dtype), self.eps
        )
        return x.transpose(1, -1)


def init_conv_weights(module: nn.Module, mean: float = 0.0, std: float = 0.01) -> None:
    if isinstance(module, (nn.Conv1d, nn.ConvTranspose1d)):
        module.weight.data.normal_(mean, std)
