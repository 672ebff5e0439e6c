"""Frame-to-phoneme reduction of SSL features: pooling, attention, fusion.

Frame-level SSL features are reduced to one column per phoneme two ways:
duration-guided average pooling over each phoneme's frame slice, and
scaled-dot-product attention where the text encoding queries that phoneme's
frames.  The two phoneme-level encodings are blended with fixed weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..config import SslConfig
from .common import ChannelLayerNorm, segment_mean_pool, segment_slice_mask


def phoneme_avg_pool(vec: torch.Tensor, durations: torch.Tensor) -> torch.Tensor:
    """Mean of each phoneme's frame slice; (n, f) + (d,) -> (n, d).

    Also accepts batched (B, n, f) with (B, d) duration rows, where zero
    durations mark padding.  Valid durations must be positive and sum to the
    frame count.
    """
    durations = torch.as_tensor(durations)
    squeeze = vec.dim() == 2
    v = vec.unsqueeze(0) if squeeze else vec
    d = durations.unsqueeze(0) if squeeze else durations
    strict = d.reshape(-1) if squeeze else d[d != 0]
    if strict.numel() and strict.lt(1).any():
        raise ValueError("durations must be >= 1 (zeros allowed only as batch padding)")
    if d.numel() and not d.gt(0).any(dim=1).all():
        raise ValueError("each item needs at least one positive duration")
    sums = d.sum(dim=1)
    # Unbatched input must partition the frames exactly; batched items may sit
    # below the padded frame count but never beyond it.
    bad = (sums != v.size(2)).any() if squeeze else (sums > v.size(2)).any()
    if bad:
        raise ValueError(
            f"duration sums {sums.tolist()} do not match frame count {v.size(2)}"
        )
    out = segment_mean_pool(v, d)
    return out.squeeze(0) if squeeze else out


def fuse_ssl(
    c_avg: torch.Tensor, c_att: torch.Tensor, alpha: float, beta: float
) -> torch.Tensor:
    """Weighted sum of the pooled and attention encodings."""
    if c_avg.shape != c_att.shape:
        raise ValueError(f"shape mismatch: {tuple(c_avg.shape)} vs {tuple(c_att.shape)}")
    return alpha * c_avg + beta * c_att


class PhonemeAttention(nn.Module):
    """Per-phoneme attention over that phoneme's own frames.

    Queries are the text-encoder columns; keys and values are learned
    projections of the SSL frames.  Frames outside a phoneme's slice are
    masked out entirely, so each output column is a convex combination of the
    projected frames belonging to that phoneme alone.
    """

    def __init__(self, ssl_dim: int, hidden_dim: int):
        super().__init__()
        self.hidden_dim = hidden_dim
        self.key_proj = nn.Conv1d(ssl_dim, hidden_dim, 1)
        self.value_proj = nn.Conv1d(ssl_dim, hidden_dim, 1)

    def forward(
        self,
        c_text: torch.Tensor,  # (B, H, P)
        vec: torch.Tensor,  # (B, n, F)
        durations: torch.Tensor,  # (B, P), zeros as padding
        return_weights: bool = False,
    ):
        squeeze = c_text.dim() == 2
        if squeeze:
            c_text, vec, durations = (
                c_text.unsqueeze(0),
                vec.unsqueeze(0),
                torch.as_tensor(durations).unsqueeze(0),
            )
        if c_text.size(1) != self.hidden_dim:
            raise ValueError(
                f"query dimension {c_text.size(1)} != hidden dim {self.hidden_dim}"
            )
        if c_text.size(2) != durations.size(1):
            raise ValueError("query column count must equal the phoneme count")
        durations = durations.long()
        keys = self.key_proj(vec)
        values = self.value_proj(vec)
        logits = torch.einsum("bhp,bhf->bpf", c_text, keys) / math.sqrt(self.hidden_dim)
        slice_mask = segment_slice_mask(durations, vec.size(2))
        logits = logits.masked_fill(~slice_mask, float("-inf"))
        weights = F.softmax(logits, dim=2)
        # Padded phonemes have empty slices; their softmax rows are NaN.
        weights = torch.where(
            durations.gt(0).unsqueeze(2), weights, torch.zeros_like(weights)
        )
        out = torch.einsum("bpf,bhf->bhp", weights, values)
        if squeeze:
            out, weights = out.squeeze(0), weights.squeeze(0)
        return (out, weights) if return_weights else out


@dataclass
class SslEncoding:
    """Phoneme-level SSL features: pooled, encoded, attended, and fused."""

    vec_dur: torch.Tensor
    c_avg: torch.Tensor
    c_att: torch.Tensor
    c_ssl: torch.Tensor
    alpha: float
    beta: float


class SslEncoder(nn.Module):
    def __init__(self, cfg: SslConfig):
        super().__init__()
        self.cfg = cfg
        self.avg_proj = nn.Conv1d(cfg.input_dim, cfg.hidden_dim, 1)
        self.avg_norm = ChannelLayerNorm(cfg.hidden_dim)
        self.attention = PhonemeAttention(cfg.input_dim, cfg.hidden_dim)

    def forward(
        self,
        c_text: torch.Tensor,  # (B, H, P)
        vec: torch.Tensor,  # (B, n, F)
        durations: torch.Tensor,  # (B, P)
    ) -> SslEncoding:
        p_mask = durations.gt(0).unsqueeze(1).to(vec.dtype)
        vec_dur = phoneme_avg_pool(vec, durations)
        c_avg = self.avg_norm(self.avg_proj(vec_dur)) * p_mask
        c_att = self.attention(c_text, vec, durations)
        c_ssl = fuse_ssl(c_avg, c_att, self.cfg.alpha, self.cfg.beta)
        return SslEncoding(
            vec_dur=vec_dur,
            c_avg=c_avg,
            c_att=c_att,
            c_ssl=c_ssl,
            alpha=self.cfg.alpha,
            beta=self.cfg.beta,
        )
