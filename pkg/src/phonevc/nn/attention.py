"""Self-attention sequence encoder used by the text and prior encoders."""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .common import ChannelLayerNorm


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, channels: int, n_heads: int, dropout: float = 0.0):
        super().__init__()
        if channels % n_heads != 0:
            raise ValueError(f"channels {channels} not divisible by heads {n_heads}")
        self.n_heads = n_heads
        self.head_dim = channels // n_heads
        self.qkv = nn.Conv1d(channels, channels * 3, 1)
        self.out = nn.Conv1d(channels, channels, 1)
        self.drop = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        # x: (B, C, T); mask: (B, T) boolean over valid positions.
        b, c, t = x.shape
        q, k, v = self.qkv(x).chunk(3, dim=1)

        def heads(z):
            return z.view(b, self.n_heads, self.head_dim, t)

        q, k, v = heads(q), heads(k), heads(v)
        logits = torch.einsum("bhdq,bhdk->bhqk", q, k) / math.sqrt(self.head_dim)
        key_mask = mask.view(b, 1, 1, t)
        logits = logits.masked_fill(~key_mask, -1e9)
        weights = self.drop(F.softmax(logits, dim=-1))
        out = torch.einsum("bhqk,bhdk->bhdq", weights, v).reshape(b, c, t)
        return self.out(out) * mask.unsqueeze(1).to(x.dtype)


class ConvFeedForward(nn.Module):
    def __init__(self, channels: int, ffn_dim: int, kernel_size: int, dropout: float = 0.0):
        super().__init__()
        pad = kernel_size // 2
        self.conv1 = nn.Conv1d(channels, ffn_dim, kernel_size, padding=pad)
        self.conv2 = nn.Conv1d(ffn_dim, channels, kernel_size, padding=pad)
        self.drop = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        m = mask.unsqueeze(1).to(x.dtype)
        x = self.conv1(x * m)
        x = self.drop(torch.relu(x))
        return self.conv2(x * m) * m


class SequenceEncoder(nn.Module):
    """Stack of post-norm self-attention blocks with conv feed-forward.

    With ``cond_dim`` set, a conditioning vector (e.g. a speaker embedding) is
    projected to the channel width and added to every position before each
    block.
    """

    def __init__(
        self,
        channels: int,
        ffn_dim: int,
        n_heads: int,
        n_layers: int,
        kernel_size: int = 3,
        dropout: float = 0.1,
        cond_dim: int = 0,
    ):
        super().__init__()
        self.attn = nn.ModuleList()
        self.norm1 = nn.ModuleList()
        self.ffn = nn.ModuleList()
        self.norm2 = nn.ModuleList()
        for _ in range(n_layers):
            self.attn.append(MultiHeadSelfAttention(channels, n_heads, dropout))
            self.norm1.append(ChannelLayerNorm(channels))
            self.ffn.append(ConvFeedForward(channels, ffn_dim, kernel_size, dropout))
            self.norm2.append(ChannelLayerNorm(channels))
        self.drop = nn.Dropout(dropout)
        self.cond = nn.Conv1d(cond_dim, channels, 1) if cond_dim else None

    def forward(
        self, x: torch.Tensor, mask: torch.Tensor, cond: torch.Tensor | None = None
    ) -> torch.Tensor:
        m = mask.unsqueeze(1).to(x.dtype)
        x = x * m
        for attn, norm1, ffn, norm2 in zip(self.attn, self.norm1, self.ffn, self.norm2):
            if self.cond is not None:
                if cond is None:
                    raise ValueError("encoder built with conditioning but none was given")
                x = x + self.cond(cond.unsqueeze(-1))
            y = self.drop(attn(x, mask))
            x = norm1(x + y)
            y = self.drop(ffn(x, mask))
            x = norm2(x + y)
            x = x * m
        return x
