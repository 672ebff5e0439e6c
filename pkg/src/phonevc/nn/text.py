"""Text-side encoder: word, phoneme, tone, and text-embedding streams.

Word-level streams are expanded to phoneme length with the phonemes-per-word
map, each stream is encoded separately to the shared hidden width, and the
four encodings are summed into the combined text representation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from ..config import TextConfig
from .attention import SequenceEncoder
from .common import repeat_columns, sequence_mask

STREAMS = ("words", "phones", "tones", "bert")


def expand_word_level(
    word_feats: torch.Tensor, w2p: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """Repeat word column i ``w2p[i]`` times to reach phoneme length.

    ``word_feats``: (C, W) or (B, C, W); ``w2p``: matching (W,) or (B, W) with
    positive entries (zeros only as batch padding).  Returns the phoneme-level
    tensor and per-item phoneme counts.
    """
    w2p = torch.as_tensor(w2p)
    strict = w2p if w2p.dim() == 1 else w2p[w2p != 0]
    if strict.numel() and strict.lt(1).any():
        raise ValueError("every w2p entry must be >= 1")
    return repeat_columns(word_feats, w2p)


@dataclass
class TextEncoding:
    """Phoneme-level encodings of the four text streams and their sum."""

    c_words: torch.Tensor
    c_phones: torch.Tensor
    c_tones: torch.Tensor
    c_bert: torch.Tensor
    c_text: torch.Tensor
    phoneme_mask: torch.Tensor  # (B, P) valid-phoneme mask


class TextEncoder(nn.Module):
    """Four parallel stream encoders summed into c_text.

    Each stream is an embedding (a linear projection for the pre-computed
    text embeddings) followed by a self-attention sequence encoder and an
    output projection.  ``streams`` restricts the forward pass to a subset;
    excluded streams contribute exact zeros, which supports ablations.
    """

    def __init__(
        self,
        cfg: TextConfig,
        n_words: int,
        n_phonemes: int,
        n_tones: int,
    ):
        super().__init__()
        self.cfg = cfg
        h = cfg.hidden_dim
        self.n_words = n_words
        self.n_phonemes = n_phonemes
        self.n_tones = n_tones
        self.word_emb = nn.Embedding(n_words, h)
        self.phone_emb = nn.Embedding(n_phonemes, h)
        self.tone_emb = nn.Embedding(n_tones, h)
        self.bert_proj = nn.Conv1d(cfg.bert_dim, h, 1)
        for emb in (self.word_emb, self.phone_emb, self.tone_emb):
            nn.init.normal_(emb.weight, 0.0, h**-0.5)
        self.encoders = nn.ModuleDict()
        self.out_projs = nn.ModuleDict()
        for stream in STREAMS:
            self.encoders[stream] = SequenceEncoder(
                h, cfg.ffn_dim, cfg.n_heads, cfg.n_layers, cfg.kernel_size, cfg.dropout
            )
            self.out_projs[stream] = nn.Conv1d(h, h, 1)

    def _check_ids(self, ids: torch.Tensor, size: int, name: str) -> None:
        if ids.numel() and (ids.min() < 0 or ids.max() >= size):
            raise ValueError(
                f"{name} token ID out of vocabulary range [0, {size}): "
                f"min={int(ids.min())}, max={int(ids.max())}"
            )

    def _encode_stream(self, stream: str, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        if self.cfg.use_sequence_encoder:
            x = self.encoders[stream](x, mask)
        return self.out_projs[stream](x) * mask.unsqueeze(1).to(x.dtype)

    def forward(
        self,
        words: torch.Tensor,  # (B, W) int64
        tones: torch.Tensor,  # (B, W) int64
        words_bert: torch.Tensor,  # (B, bert_dim, W)
        phonemes: torch.Tensor,  # (B, P) int64
        w2p: torch.Tensor,  # (B, W) int64, zeros as padding
        word_lengths: torch.Tensor,  # (B,)
        phoneme_lengths: torch.Tensor,  # (B,)
        streams: tuple[str, ...] = STREAMS,
    ) -> TextEncoding:
        for s in streams:
            if s not in STREAMS:
                raise ValueError(f"unknown stream {s!r}; valid streams: {STREAMS}")
        self._check_ids(words, self.n_words, "word")
        self._check_ids(phonemes, self.n_phonemes, "phoneme")
        self._check_ids(tones, self.n_tones, "tone")

        h = self.cfg.hidden_dim
        scale = math.sqrt(h)
        p_mask = sequence_mask(phoneme_lengths, phonemes.size(1))
        zeros = words_bert.new_zeros(words.size(0), h, phonemes.size(1))

        def word_stream(stream: str, feats: torch.Tensor) -> torch.Tensor:
            expanded, _ = expand_word_level(feats, w2p)
            expanded = expanded[:, :, : phonemes.size(1)]
            return self._encode_stream(stream, expanded, p_mask)

        c_words = (
            word_stream("words", self.word_emb(words).transpose(1, 2) * scale)
            if "words" in streams
            else zeros
        )
        c_tones = (
            word_stream("tones", self.tone_emb(tones).transpose(1, 2) * scale)
            if "tones" in streams
            else zeros
        )
        c_bert = (
            word_stream("bert", self.bert_proj(words_bert)) if "bert" in streams else zeros
        )
        c_phones = (
            self._encode_stream("phones", self.phone_emb(phonemes).transpose(1, 2) * scale, p_mask)
            if "phones" in streams
            else zeros
        )
        c_text = c_words + c_phones + c_tones + c_bert
        return TextEncoding(
            c_words=c_words,
            c_phones=c_phones,
            c_tones=c_tones,
            c_bert=c_bert,
            c_text=c_text,
            phoneme_mask=p_mask,
        )
