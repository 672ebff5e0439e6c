"""Spectrogram computation and WAV I/O.

The same torch STFT path is used at extraction time and inside the training
losses so that spectrograms of generated audio are directly comparable to the
stored ground truth.  Frame counting follows the convention documented on
:class:`phonevc.config.DspConfig`: trim to a whole number of hops, reflect-pad
by ``(fft - hop) // 2`` on both sides, analyze without centering; a trimmed
signal of ``k * hop`` samples produces exactly ``k`` frames.
"""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np
import torch

from .config import DspConfig

# Floor for log compression of mel energies.
LOG_MEL_FLOOR = 1e-5


class AudioError(ValueError):
    """Raised for unreadable or incompatible audio files."""


def trim_to_frames(audio: np.ndarray, dsp: DspConfig) -> np.ndarray:
    """Trim trailing samples so the length is an exact multiple of the hop."""
    frames = dsp.frame_count(len(audio))
    if frames < 1:
        raise AudioError(
            f"audio too short: {len(audio)} samples < one hop ({dsp.hop_length})"
        )
    return audio[: frames * dsp.hop_length]


def _window(dsp: DspConfig, device: torch.device, dtype: torch.dtype) -> torch.Tensor:
    return torch.hann_window(dsp.win, device=device, dtype=dtype)


def linear_spectrogram(audio: torch.Tensor, dsp: DspConfig) -> torch.Tensor:
    """Magnitude spectrogram, shape (..., fft // 2 + 1, frames).

    Accepts (T,) or (B, T) tensors whose length is a multiple of the hop.
    Differentiable, so it can sit inside reconstruction losses.
    """
    squeeze = audio.dim() == 1
    if squeeze:
        audio = audio.unsqueeze(0)
    if audio.size(-1) % dsp.hop_length != 0:
        raise AudioError(
            f"audio length {audio.size(-1)} is not a multiple of hop {dsp.hop_length}"
        )
    pad = (dsp.fft_size - dsp.hop_length) // 2
    if audio.size(-1) <= pad:
        raise AudioError(
            f"audio of {audio.size(-1)} samples is too short for reflect padding "
            f"of {pad}; need more than {pad // dsp.hop_length + 1} frames"
        )
    x = torch.nn.functional.pad(audio.unsqueeze(1), (pad, pad), mode="reflect").squeeze(1)
    spec = torch.stft(
        x,
        n_fft=dsp.fft_size,
        hop_length=dsp.hop_length,
        win_length=dsp.win,
        window=_window(dsp, audio.device, audio.dtype),
        center=False,
        onesided=True,
        return_complex=True,
    )
    mag = torch.sqrt(spec.real.pow(2) + spec.imag.pow(2) + 1e-9)
    return mag.squeeze(0) if squeeze else mag


def mel_filterbank(dsp: DspConfig, dtype: np.dtype = np.float32) -> np.ndarray:
    """Triangular mel filterbank (n_mels, fft // 2 + 1), area-normalized."""
    n_fft = dsp.fft_size

    def hz_to_mel(f):
        return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)

    def mel_to_hz(m):
        return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)

    mel_pts = np.linspace(hz_to_mel(dsp.mel_fmin), hz_to_mel(dsp.fmax), dsp.n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    bin_freqs = np.linspace(0.0, dsp.sample_rate / 2.0, n_fft // 2 + 1)

    fb = np.zeros((dsp.n_mels, n_fft // 2 + 1), dtype=np.float64)
    for i in range(dsp.n_mels):
        lo, ctr, hi = hz_pts[i], hz_pts[i + 1], hz_pts[i + 2]
        up = (bin_freqs - lo) / max(ctr - lo, 1e-12)
        down = (hi - bin_freqs) / max(hi - ctr, 1e-12)
        fb[i] = np.maximum(0.0, np.minimum(up, down))
        # Slaney-style area normalization keeps per-band energy comparable.
        fb[i] *= 2.0 / (hi - lo)
    return fb.astype(dtype)


def mel_from_linear(linear: torch.Tensor, dsp: DspConfig) -> torch.Tensor:
    """Log-compressed mel spectrogram from a magnitude spectrogram."""
    fb = torch.as_tensor(
        mel_filterbank(dsp, np.float64), device=linear.device, dtype=linear.dtype
    )
    mel = torch.matmul(fb, linear)
    return torch.log(torch.clamp(mel, min=LOG_MEL_FLOOR))


def mel_spectrogram(audio: torch.Tensor, dsp: DspConfig) -> torch.Tensor:
    """Log-mel spectrogram straight from audio; shape (..., n_mels, frames)."""
    return mel_from_linear(linear_spectrogram(audio, dsp), dsp)


def read_wav(path: str | Path, expected_rate: int | None = None) -> tuple[np.ndarray, int]:
    """Read a mono 16-bit PCM WAV file as float32 in [-1, 1]."""
    try:
        with wave.open(str(path), "rb") as wav:
            rate = wav.getframerate()
            channels = wav.getnchannels()
            width = wav.getsampwidth()
            raw = wav.readframes(wav.getnframes())
    except (OSError, wave.Error) as exc:
        raise AudioError(f"cannot read audio file {path}: {exc}") from exc
    if width != 2:
        raise AudioError(f"{path}: only 16-bit PCM WAV is supported (got {8 * width}-bit)")
    data = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0
    if channels > 1:
        data = data.reshape(-1, channels).mean(axis=1)
    if expected_rate is not None and rate != expected_rate:
        raise AudioError(f"{path}: sample rate {rate} != expected {expected_rate}")
    return data, rate


def write_wav(path: str | Path, audio: np.ndarray, sample_rate: int) -> None:
    """Write float audio in [-1, 1] as a mono 16-bit PCM WAV file."""
    scaled = np.asarray(audio, dtype=np.float64) * 32768.0
    pcm = np.clip(scaled.round(), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(sample_rate)
        wav.writeframes(pcm.tobytes())
