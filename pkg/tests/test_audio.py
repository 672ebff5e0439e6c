"""Spectrogram conventions and WAV round trips."""

import numpy as np
import pytest
import torch

from phonevc.audio import (
    AudioError,
    linear_spectrogram,
    mel_filterbank,
    mel_spectrogram,
    read_wav,
    trim_to_frames,
    write_wav,
)
from phonevc.config import DspConfig


def default_dsp() -> DspConfig:
    return DspConfig()


def small_dsp() -> DspConfig:
    return DspConfig(sample_rate=8000, fft_size=256, hop_length=64, n_mels=20)


class TestFrameCounting:
    def test_one_second_at_default_settings_gives_86_frames(self):
        dsp = default_dsp()
        audio = np.zeros(44100, dtype=np.float32)
        trimmed = trim_to_frames(audio, dsp)
        # Independent recomputation from the analysis convention: trim to a
        # whole number of hops, pad by (fft - hop) // 2 per side, no centering.
        pad = (dsp.fft_size - dsp.hop_length) // 2
        padded = len(trimmed) + 2 * pad
        expected = (padded - dsp.fft_size) // dsp.hop_length + 1
        assert expected == 86
        spec = linear_spectrogram(torch.from_numpy(trimmed), dsp)
        assert spec.shape == (dsp.fft_size // 2 + 1, 86)

    # Lengths must exceed the (fft - hop) // 2 reflect pad (96 samples here).
    @pytest.mark.parametrize("n_samples", [128, 200, 640, 641, 1000, 4096])
    def test_frames_equal_samples_over_hop(self, n_samples):
        dsp = small_dsp()
        audio = np.random.default_rng(0).standard_normal(n_samples).astype(np.float32)
        trimmed = trim_to_frames(audio, dsp)
        frames = dsp.frame_count(n_samples)
        assert len(trimmed) == frames * dsp.hop_length
        spec = linear_spectrogram(torch.from_numpy(trimmed), dsp)
        assert spec.shape[1] == frames

    def test_audio_shorter_than_hop_rejected(self):
        with pytest.raises(AudioError):
            trim_to_frames(np.zeros(10, dtype=np.float32), small_dsp())

    def test_audio_shorter_than_reflect_pad_rejected(self):
        with pytest.raises(AudioError, match="reflect"):
            linear_spectrogram(torch.zeros(64), small_dsp())

    def test_untrimmed_length_rejected(self):
        dsp = small_dsp()
        with pytest.raises(AudioError):
            linear_spectrogram(torch.zeros(100), dsp)


class TestMel:
    def test_filterbank_shape_and_coverage(self):
        dsp = default_dsp()
        fb = mel_filterbank(dsp)
        assert fb.shape == (80, 1025)
        assert (fb >= 0).all()
        assert (fb.sum(axis=1) > 0).all()  # every band covers some bins

    def test_mel_shape(self):
        dsp = small_dsp()
        audio = torch.randn(dsp.hop_length * 10, generator=torch.Generator().manual_seed(0))
        mel = mel_spectrogram(audio, dsp)
        assert mel.shape == (dsp.n_mels, 10)
        assert torch.isfinite(mel).all()

    def test_batched_matches_single(self):
        dsp = small_dsp()
        gen = torch.Generator().manual_seed(1)
        audio = torch.randn(2, dsp.hop_length * 6, generator=gen)
        batched = mel_spectrogram(audio, dsp)
        single = torch.stack([mel_spectrogram(audio[0], dsp), mel_spectrogram(audio[1], dsp)])
        torch.testing.assert_close(batched, single)

    def test_differentiable(self):
        dsp = small_dsp()
        audio = torch.randn(dsp.hop_length * 4, requires_grad=True)
        mel_spectrogram(audio, dsp).sum().backward()
        assert audio.grad is not None
        assert torch.isfinite(audio.grad).all()


class TestWavIo:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        audio = np.clip(rng.standard_normal(1000) * 0.2, -1, 1).astype(np.float32)
        path = tmp_path / "x.wav"
        write_wav(path, audio, 8000)
        loaded, rate = read_wav(path)
        assert rate == 8000
        np.testing.assert_allclose(loaded, audio, atol=0.51 / 32768)

    def test_sample_rate_check(self, tmp_path):
        path = tmp_path / "x.wav"
        write_wav(path, np.zeros(100), 8000)
        with pytest.raises(AudioError, match="sample rate"):
            read_wav(path, expected_rate=44100)

    def test_missing_file(self, tmp_path):
        with pytest.raises(AudioError):
            read_wav(tmp_path / "missing.wav")
