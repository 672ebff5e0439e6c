"""Prior path: speaker-conditioned encoding, frame expansion, mel auxiliary
path, duration prediction, and distribution parameters."""

import math

import numpy as np
import pytest
import torch

from phonevc.config import DurConfig, PriorConfig
from phonevc.nn.common import segment_mean_pool, sequence_mask
from phonevc.nn.prior import (
    DurationPredictor,
    MelAuxiliary,
    PriorProjection,
    SpeakerConditionedEncoder,
    durations_from_log,
    length_regulate,
    log_durations,
)

DUR = torch.tensor([8, 9, 5, 10, 33, 10])


def paper_encoder() -> SpeakerConditionedEncoder:
    cfg = PriorConfig(hidden_dim=192, n_blocks=2, ffn_dim=256, dropout=0.0)
    torch.manual_seed(0)
    return SpeakerConditionedEncoder(cfg, speaker_dim=192).eval()


class TestSpeakerConditionedEncoder:
    def test_cancelling_inputs_normalize_to_zero(self):
        enc = paper_encoder()
        c_text = torch.randn(1, 192, 6)
        mask = torch.ones(1, 6, dtype=torch.bool)
        c, _ = enc(c_text, -c_text, torch.randn(1, 192), mask)
        # A zero matrix stays zero under layer normalization at init.
        assert torch.count_nonzero(c) == 0

    def test_shapes_at_paper_dimensions(self):
        enc = paper_encoder()
        mask = torch.ones(1, 6, dtype=torch.bool)
        c, x_d = enc(torch.randn(1, 192, 6), torch.randn(1, 192, 6), torch.randn(1, 192), mask)
        assert c.shape == (1, 192, 6)
        assert x_d.shape == (1, 192, 6)

    def test_speaker_changes_output(self):
        enc = paper_encoder()
        c_text = torch.randn(1, 192, 6)
        c_ssl = torch.randn(1, 192, 6)
        mask = torch.ones(1, 6, dtype=torch.bool)
        spk_a, spk_b = torch.randn(1, 192), torch.randn(1, 192)
        _, xa = enc(c_text, c_ssl, spk_a, mask)
        _, xb = enc(c_text, c_ssl, spk_b, mask)
        assert (xa - xb).norm() > 0

    def test_shape_mismatch_rejected(self):
        enc = paper_encoder()
        with pytest.raises(ValueError, match="mismatch"):
            enc(
                torch.randn(1, 192, 6),
                torch.randn(1, 192, 5),
                torch.randn(1, 192),
                torch.ones(1, 6, dtype=torch.bool),
            )


class TestLengthRegulate:
    def test_unit_durations_are_identity(self):
        x = torch.randn(4, 5)
        out, n = length_regulate(x, torch.ones(5, dtype=torch.int64))
        torch.testing.assert_close(out, x)
        assert int(n) == 5

    def test_reference_durations_give_75_frames(self):
        out, n = length_regulate(torch.randn(192, 6), DUR)
        assert out.shape == (192, 75)
        assert int(n) == 75

    def test_matches_concatenation_oracle(self):
        x = torch.randn(3, 2)
        out, _ = length_regulate(x, torch.tensor([2, 3]))
        expected = torch.cat(
            [x[:, 0:1], x[:, 0:1], x[:, 1:2], x[:, 1:2], x[:, 1:2]], dim=1
        )
        torch.testing.assert_close(out, expected)

    def test_nonpositive_duration_rejected(self):
        with pytest.raises(ValueError):
            length_regulate(torch.randn(2, 3), torch.tensor([2, 0, 1]))

    def test_mean_pool_round_trip_exact_for_integers(self):
        x = torch.arange(24, dtype=torch.float64).reshape(4, 6)
        expanded, _ = length_regulate(x, DUR)
        recovered = segment_mean_pool(expanded, DUR)
        assert torch.equal(recovered, x)

    def test_mean_pool_round_trip_close_for_floats(self):
        x = torch.randn(4, 6, dtype=torch.float64)
        expanded, _ = length_regulate(x, DUR)
        recovered = segment_mean_pool(expanded, DUR)
        torch.testing.assert_close(recovered, x, rtol=0, atol=1e-6)


class TestMelAuxiliary:
    def make(self, hidden=16, n_mels=8, spk=8, seed=1) -> MelAuxiliary:
        torch.manual_seed(seed)
        return MelAuxiliary(hidden, n_mels, spk).eval()

    def test_zero_injection_keeps_input(self):
        aux = self.make()
        with torch.no_grad():
            torch.nn.init.zeros_(aux.prenet.weight)
            torch.nn.init.zeros_(aux.prenet.bias)
            torch.nn.init.zeros_(aux.post_conv2.weight)
            torch.nn.init.zeros_(aux.post_conv2.bias)
        x_f = torch.randn(1, 16, 10)
        mask = torch.ones(1, 10, dtype=torch.bool)
        mel_hat, x = aux(x_f, torch.randn(1, 8), mask)
        torch.testing.assert_close(x, x_f)  # residual postnet reduces to identity
        assert mel_hat.shape == (1, 8, 10)

    def test_paper_scale_shapes(self):
        torch.manual_seed(2)
        aux = MelAuxiliary(192, 80, 192).eval()
        mask = torch.ones(1, 75, dtype=torch.bool)
        mel_hat, x = aux(torch.randn(1, 192, 75), torch.randn(1, 192), mask)
        assert mel_hat.shape == (1, 80, 75)
        assert x.shape == (1, 192, 75)


class TestDurationPredictor:
    def make(self, hidden=16, spk=8, seed=3) -> DurationPredictor:
        torch.manual_seed(seed)
        cfg = DurConfig(hidden_dim=hidden, dropout=0.0)
        return DurationPredictor(hidden, cfg, spk).eval()

    def test_single_phoneme_output_shape(self):
        dp = self.make()
        out = dp(torch.randn(1, 16, 1), torch.randn(1, 8), torch.ones(1, 1, dtype=torch.bool))
        assert out.shape == (1, 1)

    def test_zero_final_layer_predicts_zero_log_durations(self):
        dp = self.make()
        with torch.no_grad():
            torch.nn.init.zeros_(dp.proj.weight)
            torch.nn.init.zeros_(dp.proj.bias)
        out = dp(torch.randn(1, 16, 5), torch.randn(1, 8), torch.ones(1, 5, dtype=torch.bool))
        assert torch.count_nonzero(out) == 0
        # exp(0) = 1: a zero-initialized head implies one frame per phoneme.
        assert durations_from_log(out).tolist() == [[1, 1, 1, 1, 1]]

    def test_gradients_do_not_reach_inputs(self):
        dp = self.make()
        x_d = torch.randn(1, 16, 4, requires_grad=True)
        spk = torch.randn(1, 8, requires_grad=True)
        out = dp(x_d, spk, torch.ones(1, 4, dtype=torch.bool))
        out.sum().backward()
        assert x_d.grad is None
        assert spk.grad is None

    def test_deterministic_given_parameters(self):
        dp = self.make()
        x_d, spk = torch.randn(1, 16, 4), torch.randn(1, 8)
        mask = torch.ones(1, 4, dtype=torch.bool)
        torch.testing.assert_close(dp(x_d, spk, mask), dp(x_d, spk, mask))


class TestDurationsFromLog:
    def test_zero_log_gives_one_frame(self):
        assert durations_from_log(torch.tensor([0.0, 0.0])).tolist() == [1, 1]

    def test_rounding(self):
        out = durations_from_log(torch.tensor([math.log(8.0), math.log(9.4)]))
        assert out.tolist() == [8, 9]

    def test_pace(self):
        assert durations_from_log(torch.tensor([math.log(3.0)]), pace=2.0).tolist() == [6]

    def test_nonpositive_pace_rejected(self):
        with pytest.raises(ValueError):
            durations_from_log(torch.tensor([0.0]), pace=0.0)

    def test_log_durations_inverse(self):
        mask = torch.ones(1, 6, dtype=torch.bool)
        logw = log_durations(DUR.unsqueeze(0), mask)
        recovered = torch.exp(logw).round().long()
        assert recovered.squeeze(0).tolist() == DUR.tolist()


class TestPriorProjection:
    def test_zero_initialized_projection_gives_standard_normal_params(self):
        proj = PriorProjection(16, logsigma_clamp=7.0)
        with torch.no_grad():
            torch.nn.init.zeros_(proj.proj.weight)
            torch.nn.init.zeros_(proj.proj.bias)
        mu, logsigma = proj(torch.randn(1, 16, 9), torch.ones(1, 9, dtype=torch.bool))
        assert torch.count_nonzero(mu) == 0
        assert torch.count_nonzero(logsigma) == 0  # unit variance

    def test_paper_scale_shapes(self):
        torch.manual_seed(5)
        proj = PriorProjection(192, logsigma_clamp=7.0)
        mu, logsigma = proj(torch.randn(1, 192, 75), torch.ones(1, 75, dtype=torch.bool))
        assert mu.shape == logsigma.shape == (1, 192, 75)

    def test_clamp_bounds_log_sigma(self):
        proj = PriorProjection(4, logsigma_clamp=7.0)
        with torch.no_grad():
            torch.nn.init.zeros_(proj.proj.weight)
            proj.proj.bias.copy_(
                torch.cat([torch.zeros(4), torch.tensor([100.0, -100.0, 50.0, -50.0])])
            )
        _, logsigma = proj(torch.randn(1, 4, 3), torch.ones(1, 3, dtype=torch.bool))
        assert logsigma.max() <= 7.0
        assert logsigma.min() >= -7.0
