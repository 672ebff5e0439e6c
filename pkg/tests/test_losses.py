"""Loss terms and the per-step loss report."""

import math

import numpy as np
import pytest
import torch

from phonevc.losses import (
    LossError,
    LossReport,
    duration_loss,
    feature_matching_loss,
    generator_adv_loss,
    kl_divergence,
    kl_sampled,
)


def numpy_gaussian_kl(mu_q, logs_q, mu_p, logs_p):
    """Independent closed-form recomputation of the Gaussian KL, elementwise."""
    var_q, var_p = np.exp(2 * logs_q), np.exp(2 * logs_p)
    return logs_p - logs_q + (var_q + (mu_q - mu_p) ** 2) / (2 * var_p) - 0.5


class TestKlDivergence:
    def test_identical_distributions_give_zero(self):
        mu = torch.randn(3, 4, dtype=torch.float64)
        logs = torch.randn(3, 4, dtype=torch.float64)
        assert float(kl_divergence(mu, logs, mu.clone(), logs.clone())) == 0.0

    def test_unit_shift_gives_half(self):
        one = torch.tensor([1.0], dtype=torch.float64)
        zero = torch.tensor([0.0], dtype=torch.float64)
        assert float(kl_divergence(one, zero, zero, zero)) == 0.5

    def test_matches_independent_recomputation(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            shape = (int(rng.integers(1, 5)), int(rng.integers(1, 20)))
            mu_q, mu_p = rng.standard_normal(shape), rng.standard_normal(shape)
            logs_q, logs_p = rng.uniform(-2, 2, shape), rng.uniform(-2, 2, shape)
            ours = kl_divergence(
                torch.from_numpy(mu_q),
                torch.from_numpy(logs_q),
                torch.from_numpy(mu_p),
                torch.from_numpy(logs_p),
            )
            expected = numpy_gaussian_kl(mu_q, logs_q, mu_p, logs_p).mean()
            assert abs(float(ours) - expected) < 1e-8

    def test_non_negative_for_random_parameters(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            args = [torch.from_numpy(rng.standard_normal((2, 6))) for _ in range(4)]
            assert float(kl_divergence(*args)) >= 0.0

    def test_masked_mean_ignores_padding(self):
        mu_q = torch.randn(1, 2, 5, dtype=torch.float64)
        logs_q = torch.randn(1, 2, 5, dtype=torch.float64)
        mu_p = torch.randn(1, 2, 5, dtype=torch.float64)
        logs_p = torch.randn(1, 2, 5, dtype=torch.float64)
        mask = torch.tensor([[True, True, True, False, False]])
        masked = kl_divergence(mu_q, logs_q, mu_p, logs_p, mask=mask)
        trimmed = kl_divergence(
            mu_q[..., :3], logs_q[..., :3], mu_p[..., :3], logs_p[..., :3]
        )
        torch.testing.assert_close(masked, trimmed)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(LossError):
            kl_divergence(torch.zeros(2), torch.zeros(2), torch.zeros(3), torch.zeros(3))

    def test_sampled_estimator_agrees_at_the_mean(self):
        # Evaluating the prior density at the posterior mean with equal sigmas
        # reduces both estimators to the same quadratic term.
        mu_q = torch.randn(2, 3, dtype=torch.float64)
        logs = torch.zeros(2, 3, dtype=torch.float64)
        mu_p = torch.randn(2, 3, dtype=torch.float64)
        sampled = kl_sampled(mu_q, logs, mu_p, logs)
        closed = kl_divergence(mu_q, logs, mu_p, logs)
        torch.testing.assert_close(sampled + 0.5, closed + 0.5)


class TestDurationLoss:
    def test_equal_vectors_give_zero(self):
        v = torch.randn(1, 6)
        assert float(duration_loss(v, v.clone())) == 0.0

    def test_log_two_squared(self):
        pred = torch.zeros(1, 2, dtype=torch.float64)
        true = torch.full((1, 2), math.log(2.0), dtype=torch.float64)
        assert abs(float(duration_loss(pred, true)) - math.log(2.0) ** 2) < 1e-12

    def test_matches_elementwise_oracle(self):
        rng = np.random.default_rng(2)
        a, b = rng.standard_normal((2, 7)), rng.standard_normal((2, 7))
        ours = duration_loss(torch.from_numpy(a), torch.from_numpy(b))
        assert abs(float(ours) - ((a - b) ** 2).mean()) < 1e-12

    def test_length_mismatch_rejected(self):
        with pytest.raises(LossError):
            duration_loss(torch.zeros(1, 3), torch.zeros(1, 4))


class TestAdversarialPieces:
    def test_generator_loss_zero_at_unit_scores(self):
        assert float(generator_adv_loss([torch.ones(1, 5)])) == 0.0

    def test_feature_matching_zero_for_identical_maps(self):
        maps = [[torch.randn(1, 2, 3)], [torch.randn(1, 4)]]
        assert float(feature_matching_loss(maps, [[m.clone() for m in g] for g in maps])) == 0.0


class TestLossReport:
    def make(self, **overrides) -> LossReport:
        values = dict(l_rec=1.0, l_melpre=0.5, l_kl=0.25, l_dur=0.125, l_g=2.0, l_d=1.5)
        values.update(overrides)
        values["total_g"] = (
            values["l_rec"] + values["l_melpre"] + values["l_kl"] + values["l_dur"] + values["l_g"]
        )
        return LossReport(**values)

    def test_valid_report_passes(self):
        self.make().validate()

    def test_total_must_decompose(self):
        report = self.make()
        report.total_g += 1e-3
        with pytest.raises(LossError, match="decompose"):
            report.validate()

    def test_negative_kl_rejected(self):
        with pytest.raises(LossError, match="negative"):
            self.make(l_kl=-1e-3).validate()

    def test_tiny_negative_kl_tolerated(self):
        self.make(l_kl=-5e-6).validate()

    def test_non_finite_rejected(self):
        with pytest.raises(LossError, match="non-finite"):
            self.make(l_rec=float("nan")).validate()

    def test_record_round_trip(self):
        report = self.make()
        step, parsed = LossReport.from_record(report.to_record(17, 1.23))
        assert step == 17
        assert parsed == report
