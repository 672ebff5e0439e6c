"""Training losses: reconstruction, auxiliary mel, KL, duration, adversarial.

The generator objective is the plain sum of the five terms (reconstruction,
auxiliary mel prediction, KL, duration, adversarial+feature-matching); the
discriminator objective is its least-squares GAN loss alone.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields

import torch

from .nn.vocoder import DiscriminatorOutput


class LossError(ValueError):
    """Raised for malformed loss inputs or non-finite results."""


def _masked_mean(values: torch.Tensor, mask: torch.Tensor | None) -> torch.Tensor:
    if mask is None:
        return values.mean()
    m = mask.to(values.dtype)
    while m.dim() < values.dim():
        m = m.unsqueeze(1)
    denom = m.expand_as(values).sum().clamp(min=1)
    return (values * m).sum() / denom


def kl_divergence(
    post_mu: torch.Tensor,
    post_logsigma: torch.Tensor,
    prior_mu: torch.Tensor,
    prior_logsigma: torch.Tensor,
    mask: torch.Tensor | None = None,
) -> torch.Tensor:
    """Mean per-element Gaussian KL(posterior || prior), closed form."""
    shapes = {post_mu.shape, post_logsigma.shape, prior_mu.shape, prior_logsigma.shape}
    if len(shapes) != 1:
        raise LossError(f"parameter shape mismatch: {sorted(tuple(s) for s in shapes)}")
    kl = (
        prior_logsigma
        - post_logsigma
        - 0.5
        + (torch.exp(2.0 * post_logsigma) + (post_mu - prior_mu) ** 2)
        * 0.5
        * torch.exp(-2.0 * prior_logsigma)
    )
    return _masked_mean(kl, mask)


def kl_sampled(
    z_transported: torch.Tensor,
    post_logsigma: torch.Tensor,
    prior_mu: torch.Tensor,
    prior_logsigma: torch.Tensor,
    mask: torch.Tensor | None = None,
) -> torch.Tensor:
    """KL estimate for a flow-transported posterior sample.

    Uses the posterior's closed-form entropy plus the prior log-density
    evaluated at the transported sample (the flow is shift-only, so its
    Jacobian term vanishes).  Non-negative in expectation, not per sample.
    """
    kl = (
        prior_logsigma
        - post_logsigma
        - 0.5
        + 0.5 * (z_transported - prior_mu) ** 2 * torch.exp(-2.0 * prior_logsigma)
    )
    return _masked_mean(kl, mask)


def duration_loss(
    logw_pred: torch.Tensor, logw_true: torch.Tensor, mask: torch.Tensor | None = None
) -> torch.Tensor:
    """Mean squared difference of predicted and actual log durations."""
    if logw_pred.shape != logw_true.shape:
        raise LossError(
            f"length mismatch: {tuple(logw_pred.shape)} vs {tuple(logw_true.shape)}"
        )
    return _masked_mean((logw_pred - logw_true) ** 2, mask)


def l1_loss(pred: torch.Tensor, target: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
    if pred.shape != target.shape:
        raise LossError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    return _masked_mean((pred - target).abs(), mask)


def discriminator_adv_loss(out: DiscriminatorOutput) -> torch.Tensor:
    """Least-squares GAN loss for the discriminator bank."""
    loss = 0.0
    for real, fake in zip(out.scores_real, out.scores_fake):
        loss = loss + ((1.0 - real) ** 2).mean() + (fake**2).mean()
    return loss


def generator_adv_loss(scores_fake: list[torch.Tensor]) -> torch.Tensor:
    """Least-squares GAN loss for the generator."""
    loss = 0.0
    for fake in scores_fake:
        loss = loss + ((1.0 - fake) ** 2).mean()
    return loss


def feature_matching_loss(
    fmaps_real: list[list[torch.Tensor]], fmaps_fake: list[list[torch.Tensor]]
) -> torch.Tensor:
    """Mean absolute difference between real and fake feature maps."""
    loss = 0.0
    for real_maps, fake_maps in zip(fmaps_real, fmaps_fake):
        for real, fake in zip(real_maps, fake_maps):
            loss = loss + (real.detach() - fake).abs().mean()
    return loss


@dataclass
class LossReport:
    """All loss terms logged for one training step."""

    l_rec: float
    l_melpre: float
    l_kl: float
    l_dur: float
    l_g: float
    l_d: float
    total_g: float

    def validate(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise LossError(f"non-finite loss term {f.name}: {value}")
        component_sum = self.l_rec + self.l_melpre + self.l_kl + self.l_dur + self.l_g
        if abs(self.total_g - component_sum) > 1e-6:
            raise LossError(
                f"total_g {self.total_g} does not decompose into its components ({component_sum})"
            )
        if self.l_kl < -1e-5:
            raise LossError(f"KL term is negative beyond tolerance: {self.l_kl}")

    def to_record(self, step: int, wall_time: float) -> str:
        data = {"step": step, "wall_time": wall_time}
        data.update({f.name: getattr(self, f.name) for f in fields(self)})
        return json.dumps(data)

    @classmethod
    def from_record(cls, line: str) -> tuple[int, "LossReport"]:
        data = json.loads(line)
        step = int(data.pop("step"))
        data.pop("wall_time", None)
        return step, cls(**data)
