"""Pluggable external metrics (e.g. transcript error rates, speaker
similarity) without bundling the models that compute them.

A metric client is any callable ``(audio, reference) -> float``.  Clients are
registered by name and invoked per utterance with failures isolated, so one
bad file does not sink a whole evaluation run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

MetricClient = Callable[[np.ndarray, object], float]


class MetricError(ValueError):
    """Raised for duplicate registrations or unknown metric names."""


@dataclass
class MetricResult:
    utterance_id: str
    score: float | None
    error: str | None = None


@dataclass
class MetricReport:
    name: str
    results: list[MetricResult] = field(default_factory=list)

    @property
    def scores(self) -> list[float]:
        return [r.score for r in self.results if r.score is not None]

    @property
    def mean(self) -> float:
        scores = self.scores
        return float(np.mean(scores)) if scores else float("nan")


class MetricRegistry:
    def __init__(self) -> None:
        self._clients: dict[str, MetricClient] = {}

    def register(self, name: str, client: MetricClient) -> str:
        if name in self._clients:
            raise MetricError(f"metric {name!r} is already registered")
        if not callable(client):
            raise MetricError(f"metric client for {name!r} is not callable")
        self._clients[name] = client
        return name

    def unregister(self, name: str) -> None:
        self._clients.pop(name, None)

    def names(self) -> list[str]:
        return sorted(self._clients)

    def get(self, name: str) -> MetricClient:
        client = self._clients.get(name)
        if client is None:
            raise MetricError(
                f"unknown metric {name!r}; registered metrics: {self.names() or 'none'}"
            )
        return client

    def evaluate(
        self, name: str, pairs: list[tuple[str, np.ndarray, object]]
    ) -> MetricReport:
        """Score (utterance_id, audio, reference) triples one at a time."""
        client = self.get(name)
        report = MetricReport(name=name)
        for uid, audio, reference in pairs:
            try:
                score = float(client(audio, reference))
            except Exception as exc:  # isolate per-utterance failures
                report.results.append(MetricResult(uid, None, error=str(exc)))
            else:
                report.results.append(MetricResult(uid, score))
        return report


registry = MetricRegistry()


def register_metric(name: str, client: MetricClient) -> str:
    """Register on the process-wide registry used by the evaluation CLI."""
    return registry.register(name, client)
