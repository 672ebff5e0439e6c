"""Relative duration deviation: per-speaker timing comparison of conversions.

The metric between two average phoneme durations is
``|d_conv - d_ref| / d_ref * 100`` (a non-negative percentage, asymmetric in
its arguments).  A report compares conversions against their own sources,
against the target speaker's reference speech, and sources against targets:

* vs. source: conversions pair with sources by utterance ID; the column is
  the mean per-utterance deviation over the paired IDs (an empty pairing is
  an error).
* vs. target: the speaker-level average phoneme duration (total frames over
  total phonemes) of the conversions against the target's reference set;
  reference utterances need not be parallel.
* source vs. target: the same speaker-level comparison for the sources.

Column averages are plain arithmetic means over the per-speaker rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

AVERAGE_NOTE = (
    "Column averages are unweighted arithmetic means of the per-speaker rows."
)


class EvaluationError(ValueError):
    """Raised for missing pairings or malformed duration profiles."""


def rdd(d_conv: float, d_ref: float) -> float:
    """Percentage deviation of an average duration from a reference."""
    if d_ref <= 0:
        raise EvaluationError(f"reference duration must be positive, got {d_ref}")
    return abs(d_conv - d_ref) / d_ref * 100.0


@dataclass
class DurationProfile:
    """Per-phoneme frame counts for one utterance."""

    utterance_id: str
    durations: np.ndarray

    def __post_init__(self) -> None:
        self.durations = np.asarray(self.durations, dtype=np.float64)
        if self.durations.size == 0:
            raise EvaluationError(f"{self.utterance_id}: empty duration profile")

    @property
    def avg_phoneme_duration(self) -> float:
        return float(self.durations.sum() / self.durations.size)


ProfileGroups = dict[str, dict[str, DurationProfile]]


def load_profile_file(path: str | Path) -> list[DurationProfile]:
    """Profile format: ``utterance_id d1 d2 ...`` per line, whitespace-split."""
    profiles = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) < 2:
            raise EvaluationError(f"{path}:{lineno}: expected 'id d1 d2 ...', got {line!r}")
        try:
            durations = np.array([float(p) for p in parts[1:]])
        except ValueError as exc:
            raise EvaluationError(f"{path}:{lineno}: non-numeric duration") from exc
        profiles.append(DurationProfile(parts[0], durations))
    return profiles


def save_profile_file(profiles: list[DurationProfile], path: str | Path) -> None:
    lines = []
    for p in profiles:
        rendered = " ".join(
            str(int(d)) if float(d).is_integer() else repr(float(d)) for d in p.durations
        )
        lines.append(f"{p.utterance_id} {rendered}")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_profile_groups(path: str | Path) -> ProfileGroups:
    """Speaker-keyed profiles: a directory of ``<speaker>.txt`` files, or a
    single profile file whose stem names the one group."""
    path = Path(path)
    files = sorted(path.glob("*.txt")) if path.is_dir() else [path]
    if not files:
        raise EvaluationError(f"no profile files found under {path}")
    groups: ProfileGroups = {}
    for file in files:
        profiles = load_profile_file(file)
        groups[file.stem] = {p.utterance_id: p for p in profiles}
    return groups


def _pooled_average(profiles: dict[str, DurationProfile]) -> float:
    total = sum(float(p.durations.sum()) for p in profiles.values())
    count = sum(int(p.durations.size) for p in profiles.values())
    return total / count


@dataclass
class RddRow:
    speaker: str
    rdd_source: float
    rdd_target: float
    rdd_source_target: float


@dataclass
class RddReport:
    rows: list[RddRow]
    avg_source: float = field(init=False)
    avg_target: float = field(init=False)
    avg_source_target: float = field(init=False)
    note: str = AVERAGE_NOTE

    def __post_init__(self) -> None:
        if not self.rows:
            raise EvaluationError("no speakers to report")
        self.avg_source = float(np.mean([r.rdd_source for r in self.rows]))
        self.avg_target = float(np.mean([r.rdd_target for r in self.rows]))
        self.avg_source_target = float(np.mean([r.rdd_source_target for r in self.rows]))


def rdd_report(
    conv: ProfileGroups, source: ProfileGroups, target: ProfileGroups
) -> RddReport:
    """Per-speaker duration-deviation rows plus column averages."""
    rows = []
    for speaker in sorted(conv):
        conv_profiles = conv[speaker]
        if not conv_profiles:
            raise EvaluationError(f"speaker {speaker!r} has no converted utterances")
        source_profiles = source.get(speaker)
        if not source_profiles:
            raise EvaluationError(f"no source profiles for speaker {speaker!r}")
        target_profiles = target.get(speaker)
        if not target_profiles:
            raise EvaluationError(f"no target reference profiles for speaker {speaker!r}")

        paired = sorted(set(conv_profiles) & set(source_profiles))
        if not paired:
            raise EvaluationError(
                f"missing pairing: speaker {speaker!r} has no utterance IDs shared "
                "between converted and source profiles"
            )
        per_pair = [
            rdd(
                conv_profiles[uid].avg_phoneme_duration,
                source_profiles[uid].avg_phoneme_duration,
            )
            for uid in paired
        ]
        d_conv = _pooled_average(conv_profiles)
        d_source = _pooled_average(source_profiles)
        d_target = _pooled_average(target_profiles)
        rows.append(
            RddRow(
                speaker=speaker,
                rdd_source=float(np.mean(per_pair)),
                rdd_target=rdd(d_conv, d_target),
                rdd_source_target=rdd(d_source, d_target),
            )
        )
    return RddReport(rows)


def format_report(report: RddReport) -> str:
    """Plain-text table, two decimals per Table conventions."""
    header = f"{'Speaker':<12} {'RDD_source':>11} {'RDD_target':>11} {'RDD_src_tgt':>12}"
    lines = [header, "-" * len(header)]
    for row in report.rows:
        lines.append(
            f"{row.speaker:<12} {row.rdd_source:>10.2f}% {row.rdd_target:>10.2f}% "
            f"{row.rdd_source_target:>11.2f}%"
        )
    lines.append("-" * len(header))
    lines.append(
        f"{'Average':<12} {report.avg_source:>10.2f}% {report.avg_target:>10.2f}% "
        f"{report.avg_source_target:>11.2f}%"
    )
    lines.append(f"# {report.note}")
    return "\n".join(lines)
