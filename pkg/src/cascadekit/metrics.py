"""Accuracy, expected calibration error, and per-group report tables.

ECE buckets predictions into equal-width confidence bins over [0, 1]
(intervals (lower, upper], first bin closed at 0) and averages the
absolute gap between per-bin accuracy and per-bin mean confidence,
weighted by bin occupancy. Group tables report both the unweighted mean
over groups (macro) and the pooled accuracy (micro).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .calibration import confidence
from .cascade import RunSummary
from .data import CLASSIFICATION, AlignedDataset
from .errors import MetricsError


@dataclass(frozen=True)
class ReliabilityBin:
    lower: float
    upper: float
    count: int
    mean_confidence: float | None  # absent (not zero) when the bin is empty
    accuracy: float | None

    def to_json(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "count": self.count,
            "mean_confidence": self.mean_confidence,
            "accuracy": self.accuracy,
        }


@dataclass(frozen=True)
class CalibrationReport:
    ece: float
    bins: tuple[ReliabilityBin, ...]
    n: int
    scope: str

    def to_json(self) -> dict:
        return {
            "ece": self.ece,
            "ece_percent": 100.0 * self.ece,
            "n": self.n,
            "scope": self.scope,
            "bins": [b.to_json() for b in self.bins],
        }


def ece(
    confidences: Sequence[float],
    correctness: Sequence[bool],
    num_bins: int = 10,
    scope: str = "",
) -> CalibrationReport:
    """Expected calibration error over equal-width bins."""
    conf = np.asarray(confidences, dtype=np.float64)
    hits = np.asarray(correctness, dtype=np.float64)
    if conf.shape != hits.shape or conf.ndim != 1:
        raise MetricsError(
            f"confidences and correctness must be equal-length vectors, got {conf.shape} vs {hits.shape}"
        )
    if conf.size == 0:
        raise MetricsError("cannot compute ECE on an empty sample")
    if num_bins < 1:
        raise MetricsError(f"num_bins must be >= 1, got {num_bins}")
    if np.any(conf < 0) or np.any(conf > 1):
        raise MetricsError("confidences must lie in [0, 1]")

    # bin b holds (b/num_bins, (b+1)/num_bins]; confidence 0 goes to bin 0
    idx = np.ceil(conf * num_bins).astype(int) - 1
    idx = np.clip(idx, 0, num_bins - 1)

    n = conf.size
    total = 0.0
    bins = []
    for b in range(num_bins):
        members = idx == b
        count = int(members.sum())
        lower, upper = b / num_bins, (b + 1) / num_bins
        if count == 0:
            bins.append(ReliabilityBin(lower, upper, 0, None, None))
            continue
        mean_conf = float(conf[members].mean())
        acc = float(hits[members].mean())
        total += (count / n) * abs(acc - mean_conf)
        bins.append(ReliabilityBin(lower, upper, count, mean_conf, acc))
    return CalibrationReport(ece=total, bins=tuple(bins), n=n, scope=scope)


def bins_to_csv(report: CalibrationReport) -> str:
    lines = ["lower,upper,count,mean_conf,acc"]
    for b in report.bins:
        mean_conf = "" if b.mean_confidence is None else repr(b.mean_confidence)
        acc = "" if b.accuracy is None else repr(b.accuracy)
        lines.append(f"{b.lower!r},{b.upper!r},{b.count},{mean_conf},{acc}")
    return "\n".join(lines) + "\n"


def group_report(
    correct: Sequence[bool | None],
    groups: Sequence[str],
    only_groups: Sequence[str] | None = None,
) -> dict:
    """Per-group accuracy plus macro (unweighted over groups) and micro averages."""
    if len(correct) != len(groups):
        raise MetricsError(
            f"correct and groups must be equal length, got {len(correct)} vs {len(groups)}"
        )
    present = sorted(set(groups))
    if only_groups is not None:
        unknown = sorted(set(only_groups) - set(present))
        if unknown:
            raise MetricsError(f"unknown groups in filter: {unknown}")
        present = sorted(only_groups)

    per_group = {}
    group_accs = []
    pooled_hits = 0
    pooled_n = 0
    for g in present:
        judged = [c for c, gg in zip(correct, groups) if gg == g and c is not None]
        acc = sum(judged) / len(judged) if judged else None
        per_group[g] = {"n": len(judged), "accuracy": acc}
        if acc is not None:
            group_accs.append(acc)
            pooled_hits += sum(judged)
            pooled_n += len(judged)
    return {
        "per_group": per_group,
        "macro_accuracy": sum(group_accs) / len(group_accs) if group_accs else None,
        "micro_accuracy": pooled_hits / pooled_n if pooled_n else None,
        "n": pooled_n,
    }


def cascade_ece_scopes(
    run: RunSummary,
    dataset: AlignedDataset,
    num_bins: int = 10,
) -> tuple[CalibrationReport, CalibrationReport]:
    """Calibration of the smallest model alone vs. the cascade's final answers.

    The first-stage report scores every example with the stage-0
    confidence and the stage-0 prediction's correctness; the cascade-final
    report uses each example's exit-stage confidence and the correctness
    of the answer the cascade actually emitted.
    """
    if run.mode != CLASSIFICATION or dataset.mode != CLASSIFICATION:
        raise MetricsError("ECE scopes are defined for classification confidences only")
    if len(run.decisions) != len(dataset):
        raise MetricsError(
            f"run covers {len(run.decisions)} examples but dataset has {len(dataset)}"
        )
    stage0_model = dataset.examples[0].stage_records[0].model_id
    t0 = run.temperatures.get(stage0_model, 1.0)

    first_conf, first_hit = [], []
    final_conf, final_hit = [], []
    for decision, example in zip(run.decisions, dataset.examples):
        if decision.example_id != example.example_id:
            raise MetricsError(
                f"run/dataset order mismatch at '{decision.example_id}' vs '{example.example_id}'"
            )
        if example.label is None:
            continue
        conf0, pred0 = confidence(example.stage_records[0].logits, t0)
        first_conf.append(conf0)
        first_hit.append(pred0 == example.label)
        final_conf.append(decision.per_stage_confidence[-1])
        final_hit.append(bool(decision.correct))
    if not first_conf:
        raise MetricsError("no labeled examples to score")
    return (
        ece(first_conf, first_hit, num_bins, scope="first-stage"),
        ece(final_conf, final_hit, num_bins, scope="cascade-final"),
    )
