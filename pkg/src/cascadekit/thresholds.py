"""Threshold solving and accuracy/speed-up sweeps.

The speed-up S(lambda) of a cascade on a fixed dataset is a step function:
routing outcomes only change at observed per-stage confidence values, so
exact enumeration over those candidates beats any iterative search at desk
scale. Thresholds are solved on a dev split and applied to test.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .calibration import SimilarityFn, Temperature, confidence, relevance_scores, sequence_confidence
from .cascade import _stage_temperatures, answers_match
from .data import CLASSIFICATION, AlignedDataset, ModelLadder
from .errors import SolverError

DEFAULT_REL_TOL = 0.05


@dataclass(frozen=True)
class SweepPoint:
    threshold: float
    speedup: float
    accuracy: float | None
    mean_cost: float
    exit_histogram: tuple[int, ...]

    def to_json(self) -> dict:
        return {
            "lambda": self.threshold,
            "speedup": self.speedup,
            "accuracy": self.accuracy,
            "mean_cost": self.mean_cost,
            "exit_histogram": list(self.exit_histogram),
        }


@dataclass(frozen=True)
class SolveResult:
    threshold: float
    achieved_speedup: float
    target_speedup: float
    attainable: bool
    ceiling_speedup: float | None

    def to_json(self) -> dict:
        return {
            "lambda": self.threshold,
            "achieved_speedup": self.achieved_speedup,
            "target_speedup": self.target_speedup,
            "attainable": self.attainable,
            "ceiling_speedup": self.ceiling_speedup,
        }


@dataclass(frozen=True)
class StageEvaluations:
    """Per-(example, stage) exit statistics, precomputed once.

    stats[i, s] is the stage-s confidence (classification) or sequence
    entropy (generation) of example i; correct[i, s] whether stage s would
    answer example i correctly (False when unlabeled, see labeled mask).
    """

    mode: str
    stats: np.ndarray  # (n, stages) float
    correct: np.ndarray  # (n, stages) bool
    labeled: np.ndarray  # (n,) bool
    costs: np.ndarray  # (stages,) cumulative cost of exiting at each stage
    last_cost: float


def evaluate_stages(
    dataset: AlignedDataset,
    ladder: ModelLadder,
    temperatures: Mapping[str, Temperature | float] | None,
    similarity: str | SimilarityFn = "constant_zero",
) -> StageEvaluations:
    """Evaluate every stage of every example (as if fully traversed)."""
    if len(dataset) == 0:
        raise SolverError("dataset is empty")
    stage_t = _stage_temperatures(ladder, temperatures)
    n, stages = len(dataset), ladder.num_stages
    stats = np.empty((n, stages))
    correct = np.zeros((n, stages), dtype=bool)
    labeled = np.zeros(n, dtype=bool)
    for i, example in enumerate(dataset.examples):
        for s in range(stages):
            record = example.stage_records[s]
            if dataset.mode == CLASSIFICATION:
                conf, predicted = confidence(record.logits, stage_t[s])
                stats[i, s] = conf
                if example.label is not None:
                    labeled[i] = True
                    correct[i, s] = predicted == example.label
            else:
                rel = relevance_scores(record.token_ids, similarity)
                stats[i, s] = sequence_confidence(record.token_probs, rel).entropy
                if example.reference_answer is not None:
                    labeled[i] = True
                    correct[i, s] = answers_match(
                        record.answer_text, example.reference_answer
                    )
    return StageEvaluations(
        mode=dataset.mode,
        stats=stats,
        correct=correct,
        labeled=labeled,
        costs=np.cumsum(ladder.costs),
        last_cost=ladder.costs[-1],
    )


def _exit_stages(ev: StageEvaluations, threshold: float) -> np.ndarray:
    """Exit stage per example: first stage passing the mode's exit test."""
    if ev.mode == CLASSIFICATION:
        passes = ev.stats > threshold
    else:
        passes = ev.stats < threshold
    last = ev.stats.shape[1] - 1
    exits = np.where(passes.any(axis=1), passes.argmax(axis=1), last)
    return exits


def point_at(ev: StageEvaluations, threshold: float) -> SweepPoint:
    """Routing outcome aggregates at one threshold."""
    exits = _exit_stages(ev, threshold)
    n, stages = ev.stats.shape
    mean_cost = float(ev.costs[exits].mean())
    hist = np.bincount(exits, minlength=stages)
    if ev.labeled.any():
        hits = ev.correct[np.arange(n), exits][ev.labeled]
        accuracy = float(hits.mean())
    else:
        accuracy = None
    return SweepPoint(
        threshold=float(threshold),
        speedup=ev.last_cost / mean_cost,
        accuracy=accuracy,
        mean_cost=mean_cost,
        exit_histogram=tuple(int(c) for c in hist),
    )


def candidate_thresholds(
    dataset: AlignedDataset,
    ladder: ModelLadder,
    temperatures: Mapping[str, Temperature | float] | None,
    similarity: str | SimilarityFn = "constant_zero",
) -> list[float]:
    """All thresholds at which routing outcomes can change, plus sentinels.

    Classification confidences live in [0, 1] so the sentinels are {0, 1};
    generation entropies are unbounded above, so the upper sentinel sits
    one past the observed maximum (which already forces every exit).
    """
    ev = evaluate_stages(dataset, ladder, temperatures, similarity)
    observed = np.unique(ev.stats)
    if ev.mode == CLASSIFICATION:
        sentinels = (0.0, 1.0)
    else:
        sentinels = (0.0, float(observed.max()) + 1.0)
    return sorted(set(float(v) for v in observed) | set(sentinels))


def solve_for_speedup(
    dataset: AlignedDataset,
    ladder: ModelLadder,
    temperatures: Mapping[str, Temperature | float] | None,
    target_speedup: float,
    rel_tol: float = DEFAULT_REL_TOL,
    similarity: str | SimilarityFn = "constant_zero",
) -> SolveResult:
    """Pick the candidate threshold whose achieved S is closest to the target.

    Ties break toward the smaller threshold (prefer accuracy over speed).
    When the target cannot be met within rel_tol the result also reports
    the ceiling: the largest achievable S, reached when every example
    exits at the first stage. A target above the ceiling is the
    overconfidence failure mode (confidences too concentrated to separate
    exit behaviors).
    """
    if not (0.0 < rel_tol < 1.0):
        raise SolverError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    ev = evaluate_stages(dataset, ladder, temperatures, similarity)
    best: SweepPoint | None = None
    ceiling = -np.inf
    for threshold in candidate_thresholds(dataset, ladder, temperatures, similarity):
        point = point_at(ev, threshold)
        ceiling = max(ceiling, point.speedup)
        if best is None or abs(point.speedup - target_speedup) < abs(
            best.speedup - target_speedup
        ):
            best = point
    assert best is not None
    attainable = abs(best.speedup - target_speedup) <= rel_tol * target_speedup
    return SolveResult(
        threshold=best.threshold,
        achieved_speedup=best.speedup,
        target_speedup=target_speedup,
        attainable=attainable,
        ceiling_speedup=None if attainable else float(ceiling),
    )


def sweep(
    dataset: AlignedDataset,
    ladder: ModelLadder,
    temperatures: Mapping[str, Temperature | float] | None,
    grid: Sequence[float] | str = "auto",
    similarity: str | SimilarityFn = "constant_zero",
) -> list[SweepPoint]:
    """One SweepPoint per threshold, sorted by threshold."""
    if isinstance(grid, str):
        if grid != "auto":
            raise SolverError(f"grid must be a list of thresholds or 'auto', got '{grid}'")
        thresholds = candidate_thresholds(dataset, ladder, temperatures, similarity)
    else:
        if len(grid) == 0:
            raise SolverError("grid is empty")
        thresholds = sorted(float(g) for g in grid)
    ev = evaluate_stages(dataset, ladder, temperatures, similarity)
    return [point_at(ev, t) for t in thresholds]


def sweep_to_csv(points: Sequence[SweepPoint], num_stages: int) -> str:
    header = ["lambda", "speedup", "accuracy", "mean_cost"]
    header += [f"exit_{s}" for s in range(num_stages)]
    lines = [",".join(header)]
    for p in points:
        row = [
            repr(p.threshold),
            repr(p.speedup),
            "" if p.accuracy is None else repr(p.accuracy),
            repr(p.mean_cost),
        ]
        row += [str(c) for c in p.exit_histogram]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"
