"""Cascade routing: walk each example up the model ladder until confident.

Classification exits at the first stage whose max scaled-softmax
probability strictly exceeds the threshold; generation exits when the
relevance-weighted sequence entropy drops below it. The last stage always
answers. Cost is cumulative: every visited stage is paid for, since a
model must run to produce the confidence that triggers escalation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .calibration import (
    SimilarityFn,
    Temperature,
    confidence,
    relevance_scores,
    sequence_confidence,
)
from .data import (
    CLASSIFICATION,
    GENERATION,
    AlignedDataset,
    AlignedExample,
    ModelLadder,
)
from .errors import RoutingError


@dataclass(frozen=True)
class CascadeDecision:
    """Routing trace for one example."""

    example_id: str
    group: str
    stages_visited: tuple[int, ...]
    per_stage_confidence: tuple[float, ...]
    chosen_stage: int
    prediction: int | str
    cost: float
    correct: bool | None

    def to_json(self) -> dict:
        return {
            "example_id": self.example_id,
            "group": self.group,
            "stages_visited": list(self.stages_visited),
            "per_stage_confidence": list(self.per_stage_confidence),
            "chosen_stage": self.chosen_stage,
            "prediction": self.prediction,
            "cost": self.cost,
            "correct": self.correct,
        }


@dataclass(frozen=True)
class RunSummary:
    """Aggregate outcome of routing a dataset at one threshold."""

    decisions: tuple[CascadeDecision, ...]
    mean_cost: float
    speedup: float
    accuracy: float | None
    exit_counts: tuple[int, ...]
    per_group: dict
    threshold: float
    mode: str
    temperatures: dict

    @property
    def n(self) -> int:
        return len(self.decisions)

    def to_json(self, include_decisions: bool = False) -> dict:
        obj = {
            "n": self.n,
            "mean_cost": self.mean_cost,
            "speedup": self.speedup,
            "accuracy": self.accuracy,
            "exit_counts": list(self.exit_counts),
            "per_group": self.per_group,
            "threshold": self.threshold,
            "mode": self.mode,
            "temperatures": self.temperatures,
        }
        if include_decisions:
            obj["decisions"] = [d.to_json() for d in self.decisions]
        return obj


def normalize_answer(text: str) -> str:
    return text.strip().lower()


def answers_match(prediction: str, reference: str) -> bool:
    """Exact match after trim+lowercase; numeric strings compare as numbers."""
    a, b = normalize_answer(prediction), normalize_answer(reference)
    try:
        return float(a) == float(b)
    except ValueError:
        return a == b


def _stage_temperatures(
    ladder: ModelLadder,
    temperatures: Mapping[str, Temperature | float] | None,
) -> list[float]:
    """Per-stage T values; uncalibrated mode (None) substitutes T = 1."""
    if temperatures is None:
        return [1.0] * ladder.num_stages
    values = []
    for profile in ladder.profiles:
        if profile.model_id not in temperatures:
            raise RoutingError(
                f"no temperature for ladder model '{profile.model_id}'"
            )
        t = temperatures[profile.model_id]
        values.append(t.value if isinstance(t, Temperature) else float(t))
    return values


def route_example(
    example: AlignedExample,
    ladder: ModelLadder,
    temperatures: Mapping[str, Temperature | float] | None,
    threshold: float,
    mode: str,
    similarity: str | SimilarityFn = "constant_zero",
) -> CascadeDecision:
    """Walk stages in ascending order and exit per the mode's confidence test."""
    stage_t = _stage_temperatures(ladder, temperatures)
    visited: list[int] = []
    confidences: list[float] = []
    cost = 0.0
    last = ladder.num_stages - 1
    for stage in range(ladder.num_stages):
        record = example.stage_records[stage]
        visited.append(stage)
        cost += ladder.profiles[stage].cost_units
        if mode == CLASSIFICATION:
            conf, predicted = confidence(record.logits, stage_t[stage])
            confidences.append(conf)
            exit_now = conf > threshold
            prediction: int | str = predicted
            correct = None if example.label is None else predicted == example.label
        else:
            rel = relevance_scores(record.token_ids, similarity)
            entropy = sequence_confidence(record.token_probs, rel).entropy
            confidences.append(entropy)
            exit_now = entropy < threshold
            prediction = record.answer_text
            correct = (
                None
                if example.reference_answer is None
                else answers_match(record.answer_text, example.reference_answer)
            )
        if exit_now or stage == last:
            return CascadeDecision(
                example_id=example.example_id,
                group=example.group,
                stages_visited=tuple(visited),
                per_stage_confidence=tuple(confidences),
                chosen_stage=stage,
                prediction=prediction,
                cost=cost,
                correct=correct,
            )
    raise AssertionError("unreachable: last stage always exits")


def _accuracy(decisions: Sequence[CascadeDecision]) -> float | None:
    judged = [d.correct for d in decisions if d.correct is not None]
    if not judged:
        return None
    return sum(judged) / len(judged)


def route_dataset(
    dataset: AlignedDataset,
    ladder: ModelLadder,
    temperatures: Mapping[str, Temperature | float] | None,
    threshold: float,
    mode: str | None = None,
    similarity: str | SimilarityFn = "constant_zero",
) -> RunSummary:
    """Route every example (in fixed example order) and aggregate."""
    if mode is None:
        mode = dataset.mode
    elif mode != dataset.mode:
        raise RoutingError(f"requested mode '{mode}' but dataset is '{dataset.mode}'")
    if len(dataset) == 0:
        raise RoutingError("cannot route an empty dataset")

    decisions = []
    for example in dataset.examples:
        try:
            decisions.append(
                route_example(example, ladder, temperatures, threshold, mode, similarity)
            )
        except RoutingError:
            raise
        except Exception as e:  # attach example context to lower-level failures
            raise RoutingError(f"example '{example.example_id}': {e}") from e

    mean_cost = sum(d.cost for d in decisions) / len(decisions)
    speedup = ladder.costs[-1] / mean_cost
    exit_counts = [0] * ladder.num_stages
    for d in decisions:
        exit_counts[d.chosen_stage] += 1

    per_group = {}
    for group in sorted({d.group for d in decisions}):
        members = [d for d in decisions if d.group == group]
        group_mean = sum(d.cost for d in members) / len(members)
        per_group[group] = {
            "n": len(members),
            "accuracy": _accuracy(members),
            "mean_cost": group_mean,
            "speedup": ladder.costs[-1] / group_mean,
        }

    stage_t = _stage_temperatures(ladder, temperatures)
    return RunSummary(
        decisions=tuple(decisions),
        mean_cost=mean_cost,
        speedup=speedup,
        accuracy=_accuracy(decisions),
        exit_counts=tuple(exit_counts),
        per_group=per_group,
        threshold=threshold,
        mode=mode,
        temperatures={
            p.model_id: stage_t[p.stage_index] for p in ladder.profiles
        },
    )
