"""Calibrated model-cascade routing over precomputed logits dumps."""

__version__ = "0.1.0"

from .calibration import (
    LogitNormParams,
    SequenceConfidence,
    Temperature,
    confidence,
    extract_class_logits,
    fit_temperature,
    logitnorm_grad,
    logitnorm_loss,
    relevance_scores,
    sequence_confidence,
    softmax,
    token_entropy,
)
from .cascade import CascadeDecision, RunSummary, route_dataset, route_example
from .data import (
    AlignedDataset,
    DumpHeader,
    GenerationRecord,
    LogitsRecord,
    ModelLadder,
    ModelProfile,
    align,
    parse_logits_file,
    serialize_records,
)
from .errors import CascadeKitError
from .metrics import CalibrationReport, ReliabilityBin, cascade_ece_scopes, ece, group_report
from .thresholds import SolveResult, SweepPoint, candidate_thresholds, solve_for_speedup, sweep

__all__ = [
    "__version__",
    "AlignedDataset",
    "CalibrationReport",
    "CascadeDecision",
    "CascadeKitError",
    "DumpHeader",
    "GenerationRecord",
    "LogitNormParams",
    "LogitsRecord",
    "ModelLadder",
    "ModelProfile",
    "ReliabilityBin",
    "RunSummary",
    "SequenceConfidence",
    "SolveResult",
    "SweepPoint",
    "Temperature",
    "align",
    "candidate_thresholds",
    "cascade_ece_scopes",
    "confidence",
    "ece",
    "extract_class_logits",
    "fit_temperature",
    "group_report",
    "logitnorm_grad",
    "logitnorm_loss",
    "parse_logits_file",
    "relevance_scores",
    "route_dataset",
    "route_example",
    "sequence_confidence",
    "serialize_records",
    "softmax",
    "solve_for_speedup",
    "sweep",
    "token_entropy",
]
