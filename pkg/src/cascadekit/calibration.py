"""Confidence scoring and calibration primitives.

Classification confidence is the maximum softmax probability of the
temperature-scaled logits; T is fitted on a validation slice by minimizing
mean NLL. Training-time calibration uses the logit-normalized cross
entropy: standard cross entropy evaluated on l / (tau * ||l||_2), which is
invariant to rescaling of l and so cannot reward unbounded logit growth.
Generation confidence is a relevance-weighted mean token entropy (lower is
more confident).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import CalibrationError

DEFAULT_T_BOUNDS = (0.05, 20.0)
DEFAULT_FIT_TOL = 1e-4
DEFAULT_TAU = 0.04
NORM_EPSILON = 1e-12


@dataclass(frozen=True)
class Temperature:
    """Fitted scaling parameter for one model."""

    model_id: str
    value: float
    fit_nll: float
    fit_size: int
    pinned: bool = False

    def to_json(self) -> dict:
        return {
            "model_id": self.model_id,
            "T": self.value,
            "fit_nll": self.fit_nll,
            "fit_size": self.fit_size,
            "pinned": self.pinned,
        }

    @staticmethod
    def from_json(obj: dict) -> "Temperature":
        return Temperature(
            model_id=str(obj["model_id"]),
            value=float(obj["T"]),
            fit_nll=float(obj["fit_nll"]),
            fit_size=int(obj["fit_size"]),
            pinned=bool(obj.get("pinned", False)),
        )


@dataclass(frozen=True)
class LogitNormParams:
    tau: float = DEFAULT_TAU
    epsilon: float = NORM_EPSILON

    def __post_init__(self):
        if self.tau <= 0:
            raise CalibrationError(f"tau must be positive, got {self.tau}")
        if self.epsilon <= 0:
            raise CalibrationError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class SequenceConfidence:
    """Relevance-weighted mean token entropy for one generated sequence."""

    entropy: float
    per_token_entropies: tuple[float, ...]
    relevances: tuple[float, ...]


def _check_logits(logits) -> np.ndarray:
    arr = np.asarray(logits, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 2:
        raise CalibrationError(f"logits must be a vector of length >= 2, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise CalibrationError("logits contain non-finite values")
    return arr


def softmax(logits, temperature: float = 1.0) -> np.ndarray:
    """Temperature-scaled softmax, computed via max-subtraction."""
    arr = _check_logits(logits)
    if not (temperature > 0) or not math.isfinite(temperature):
        raise CalibrationError(f"temperature must be positive and finite, got {temperature}")
    scaled = arr / temperature
    scaled -= scaled.max()
    p = np.exp(scaled)
    return p / p.sum()


def confidence(logits, temperature: float = 1.0) -> tuple[float, int]:
    """Maximum scaled-softmax probability and the argmax class.

    Ties in the logits resolve to the lowest index. The argmax never
    depends on the temperature, only the scalar confidence does.
    """
    arr = _check_logits(logits)
    p = softmax(arr, temperature)
    predicted = int(np.argmax(arr))
    return float(p[predicted]), predicted


def _nll_curve(logits: np.ndarray, labels: np.ndarray):
    """Return f(T) = mean NLL of softmax(logits / T) at the given labels."""

    def f(temperature: float) -> float:
        scaled = logits / temperature
        shifted = scaled - scaled.max(axis=1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=1))
        log_py = shifted[np.arange(len(labels)), labels] - logz
        return float(-np.mean(log_py))

    return f


def _golden_section_min(f, lo: float, hi: float, tol: float) -> float:
    """Minimizer of f on [lo, hi] via golden-section search (one eval/step)."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def fit_temperature(
    val: Sequence[tuple[Sequence[float], int]],
    bounds: tuple[float, float] = DEFAULT_T_BOUNDS,
    tol: float = DEFAULT_FIT_TOL,
    model_id: str = "",
) -> Temperature:
    """Fit T by minimizing validation NLL with golden-section search on log T.

    Falls back to T = 1 when the optimum improves NLL by less than tol
    (temperature scaling is then a no-op rather than noise). An optimum
    stuck at either bound is returned but flagged as pinned.
    """
    if len(val) == 0:
        raise CalibrationError("temperature fit needs a non-empty validation set")
    logits = np.stack([_check_logits(l) for l, _ in val])
    labels = np.asarray([y for _, y in val], dtype=np.int64)
    q = logits.shape[1]
    if np.any(labels < 0) or np.any(labels >= q):
        raise CalibrationError(f"validation labels must lie in [0, {q})")
    t_min, t_max = bounds
    if not (0 < t_min < t_max):
        raise CalibrationError(f"invalid temperature bounds {bounds}")

    nll = _nll_curve(logits, labels)
    lo, hi = math.log(t_min), math.log(t_max)
    log_t = _golden_section_min(lambda x: nll(math.exp(x)), lo, hi, tol)
    t_star = math.exp(log_t)
    nll_star = nll(t_star)
    # prefer an exact bound when it is at least as good; the NLL can plateau
    # (float-saturated probabilities), leaving the search mid-plateau
    pinned = False
    for edge in (t_min, t_max):
        if nll(edge) <= nll_star:
            t_star, nll_star, pinned = edge, nll(edge), True
    nll_one = nll(1.0)
    if nll_star > nll_one - tol:
        return Temperature(model_id=model_id, value=1.0, fit_nll=nll_one, fit_size=len(val))
    return Temperature(
        model_id=model_id, value=t_star, fit_nll=nll_star, fit_size=len(val), pinned=pinned
    )


def _normalized_direction(logits: np.ndarray, params: LogitNormParams) -> tuple[np.ndarray, float]:
    norm = float(np.linalg.norm(logits))
    if norm <= params.epsilon:
        raise CalibrationError("logit vector has (near-)zero norm; direction undefined")
    return logits / (params.tau * norm), norm


def logitnorm_loss(logits, label: int, params: LogitNormParams = LogitNormParams()) -> float:
    """Cross entropy of softmax(l / (tau * ||l||)) at the true label."""
    arr = _check_logits(logits)
    if not 0 <= label < arr.size:
        raise CalibrationError(f"label {label} outside [0, {arr.size})")
    scaled, _ = _normalized_direction(arr, params)
    shifted = scaled - scaled.max()
    return float(np.log(np.exp(shifted).sum()) - shifted[label])


def logitnorm_grad(logits, label: int, params: LogitNormParams = LogitNormParams()) -> np.ndarray:
    """Analytic gradient of logitnorm_loss with respect to the logits.

    With g = l / (tau ||l||) and p = softmax(g), the chain rule gives
    grad = (r - (l.r / ||l||^2) l) / (tau ||l||) where r = p - onehot(y).
    The gradient is orthogonal to l (the loss is scale invariant).
    """
    arr = _check_logits(logits)
    if not 0 <= label < arr.size:
        raise CalibrationError(f"label {label} outside [0, {arr.size})")
    scaled, norm = _normalized_direction(arr, params)
    shifted = scaled - scaled.max()
    p = np.exp(shifted)
    p /= p.sum()
    r = p.copy()
    r[label] -= 1.0
    radial = float(arr @ r) / (norm * norm)
    return (r - radial * arr) / (params.tau * norm)


def logitnorm_loss_batch(
    logits: np.ndarray, labels: np.ndarray, params: LogitNormParams = LogitNormParams()
) -> np.ndarray:
    """Vectorized logitnorm_loss over rows of an (n, q) logits matrix."""
    norms = np.linalg.norm(logits, axis=1)
    if np.any(norms <= params.epsilon):
        raise CalibrationError("batch contains a (near-)zero-norm logit vector")
    scaled = logits / (params.tau * norms[:, None])
    shifted = scaled - scaled.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    return logz - shifted[np.arange(len(labels)), labels]


def logitnorm_grad_batch(
    logits: np.ndarray, labels: np.ndarray, params: LogitNormParams = LogitNormParams()
) -> np.ndarray:
    """Vectorized logitnorm_grad over rows of an (n, q) logits matrix."""
    norms = np.linalg.norm(logits, axis=1)
    if np.any(norms <= params.epsilon):
        raise CalibrationError("batch contains a (near-)zero-norm logit vector")
    scaled = logits / (params.tau * norms[:, None])
    shifted = scaled - scaled.max(axis=1, keepdims=True)
    p = np.exp(shifted)
    p /= p.sum(axis=1, keepdims=True)
    r = p
    r[np.arange(len(labels)), labels] -= 1.0
    radial = np.einsum("ij,ij->i", logits, r) / (norms * norms)
    return (r - radial[:, None] * logits) / (params.tau * norms[:, None])


def extract_class_logits(vocab_logits, class_token_ids: Sequence[int]) -> np.ndarray:
    """Pick per-class logits out of a vocabulary-sized logit vector."""
    arr = np.asarray(vocab_logits, dtype=np.float64)
    ids = [int(t) for t in class_token_ids]
    if len(ids) < 2:
        raise CalibrationError(f"need at least 2 class token IDs, got {len(ids)}")
    if len(set(ids)) != len(ids):
        raise CalibrationError(f"duplicate class token IDs: {ids}")
    for t in ids:
        if not 0 <= t < arr.size:
            raise CalibrationError(f"token ID {t} outside vocabulary of size {arr.size}")
    return arr[ids]


def token_entropy(p: float) -> float:
    """Entropy contribution -ln p of one generated token."""
    if not (0.0 < p <= 1.0):
        raise CalibrationError(f"token probability {p} outside (0, 1]")
    return -math.log(p)


def sequence_confidence(
    token_probs: Sequence[float], relevances: Sequence[float]
) -> SequenceConfidence:
    """Mean of per-token entropies discounted by relevance.

    E = (1/n) sum_i (-ln p_i) (1 - R_i); fully relevant tokens (R_i = 1)
    contribute nothing. Lower E means higher confidence.
    """
    if len(token_probs) != len(relevances):
        raise CalibrationError(
            f"token_probs length {len(token_probs)} != relevances length {len(relevances)}"
        )
    if len(token_probs) == 0:
        raise CalibrationError("cannot score an empty sequence")
    for r in relevances:
        if not (0.0 <= r <= 1.0):
            raise CalibrationError(f"relevance {r} outside [0, 1]")
    entropies = tuple(token_entropy(p) for p in token_probs)
    total = 0.0
    for e, r in zip(entropies, relevances):
        total += e * (1.0 - r)
    return SequenceConfidence(
        entropy=total / len(entropies),
        per_token_entropies=entropies,
        relevances=tuple(float(r) for r in relevances),
    )


SimilarityFn = Callable[[Sequence[int], Sequence[int]], float]


def constant_zero(full: Sequence[int], dropped: Sequence[int]) -> float:
    """Stand-in similarity that treats every token as fully informative."""
    return 0.0


def jaccard(full: Sequence[int], dropped: Sequence[int]) -> float:
    """Token-set Jaccard similarity between a sequence and its drop-one variant."""
    a, b = set(full), set(dropped)
    union = a | b
    if not union:
        return 1.0
    return len(a & b) / len(union)


SIMILARITIES: dict[str, SimilarityFn] = {
    "constant_zero": constant_zero,
    "jaccard": jaccard,
}


def resolve_similarity(fn: str | SimilarityFn) -> SimilarityFn:
    if callable(fn):
        return fn
    try:
        return SIMILARITIES[fn]
    except KeyError:
        raise CalibrationError(
            f"unknown similarity '{fn}'; available: {sorted(SIMILARITIES)}"
        )


def relevance_scores(token_ids: Sequence[int], similarity_fn: str | SimilarityFn) -> list[float]:
    """R_i = similarity(full sequence, sequence with token i removed)."""
    fn = resolve_similarity(similarity_fn)
    scores = []
    for i in range(len(token_ids)):
        dropped = list(token_ids[:i]) + list(token_ids[i + 1 :])
        r = float(fn(token_ids, dropped))
        if not (0.0 <= r <= 1.0):
            raise CalibrationError(
                f"similarity plug-in returned {r} outside [0, 1] for token index {i}"
            )
        scores.append(r)
    return scores
