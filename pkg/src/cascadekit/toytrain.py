"""Desk-scale trainer for end-to-end runs of the cascade pipeline.

Generates class-conditional Gaussian data where each synthetic group
applies a rotation plus a mean shift to the source geometry (a stand-in
for evaluation languages drifting away from the training language), trains
a small ladder of classifiers with either plain or logit-normalized cross
entropy, and dumps their logits in the standard JSONL format.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .calibration import (
    LogitNormParams,
    logitnorm_grad_batch,
    logitnorm_loss_batch,
)
from .data import (
    CLASSIFICATION,
    DumpHeader,
    LogitsRecord,
    ModelLadder,
    ModelProfile,
)
from .errors import TrainingError

CLASS_RADIUS = 2.2  # class-mean radius in the first (shift-exposed) plane
PLANE_DECAY = 0.85  # radius shrink per additional feature plane
AMBIGUOUS_FRAC = 0.08  # mixture weight of the shared center component

LOSS_CE = "ce"
LOSS_LOGITNORM = "logitnorm"


@dataclass(frozen=True)
class ShiftConfig:
    num_classes: int
    input_dim: int
    train_size: int
    dev_size: int
    test_size_per_group: int
    shift_magnitudes: tuple[float, ...]
    rotation_angles: tuple[float, ...]
    noise_scale: float
    seed: int

    def __post_init__(self):
        if self.num_classes < 2 or self.input_dim < 2:
            raise TrainingError("need num_classes >= 2 and input_dim >= 2")
        if min(self.train_size, self.dev_size, self.test_size_per_group) < 1:
            raise TrainingError("all split sizes must be >= 1")
        if len(self.shift_magnitudes) != len(self.rotation_angles):
            raise TrainingError("shift_magnitudes and rotation_angles must pair up")
        if not self.shift_magnitudes or self.shift_magnitudes[0] != 0.0:
            raise TrainingError("group 0 is the source domain: shift_magnitudes[0] must be 0")

    @property
    def num_groups(self) -> int:
        return len(self.shift_magnitudes)

    def to_json(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "input_dim": self.input_dim,
            "train_size": self.train_size,
            "dev_size": self.dev_size,
            "test_size_per_group": self.test_size_per_group,
            "shift_magnitudes": list(self.shift_magnitudes),
            "rotation_angles": list(self.rotation_angles),
            "noise_scale": self.noise_scale,
            "seed": self.seed,
        }

    @staticmethod
    def from_json(obj: dict) -> "ShiftConfig":
        return ShiftConfig(
            num_classes=int(obj["num_classes"]),
            input_dim=int(obj["input_dim"]),
            train_size=int(obj["train_size"]),
            dev_size=int(obj["dev_size"]),
            test_size_per_group=int(obj["test_size_per_group"]),
            shift_magnitudes=tuple(float(v) for v in obj["shift_magnitudes"]),
            rotation_angles=tuple(float(v) for v in obj["rotation_angles"]),
            noise_scale=float(obj["noise_scale"]),
            seed=int(obj["seed"]),
        )


@dataclass(frozen=True)
class Split:
    features: np.ndarray  # (n, input_dim)
    labels: np.ndarray  # (n,) int
    groups: tuple[str, ...]


@dataclass(frozen=True)
class ShiftedData:
    train: Split
    dev: Split
    test: Split  # all groups concatenated, tagged


def _group_means(config: ShiftConfig, group: int) -> np.ndarray:
    """Class means for one group.

    Class geometry is a circle repeated (with shrinking radius and a phase
    offset) across up to three disjoint feature planes. The group's
    rotation and mean shift hit only the first plane, so models that can
    read the later planes degrade less under shift; remaining dims are
    pure noise.
    """
    q, d = config.num_classes, config.input_dim
    angles = 2.0 * math.pi * np.arange(q) / q
    means = np.zeros((q, d))
    for plane in range(min(d // 2, 3)):
        radius = CLASS_RADIUS * PLANE_DECAY**plane
        phase = angles + plane * math.pi / q
        if plane == 0:
            phase = phase + config.rotation_angles[group]
        means[:, 2 * plane] += radius * np.cos(phase)
        means[:, 2 * plane + 1] += radius * np.sin(phase)
    shift = config.shift_magnitudes[group] / math.sqrt(2.0)
    means[:, 0] += shift
    means[:, 1] += shift
    return means


def gen_shift(config: ShiftConfig) -> ShiftedData:
    """Sample train/dev from the source group and test from every group.

    Each class is a two-component mixture: the main mass at the class mean
    plus a small shared component at the center of the group's geometry.
    The center component overlaps identically across classes, giving every
    split an irreducible error floor (the analog of label noise in real
    annotated data) no matter how far apart the class means sit.
    """
    rng = np.random.default_rng(config.seed)

    def sample(n: int, group: int) -> Split:
        means = _group_means(config, group)
        center = means.mean(axis=0)
        labels = rng.integers(0, config.num_classes, size=n)
        ambiguous = rng.random(n) < AMBIGUOUS_FRAC
        noise = rng.standard_normal((n, config.input_dim))
        features = np.where(ambiguous[:, None], center, means[labels])
        features = features + config.noise_scale * noise
        return Split(features, labels, tuple([f"g{group}"] * n))

    train = sample(config.train_size, 0)
    dev = sample(config.dev_size, 0)
    parts = [sample(config.test_size_per_group, g) for g in range(config.num_groups)]
    test = Split(
        features=np.concatenate([p.features for p in parts]),
        labels=np.concatenate([p.labels for p in parts]),
        groups=tuple(g for p in parts for g in p.groups),
    )
    return ShiftedData(train=train, dev=dev, test=test)


@dataclass(frozen=True)
class ModelSpec:
    """Architecture of one ladder stage.

    kind 'limited_linear' sees only the first limit_dims input features,
    'linear' sees all of them, 'mlp' adds one tanh hidden layer.
    """

    model_id: str
    kind: str  # limited_linear | linear | mlp
    limit_dims: int | None = None
    hidden_dim: int | None = None

    @staticmethod
    def from_json(obj: dict) -> "ModelSpec":
        return ModelSpec(
            model_id=str(obj["model_id"]),
            kind=str(obj["kind"]),
            limit_dims=obj.get("limit_dims"),
            hidden_dim=obj.get("hidden_dim"),
        )


@dataclass
class ToyModel:
    model_id: str
    weights: np.ndarray  # (in_features, q) output layer
    bias: np.ndarray  # (q,)
    hidden_weights: np.ndarray | None = None  # (in_features, hidden)
    hidden_bias: np.ndarray | None = None
    loss_kind: str = LOSS_CE
    tau: float = 0.04
    seed: int = 0

    @property
    def in_features(self) -> int:
        if self.hidden_weights is not None:
            return self.hidden_weights.shape[0]
        return self.weights.shape[0]

    @property
    def param_count(self) -> int:
        count = self.weights.size + self.bias.size
        if self.hidden_weights is not None:
            count += self.hidden_weights.size + self.hidden_bias.size
        return count

    def logits(self, features: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(features)[:, : self.in_features]
        if self.hidden_weights is not None:
            x = np.tanh(x @ self.hidden_weights + self.hidden_bias)
        return x @ self.weights + self.bias

    def to_json(self) -> dict:
        obj = {
            "model_id": self.model_id,
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "loss_kind": self.loss_kind,
            "tau": self.tau,
            "seed": self.seed,
        }
        if self.hidden_weights is not None:
            obj["hidden_weights"] = self.hidden_weights.tolist()
            obj["hidden_bias"] = self.hidden_bias.tolist()
        return obj

    @staticmethod
    def from_json(obj: dict) -> "ToyModel":
        return ToyModel(
            model_id=str(obj["model_id"]),
            weights=np.asarray(obj["weights"], dtype=np.float64),
            bias=np.asarray(obj["bias"], dtype=np.float64),
            hidden_weights=(
                np.asarray(obj["hidden_weights"], dtype=np.float64)
                if "hidden_weights" in obj
                else None
            ),
            hidden_bias=(
                np.asarray(obj["hidden_bias"], dtype=np.float64)
                if "hidden_bias" in obj
                else None
            ),
            loss_kind=str(obj["loss_kind"]),
            tau=float(obj["tau"]),
            seed=int(obj["seed"]),
        )


def init_model(
    spec: ModelSpec,
    input_dim: int,
    num_classes: int,
    loss_kind: str,
    tau: float,
    seed: int,
) -> ToyModel:
    """Small deterministic init; never exactly zero so logit norms stay positive."""
    rng = np.random.default_rng(seed)
    if spec.kind == "limited_linear":
        if not spec.limit_dims or not 1 <= spec.limit_dims <= input_dim:
            raise TrainingError(
                f"limited_linear needs limit_dims in [1, {input_dim}], got {spec.limit_dims}"
            )
        in_features, hidden = spec.limit_dims, None
    elif spec.kind == "linear":
        in_features, hidden = input_dim, None
    elif spec.kind == "mlp":
        if not spec.hidden_dim or spec.hidden_dim < 1:
            raise TrainingError(f"mlp needs hidden_dim >= 1, got {spec.hidden_dim}")
        in_features, hidden = input_dim, spec.hidden_dim
    else:
        raise TrainingError(f"unknown model kind '{spec.kind}'")

    scale = 0.05
    hidden_weights = hidden_bias = None
    if hidden is not None:
        hidden_weights = scale * rng.standard_normal((in_features, hidden))
        hidden_bias = scale * rng.standard_normal(hidden)
        out_in = hidden
    else:
        out_in = in_features
    return ToyModel(
        model_id=spec.model_id,
        weights=scale * rng.standard_normal((out_in, num_classes)),
        bias=scale * rng.standard_normal(num_classes),
        hidden_weights=hidden_weights,
        hidden_bias=hidden_bias,
        loss_kind=loss_kind,
        tau=tau,
        seed=seed,
    )


def _ce_loss_batch(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    return logz - shifted[np.arange(len(labels)), labels]


def _ce_grad_batch(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(shifted)
    p /= p.sum(axis=1, keepdims=True)
    p[np.arange(len(labels)), labels] -= 1.0
    return p


def loss_and_grads(
    model: ToyModel, features: np.ndarray, labels: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean loss over the batch and analytic gradients for every parameter."""
    x = np.atleast_2d(features)[:, : model.in_features]
    n = x.shape[0]
    if model.hidden_weights is not None:
        hidden = np.tanh(x @ model.hidden_weights + model.hidden_bias)
        logits = hidden @ model.weights + model.bias
    else:
        hidden = None
        logits = x @ model.weights + model.bias

    if model.loss_kind == LOSS_CE:
        losses = _ce_loss_batch(logits, labels)
        dlogits = _ce_grad_batch(logits, labels)
    elif model.loss_kind == LOSS_LOGITNORM:
        params = LogitNormParams(tau=model.tau)
        losses = logitnorm_loss_batch(logits, labels, params)
        dlogits = logitnorm_grad_batch(logits, labels, params)
    else:
        raise TrainingError(f"unknown loss kind '{model.loss_kind}'")

    dlogits = dlogits / n
    grads: dict[str, np.ndarray] = {}
    if hidden is not None:
        grads["weights"] = hidden.T @ dlogits
        grads["bias"] = dlogits.sum(axis=0)
        dhidden = (dlogits @ model.weights.T) * (1.0 - hidden * hidden)
        grads["hidden_weights"] = x.T @ dhidden
        grads["hidden_bias"] = dhidden.sum(axis=0)
    else:
        grads["weights"] = x.T @ dlogits
        grads["bias"] = dlogits.sum(axis=0)
    return float(losses.mean()), grads


def train(
    data: Split,
    spec: ModelSpec,
    loss_kind: str,
    tau: float = 0.04,
    learning_rate: float = 0.5,
    epochs: int = 40,
    batch_size: int = 32,
    seed: int = 0,
) -> ToyModel:
    """Mini-batch gradient descent with seed-fixed init and shuffling."""
    num_classes = int(data.labels.max()) + 1
    model = init_model(spec, data.features.shape[1], num_classes, loss_kind, tau, seed)
    rng = np.random.default_rng(seed + 1)
    n = data.features.shape[0]
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = order[start : start + batch_size]
            loss, grads = loss_and_grads(model, data.features[batch], data.labels[batch])
            if not math.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {start // batch_size}"
                )
            model.weights -= learning_rate * grads["weights"]
            model.bias -= learning_rate * grads["bias"]
            if model.hidden_weights is not None:
                model.hidden_weights -= learning_rate * grads["hidden_weights"]
                model.hidden_bias -= learning_rate * grads["hidden_bias"]
    return model


def training_accuracy(model: ToyModel, data: Split) -> float:
    predictions = model.logits(data.features).argmax(axis=1)
    return float((predictions == data.labels).mean())


def mean_max_prob(model: ToyModel, features: np.ndarray) -> float:
    """Average top softmax probability; the overconfidence yardstick."""
    logits = model.logits(features)
    shifted = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(shifted)
    p /= p.sum(axis=1, keepdims=True)
    return float(p.max(axis=1).mean())


def median_logit_norm(model: ToyModel, features: np.ndarray) -> float:
    return float(np.median(np.linalg.norm(model.logits(features), axis=1)))


def build_ladder(models: Sequence[ToyModel], num_classes: int) -> ModelLadder:
    """Ladder whose cost units are the models' parameter counts."""
    profiles = tuple(
        ModelProfile(model_id=m.model_id, stage_index=i, cost_units=float(m.param_count))
        for i, m in enumerate(models)
    )
    return ModelLadder(profiles, num_classes)


def dump_logits(
    models: Sequence[ToyModel],
    split: Split,
    num_classes: int,
    id_prefix: str = "ex",
) -> tuple[DumpHeader, list[LogitsRecord]]:
    """One record per (example, model) in the standard dump schema."""
    for m in models:
        if m.weights.shape[1] != num_classes:
            raise TrainingError(
                f"model '{m.model_id}' emits {m.weights.shape[1]} classes, dataset has {num_classes}"
            )
    header = DumpHeader(num_classes=num_classes, mode=CLASSIFICATION)
    records = []
    per_model_logits = [m.logits(split.features) for m in models]
    for i in range(split.features.shape[0]):
        example_id = f"{id_prefix}{i:05d}"
        for m, logits in zip(models, per_model_logits):
            records.append(
                LogitsRecord(
                    example_id=example_id,
                    model_id=m.model_id,
                    logits=tuple(float(v) for v in logits[i]),
                    group=split.groups[i],
                    label=int(split.labels[i]),
                )
            )
    return header, records


def save_splits(path, data: ShiftedData) -> None:
    np.savez(
        path,
        train_x=data.train.features,
        train_y=data.train.labels,
        train_g=np.array(data.train.groups),
        dev_x=data.dev.features,
        dev_y=data.dev.labels,
        dev_g=np.array(data.dev.groups),
        test_x=data.test.features,
        test_y=data.test.labels,
        test_g=np.array(data.test.groups),
    )


def load_splits(path) -> ShiftedData:
    with np.load(path, allow_pickle=False) as z:
        def split(prefix: str) -> Split:
            return Split(
                features=z[f"{prefix}_x"],
                labels=z[f"{prefix}_y"],
                groups=tuple(str(g) for g in z[f"{prefix}_g"]),
            )

        return ShiftedData(train=split("train"), dev=split("dev"), test=split("test"))
