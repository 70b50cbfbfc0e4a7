"""Record types, the JSONL dump format, and multi-model alignment.

A logits dump is line-delimited JSON: the first line is a header declaring
the number of classes and the mode, every following line is one record.
Classification records carry raw pre-softmax logits; generation records
carry per-token probabilities of a greedily decoded answer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Union

from .errors import AlignmentError, SchemaError

CLASSIFICATION = "classification"
GENERATION = "generation"


@dataclass(frozen=True)
class LogitsRecord:
    """One example's logits from one model (classification mode)."""

    example_id: str
    model_id: str
    logits: tuple[float, ...]
    group: str
    label: int | None = None
    raw_text: str | None = None

    def to_json(self) -> dict:
        obj = {
            "type": "logits",
            "example_id": self.example_id,
            "model_id": self.model_id,
            "logits": list(self.logits),
            "group": self.group,
        }
        if self.label is not None:
            obj["label"] = self.label
        if self.raw_text is not None:
            obj["raw_text"] = self.raw_text
        return obj


@dataclass(frozen=True)
class GenerationRecord:
    """Token-level probabilities for one generated answer from one model."""

    example_id: str
    model_id: str
    token_ids: tuple[int, ...]
    token_probs: tuple[float, ...]
    answer_text: str
    group: str
    reference_answer: str | None = None

    def to_json(self) -> dict:
        obj = {
            "type": "gen",
            "example_id": self.example_id,
            "model_id": self.model_id,
            "token_ids": list(self.token_ids),
            "token_probs": list(self.token_probs),
            "answer_text": self.answer_text,
            "group": self.group,
        }
        if self.reference_answer is not None:
            obj["reference_answer"] = self.reference_answer
        return obj


Record = Union[LogitsRecord, GenerationRecord]


@dataclass(frozen=True)
class DumpHeader:
    num_classes: int
    mode: str  # CLASSIFICATION | GENERATION

    def to_json(self) -> dict:
        return {"type": "header", "num_classes": self.num_classes, "mode": self.mode}


@dataclass(frozen=True)
class ModelProfile:
    model_id: str
    stage_index: int
    cost_units: float


@dataclass(frozen=True)
class ModelLadder:
    """Ordered model profiles, cheapest first; optional class count."""

    profiles: tuple[ModelProfile, ...]
    num_classes: int | None = None

    def __post_init__(self):
        stages = [p.stage_index for p in self.profiles]
        if stages != list(range(len(self.profiles))):
            raise SchemaError(
                f"ladder stage_index values must be 0..n-1 in order, got {stages}"
            )
        costs = [p.cost_units for p in self.profiles]
        if any(c <= 0 for c in costs):
            raise SchemaError("ladder cost_units must be positive")
        if any(b <= a for a, b in zip(costs, costs[1:])):
            raise SchemaError(
                f"ladder cost_units must be strictly increasing, got {costs}"
            )

    @property
    def num_stages(self) -> int:
        return len(self.profiles)

    @property
    def model_ids(self) -> tuple[str, ...]:
        return tuple(p.model_id for p in self.profiles)

    @property
    def costs(self) -> tuple[float, ...]:
        return tuple(p.cost_units for p in self.profiles)

    def to_json(self) -> dict:
        obj = {
            "models": [
                {
                    "model_id": p.model_id,
                    "stage_index": p.stage_index,
                    "cost_units": p.cost_units,
                }
                for p in self.profiles
            ]
        }
        if self.num_classes is not None:
            obj["num_classes"] = self.num_classes
        return obj


def ladder_from_json(obj: dict) -> ModelLadder:
    try:
        models = obj["models"]
    except KeyError:
        raise SchemaError("ladder JSON must contain a 'models' list")
    profiles = tuple(
        ModelProfile(
            model_id=str(m["model_id"]),
            stage_index=int(m["stage_index"]),
            cost_units=float(m["cost_units"]),
        )
        for m in sorted(models, key=lambda m: int(m["stage_index"]))
    )
    num_classes = obj.get("num_classes")
    return ModelLadder(profiles, None if num_classes is None else int(num_classes))


@dataclass(frozen=True)
class AlignedExample:
    """One example with exactly one record per ladder stage."""

    example_id: str
    group: str
    stage_records: tuple[Record, ...]  # index == stage_index
    label: int | None = None  # classification ground truth
    reference_answer: str | None = None  # generation ground truth


@dataclass(frozen=True)
class AlignedDataset:
    mode: str
    num_classes: int
    examples: tuple[AlignedExample, ...]

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def groups(self) -> tuple[str, ...]:
        return tuple(sorted({ex.group for ex in self.examples}))


@dataclass
class ParseResult:
    header: DumpHeader
    records: list[Record]
    diagnostics: list[tuple[int, str]] = field(default_factory=list)


def _require(obj: dict, key: str, line_no: int):
    if key not in obj:
        raise SchemaError(f"line {line_no}: missing required field '{key}'", line_no)
    return obj[key]


def _parse_header(obj: dict, line_no: int) -> DumpHeader:
    mode = _require(obj, "mode", line_no)
    if mode not in (CLASSIFICATION, GENERATION):
        raise SchemaError(f"line {line_no}: unknown mode '{mode}'", line_no)
    num_classes = int(_require(obj, "num_classes", line_no))
    if mode == CLASSIFICATION and num_classes < 2:
        raise SchemaError(
            f"line {line_no}: classification header needs num_classes >= 2, got {num_classes}",
            line_no,
        )
    return DumpHeader(num_classes=num_classes, mode=mode)


def _parse_logits_record(obj: dict, header: DumpHeader, line_no: int) -> LogitsRecord:
    if header.mode != CLASSIFICATION:
        raise SchemaError(
            f"line {line_no}: 'logits' record in a {header.mode} dump", line_no
        )
    logits = _require(obj, "logits", line_no)
    if not isinstance(logits, list) or len(logits) != header.num_classes:
        raise SchemaError(
            f"line {line_no}: logits length {len(logits) if isinstance(logits, list) else '?'}"
            f" != declared num_classes {header.num_classes}",
            line_no,
        )
    values = []
    for v in logits:
        x = float(v)
        if not math.isfinite(x):
            raise SchemaError(f"line {line_no}: non-finite logit {v}", line_no)
        values.append(x)
    label = obj.get("label")
    if label is not None:
        label = int(label)
        if not 0 <= label < header.num_classes:
            raise SchemaError(
                f"line {line_no}: label {label} outside [0, {header.num_classes})",
                line_no,
            )
    return LogitsRecord(
        example_id=str(_require(obj, "example_id", line_no)),
        model_id=str(_require(obj, "model_id", line_no)),
        logits=tuple(values),
        group=str(_require(obj, "group", line_no)),
        label=label,
        raw_text=obj.get("raw_text"),
    )


def _parse_gen_record(obj: dict, header: DumpHeader, line_no: int) -> GenerationRecord:
    if header.mode != GENERATION:
        raise SchemaError(
            f"line {line_no}: 'gen' record in a {header.mode} dump", line_no
        )
    token_ids = [int(t) for t in _require(obj, "token_ids", line_no)]
    token_probs = [float(p) for p in _require(obj, "token_probs", line_no)]
    if len(token_ids) != len(token_probs):
        raise SchemaError(
            f"line {line_no}: token_ids length {len(token_ids)} != token_probs length {len(token_probs)}",
            line_no,
        )
    for p in token_probs:
        if not (0.0 < p <= 1.0):
            raise SchemaError(
                f"line {line_no}: token probability {p} outside (0, 1]", line_no
            )
    return GenerationRecord(
        example_id=str(_require(obj, "example_id", line_no)),
        model_id=str(_require(obj, "model_id", line_no)),
        token_ids=tuple(token_ids),
        token_probs=tuple(token_probs),
        answer_text=str(_require(obj, "answer_text", line_no)),
        group=str(_require(obj, "group", line_no)),
        reference_answer=obj.get("reference_answer"),
    )


def parse_logits_file(
    stream: IO[str] | Iterable[str], strict: bool = True
) -> ParseResult:
    """Parse a JSONL dump into records.

    Strict mode raises on the first malformed line; lenient mode skips bad
    record lines and collects (line_number, reason) diagnostics instead.
    A missing or malformed header is always fatal.
    """
    header: DumpHeader | None = None
    records: list[Record] = []
    diagnostics: list[tuple[int, str]] = []
    saw_line = False
    for line_no, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line:
            continue
        saw_line = True
        try:
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(f"line {line_no}: invalid JSON ({e.msg})", line_no)
            if not isinstance(obj, dict):
                raise SchemaError(f"line {line_no}: record is not an object", line_no)
            kind = obj.get("type")
            if header is None:
                if kind != "header":
                    raise SchemaError(
                        f"line {line_no}: first line must be a header, got type '{kind}'",
                        line_no,
                    )
                header = _parse_header(obj, line_no)
                continue
            if kind == "logits":
                records.append(_parse_logits_record(obj, header, line_no))
            elif kind == "gen":
                records.append(_parse_gen_record(obj, header, line_no))
            elif kind == "header":
                raise SchemaError(f"line {line_no}: duplicate header", line_no)
            else:
                raise SchemaError(
                    f"line {line_no}: unknown record type '{kind}'", line_no
                )
        except SchemaError as e:
            if strict or header is None:
                raise
            diagnostics.append((line_no, str(e)))
    if not saw_line:
        raise SchemaError("empty file")
    if header is None:
        raise SchemaError("no header line found")
    return ParseResult(header=header, records=records, diagnostics=diagnostics)


def serialize_records(header: DumpHeader, records: Iterable[Record]) -> Iterator[str]:
    """Yield JSONL lines (without trailing newline); inverse of parse."""
    yield json.dumps(header.to_json())
    for rec in records:
        yield json.dumps(rec.to_json())


def write_dump(path, header: DumpHeader, records: Iterable[Record]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for line in serialize_records(header, records):
            f.write(line + "\n")


def read_dump(path, strict: bool = True) -> ParseResult:
    with open(path, "r", encoding="utf-8") as f:
        return parse_logits_file(f, strict=strict)


def align(
    parsed: ParseResult | list[Record],
    ladder: ModelLadder,
    header: DumpHeader | None = None,
) -> AlignedDataset:
    """Group records by example and check full ladder coverage.

    Every example must have exactly one record per ladder stage, with a
    consistent label (or reference answer) and group across stages.
    Ordering is lexicographic by example_id so downstream results do not
    depend on dump order.
    """
    if isinstance(parsed, ParseResult):
        records, header = parsed.records, parsed.header
    else:
        records = parsed
        if header is None:
            raise AlignmentError("align needs a header when given a bare record list")
    if ladder.num_classes is not None and header.mode == CLASSIFICATION:
        if ladder.num_classes != header.num_classes:
            raise AlignmentError(
                f"ladder num_classes {ladder.num_classes} != dump num_classes {header.num_classes}"
            )

    stage_of = {p.model_id: p.stage_index for p in ladder.profiles}
    by_example: dict[str, dict[int, Record]] = {}
    for rec in records:
        if rec.model_id not in stage_of:
            raise AlignmentError(
                f"record for example '{rec.example_id}' names model "
                f"'{rec.model_id}' which is not in the ladder"
            )
        stage = stage_of[rec.model_id]
        slots = by_example.setdefault(rec.example_id, {})
        if stage in slots:
            raise AlignmentError(
                f"duplicate record for (example '{rec.example_id}', model '{rec.model_id}')"
            )
        slots[stage] = rec

    missing = []
    for example_id in sorted(by_example):
        for stage in range(ladder.num_stages):
            if stage not in by_example[example_id]:
                missing.append((example_id, stage))
    if missing:
        shown = ", ".join(f"('{e}', stage {s})" for e, s in missing[:10])
        more = "" if len(missing) <= 10 else f" and {len(missing) - 10} more"
        raise AlignmentError(f"missing (example, stage) pairs: {shown}{more}")

    examples = []
    for example_id in sorted(by_example):
        stage_records = tuple(
            by_example[example_id][s] for s in range(ladder.num_stages)
        )
        first = stage_records[0]
        groups = {r.group for r in stage_records}
        if len(groups) > 1:
            raise AlignmentError(
                f"example '{example_id}' has inconsistent groups across stages: {sorted(groups)}"
            )
        if header.mode == CLASSIFICATION:
            labels = {r.label for r in stage_records}
            if len(labels) > 1:
                raise AlignmentError(
                    f"example '{example_id}' has inconsistent labels across stages: {sorted(map(str, labels))}"
                )
            label, reference = first.label, None
        else:
            refs = {r.reference_answer for r in stage_records}
            if len(refs) > 1:
                raise AlignmentError(
                    f"example '{example_id}' has inconsistent reference answers across stages"
                )
            label, reference = None, first.reference_answer
        examples.append(
            AlignedExample(
                example_id=example_id,
                group=first.group,
                stage_records=stage_records,
                label=label,
                reference_answer=reference,
            )
        )
    return AlignedDataset(
        mode=header.mode, num_classes=header.num_classes, examples=tuple(examples)
    )
