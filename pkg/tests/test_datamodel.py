"""Schema parsing, serialization round-trips, and alignment checks."""

import io
import json
import random

import pytest

from cascadekit.data import (
    AlignedDataset,
    DumpHeader,
    GenerationRecord,
    LogitsRecord,
    ModelLadder,
    ModelProfile,
    align,
    ladder_from_json,
    parse_logits_file,
    serialize_records,
)
from cascadekit.errors import AlignmentError, SchemaError


def header_line(num_classes=2, mode="classification"):
    return json.dumps({"type": "header", "num_classes": num_classes, "mode": mode})


def logits_line(example_id="e1", model_id="m0", logits=(0.5, -0.5), **extra):
    obj = {
        "type": "logits",
        "example_id": example_id,
        "model_id": model_id,
        "logits": list(logits),
        "group": "en",
        "label": 0,
    }
    obj.update(extra)
    return json.dumps(obj)


def parse_text(text, strict=True):
    return parse_logits_file(io.StringIO(text), strict=strict)


def two_stage_ladder(num_classes=2):
    return ModelLadder(
        (ModelProfile("m0", 0, 1.0), ModelProfile("m1", 1, 4.0)), num_classes
    )


class TestParse:
    def test_single_valid_line(self):
        parsed = parse_text(header_line() + "\n" + logits_line())
        assert len(parsed.records) == 1
        rec = parsed.records[0]
        assert isinstance(rec, LogitsRecord)
        assert rec.example_id == "e1"
        assert rec.logits == (0.5, -0.5)
        assert rec.label == 0
        assert parsed.header == DumpHeader(num_classes=2, mode="classification")

    def test_logits_length_mismatch_names_line(self):
        text = header_line() + "\n" + logits_line(logits=(1.0, 2.0, 3.0))
        with pytest.raises(SchemaError) as exc:
            parse_text(text)
        assert exc.value.line_number == 2
        assert "num_classes" in str(exc.value)

    def test_strict_vs_lenient_on_bad_middle_line(self):
        lines = [
            header_line(),
            logits_line(example_id="e1"),
            logits_line(example_id="e2", logits=(1.0,)),  # wrong length
            logits_line(example_id="e3"),
        ]
        text = "\n".join(lines)
        with pytest.raises(SchemaError) as exc:
            parse_text(text, strict=True)
        assert exc.value.line_number == 3

        parsed = parse_text(text, strict=False)
        assert [r.example_id for r in parsed.records] == ["e1", "e3"]
        assert len(parsed.diagnostics) == 1
        assert parsed.diagnostics[0][0] == 3

    def test_empty_file_rejected(self):
        with pytest.raises(SchemaError, match="empty"):
            parse_text("")

    def test_missing_header_rejected(self):
        with pytest.raises(SchemaError, match="header"):
            parse_text(logits_line())

    def test_duplicate_header_rejected(self):
        with pytest.raises(SchemaError, match="duplicate header"):
            parse_text(header_line() + "\n" + header_line())

    def test_invalid_json_names_line(self):
        with pytest.raises(SchemaError) as exc:
            parse_text(header_line() + "\n" + "{not json")
        assert exc.value.line_number == 2

    def test_non_finite_logit_rejected(self):
        text = header_line() + "\n" + logits_line(logits=("NaN", 0.0))
        with pytest.raises(SchemaError, match="non-finite"):
            parse_text(text)

    def test_label_out_of_range_rejected(self):
        with pytest.raises(SchemaError, match="label"):
            parse_text(header_line() + "\n" + logits_line(label=2))

    def test_gen_record_in_classification_dump_rejected(self):
        gen = json.dumps(
            {
                "type": "gen",
                "example_id": "e1",
                "model_id": "m0",
                "token_ids": [1],
                "token_probs": [0.5],
                "answer_text": "42",
                "group": "en",
            }
        )
        with pytest.raises(SchemaError, match="classification"):
            parse_text(header_line() + "\n" + gen)

    def test_generation_parse_and_domain(self):
        head = header_line(num_classes=0, mode="generation")
        good = {
            "type": "gen",
            "example_id": "e1",
            "model_id": "m0",
            "token_ids": [3, 9],
            "token_probs": [0.5, 0.25],
            "answer_text": "42",
            "group": "de",
            "reference_answer": "42",
        }
        parsed = parse_text(head + "\n" + json.dumps(good))
        rec = parsed.records[0]
        assert isinstance(rec, GenerationRecord)
        assert rec.token_probs == (0.5, 0.25)

        bad = dict(good, token_probs=[0.5, 0.0])
        with pytest.raises(SchemaError, match=r"\(0, 1\]"):
            parse_text(head + "\n" + json.dumps(bad))

        mismatch = dict(good, token_probs=[0.5])
        with pytest.raises(SchemaError, match="length"):
            parse_text(head + "\n" + json.dumps(mismatch))


class TestRoundTrip:
    def test_parse_serialize_identity(self):
        rng = random.Random(11)
        header = DumpHeader(num_classes=3, mode="classification")
        records = [
            LogitsRecord(
                example_id=f"e{i}",
                model_id=f"m{j}",
                logits=tuple(rng.uniform(-50, 50) for _ in range(3)),
                group=rng.choice(["en", "th", "sw"]),
                label=rng.randrange(3) if rng.random() < 0.8 else None,
                raw_text="text" if rng.random() < 0.5 else None,
            )
            for i in range(20)
            for j in range(2)
        ]
        text = "\n".join(serialize_records(header, records))
        parsed = parse_text(text)
        assert parsed.header == header
        assert parsed.records == records
        # serialize again: byte-identical
        assert "\n".join(serialize_records(parsed.header, parsed.records)) == text

    def test_generation_round_trip(self):
        header = DumpHeader(num_classes=0, mode="generation")
        records = [
            GenerationRecord(
                example_id="e1",
                model_id="m0",
                token_ids=(5, 7, 11),
                token_probs=(0.5, 0.25, 1.0),
                answer_text="12",
                group="ja",
                reference_answer="12.0",
            )
        ]
        parsed = parse_text("\n".join(serialize_records(header, records)))
        assert parsed.records == records


class TestAlign:
    def make_records(self, n_examples, model_ids, label=None):
        records = []
        for i in range(n_examples):
            for m in model_ids:
                records.append(
                    LogitsRecord(
                        example_id=f"e{i}",
                        model_id=m,
                        logits=(float(i), 0.0),
                        group="en",
                        label=label if label is not None else i % 2,
                    )
                )
        return records

    def test_complete_alignment(self):
        ladder = ModelLadder(
            (
                ModelProfile("m0", 0, 1.0),
                ModelProfile("m1", 1, 3.0),
                ModelProfile("m2", 2, 10.0),
            ),
            2,
        )
        header = DumpHeader(num_classes=2, mode="classification")
        records = self.make_records(2, ["m0", "m1", "m2"])
        dataset = align(records, ladder, header)
        assert isinstance(dataset, AlignedDataset)
        assert len(dataset) == 2
        assert [ex.example_id for ex in dataset.examples] == ["e0", "e1"]
        assert all(len(ex.stage_records) == 3 for ex in dataset.examples)

    def test_missing_stage_names_pair(self):
        ladder = two_stage_ladder()
        header = DumpHeader(num_classes=2, mode="classification")
        records = self.make_records(2, ["m0", "m1"])
        records = [r for r in records if not (r.example_id == "e1" and r.model_id == "m1")]
        with pytest.raises(AlignmentError, match=r"'e1', stage 1"):
            align(records, ladder, header)

    def test_duplicate_pair_named(self):
        ladder = two_stage_ladder()
        header = DumpHeader(num_classes=2, mode="classification")
        records = self.make_records(1, ["m0", "m1"])
        records.append(records[0])
        with pytest.raises(AlignmentError, match=r"duplicate.*'e0'.*'m0'"):
            align(records, ladder, header)

    def test_label_mismatch_across_stages(self):
        ladder = two_stage_ladder()
        header = DumpHeader(num_classes=2, mode="classification")
        records = [
            LogitsRecord("e0", "m0", (1.0, 0.0), "en", label=0),
            LogitsRecord("e0", "m1", (1.0, 0.0), "en", label=1),
        ]
        with pytest.raises(AlignmentError, match="labels"):
            align(records, ladder, header)

    def test_unknown_model_rejected(self):
        ladder = two_stage_ladder()
        header = DumpHeader(num_classes=2, mode="classification")
        records = [LogitsRecord("e0", "mX", (1.0, 0.0), "en", label=0)]
        with pytest.raises(AlignmentError, match="mX"):
            align(records, ladder, header)

    def test_permutation_invariance(self):
        ladder = two_stage_ladder()
        header = DumpHeader(num_classes=2, mode="classification")
        records = self.make_records(5, ["m0", "m1"])
        reference = align(records, ladder, header)
        rng = random.Random(3)
        for _ in range(5):
            shuffled = records[:]
            rng.shuffle(shuffled)
            assert align(shuffled, ladder, header) == reference


class TestLadder:
    def test_from_json_sorts_by_stage(self):
        ladder = ladder_from_json(
            {
                "num_classes": 2,
                "models": [
                    {"model_id": "big", "stage_index": 1, "cost_units": 5.0},
                    {"model_id": "small", "stage_index": 0, "cost_units": 1.0},
                ],
            }
        )
        assert ladder.model_ids == ("small", "big")

    def test_stage_gap_rejected(self):
        with pytest.raises(SchemaError, match="stage_index"):
            ModelLadder((ModelProfile("a", 0, 1.0), ModelProfile("b", 2, 2.0)))

    def test_non_increasing_cost_rejected(self):
        with pytest.raises(SchemaError, match="strictly increasing"):
            ModelLadder((ModelProfile("a", 0, 2.0), ModelProfile("b", 1, 2.0)))

    def test_non_positive_cost_rejected(self):
        with pytest.raises(SchemaError, match="positive"):
            ModelLadder((ModelProfile("a", 0, 0.0), ModelProfile("b", 1, 2.0)))
