"""ECE binning, group tables, and the two cascade calibration scopes.

The binned ECE is checked against a naive per-bin scan that shares no code
with the implementation.
"""

import numpy as np
import pytest

from cascadekit.cascade import route_dataset
from cascadekit.data import (
    AlignedDataset,
    AlignedExample,
    LogitsRecord,
    ModelLadder,
    ModelProfile,
)
from cascadekit.errors import MetricsError
from cascadekit.metrics import bins_to_csv, cascade_ece_scopes, ece, group_report


def naive_ece(confidences, correctness, num_bins):
    """Quadratic-time oracle: scan every bin, test membership per point."""
    n = len(confidences)
    edges = np.linspace(0.0, 1.0, num_bins + 1)
    total = 0.0
    for b in range(num_bins):
        lower, upper = edges[b], edges[b + 1]
        members = [
            i
            for i, c in enumerate(confidences)
            if (lower < c <= upper) or (b == 0 and c == 0.0)
        ]
        if not members:
            continue
        mean_conf = sum(confidences[i] for i in members) / len(members)
        acc = sum(1.0 for i in members if correctness[i]) / len(members)
        total += (len(members) / n) * abs(acc - mean_conf)
    return total


class TestEce:
    def test_hand_example_single_bin(self):
        report = ece([0.8, 0.6], [True, False], num_bins=1)
        assert report.bins[0].mean_confidence == pytest.approx(0.7)
        assert report.bins[0].accuracy == pytest.approx(0.5)
        assert report.ece == pytest.approx(0.2, abs=1e-15)

    def test_perfectly_calibrated_is_zero(self):
        # every bin's accuracy equals its mean confidence exactly
        conf = [0.75, 0.75, 0.75, 0.75]
        correct = [True, True, True, False]
        assert ece(conf, correct, num_bins=10).ece == pytest.approx(0.0, abs=1e-15)

    def test_single_occupied_bin(self):
        conf = [0.95] * 100
        correct = [True] * 95 + [False] * 5
        report = ece(conf, correct, num_bins=10)
        assert report.ece == pytest.approx(0.0, abs=1e-12)
        occupied = [b for b in report.bins if b.count]
        assert len(occupied) == 1
        assert occupied[0].count == 100

    def test_matches_naive_oracle_on_random_inputs(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            n = int(rng.integers(1, 200))
            num_bins = int(rng.integers(1, 20))
            conf = rng.uniform(0, 1, n).tolist()
            correct = (rng.random(n) < 0.5).tolist()
            got = ece(conf, correct, num_bins).ece
            want = naive_ece(conf, correct, num_bins)
            assert got == pytest.approx(want, abs=1e-12)

    def test_bounds_and_permutation_invariance(self):
        rng = np.random.default_rng(10)
        conf = rng.uniform(0, 1, 100)
        correct = rng.random(100) < 0.5
        base = ece(conf.tolist(), correct.tolist(), 10).ece
        assert 0.0 <= base <= 1.0
        order = rng.permutation(100)
        assert ece(conf[order].tolist(), correct[order].tolist(), 10).ece == pytest.approx(
            base, abs=1e-14
        )

    def test_empty_bins_reported_absent(self):
        report = ece([0.05, 0.95], [True, False], num_bins=10)
        for b in report.bins:
            if b.count == 0:
                assert b.mean_confidence is None and b.accuracy is None

    def test_boundary_zero_lands_in_first_bin(self):
        report = ece([0.0], [False], num_bins=10)
        assert report.bins[0].count == 1

    def test_domain_errors(self):
        with pytest.raises(MetricsError, match="equal-length"):
            ece([0.5], [True, False], 10)
        with pytest.raises(MetricsError, match=r"\[0, 1\]"):
            ece([1.5], [True], 10)
        with pytest.raises(MetricsError, match="num_bins"):
            ece([0.5], [True], 0)
        with pytest.raises(MetricsError, match="empty"):
            ece([], [], 10)

    def test_csv_rendering(self):
        report = ece([0.85, 0.15], [True, False], num_bins=2)
        csv = bins_to_csv(report)
        lines = csv.strip().split("\n")
        assert lines[0] == "lower,upper,count,mean_conf,acc"
        assert len(lines) == 3


class TestGroupReport:
    def test_equal_sizes(self):
        correct = [True, True, False, False]
        groups = ["en", "en", "th", "th"]
        table = group_report(correct, groups)
        assert table["macro_accuracy"] == pytest.approx(0.5)
        assert table["micro_accuracy"] == pytest.approx(0.5)

    def test_unbalanced_macro_vs_micro(self):
        correct = [True] * 10 + [False] * 90
        groups = ["small"] * 10 + ["large"] * 90
        table = group_report(correct, groups)
        assert table["macro_accuracy"] == pytest.approx(0.5)
        assert table["micro_accuracy"] == pytest.approx(0.1)

    def test_single_group_identity(self):
        table = group_report([True, False, True], ["en"] * 3)
        acc = table["per_group"]["en"]["accuracy"]
        assert table["macro_accuracy"] == acc == table["micro_accuracy"]

    def test_macro_equals_mean_of_groups(self):
        rng = np.random.default_rng(11)
        correct = (rng.random(200) < 0.6).tolist()
        groups = rng.choice(["a", "b", "c", "d"], 200).tolist()
        table = group_report(correct, groups)
        accs = [row["accuracy"] for row in table["per_group"].values()]
        assert table["macro_accuracy"] == pytest.approx(float(np.mean(accs)), abs=1e-12)

    def test_unknown_filter_group_rejected(self):
        with pytest.raises(MetricsError, match="unknown groups"):
            group_report([True], ["en"], only_groups=["xx"])

    def test_unjudged_entries_excluded(self):
        table = group_report([True, None, False], ["en", "en", "en"])
        assert table["per_group"]["en"]["n"] == 2
        assert table["per_group"]["en"]["accuracy"] == pytest.approx(0.5)


def build_dataset(stage_logits_by_example, labels, num_classes=2):
    examples = []
    for i, stage_logits in enumerate(stage_logits_by_example):
        records = tuple(
            LogitsRecord(f"e{i:02d}", f"m{s}", tuple(l), "en", label=labels[i])
            for s, l in enumerate(stage_logits)
        )
        examples.append(
            AlignedExample(
                example_id=f"e{i:02d}", group="en", stage_records=records, label=labels[i]
            )
        )
    return AlignedDataset(
        mode="classification", num_classes=num_classes, examples=tuple(examples)
    )


class TestCascadeScopes:
    def make(self, threshold):
        ladder = ModelLadder(
            (ModelProfile("m0", 0, 1.0), ModelProfile("m1", 1, 4.0)), 2
        )
        # e0 confidently right at stage 0; e1 unsure then right;
        # e2 confidently wrong at stage 0; e3 unsure then wrong
        stage_logits = [
            [(6.0, 0.0), (6.0, 0.0)],
            [(0.2, 0.0), (5.0, 0.0)],
            [(0.0, 6.0), (0.0, 6.0)],
            [(0.0, 0.2), (0.0, 5.0)],
        ]
        labels = [0, 0, 0, 1]
        dataset = build_dataset(stage_logits, labels)
        run = route_dataset(dataset, ladder, None, threshold)
        return run, dataset

    def test_all_exit_first_stage_reports_identical(self):
        run, dataset = self.make(threshold=0.0)
        first, final = cascade_ece_scopes(run, dataset, num_bins=10)
        assert first.ece == pytest.approx(final.ece, abs=1e-15)
        assert first.n == final.n == 4

    def test_full_traversal_uses_last_stage(self):
        run, dataset = self.make(threshold=1.0)
        first, final = cascade_ece_scopes(run, dataset, num_bins=1)
        # last-stage confidences: sigma(6), sigma(5), sigma(6), sigma(5)
        sig = lambda x: 1 / (1 + np.exp(-x))
        expected_conf = np.mean([sig(6), sig(5), sig(6), sig(5)])
        # exit predictions: 0, 0, 1, 1 vs labels 0, 0, 0, 1 -> acc 3/4
        assert final.bins[0].mean_confidence == pytest.approx(expected_conf)
        assert final.bins[0].accuracy == pytest.approx(0.75)
        assert final.ece == pytest.approx(abs(0.75 - expected_conf), abs=1e-12)

    def test_mixed_exit_hand_oracle(self):
        run, dataset = self.make(threshold=0.9)
        first, final = cascade_ece_scopes(run, dataset, num_bins=1)
        sig = lambda x: 1 / (1 + np.exp(-x))
        # stage-0 exits: e0 (conf sig(6), right), e2 (conf sig(6), wrong);
        # e1 and e3 escalate and exit at stage 1 with conf sig(5)
        final_confs = [sig(6), sig(5), sig(6), sig(5)]
        final_hits = [1, 1, 0, 1]
        assert final.bins[0].mean_confidence == pytest.approx(np.mean(final_confs))
        assert final.bins[0].accuracy == pytest.approx(np.mean(final_hits))
        # first-stage scope always scores stage 0's own prediction:
        # e0 right, e1 right, e2 wrong, e3 right (argmax 1, label 1)
        first_confs = [sig(6), sig(0.2), sig(6), sig(0.2)]
        first_hits = [1, 1, 0, 1]
        assert first.bins[0].mean_confidence == pytest.approx(np.mean(first_confs))
        assert first.bins[0].accuracy == pytest.approx(np.mean(first_hits))

    def test_generation_mode_rejected(self):
        run, dataset = self.make(threshold=0.5)
        fake = AlignedDataset(mode="generation", num_classes=0, examples=dataset.examples)
        with pytest.raises(MetricsError, match="classification"):
            cascade_ece_scopes(run, fake)
