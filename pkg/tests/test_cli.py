"""End-to-end CLI behavior: exit codes, file outputs, manifests, seeding."""

import json
import math

import pytest

from cascadekit.cli import main


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def classification_dump(tmp_path, name="dump.jsonl"):
    lines = [json.dumps({"type": "header", "num_classes": 2, "mode": "classification"})]
    confs = {"e0": (0.9, 0.9), "e1": (0.8, 0.8), "e2": (0.6, 0.6), "e3": (0.5, 0.5)}
    for example_id, (c0, c1) in confs.items():
        for model_id, c in (("m0", c0), ("m1", c1)):
            gap = math.log(c / (1 - c))
            lines.append(
                json.dumps(
                    {
                        "type": "logits",
                        "example_id": example_id,
                        "model_id": model_id,
                        "logits": [gap, 0.0],
                        "label": 0,
                        "group": "en",
                    }
                )
            )
    return write(tmp_path / name, "\n".join(lines) + "\n")


def ladder_file(tmp_path, costs=(1.0, 4.0)):
    models = [
        {"model_id": f"m{i}", "stage_index": i, "cost_units": c}
        for i, c in enumerate(costs)
    ]
    return write(tmp_path / "ladder.json", json.dumps({"num_classes": 2, "models": models}))


def fit_fixture(tmp_path):
    lines = [json.dumps({"type": "header", "num_classes": 2, "mode": "classification"})]
    for i, label in enumerate([0, 0, 1]):
        lines.append(
            json.dumps(
                {
                    "type": "logits",
                    "example_id": f"e{i}",
                    "model_id": "m0",
                    "logits": [2.0, 0.0],
                    "label": label,
                    "group": "en",
                }
            )
        )
    dump = write(tmp_path / "val.jsonl", "\n".join(lines) + "\n")
    ladder = write(
        tmp_path / "ladder1.json",
        json.dumps(
            {"num_classes": 2, "models": [{"model_id": "m0", "stage_index": 0, "cost_units": 1.0}]}
        ),
    )
    return dump, ladder


class TestValidate:
    def test_valid_dump_exits_zero(self, tmp_path, capsys):
        dump = classification_dump(tmp_path)
        assert main(["validate", "--in", dump]) == 0
        out = capsys.readouterr().out
        assert "8 records" in out

    def test_bad_line_strict_exits_one(self, tmp_path, capsys):
        path = tmp_path / "bad.jsonl"
        write(
            path,
            json.dumps({"type": "header", "num_classes": 2, "mode": "classification"})
            + "\n{broken\n",
        )
        assert main(["validate", "--in", str(path)]) == 1
        assert "datamodel" in capsys.readouterr().err

    def test_bad_line_lenient_exits_zero(self, tmp_path, capsys):
        path = tmp_path / "bad.jsonl"
        write(
            path,
            json.dumps({"type": "header", "num_classes": 2, "mode": "classification"})
            + "\n{broken\n",
        )
        assert main(["validate", "--in", str(path), "--lenient"]) == 0
        captured = capsys.readouterr()
        assert "diagnostics=1" in captured.out

    def test_missing_file_exits_one(self, tmp_path):
        assert main(["validate", "--in", str(tmp_path / "nope.jsonl")]) == 1

    def test_unknown_flag_exits_two(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["validate", "--in", "x", "--frobnicate"])
        assert exc.value.code == 2


class TestAlign:
    def test_aligned_ok(self, tmp_path, capsys):
        dump = classification_dump(tmp_path)
        ladder = ladder_file(tmp_path)
        assert main(["align", "--in", dump, "--ladder", ladder]) == 0
        assert "4 examples x 2 stages" in capsys.readouterr().out

    def test_missing_stage_exits_one(self, tmp_path, capsys):
        dump = classification_dump(tmp_path)
        ladder = ladder_file(tmp_path, costs=(1.0, 4.0, 9.0))
        assert main(["align", "--in", dump, "--ladder", ladder]) == 1
        assert "datamodel" in capsys.readouterr().err


class TestFitTemp:
    def test_three_example_fixture(self, tmp_path, capsys):
        dump, ladder = fit_fixture(tmp_path)
        out = tmp_path / "temps.json"
        assert main(["fit-temp", "--val", dump, "--ladder", ladder, "--out", str(out)]) == 0
        temps = json.loads(out.read_text())
        assert len(temps) == 1
        assert temps[0]["model_id"] == "m0"
        assert temps[0]["T"] == pytest.approx(2.0 / math.log(2.0), abs=1e-3)
        assert temps[0]["fit_size"] == 3
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["command"] == "fit-temp"
        assert dump in manifest["inputs"]


class TestRouteSolveSweepReport:
    def test_route_outputs(self, tmp_path, capsys):
        dump = classification_dump(tmp_path)
        ladder = ladder_file(tmp_path)
        out = tmp_path / "run"
        code = main(
            ["route", "--in", dump, "--ladder", ladder, "--threshold", "0.55",
             "--traces", "--out", str(out)]
        )
        assert code == 0
        run = json.loads((out / "run.json").read_text())
        # confidences 0.9, 0.8, 0.6 exceed 0.55; 0.5 traverses
        assert run["exit_counts"] == [3, 1]
        assert run["mean_cost"] == pytest.approx(2.0)
        assert run["speedup"] == pytest.approx(2.0)
        traces = (out / "traces.jsonl").read_text().strip().split("\n")
        assert len(traces) == 4
        assert (out / "manifest.json").exists()

    def test_route_idempotent_bytes(self, tmp_path):
        dump = classification_dump(tmp_path)
        ladder = ladder_file(tmp_path)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            main(["route", "--in", dump, "--ladder", ladder, "--threshold", "0.55",
                  "--out", str(out)])
        assert (out_a / "run.json").read_bytes() == (out_b / "run.json").read_bytes()

    def test_solve_fixture(self, tmp_path, capsys):
        dump = classification_dump(tmp_path)
        ladder = ladder_file(tmp_path)
        out = tmp_path / "solve"
        code = main(
            ["solve", "--dev", dump, "--ladder", ladder, "--target-speedup", "2.0",
             "--out", str(out)]
        )
        assert code == 0
        result = json.loads((out / "solve.json").read_text())
        assert result["achieved_speedup"] == pytest.approx(2.0)
        assert result["attainable"] is True

    def test_sweep_outputs(self, tmp_path):
        dump = classification_dump(tmp_path)
        ladder = ladder_file(tmp_path)
        out = tmp_path / "sweep"
        assert main(["sweep", "--dev", dump, "--ladder", ladder, "--out", str(out)]) == 0
        csv = (out / "sweep.csv").read_text().strip().split("\n")
        assert csv[0] == "lambda,speedup,accuracy,mean_cost,exit_0,exit_1"
        points = json.loads((out / "sweep.json").read_text())
        assert len(csv) - 1 == len(points)
        speedups = [p["speedup"] for p in points]
        assert speedups == sorted(speedups, reverse=True)

    def test_report_outputs(self, tmp_path, capsys):
        dump = classification_dump(tmp_path)
        ladder = ladder_file(tmp_path)
        out = tmp_path / "report"
        code = main(
            ["report", "--in", dump, "--ladder", ladder, "--threshold", "0.55",
             "--bins", "5", "--out", str(out)]
        )
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert "ece_cascade_final" in report
        assert report["groups"]["per_group"]["en"]["n"] == 4
        assert (out / "reliability_first_stage.csv").exists()
        assert (out / "reliability_cascade_final.csv").exists()


class TestToyPipeline:
    def config_file(self, tmp_path):
        cfg = {
            "shift": {
                "num_classes": 3,
                "input_dim": 6,
                "train_size": 150,
                "dev_size": 60,
                "test_size_per_group": 40,
                "shift_magnitudes": [0.0, 1.0],
                "rotation_angles": [0.0, 0.4],
                "noise_scale": 0.8,
                "seed": 5,
            },
            "ladder": [
                {"model_id": "toy-small", "kind": "limited_linear", "limit_dims": 2},
                {"model_id": "toy-mid", "kind": "linear"},
                {"model_id": "toy-large", "kind": "mlp", "hidden_dim": 4},
            ],
            "train": {"tau": 0.25, "learning_rate": 0.3, "epochs": 8, "batch_size": 32},
        }
        return write(tmp_path / "config.json", json.dumps(cfg))

    def test_gen_data_then_train_toy_then_route(self, tmp_path):
        config = self.config_file(tmp_path)
        data = tmp_path / "data.npz"
        assert main(["gen-data", "--config", config, "--out", str(data)]) == 0
        assert data.exists()

        out = tmp_path / "toy"
        code = main(
            ["train-toy", "--config", config, "--data", str(data), "--loss", "ce",
             "--out", str(out)]
        )
        assert code == 0
        for name in ("ladder.json", "models.json", "dev.jsonl", "test.jsonl"):
            assert (out / name).exists()

        assert main(["validate", "--in", str(out / "test.jsonl")]) == 0
        run_dir = tmp_path / "run"
        code = main(
            ["route", "--in", str(out / "test.jsonl"), "--ladder", str(out / "ladder.json"),
             "--threshold", "0.8", "--out", str(run_dir)]
        )
        assert code == 0
        run = json.loads((run_dir / "run.json").read_text())
        assert run["n"] == 80

    def test_seed_env_fallback(self, tmp_path, monkeypatch):
        config = self.config_file(tmp_path)
        a, b = tmp_path / "a.npz", tmp_path / "b.npz"
        monkeypatch.setenv("CASCADEKIT_SEED", "99")
        assert main(["gen-data", "--config", config, "--out", str(a)]) == 0
        monkeypatch.delenv("CASCADEKIT_SEED")
        assert main(["gen-data", "--config", config, "--out", str(b), "--seed", "99"]) == 0
        assert a.read_bytes() == b.read_bytes()
