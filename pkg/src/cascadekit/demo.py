"""One-shot synthetic experiment: calibrated vs. uncalibrated cascade.

Trains the same toy ladder twice (plain cross entropy vs. logit-normalized
cross entropy), dumps logits through the standard JSONL format, fits
temperatures on the source dev split for the calibrated branch, solves
thresholds on dev for each target speed-up, and routes the shifted test
set with both pipelines. Everything derives from one seed; outputs contain
no timestamps so repeated runs are byte-identical.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

from . import __version__
from .calibration import Temperature, fit_temperature
from .cascade import route_dataset
from .data import (
    AlignedDataset,
    DumpHeader,
    align,
    parse_logits_file,
    serialize_records,
)
from .metrics import cascade_ece_scopes, group_report
from .thresholds import solve_for_speedup
from .toytrain import (
    LOSS_CE,
    LOSS_LOGITNORM,
    ModelSpec,
    ShiftConfig,
    build_ladder,
    dump_logits,
    gen_shift,
    train,
)

# capacities track which feature planes each stage can read: the smallest
# model sees only the shift-exposed plane, the largest sees everything
DEFAULT_LADDER_SPECS = (
    ModelSpec(model_id="toy-small", kind="limited_linear", limit_dims=2),
    ModelSpec(model_id="toy-mid", kind="limited_linear", limit_dims=4),
    ModelSpec(model_id="toy-large", kind="mlp", hidden_dim=32),
)

# the baseline branch trains long enough for cross entropy to saturate its
# confidences (the overconfidence under shift that calibration targets);
# the logit-normalized branch needs a smaller step size because its
# gradient carries a 1/(tau * ||l||) factor
DEFAULT_TRAIN_PARAMS = {
    LOSS_CE: {"tau": 0.25, "learning_rate": 0.5, "epochs": 400, "batch_size": 64},
    LOSS_LOGITNORM: {"tau": 0.25, "learning_rate": 0.1, "epochs": 80, "batch_size": 32},
}


def default_config(seed: int) -> ShiftConfig:
    # five shifted groups of graded severity: per-group results are noisy
    # at desk scale, and the macro average over groups is what stabilizes
    # the calibrated-vs-baseline comparison
    return ShiftConfig(
        num_classes=3,
        input_dim=8,
        train_size=1200,
        dev_size=800,
        test_size_per_group=500,
        shift_magnitudes=(0.0, 0.3, 0.5, 0.7, 0.9, 1.1),
        rotation_angles=(0.0, 0.15, 0.25, 0.35, 0.45, 0.55),
        noise_scale=0.6,
        seed=seed,
    )


def _roundtrip_dump(header: DumpHeader, records, ladder) -> AlignedDataset:
    """Serialize and re-parse so the run exercises the on-disk format."""
    text = "\n".join(serialize_records(header, records)) + "\n"
    return align(parse_logits_file(io.StringIO(text)), ladder)


def _branch_datasets(models, data, config, ladder):
    dev_header, dev_records = dump_logits(models, data.dev, config.num_classes, "dev")
    test_header, test_records = dump_logits(models, data.test, config.num_classes, "test")
    dev = _roundtrip_dump(dev_header, dev_records, ladder)
    test = _roundtrip_dump(test_header, test_records, ladder)
    return (dev_header, dev_records, dev), (test_header, test_records, test)


def _operating_point(dev, test, ladder, temperatures, target, shifted_groups, bins):
    # deployment protocol: the threshold is solved on dev for the target
    # speed-up and applied to test as-is; how well the operating point
    # transfers under shift is part of what the comparison measures
    solved = solve_for_speedup(dev, ladder, temperatures, target_speedup=target)
    test_solved = solve_for_speedup(test, ladder, temperatures, target_speedup=target)
    run = route_dataset(test, ladder, temperatures, solved.threshold)
    first_stage, cascade_final = cascade_ece_scopes(run, test, num_bins=bins)
    table = group_report(
        [d.correct for d in run.decisions], [d.group for d in run.decisions]
    )
    shifted = group_report(
        [d.correct for d in run.decisions],
        [d.group for d in run.decisions],
        only_groups=shifted_groups,
    )
    return {
        "lambda": solved.threshold,
        "attainable": solved.attainable,
        "dev_speedup": solved.achieved_speedup,
        "test_speedup": run.speedup,
        "test_mean_cost": run.mean_cost,
        "test_matched_lambda": test_solved.threshold,
        "exit_counts": list(run.exit_counts),
        "accuracy": run.accuracy,
        "groups": table,
        "shifted_macro_accuracy": shifted["macro_accuracy"],
        "ece_first_stage": first_stage.ece,
        "ece_cascade_final": cascade_final.ece,
    }


def run_demo(
    seed: int,
    out_dir: str | Path | None = None,
    targets: tuple[float, ...] = (2.0, 3.0),
    config: ShiftConfig | None = None,
    ladder_specs: tuple[ModelSpec, ...] = DEFAULT_LADDER_SPECS,
    train_params: dict | None = None,
    bins: int = 10,
) -> dict:
    """Run the full pipeline for one seed; returns the comparison report."""
    config = config or default_config(seed)
    params = {k: dict(v) for k, v in DEFAULT_TRAIN_PARAMS.items()}
    if train_params:
        for k in params:
            params[k].update(train_params.get(k, {}))

    data = gen_shift(config)
    branches = {}
    for loss_kind in (LOSS_CE, LOSS_LOGITNORM):
        p = params[loss_kind]
        branches[loss_kind] = [
            train(
                data.train,
                spec,
                loss_kind,
                tau=p["tau"],
                learning_rate=p["learning_rate"],
                epochs=p["epochs"],
                batch_size=p["batch_size"],
                seed=config.seed,
            )
            for spec in ladder_specs
        ]
    ladder = build_ladder(branches[LOSS_CE], config.num_classes)

    dumps = {}
    datasets = {}
    for loss_kind, models in branches.items():
        dev_pack, test_pack = _branch_datasets(models, data, config, ladder)
        dumps[loss_kind] = {"dev": dev_pack[:2], "test": test_pack[:2]}
        datasets[loss_kind] = {"dev": dev_pack[2], "test": test_pack[2]}

    # calibrated branch: logitnorm training plus dev-fitted temperatures
    temperatures: dict[str, Temperature] = {}
    for profile in ladder.profiles:
        stage = profile.stage_index
        val = [
            (ex.stage_records[stage].logits, ex.label)
            for ex in datasets[LOSS_LOGITNORM]["dev"].examples
            if ex.label is not None
        ]
        temperatures[profile.model_id] = fit_temperature(val, model_id=profile.model_id)

    shifted_groups = [
        f"g{g}"
        for g in range(config.num_groups)
        if config.shift_magnitudes[g] != 0 or config.rotation_angles[g] != 0
    ]
    operating_points = []
    for target in targets:
        operating_points.append(
            {
                "target_speedup": target,
                "baseline": _operating_point(
                    datasets[LOSS_CE]["dev"],
                    datasets[LOSS_CE]["test"],
                    ladder,
                    None,
                    target,
                    shifted_groups,
                    bins,
                ),
                "calibrated": _operating_point(
                    datasets[LOSS_LOGITNORM]["dev"],
                    datasets[LOSS_LOGITNORM]["test"],
                    ladder,
                    temperatures,
                    target,
                    shifted_groups,
                    bins,
                ),
            }
        )

    report = {
        "seed": seed,
        "config": config.to_json(),
        "train_params": params,
        "ladder": ladder.to_json(),
        "temperatures": [temperatures[m].to_json() for m in ladder.model_ids],
        "shifted_groups": shifted_groups,
        "operating_points": operating_points,
    }

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for loss_kind in (LOSS_CE, LOSS_LOGITNORM):
            for split in ("dev", "test"):
                header, records = dumps[loss_kind][split]
                path = out / f"{split}_{loss_kind}.jsonl"
                path.write_text(
                    "\n".join(serialize_records(header, records)) + "\n",
                    encoding="utf-8",
                )
                written.append(path.name)
        for name, payload in (
            ("ladder.json", ladder.to_json()),
            ("temperatures.json", [temperatures[m].to_json() for m in ladder.model_ids]),
            ("report.json", report),
        ):
            (out / name).write_text(
                json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
            written.append(name)
        manifest = {
            "tool": "cascadekit",
            "version": __version__,
            "command": "demo",
            "seed": seed,
            "targets": list(targets),
            "config": config.to_json(),
            "train_params": params,
            "outputs": sorted(written),
        }
        (out / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return report


def comparison_lines(report: dict) -> list[str]:
    """Human-readable rendering of the calibrated-vs-baseline table."""
    lines = []
    for point in report["operating_points"]:
        lines.append(f"target speed-up {point['target_speedup']:g}x")
        for name in ("baseline", "calibrated"):
            r = point[name]
            lines.append(
                f"  {name:<10} lambda={r['lambda']:.4f} devS={r['dev_speedup']:.2f} "
                f"testS={r['test_speedup']:.2f} acc={r['accuracy']:.4f} "
                f"shifted={r['shifted_macro_accuracy']:.4f} "
                f"ece={r['ece_cascade_final']:.4f}"
            )
    return lines
