"""Command-line interface: a thin client over the engine modules.

Machine-readable JSON/CSV files are the primary outputs; stdout tables are
a convenience rendering of the same data. Every file-producing run also
writes a manifest recording inputs (with digests), flags, version, and
seeds, with no timestamps, so identical invocations produce identical
bytes.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from . import __version__
from .calibration import Temperature, fit_temperature
from .cascade import route_dataset
from .data import align, ladder_from_json, read_dump, serialize_records, write_dump
from .demo import comparison_lines, run_demo
from .errors import CascadeKitError, ConfigError
from .metrics import bins_to_csv, cascade_ece_scopes, group_report
from .thresholds import solve_for_speedup, sweep, sweep_to_csv
from .toytrain import (
    ModelSpec,
    ShiftConfig,
    build_ladder,
    dump_logits,
    gen_shift,
    load_splits,
    save_splits,
    train,
)

SEED_ENV = "CASCADEKIT_SEED"


def _resolve_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={env!r} is not an integer")
    return 0


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_manifest(directory: Path, command: str, args, inputs: list[str], outputs: list[str]):
    flags = {
        k: v
        for k, v in sorted(vars(args).items())
        if k != "func" and not callable(v)
    }
    manifest = {
        "tool": "cascadekit",
        "version": __version__,
        "command": command,
        "flags": flags,
        "inputs": {p: _sha256(Path(p)) for p in sorted(inputs)},
        "outputs": sorted(outputs),
    }
    _write_json(directory / "manifest.json", manifest)


def _load_ladder(path: str):
    with open(path, "r", encoding="utf-8") as f:
        return ladder_from_json(json.load(f))


def _load_temps(path: str | None) -> dict[str, Temperature] | None:
    if path is None:
        return None
    with open(path, "r", encoding="utf-8") as f:
        entries = json.load(f)
    temps = [Temperature.from_json(e) for e in entries]
    return {t.model_id: t for t in temps}


def _load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        cfg = json.load(f)
    for key in ("shift",):
        if key not in cfg:
            raise ConfigError(f"config file is missing the '{key}' section")
    return cfg


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_validate(args) -> int:
    parsed = read_dump(args.infile, strict=args.strict)
    for line_no, reason in parsed.diagnostics:
        print(f"line {line_no}: {reason}", file=sys.stderr)
    print(
        f"ok: {len(parsed.records)} records (mode={parsed.header.mode}, "
        f"num_classes={parsed.header.num_classes}, diagnostics={len(parsed.diagnostics)})"
    )
    return 0


def cmd_align(args) -> int:
    ladder = _load_ladder(args.ladder)
    dataset = align(read_dump(args.infile, strict=args.strict), ladder)
    print(
        f"aligned {len(dataset)} examples x {ladder.num_stages} stages; "
        f"groups: {', '.join(dataset.groups)}"
    )
    return 0


def _labeled_stage_items(dataset, stage: int, group: str | None):
    items = []
    for ex in dataset.examples:
        if ex.label is None or (group is not None and ex.group != group):
            continue
        items.append((ex.stage_records[stage].logits, ex.label))
    return items


def cmd_fit_temp(args) -> int:
    ladder = _load_ladder(args.ladder)
    dataset = align(read_dump(args.val, strict=args.strict), ladder)
    temps = []
    for profile in ladder.profiles:
        val = _labeled_stage_items(dataset, profile.stage_index, args.group)
        temp = fit_temperature(
            val,
            bounds=(args.t_min, args.t_max),
            tol=args.tol,
            model_id=profile.model_id,
        )
        temps.append(temp)
        flag = " (pinned)" if temp.pinned else ""
        print(f"{temp.model_id}: T={temp.value:.4f} nll={temp.fit_nll:.4f} n={temp.fit_size}{flag}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_json(out, [t.to_json() for t in temps])
    _write_manifest(out.parent, "fit-temp", args, [args.val, args.ladder], [out.name])
    return 0


def cmd_route(args) -> int:
    ladder = _load_ladder(args.ladder)
    dataset = align(read_dump(args.infile, strict=args.strict), ladder)
    run = route_dataset(
        dataset, ladder, _load_temps(args.temps), args.threshold,
        mode=args.mode, similarity=args.similarity,
    )
    out = _outdir(args)
    outputs = ["run.json"]
    _write_json(out / "run.json", run.to_json())
    if args.traces:
        with open(out / "traces.jsonl", "w", encoding="utf-8") as f:
            for d in run.decisions:
                f.write(json.dumps(d.to_json()) + "\n")
        outputs.append("traces.jsonl")
    inputs = [args.infile, args.ladder] + ([args.temps] if args.temps else [])
    _write_manifest(out, "route", args, inputs, outputs)
    acc = "n/a" if run.accuracy is None else f"{run.accuracy:.4f}"
    print(
        f"routed {run.n} examples: mean_cost={run.mean_cost:.4f} "
        f"speedup={run.speedup:.4f} accuracy={acc}"
    )
    return 0


def cmd_solve(args) -> int:
    ladder = _load_ladder(args.ladder)
    dataset = align(read_dump(args.dev, strict=args.strict), ladder)
    result = solve_for_speedup(
        dataset, ladder, _load_temps(args.temps),
        target_speedup=args.target_speedup, rel_tol=args.rel_tol,
        similarity=args.similarity,
    )
    if args.out:
        out = _outdir(args)
        _write_json(out / "solve.json", result.to_json())
        inputs = [args.dev, args.ladder] + ([args.temps] if args.temps else [])
        _write_manifest(out, "solve", args, inputs, ["solve.json"])
    ceiling = "" if result.ceiling_speedup is None else f" ceiling={result.ceiling_speedup:.4f}"
    print(
        f"lambda={result.threshold:.6f} achieved={result.achieved_speedup:.4f} "
        f"target={result.target_speedup:g} attainable={result.attainable}{ceiling}"
    )
    return 0


def cmd_sweep(args) -> int:
    ladder = _load_ladder(args.ladder)
    dataset = align(read_dump(args.dev, strict=args.strict), ladder)
    grid = args.grid
    if grid != "auto":
        grid = [float(v) for v in grid.split(",") if v.strip()]
    points = sweep(dataset, ladder, _load_temps(args.temps), grid, similarity=args.similarity)
    out = _outdir(args)
    (out / "sweep.csv").write_text(sweep_to_csv(points, ladder.num_stages), encoding="utf-8")
    _write_json(out / "sweep.json", [p.to_json() for p in points])
    inputs = [args.dev, args.ladder] + ([args.temps] if args.temps else [])
    _write_manifest(out, "sweep", args, inputs, ["sweep.csv", "sweep.json"])
    print(f"swept {len(points)} thresholds -> {out / 'sweep.csv'}")
    return 0


def cmd_report(args) -> int:
    ladder = _load_ladder(args.ladder)
    dataset = align(read_dump(args.infile, strict=args.strict), ladder)
    run = route_dataset(
        dataset, ladder, _load_temps(args.temps), args.threshold,
        mode=args.mode, similarity=args.similarity,
    )
    table = group_report([d.correct for d in run.decisions], [d.group for d in run.decisions])
    payload = {"run": run.to_json(), "groups": table}
    out = _outdir(args)
    outputs = ["report.json"]
    if dataset.mode == "classification":
        first_stage, cascade_final = cascade_ece_scopes(run, dataset, num_bins=args.bins)
        payload["ece_first_stage"] = first_stage.to_json()
        payload["ece_cascade_final"] = cascade_final.to_json()
        (out / "reliability_first_stage.csv").write_text(bins_to_csv(first_stage), encoding="utf-8")
        (out / "reliability_cascade_final.csv").write_text(bins_to_csv(cascade_final), encoding="utf-8")
        outputs += ["reliability_first_stage.csv", "reliability_cascade_final.csv"]
    _write_json(out / "report.json", payload)
    inputs = [args.infile, args.ladder] + ([args.temps] if args.temps else [])
    _write_manifest(out, "report", args, inputs, outputs)

    for group, row in table["per_group"].items():
        acc = "n/a" if row["accuracy"] is None else f"{row['accuracy']:.4f}"
        print(f"{group}: n={row['n']} accuracy={acc}")
    macro = table["macro_accuracy"]
    micro = table["micro_accuracy"]
    print(
        f"macro={'n/a' if macro is None else f'{macro:.4f}'} "
        f"micro={'n/a' if micro is None else f'{micro:.4f}'} "
        f"speedup={run.speedup:.4f}"
    )
    return 0


def cmd_gen_data(args) -> int:
    cfg = _load_config(args.config)
    shift = ShiftConfig.from_json(cfg["shift"])
    if args.seed is not None or os.environ.get(SEED_ENV):
        shift = ShiftConfig.from_json({**cfg["shift"], "seed": _resolve_seed(args)})
    data = gen_shift(shift)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_splits(out, data)
    _write_manifest(out.parent, "gen-data", args, [args.config], [out.name])
    print(
        f"wrote {out}: train={shift.train_size} dev={shift.dev_size} "
        f"test={shift.test_size_per_group}x{shift.num_groups} groups"
    )
    return 0


def cmd_train_toy(args) -> int:
    cfg = _load_config(args.config)
    if "ladder" not in cfg or "train" not in cfg:
        raise ConfigError("train-toy needs 'ladder' and 'train' sections in the config")
    shift = ShiftConfig.from_json(cfg["shift"])
    specs = [ModelSpec.from_json(s) for s in cfg["ladder"]]
    params = cfg["train"]
    data = load_splits(args.data)
    tau = args.tau if args.tau is not None else params.get("tau", 0.04)
    models = [
        train(
            data.train,
            spec,
            args.loss,
            tau=tau,
            learning_rate=params.get("learning_rate", 0.5),
            epochs=params.get("epochs", 40),
            batch_size=params.get("batch_size", 32),
            seed=shift.seed,
        )
        for spec in specs
    ]
    ladder = build_ladder(models, shift.num_classes)
    out = _outdir(args)
    _write_json(out / "ladder.json", ladder.to_json())
    _write_json(out / "models.json", [m.to_json() for m in models])
    for name, split in (("dev", data.dev), ("test", data.test)):
        header, records = dump_logits(models, split, shift.num_classes, id_prefix=name)
        write_dump(out / f"{name}.jsonl", header, records)
    _write_manifest(
        out, "train-toy", args, [args.config, args.data],
        ["ladder.json", "models.json", "dev.jsonl", "test.jsonl"],
    )
    print(f"trained {len(models)} models ({args.loss}) -> {out}")
    return 0


def cmd_demo(args) -> int:
    seed = _resolve_seed(args)
    targets = tuple(float(v) for v in args.targets.split(",") if v.strip())
    config = None
    if args.config:
        config = ShiftConfig.from_json({**_load_config(args.config)["shift"], "seed": seed})
    report = run_demo(seed, out_dir=args.out, targets=targets, config=config, bins=args.bins)
    for line in comparison_lines(report):
        print(line)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cascadekit",
        description="Calibrated model-cascade routing over logits dumps",
    )
    parser.add_argument("--version", action="version", version=f"cascadekit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_strictness(p):
        p.add_argument("--strict", dest="strict", action="store_true", default=True,
                       help="fail on the first malformed line (default)")
        p.add_argument("--lenient", dest="strict", action="store_false",
                       help="skip malformed lines, collecting diagnostics")

    def add_routing_inputs(p, data_flag="--in", dest="infile"):
        p.add_argument(data_flag, dest=dest, required=True, help="logits dump (JSONL)")
        p.add_argument("--ladder", required=True, help="ladder JSON file")
        p.add_argument("--temps", help="fitted temperatures JSON (omit for T=1)")
        p.add_argument("--similarity", default="constant_zero",
                       choices=["constant_zero", "jaccard"],
                       help="relevance plug-in for generation mode")
        add_strictness(p)

    p = sub.add_parser("validate", help="parse and validate a logits dump")
    p.add_argument("--in", dest="infile", required=True)
    add_strictness(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("align", help="check full ladder coverage of a dump")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--ladder", required=True)
    add_strictness(p)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("fit-temp", help="fit per-model temperatures on a validation dump")
    p.add_argument("--val", required=True)
    p.add_argument("--ladder", required=True)
    p.add_argument("--out", required=True, help="output temperatures JSON file")
    p.add_argument("--group", help="fit only on this group (default: all)")
    p.add_argument("--t-min", type=float, default=0.05)
    p.add_argument("--t-max", type=float, default=20.0)
    p.add_argument("--tol", type=float, default=1e-4)
    add_strictness(p)
    p.set_defaults(func=cmd_fit_temp)

    p = sub.add_parser("route", help="route a dump through the cascade at a threshold")
    add_routing_inputs(p)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--mode", choices=["classification", "generation"])
    p.add_argument("--traces", action="store_true", help="also write per-decision JSONL")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("solve", help="solve the threshold for a target speed-up")
    add_routing_inputs(p, "--dev", dest="dev")
    p.add_argument("--target-speedup", type=float, required=True)
    p.add_argument("--rel-tol", type=float, default=0.05)
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="sweep thresholds into a tradeoff curve")
    add_routing_inputs(p, "--dev", dest="dev")
    p.add_argument("--grid", default="auto", help="'auto' or comma-separated thresholds")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="route and report per-group accuracy and ECE")
    add_routing_inputs(p)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--mode", choices=["classification", "generation"])
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gen-data", help="generate synthetic shifted splits")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help=f"override config seed (or set {SEED_ENV})")
    p.add_argument("--out", required=True, help="output .npz file")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-toy", help="train a toy ladder and dump its logits")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True, help=".npz from gen-data")
    p.add_argument("--loss", choices=["ce", "logitnorm"], required=True)
    p.add_argument("--tau", type=float, help="override config tau")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("demo", help="end-to-end calibrated vs uncalibrated comparison")
    p.add_argument("--seed", type=int, help=f"experiment seed (or set {SEED_ENV}; default 0)")
    p.add_argument("--targets", default="2,3", help="comma-separated target speed-ups")
    p.add_argument("--config", help="optional shift-config JSON override")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_demo)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CascadeKitError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: cli: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
