"""Batch front end: data generation, runs, base sweeps, and metric reports."""
from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

try:
    import jsonschema
except ImportError:  # pragma: no cover
    jsonschema = None

from .engine import (AblationFlags, MODE_FAIRSAOML, MODE_SINGLE_EXPERT,
                     RoundRecord, RunConfig, SplitSizes, run)
from .errors import ConfigurationError, IngestionError, NumericalFailureError
from .intervals import AGC, IntervalScheme
from .metrics import (cumulative_violation, eighty_percent_check,
                      fair_sar_estimate, static_regret)
from .model_core import FairnessSpec, LossSpec, TaskBatch
from .optimizer import Ball, LagrangianConfig
from .stream import CsvSchema, EnvSpec, StreamSpec, generate_stream, load_csv, save_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

FLOAT_FMT = "%.17g"

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["scheme"],
    "properties": {
        "scheme": {"enum": ["di", "agc", "dgc"]},
        "base": {"type": "integer", "minimum": 2},
        "horizon": {"type": ["integer", "null"], "minimum": 1},
        "mode": {"enum": [MODE_FAIRSAOML, MODE_SINGLE_EXPERT]},
        "n_meta": {"type": "integer", "minimum": 1},
        "inner_steps": {"type": "integer", "minimum": 1},
        "delta": {"type": "number", "exclusiveMinimum": 0},
        "eta1": {"type": "number", "exclusiveMinimum": 0},
        "eta2": {"type": "number", "exclusiveMinimum": 0},
        "first_order": {"type": "boolean"},
        "s_radius": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "loss": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["logistic"]},
                "l2": {"type": "number", "minimum": 0},
            },
        },
        "fairness": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "kind": {"enum": ["ddp", "deo"]},
                    "epsilon": {"type": "number", "minimum": 0},
                },
            },
        },
        "split": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "support_per_class": {"type": "integer", "minimum": 1},
                "query_size": {"type": "integer", "minimum": 1},
            },
        },
        "seed": {"type": "integer"},
        "reps": {"type": "integer", "minimum": 1},
        "ablation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "disable_weights": {"type": "boolean"},
                "disable_base_learner": {"type": "boolean"},
            },
        },
        "stream": {
            "type": "object",
            "additionalProperties": False,
            "required": ["environments"],
            "properties": {
                "batch_size": {"type": "integer", "minimum": 4},
                "seed": {"type": "integer"},
                "environments": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["n_tasks", "dim", "boundary"],
                        "properties": {
                            "n_tasks": {"type": "integer", "minimum": 1},
                            "dim": {"type": "integer", "minimum": 1},
                            "boundary": {"type": "array", "items": {"type": "number"}},
                            "group_bias": {"type": "number"},
                            "group_balance": {"type": "number",
                                              "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                            "noise": {"type": "number", "minimum": 0, "exclusiveMaximum": 0.5},
                        },
                    },
                },
            },
        },
        "csv": {
            "type": "object",
            "additionalProperties": False,
            "required": ["path", "feature_columns"],
            "properties": {
                "path": {"type": "string"},
                "feature_columns": {"type": "array", "items": {"type": "string"}},
                "protected_column": {"type": "string"},
                "label_column": {"type": "string"},
                "round_column": {"type": ["string", "null"]},
                "batch_size": {"type": ["integer", "null"], "minimum": 1},
                "mapping": {"type": "object",
                            "additionalProperties": {"enum": [-1, 1]}},
            },
        },
        "metrics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tau": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "tail_fraction": {"type": "number",
                                  "exclusiveMinimum": 0, "maximum": 1},
            },
        },
        "out": {"type": "string"},
    },
}

DEFAULTS = {
    "base": 2,
    "horizon": None,
    "mode": MODE_FAIRSAOML,
    "n_meta": 20,
    "inner_steps": 1,
    "delta": 50.0,
    "eta1": 0.01,
    "eta2": 0.01,
    "first_order": True,
    "s_radius": None,
    "loss": {"kind": "logistic", "l2": 1e-3},
    "fairness": [{"kind": "ddp", "epsilon": 0.05}],
    "split": {"support_per_class": 20, "query_size": 40},
    "seed": 0,
    "reps": 10,
    "ablation": {"disable_weights": False, "disable_base_learner": False},
    "metrics": {"tau": [16], "tail_fraction": 0.25},
    "out": "out",
}


def load_config(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if jsonschema is not None:
        try:
            jsonschema.validate(raw, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigurationError(f"invalid config: {exc.message}") from exc
    cfg = dict(DEFAULTS)
    for key, value in raw.items():
        if isinstance(value, dict) and isinstance(cfg.get(key), dict):
            merged = dict(cfg[key])
            merged.update(value)
            cfg[key] = merged
        else:
            cfg[key] = value
    if "stream" not in cfg and "csv" not in cfg:
        raise ConfigurationError("config must provide either 'stream' or 'csv'")
    if "stream" in cfg:
        stream = dict(cfg["stream"])
        stream.setdefault("batch_size", 200)
        stream.setdefault("seed", cfg["seed"])
        envs = []
        for env in stream["environments"]:
            e = {"group_bias": 0.0, "group_balance": 0.5, "noise": 0.0}
            e.update(env)
            envs.append(e)
        stream["environments"] = envs
        cfg["stream"] = stream
    return cfg


def build_stream_spec(cfg: dict) -> StreamSpec:
    s = cfg["stream"]
    return StreamSpec(
        environments=tuple(EnvSpec(n_tasks=e["n_tasks"], dim=e["dim"],
                                   boundary=tuple(e["boundary"]),
                                   group_bias=e["group_bias"],
                                   group_balance=e["group_balance"],
                                   noise=e["noise"])
                           for e in s["environments"]),
        batch_size=s["batch_size"],
        seed=s["seed"],
    )


def build_batches(cfg: dict) -> List[TaskBatch]:
    if "csv" in cfg:
        c = cfg["csv"]
        schema = CsvSchema(
            feature_columns=tuple(c["feature_columns"]),
            protected_column=c.get("protected_column", "s"),
            label_column=c.get("label_column", "y"),
            round_column=c.get("round_column", "t"),
            batch_size=c.get("batch_size"),
            mapping=c.get("mapping"),
        )
        return load_csv(c["path"], schema)
    return generate_stream(build_stream_spec(cfg))


def build_run_config(cfg: dict, seed: int) -> RunConfig:
    horizon = cfg["horizon"]
    if cfg["scheme"] == "agc" and horizon is None and "stream" in cfg:
        horizon = sum(e["n_tasks"] for e in cfg["stream"]["environments"])
    scheme = IntervalScheme(cfg["scheme"],
                            horizon=horizon if cfg["scheme"] == "agc" else None,
                            base=cfg["base"])
    return RunConfig(
        scheme=scheme,
        n_meta=cfg["n_meta"],
        lagrangian=LagrangianConfig(delta=cfg["delta"], eta1=cfg["eta1"],
                                    eta2=cfg["eta2"], inner_steps=cfg["inner_steps"],
                                    first_order=cfg["first_order"]),
        loss=LossSpec(kind=cfg["loss"]["kind"], l2_coefficient=cfg["loss"]["l2"]),
        fairness=tuple(FairnessSpec(kind=f["kind"], epsilon=f["epsilon"])
                       for f in cfg["fairness"]),
        split=SplitSizes(**cfg["split"]),
        seed=seed,
        ablation=AblationFlags(**cfg["ablation"]),
        mode=cfg["mode"],
        s_radius=cfg["s_radius"],
    )


def _fmt(value: Optional[float]) -> str:
    if value is None:
        return ""
    return FLOAT_FMT % value


def rounds_csv_header(m: int) -> List[str]:
    return (["t", "val_loss", "val_acc", "dp", "eo"]
            + [f"g_{i + 1}" for i in range(m)]
            + ["n_experts", "n_active", "max_weight", "theta_norm"]
            + [f"lambda_{i + 1}" for i in range(m)]
            + ["wall_ms"])


def write_rounds_csv(records: List[RoundRecord], path: Path, m: int) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(rounds_csv_header(m))
        for r in records:
            row = [str(r.t), _fmt(r.val_loss), _fmt(r.val_acc), _fmt(r.dp), _fmt(r.eo)]
            row += [_fmt(g) for g in r.g_current]
            row += [str(r.n_experts), str(r.n_active), _fmt(r.max_weight),
                    _fmt(r.theta_norm)]
            row += [_fmt(v) for v in r.lambda_values]
            row.append(_fmt(r.wall_ms))
            writer.writerow(row)


def write_trace(records: List[RoundRecord], path: Path) -> None:
    """Binary trace needed to regenerate regret reports offline."""
    offsets = np.cumsum([0] + [r.validation.size for r in records])
    np.savez_compressed(
        path,
        theta_prev=np.stack([r.theta_prev for r in records]),
        val_features=np.vstack([r.validation.features for r in records]),
        val_labels=np.concatenate([r.validation.labels for r in records]),
        val_protected=np.concatenate([r.validation.protected for r in records]),
        offsets=offsets,
        g_prev=np.array([r.g_prev for r in records]),
        rounds=np.array([r.t for r in records]),
    )


def read_trace(path: Path):
    data = np.load(path)
    offsets = data["offsets"]
    batches = []
    for i, t in enumerate(data["rounds"]):
        sl = slice(offsets[i], offsets[i + 1])
        batches.append(TaskBatch(data["val_features"][sl], data["val_labels"][sl],
                                 data["val_protected"][sl], round=int(t)))
    return list(data["theta_prev"]), batches, data["g_prev"].tolist()


def _read_rounds_csv(path: Path) -> List[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def compute_report(rep_dir: Path, cfg: dict) -> dict:
    thetas, batches, g_prev = read_trace(rep_dir / "trace.npz")
    loss_spec = LossSpec(kind=cfg["loss"]["kind"], l2_coefficient=cfg["loss"]["l2"])
    dummy = build_run_config(cfg, cfg["seed"])
    ball = Ball(dummy.radius())
    regret, sol = static_regret(thetas, batches, loss_spec, ball)
    report = {
        "static_regret": regret,
        "solver_residual": sol.residual,
        "solver_converged": sol.converged,
        "cumulative_violation": cumulative_violation([g[0] for g in g_prev]),
        "fair_sar": {},
    }
    for tau in cfg["metrics"]["tau"]:
        if tau > len(batches):
            continue
        rr = fair_sar_estimate(thetas, batches, g_prev, loss_spec, ball, tau)
        report["fair_sar"][str(tau)] = {
            "max_loss_regret": rr.max_loss_regret,
            "max_constraint_sums": rr.max_constraint_sums,
            "stride": rr.stride,
            "approximate": rr.approximate,
        }
    rows = _read_rounds_csv(rep_dir / "rounds.csv")
    dp = [float(r["dp"]) if r["dp"] else None for r in rows]
    eo = [float(r["eo"]) if r["eo"] else None for r in rows]
    verdict = eighty_percent_check(dp, eo, cfg["metrics"]["tail_fraction"])
    report["eighty_percent_rule"] = verdict
    return report


def aggregate_metrics_csv(rep_dirs: List[Path], out_path: Path) -> None:
    per_rep = [_read_rounds_csv(d / "rounds.csv") for d in rep_dirs]
    n_rounds = len(per_rep[0])
    cols = ["val_loss", "val_acc", "dp", "eo"]
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["t"]
        for c in cols:
            header += [f"mean_{c}", f"std_{c}"]
        writer.writerow(header)
        for i in range(n_rounds):
            row = [per_rep[0][i]["t"]]
            for c in cols:
                vals = [float(rep[i][c]) for rep in per_rep if rep[i][c] != ""]
                if vals:
                    row += [_fmt(float(np.mean(vals))), _fmt(float(np.std(vals)))]
                else:
                    row += ["", ""]
            writer.writerow(row)


def _max_workers() -> int:
    env = os.environ.get("FAIRSAOML_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def execute_run(cfg: dict, out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    batches = build_batches(cfg)
    seeds = [cfg["seed"] + i for i in range(cfg["reps"])]

    def one(seed: int) -> Path:
        rep_dir = out_dir / f"rep{seed}"
        rep_dir.mkdir(parents=True, exist_ok=True)
        records = run(build_run_config(cfg, seed), batches)
        m = len(cfg["fairness"])
        write_rounds_csv(records, rep_dir / "rounds.csv", m)
        write_trace(records, rep_dir / "trace.npz")
        return rep_dir

    with concurrent.futures.ThreadPoolExecutor(max_workers=_max_workers()) as pool:
        rep_dirs = list(pool.map(one, seeds))

    aggregate_metrics_csv(rep_dirs, out_dir / "metrics.csv")
    regret = {str(seed): compute_report(d, cfg) for seed, d in zip(seeds, rep_dirs)}
    with open(out_dir / "regret.json", "w", encoding="utf-8") as fh:
        json.dump(regret, fh, indent=2)
    with open(out_dir / "config-echo.json", "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, indent=2)
    manifest = {
        "seeds": seeds,
        "rounds": len(batches),
        "files": (["metrics.csv", "regret.json", "config-echo.json", "manifest.json"]
                  + [f"rep{s}/rounds.csv" for s in seeds]
                  + [f"rep{s}/trace.npz" for s in seeds]),
        "version": "0.1.0",
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest


def apply_overrides(cfg: dict, args: argparse.Namespace) -> dict:
    cfg = dict(cfg)
    if getattr(args, "out", None):
        cfg["out"] = args.out
    if getattr(args, "scheme", None):
        cfg["scheme"] = args.scheme
    if getattr(args, "base", None):
        cfg["base"] = args.base
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "reps", None):
        cfg["reps"] = args.reps
    if getattr(args, "mode", None):
        cfg["mode"] = ("single_expert" if args.mode == "single-expert" else args.mode)
    if getattr(args, "ablation", None):
        cfg["ablation"] = {
            "disable_weights": args.ablation in ("weights", "both"),
            "disable_base_learner": args.ablation in ("base-learner", "both"),
        }
    return cfg


def cmd_gen_data(args: argparse.Namespace) -> int:
    cfg = apply_overrides(load_config(args.config), args)
    if "stream" not in cfg:
        raise ConfigurationError("gen-data requires a 'stream' section")
    spec = build_stream_spec(cfg)
    stream = generate_stream(spec)
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(stream, str(out))
    rows = sum(b.size for b in stream)
    print(f"wrote {len(stream)} batches, {rows} rows to {out}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    cfg = apply_overrides(load_config(args.config), args)
    manifest = execute_run(cfg, Path(cfg["out"]))
    print(f"completed {len(manifest['seeds'])} repetition(s) of {manifest['rounds']} rounds"
          f" -> {cfg['out']}")
    return EXIT_OK


def cmd_sweep_base(args: argparse.Namespace) -> int:
    cfg = apply_overrides(load_config(args.config), args)
    bases = [int(b) for b in args.bases.split(",")]
    if any(b < 2 for b in bases):
        raise ConfigurationError("bases must be integers >= 2")
    root = Path(cfg["out"])
    summary = {}
    for base in bases:
        sub = dict(cfg)
        sub["base"] = base
        sub["out"] = str(root / f"base{base}")
        manifest = execute_run(sub, Path(sub["out"]))
        last_rows = _read_rounds_csv(Path(sub["out"]) / f"rep{cfg['seed']}" / "rounds.csv")
        summary[str(base)] = {
            "rounds": manifest["rounds"],
            "final_n_experts": int(last_rows[-1]["n_experts"]),
        }
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "sweep.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    for base, info in summary.items():
        print(f"base {base}: {info['final_n_experts']} experts at T={info['rounds']}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    art = Path(args.artifacts)
    echo = art / "config-echo.json"
    if not echo.exists():
        raise ConfigurationError(f"missing artifact file {echo}")
    with open(echo, encoding="utf-8") as fh:
        cfg = json.load(fh)
    with open(art / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    rep_dirs = [art / f"rep{s}" for s in manifest["seeds"]]
    for d in rep_dirs:
        if not (d / "rounds.csv").exists() or not (d / "trace.npz").exists():
            raise ConfigurationError(f"missing artifact files under {d}")
    aggregate_metrics_csv(rep_dirs, art / "metrics.csv")
    regret = {str(s): compute_report(d, cfg) for s, d in zip(manifest["seeds"], rep_dirs)}
    with open(art / "regret.json", "w", encoding="utf-8") as fh:
        json.dump(regret, fh, indent=2)
    print(f"report regenerated under {art}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairsaoml")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True)
        p.add_argument("--out")
        p.add_argument("--scheme", choices=["di", "agc", "dgc"])
        p.add_argument("--base", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--reps", type=int)
        p.add_argument("--ablation", choices=["weights", "base-learner", "both"])
        p.add_argument("--mode", choices=["fairsaoml", "single-expert"])

    common(sub.add_parser("gen-data"))
    common(sub.add_parser("run"))
    sweep = sub.add_parser("sweep-base")
    common(sweep)
    sweep.add_argument("--bases", default="2,3,4,5")
    report = sub.add_parser("report")
    report.add_argument("--artifacts", required=True)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "gen-data": cmd_gen_data,
        "run": cmd_run,
        "sweep-base": cmd_sweep_base,
        "report": cmd_report,
    }
    try:
        return handlers[args.command](args)
    except NumericalFailureError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigurationError, IngestionError, OSError, json.JSONDecodeError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
