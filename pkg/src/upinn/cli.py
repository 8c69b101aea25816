"""Command-line runner: ``upinn train-body | transfer | eval | ablate``.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
Outputs go under ``--out`` (default ``$UPINN_OUT_DIR`` or ``./runs``).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from . import trainer
from .trainer import CheckpointError, ConfigError, TrainConfig, TrainingAborted

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(Exception):
    pass


def out_dir(arg: str | None) -> Path:
    path = Path(arg or os.environ.get("UPINN_OUT_DIR") or "runs")
    path.mkdir(parents=True, exist_ok=True)
    return path


def body_name(cfg: TrainConfig) -> str:
    tag = "_ur" if cfg.ur_lambda > 0 else "_jr" if cfg.jr_lambda > 0 else ""
    return f"{cfg.problem}_body{tag}.ckpt"


def _write_text(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_json(path: Path, data) -> None:
    _write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def _progress(quiet: bool):
    if quiet:
        return None

    def report(epoch, step):
        print(f"epoch {epoch:>7d}  l_tot {step.total:.6e}", file=sys.stderr, flush=True)

    return report


def _load_config(path: str) -> TrainConfig:
    if not Path(path).is_file():
        raise UsageError(f"config file not found: {path}")
    return TrainConfig.load(path)


def _load_model(path: str):
    if not Path(path).is_file():
        raise UsageError(f"checkpoint not found: {path}")
    return trainer.load_checkpoint(path)


def cmd_train_body(args) -> int:
    cfg = _load_config(args.config)
    if args.dry_run:
        print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
        return EXIT_OK
    out = out_dir(args.out)
    ckpt = out / body_name(cfg)

    def checkpoint(model, rng, epoch):
        trainer.save_checkpoint(ckpt, model, cfg, rng)

    model, record, rng = trainer.train_body(cfg, _progress(args.quiet), checkpoint)
    trainer.save_checkpoint(ckpt, model, cfg, rng)
    _write_text(out / "run.csv", record.csv_text())
    _write_text(out / "metric_stats.csv", record.stats_csv_text())
    _write_json(out / "walltime.json", {"train_body_seconds": record.wall_time})
    print(f"wrote {ckpt}")
    return EXIT_OK


def cmd_transfer(args) -> int:
    model, cfg, _ = _load_model(args.body)
    if args.config:
        cfg = _load_config(args.config)
    out = out_dir(args.out)
    before = model.body_digest()
    print(f"body sha256 before: {before}")
    alpha, record = trainer.transfer(model, cfg, args.param, progress=_progress(args.quiet))
    after = model.body_digest()
    print(f"body sha256 after:  {after}")
    if before != after:
        print("error: frozen body changed during transfer", file=sys.stderr)
        return EXIT_NUMERIC
    stem = f"{cfg.problem}_head_{args.param:g}"
    trainer.save_checkpoint(out / f"{stem}.ckpt", model, cfg)
    _write_text(out / f"{stem}_run.csv", record.csv_text())
    _write_json(out / f"{stem}_walltime.json", {"transfer_seconds": record.wall_time})
    problem = cfg.make_problem()
    if problem.name != "efe":
        ev = trainer.evaluate(problem, model, alpha, "rk45")
        ev.to_csv(out / f"{stem}_eval.csv")
        print(f"rms {ev.rms_percent:.4f}%  max {ev.max_re_percent:.4f}%")
    print(f"wrote {out / (stem + '.ckpt')}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model, cfg, _ = _load_model(args.model)
    problem = cfg.make_problem()
    alpha = len(model.family) - 1 if args.head is None else args.head
    if not 0 <= alpha < len(model.family):
        raise UsageError(f"head index {alpha} out of range (model has {len(model.family)})")
    out = out_dir(args.out)
    if problem.name == "efe":
        if args.oracle == "implicit":
            raise UsageError("the implicit oracle is only available for the flame problem")
        report = trainer.evaluate_efe(problem, model, alpha)
        report["oracle"] = "none (residual norms)"
        _write_json(out / "report.json", report)
        with open(out / "potential.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["phi", "V", "dV"])
            for row in report["potential"]:
                w.writerow([repr(row["phi"]), repr(row["V"]), repr(row["dV"])])
        print(json.dumps(report["residual_rms"]))
        return EXIT_OK
    if args.oracle == "implicit" and problem.name != "flame":
        raise UsageError("the implicit oracle is only available for the flame problem")
    ev = trainer.evaluate(problem, model, alpha, args.oracle)
    report = {**ev.report(), "oracle": args.oracle, "family_value": model.family[alpha], "head": alpha}
    _write_json(out / "report.json", report)
    ev.to_csv(out / "plot.csv")
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def cmd_ablate(args) -> int:
    if args.seeds < 1:
        raise UsageError("--seeds must be at least 1")
    if args.config:
        cfg = _load_config(args.config)
        if cfg.problem != args.problem:
            raise UsageError(f"config is for {cfg.problem!r}, not {args.problem!r}")
    else:
        cfg = TrainConfig.load(shipped_config(f"{args.problem}-ablate.json"))
    out = out_dir(args.out)
    rows = trainer.ablate(cfg, args.seeds, args.jobs)
    summary = trainer.ablation_summary(rows)
    with open(out / f"ablate_{args.problem}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "rms_ur", "rms_plain", "ur_better", "sqrtg_mean_ur", "sqrtg_mean_plain"])
        for r in rows:
            w.writerow([r.seed, repr(r.rms_ur), repr(r.rms_plain), int(r.rms_ur <= r.rms_plain),
                        repr(r.sqrtg_ur), repr(r.sqrtg_plain)])
        w.writerow(["median", repr(summary["median_rms_ur"]), repr(summary["median_rms_plain"]),
                    repr(summary["win_rate_ur"]), "", ""])
    _write_json(out / f"ablate_{args.problem}_summary.json", summary)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def shipped_config(name: str) -> Path:
    path = Path(__file__).parent / "configs" / name
    if not path.is_file():
        raise UsageError(f"no shipped config {name}")
    return path


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="upinn", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", help="output directory (default $UPINN_OUT_DIR or ./runs)")
        sp.add_argument("--quiet", action="store_true", help="no progress lines")

    sp = sub.add_parser("train-body", help="train bodies and heads from a config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--dry-run", action="store_true", help="validate and print the resolved config")
    common(sp)
    sp.set_defaults(func=cmd_train_body)

    sp = sub.add_parser("transfer", help="train a fresh head on a frozen body")
    sp.add_argument("--body", required=True, help="body checkpoint")
    sp.add_argument("--param", required=True, type=float, help="new family-parameter value")
    sp.add_argument("--config", help="config overriding the one stored in the checkpoint")
    common(sp)
    sp.set_defaults(func=cmd_transfer)

    sp = sub.add_parser("eval", help="compare a head against a classical oracle")
    sp.add_argument("--model", required=True)
    sp.add_argument("--oracle", choices=("rk45", "rk4", "implicit"), default="rk45")
    sp.add_argument("--head", type=int, help="head index (default: last)")
    common(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("ablate", help="matched-seed UR vs no-UR comparison")
    sp.add_argument("--problem", required=True, choices=("flame", "vdp"))
    sp.add_argument("--seeds", required=True, type=int)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--config", help="config (default: the shipped ablation config)")
    common(sp)
    sp.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (UsageError, ConfigError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
