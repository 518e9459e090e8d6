"""Command-line entry points: ``simulate``, ``run`` and ``sweep-integrity``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
``ROBUSTPF_SEED`` and ``ROBUSTPF_OUTPUT_DIR`` supply defaults for ``--seed``/``--seeds``
and ``--out`` when those flags are omitted.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import io
from .metrics import (ExperimentConfig, aggregate, integrity_study, make_scenario, run_filter,
                      threshold_sweep)
from .simulator import IntegrityScenarioConfig

log = logging.getLogger("robustpf")

SEED_ENV = "ROBUSTPF_SEED"
OUT_ENV = "ROBUSTPF_OUTPUT_DIR"


class UsageError(Exception):
    pass


def _load_config(path) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        return io.load_experiment_config(path)
    except FileNotFoundError as err:
        raise UsageError(str(err)) from None
    except io.ConfigError as err:
        raise UsageError(f"invalid config: {err}") from None


def _out_dir(args, exp) -> Path:
    out = args.out or os.environ.get(OUT_ENV) or exp.output_dir
    if not out:
        raise UsageError(f"no output directory: pass --out or set {OUT_ENV}")
    return Path(out)


def _seeds(args, exp):
    text = args.seeds if args.seeds is not None else os.environ.get(SEED_ENV)
    if text is None:
        return exp.seeds
    try:
        seeds = io.parse_seeds(text)
    except ValueError:
        raise UsageError(f"bad seed list {text!r}") from None
    if not seeds:
        raise UsageError("empty seed list")
    return seeds


def seed_dir_name(seed: int) -> str:
    return f"seed_{seed:04d}"


def cmd_simulate(args) -> int:
    exp = _load_config(args.config)
    out = _out_dir(args, exp)
    for s in _seeds(args, exp):
        io.write_scenario(out / seed_dir_name(s), make_scenario(exp.scenario, s))
    return 0


def cmd_run(args) -> int:
    exp = _load_config(args.config)
    out = _out_dir(args, exp)
    if args.seed is not None:
        seed = args.seed
    elif os.environ.get(SEED_ENV):
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer") from None
    else:
        seed = exp.seeds[0] if exp.seeds else 0
    if not Path(args.scenario).is_dir():
        raise UsageError(f"scenario directory not found: {args.scenario}")
    data = io.load_scenario(args.scenario)
    if not data.epochs:
        raise UsageError(f"{args.scenario}: no epochs")
    exp = replace(exp, monitor_integrity=True)
    record = run_filter(args.filter, data, exp, seed)
    out.mkdir(parents=True, exist_ok=True)
    io.write_results(out / "results.csv", record)
    io.write_summary(out / "summary.csv", aggregate({(seed, args.filter): record}, [args.filter]))
    if args.plotdata:
        io.write_plotdata(out / "plotdata.csv", record)
    return 0


def _record_path(root: Path, monitor: str, n: int, al: float, seed: int) -> Path:
    return root / f"{monitor}_n{n}_al{al:g}" / f"{seed_dir_name(seed)}.csv"


def cmd_sweep_integrity(args) -> int:
    if args.from_records:
        return _sweep_from_records(args)
    exp = _load_config(args.config)
    out = _out_dir(args, exp)
    scenario = exp.scenario if isinstance(exp.scenario, IntegrityScenarioConfig) else IntegrityScenarioConfig()
    seeds = _seeds(args, exp)
    study = integrity_study(seeds, args.particles, args.alarm_limits, scenario=scenario,
                            propagation_sigma=args.propagation_sigma, integrity=exp.integrity, workers=exp.workers)
    out.mkdir(parents=True, exist_ok=True)
    for (mon, n, al), recs in study.records.items():
        for s, rec in zip(seeds, recs):
            path = _record_path(out / "records", mon, n, al, s)
            path.parent.mkdir(parents=True, exist_ok=True)
            io.write_results(path, rec)
    io.write_pareto(out / "pareto.csv", study.frontiers())
    return 0


def _sweep_from_records(args) -> int:
    """Re-run the threshold sweep on stored per-epoch records (one subdirectory per configuration)."""
    root = Path(args.from_records)
    if not root.is_dir():
        raise UsageError(f"records directory not found: {root}")
    frontiers = {}
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        mon, n, al = sub.name.rsplit("_", 2)
        al_val = float(al[2:])
        recs = [io.read_results(f, alarm_limit=al_val) for f in sorted(sub.glob("*.csv"))]
        if recs:
            frontiers[(mon, int(n[1:]), al_val)] = threshold_sweep(recs).frontier
    if not frontiers:
        raise UsageError(f"no result records under {root}")
    out = Path(args.out or os.environ.get(OUT_ENV) or root)
    out.mkdir(parents=True, exist_ok=True)
    io.write_pareto(out / "pareto.csv", frontiers)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="robustpf", description="Fault-robust GNSS particle filter experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="write simulated scenario CSVs, one directory per seed")
    s.add_argument("--config")
    s.add_argument("--seeds", help="e.g. 0..49 or 0,3,5")
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("run", help="run one filter on a scenario directory")
    r.add_argument("--scenario", required=True)
    r.add_argument("--filter", choices=["proposed", "kf-raim", "j-pf"], default="proposed")
    r.add_argument("--config")
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--plotdata", action="store_true", help="also write plotdata.csv")
    r.set_defaults(func=cmd_run)

    w = sub.add_parser("sweep-integrity", help="integrity threshold sweep and Pareto frontiers")
    w.add_argument("--config")
    w.add_argument("--seeds")
    w.add_argument("--out")
    w.add_argument("--particles", type=int, nargs="+", default=[100, 500])
    w.add_argument("--alarm-limits", type=float, nargs="+", default=[10.0, 15.0])
    w.add_argument("--propagation-sigma", type=float, default=20.0)
    w.add_argument("--from-records", help="sweep stored records instead of simulating")
    w.set_defaults(func=cmd_sweep_integrity)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as err:
        print(f"robustpf: error: {err}", file=sys.stderr)
        return 2
    except io.CsvSchemaError as err:
        print(f"robustpf: error: {err}", file=sys.stderr)
        return 1
    except Exception as err:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        print(f"robustpf: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
