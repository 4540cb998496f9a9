"""``mll`` command line: run experiments, list bundled recipes, print the config schema."""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from importlib.resources import files
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config, schema, validate
from .errors import ConfigInvalid, MllError
from .experiments import run_experiment

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2

CSV_HELP = """\
output files (in --out):
  report.json     config echo, artifact version, results, checks, pass flag, violation counts
  timing.json     wall-clock seconds (kept apart so report.json is byte-stable)
  <series>.csv    one file per data series, header row first, floats with 17 significant digits:
    bias.csv            h,k,bias,half_width,violations,aborted
    bias_trace.csv      h,k,w2                       (W2 at each snapshot of the last quarter)
    local_error.csv     kind,h,error,half_width,envelope,replicas,discarded,coarse_violations
    contraction.csv     k,t,sq_dist_mean,sq_dist_sem
    deviation.csv       t,lhs,ratio,ratio_se,bound
    growth.csv          t,lhs,lhs_se,gamma_t
    constants.csv       name,value
    mixing.csv          eps,h,tau_leading,tau,ratio_half_eps
    msc_epsilon.csv     eps,sigma_min_sq,bound,witness_ratio,empirical_sup
    gbm_moment.csv      alpha,t,ratio,se,exact
    gbm_rates.csv       alpha,rate,se,non_contracting
    duality.csv         map,invariant,max_error,tolerance,passed
    samples.csv         y0,y1,...
  suites prefix each series with the sub-experiment name and "__".

exit codes: 0 all checks passed, 2 a tolerance check failed, 1 the experiment could not run.
"""


def artifact_version() -> str:
    return f"mll-{__version__}"


def recipe_dir() -> Path:
    return Path(str(files("mll") / "recipes"))


def list_recipes() -> list[str]:
    return sorted(p.stem for p in recipe_dir().glob("*.json"))


def resolve_config(arg: str) -> Path:
    p = Path(arg)
    if p.exists():
        return p
    r = recipe_dir() / f"{arg}.json"
    if r.exists():
        return r
    raise ConfigInvalid(f"no config file or recipe named {arg!r}")


def _clean(obj):
    """Recursively convert to JSON-safe builtins; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return "" if v is None else str(v)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def build_report(cfg: dict, outcome) -> dict:
    return _clean({
        "artifact_version": artifact_version(),
        "experiment": cfg["experiment"],
        "config": cfg,
        "results": outcome.results,
        "checks": outcome.checks,
        "passed": outcome.passed,
        "violations": outcome.violations,
    })


def run(config: str, out: str | None = None, seed: int | None = None, threads: int | None = None,
        stream=sys.stdout) -> int:
    try:
        path = resolve_config(config)
        cfg = load_config(path)
        if seed is not None:
            cfg["seed"] = seed
            cfg = validate(cfg)
        out_dir = Path(out or cfg.get("out") or Path("mll-out") / path.stem)
        out_dir.mkdir(parents=True, exist_ok=True)
        start = time.perf_counter()
        outcome = run_experiment(cfg, cfg["seed"], threads or cfg.get("threads"))
        elapsed = time.perf_counter() - start
    except (MllError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    report = build_report(cfg, outcome)
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out_dir / "timing.json").write_text(json.dumps({"wall_clock_s": elapsed}) + "\n", encoding="utf-8")
    for name, (header, rows) in outcome.series.items():
        write_csv(out_dir / f"{name}.csv", header, rows)
    for c in outcome.checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}", file=stream)
    print(f"{path.stem}: {'PASS' if outcome.passed else 'FAIL'} ({elapsed:.1f} s) -> {out_dir}", file=stream)
    return EXIT_PASS if outcome.passed else EXIT_FAIL


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mll", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter, epilog=CSV_HELP)
    parser.add_argument("--version", action="version", version=artifact_version())
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config or a bundled recipe by name",
                           formatter_class=argparse.RawDescriptionHelpFormatter, epilog=CSV_HELP)
    p_run.add_argument("config", help="path to a JSON config, or a recipe name from 'mll recipes'")
    p_run.add_argument("--out", help="output directory (default: config 'out' or mll-out/<name>)")
    p_run.add_argument("--seed", type=int, help="override the config seed")
    p_run.add_argument("--threads", type=int, help="worker threads (default: $MLL_THREADS or 1)")
    sub.add_parser("recipes", help="list bundled recipes, one per acceptance criterion")
    sub.add_parser("schema", help="print the JSON schema of experiment configs")
    args = parser.parse_args(argv)
    if args.command == "run":
        return run(args.config, args.out, args.seed, args.threads)
    if args.command == "recipes":
        for name in list_recipes():
            print(name)
        return EXIT_PASS
    print(json.dumps(schema(), indent=2))
    return EXIT_PASS


if __name__ == "__main__":
    sys.exit(main())
