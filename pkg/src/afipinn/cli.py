"""Command-line front end: train, sweep, estimate-pf and report.

Config files are flat ``key = value`` text with ``#`` comments, e.g.::

    method = r_fipinn
    problem = multipeak2
    n_c = 1000
    anneal.a = 0.5
    ss.p = 0.1

Run directories go under ``$AFIPINN_OUTPUT_DIR`` (default ``./runs``).
Exit codes: 0 success, 1 numerical or child failure, 2 bad configuration.
"""

import argparse
import csv
import hashlib
import json
import logging
import os
import pathlib
import sys
from dataclasses import fields

import numpy as np

from .analytic import analytic_case, symmetric_box
from .errors import ConfigError
from .subsim import SubsetSimConfig, subset_simulation
from .trainer import Method, StopReason, TrainConfig, child_rng, parse_method, train_from_config

log = logging.getLogger(__name__)

OUTPUT_ENV = "AFIPINN_OUTPUT_DIR"
EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2

METRICS_HEADER = ["epoch", "loss_total", "loss_pde", "loss_bnd", "rel_l2"]
SUMMARY_FIELDS = ["method", "problem", "n_c", "seed", "final_rel_l2", "stop_reason",
                  "restart_count", "epochs", "wall_time", "run_dir"]
SWEEP_HEADER = ["method", "n_c", "seed", "final_rel_l2", "stop_reason", "run_dir"]
PF_HEADER = ["repeat", "p_hat", "levels", "n_failures", "n_evaluations", "capped"]

# config keys that differ from the TrainConfig attribute name
KEY_ALIASES = {
    "anneal.a": "anneal_a",
    "anneal.b": "anneal_b",
    "restart.window": "restart_window",
    "restart.delta": "restart_delta",
    "restart.min_gap": "restart_min_gap",
    "ss.p": "ss_p",
    "ss.width_frac": "ss_width_frac",
    "ss.max_levels": "ss_max_levels",
}
CONFIG_FIELDS = {f.name: f for f in fields(TrainConfig)}
DEFAULTS = TrainConfig()


def _attr_name(key: str) -> str:
    return KEY_ALIASES.get(key, key)


def _coerce(attr: str, text: str):
    default = getattr(DEFAULTS, attr)
    if isinstance(default, Method):
        return parse_method(text)
    if isinstance(default, bool):
        if text.lower() not in ("true", "false"):
            raise ValueError(f"expected true or false, got {text!r}")
        return text.lower() == "true"
    if isinstance(default, int):
        value = float(text)
        if not value.is_integer():
            raise ValueError(f"expected an integer, got {text!r}")
        return int(value)
    if isinstance(default, float):
        return float(text)
    return text


def parse_assignment(text: str, line=None):
    """``"key = value"`` -> ``(attribute, value)``."""
    if "=" not in text:
        raise ConfigError(f"expected 'key = value', got {text.strip()!r}", line)
    key, raw = (part.strip() for part in text.split("=", 1))
    attr = _attr_name(key)
    if attr not in CONFIG_FIELDS:
        raise ConfigError(f"unknown key {key!r}", line)
    if not raw:
        raise ConfigError(f"missing value for {key!r}", line)
    try:
        return attr, _coerce(attr, raw)
    except (ValueError, ConfigError) as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}", line) from None


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        attr, value = parse_assignment(line, lineno)
        if attr in values:
            raise ConfigError(f"duplicate key {line.split('=')[0].strip()!r}", lineno)
        values[attr] = value
    return values


def load_config(path, overrides=()) -> TrainConfig:
    """Read a config file and apply ``key=value`` overrides on top."""
    path = pathlib.Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    values = parse_config_text(path.read_text())
    for item in overrides:
        attr, value = parse_assignment(item)
        values[attr] = value
    return TrainConfig(**values)


def config_hash(config: TrainConfig) -> str:
    """Hash of the resolved config without the seed."""
    data = config.to_dict()
    data.pop("seed")
    return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()[:12]


def output_root() -> pathlib.Path:
    return pathlib.Path(os.environ.get(OUTPUT_ENV, "runs"))


def run_dir_for(config: TrainConfig, root=None) -> pathlib.Path:
    root = output_root() if root is None else pathlib.Path(root)
    return root / f"{config.method.value}-{config_hash(config)}-seed{config.seed}"


def _fmt(x) -> str:
    return repr(float(x))


def write_artifacts(run_dir: pathlib.Path, config: TrainConfig, report) -> dict:
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True)
                                         + "\n")
    snaps = dict(report.snapshots)
    with open(run_dir / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_HEADER)
        for e in range(report.epochs):
            rel = _fmt(snaps[e]) if e in snaps else ""
            w.writerow([e, _fmt(report.loss_total[e]), _fmt(report.loss_pde[e]),
                        _fmt(report.loss_bnd[e]), rel])
    with open(run_dir / "events.jsonl", "w") as fh:
        for event in report.events:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
    X = report.final_interior
    with open(run_dir / "samples_final.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(X.shape[1])])
        w.writerows([[_fmt(v) for v in row] for row in X])
    summary = {
        "method": config.method.value,
        "problem": config.problem,
        "n_c": config.n_c,
        "seed": config.seed,
        "final_rel_l2": report.final_rel_l2,
        "stop_reason": report.stop_reason.value,
        "restart_count": len(report.restart_events),
        "epochs": report.epochs - 1,
        "wall_time": report.wall_time,
        "norm_state": report.norm_state,
        "error_message": report.error_message,
        "run_dir": str(run_dir),
    }
    (run_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def run_training(config: TrainConfig, root=None, progress_every: int = 0):
    """Train once and write artifacts; returns the summary dict."""
    _, report = train_from_config(config, progress_every)
    return write_artifacts(run_dir_for(config, root), config, report)


def cmd_train(args) -> int:
    config = load_config(args.config, args.set)
    summary = run_training(config, args.output, args.progress)
    print(f"{summary['run_dir']}: stop={summary['stop_reason']} "
          f"rel_l2={summary['final_rel_l2']:.4e} restarts={summary['restart_count']}")
    return EXIT_FAILURE if summary["stop_reason"] == StopReason.NUMERICAL_ERROR.value else EXIT_OK


def cmd_sweep(args) -> int:
    base = load_config(args.config, args.set)
    methods = [parse_method(m) for m in args.methods] if args.methods is not None else [base.method]
    if not methods:
        raise ConfigError("method list is empty")
    n_c_list = args.n_c if args.n_c is not None else [base.n_c]
    seeds = args.seeds if args.seeds is not None else [base.seed]
    if not n_c_list or not seeds:
        raise ConfigError("N_c and seed lists must be non-empty")
    root = pathlib.Path(args.output) if args.output else output_root()
    root.mkdir(parents=True, exist_ok=True)
    rows, failures = [], []
    for method in methods:
        for n_c in n_c_list:
            for seed in seeds:
                values = base.to_dict()
                values.update(method=method, n_c=n_c, seed=seed)
                label = f"{method.value} n_c={n_c} seed={seed}"
                try:
                    summary = run_training(TrainConfig(**values), root, args.progress)
                except Exception as exc:  # keep going, report at the end
                    log.exception("child %s failed", label)
                    failures.append(f"{label}: {exc}")
                    continue
                if summary["stop_reason"] == StopReason.NUMERICAL_ERROR.value:
                    failures.append(f"{label}: {summary['error_message']}")
                rows.append([method.value, n_c, seed, _fmt(summary["final_rel_l2"]),
                             summary["stop_reason"], summary["run_dir"]])
    with open(root / "sweep_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_HEADER)
        w.writerows(rows)
    print(f"wrote {root / 'sweep_summary.csv'} ({len(rows)} rows)")
    if failures:
        print("failed runs:", file=sys.stderr)
        for f in failures:
            print(f"  {f}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_estimate_pf(args) -> int:
    case = analytic_case(args.q)
    box = symmetric_box(args.dim)
    cfg = SubsetSimConfig(n_s=args.n_s, p=args.p, eps_r=args.eps_r,
                          proposal_width_frac=args.width_frac, max_levels=args.max_levels)
    truth = case.failure_probability(args.eps_r, args.dim)
    rows = []
    for k in range(args.repeats):
        res = subset_simulation(case.q, box, cfg, child_rng(args.seed, "estimate-pf", k))
        rows.append([k, _fmt(res.p_hat), res.levels, res.n_failures, res.n_evaluations,
                     res.capped])
    p = np.array([float(r[1]) for r in rows])
    out = pathlib.Path(args.output) if args.output else output_root()
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "pf_runs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PF_HEADER)
        w.writerows(rows)
    print(f"q={case.name} d={args.dim} eps_r={args.eps_r} repeats={args.repeats}")
    print(f"mean p_hat = {p.mean():.6g}")
    print(f"std p_hat = {p.std(ddof=1) if len(p) > 1 else 0.0:.6g}")
    print(f"truth = {truth:.6g}")
    return EXIT_OK


def collect_summaries(paths) -> list:
    found = []
    for path in paths:
        path = pathlib.Path(path)
        files = [path] if path.is_file() else sorted(path.rglob("summary.json"))
        for f in files:
            found.append(json.loads(f.read_text()))
    return found


def cmd_report(args) -> int:
    summaries = collect_summaries(args.paths or [output_root()])
    if not summaries:
        print("no summary.json files found", file=sys.stderr)
        return EXIT_FAILURE
    summaries.sort(key=lambda s: (s["problem"], s["method"], s["n_c"], s["seed"]))
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(SUMMARY_FIELDS)
        for s in summaries:
            w.writerow([s[k] for k in SUMMARY_FIELDS])
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="afipinn", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("config", help="flat key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--output", help=f"output root (default ${OUTPUT_ENV} or ./runs)")
        p.add_argument("--progress", type=int, default=0, metavar="N",
                       help="log every N epochs (with -v)")

    p = sub.add_parser("train", help="run one training job")
    add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="train over methods x N_c x seeds")
    add_common(p)
    p.add_argument("--methods", nargs="*", help="methods to run (default: config method)")
    p.add_argument("--n-c", nargs="*", type=int, help="collocation set sizes")
    p.add_argument("--seeds", nargs="*", type=int, help="master seeds")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("estimate-pf", help="subset simulation on an analytic performance function")
    p.add_argument("--q", required=True, help="linear, max-norm or sphere-exterior")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--eps-r", type=float, required=True)
    p.add_argument("--n-s", type=int, default=1000)
    p.add_argument("--p", type=float, default=0.1)
    p.add_argument("--width-frac", type=float, default=SubsetSimConfig(n_s=10).proposal_width_frac)
    p.add_argument("--max-levels", type=int, default=20)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", help="directory for pf_runs.csv")
    p.set_defaults(func=cmd_estimate_pf)

    p = sub.add_parser("report", help="aggregate summary.json files into one CSV table")
    p.add_argument("paths", nargs="*", help="run directories or roots to scan")
    p.add_argument("--out", help="write the table here instead of stdout")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
