"""``lab`` command line: single experiments, sweeps, oracle checks and histograms."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import harness, storage


def _seed_range(text: str) -> list:
    """``"3"`` -> [3]; ``"0..9"`` -> [0, ..., 9] (inclusive)."""
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            lo, hi = int(a), int(b)
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N or A..B, got {text!r}") from None


def cmd_experiment(args) -> int:
    config = harness.ExperimentConfig.from_json_file(args.config)
    report = harness.run_experiment(config, args.seed, args.out)
    eps = "inf" if report.episodes_to_true_graph is None else report.episodes_to_true_graph
    print(f"{config.label} seed={args.seed} episodes_to_true_graph={eps} final_similarity={report.final_similarity:.4f}")
    return 0


def cmd_sweep(args) -> int:
    paths = sorted(Path(args.configs).glob("*.json"))
    if not paths:
        print(f"no *.json configs in {args.configs}", file=sys.stderr)
        return 2
    configs = []
    for p in paths:
        cfg = harness.ExperimentConfig.from_json_file(p)
        if not cfg.name:
            cfg.name = p.stem
        configs.append(cfg)
    reports = harness.run_sweep(configs, args.seeds, args.jobs, args.out)
    failed = sum(r is None for r in reports)
    for cfg, k in zip(configs, range(0, len(reports), len(args.seeds))):
        done = [r for r in reports[k : k + len(args.seeds)] if r is not None]
        print(f"{cfg.label}: median episodes_to_true_graph {harness.median_episodes(done)}")
    if failed:
        print(f"{failed} run(s) failed; see {Path(args.out) / 'report.csv'}", file=sys.stderr)
    return 1 if failed else 0


def cmd_oracle_check(args) -> int:
    from .checks import oracle_table

    rows = oracle_table(n_episodes=args.episodes, seed=args.seed)
    writer = csv.writer(sys.stdout)
    writer.writerow(["quantity", "formula", "simulated", "tolerance", "pass"])
    ok = True
    for name, formula, simulated, tol, passed in rows:
        writer.writerow([name, f"{formula:.6g}", f"{simulated:.6g}", tol, "pass" if passed else "FAIL"])
        ok &= passed
    return 0 if ok else 1


def cmd_histogram(args) -> int:
    root = Path(args.input)
    files = [root] if root.is_file() else sorted(root.rglob("report.csv"))
    if not files:
        print(f"no report.csv under {root}", file=sys.stderr)
        return 2
    # a sweep writes a top-level report.csv and one per run; prefer the top level
    if not root.is_file() and (root / "report.csv").exists():
        files = [root / "report.csv"]
    values = []
    for f in files:
        values.extend(harness.read_report_values(f))
    rows = harness.histogram_rows(values, args.bin)
    print("bin_start,count")
    for a, b in rows:
        print(f"{a},{harness._fmt(b)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("experiment", help="run one config for one seed")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("sweep", help="run every config in a directory for a range of seeds")
    p.add_argument("--configs", required=True)
    p.add_argument("--seeds", type=_seed_range, default=[0])
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle-check", help="closed-form values vs simulation, as CSV")
    p.add_argument("--episodes", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("histogram", help="episodes-to-true-graph histogram of report.csv files")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--bin", type=int, default=1000)
    p.set_defaults(func=cmd_histogram)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except storage.ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
