"""``cme-rates run`` and ``cme-rates report``."""

import argparse
import sys

from ..exceptions import ConfigError
from .config import EXPERIMENTS, ExperimentConfig
from .outputs import git_describe, load_summary, render_report, write_outputs
from .runner import run


def _parser():
    ap = argparse.ArgumentParser(prog="cme-rates", description="Rate-verification experiments for CME estimators.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run experiments from a JSON config")
    r.add_argument("--config", required=True, help="path to a JSON config")
    r.add_argument("--experiment", choices=EXPERIMENTS + ("all",), help="override the configured experiment")
    r.add_argument("--seed", type=int, help="override master_seed")
    r.add_argument("--out", help="override output_dir")
    r.add_argument("--n-jobs", type=int, help="override n_jobs")
    p = sub.add_parser("report", help="re-render the summary in an output directory")
    p.add_argument("dir")
    return ap


def run_command(args):
    try:
        cfg = ExperimentConfig.load(args.config)
        for key, val in (("experiment", args.experiment), ("master_seed", args.seed),
                         ("output_dir", args.out), ("n_jobs", args.n_jobs)):
            if val is not None:
                setattr(cfg, key, val)
        cfg.validate()
    except ConfigError as exc:
        print(f"config error at {exc.field}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    rows, results = run(cfg)
    docs = [r.to_dict() for r in results]
    try:
        write_outputs(rows, {"config": cfg.to_dict(), "results": docs, "git_describe": git_describe()},
                      cfg.output_dir)
        doc = load_summary(cfg.output_dir)
    except OSError as exc:
        print(f"cannot write outputs: {exc}", file=sys.stderr)
        return 3
    print(render_report(doc))
    return 0 if doc["all_pass"] else 1


def report_command(args):
    try:
        doc = load_summary(args.dir)
    except (OSError, ValueError) as exc:
        print(f"cannot read summary: {exc}", file=sys.stderr)
        return 3
    print(render_report(doc))
    return 0 if doc["all_pass"] else 1


def main(argv=None):
    args = _parser().parse_args(argv)
    return run_command(args) if args.command == "run" else report_command(args)


if __name__ == "__main__":
    sys.exit(main())
