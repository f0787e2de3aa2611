"""Command line entry point: ``run``, ``check``, ``calc`` and ``plot``.

Exit codes: 0 success, 2 configuration error, 3 invariant-check failure,
4 budget error, 1 anything else raised by the library.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .errors import ConfigurationError, LabError


def _cmd_run(args) -> int:
    from .harness import ExperimentConfig, run_experiment

    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config: {exc}") from None
    cfg = ExperimentConfig.from_json(text)
    overrides = {}
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.output_dir is not None:
        overrides["output_dir"] = args.output_dir
    if overrides:
        doc = json.loads(text)
        doc.update(overrides)
        cfg = ExperimentConfig.from_dict(doc)
    result = run_experiment(cfg)
    for label, row in result.summary.items():
        print(f"{label}: median final suboptimality {row['median_final_suboptimality']:.6g} "
              f"over {row['trials']} trials")
    print(f"wrote {result.csv_path}")
    if result.svg_path:
        print(f"wrote {result.svg_path}")
    return 0


def _cmd_check(args) -> int:
    from .harness import check_suite

    report = check_suite(args.battery)
    print(report)
    return 0 if report.passed else 3


def _cmd_calc(args) -> int:
    from .theory import theory_diagnostics

    report = theory_diagnostics(args.d, args.H, args.A, args.eps_sim, args.lambda_bar, gamma=args.gamma,
                                kappa=args.kappa, epsilon=args.epsilon, delta=args.delta, R=args.R,
                                log_f=args.log_f)
    if args.json:
        doc = report.as_dict()
        print(json.dumps({k: (None if isinstance(v, float) and math.isinf(v) else v) for k, v in doc.items()},
                         sort_keys=True))
    else:
        print("\n".join(report.lines()))
    return 0


def _cmd_plot(args) -> int:
    from .harness import plot_csv

    try:
        out = plot_csv(args.inp, args.out)
    except OSError as exc:
        raise ConfigurationError(f"cannot read {args.inp}: {exc}") from None
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sim2real-lab", description="Tabular sim-to-real transfer experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("--config", required=True)
    run.add_argument("--workers", type=int, default=None, help="override the config's worker count")
    run.add_argument("--output-dir", default=None, help="override the config's output directory")
    run.set_defaults(fn=_cmd_run)

    check = sub.add_parser("check", help="run the exact invariant battery")
    check.add_argument("--battery", default=None, help="e.g. random=100,eps=0.2,seed=0,policies=5,subsets=10")
    check.set_defaults(fn=_cmd_check)

    calc = sub.add_parser("calc", help="bound and schedule diagnostics from problem constants")
    calc.add_argument("--d", type=int, required=True)
    calc.add_argument("--H", type=int, required=True)
    calc.add_argument("--A", type=int, required=True)
    calc.add_argument("--eps-sim", type=float, required=True)
    calc.add_argument("--lambda-bar", type=float, required=True)
    calc.add_argument("--gamma", type=float, default=math.inf)
    calc.add_argument("--kappa", type=float, default=0.1)
    calc.add_argument("--epsilon", type=float, default=0.1)
    calc.add_argument("--delta", type=float, default=0.1)
    calc.add_argument("--R", type=float, default=None)
    calc.add_argument("--log-f", type=float, default=0.0)
    calc.add_argument("--json", action="store_true")
    calc.set_defaults(fn=_cmd_calc)

    plot = sub.add_parser("plot", help="render a harness CSV as SVG")
    plot.add_argument("--in", dest="inp", required=True)
    plot.add_argument("--out", required=True)
    plot.set_defaults(fn=_cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except LabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
