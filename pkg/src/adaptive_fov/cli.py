"""Command line entry point: ``adaptive-fov run | compare | check-jacobians | default-config``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import scenario
from .checks import TOLERANCE, jacobian_suite, suite_passed


def _load(args) -> scenario.ScenarioConfig:
    cfg = scenario.load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _run(args) -> int:
    cfg = _load(args)
    adaptive = None if args.adaptive is None else args.adaptive == "on"
    result = scenario.run_scenario(cfg, adaptive)
    if args.trace:
        scenario.emit_trace(result.trace, args.trace)
    if args.summary:
        scenario.emit_summary(result.summary, args.summary)
    s = result.summary
    print(f"adaptive={s['adaptive']} seed={s['seed']} ticks={s['ticks']} "
          f"duty_ratio={s['duty_ratio']:.4f} max_deviation_deg={s['max_deviation_deg']:.4f} "
          f"final_param_error={s['final_param_error']['total']:.3e}")
    return scenario.EXIT_OK


def _compare(args) -> int:
    out = scenario.compare(_load(args))
    if args.summary:
        scenario.emit_summary(out, args.summary)
    print(f"adaptive duty ratio:     {out['adaptive']['duty_ratio']:.4f}")
    print(f"non-adaptive duty ratio: {out['non_adaptive']['duty_ratio']:.4f}")
    print(f"gap:                     {out['duty_ratio_gap']:.4f}")
    return scenario.EXIT_OK


def _check(args) -> int:
    results = jacobian_suite(args.trials, args.seed)
    for name, err in sorted(results.items()):
        print(f"{'PASS' if err < TOLERANCE else 'FAIL'} {name}: max rel err {err:.2e}")
    ok = suite_passed(results)
    print(f"{'all' if ok else 'NOT all'} Jacobians within {TOLERANCE:g} over {args.trials} trials")
    return 0 if ok else 1


def _default_config(args) -> int:
    cfg = scenario.ScenarioConfig()
    if args.output == "-":
        json.dump(cfg.to_dict(), sys.stdout, indent=2)
        sys.stdout.write("\n")
    else:
        scenario.save_config(cfg, args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adaptive-fov", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log QP warnings")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one closed-loop scenario")
    r.add_argument("--config", required=True)
    r.add_argument("--adaptive", choices=("on", "off"))
    r.add_argument("--seed", type=int)
    r.add_argument("--trace", help="trace CSV output path")
    r.add_argument("--summary", help="summary JSON output path")
    r.set_defaults(func=_run)

    c = sub.add_parser("compare", help="paired adaptive / non-adaptive runs")
    c.add_argument("--config", required=True)
    c.add_argument("--seed", type=int)
    c.add_argument("--summary", help="write both summaries as JSON")
    c.set_defaults(func=_compare)

    j = sub.add_parser("check-jacobians", help="finite-difference Jacobian suite")
    j.add_argument("--trials", type=int, default=100)
    j.add_argument("--seed", type=int, default=0)
    j.set_defaults(func=_check)

    d = sub.add_parser("default-config", help="write the default scenario config")
    d.add_argument("output", nargs="?", default="-")
    d.set_defaults(func=_default_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except scenario.InfeasibleInitialization as exc:
        print(f"infeasible initialization: {exc}", file=sys.stderr)
        return scenario.EXIT_INFEASIBLE_INIT
    except scenario.QpFailureBudgetExceeded as exc:
        print(f"QP failure budget exceeded: {exc}", file=sys.stderr)
        return scenario.EXIT_QP_BUDGET
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
