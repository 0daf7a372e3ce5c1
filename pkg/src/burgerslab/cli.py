"""Command-line entry point: ``burgerslab <command> ...``.

Exit codes: 0 when every enabled check passes, 1 when a check fails,
2 for configuration or usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import asymptotics as asy
from .characteristics import detect_caustic, integrate
from .config import load_config
from .errors import BurgersLabError, ConfigurationError
from .fields import check_hypotheses
from .harness import _jsonable, _run_nsp, emit_report, render_markdown, run_sweep
from .inversion import eulerian_fields

log = logging.getLogger("burgerslab")

OK, FAILED, BAD_INPUT = 0, 1, 2


def _pair(text):
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected x1,x2 but got {text!r}") from exc
    return a, b


def _print_json(obj):
    print(json.dumps(_jsonable(obj), indent=2, sort_keys=True))


def cmd_check_fields(args):
    cfg = load_config(args.config)
    hyp = check_hypotheses(cfg.fields, cfg.domain)
    _print_json({"fields": cfg.fields.to_dict(), "domain": cfg.domain.to_dict(),
                 "hypotheses": hyp.to_dict(), "T": cfg.T})
    return OK


def cmd_trace(args):
    cfg = load_config(args.config)
    t_end = cfg.T if args.time is None else args.time
    traj = integrate(np.array(args.seed), cfg.fields, args.eps, t_end, cfg.integrator,
                     mode=args.mode or cfg.mode, times=np.linspace(0.0, t_end, cfg.n_output),
                     domain=cfg.domain)
    if args.out:
        traj.to_csv(args.out)
        log.info("wrote %s", args.out)
    else:
        traj.to_csv(sys.stdout)
    hyp = check_hypotheses(cfg.fields, cfg.domain)
    u0 = np.linalg.norm(cfg.fields.u0.evaluate(np.array(args.seed))[0])
    ok = bool(np.all(np.linalg.norm(traj.u, axis=1) <= 2 * hyp.u0_sup)
              and abs(np.linalg.norm(traj.u, axis=1) - u0).max() <= 10 * cfg.integrator.abs_tol)
    log.info("max speed drift %.3e, min J %.6g", traj.diagnostics["max_speed_drift"],
             traj.diagnostics["min_jacobian"])
    return OK if ok else FAILED


def cmd_sweep(args):
    cfg = load_config(args.config)
    out = Path(args.out or cfg.output_dir)
    report = run_sweep(cfg, workers=args.workers)
    files = emit_report(report, out)
    for f in files:
        log.info("wrote %s", f)
    print((out / "summary.md").read_text())
    return OK if report.passed else FAILED


def cmd_caustic(args):
    cfg = load_config(args.config)
    ca = cfg.caustic
    eps = ca.eps if args.eps is None else args.eps
    t_max = ca.t_max if args.t_max is None else args.t_max
    t0 = time.perf_counter()
    res = detect_caustic(ca.seeds, cfg.fields, eps, cfg.integrator, t_max, mode=cfg.mode)
    pred = float(np.min(asy.lifespan_prediction(cfg.fields, ca.seeds)))
    if res.t_eps is None:
        passed = not math.isfinite(pred) or pred > t_max
        rel = None
    else:
        rel = abs(res.t_eps - pred) / pred if math.isfinite(pred) else math.inf
        passed = rel <= ca.rel_tol
    _print_json({"epsilon": eps, "t_max": t_max, "t_numeric": res.t_eps, "t_predicted": pred,
                 "relative_difference": rel, "argmin_seed": list(res.argmin_seed),
                 "min_jacobian": res.min_jacobian, "passed": bool(passed)})
    log.info("caustic scan took %.2f s", time.perf_counter() - t0)
    return OK if passed else FAILED


def cmd_verify_nsp(args):
    cfg = load_config(args.config)
    result = _run_nsp(cfg)
    _print_json(result)
    return OK if result["passed"] else FAILED


def cmd_eulerian(args):
    cfg = load_config(args.config)
    if cfg.eulerian.grid is None:
        raise ConfigurationError("the eulerian section is disabled in this config")
    frame = eulerian_fields(cfg.fields, cfg.eulerian.grid, args.time, args.eps, cfg.integrator,
                            args.convention, tol=cfg.eulerian.tol, mode=cfg.mode)
    if args.out:
        frame.to_csv(args.out)
        log.info("wrote %s", args.out)
    else:
        frame.to_csv(sys.stdout)
    for i, why in sorted(frame.failures.items()):
        log.warning("node %d: %s", i, why)
    log.info("%d/%d nodes converged", len(frame.nodes) - len(frame.failures), len(frame.nodes))
    return FAILED if frame.partial else OK


def cmd_report(args):
    path = Path(args.dir) / "report.json"
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    print(render_markdown(data))
    return OK if data.get("passed") else FAILED


def build_parser():
    p = argparse.ArgumentParser(prog="burgerslab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("check-fields", help="check the field hypotheses on the domain")
    s.add_argument("config")
    s.set_defaults(func=cmd_check_fields)

    s = sub.add_parser("trace", help="integrate one characteristic and dump it as CSV")
    s.add_argument("config")
    s.add_argument("--seed", type=_pair, required=True, metavar="X1,X2")
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--time", type=float, help="final time (default: T from the config)")
    s.add_argument("--mode", choices=("reduced", "full"))
    s.add_argument("--out", help="CSV path (default: stdout)")
    s.set_defaults(func=cmd_trace)

    s = sub.add_parser("sweep", help="run the epsilon sweep and write reports")
    s.add_argument("config")
    s.add_argument("--out", help="output directory (default: output_dir from the config)")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("caustic", help="detect the first Jacobian sign change")
    s.add_argument("config")
    s.add_argument("--eps", type=float)
    s.add_argument("--t-max", type=float)
    s.set_defaults(func=cmd_caustic)

    s = sub.add_parser("verify-nsp", help="check the oscillatory integral bound on random samples")
    s.add_argument("config")
    s.set_defaults(func=cmd_verify_nsp)

    s = sub.add_parser("eulerian", help="Eulerian fields on the config grid by inversion")
    s.add_argument("config")
    s.add_argument("--time", type=float, required=True)
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--convention", choices=("conservative", "paper_literal"),
                   default="conservative")
    s.add_argument("--out", help="CSV path (default: stdout)")
    s.set_defaults(func=cmd_eulerian)

    s = sub.add_parser("report", help="print the summary of a written report directory")
    s.add_argument("dir")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return BAD_INPUT
    except (BurgersLabError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FAILED


if __name__ == "__main__":
    sys.exit(main())
