"""Epsilon sweeps: integrate, compare with every asymptotic predictor, check
the a priori bounds, fit convergence orders and write reports.

The unit of parallel work is one epsilon value. Workers return plain
dictionaries that are merged in epsilon order, so the report does not
depend on the number of workers.
"""

from __future__ import annotations

import json
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import asymptotics as asy
from .characteristics import (CONVENTIONS, detect_caustic, integrate_ensemble,
                              rho_from_jacobian)
from .config import ADJUDICATE, ExperimentConfig
from .errors import BurgersLabError
from .fields import check_hypotheses
from .inversion import eulerian_fields
from .oscillatory import run_nsp_suite

# claim id -> expected order in epsilon
CLAIMS = {
    "confinement": 1,
    "trajectory_expansion": 2,
    "jacobian_expansion": 1,
    "lagrangian_velocity": 1,
    "lagrangian_density": 1,
    "eulerian_velocity": 1,
    "eulerian_density": 1,
}
NO_DATA = "no data"
EXACT = "exact regime"
NOISE = "below noise floor"


def _options(choice, allowed):
    return tuple(allowed) if choice == ADJUDICATE else (choice,)


# ---------------------------------------------------------------------------
# order fitting


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    residual: float
    n_points: int
    flags: tuple = ()

    @property
    def constant(self):
        """exp(intercept): the fitted remainder constant in error ~ C eps^slope."""
        return math.exp(self.intercept) if math.isfinite(self.intercept) else math.nan

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "constant": self.constant,
                "residual": self.residual, "n_points": self.n_points, "flags": list(self.flags)}


def fit_order(errors, eps_list) -> FitResult:
    """Least-squares line through (log eps, log error).

    Zero errors are dropped and flagged; ``residual`` is the RMS misfit in
    log space.
    """
    e = np.asarray(errors, dtype=float)
    x = np.asarray(eps_list, dtype=float)
    if e.shape != x.shape or e.size < 3:
        raise ValueError("fit_order needs at least 3 matching (eps, error) pairs")
    if np.any(x <= 0) or np.any(e < 0) or not np.all(np.isfinite(e)):
        raise ValueError("eps must be positive and errors finite and nonnegative")
    flags = []
    keep = e > 0
    if not keep.all():
        flags.append(NOISE)
    if keep.sum() < 2:
        return FitResult(math.nan, math.nan, math.nan, int(keep.sum()), tuple(flags + [NO_DATA]))
    lx, le = np.log(x[keep]), np.log(e[keep])
    slope, intercept = np.polyfit(lx, le, 1)
    resid = le - (slope * lx + intercept)
    return FitResult(float(slope), float(intercept), float(np.sqrt(np.mean(resid ** 2))),
                     int(keep.sum()), tuple(flags))


# ---------------------------------------------------------------------------
# one epsilon


def _certified_bounds(hyp, domain):
    # grid extrema can miss the true ones by at most |grad b| * half diagonal
    (lo1, hi1), (lo2, hi2) = domain.rectangle
    r = domain.resolution - 1
    half_diag = 0.5 * math.hypot((hi1 - lo1) / r, (hi2 - lo2) / r)
    slack = hyp.grad_b_sup * half_diag
    return max(hyp.b_min - slack, 1e-300), hyp.b_sup + slack


def _bound(rows, eps, name, measured, limit, margin=None, rounding=0.0):
    margin = limit - measured if margin is None else margin
    rows.append({"epsilon": eps, "check": name, "measured": float(measured),
                 "limit": float(limit), "margin": float(margin),
                 "passed": bool(margin >= -rounding)})


def _lagrangian(cfg: ExperimentConfig, hyp, eps, out):
    spec, T = cfg.fields, cfg.T
    times = cfg.output_times
    ens = integrate_ensemble(cfg.seeds, spec, eps, T, cfg.integrator, mode=cfg.mode,
                             times=times, domain=cfg.domain)
    m, n = ens.phi.shape
    x0 = np.broadcast_to(cfg.seeds, (m, n, 2))
    t = np.broadcast_to(times[:, None], (m, n))
    err = out["errors"]
    disp = np.linalg.norm(ens.X - x0, axis=-1)
    err["confinement"] = {"value": float(disp.max())}
    out["diagnostics"]["confinement_ratio"] = float(disp.max() / eps)
    Xp = asy.approx_X(spec, x0, t, eps, ens.phi)
    err["trajectory_expansion"] = {"value": float(np.abs(ens.X - Xp).max())}
    DXp, Jp = asy.approx_DX_J(spec, x0, t, eps, ens.phi)
    err["jacobian_expansion"] = {"value": float(np.abs(ens.DX - DXp).max())}
    J = ens.jacobian
    out["diagnostics"]["determinant_expansion_error"] = float(np.abs(J - Jp).max())
    up = asy.predict_u(spec, x0, t, eps, "lagrangian")
    err["lagrangian_velocity"] = {"value": float(np.abs(ens.u - up).max())}
    out["diagnostics"]["min_jacobian"] = float(J.min())
    u0, _ = spec.u0.evaluate(cfg.seeds)
    out["diagnostics"]["speed_drift"] = float(
        np.abs(np.linalg.norm(ens.u, axis=-1) - np.linalg.norm(u0, axis=-1)).max())
    if J.min() <= 0:
        out["failures"].append(f"caustic crossed before T (min J = {J.min():.3g})")
    else:
        rho0 = spec.rho0.value(cfg.seeds)[None, :]
        direct = rho0 * ens.rho_ratio
        for conv in CONVENTIONS:
            num = rho_from_jacobian(rho0, J, conv)
            out["diagnostics"][f"continuity_vs_{conv}"] = float(np.abs(direct - num).max())
        cands = {}
        for variant in _options(cfg.variant, asy.RHO_VARIANTS):
            pred = asy.predict_rho(spec, x0, t, eps, "lagrangian", variant)
            for conv in _options(cfg.convention, CONVENTIONS):
                num = rho_from_jacobian(rho0, J, conv)
                cands[f"{variant}/{conv}"] = float(np.abs(num - pred).max())
        err["lagrangian_density"] = cands

    # a priori bounds
    b_lo, b_hi = _certified_bounds(hyp, cfg.domain)
    u0s, gb, gu = hyp.u0_sup, hyp.grad_b_sup, hyp.grad_u0_sup
    rows = out["bounds"]
    _bound(rows, eps, "speed", np.linalg.norm(ens.u, axis=-1).max(), 2 * u0s)
    # every bound holds with equality at t = 0, so margins are taken over t > 0
    pos = times > 0
    tp, dp, phip = t[pos], disp[pos], ens.phi[pos]
    _bound(rows, eps, "displacement", disp.max(), 2 * T * u0s,
           margin=float((2 * tp * u0s - dp).min()))
    c_t = (4.0 / b_lo) * (1.0 + T * gb * u0s / b_lo)
    _bound(rows, eps, "confinement", disp.max(), c_t * eps * u0s)
    dxn = np.linalg.norm(ens.DX[pos], ord=2, axis=(-2, -1))
    lim = (1.0 + c_t * eps * gu) * np.exp(2.0 * c_t * gb * u0s * tp)
    k = np.unravel_index(int(np.argmin(lim - dxn)), dxn.shape)
    _bound(rows, eps, "jacobian_matrix", dxn[k], lim[k])
    lo_margin = (phip - b_lo * tp).min()
    hi_margin = (b_hi * tp - phip).min()
    # phi is a sum of many steps; allow for its rounding, not for a real violation
    rounding = 1e-10 * b_hi * T
    _bound(rows, eps, "phase_lower", float(ens.phi[-1].min()), b_lo * T,
           margin=float(lo_margin), rounding=rounding)
    _bound(rows, eps, "phase_upper", float(ens.phi[-1].max()), b_hi * T,
           margin=float(hi_margin), rounding=rounding)


def _eulerian(cfg: ExperimentConfig, eps, out):
    spec = cfg.fields
    eu = cfg.eulerian
    thetas = _options(cfg.theta_variant, asy.THETA_VARIANTS)
    u_err = {tv: 0.0 for tv in thetas}
    r_err = {}
    converged = total = 0
    disp = 0.0
    iters = 0
    for frac in eu.time_fractions:
        t = frac * cfg.T
        frame = eulerian_fields(spec, eu.grid, t, eps, cfg.integrator, "conservative",
                                tol=eu.tol, mode=cfg.mode)
        ok = np.isfinite(frame.rho_values)
        total += ok.size
        converged += int(ok.sum())
        for i, why in sorted(frame.failures.items()):
            out["failures"].append(f"inversion failed at node {i}, t={t:.6g}: {why}")
        if not ok.any():
            continue
        nodes, y = frame.nodes[ok], frame.preimages[ok]
        disp = max(disp, float(np.linalg.norm(y - nodes, axis=1).max()))
        iters = max(iters, int(frame.newton_iters[ok].max()))
        Jn = frame.jacobians[ok]
        rho0y = spec.rho0.value(y)
        for tv in thetas:
            up = asy.predict_u(spec, nodes, t, eps, "eulerian", tv)
            u_err[tv] = max(u_err[tv], float(np.abs(frame.u_values[ok] - up).max()))
            for variant in _options(cfg.variant, asy.RHO_VARIANTS):
                pred = asy.predict_rho(spec, nodes, t, eps, "eulerian", variant, tv)
                for conv in _options(cfg.convention, CONVENTIONS):
                    num = rho_from_jacobian(rho0y, Jn, conv)
                    key = f"{variant}/{conv}/theta={tv}"
                    r_err[key] = max(r_err.get(key, 0.0), float(np.abs(num - pred).max()))
    out["errors"]["eulerian_velocity"] = {f"theta={k}": v for k, v in u_err.items()}
    out["errors"]["eulerian_density"] = r_err
    out["diagnostics"]["eulerian_converged_fraction"] = converged / total if total else 1.0
    out["diagnostics"]["preimage_displacement_ratio"] = disp / eps
    out["diagnostics"]["max_newton_iters"] = iters


def _lifespan(cfg: ExperimentConfig, hyp, eps, out):
    ls = cfg.lifespan
    if not math.isfinite(hyp.t_star):
        out["lifespan"] = {"epsilon": eps, "T": math.inf, "min_jacobian": 1.0, "passed": True}
        return
    T = ls.fraction * hyp.t_star
    ens = integrate_ensemble(cfg.seeds, cfg.fields, eps, T, cfg.integrator, mode=cfg.mode,
                             times=np.linspace(0.0, T, cfg.n_output))
    jmin = float(ens.jacobian.min())
    out["lifespan"] = {"epsilon": eps, "T": T, "min_jacobian": jmin,
                       "passed": bool(jmin > ls.min_jacobian)}


def sweep_epsilon(cfg: ExperimentConfig, eps, with_lifespan=False) -> dict:
    """Everything computed at one epsilon, as a plain dictionary."""
    hyp = check_hypotheses(cfg.fields, cfg.domain)
    out = {"epsilon": float(eps), "errors": {}, "bounds": [], "diagnostics": {},
           "failures": []}
    try:
        _lagrangian(cfg, hyp, eps, out)
    except BurgersLabError as exc:
        out["failures"].append(f"{type(exc).__name__}: {exc}")
    if cfg.eulerian.enabled:
        try:
            _eulerian(cfg, eps, out)
        except BurgersLabError as exc:
            out["failures"].append(f"{type(exc).__name__}: {exc}")
    if with_lifespan:
        try:
            _lifespan(cfg, hyp, eps, out)
        except BurgersLabError as exc:
            out["failures"].append(f"{type(exc).__name__}: {exc}")
            out["lifespan"] = {"epsilon": eps, "min_jacobian": math.nan, "passed": False}
    return out


def _worker(raw, eps, with_lifespan):
    return sweep_epsilon(ExperimentConfig.from_dict(raw), eps, with_lifespan)


# ---------------------------------------------------------------------------
# report


@dataclass
class SweepReport:
    name: str
    config: dict
    hypotheses: dict
    eps: list
    per_eps: list
    claims: dict = field(default_factory=dict)
    adjudication: dict = field(default_factory=dict)
    caustic: dict | None = None
    lifespan: list = field(default_factory=list)
    nsp: dict | None = None
    eps_T: float | None = None
    flags: list = field(default_factory=list)
    passed: bool = False
    runtime: dict = field(default_factory=dict)

    def to_dict(self):
        """Deterministic content; runtime metadata is kept out."""
        return {"name": self.name, "passed": self.passed, "flags": self.flags,
                "config": self.config, "hypotheses": self.hypotheses, "eps": self.eps,
                "claims": self.claims, "adjudication": self.adjudication,
                "eps_T": self.eps_T, "lifespan": self.lifespan, "caustic": self.caustic,
                "nsp": self.nsp, "per_eps": self.per_eps}

    @classmethod
    def empty(cls, name="empty"):
        return cls(name, {}, {}, [], [], flags=[NO_DATA], passed=False)


def _rank_key(errs, eps):
    # geometric mean error over the sweep; missing points rank last
    vals = [errs.get(e) for e in eps]
    if any(v is None or not math.isfinite(v) for v in vals):
        return math.inf
    return float(np.mean(np.log(np.maximum(vals, 1e-300))))


def _summarize_claim(name, per_eps, eps, cfg: ExperimentConfig):
    order = CLAIMS[name]
    window = cfg.checks.second_order if order == 2 else cfg.checks.first_order
    if name == "confinement":
        window = None
    table = {}
    for row in per_eps:
        for cand, v in row["errors"].get(name, {}).items():
            table.setdefault(cand, {})[row["epsilon"]] = v
    if not table:
        return {"order": order, "window": window and list(window), "selected": None, "errors": [],
                "fit": None, "flags": [NO_DATA], "passed": False}, {}
    cands = sorted(table)
    fits = {}
    for c in cands:
        es = [e for e in eps if e in table[c]]
        vals = [table[c][e] for e in es]
        fits[c] = fit_order(vals, es).to_dict() if len(es) >= 3 else None
    selected = min(cands, key=lambda c: (_rank_key(table[c], eps), c))
    errs = [table[selected].get(e, math.nan) for e in eps]
    flags = []
    finite = [v for v in errs if math.isfinite(v)]
    fit = fits[selected]
    if finite and max(finite) <= cfg.integrator.abs_tol and len(finite) == len(eps):
        flags.append(EXACT)
        passed = True
    elif name == "confinement":
        ratios = [v / e for v, e in zip(errs, eps) if math.isfinite(v)]
        stable = len(ratios) == len(eps) and max(ratios) < cfg.checks.stability_ratio * min(ratios)
        passed = bool(stable)
        if not stable:
            flags.append("ratio |X-x|/eps not stable")
    elif fit is None or not math.isfinite(fit["slope"]):
        flags.append(NO_DATA)
        passed = False
    else:
        passed = bool(window[0] <= fit["slope"] <= window[1])
        flags.extend(fit["flags"])
    summary = {"order": order, "window": window and list(window),
               "selected": selected if len(cands) > 1 else None, "errors": errs,
               "fit": fit, "flags": flags, "passed": passed}
    if name == "confinement":
        summary["ratios"] = [v / e for v, e in zip(errs, eps)]
    adjud = {c: {"errors": [table[c].get(e, math.nan) for e in eps], "fit": fits[c],
                 "in_window": bool(window is not None and fits[c] is not None
                                   and math.isfinite(fits[c]["slope"])
                                   and window[0] <= fits[c]["slope"] <= window[1]),
                 "floor": table[c].get(eps[-1], math.nan)} for c in cands}
    return summary, adjud


def _density_verdict(adjud, window):
    """Which density variants converge against each rho<->J convention."""
    out = {}
    for key, info in adjud.items():
        parts = key.split("/")
        variant, conv = parts[0], parts[1]
        theta = parts[2] if len(parts) > 2 else None
        slot = out.setdefault(conv, {})
        if theta is not None:
            slot = slot.setdefault(theta, {})
        slot[variant] = {"slope": None if info["fit"] is None else info["fit"]["slope"],
                         "floor": info["floor"], "converges": info["in_window"]}
    return out


def _run_caustic(cfg: ExperimentConfig):
    ca = cfg.caustic
    t0 = time.perf_counter()
    res = detect_caustic(ca.seeds, cfg.fields, ca.eps, cfg.integrator, ca.t_max, mode=cfg.mode)
    elapsed = time.perf_counter() - t0
    pred = np.asarray(asy.lifespan_prediction(cfg.fields, ca.seeds), dtype=float)
    t_pred = float(pred.min())
    if res.t_eps is None:
        passed = not math.isfinite(t_pred) or t_pred > ca.t_max
        rel = None
    else:
        rel = abs(res.t_eps - t_pred) / t_pred if math.isfinite(t_pred) else math.inf
        passed = bool(rel <= ca.rel_tol)
    return {"epsilon": ca.eps, "t_max": ca.t_max, "t_numeric": res.t_eps,
            "t_predicted": t_pred, "relative_difference": rel,
            "argmin_seed": list(res.argmin_seed), "min_jacobian": res.min_jacobian,
            "rel_tol": ca.rel_tol, "passed": bool(passed)}, elapsed


def _run_nsp(cfg: ExperimentConfig):
    ns = cfg.nsp
    results = run_nsp_suite(ns.seed, ns.count, ns.eps, ns.points_per_period)
    worst = min(results, key=lambda r: min(r[1].margin_cos, r[1].margin_sin))
    by_eps = {}
    for _, chk in results:
        slot = by_eps.setdefault(chk.epsilon, {"cases": 0, "failed": 0, "min_margin": math.inf})
        slot["cases"] += 1
        slot["failed"] += int(not chk.passed)
        slot["min_margin"] = min(slot["min_margin"], chk.margin_cos, chk.margin_sin)
    return {"count": ns.count, "seed": ns.seed, "eps": list(ns.eps),
            "cases": len(results), "failed": sum(not c.passed for _, c in results),
            "worst_case": worst[0], "min_margin": min(worst[1].margin_cos, worst[1].margin_sin),
            "by_eps": [{"epsilon": e, **v} for e, v in sorted(by_eps.items(), reverse=True)],
            "passed": all(c.passed for _, c in results)}


def run_sweep(cfg: ExperimentConfig, workers=None) -> SweepReport:
    """Run the full epsilon sweep described by ``cfg``."""
    started = time.perf_counter()
    workers = cfg.workers if workers is None else workers
    hyp = check_hypotheses(cfg.fields, cfg.domain)
    eps = list(cfg.eps)
    n_life = cfg.lifespan.n_eps if cfg.lifespan.enabled else 0
    life_flags = [i >= len(eps) - n_life for i in range(len(eps))]
    if workers > 1 and len(eps) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_eps = list(pool.map(_worker, [cfg.raw] * len(eps), eps, life_flags))
    else:
        per_eps = [sweep_epsilon(cfg, e, lf) for e, lf in zip(eps, life_flags)]
    lifespan = [row.pop("lifespan") for row in per_eps if "lifespan" in row]

    claims, adjudication = {}, {}
    for name in CLAIMS:
        if name.startswith("eulerian") and not cfg.eulerian.enabled:
            continue
        claims[name], adj = _summarize_claim(name, per_eps, eps, cfg)
        if len(adj) > 1:
            adjudication[name] = adj
    for name in ("lagrangian_density", "eulerian_density"):
        if name in adjudication:
            adjudication[f"{name}_verdict"] = _density_verdict(
                adjudication[name], cfg.checks.first_order)

    per_eps_ok = []
    for row in per_eps:
        ok = not row["failures"] and all(b["passed"] for b in row["bounds"])
        if cfg.eulerian.enabled:
            ok = ok and row["diagnostics"].get("eulerian_converged_fraction", 0.0) == 1.0
        row["passed"] = bool(ok)
        per_eps_ok.append(ok)
    eps_T = max((e for e, ok in zip(eps, per_eps_ok) if ok), default=None)

    report = SweepReport(cfg.name, _config_echo(cfg), hyp.to_dict(), eps, per_eps,
                         claims, adjudication, lifespan=lifespan, eps_T=eps_T)
    runtime = {"sweep_seconds": time.perf_counter() - started}
    if cfg.caustic.enabled:
        report.caustic, runtime["caustic_seconds"] = _run_caustic(cfg)
    if cfg.nsp.enabled:
        t0 = time.perf_counter()
        report.nsp = _run_nsp(cfg)
        runtime["nsp_seconds"] = time.perf_counter() - t0
    report.passed = bool(
        all(c["passed"] for c in claims.values())
        and all(per_eps_ok)
        and all(x["passed"] for x in lifespan)
        and (report.caustic is None or report.caustic["passed"])
        and (report.nsp is None or report.nsp["passed"]))
    runtime.update(_environment(workers))
    runtime["total_seconds"] = time.perf_counter() - started
    report.runtime = runtime
    return report


def _config_echo(cfg: ExperimentConfig):
    return {"name": cfg.name, "fields": cfg.fields.to_dict(), "domain": cfg.domain.to_dict(),
            "n_seeds": int(len(cfg.seeds)), "eps": list(cfg.eps), "T": cfg.T,
            "n_output": cfg.n_output, "mode": cfg.mode, "integrator": cfg.integrator.to_dict(),
            "convention": cfg.convention, "variant": cfg.variant,
            "theta_variant": cfg.theta_variant,
            "eulerian": None if not cfg.eulerian.enabled else {
                "grid": cfg.eulerian.grid.to_dict(),
                "time_fractions": list(cfg.eulerian.time_fractions), "tol": cfg.eulerian.tol}}


def _environment(workers):
    import numba

    return {"workers": workers, "python": platform.python_version(),
            "numpy": np.__version__, "numba": numba.__version__,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z")}


# ---------------------------------------------------------------------------
# emission


def _fmt(v):
    return f"{v:.12e}" if isinstance(v, float) else str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if not math.isfinite(v):
            return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
        return float(f"{v:.12e}")
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _csv(path, header, rows):
    lines = [",".join(header)] + [",".join(_fmt(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")


def emit_report(report: SweepReport, out_dir, formats=("csv", "json", "markdown")):
    """Write the report; returns the list of files written.

    CSV and JSON are byte-stable for identical inputs; wall-clock data goes
    to a separate ``runtime.json``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        rows = []
        for k, e in enumerate(report.eps):
            for name, c in report.claims.items():
                rows.append([name, float(e), float(c["errors"][k]) if c["errors"] else math.nan,
                             c["selected"] or ""])
        _csv(out / "claims.csv", ["claim", "epsilon", "error", "selected"], rows)
        adj_rows = []
        for name, cands in report.adjudication.items():
            if name.endswith("_verdict"):
                continue
            for cand, info in cands.items():
                for e, v in zip(report.eps, info["errors"]):
                    adj_rows.append([name, cand, float(e), float(v)])
        _csv(out / "adjudication.csv", ["claim", "candidate", "epsilon", "error"], adj_rows)
        b_rows = [[float(b["epsilon"]), b["check"], b["measured"], b["limit"], b["margin"],
                   str(b["passed"]).lower()] for row in report.per_eps for b in row["bounds"]]
        _csv(out / "bounds.csv", ["epsilon", "check", "measured", "limit", "margin", "passed"],
             b_rows)
        written += [out / "claims.csv", out / "adjudication.csv", out / "bounds.csv"]
    if "json" in formats:
        (out / "report.json").write_text(
            json.dumps(_jsonable(report.to_dict()), indent=2, sort_keys=True) + "\n")
        written.append(out / "report.json")
    if "markdown" in formats:
        (out / "summary.md").write_text(render_markdown(_jsonable(report.to_dict())))
        written.append(out / "summary.md")
    if report.runtime:
        (out / "runtime.json").write_text(
            json.dumps(_jsonable(report.runtime), indent=2, sort_keys=True) + "\n")
        written.append(out / "runtime.json")
    return written


def _num(v, spec=".3e"):
    if v is None:
        return "-"
    if isinstance(v, str):
        return v
    return format(v, spec)


def _window(w):
    return "ratio < 2x" if w is None else f"[{w[0]}, {w[1]}]"


def render_markdown(d: dict) -> str:
    """Markdown summary from a report dictionary (as stored in report.json)."""
    lines = [f"# Sweep report: {d['name']}", ""]
    lines.append(f"**Overall: {'PASS' if d['passed'] else 'FAIL'}**")
    if d.get("flags"):
        lines.append("")
        lines.append("Flags: " + ", ".join(d["flags"]))
    if not d.get("eps"):
        lines += ["", "No data: the sweep has no epsilon values.", ""]
        return "\n".join(lines)
    h = d["hypotheses"]
    lines += ["", "## Field norms on the sampled domain", "",
              "| b_min | b_sup | sup grad b | sup u0 | sup grad u0 | t_star |",
              "|---|---|---|---|---|---|",
              f"| {_num(h['b_min'])} | {_num(h['b_sup'])} | {_num(h['grad_b_sup'])} | "
              f"{_num(h['u0_sup'])} | {_num(h['grad_u0_sup'])} | {_num(h['t_star'])} |", ""]
    lines.append(f"T = {_num(d['config']['T'])}, epsilon = "
                 + ", ".join(_num(e, "g") for e in d["eps"]))
    lines += ["", "## Convergence claims", "",
              "| claim | selected | slope | window | C_T | status |", "|---|---|---|---|---|---|"]
    names = [n for n in CLAIMS if n in d["claims"]]
    for name in names:
        c = d["claims"][name]
        fit = c.get("fit") or {}
        if "exact regime" in c["flags"]:
            status = "PASS (exact regime)"
        else:
            status = ("PASS" if c["passed"] else "FAIL") + (
                f" ({', '.join(c['flags'])})" if c["flags"] else "")
        lines.append(f"| {name} | {c['selected'] or '-'} | {_num(fit.get('slope'), '.3f')} | "
                     f"{_window(c['window'])} | {_num(fit.get('constant'))} | "
                     f"{status} |")
    if "confinement" in d["claims"] and "ratios" in d["claims"]["confinement"]:
        lines += ["", "max |X - x| / eps per epsilon: "
                  + ", ".join(_num(r, ".4f") for r in d["claims"]["confinement"]["ratios"])]
    for name in ("lagrangian_density_verdict", "eulerian_density_verdict"):
        if name not in d["adjudication"]:
            continue
        lines += ["", f"## Density adjudication ({name.split('_')[0]})", "",
                  "| convention | theta | variant | slope | error at smallest eps | converges |",
                  "|---|---|---|---|---|---|"]
        for conv, slot in d["adjudication"][name].items():
            groups = slot.items() if all(k.startswith("theta=") for k in slot) else [("-", slot)]
            for theta, variants in groups:
                for variant, info in variants.items():
                    lines.append(f"| {conv} | {theta} | {variant} | {_num(info['slope'], '.3f')} "
                                 f"| {_num(info['floor'])} | {'yes' if info['converges'] else 'no'} |")
    if "eulerian_velocity" in d["adjudication"]:
        lines += ["", "## Eulerian phase adjudication", "", "| theta | slope | error at smallest eps |",
                  "|---|---|---|"]
        for cand, info in d["adjudication"]["eulerian_velocity"].items():
            fit = info["fit"] or {}
            lines.append(f"| {cand} | {_num(fit.get('slope'), '.3f')} | {_num(info['floor'])} |")
    lines += ["", "## A priori bounds", "", "| check | worst margin | status |", "|---|---|---|"]
    worst = {}
    for row in d["per_eps"]:
        for b in row["bounds"]:
            w = worst.get(b["check"])
            if w is None or b["margin"] < w:
                worst[b["check"]] = b["margin"]
    failed = {b["check"] for row in d["per_eps"] for b in row["bounds"] if not b["passed"]}
    for check, m in worst.items():
        lines.append(f"| {check} | {_num(m)} | {'FAIL' if check in failed else 'PASS'} |")
    lines += ["", "## Per epsilon", "",
              "| epsilon | passed | min J | speed drift | Eulerian nodes converged | failures |",
              "|---|---|---|---|---|---|"]
    for row in d["per_eps"]:
        dg = row["diagnostics"]
        lines.append(f"| {_num(row['epsilon'], 'g')} | {'yes' if row['passed'] else 'no'} | "
                     f"{_num(dg.get('min_jacobian'))} | {_num(dg.get('speed_drift'))} | "
                     f"{_num(dg.get('eulerian_converged_fraction'), '.0%')} | "
                     f"{len(row['failures'])} |")
    lines += ["", f"Empirical eps_T (largest epsilon passing every check): "
              f"{_num(d['eps_T'], 'g') if d['eps_T'] is not None else 'none'}"]
    if d.get("lifespan"):
        lines += ["", "## Lifespan", "", "| epsilon | T | min J | status |", "|---|---|---|---|"]
        for x in d["lifespan"]:
            lines.append(f"| {_num(x['epsilon'], 'g')} | {_num(x.get('T'))} | "
                         f"{_num(x['min_jacobian'])} | {'PASS' if x['passed'] else 'FAIL'} |")
    if d.get("caustic"):
        c = d["caustic"]
        lines += ["", "## Caustic", "",
                  f"epsilon = {_num(c['epsilon'], 'g')}: numeric t = {_num(c['t_numeric'], '.6f')}, "
                  f"predicted t = {_num(c['t_predicted'], '.6f')}, relative difference "
                  f"{_num(c['relative_difference'], '.3%')} "
                  f"({'PASS' if c['passed'] else 'FAIL'})"]
    if d.get("nsp"):
        n = d["nsp"]
        lines += ["", "## Oscillatory integral bound", "",
                  f"{n['cases']} cases, {n['failed']} failed, smallest margin "
                  f"{_num(n['min_margin'])} ({'PASS' if n['passed'] else 'FAIL'})"]
    lines.append("")
    return "\n".join(lines)
