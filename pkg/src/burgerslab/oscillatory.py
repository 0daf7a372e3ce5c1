"""Oscillatory integrals ``int_0^t F(s) trig(phi(s)/eps) ds`` with ``phi' = beta``.

Quadrature is composite Gauss-Lobatto on panels that share endpoints. The
phase is the running integral of beta computed panel by panel with the
spectral integration matrix, so it is exact for polynomial beta of degree
``nodes - 1`` per panel and spectrally accurate otherwise.

The integration-by-parts (non-stationary phase) bound is

    |int F cos(phi/eps)| <= eps (|F(t)| / b_min + t sup|d/ds (F/beta)|)
    |int F sin(phi/eps)| <= eps ((|F(t)| + |F(0)|) / b_min + t sup|d/ds (F/beta)|)

with Euclidean norms for vector-valued F.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as L

from .errors import ConfigurationError, ResolutionError

KINDS = ("cos", "sin")
NSP_TOL = 1e-12


@lru_cache(maxsize=None)
def lobatto_rule(m):
    """Nodes, weights, cumulative-integration and differentiation matrices on [-1, 1]."""
    if m < 3:
        raise ValueError("need at least 3 Lobatto nodes")
    n = m - 1
    cn = np.zeros(n + 1)
    cn[n] = 1.0
    inner = np.sort(L.legroots(L.legder(cn)).real)
    x = np.concatenate([[-1.0], inner, [1.0]])
    w = 2.0 / (n * (n + 1) * L.legval(x, cn) ** 2)
    V = L.legvander(x, n)
    Vinv = np.linalg.inv(V)
    eye = np.eye(n + 1)
    Vint = np.column_stack([L.legval(x, L.legint(eye[k], lbnd=-1.0)) for k in range(n + 1)])
    Vder = np.column_stack([L.legval(x, L.legder(eye[k])) for k in range(n + 1)])
    for arr in (x, w):
        arr.setflags(write=False)
    Q = Vint @ Vinv
    D = Vder @ Vinv
    Q.setflags(write=False)
    D.setflags(write=False)
    return x, w, Q, D


def panel_grid(t, n_panels, m):
    """Times of ``n_panels`` equal Lobatto panels on [0, t] (shared endpoints)."""
    x, _, _, _ = lobatto_rule(m)
    edges = np.linspace(0.0, t, n_panels + 1)
    half = 0.5 * np.diff(edges)
    pts = edges[:-1, None] + half[:, None] * (x[None, :] + 1.0)
    out = np.empty(n_panels * (m - 1) + 1)
    out[:-1] = pts[:, :-1].ravel()
    out[-1] = t
    return out


def _panels(values, m):
    # (N, ...) on shared-endpoint panels -> (n_panels, m, ...)
    n = (values.shape[0] - 1) // (m - 1)
    idx = np.arange(n)[:, None] * (m - 1) + np.arange(m)[None, :]
    return values[idx]


@dataclass(frozen=True)
class OscillandSample:
    """Samples of F and beta on a Lobatto panel grid over [0, t]."""

    times: np.ndarray
    F_values: np.ndarray          # (N,) or (N, d)
    beta_values: np.ndarray       # (N,)
    dFoverBeta_sup: float
    b_min: float
    nodes_per_panel: int = 9

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        F = np.asarray(self.F_values, dtype=float)
        beta = np.asarray(self.beta_values, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "F_values", F)
        object.__setattr__(self, "beta_values", beta)
        m = self.nodes_per_panel
        N = times.size
        if N < m or (N - 1) % (m - 1):
            raise ConfigurationError(f"{N} samples do not form panels of {m} Lobatto nodes")
        if F.shape[0] != N or beta.shape != (N,):
            raise ConfigurationError("F_values and beta_values must match times")
        if not self.b_min > 0:
            raise ConfigurationError("b_min must be positive")
        if beta.min() < self.b_min * (1 - 1e-12):
            raise ConfigurationError(
                f"beta drops to {beta.min():.6g} below b_min={self.b_min:.6g}")
        if not (np.isfinite(self.dFoverBeta_sup) and self.dFoverBeta_sup >= 0):
            raise ConfigurationError("dFoverBeta_sup must be finite and nonnegative")
        expected = panel_grid(times[-1], (N - 1) // (m - 1), m)
        if times[0] != 0.0 or not np.allclose(times, expected, rtol=0, atol=1e-12 * max(1.0, times[-1])):
            raise ConfigurationError("times are not an equal-panel Lobatto grid starting at 0")

    @property
    def t(self):
        return float(self.times[-1])

    @classmethod
    def from_functions(cls, F, beta, t, epsilon, dF=None, dbeta=None, b_min=None,
                       points_per_period=64, nodes_per_panel=9) -> OscillandSample:
        """Sample callables on a grid with about ``points_per_period`` nodes per
        oscillation period 2*pi*eps/max(beta).

        ``dF``/``dbeta`` give the exact derivatives used for sup|d/ds(F/beta)|;
        without them the derivative is taken spectrally on each panel.
        """
        if not (t > 0 and epsilon > 0):
            raise ValueError("t and epsilon must be positive")
        m = nodes_per_panel
        probe = beta(np.linspace(0.0, t, 257))
        b_sup = float(np.max(probe))
        periods = t * b_sup / (2 * math.pi * epsilon)
        n_panels = max(1, int(math.ceil(periods * points_per_period / (m - 1))))
        times = panel_grid(t, n_panels, m)
        Fv = np.asarray(F(times), dtype=float)
        bv = np.asarray(beta(times), dtype=float)
        if dF is not None and dbeta is not None:
            dFv = np.asarray(dF(times), dtype=float)
            dbv = np.asarray(dbeta(times), dtype=float)
            bb = bv if Fv.ndim == 1 else bv[:, None]
            dq = (dFv * bb - Fv * (dbv if Fv.ndim == 1 else dbv[:, None])) / bb ** 2
        else:
            dq = spectral_derivative(times, Fv / (bv if Fv.ndim == 1 else bv[:, None]), m)
        sup = float(np.max(_norm(dq)))
        return cls(times, Fv, bv, sup, float(bv.min()) if b_min is None else float(b_min), m)


def spectral_derivative(times, values, m=9):
    """Panelwise spectral derivative on a Lobatto panel grid (endpoints averaged)."""
    _, _, _, D = lobatto_rule(m)
    P = _panels(values, m)
    h = (times[m - 1] - times[0]) / 2.0
    dP = np.einsum("ij,pj...->pi...", D, P) / h
    out = np.empty_like(values)
    n = P.shape[0]
    for k in range(n):
        out[k * (m - 1):(k + 1) * (m - 1) + 1] = dP[k]
    # shared nodes: average the two one-sided panel values
    shared = np.arange(1, n) * (m - 1)
    out[shared] = 0.5 * (dP[:-1, -1] + dP[1:, 0])
    return out


def _norm(v):
    v = np.asarray(v, dtype=float)
    return np.abs(v) if v.ndim <= 1 else np.linalg.norm(v, axis=-1)


def running_phase(sample: OscillandSample):
    """phi(s) = int_0^s beta on every sample node."""
    m = sample.nodes_per_panel
    _, _, Q, _ = lobatto_rule(m)
    h = (sample.times[m - 1] - sample.times[0]) / 2.0
    P = _panels(sample.beta_values, m)
    local = (P @ Q.T) * h                      # (n_panels, m), each from its panel start
    starts = np.concatenate([[0.0], np.cumsum(local[:, -1])[:-1]])
    phi = local + starts[:, None]
    out = np.empty(sample.times.size)
    out[:-1] = phi[:, :-1].ravel()
    out[-1] = phi[-1, -1]
    return out


def points_per_period(sample: OscillandSample, epsilon):
    period = 2 * math.pi * epsilon / float(sample.beta_values.max())
    return period * (sample.times.size - 1) / sample.t


def osc_integral(sample: OscillandSample, epsilon, kind="cos", cumulative=False, eta=20.0):
    """Composite Lobatto quadrature of int_0^t F(s) trig(phi(s)/eps) ds.

    With ``cumulative=True`` the running integral at every panel edge is
    returned instead of the final value.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    ppp = points_per_period(sample, epsilon)
    if ppp < eta:
        raise ResolutionError(
            f"grid has {ppp:.3g} points per oscillation period, need at least {eta:g}")
    m = sample.nodes_per_panel
    _, w, _, _ = lobatto_rule(m)
    h = (sample.times[m - 1] - sample.times[0]) / 2.0
    arg = running_phase(sample) / epsilon
    trig = np.cos(arg) if kind == "cos" else np.sin(arg)
    F = sample.F_values
    G = F * (trig if F.ndim == 1 else trig[:, None])
    per_panel = np.einsum("j,pj...->p...", w, _panels(G, m)) * h
    if cumulative:
        zero = np.zeros((1,) + per_panel.shape[1:])
        return np.concatenate([zero, np.cumsum(per_panel, axis=0)])
    total = per_panel.sum(axis=0)
    return float(total) if np.ndim(total) == 0 else total


def nsp_bound(sample: OscillandSample, epsilon, kind="cos"):
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    F = sample.F_values
    end = float(_norm(F[-1]))
    boundary = end if kind == "cos" else end + float(_norm(F[0]))
    return epsilon * (boundary / sample.b_min + sample.t * sample.dFoverBeta_sup)


@dataclass(frozen=True)
class NSPCheck:
    epsilon: float
    integral_cos: float
    integral_sin: float
    bound_cos: float
    bound_sin: float

    @property
    def margin_cos(self):
        return self.bound_cos - self.integral_cos

    @property
    def margin_sin(self):
        return self.bound_sin - self.integral_sin

    @property
    def passed(self):
        return self.margin_cos >= -NSP_TOL and self.margin_sin >= -NSP_TOL


def verify_nsp(sample: OscillandSample, epsilon) -> NSPCheck:
    """Compare both oscillatory integrals with their integration-by-parts bounds."""
    ic = float(_norm(osc_integral(sample, epsilon, "cos")))
    is_ = float(_norm(osc_integral(sample, epsilon, "sin")))
    return NSPCheck(float(epsilon), ic, is_, nsp_bound(sample, epsilon, "cos"),
                    nsp_bound(sample, epsilon, "sin"))


# ---------------------------------------------------------------------------
# randomized trig-polynomial suite


@dataclass(frozen=True)
class TrigPoly:
    """c0 + sum_k a_k cos(k w s) + b_k sin(k w s)."""

    c0: float
    a: tuple
    b: tuple
    w: float = 1.0

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = np.full_like(s, self.c0)
        for k, (ak, bk) in enumerate(zip(self.a, self.b), start=1):
            out += ak * np.cos(k * self.w * s) + bk * np.sin(k * self.w * s)
        return out

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        for k, (ak, bk) in enumerate(zip(self.a, self.b), start=1):
            kw = k * self.w
            out += kw * (bk * np.cos(kw * s) - ak * np.sin(kw * s))
        return out

    @property
    def amplitude(self):
        return float(np.sum(np.abs(self.a)) + np.sum(np.abs(self.b)))


def random_oscillands(rng, count, degree=3, beta_range=(1.5, 2.5), t_range=(0.5, 2.0)):
    """Random (F, beta, t) triples; beta stays inside ``beta_range``."""
    lo, hi = beta_range
    out = []
    for _ in range(count):
        F = TrigPoly(float(rng.normal()), tuple(rng.normal(size=degree)),
                     tuple(rng.normal(size=degree)), float(rng.uniform(0.5, 3.0)))
        raw = TrigPoly(0.0, tuple(rng.normal(size=degree)), tuple(rng.normal(size=degree)),
                       float(rng.uniform(0.5, 3.0)))
        # scale the oscillating part so beta never leaves [lo, hi]
        scale = 0.5 * (hi - lo) / max(raw.amplitude, 1e-12)
        beta = TrigPoly(0.5 * (lo + hi), tuple(scale * np.array(raw.a)),
                        tuple(scale * np.array(raw.b)), raw.w)
        out.append((F, beta, float(rng.uniform(*t_range))))
    return out


def run_nsp_suite(seed=0, count=100, eps_list=(1e-1, 1e-2, 1e-3), points_per_period=64):
    """Check the bound on ``count`` random samples for each epsilon.

    Returns a list of ``(case, NSPCheck)`` in deterministic order.
    """
    rng = np.random.default_rng(seed)
    cases = random_oscillands(rng, count)
    results = []
    for i, (F, beta, t) in enumerate(cases):
        for eps in eps_list:
            sample = OscillandSample.from_functions(
                F, beta, t, eps, dF=F.derivative, dbeta=beta.derivative, b_min=1.5,
                points_per_period=points_per_period)
            results.append((i, verify_nsp(sample, eps)))
    return results
