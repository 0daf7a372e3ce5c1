"""Closed-form asymptotic predictions for the characteristics and the limits
of u and rho.

All predictors take points ``x`` with shape ``(..., 2)`` and a time ``t``
that broadcasts against ``x[..., 0]``. Notation: ``g = grad log b(x)``,
``A = u0.g`` and ``B = u0^perp.g``.

The Eulerian phase theta solves

    theta = b t / eps - t A sin(theta) + s t B cos(theta)

where ``s = -1`` for the ``derived`` variant (obtained by substituting the
O(eps) inverse characteristic into the Lagrangian phase) and ``s = +1`` for
the ``paper`` variant as printed. The harness decides numerically which one
matches the Eulerian fields; both are kept selectable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, PhaseSolveError
from .fields import FieldSpec, drift_velocity, perp

THETA_VARIANTS = ("derived", "paper")
RHO_VARIANTS = ("theorem_form", "prop_form")
FRAMES = ("lagrangian", "eulerian")
NEWTON_SWITCH = 0.9


def _local(spec: FieldSpec, x):
    x = np.asarray(x, dtype=float)
    b, gb, _ = spec.b.evaluate(x)
    u, _ = spec.u0.evaluate(x)
    up = perp(u)
    g = gb / b[..., None]
    A = np.sum(u * g, axis=-1)
    B = np.sum(up * g, axis=-1)
    return b, g, u, up, A, B


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def phase_tilde(spec: FieldSpec, x, t, epsilon):
    """b(x) t / eps - t (u0^perp . grad) log b(x)."""
    b, _, _, _, _, B = _local(spec, x)
    return _out(b * t / epsilon - t * B)


def approx_X(spec: FieldSpec, x, t, epsilon, phi):
    """Second-order trajectory expansion with the guiding-centre drift."""
    x = np.asarray(x, dtype=float)
    b, _, u, up, _, _ = _local(spec, x)
    arg = np.asarray(phi, dtype=float) / epsilon
    s, c = np.sin(arg)[..., None], np.cos(arg)[..., None]
    t = np.asarray(t, dtype=float)[..., None]
    v = drift_velocity(spec, x)
    eb = (epsilon / b)[..., None]
    return x + eb * u * s - eb * up * (1.0 - c) - epsilon * t * v


def approx_DX_J(spec: FieldSpec, x, t, epsilon, phi):
    """First-order expansions of DX and of its determinant.

    Returns ``(DX_pred, J_pred)`` with ``J_pred = 1 + tr(DX_pred - I)``.
    """
    _, g, u, up, A, B = _local(spec, x)
    arg = np.asarray(phi, dtype=float) / epsilon
    c, s = np.cos(arg), np.sin(arg)
    t = np.asarray(t, dtype=float)
    outer_u = u[..., :, None] * g[..., None, :]
    outer_up = up[..., :, None] * g[..., None, :]
    tc = (t * c)[..., None, None]
    ts = (t * s)[..., None, None]
    DX = np.eye(2) + tc * outer_u - ts * outer_up
    J = 1.0 + t * A * c - t * B * s
    return DX, _out(J)


# ---------------------------------------------------------------------------
# implicit phase


@dataclass(frozen=True)
class PhaseSolution:
    theta: float
    iterations: int
    residual: float
    contraction_factor: float
    method: str


def _theta_sign(variant):
    if variant == "derived":
        return -1.0
    if variant == "paper":
        return 1.0
    raise ConfigurationError(f"theta variant must be one of {THETA_VARIANTS}, got {variant!r}")


def theta_rhs(spec: FieldSpec, x, t, epsilon, theta, variant="derived"):
    """Right-hand side of the implicit phase equation evaluated at ``theta``."""
    b, _, _, _, A, B = _local(spec, x)
    sg = _theta_sign(variant)
    return _out(b * t / epsilon - t * A * np.sin(theta) + sg * t * B * np.cos(theta))


def _solve_delta(c, tA, tB, sg, tol, max_iter, delta0=0.0):
    """Solve delta = -tA sin(c+delta) + sg tB cos(c+delta) elementwise.

    Working with delta = theta - c keeps the residual at the size of the
    correction rather than of b t / eps.
    """
    c, tA, tB = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (c, tA, tB)))
    L = np.abs(tA) + np.abs(tB)
    R = np.hypot(tA, tB)

    def f(d):
        th = c + d
        return -tA * np.sin(th) + sg * tB * np.cos(th)

    def fprime(d):
        th = c + d
        return -tA * np.cos(th) - sg * tB * np.sin(th)

    delta = np.zeros(c.shape) + delta0
    iters = np.zeros(c.shape, dtype=int)
    res = np.abs(delta - f(delta))
    done = res <= tol
    iters[...] = 1
    fixed = L < NEWTON_SWITCH
    # plain iteration
    active = fixed & ~done
    for _ in range(max_iter):
        if not active.any():
            break
        delta = np.where(active, f(delta), delta)
        iters += active
        res = np.where(active, np.abs(delta - f(delta)), res)
        active &= res > tol
    # safeguarded Newton on the bracket [-R, R]
    lo, hi = -R.copy(), R.copy()
    active = ~fixed & ~done
    for _ in range(max_iter):
        if not active.any():
            break
        g = delta - f(delta)
        lo = np.where(active & (g < 0), delta, lo)
        hi = np.where(active & (g > 0), delta, hi)
        step = g / (1.0 - fprime(delta))
        trial = delta - step
        bad = ~np.isfinite(trial) | (trial <= lo) | (trial >= hi)
        trial = np.where(bad, 0.5 * (lo + hi), trial)
        delta = np.where(active, trial, delta)
        iters += active
        res = np.where(active, np.abs(delta - f(delta)), res)
        active &= res > tol
    return delta, iters, res, L


def solve_theta(spec: FieldSpec, x, t, epsilon, tol=1e-12, variant="derived",
                max_iter=2000, theta0=None) -> PhaseSolution:
    """Solve the implicit Eulerian phase at a single point.

    Starts from ``theta0``, by default b(x) t / eps. Plain fixed-point
    iteration while the contraction factor L = t(|A| + |B|) is below 0.9,
    otherwise safeguarded Newton on a bracket that always contains the root.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    sg = _theta_sign(variant)
    b, _, _, _, A, B = _local(spec, np.asarray(x, dtype=float).reshape(2))
    c = float(b) * t / epsilon
    d0 = 0.0 if theta0 is None else float(theta0) - c
    delta, iters, res, L = _solve_delta(c, t * A, t * B, sg, tol, max_iter, d0)
    L = float(L)
    if not res <= tol:
        raise PhaseSolveError(
            f"phase iteration did not reach tol={tol:g} (residual {float(res):.3g}, L={L:.3g})",
            contraction_factor=L)
    return PhaseSolution(c + float(delta), int(iters), float(res), L,
                         "fixed_point" if L < NEWTON_SWITCH else "newton")


def solve_theta_many(spec: FieldSpec, x, t, epsilon, tol=1e-12, variant="derived",
                     max_iter=2000):
    """Vectorised ``solve_theta`` over points ``x`` of shape ``(..., 2)``.

    Returns ``(theta, iterations, residual, L)`` arrays; raises on the first
    point that fails to converge.
    """
    sg = _theta_sign(variant)
    b, _, _, _, A, B = _local(spec, x)
    t = np.asarray(t, dtype=float)
    c = b * t / epsilon
    delta, iters, res, L = _solve_delta(c, t * A, t * B, sg, tol, max_iter)
    if not np.all(res <= tol):
        i = np.unravel_index(int(np.argmax(res)), res.shape)
        raise PhaseSolveError(
            f"phase iteration failed at point index {i} (residual {res[i]:.3g}, L={L[i]:.3g})",
            contraction_factor=float(L[i]))
    return c + delta, iters, res, L


# ---------------------------------------------------------------------------
# velocity and density


def _phase(spec, x, t, epsilon, frame, theta_variant):
    if frame == "lagrangian":
        return np.asarray(phase_tilde(spec, x, t, epsilon))
    if frame == "eulerian":
        return solve_theta_many(spec, x, t, epsilon, variant=theta_variant)[0]
    raise ConfigurationError(f"frame must be one of {FRAMES}, got {frame!r}")


def predict_u(spec: FieldSpec, x, t, epsilon, frame="lagrangian", theta_variant="derived"):
    """u0 cos(phase) - u0^perp sin(phase); the phase is phi-tilde along
    trajectories (lagrangian) or theta at fixed points (eulerian)."""
    u, _ = spec.u0.evaluate(np.asarray(x, dtype=float))
    ph = _phase(spec, x, t, epsilon, frame, theta_variant)
    return u * np.cos(ph)[..., None] - perp(u) * np.sin(ph)[..., None]


def rho_factor(A, B, t, phase, variant):
    if variant == "theorem_form":
        return 1.0 + t * A * np.cos(phase) - t * B * np.sin(phase)
    if variant == "prop_form":
        return 1.0 + t * A * np.sin(phase) - t * B * np.cos(phase)
    raise ConfigurationError(f"density variant must be one of {RHO_VARIANTS}, got {variant!r}")


def predict_rho(spec: FieldSpec, x, t, epsilon, frame="lagrangian", variant="theorem_form",
                theta_variant="derived"):
    """rho0(x) times the first-order oscillating factor of the chosen variant."""
    _, _, _, _, A, B = _local(spec, x)
    rho0 = spec.rho0.value(np.asarray(x, dtype=float))
    ph = _phase(spec, x, t, epsilon, frame, theta_variant)
    return _out(rho0 * rho_factor(A, B, np.asarray(t, dtype=float), ph, variant))


@dataclass(frozen=True)
class AsymptoticPrediction:
    X_pred: np.ndarray
    DX_pred: np.ndarray
    J_pred: float
    u_pred: np.ndarray
    rho_pred: float
    order: str
    phase_used: str


def predict(spec: FieldSpec, x, t, epsilon, phi=None, rho_variant="theorem_form",
            theta_variant="derived") -> AsymptoticPrediction:
    """All Lagrangian predictions at one seed.

    ``phi`` is the numerically integrated phase; without it the explicit
    phase eps * phi-tilde is used for X, DX and J. u and rho always use
    phi-tilde. ``order`` is the declared remainder order of X_pred.
    """
    x = np.asarray(x, dtype=float).reshape(2)
    tilde = phase_tilde(spec, x, t, epsilon)
    phase_used = "numeric" if phi is not None else "tilde"
    phi_x = phi if phi is not None else epsilon * tilde
    X = approx_X(spec, x, t, epsilon, phi_x)
    DX, J = approx_DX_J(spec, x, t, epsilon, phi_x)
    u = predict_u(spec, x, t, epsilon, "lagrangian")
    rho = predict_rho(spec, x, t, epsilon, "lagrangian", rho_variant)
    # with phi-tilde in place of phi the X remainder degrades to O(eps)
    order = "eps^2" if phi is not None else "eps"
    return AsymptoticPrediction(X, DX, float(J), u, float(rho), order, phase_used)


def lifespan_prediction(spec: FieldSpec, x):
    """1 / (|u0(x)| |grad log b(x)|): first time the Jacobian expansion can vanish."""
    _, g, u, _, _, _ = _local(spec, x)
    den = np.linalg.norm(u, axis=-1) * np.linalg.norm(g, axis=-1)
    with np.errstate(divide="ignore"):
        out = np.where(den > 0, 1.0 / np.where(den > 0, den, 1.0), math.inf)
    return _out(out)
