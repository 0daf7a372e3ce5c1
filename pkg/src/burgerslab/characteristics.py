"""Characteristics of the penalized Burgers system.

Two equivalent formulations are integrated:

* ``reduced``: the particle velocity is the rotated initial velocity,
  ``u = u0 cos(phi/eps) - u0^perp sin(phi/eps)`` with ``dphi/dt = b(X)``,
  together with the exact x0-derivatives (DX, Dphi) of that system;
* ``full``: ``dX/dt = U, dU/dt = -(b(X)/eps) U^perp`` and its variational
  equations.

Both carry ``log(rho/rho0)`` integrated directly from the continuity
equation, ``d/dt log rho = -div u = -tr(DX^{-1} dDX/dt)``, as an oracle for
the density along trajectories.

All integration is batched over seeds: states are ``(ncomp, nseeds)``
arrays and every operation is elementwise across seeds, so a seed's result
does not depend on which other seeds share its batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import CausticCrossedError, ConfigurationError, DomainExitError
from .fields import DomainSample, FieldSpec, perp

_TABLEAUS = {
    "rk4": (
        ((), (0.5,), (0.0, 0.5), (0.0, 0.0, 1.0)),
        (1 / 6, 1 / 3, 1 / 3, 1 / 6),
    ),
    "rk38": (
        ((), (1 / 3,), (-1 / 3, 1.0), (1.0, -1.0, 1.0)),
        (1 / 8, 3 / 8, 3 / 8, 1 / 8),
    ),
}


def _tableau_arrays(method):
    a, w = _TABLEAUS[method]
    A = np.zeros((len(w), len(w)))
    for i, row in enumerate(a):
        A[i, :len(row)] = row
    return A, np.asarray(w, dtype=float)


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk4"
    eta: float = 20.0
    h_max: float = 1e-2
    abs_tol: float = 1e-6

    def __post_init__(self):
        if self.method not in _TABLEAUS:
            raise ConfigurationError(
                f"unknown method {self.method!r}; choose from {sorted(_TABLEAUS)}")
        if not (self.eta > 0 and self.h_max > 0 and self.abs_tol > 0):
            raise ConfigurationError("eta, h_max and abs_tol must be positive")

    def step_size(self, epsilon, b_sup):
        return min(self.h_max, epsilon / (self.eta * b_sup))

    @classmethod
    def from_dict(cls, data) -> IntegratorConfig:
        return cls(**{k: (v if k == "method" else float(v)) for k, v in data.items()})

    def to_dict(self):
        return dict(self.__dict__)


@dataclass(frozen=True)
class ParticleState:
    x0: np.ndarray
    t: float
    X: np.ndarray
    phi: float
    DX: np.ndarray
    Dphi: np.ndarray
    u: np.ndarray


# ---------------------------------------------------------------------------
# right-hand sides

# reduced layout: X(2) phi DX(4, row major) Dphi(2) logrho
_R_NCOMP = 10
# full layout: X(2) U(2) phi DX(4) DU(4) Dphi(2) logrho
_F_NCOMP = 16


class _SeedData:
    """Per-seed constants evaluated once at the seed points."""

    def __init__(self, spec: FieldSpec, x0):
        self.spec = spec
        self.x0 = np.asarray(x0, dtype=float)
        u, du = spec.u0.evaluate(self.x0)
        self.u = u.T.copy()                      # (2, n)
        self.up = perp(u).T.copy()
        self.du = du.transpose(1, 2, 0).copy()   # (2, 2, n)
        self.dup = np.stack([self.du[1], -self.du[0]])
        # row-major (4, n) blocks for the DX equation
        self.du4 = self.du.reshape(4, -1)
        self.dup4 = self.dup.reshape(4, -1)
        self.b_grad = spec.b.value_grad


def _logdet_rate(d, e):
    # tr(D^{-1} E) for row-major 2x2 blocks d, e of shape (4, n)
    return (d[3] * e[0] - d[1] * e[2] - d[2] * e[1] + d[0] * e[3]) / (d[0] * d[3] - d[1] * d[2])


def rhs_reduced_batch(s, seeds: _SeedData, epsilon):
    arg = s[2] * (1.0 / epsilon)
    c, sn = np.cos(arg), np.sin(arg)
    b, gb = seeds.b_grad(s[0:2])
    out = np.empty_like(s)
    out[0:2] = seeds.u * c - seeds.up * sn
    out[2] = b
    w = (seeds.u * sn + seeds.up * c) * (1.0 / epsilon)
    # dDX_ij = du_ij c - dup_ij s - w_i Dphi_j
    e = out[3:7]
    np.multiply(seeds.du4, c, out=e)
    e -= seeds.dup4 * sn
    e[0:2] -= w[0] * s[7:9]
    e[2:4] -= w[1] * s[7:9]
    d = s[3:7]
    # Dphi' = DX^T grad b
    out[7:9] = d[0:2] * gb[0] + d[2:4] * gb[1]
    out[9] = -_logdet_rate(d, e)
    return out


def rhs_full_batch(s, seeds: _SeedData, epsilon):
    X = s[0:2]
    U1, U2 = s[2], s[3]
    d11, d12, d21, d22 = s[5], s[6], s[7], s[8]
    v11, v12, v21, v22 = s[9], s[10], s[11], s[12]
    b, gb = seeds.b_grad(X)
    k = b / epsilon
    out = np.empty_like(s)
    out[0], out[1] = U1, U2
    # dU/dt = -(b/eps) (U2, -U1)
    out[2] = -k * U2
    out[3] = k * U1
    out[4] = b
    out[5], out[6], out[7], out[8] = v11, v12, v21, v22
    # q_j = (DX^T grad b)_j
    q1 = d11 * gb[0] + d21 * gb[1]
    q2 = d12 * gb[0] + d22 * gb[1]
    inv = 1.0 / epsilon
    # dDU = -(1/eps) [ (U^perp) (x) q + b * perp(DU) ]
    out[9] = -inv * (U2 * q1 + b * v21)
    out[10] = -inv * (U2 * q2 + b * v22)
    out[11] = -inv * (-U1 * q1 - b * v11)
    out[12] = -inv * (-U1 * q2 - b * v12)
    out[13], out[14] = q1, q2
    out[15] = -_logdet_rate(s[5:9], s[9:13])
    return out


def rhs_reduced(state: ParticleState, spec: FieldSpec, epsilon):
    """Time derivative of (X, phi, DX, Dphi) for a single particle."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    seeds = _SeedData(spec, np.asarray(state.x0, dtype=float)[None, :])
    s = np.zeros((_R_NCOMP, 1))
    s[0:2, 0] = state.X
    s[2, 0] = state.phi
    s[3:7, 0] = np.asarray(state.DX, dtype=float).ravel()
    s[7:9, 0] = state.Dphi
    d = rhs_reduced_batch(s, seeds, epsilon)[:, 0]
    return {"X": d[0:2], "phi": float(d[2]), "DX": d[3:7].reshape(2, 2), "Dphi": d[7:9]}


def _initial_state(seeds: _SeedData, mode):
    n = seeds.x0.shape[0]
    if mode == "reduced":
        s = np.zeros((_R_NCOMP, n))
        s[0:2] = seeds.x0.T
        s[3] = s[6] = 1.0
    elif mode == "full":
        s = np.zeros((_F_NCOMP, n))
        s[0:2] = seeds.x0.T
        s[2:4] = seeds.u
        s[5] = s[8] = 1.0
        s[9:13] = seeds.du.reshape(4, n)
    else:
        raise ConfigurationError(f"mode must be 'reduced' or 'full', got {mode!r}")
    return s


def _rk_step(rhs, s, h, tableau, seeds, epsilon):
    """Reference (numpy) explicit Runge-Kutta step; the kernels use the same tableau."""
    a, w = tableau
    ks = []
    for row in a:
        stage = s
        for aij, kj in zip(row, ks):
            if aij:
                stage = stage + (h * aij) * kj
        ks.append(rhs(stage, seeds, epsilon))
    out = s
    for wi, ki in zip(w, ks):
        out = out + (h * wi) * ki
    return out


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    """One seed's time-sampled characteristic."""

    x0: np.ndarray
    epsilon: float
    mode: str
    times: np.ndarray
    X: np.ndarray        # (m, 2)
    phi: np.ndarray      # (m,)
    DX: np.ndarray       # (m, 2, 2)
    Dphi: np.ndarray     # (m, 2)
    u: np.ndarray        # (m, 2)
    rho_ratio: np.ndarray  # (m,) rho/rho0 from the continuity equation
    diagnostics: dict = field(default_factory=dict)

    @property
    def states(self) -> list[ParticleState]:
        return [ParticleState(self.x0, float(t), self.X[i], float(self.phi[i]),
                              self.DX[i], self.Dphi[i], self.u[i])
                for i, t in enumerate(self.times)]

    @property
    def jacobian(self):
        return jacobian_det(self.DX)

    def to_csv(self, path_or_buf):
        """Columns t, X1, X2, phi, DX11, DX12, DX21, DX22, J, u1, u2."""
        cols = np.column_stack([
            self.times, self.X, self.phi, self.DX.reshape(-1, 4), self.jacobian, self.u])
        header = "t,X1,X2,phi,DX11,DX12,DX21,DX22,J,u1,u2"
        lines = [header] + [",".join(f"{v:.12e}" for v in row) for row in cols]
        text = "\n".join(lines) + "\n"
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w", newline="") as fh:
                fh.write(text)


@dataclass
class Ensemble:
    """Batched trajectories; arrays carry a (time, seed) leading shape."""

    seeds: np.ndarray    # (n, 2)
    epsilon: float
    mode: str
    times: np.ndarray
    X: np.ndarray        # (m, n, 2)
    phi: np.ndarray      # (m, n)
    DX: np.ndarray       # (m, n, 2, 2)
    Dphi: np.ndarray     # (m, n, 2)
    u: np.ndarray        # (m, n, 2)
    rho_ratio: np.ndarray  # (m, n)
    steps: int = 0

    def __len__(self):
        return self.seeds.shape[0]

    @property
    def jacobian(self):
        return jacobian_det(self.DX)

    def speed_drift(self, spec: FieldSpec):
        u0, _ = spec.u0.evaluate(self.seeds)
        return np.abs(np.linalg.norm(self.u, axis=-1) - np.linalg.norm(u0, axis=-1))

    def trajectory(self, i, spec: FieldSpec | None = None) -> Trajectory:
        diag = {"min_jacobian": float(self.jacobian[:, i].min())}
        if spec is not None:
            diag["max_speed_drift"] = float(self.speed_drift(spec)[:, i].max())
        return Trajectory(self.seeds[i].copy(), self.epsilon, self.mode, self.times.copy(),
                          self.X[:, i].copy(), self.phi[:, i].copy(), self.DX[:, i].copy(),
                          self.Dphi[:, i].copy(), self.u[:, i].copy(),
                          self.rho_ratio[:, i].copy(), diag)


def _output_times(t_end, times):
    if times is None:
        times = np.linspace(0.0, t_end, 101) if t_end > 0 else np.zeros(1)
    times = np.asarray(times, dtype=float).reshape(-1)
    if times.size == 0 or times[0] != 0.0:
        times = np.concatenate([[0.0], times])
    if np.any(np.diff(times) <= 0):
        raise ValueError("output times must be strictly increasing and start at 0")
    return times


def _check_domain(s, domain, t):
    if domain is None:
        return
    inside = domain.contains(s[0:2].T)
    if not inside.all():
        i = int(np.flatnonzero(~inside)[0])
        raise DomainExitError(
            f"seed {i} left the domain {domain.rectangle} before t={t:.6g}",
            exit_time=t, seed_index=i)


def _kernel_inputs(data: _SeedData, spec: FieldSpec):
    code, params = spec.b.kernel_params()
    return (np.ascontiguousarray(data.u), np.ascontiguousarray(data.up),
            np.ascontiguousarray(data.du4), np.ascontiguousarray(data.dup4), code, params)


def integrate_ensemble(seeds, spec: FieldSpec, epsilon, t_end, cfg: IntegratorConfig,
                       mode="reduced", times=None, domain: DomainSample | None = None
                       ) -> Ensemble:
    """Integrate all seeds and sample them at the output ``times``.

    Between consecutive output times the interval is split into equal steps
    no longer than ``cfg.step_size(epsilon, sup b)``. Raises
    ``DomainExitError`` if a seed leaves ``domain``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    seeds_arr = np.atleast_2d(np.asarray(seeds, dtype=float))
    times = _output_times(t_end, times)
    if times[-1] > t_end * (1 + 1e-12):
        raise ValueError("output times exceed t_end")
    data = _SeedData(spec, seeds_arr)
    s0 = _initial_state(data, mode)
    _check_domain(s0, domain, 0.0)
    h_target = cfg.step_size(epsilon, spec.b.sup())
    A, W = _tableau_arrays(cfg.method)
    if domain is not None:
        (lo1, hi1), (lo2, hi2) = domain.rectangle
        rect = np.array([lo1, hi1, lo2, hi2], dtype=float)
    else:
        rect = np.zeros(4)
    out = np.empty((times.size,) + s0.shape)
    exits = np.empty(s0.shape[1])
    nsteps = _kernels.march(mode == "full", s0, *_kernel_inputs(data, spec), 1.0 / epsilon,
                            times, h_target, A, W, rect, domain is not None, out, exits)
    if domain is not None and not np.all(np.isnan(exits)):
        i = int(np.nanargmin(exits))
        raise DomainExitError(
            f"seed {i} at {tuple(seeds_arr[i])} left the domain {domain.rectangle} "
            f"at t={exits[i]:.6g}", exit_time=float(exits[i]), seed_index=i)
    return _ensemble_from_states(seeds_arr, epsilon, mode, times, out, data, nsteps)


def _ensemble_from_states(seeds, epsilon, mode, times, out, data, nsteps):
    m, _, n = out.shape
    # (m, ncomp, n) -> per-quantity arrays with (m, n, ...) shape
    if mode == "reduced":
        X = out[:, 0:2].transpose(0, 2, 1)
        phi = out[:, 2]
        DX = out[:, 3:7].transpose(0, 2, 1).reshape(m, n, 2, 2)
        Dphi = out[:, 7:9].transpose(0, 2, 1)
        arg = phi / epsilon
        c, s = np.cos(arg), np.sin(arg)
        u = (data.u.T[None] * c[..., None] - data.up.T[None] * s[..., None])
        lr = out[:, 9]
    else:
        X = out[:, 0:2].transpose(0, 2, 1)
        u = out[:, 2:4].transpose(0, 2, 1)
        phi = out[:, 4]
        DX = out[:, 5:9].transpose(0, 2, 1).reshape(m, n, 2, 2)
        Dphi = out[:, 13:15].transpose(0, 2, 1)
        lr = out[:, 15]
    return Ensemble(seeds, float(epsilon), mode, times, np.ascontiguousarray(X),
                    np.ascontiguousarray(phi), np.ascontiguousarray(DX),
                    np.ascontiguousarray(Dphi), np.ascontiguousarray(u), np.exp(lr), nsteps)


def integrate(x0, spec: FieldSpec, epsilon, t_end, cfg: IntegratorConfig | None = None,
              mode="reduced", times=None, domain: DomainSample | None = None) -> Trajectory:
    """Integrate the characteristic from a single seed point."""
    cfg = cfg or IntegratorConfig()
    ens = integrate_ensemble(np.asarray(x0, dtype=float)[None, :], spec, epsilon, t_end, cfg,
                             mode=mode, times=times, domain=domain)
    return ens.trajectory(0, spec)


def jacobian_det(DX):
    """Signed determinant of DX (works on stacks of 2x2 matrices)."""
    if isinstance(DX, ParticleState):
        DX = DX.DX
    DX = np.asarray(DX, dtype=float)
    det = DX[..., 0, 0] * DX[..., 1, 1] - DX[..., 0, 1] * DX[..., 1, 0]
    return float(det) if det.ndim == 0 else det


CONVENTIONS = ("conservative", "paper_literal")


def rho_from_jacobian(rho0, J, convention):
    if convention == "conservative":
        return rho0 / J
    if convention == "paper_literal":
        return rho0 * J
    raise ConfigurationError(f"convention must be one of {CONVENTIONS}, got {convention!r}")


def rho_along(traj: Trajectory, spec: FieldSpec, convention="conservative"):
    """Density along a trajectory from the Jacobian.

    ``conservative`` is rho0/J (mass conservation); ``paper_literal`` is
    rho0*J. The continuity-equation integration stored on the trajectory
    (``rho_direct``) is the independent reference.
    """
    J = traj.jacobian
    if np.any(J <= 0):
        k = int(np.argmax(J <= 0))
        raise CausticCrossedError(f"J <= 0 at t={traj.times[k]:.6g}")
    rho0 = float(spec.rho0.value(traj.x0))
    return rho_from_jacobian(rho0, J, convention)


def rho_direct(traj: Trajectory, spec: FieldSpec):
    return float(spec.rho0.value(traj.x0)) * traj.rho_ratio


# ---------------------------------------------------------------------------
# caustics


@dataclass(frozen=True)
class CausticResult:
    t_eps: float | None
    argmin_seed: tuple[float, float]
    min_jacobian: float
    steps: int


def _det_rows(s, mode):
    o = 3 if mode == "reduced" else 5
    return s[o] * s[o + 3] - s[o + 1] * s[o + 2]


def detect_caustic(seeds, spec: FieldSpec, epsilon, cfg: IntegratorConfig, t_max,
                   mode="reduced", refine_tol=None) -> CausticResult:
    """First time the signed Jacobian of any seed trajectory reaches zero.

    The crossing step is refined by bisecting on the length of a single
    Runge-Kutta step taken from the state at the start of that step.
    ``t_eps`` is None when det(DX) stays positive up to ``t_max``; then
    ``argmin_seed`` is the seed reaching the smallest Jacobian.
    """
    seeds_arr = np.atleast_2d(np.asarray(seeds, dtype=float))
    data = _SeedData(spec, seeds_arr)
    s0 = _initial_state(data, mode)
    h_target = cfg.step_size(epsilon, spec.b.sup())
    if refine_tol is None:
        refine_tol = h_target * 1e-6
    A, W = _tableau_arrays(cfg.method)
    n = seeds_arr.shape[0]
    t_cross = np.empty(n)
    jmin = np.empty(n)
    steps = _kernels.caustic_scan(mode == "full", s0, *_kernel_inputs(data, spec),
                                  1.0 / epsilon, float(t_max), h_target, A, W,
                                  float(refine_tol), t_cross, jmin)
    if np.isfinite(t_cross).any():
        i = int(np.argmin(t_cross))
        return CausticResult(float(t_cross[i]), tuple(float(v) for v in seeds_arr[i]),
                             float(jmin.min()), steps)
    i = int(np.argmin(jmin))
    return CausticResult(None, tuple(float(v) for v in seeds_arr[i]), float(jmin[i]), steps)
