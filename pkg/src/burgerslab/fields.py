"""Analytic field families for the magnetic intensity b, initial velocity u0
and initial density rho0.

Every family evaluates on arrays of points with shape ``(..., 2)`` and returns
closed-form derivatives, so no differentiation error leaks into the
asymptotic comparisons downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, ClassVar

import numpy as np

from .errors import ConfigurationError, HypothesisViolation


def perp(v):
    """Rotate by -90 degrees: (v1, v2) -> (v2, -v1)."""
    v = np.asarray(v, dtype=float)
    return np.stack([v[..., 1], -v[..., 0]], axis=-1)


def _points(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise ValueError(f"points must have a trailing axis of length 2, got {x.shape}")
    return x


def _vec(value, name):
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape != (2,):
        raise ConfigurationError(f"{name} must be a 2-vector, got {value!r}")
    return arr


# ---------------------------------------------------------------------------
# magnetic intensity b


@dataclass(frozen=True)
class ScalarFamily:
    """Base for scalar families. Subclasses implement ``_eval``."""

    kind: ClassVar[str] = ""

    def evaluate(self, x):
        """Return ``(value, gradient, hessian)`` at points ``x``."""
        return self._eval(_points(x))

    def value(self, x):
        return self._eval(_points(x))[0]

    def value_grad(self, x):
        """``(value, gradient)`` without the Hessian; ``x`` is ``(2, n)``."""
        val, grad, _ = self._eval(np.asarray(x).T)
        return val, grad.T

    def validate(self):
        pass

    def sup(self):
        """Analytic supremum over the family's admissible region."""
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"family": self.kind}
        for name, val in self.__dict__.items():
            out[name] = val.tolist() if isinstance(val, np.ndarray) else val
        return out


@dataclass(frozen=True)
class ConstantScalar(ScalarFamily):
    kind: ClassVar[str] = "constant"
    value0: float = 1.0

    def _eval(self, x):
        shape = x.shape[:-1]
        return (np.full(shape, float(self.value0)),
                np.zeros(shape + (2,)),
                np.zeros(shape + (2, 2)))

    def value_grad(self, x):
        n = x.shape[1]
        return np.full(n, float(self.value0)), np.zeros((2, n))

    def validate(self):
        if not self.value0 > 0:
            raise ConfigurationError(f"constant b requires b0 > 0, got {self.value0}")

    def sup(self):
        return abs(float(self.value0))

    def kernel_params(self):
        return 0, np.array([self.value0], dtype=float)


@dataclass(frozen=True)
class SinusoidalScalar(ScalarFamily):
    """value0 + a*sin(k.x)"""

    kind: ClassVar[str] = "sinusoidal"
    value0: float = 2.0
    a: float = 0.5
    k: tuple[float, float] = (1.0, 0.0)

    def _eval(self, x):
        k = np.asarray(self.k, dtype=float)
        arg = x @ k
        s, c = np.sin(arg), np.cos(arg)
        val = self.value0 + self.a * s
        grad = (self.a * c)[..., None] * k
        hess = (-self.a * s)[..., None, None] * np.outer(k, k)
        return val, grad, hess

    def value_grad(self, x):
        k1, k2 = float(self.k[0]), float(self.k[1])
        arg = k1 * x[0] + k2 * x[1]
        ac = self.a * np.cos(arg)
        return self.value0 + self.a * np.sin(arg), np.stack([ac * k1, ac * k2])

    def validate(self):
        if not self.value0 - abs(self.a) > 0:
            raise ConfigurationError(
                f"sinusoidal b requires b0 - |a| > 0, got b0={self.value0}, a={self.a}")

    def sup(self):
        return abs(self.value0) + abs(self.a)

    def kernel_params(self):
        return 1, np.array([self.value0, self.a, self.k[0], self.k[1]], dtype=float)


@dataclass(frozen=True)
class GaussianScalar(ScalarFamily):
    """value0 + a*exp(-|x - center|^2 / sigma^2)"""

    kind: ClassVar[str] = "gaussian"
    value0: float = 2.0
    a: float = 0.5
    center: tuple[float, float] = (0.0, 0.0)
    sigma: float = 1.0

    def _eval(self, x):
        d = x - np.asarray(self.center, dtype=float)
        s2 = float(self.sigma) ** 2
        g = np.exp(-np.sum(d * d, axis=-1) / s2)
        val = self.value0 + self.a * g
        grad = (-2.0 * self.a * g / s2)[..., None] * d
        eye = np.eye(2)
        hess = (self.a * g)[..., None, None] * (
            4.0 / s2**2 * d[..., :, None] * d[..., None, :] - 2.0 / s2 * eye)
        return val, grad, hess

    def validate(self):
        if not self.sigma > 0:
            raise ConfigurationError(f"gaussian family requires sigma > 0, got {self.sigma}")
        if not self.value0 + min(self.a, 0.0) > 0:
            raise ConfigurationError(
                f"gaussian b requires b0 + min(a, 0) > 0, got b0={self.value0}, a={self.a}")

    def sup(self):
        return self.value0 + max(self.a, 0.0)

    def kernel_params(self):
        c1, c2 = self.center
        return 2, np.array([self.value0, self.a, c1, c2, self.sigma], dtype=float)


@dataclass(frozen=True)
class ExponentialScalar(ScalarFamily):
    """value0 * exp(lam * x1), only meaningful inside ``window``.

    ``window`` is ``((x1_min, x1_max), (x2_min, x2_max))``; the gradient is
    unbounded on the plane, so the hypothesis check refuses domains that
    leave the window.
    """

    kind: ClassVar[str] = "exponential"
    value0: float = 2.0
    lam: float = 1.0
    window: tuple[tuple[float, float], tuple[float, float]] = ((-1.0, 1.0), (-1.0, 1.0))

    def _eval(self, x):
        e = self.value0 * np.exp(self.lam * x[..., 0])
        zeros = np.zeros_like(e)
        grad = np.stack([self.lam * e, zeros], axis=-1)
        hess = np.zeros(e.shape + (2, 2))
        hess[..., 0, 0] = self.lam**2 * e
        return e, grad, hess

    def value_grad(self, x):
        e = self.value0 * np.exp(self.lam * x[0])
        return e, np.stack([self.lam * e, np.zeros_like(e)])

    def validate(self):
        if not self.value0 > 0:
            raise ConfigurationError(f"exponential b requires b0 > 0, got {self.value0}")
        (lo1, hi1), (lo2, hi2) = self.window
        if not (lo1 < hi1 and lo2 < hi2):
            raise ConfigurationError(f"degenerate exponential window {self.window}")

    def sup(self):
        (lo1, hi1), _ = self.window
        edge = hi1 if self.lam >= 0 else lo1
        return self.value0 * math.exp(self.lam * edge)

    def kernel_params(self):
        return 3, np.array([self.value0, self.lam], dtype=float)


# ---------------------------------------------------------------------------
# initial velocity u0


@dataclass(frozen=True)
class VectorFamily:
    kind: ClassVar[str] = ""

    def evaluate(self, x):
        """Return ``(value, jacobian)``; ``jacobian[..., i, j] = d u_i / d x_j``."""
        return self._eval(_points(x))

    def validate(self):
        pass

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"family": self.kind}
        for name, val in self.__dict__.items():
            out[name] = val.tolist() if isinstance(val, np.ndarray) else val
        return out


@dataclass(frozen=True)
class ConstantVector(VectorFamily):
    kind: ClassVar[str] = "constant"
    value: tuple[float, float] = (1.0, 0.0)

    def _eval(self, x):
        shape = x.shape[:-1]
        return (np.broadcast_to(np.asarray(self.value, dtype=float), shape + (2,)).copy(),
                np.zeros(shape + (2, 2)))


@dataclass(frozen=True)
class RotationVector(VectorFamily):
    """omega * (x - center)^perp"""

    kind: ClassVar[str] = "rotation"
    omega: float = 1.0
    center: tuple[float, float] = (0.0, 0.0)

    def _eval(self, x):
        d = x - np.asarray(self.center, dtype=float)
        val = self.omega * perp(d)
        jac = np.zeros(x.shape[:-1] + (2, 2))
        jac[..., 0, 1] = self.omega
        jac[..., 1, 0] = -self.omega
        return val, jac


@dataclass(frozen=True)
class ModulatedVector(VectorFamily):
    """value * (offset + exp(-|x - center|^2 / sigma^2))

    A constant direction whose magnitude is modulated by a Gaussian bump; with
    ``offset = 0`` the field is effectively compactly supported.
    """

    kind: ClassVar[str] = "modulated"
    value: tuple[float, float] = (1.0, 0.0)
    center: tuple[float, float] = (0.0, 0.0)
    sigma: float = 1.0
    offset: float = 0.0

    def _eval(self, x):
        v = np.asarray(self.value, dtype=float)
        d = x - np.asarray(self.center, dtype=float)
        s2 = float(self.sigma) ** 2
        g = np.exp(-np.sum(d * d, axis=-1) / s2)
        val = (self.offset + g)[..., None] * v
        dg = (-2.0 * g / s2)[..., None] * d
        jac = v[:, None] * dg[..., None, :]
        return val, jac

    def validate(self):
        if not self.sigma > 0:
            raise ConfigurationError(f"modulated u0 requires sigma > 0, got {self.sigma}")


_B_FAMILIES = {cls.kind: cls for cls in
               (ConstantScalar, SinusoidalScalar, GaussianScalar, ExponentialScalar)}
_RHO_FAMILIES = {cls.kind: cls for cls in (ConstantScalar, SinusoidalScalar, GaussianScalar)}
_U_FAMILIES = {cls.kind: cls for cls in (ConstantVector, RotationVector, ModulatedVector)}

# config key -> dataclass attribute, where they differ
_ALIASES = {"b0": "value0", "rho0": "value0", "c": "value0", "lambda": "lam"}


def _family_from_dict(table, spec: dict, what: str):
    spec = dict(spec)
    kind = spec.pop("family", None)
    if kind not in table:
        raise ConfigurationError(f"unknown {what} family {kind!r}; choose from {sorted(table)}")
    cls = table[kind]
    kwargs = {}
    for key, val in spec.items():
        name = _ALIASES.get(key, key)
        if name not in cls.__dataclass_fields__:
            raise ConfigurationError(f"unknown parameter {key!r} for {what} family {kind!r}")
        if isinstance(val, list):
            val = tuple(tuple(v) if isinstance(v, list) else float(v) for v in val)
        elif isinstance(val, (int, float)):
            val = float(val)
        kwargs[name] = val
    if cls is ConstantVector and "value" in kwargs:
        _vec(kwargs["value"], "u0 value")
    return cls(**kwargs)


@dataclass(frozen=True)
class FieldSpec:
    b: ScalarFamily = field(default_factory=lambda: ConstantScalar(2.0))
    u0: VectorFamily = field(default_factory=ConstantVector)
    rho0: ScalarFamily = field(default_factory=lambda: ConstantScalar(1.0))

    def validate(self):
        self.b.validate()
        self.u0.validate()
        if isinstance(self.rho0, SinusoidalScalar) and self.rho0.value0 < abs(self.rho0.a):
            raise ConfigurationError("sinusoidal rho0 must satisfy rho0 >= |a|")
        if isinstance(self.rho0, GaussianScalar) and (
                self.rho0.value0 < 0 or self.rho0.value0 + self.rho0.a < 0):
            raise ConfigurationError("gaussian rho0 must be nonnegative")
        if isinstance(self.rho0, ConstantScalar) and self.rho0.value0 < 0:
            raise ConfigurationError("constant rho0 must be nonnegative")
        return self

    @classmethod
    def from_dict(cls, data: dict) -> FieldSpec:
        b = _family_from_dict(_B_FAMILIES, data.get("b", {"family": "constant", "b0": 2.0}), "b")
        u0 = _family_from_dict(_U_FAMILIES, data.get("u0", {"family": "constant"}), "u0")
        rho0 = _family_from_dict(
            _RHO_FAMILIES, data.get("rho0", {"family": "constant", "rho0": 1.0}), "rho0")
        return cls(b=b, u0=u0, rho0=rho0)

    def to_dict(self) -> dict:
        return {"b": self.b.to_dict(), "u0": self.u0.to_dict(), "rho0": self.rho0.to_dict()}


@dataclass(frozen=True)
class FieldValues:
    b: np.ndarray
    grad_b: np.ndarray
    hess_b: np.ndarray
    u0: np.ndarray
    jac_u0: np.ndarray
    rho0: np.ndarray
    grad_rho0: np.ndarray


def eval_fields(spec: FieldSpec, x) -> FieldValues:
    """Evaluate all fields and their analytic derivatives at ``x``."""
    spec.validate()
    x = _points(x)
    if not np.all(np.isfinite(x)):
        raise ValueError("evaluation points must be finite")
    b, gb, hb = spec.b.evaluate(x)
    u, du = spec.u0.evaluate(x)
    r, gr, _ = spec.rho0.evaluate(x)
    return FieldValues(b, gb, hb, u, du, r, gr)


def drift_velocity(spec: FieldSpec, x):
    """Guiding-centre drift v = [(u0^perp.grad b) u0 - (u0.grad b) u0^perp] / (2 b^2)."""
    b, gb, _ = spec.b.evaluate(x)
    u, _ = spec.u0.evaluate(x)
    up = perp(u)
    a = np.sum(up * gb, axis=-1)
    c = np.sum(u * gb, axis=-1)
    return (a[..., None] * u - c[..., None] * up) / (2.0 * b * b)[..., None]


# ---------------------------------------------------------------------------
# hypotheses


@dataclass(frozen=True)
class DomainSample:
    rectangle: tuple[tuple[float, float], tuple[float, float]]
    resolution: int

    def __post_init__(self):
        (lo1, hi1), (lo2, hi2) = self.rectangle
        if not (lo1 < hi1 and lo2 < hi2):
            raise ConfigurationError(f"degenerate rectangle {self.rectangle}")
        if int(self.resolution) != self.resolution or self.resolution < 2:
            raise ConfigurationError(f"resolution must be an integer >= 2, got {self.resolution}")

    @classmethod
    def from_dict(cls, data) -> DomainSample:
        rect = tuple(tuple(float(v) for v in row) for row in data["rectangle"])
        return cls(rect, int(data.get("resolution", 2)))

    def points(self):
        """Grid nodes, shape ``(resolution**2, 2)``, x1 varying slowest."""
        (lo1, hi1), (lo2, hi2) = self.rectangle
        g1 = np.linspace(lo1, hi1, self.resolution)
        g2 = np.linspace(lo2, hi2, self.resolution)
        p1, p2 = np.meshgrid(g1, g2, indexing="ij")
        return np.stack([p1.ravel(), p2.ravel()], axis=-1)

    def contains(self, x, margin=0.0):
        x = np.asarray(x, dtype=float)
        (lo1, hi1), (lo2, hi2) = self.rectangle
        return ((x[..., 0] >= lo1 + margin) & (x[..., 0] <= hi1 - margin)
                & (x[..., 1] >= lo2 + margin) & (x[..., 1] <= hi2 - margin))

    def to_dict(self):
        return {"rectangle": [list(r) for r in self.rectangle], "resolution": self.resolution}


@dataclass(frozen=True)
class HypothesisReport:
    b_min: float
    b_sup: float
    grad_b_sup: float
    hess_b_sup: float
    u0_sup: float
    grad_u0_sup: float
    t_star: float
    grad_log_b_sup: float

    def to_dict(self):
        return dict(self.__dict__)


def _opnorm(m):
    # spectral norm of a stack of 2x2 matrices
    return np.linalg.norm(m, ord=2, axis=(-2, -1))


def check_hypotheses(spec: FieldSpec, domain: DomainSample) -> HypothesisReport:
    """Estimate the sup/inf norms used by the bounds on a sampled rectangle.

    Raises ``HypothesisViolation`` naming the offending grid point when b is
    not bounded below by a positive constant there.
    """
    pts = domain.points()
    b, gb, hb = spec.b.evaluate(pts)
    i = int(np.argmin(b))
    if not b[i] > 0:
        raise HypothesisViolation(
            f"inf b = {b[i]:.6g} <= 0 at grid point ({pts[i, 0]:.6g}, {pts[i, 1]:.6g})",
            point=tuple(pts[i]))
    if isinstance(spec.b, ExponentialScalar):
        (w1, w2) = spec.b.window
        (r1, r2) = domain.rectangle
        if r1[0] < w1[0] or r1[1] > w1[1] or r2[0] < w2[0] or r2[1] > w2[1]:
            raise HypothesisViolation(
                f"domain {domain.rectangle} leaves the exponential window {spec.b.window}")
    spec.validate()
    u, du = spec.u0.evaluate(pts)
    gnorm = np.linalg.norm(gb, axis=-1)
    grad_b_sup = float(gnorm.max())
    u0_sup = float(np.linalg.norm(u, axis=-1).max())
    denom = u0_sup * grad_b_sup
    return HypothesisReport(
        b_min=float(b.min()),
        b_sup=float(b.max()),
        grad_b_sup=grad_b_sup,
        hess_b_sup=float(_opnorm(hb).max()),
        u0_sup=u0_sup,
        grad_u0_sup=float(_opnorm(du).max()),
        t_star=1.0 / denom if denom > 0 else math.inf,
        grad_log_b_sup=float((gnorm / b).max()),
    )
