"""Experiment configuration, loaded from TOML or JSON.

Schema (TOML shown; JSON uses the same nesting)::

    name = "sinusoidal"
    eps = [0.1, 0.05, 0.025, 0.0125, 0.00625]   # strictly decreasing
    T = 1.0                  # or T_over_t_star = 0.5
    allow_beyond_t_star = false
    n_output = 101           # output times per trajectory, including t = 0
    mode = "reduced"         # or "full"
    workers = 1
    output_dir = "out/sinusoidal"

    [fields.b]    family = "sinusoidal", b0 = 2.0, a = 0.5, k = [1.0, 0.0]
    [fields.u0]   family = "constant", value = [0.6, 0.8]
    [fields.rho0] family = "constant", rho0 = 1.0

    [domain]      rectangle = [[-3, 3], [-3, 3]], resolution = 121
    [seeds]       rectangle = [[-2, 2], [-2, 2]], resolution = 5   # or points = [[x1, x2], ...]
    [integrator]  method = "rk4", eta = 20, h_max = 0.01, abs_tol = 1e-6
    [density]     convention = "adjudicate", variant = "adjudicate", theta_variant = "adjudicate"
    [eulerian]    enabled = true, rectangle = ..., resolution = 8, time_fractions = [...], tol = 1e-10
    [lifespan]    enabled = true, fraction = 0.9, n_eps = 2, min_jacobian = 0.05
    [caustic]     enabled = false, eps = 1e-3, t_max = 2.0, rel_tol = 0.1, seeds = {...}
    [nsp]         enabled = false, count = 100, seed = 0, eps = [0.1, 0.01, 0.001]
    [checks]      second_order = [1.7, 2.3], first_order = [0.8, 1.2], stability_ratio = 2.0

Every section except ``fields`` is optional.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .asymptotics import RHO_VARIANTS, THETA_VARIANTS
from .characteristics import CONVENTIONS, IntegratorConfig
from .errors import ConfigurationError
from .fields import DomainSample, FieldSpec, check_hypotheses

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULT_EPS = (1e-1, 5e-2, 2.5e-2, 1.25e-2, 6.25e-3)
ADJUDICATE = "adjudicate"


def _choice(value, allowed, what):
    if value != ADJUDICATE and value not in allowed:
        raise ConfigurationError(f"{what} must be one of {(*allowed, ADJUDICATE)}, got {value!r}")
    return value


def _seed_points(data, default):
    if data is None:
        return default.points()
    if "points" in data:
        pts = np.asarray(data["points"], dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) == 0:
            raise ConfigurationError("seeds.points must be a nonempty list of [x1, x2]")
        return pts
    return DomainSample.from_dict(data).points()


@dataclass(frozen=True)
class EulerianConfig:
    enabled: bool = True
    grid: DomainSample | None = None
    time_fractions: tuple = tuple(np.linspace(0.25, 1.0, 7).tolist())
    tol: float = 1e-10


@dataclass(frozen=True)
class LifespanConfig:
    enabled: bool = True
    fraction: float = 0.9
    n_eps: int = 2
    min_jacobian: float = 0.05


@dataclass(frozen=True)
class CausticConfig:
    enabled: bool = False
    eps: float = 1e-3
    t_max: float = 2.0
    rel_tol: float = 0.1
    seeds: np.ndarray | None = None


@dataclass(frozen=True)
class NSPConfig:
    enabled: bool = False
    count: int = 100
    seed: int = 0
    eps: tuple = (1e-1, 1e-2, 1e-3)
    points_per_period: int = 64


@dataclass(frozen=True)
class Checks:
    second_order: tuple = (1.7, 2.3)
    first_order: tuple = (0.8, 1.2)
    stability_ratio: float = 2.0


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    fields: FieldSpec
    domain: DomainSample
    seeds: np.ndarray
    eps: tuple
    T: float
    n_output: int = 101
    mode: str = "reduced"
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    convention: str = ADJUDICATE
    variant: str = ADJUDICATE
    theta_variant: str = ADJUDICATE
    eulerian: EulerianConfig = field(default_factory=EulerianConfig)
    lifespan: LifespanConfig = field(default_factory=LifespanConfig)
    caustic: CausticConfig = field(default_factory=CausticConfig)
    nsp: NSPConfig = field(default_factory=NSPConfig)
    checks: Checks = field(default_factory=Checks)
    workers: int = 1
    output_dir: str = "out"
    allow_beyond_t_star: bool = False
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def output_times(self):
        return np.linspace(0.0, self.T, self.n_output)

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        data = dict(data)
        if "fields" not in data:
            raise ConfigurationError("config needs a [fields] section")
        spec = FieldSpec.from_dict(data["fields"]).validate()
        domain = DomainSample.from_dict(data.get("domain", {"rectangle": [[-3, 3], [-3, 3]],
                                                            "resolution": 121}))
        eps = tuple(float(e) for e in data.get("eps", DEFAULT_EPS))
        if not eps or any(e <= 0 for e in eps) or any(a <= b for a, b in zip(eps, eps[1:])):
            raise ConfigurationError(f"eps must be positive and strictly decreasing, got {eps}")
        hyp = check_hypotheses(spec, domain)
        if "T" in data and "T_over_t_star" in data:
            raise ConfigurationError("give either T or T_over_t_star, not both")
        if "T_over_t_star" in data:
            if not math.isfinite(hyp.t_star):
                raise ConfigurationError("T_over_t_star needs a finite t_star; give T instead")
            T = float(data["T_over_t_star"]) * hyp.t_star
        else:
            T = float(data.get("T", 1.0))
        allow = bool(data.get("allow_beyond_t_star", False))
        if not T > 0:
            raise ConfigurationError("T must be positive")
        if T >= hyp.t_star and not allow:
            raise ConfigurationError(
                f"T={T:g} is not below t_star={hyp.t_star:g}; set allow_beyond_t_star to override")
        default_seeds = DomainSample(domain.rectangle, 5)
        seeds = _seed_points(data.get("seeds"), default_seeds)
        if not domain.contains(seeds).all():
            raise ConfigurationError("all seeds must lie inside the domain rectangle")
        n_output = int(data.get("n_output", 101))
        if n_output < 2:
            raise ConfigurationError("n_output must be at least 2")
        mode = data.get("mode", "reduced")
        if mode not in ("reduced", "full"):
            raise ConfigurationError(f"mode must be 'reduced' or 'full', got {mode!r}")
        dens = data.get("density", {})
        eu = dict(data.get("eulerian", {}))
        eu_grid = None
        if eu.get("enabled", True):
            eu_grid = DomainSample.from_dict({
                "rectangle": eu.get("rectangle", [list(r) for r in default_seeds.rectangle]),
                "resolution": eu.get("resolution", 8)})
        fracs = tuple(float(f) for f in eu.get("time_fractions",
                                                EulerianConfig.time_fractions))
        if any(not 0 < f <= 1 for f in fracs):
            raise ConfigurationError("eulerian.time_fractions must lie in (0, 1]")
        eulerian = EulerianConfig(bool(eu.get("enabled", True)), eu_grid, fracs,
                                  float(eu.get("tol", 1e-10)))
        ls = data.get("lifespan", {})
        lifespan = LifespanConfig(bool(ls.get("enabled", True)), float(ls.get("fraction", 0.9)),
                                  int(ls.get("n_eps", 2)), float(ls.get("min_jacobian", 0.05)))
        ca = data.get("caustic", {})
        caustic = CausticConfig(bool(ca.get("enabled", False)), float(ca.get("eps", 1e-3)),
                                float(ca.get("t_max", 2.0)), float(ca.get("rel_tol", 0.1)),
                                _seed_points(ca.get("seeds"), DomainSample(
                                    ((-0.5, 0.5), (-0.5, 0.5)), 3)))
        ns = data.get("nsp", {})
        nsp = NSPConfig(bool(ns.get("enabled", False)), int(ns.get("count", 100)),
                        int(ns.get("seed", 0)), tuple(float(e) for e in ns.get("eps", NSPConfig.eps)),
                        int(ns.get("points_per_period", 64)))
        ch = data.get("checks", {})
        checks = Checks(tuple(ch.get("second_order", Checks.second_order)),
                        tuple(ch.get("first_order", Checks.first_order)),
                        float(ch.get("stability_ratio", 2.0)))
        workers = int(data.get("workers", 1))
        if workers < 1:
            raise ConfigurationError("workers must be at least 1")
        return cls(
            name=str(data.get("name", "experiment")), fields=spec, domain=domain, seeds=seeds,
            eps=eps, T=T, n_output=n_output, mode=mode,
            integrator=IntegratorConfig.from_dict(data.get("integrator", {})),
            convention=_choice(dens.get("convention", ADJUDICATE), CONVENTIONS, "convention"),
            variant=_choice(dens.get("variant", ADJUDICATE), RHO_VARIANTS, "density variant"),
            theta_variant=_choice(dens.get("theta_variant", ADJUDICATE), THETA_VARIANTS,
                                  "theta variant"),
            eulerian=eulerian, lifespan=lifespan, caustic=caustic, nsp=nsp, checks=checks,
            workers=workers, output_dir=str(data.get("output_dir", "out")),
            allow_beyond_t_star=allow, raw=data)

    def with_overrides(self, **kw) -> ExperimentConfig:
        raw = dict(self.raw)
        raw.update(kw)
        return ExperimentConfig.from_dict(raw)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    if path.suffix.lower() == ".json":
        data = json.loads(text)
    elif path.suffix.lower() == ".toml":
        data = tomllib.loads(text.decode())
    else:
        raise ConfigurationError(f"config must be .toml or .json, got {path.name}")
    return ExperimentConfig.from_dict(data)
