"""Bound-constrained local minimization and the lower-level surface solve."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .devmap import DevObjectiveConfig, objective_and_point_gradient
from .errors import ConfigError, PdsError, SolverError
from .grid import GridSurface

log = logging.getLogger(__name__)

LOWER_LEVEL_HALF_RANGE = 8.0  # m
UPPER_LEVEL_HALF_RANGE = 1.0  # m


@dataclass(frozen=True)
class BoundsSpec:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64).ravel()
        hi = np.asarray(self.upper, dtype=np.float64).ravel()
        if lo.shape != hi.shape:
            raise ConfigError("lower and upper bounds differ in length")
        if np.any(lo > hi):
            raise ConfigError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def around(cls, center, half_range: float) -> "BoundsSpec":
        c = np.asarray(center, dtype=np.float64)
        return cls(c - half_range, c + half_range)

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def clip(self, x) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)


@dataclass(frozen=True)
class NlpSettings:
    gtol: float = 1e-6  # projected-gradient infinity norm
    ftol: float = 1e-10  # relative objective change between iterations
    max_iter: int = 2000
    memory: int = 20  # stored correction pairs
    max_line_search: int = 20

    def __post_init__(self):
        if not (self.gtol > 0 and self.ftol > 0 and self.max_iter > 0 and self.memory > 0
                and self.max_line_search > 0):
            raise ConfigError("NLP settings must all be positive")


@dataclass
class NlpResult:
    x: np.ndarray
    f: float
    status: str  # "gradient", "stagnation" or "max_iter"
    n_iter: int
    n_eval: int
    history: list = field(default_factory=list)  # (iter, f, projected_grad_norm)

    @property
    def converged(self) -> bool:
        return self.status in ("gradient", "stagnation")


def projected_gradient(x, g, bounds: BoundsSpec) -> np.ndarray:
    pg = np.array(g, dtype=np.float64)
    pg[(x <= bounds.lower) & (pg > 0)] = 0.0
    pg[(x >= bounds.upper) & (pg < 0)] = 0.0
    return pg


def minimize_bounded(f, g, x0, bounds: BoundsSpec, settings: NlpSettings | None = None) -> NlpResult:
    """Minimize a smooth function on a box with limited-memory BFGS-B.

    ``f`` and ``g`` are the objective and gradient callbacks. Any exception they
    raise aborts the solve with :class:`SolverError` carrying the iterate.
    """
    settings = settings or NlpSettings()
    x0 = np.asarray(x0, dtype=np.float64).ravel()
    if x0.shape != bounds.lower.shape:
        raise ConfigError(f"x0 has {x0.size} entries but bounds have {bounds.lower.size}")
    if not bounds.contains(x0):
        raise ConfigError("initial point lies outside the bounds")

    cache = {}
    n_eval = [0]

    def fg(x):
        x = bounds.clip(x)
        key = x.tobytes()
        if key not in cache:
            try:
                fx = float(f(x))
                gx = np.asarray(g(x), dtype=np.float64)
            except PdsError as exc:
                raise SolverError(f"objective evaluation failed: {exc}", iterate=x.copy()) from exc
            if not np.isfinite(fx) or not np.all(np.isfinite(gx)):
                raise SolverError("objective or gradient is not finite", iterate=x.copy())
            cache.clear()
            cache[key] = (fx, gx)
            n_eval[0] += 1
        return cache[key]

    f0, g0 = fg(x0)
    pg0 = float(np.max(np.abs(projected_gradient(x0, g0, bounds)), initial=0.0))
    history = [(0, f0, pg0)]
    if pg0 <= settings.gtol or x0.size == 0:
        return NlpResult(x0.copy(), f0, "gradient", 0, n_eval[0], history)

    def callback(xk):
        fk, gk = fg(xk)
        history.append((len(history), fk, float(np.max(np.abs(projected_gradient(xk, gk, bounds))))))

    res = minimize(
        fg,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=np.column_stack([bounds.lower, bounds.upper]),
        callback=callback,
        options=dict(
            maxiter=settings.max_iter,
            maxfun=20 * settings.max_iter,
            ftol=settings.ftol,
            gtol=settings.gtol,
            maxcor=settings.memory,
            maxls=settings.max_line_search,
        ),
    )
    x = bounds.clip(res.x)
    fx, gx = fg(x)
    pg = float(np.max(np.abs(projected_gradient(x, gx, bounds))))
    if fx > f0:  # never hand back something worse than the start
        x, fx, pg = x0.copy(), f0, pg0
    if pg <= settings.gtol:
        status = "gradient"
    elif len(history) - 1 >= settings.max_iter:
        status = "max_iter"
    else:
        status = "stagnation"
    if len(history) == 1 or history[-1][1] != fx:
        history.append((len(history), fx, pg))
    return NlpResult(x, fx, status, len(history) - 1, n_eval[0], history)


# --------------------------------------------------------------------------
# lower level


@dataclass
class LowerLevelResult:
    grid: GridSurface
    nlp: NlpResult

    @property
    def F(self) -> float:
        return self.nlp.f


def lower_level_bounds(grid: GridSurface, half_range: float = LOWER_LEVEL_HALF_RANGE) -> BoundsSpec:
    return BoundsSpec.around(grid.z[grid.lower_level_variables()], half_range)


def solve_lower_level(grid: GridSurface, config: DevObjectiveConfig | None = None,
                      bounds: BoundsSpec | None = None, settings: NlpSettings | None = None,
                      start_z=None) -> LowerLevelResult:
    """Minimize the developability objective over the free z-coordinates.

    ``bounds`` default to +-8 m around the z of ``grid``. ``start_z`` optionally
    warm-starts the free variables (clipped into the bounds); fixed and design
    heights are always taken from ``grid``.
    """
    config = config or DevObjectiveConfig()
    var = grid.lower_level_variables()
    if bounds is None:
        bounds = lower_level_bounds(grid)
    z_base = np.array(grid.z)

    def f_and_g(x):
        z = z_base.copy()
        z[var] = x
        F, G = objective_and_point_gradient(grid.with_z(z), config)
        return F, G[var, 2]

    last = {}

    def f(x):
        last["x"] = x.copy()
        last["fg"] = f_and_g(x)
        return last["fg"][0]

    def g(x):
        if "x" not in last or not np.array_equal(last["x"], x):
            f(x)
        return last["fg"][1]

    x0 = z_base[var] if start_z is None else bounds.clip(np.asarray(start_z, dtype=np.float64))
    res = minimize_bounded(f, g, x0, bounds, settings)
    log.debug("lower level: F %.6g -> %.6g in %d iterations (%s)", res.history[0][1], res.f, res.n_iter, res.status)
    return LowerLevelResult(grid.with_z_at(var, res.x), res)


def write_history_csv(result: NlpResult, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "F", "projected_grad_norm"])
        for it, F, pg in result.history:
            w.writerow([it, repr(F), repr(pg)])
