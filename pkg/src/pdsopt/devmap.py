"""Discrete local Gauss map and the tanh-filtered developability objective.

At every interior grid point the eight auxiliary triangles give eight unit
face normals. Their renormalized mean is the vertex normal. On the unit
sphere, consecutive face normals and the vertex normal span eight spherical
triangles; their unsigned areas ``a_ij`` vanish when all normals lie on one
great circle, i.e. when the one-ring is planar or singly curved. The
per-point error is ``A_i = sum_j a_ij**2`` and the objective is

    F = sum_{i in I} tanh(c * (sqrt(A_i) + eps))

so that large errors saturate and internal creases can form where they are
cheapest instead of being smeared over the surface.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _devkernels
from .errors import ConfigError, DegenerateTriangleError
from .grid import AuxiliaryFan, GridSurface, fan_table, neighbor_fan

SMOOTHING_DELTA = 1e-10


@dataclass(frozen=True)
class DevObjectiveConfig:
    """Filter settings for the developability objective.

    ``evaluation_set`` defaults to every interior point that is not exempt.
    """

    c: float = 100.0
    eps: float = 1e-6
    delta: float = SMOOTHING_DELTA
    evaluation_set: tuple | None = None

    def __post_init__(self):
        if not self.c > 0:
            raise ConfigError(f"filter sharpness c must be positive, got {self.c}")
        if self.eps < 0:
            raise ConfigError(f"offset eps must be non-negative, got {self.eps}")
        if self.delta < 0:
            raise ConfigError("smoothing delta must be non-negative")

    def indices(self, grid: GridSurface) -> np.ndarray:
        if self.evaluation_set is None:
            return grid.evaluation_set()
        idx = np.asarray(self.evaluation_set, dtype=np.int64)
        bad = [int(i) for i in idx if not (0 <= i < grid.n_points and grid.is_interior(i))]
        if bad:
            raise ConfigError(f"evaluation set contains non-interior points {bad}")
        return idx


@dataclass(frozen=True)
class GaussMapReport:
    """Per-interior-point Gauss-map data, ordered like ``fan_table``."""

    centers: np.ndarray  # (P,) flat indices
    face_normals: np.ndarray  # (P, 8, 3)
    vertex_normals: np.ndarray  # (P, 3)
    areas: np.ndarray  # (P, 8)
    A: np.ndarray  # (P,)
    smoothed_root: np.ndarray  # sqrt(A + delta^2) - delta
    filtered_term: np.ndarray  # tanh(c (smoothed_root + eps))
    in_set: np.ndarray  # (P,) bool, membership of the evaluation set
    delta: float

    @property
    def sqrt_A(self) -> np.ndarray:
        return np.sqrt(self.A)

    @property
    def objective(self) -> float:
        return float(self.filtered_term[self.in_set].sum())

    def below_smoothing_floor(self) -> np.ndarray:
        """Centres where sqrt is only differentiable thanks to the smoothing."""
        return self.centers[self.in_set & (self.A <= self.delta**2)]

    def sqrt_A_of(self, indices) -> np.ndarray:
        pos = {int(c): k for k, c in enumerate(self.centers)}
        return self.sqrt_A[[pos[int(i)] for i in indices]]


class _Tables:
    cache: dict = {}

    @classmethod
    def get(cls, nu, nv):
        key = (nu, nv)
        if key not in cls.cache:
            cls.cache[key] = fan_table(nu, nv)
        return cls.cache[key]


def _run(grid: GridSurface, config: DevObjectiveConfig, want_grad: bool, backend=None):
    centers, nbrs = _Tables.get(grid.nu, grid.nv)
    idx = config.indices(grid)
    weight = np.isin(centers, idx).astype(np.float64)
    out = _devkernels.evaluate(
        grid.flat_points, centers, nbrs, weight, config.c, config.eps, config.delta, want_grad, backend
    )
    bad_point, bad_tri = out[7], out[8]
    if bad_point >= 0:
        what = "vertex-normal sum vanishes" if bad_tri == 8 else f"fan triangle {bad_tri} is degenerate"
        raise DegenerateTriangleError(
            f"point {bad_point}: {what}", point=int(bad_point), triangle=int(bad_tri)
        )
    return centers, weight.astype(bool), out


def gauss_map_report(grid: GridSurface, config: DevObjectiveConfig | None = None, backend=None) -> GaussMapReport:
    config = config or DevObjectiveConfig()
    centers, in_set, out = _run(grid, config, False, backend)
    face_n, vert_n, areas, A, s, term = out[:6]
    return GaussMapReport(centers, face_n, vert_n, areas, A, s, term, in_set, config.delta)


def objective(grid: GridSurface, config: DevObjectiveConfig | None = None, backend=None) -> float:
    return gauss_map_report(grid, config, backend).objective


def objective_and_point_gradient(grid: GridSurface, config: DevObjectiveConfig, backend=None):
    """Objective and its gradient with respect to every coordinate, shape ``(N, 3)``."""
    _, in_set, out = _run(grid, config, True, backend)
    term, grad = out[5], out[6]
    return float(term[in_set].sum()), grad


def objective_gradient(grid: GridSurface, config: DevObjectiveConfig | None = None, variables=None, backend=None) -> np.ndarray:
    """dF/dz for the movable points (lower-level variables unless given)."""
    config = config or DevObjectiveConfig()
    if variables is None:
        variables = grid.lower_level_variables()
    _, grad = objective_and_point_gradient(grid, config, backend)
    return grad[np.asarray(variables, dtype=np.int64), 2]


# --------------------------------------------------------------------------
# single-point reference routines (readable, slow; used for checks and tests)


def face_normals(grid: GridSurface, fan: AuxiliaryFan) -> np.ndarray:
    pts = grid.flat_points
    p = pts[fan.center]
    out = np.empty((8, 3))
    for j, (_, q0, q1) in enumerate(fan.triangles):
        cr = np.cross(pts[q0] - p, pts[q1] - p)
        if 0.5 * abs(cr[2]) < _devkernels.PLAN_AREA_FLOOR:
            raise DegenerateTriangleError(
                f"point {fan.center}: fan triangle {j} is degenerate", point=fan.center, triangle=j
            )
        out[j] = cr / np.linalg.norm(cr)
    return out


def vertex_normal(normals: np.ndarray) -> np.ndarray:
    m = np.mean(normals, axis=0)
    nrm = np.linalg.norm(m)
    if nrm < _devkernels.NORMAL_SUM_FLOOR:
        raise DegenerateTriangleError("face normals cancel; vertex normal undefined")
    return m / nrm


def gauss_triangle_areas(n_i: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """Unsigned spherical areas of the triangles (n_j, n_{j+1}, n_i).

    Uses tan(E/2) = det(a, b, c) / (1 + a.b + b.c + c.a) for unit vectors.
    """
    a = normals
    b = np.roll(normals, -1, axis=0)
    det = np.einsum("jk,jk->j", a, np.cross(b, n_i))
    den = 1.0 + a @ n_i + b @ n_i + np.einsum("jk,jk->j", a, b)
    return np.abs(2.0 * np.arctan2(det, den))


def developability_error(grid: GridSurface, i: int) -> float:
    fn = face_normals(grid, neighbor_fan(grid, i))
    a = gauss_triangle_areas(vertex_normal(fn), fn)
    return float(np.sum(a**2))


# --------------------------------------------------------------------------
# exports


def write_report_csv(report: GaussMapReport, grid: GridSurface, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "u_index", "v_index", "sqrt_Ai", "Ai", "filtered_term"])
        for k, i in enumerate(report.centers):
            a, b = divmod(int(i), grid.nv)
            w.writerow([int(i), a, b, repr(float(report.sqrt_A[k])), repr(float(report.A[k])),
                        repr(float(report.filtered_term[k]))])


def point_field(report: GaussMapReport, grid: GridSurface, values=None) -> np.ndarray:
    """Scatter a per-centre quantity (default sqrt(A_i)) onto all grid points; boundary gets 0."""
    out = np.zeros(grid.n_points)
    out[report.centers] = report.sqrt_A if values is None else values
    return out


def concentration(report: GaussMapReport, top_fraction: float = 0.1) -> float:
    """Share of the total root error carried by the worst ``top_fraction`` of points."""
    r = np.sort(report.sqrt_A[report.in_set])[::-1]
    total = r.sum()
    if total == 0.0:
        return 0.0
    k = max(1, int(round(top_fraction * r.size)))
    return float(r[:k].sum() / total)


def developable_fraction(report: GaussMapReport, threshold: float = 1e-4) -> float:
    """Fraction of evaluated points whose sqrt(A_i) is below ``threshold``."""
    r = report.sqrt_A[report.in_set]
    return float(np.mean(r < threshold)) if r.size else 1.0
