"""Structured grid of surface points shared by both optimization levels.

Points are stored as an ``(nu, nv, 3)`` array; the flat index of grid node
``(a, b)`` is ``a * nv + b``. Index ``a`` runs along the plan x direction and
``b`` along y.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import GridError, NoFanError

# CCW around the centre when viewed from +z (x right, y up), starting at +x.
FAN_OFFSETS = np.array(
    [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)], dtype=np.int64
)


class Role(IntEnum):
    FREE = 0
    FIXED = 1  # geometry-fixed, not a design variable
    DESIGN = 2  # fixed in the lower level, varied by the upper level
    EXEMPT = 3  # free in z, excluded from the developability sum

    @classmethod
    def parse(cls, text: str) -> "Role":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise GridError(f"unknown role {text!r}") from None


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GridSurface:
    """Immutable grid of 3D points with a role per point.

    Attributes
    ----------
    points : (nu, nv, 3) ndarray
        Coordinates in meters.
    roles : (nu, nv) ndarray of int8
        Values of :class:`Role`.
    Lx, Ly : float
        Plan dimensions.
    """

    points: np.ndarray
    roles: np.ndarray
    Lx: float
    Ly: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 3 or pts.shape[2] != 3:
            raise GridError(f"points must have shape (nu, nv, 3), got {pts.shape}")
        nu, nv = pts.shape[:2]
        if nu < 3 or nv < 3:
            raise GridError(f"grid must be at least 3x3, got {nu}x{nv}")
        roles = np.asarray(self.roles, dtype=np.int8)
        if roles.shape != (nu, nv):
            raise GridError(f"roles shape {roles.shape} does not match grid {nu}x{nv}")
        if roles.min() < 0 or roles.max() > max(Role):
            raise GridError("role values out of range")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "roles", _frozen(roles))

    @property
    def nu(self) -> int:
        return self.points.shape[0]

    @property
    def nv(self) -> int:
        return self.points.shape[1]

    @property
    def n_points(self) -> int:
        return self.nu * self.nv

    @property
    def flat_points(self) -> np.ndarray:
        return self.points.reshape(-1, 3)

    @property
    def z(self) -> np.ndarray:
        return self.points[:, :, 2].ravel()

    @property
    def flat_roles(self) -> np.ndarray:
        return self.roles.ravel()

    def index(self, a: int, b: int) -> int:
        return a * self.nv + b

    def is_interior(self, i: int) -> bool:
        a, b = divmod(int(i), self.nv)
        return 0 < a < self.nu - 1 and 0 < b < self.nv - 1

    def interior_indices(self) -> np.ndarray:
        a, b = np.meshgrid(np.arange(1, self.nu - 1), np.arange(1, self.nv - 1), indexing="ij")
        return (a * self.nv + b).ravel()

    def indices_with_role(self, *roles: Role) -> np.ndarray:
        return np.flatnonzero(np.isin(self.flat_roles, [int(r) for r in roles]))

    def lower_level_variables(self) -> np.ndarray:
        """Flat indices whose z is optimized by the lower level."""
        return self.indices_with_role(Role.FREE, Role.EXEMPT)

    def design_indices(self) -> np.ndarray:
        return self.indices_with_role(Role.DESIGN)

    def evaluation_set(self) -> np.ndarray:
        """Interior points where developability is evaluated (exempt points excluded)."""
        interior = self.interior_indices()
        return interior[self.flat_roles[interior] != Role.EXEMPT]

    def with_z(self, z: np.ndarray) -> "GridSurface":
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.n_points,):
            raise GridError(f"z must have {self.n_points} entries, got {z.shape}")
        pts = np.array(self.points)
        pts[:, :, 2] = z.reshape(self.nu, self.nv)
        return replace(self, points=pts)

    def with_z_at(self, idx: np.ndarray, values: np.ndarray) -> "GridSurface":
        z = np.array(self.z)
        z[np.asarray(idx, dtype=np.int64)] = values
        return self.with_z(z)

    def with_points(self, points: np.ndarray) -> "GridSurface":
        return replace(self, points=points)

    def with_roles(self, roles: np.ndarray) -> "GridSurface":
        return replace(self, roles=roles)


@dataclass(frozen=True)
class AuxiliaryFan:
    """The eight auxiliary triangles around one interior point."""

    center: int
    neighbors: np.ndarray  # (8,) flat indices, CCW
    triangles: np.ndarray = field(init=False)  # (8, 3): (center, n_j, n_{j+1})

    def __post_init__(self):
        nb = np.asarray(self.neighbors, dtype=np.int64)
        tri = np.column_stack([np.full(8, self.center), nb, np.roll(nb, -1)])
        object.__setattr__(self, "neighbors", nb)
        object.__setattr__(self, "triangles", tri)


@dataclass(frozen=True)
class BaseSurfaceSpec:
    """Analytic initial surface sampled at jittered parameter values.

    ``family`` is ``"dome"`` (z = h sin(pi u) sin(pi v)) or ``"cylinder"``
    (z = h sin(pi u)). ``jitter`` is the half-width of the uniform random
    perturbation applied to interior (u, v) parameters.
    """

    nu: int = 21
    nv: int = 21
    Lx: float = 10.0
    Ly: float = 10.0
    h: float = 2.0
    jitter: float = 0.0
    seed: int = 0
    family: str = "dome"

    def validate(self) -> None:
        if self.nu < 3 or self.nv < 3:
            raise GridError(f"grid must be at least 3x3, got {self.nu}x{self.nv}")
        if self.Lx <= 0 or self.Ly <= 0:
            raise GridError("plan dimensions must be positive")
        if self.family not in SURFACE_FAMILIES:
            raise GridError(f"unknown surface family {self.family!r}")
        if self.jitter < 0:
            raise GridError("jitter must be non-negative")
        half = 0.5 * min(1.0 / (self.nu - 1), 1.0 / (self.nv - 1))
        if self.jitter >= half:
            raise GridError(
                f"jitter {self.jitter} would fold the grid (must be < half spacing {half:.6g})"
            )


SURFACE_FAMILIES = {
    "dome": lambda u, v: np.sin(np.pi * u) * np.sin(np.pi * v),
    "cylinder": lambda u, v: np.sin(np.pi * u),
}


def build_base_surface(spec: BaseSurfaceSpec) -> GridSurface:
    """Sample the analytic base surface on a jittered parameter lattice.

    Boundary points keep their lattice parameters so the plan outline is
    exactly ``[0, Lx] x [0, Ly]``. All roles start as ``FREE``.
    """
    spec.validate()
    u0 = np.linspace(0.0, 1.0, spec.nu)
    v0 = np.linspace(0.0, 1.0, spec.nv)
    u, v = np.meshgrid(u0, v0, indexing="ij")
    if spec.jitter > 0:
        rng = np.random.default_rng(spec.seed)
        du = rng.uniform(-spec.jitter, spec.jitter, size=u.shape)
        dv = rng.uniform(-spec.jitter, spec.jitter, size=v.shape)
        u[1:-1, 1:-1] += du[1:-1, 1:-1]
        v[1:-1, 1:-1] += dv[1:-1, 1:-1]
    z = spec.h * SURFACE_FAMILIES[spec.family](u, v)
    pts = np.stack([spec.Lx * u, spec.Ly * v, z], axis=-1)
    roles = np.zeros((spec.nu, spec.nv), dtype=np.int8)
    return GridSurface(pts, roles, float(spec.Lx), float(spec.Ly))


def fan_table(nu: int, nv: int) -> tuple[np.ndarray, np.ndarray]:
    """Centres and CCW neighbour indices of every interior point.

    Returns ``(centers, neighbors)`` with shapes ``(P,)`` and ``(P, 8)``.
    """
    a, b = np.meshgrid(np.arange(1, nu - 1), np.arange(1, nv - 1), indexing="ij")
    a = a.ravel()
    b = b.ravel()
    centers = a * nv + b
    neighbors = (a[:, None] + FAN_OFFSETS[:, 0]) * nv + (b[:, None] + FAN_OFFSETS[:, 1])
    return centers.astype(np.int64), neighbors.astype(np.int64)


def neighbor_fan(grid: GridSurface, i: int) -> AuxiliaryFan:
    if not 0 <= i < grid.n_points:
        raise GridError(f"point index {i} out of range")
    if not grid.is_interior(i):
        raise NoFanError(f"point {i} lies on the boundary and has no 8-neighbour fan")
    a, b = divmod(int(i), grid.nv)
    nb = (a + FAN_OFFSETS[:, 0]) * grid.nv + (b + FAN_OFFSETS[:, 1])
    return AuxiliaryFan(int(i), nb)


# --------------------------------------------------------------------------
# case layouts


@dataclass(frozen=True)
class CasePreset:
    """Point roles given as plan fractions, resolved to the nearest grid node.

    Each entry is ``(fx, fy)`` in ``[0, 1]^2``. Exempt points may instead be
    given as ``(fx, fy, da, db)``: a grid offset from the node nearest
    ``(fx, fy)``.
    """

    name: str
    fixed: tuple = ()
    design: tuple = ()
    exempt: tuple = ()
    supports: tuple = ()  # pinned in the FE model, same convention as ``fixed``


_C1_EDGE_MIDS = ((0.5, 0.0), (1.0, 0.5), (0.5, 1.0), (0.0, 0.5))
_CORNERS = ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0))

CASE1 = CasePreset(
    name="case1",
    fixed=_CORNERS,
    design=((0.5, 0.5),) + _C1_EDGE_MIDS,
    supports=_CORNERS + _C1_EDGE_MIDS,
)


def _case2_design():
    pts = []
    for fx in (0.0, 0.25, 0.5, 0.75, 1.0):
        for fy in (0.0, 0.5, 1.0):
            if (fx, fy) not in _CORNERS:
                pts.append((fx, fy))
    return tuple(pts)


CASE2 = CasePreset(
    name="case2",
    fixed=_CORNERS,
    design=_case2_design(),
    exempt=((0.0, 0.5, 1, -1), (0.0, 0.5, 1, 1), (1.0, 0.5, -1, -1), (1.0, 0.5, -1, 1)),
    supports=tuple(p for p in _CORNERS + _case2_design() if p[0] in (0.0, 1.0) or p[1] in (0.0, 1.0)),
)

EMPTY = CasePreset(name="empty")

PRESETS = {"case1": CASE1, "case2": CASE2, "empty": EMPTY}


def _resolve(entry, nu: int, nv: int) -> tuple[int, int]:
    fx, fy = entry[:2]
    a = int(round(fx * (nu - 1)))
    b = int(round(fy * (nv - 1)))
    if len(entry) == 4:
        a += int(entry[2])
        b += int(entry[3])
    if not (0 <= a < nu and 0 <= b < nv):
        raise GridError(f"layout entry {entry!r} resolves outside the {nu}x{nv} grid")
    return a, b


def layout_nodes(entries, nu: int, nv: int) -> np.ndarray:
    """Flat indices of layout entries (plan fractions, offsets, or ``GridIndex``)."""
    out = []
    for e in entries:
        if isinstance(e, GridIndex):
            if not (0 <= e.a < nu and 0 <= e.b < nv):
                raise GridError(f"layout index ({e.a}, {e.b}) outside the {nu}x{nv} grid")
            a, b = e.a, e.b
        else:
            a, b = _resolve(e, nu, nv)
        out.append(a * nv + b)
    return np.array(out, dtype=np.int64)


@dataclass(frozen=True)
class GridIndex:
    """Explicit grid node reference used by user layout files."""

    a: int
    b: int


def classify_points(grid: GridSurface, case: CasePreset) -> GridSurface:
    """Assign point roles from a case layout; unlisted points are ``FREE``."""
    roles = np.zeros(grid.n_points, dtype=np.int8)
    for role, entries in ((Role.FIXED, case.fixed), (Role.DESIGN, case.design), (Role.EXEMPT, case.exempt)):
        idx = layout_nodes(entries, grid.nu, grid.nv)
        clash = idx[roles[idx] != Role.FREE]
        if clash.size:
            raise GridError(f"layout assigns more than one role to point(s) {clash.tolist()}")
        roles[idx] = role
    exempt = np.flatnonzero(roles == Role.EXEMPT)
    bad = [int(i) for i in exempt if not grid.is_interior(i)]
    if bad:
        raise GridError(f"exempt points must be interior, got boundary point(s) {bad}")
    return grid.with_roles(roles.reshape(grid.nu, grid.nv))


def load_layout(path: str | Path) -> CasePreset:
    """Read a user layout: one ``a b role`` line per point (grid indices).

    Lines starting with ``#`` are ignored. ``role`` is one of
    ``fixed``, ``design``, ``exempt`` or ``support``; a support line may be
    combined with a geometric role on another line.
    """
    groups = {"fixed": [], "design": [], "exempt": [], "support": []}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3 or parts[2].lower() not in groups:
            raise GridError(f"{path}:{lineno}: expected 'a b role', got {raw!r}")
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            raise GridError(f"{path}:{lineno}: grid indices must be integers") from None
        groups[parts[2].lower()].append(GridIndex(a, b))
    return CasePreset(
        name=Path(path).stem,
        fixed=tuple(groups["fixed"]),
        design=tuple(groups["design"]),
        exempt=tuple(groups["exempt"]),
        supports=tuple(groups["support"]),
    )


# --------------------------------------------------------------------------
# file formats


def save_grid(grid: GridSurface, path: str | Path) -> None:
    """Write the plain-text grid format: ``nu nv`` header then ``x y z role`` rows."""
    lines = [f"{grid.nu} {grid.nv}"]
    for p, r in zip(grid.flat_points, grid.flat_roles):
        lines.append(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r} {Role(int(r)).name.lower()}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_grid(path: str | Path) -> GridSurface:
    text = Path(path).read_text().split("\n")
    rows = [ln for ln in text if ln.strip() and not ln.lstrip().startswith("#")]
    try:
        nu, nv = (int(t) for t in rows[0].split())
    except (ValueError, IndexError):
        raise GridError(f"{path}: malformed header, expected 'nu nv'") from None
    body = rows[1:]
    if len(body) != nu * nv:
        raise GridError(f"{path}: expected {nu * nv} point rows, found {len(body)}")
    pts = np.empty((nu * nv, 3))
    roles = np.zeros(nu * nv, dtype=np.int8)
    for k, ln in enumerate(body):
        parts = ln.split()
        if len(parts) not in (3, 4):
            raise GridError(f"{path}: bad point row {ln!r}")
        pts[k] = [float(t) for t in parts[:3]]
        if len(parts) == 4:
            roles[k] = Role.parse(parts[3])
    pts = pts.reshape(nu, nv, 3)
    Lx = float(np.ptp(pts[:, :, 0]))
    Ly = float(np.ptp(pts[:, :, 1]))
    return GridSurface(pts, roles.reshape(nu, nv), Lx, Ly)


def save_obj(grid: GridSurface, path: str | Path, triangulate: bool = False) -> None:
    """Write the quad mesh (or its triangulation) as Wavefront OBJ."""
    nu, nv = grid.nu, grid.nv
    lines = [f"# grid {nu}x{nv}"]
    lines += [f"v {p[0]:.12g} {p[1]:.12g} {p[2]:.12g}" for p in grid.flat_points]
    for q in quad_connectivity(nu, nv) + 1:
        if triangulate:
            lines.append(f"f {q[0]} {q[1]} {q[2]}")
            lines.append(f"f {q[0]} {q[2]} {q[3]}")
        else:
            lines.append(f"f {q[0]} {q[1]} {q[2]} {q[3]}")
    Path(path).write_text("\n".join(lines) + "\n")


def quad_connectivity(nu: int, nv: int) -> np.ndarray:
    """Grid cells as ``(n_cells, 4)`` flat indices, CCW viewed from +z."""
    a, b = np.meshgrid(np.arange(nu - 1), np.arange(nv - 1), indexing="ij")
    a = a.ravel()
    b = b.ravel()
    n0 = a * nv + b
    return np.column_stack([n0, n0 + nv, n0 + nv + 1, n0 + 1]).astype(np.int64)
