"""Linear shell analysis of the quad grid: stiffness, compliance, bending moments.

Units are kN and m throughout, so E is given in kN/m^2, loads in kN/m^2 and
compliance comes out in kN*m.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _femkernels
from .errors import ConfigError, NumericalError, SingularStiffnessError
from .grid import GridSurface, quad_connectivity

DOF_NAMES = ("ux", "uy", "uz", "rx", "ry", "rz")
PIN = (True, True, True, False, False, False)
DRILL_RATIO = 1e-6


@dataclass(frozen=True)
class ShellMaterial:
    E: float = 20e6  # kN/m^2 (20 GPa)
    nu: float = 0.2
    t: float = 0.1  # m

    def __post_init__(self):
        if not self.E > 0:
            raise ConfigError("Young's modulus must be positive")
        if not 0.0 <= self.nu < 0.5:
            raise ConfigError("Poisson's ratio must lie in [0, 0.5)")
        if not self.t > 0:
            raise ConfigError("thickness must be positive")

    @property
    def D(self) -> float:
        """Plate flexural rigidity."""
        return self.E * self.t**3 / (12.0 * (1.0 - self.nu**2))


@dataclass(frozen=True, eq=False)
class FemModel:
    """Shell mesh with supports and a uniform area load.

    ``supports`` is an ``(N, 6)`` boolean array of restrained DOFs.
    ``load_per`` selects whether ``q`` acts per unit surface area or per unit
    plan (xy-projected) area. The load acts along ``load_direction``.
    """

    nodes: np.ndarray
    elements: np.ndarray
    supports: np.ndarray
    material: ShellMaterial = field(default_factory=ShellMaterial)
    q: float = 1.0  # kN/m^2
    load_per: str = "surface"
    load_direction: tuple = (0.0, 0.0, -1.0)
    drill_ratio: float = DRILL_RATIO
    prescribed: np.ndarray | None = None  # (N, 6) values imposed on restrained DOFs

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.float64)
        elements = np.asarray(self.elements, dtype=np.int64)
        supports = np.asarray(self.supports, dtype=bool)
        if nodes.ndim != 2 or nodes.shape[1] != 3:
            raise ConfigError("nodes must have shape (N, 3)")
        if elements.ndim != 2 or elements.shape[1] != 4:
            raise ConfigError("elements must have shape (M, 4)")
        if elements.min() < 0 or elements.max() >= len(nodes):
            raise ConfigError("element connectivity references missing nodes")
        if supports.shape != (len(nodes), 6):
            raise ConfigError("supports must have shape (N, 6)")
        if self.load_per not in ("surface", "plan"):
            raise ConfigError(f"load_per must be 'surface' or 'plan', got {self.load_per!r}")
        for e, conn in enumerate(elements):
            if len(set(conn.tolist())) != 4:
                raise ConfigError(f"element {e} repeats a node")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "supports", supports)
        if self.prescribed is not None:
            pres = np.asarray(self.prescribed, dtype=np.float64)
            if pres.shape != supports.shape:
                raise ConfigError("prescribed must have shape (N, 6)")
            object.__setattr__(self, "prescribed", pres)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_dof(self) -> int:
        return 6 * len(self.nodes)


@dataclass(frozen=True, eq=False)
class FemResult:
    """Solved state. Moments are per unit length, positive when the ``-e3`` face is in tension."""

    model: FemModel
    u: np.ndarray  # (N, 6)
    f: np.ndarray  # (6N,)
    stiffness: sp.csr_matrix
    moments: np.ndarray  # (M, 3): Mxx, Myy, Mxy in each element frame
    membrane: np.ndarray  # (M, 3): Nxx, Nyy, Nxy in each element frame

    @property
    def W(self) -> float:
        return compliance(self)

    @property
    def principal(self) -> np.ndarray:
        return principal_from_tensor(self.moments)

    @property
    def M_max(self) -> np.ndarray:
        return self.principal[:, 0]

    def strain_energy_twice(self) -> float:
        u = self.u.ravel()
        return float(u @ (self.stiffness @ u))


def element_stiffness(xyz, material: ShellMaterial, drill_ratio: float = DRILL_RATIO, element_id: int = 0) -> np.ndarray:
    """24x24 global-frame stiffness of one quad with nodes ordered CCW."""
    X = np.ascontiguousarray(np.asarray(xyz, dtype=np.float64).reshape(1, 4, 3))
    K, _, _, _, _, dets = _femkernels.element_batch(X, material.E, material.nu, material.t, drill_ratio)
    if not dets[0] > 0:
        raise NumericalError(f"element {element_id} is inverted or degenerate (det J = {dets[0]:.3g})")
    return K[0]


def _element_data(model: FemModel):
    X = np.ascontiguousarray(model.nodes[model.elements])
    m = model.material
    K, T, MB, ws, wp, dets = _femkernels.element_batch(X, m.E, m.nu, m.t, model.drill_ratio)
    bad = np.flatnonzero(~(dets > 0) | ~np.isfinite(K).all(axis=(1, 2)))
    if bad.size:
        raise NumericalError(f"element {int(bad[0])} is inverted or degenerate")
    return K, T, MB, ws, wp


def _assemble(model: FemModel, Ke: np.ndarray) -> sp.csr_matrix:
    dofs = (6 * model.elements[:, :, None] + np.arange(6)).reshape(-1, 24)
    rows = np.repeat(dofs, 24, axis=1).ravel()
    cols = np.tile(dofs, (1, 24)).ravel()
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(model.n_dof, model.n_dof))
    return K.tocsr()


def load_vector(model: FemModel, ws=None, wp=None) -> np.ndarray:
    if ws is None:
        _, _, _, ws, wp = _element_data(model)
    w = ws if model.load_per == "surface" else wp
    nodal = np.zeros(model.n_nodes)
    np.add.at(nodal, model.elements.ravel(), w.ravel())
    direction = np.asarray(model.load_direction, dtype=np.float64)
    direction = direction / np.linalg.norm(direction)
    f = np.zeros((model.n_nodes, 6))
    f[:, :3] = model.q * nodal[:, None] * direction
    return f.ravel()


def _rigid_modes(nodes: np.ndarray) -> np.ndarray:
    c = nodes.mean(axis=0)
    r = nodes - c
    modes = np.zeros((len(nodes), 6, 6))
    for k in range(3):
        modes[:, k, k] = 1.0
        axis = np.zeros(3)
        axis[k] = 1.0
        modes[:, :3, 3 + k] = np.cross(axis, r)
        modes[:, 3 + k, 3 + k] = 1.0
    return modes.reshape(-1, 6)


_MODE_NAMES = ("translation x", "translation y", "translation z", "rotation x", "rotation y", "rotation z")


def _check_supports(model: FemModel) -> None:
    """Reject support sets that leave any rigid-body motion unrestrained."""
    modes = _rigid_modes(model.nodes)
    scale = np.linalg.norm(modes, axis=0)
    modes = modes / scale
    sub = modes[model.supports.ravel()]
    if sub.shape[0] < 6:
        sv, vt = np.zeros(6), np.eye(6)
    else:
        _, sv, vt = np.linalg.svd(sub, full_matrices=True)
    if sv.size < 6 or sv[-1] <= 1e-10:
        combo = vt[-1]
        k = int(np.argmax(np.abs(combo)))
        raise SingularStiffnessError(
            f"supports leave a rigid-body motion unrestrained (mainly {_MODE_NAMES[k]})",
            null_vector=modes @ combo,
        )


def assemble_and_solve(model: FemModel) -> FemResult:
    """Assemble, eliminate supported DOFs, and solve ``K u = f``."""
    _check_supports(model)
    Ke, T, MB, ws, wp = _element_data(model)
    K = _assemble(model, Ke)
    f = load_vector(model, ws, wp)
    free = np.flatnonzero(~model.supports.ravel())
    Kff = K[free][:, free].tocsc()
    try:
        lu = spla.splu(Kff, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise SingularStiffnessError(f"stiffness matrix is singular: {exc}") from None
    diag = np.abs(lu.U.diagonal())
    if diag.min() <= 1e-14 * diag.max():
        v = np.zeros(model.n_dof)
        k = int(np.argmin(diag))
        v[free[lu.perm_c[k]]] = 1.0
        node, dof = divmod(int(free[lu.perm_c[k]]), 6)
        raise SingularStiffnessError(
            f"stiffness matrix is numerically singular near node {node} dof {DOF_NAMES[dof]}",
            null_vector=v,
        )
    u = np.zeros(model.n_dof)
    rhs = f[free]
    if model.prescribed is not None:
        fixed = np.flatnonzero(model.supports.ravel())
        u[fixed] = model.prescribed.ravel()[fixed]
        rhs = rhs - K[free][:, fixed] @ u[fixed]
    u[free] = lu.solve(rhs)
    if not np.all(np.isfinite(u)):
        raise SingularStiffnessError("solution is not finite")

    ue = u.reshape(-1, 6)[model.elements].reshape(-1, 24)
    local = np.einsum("eij,ej->ei", T, ue)
    resultants = np.einsum("eij,ej->ei", MB, local)
    return FemResult(model, u.reshape(-1, 6), f, K, -resultants[:, 3:], resultants[:, :3])


def compliance(result: FemResult) -> float:
    """External work ``f . u`` (kN*m)."""
    return float(result.f @ result.u.ravel())


def principal_from_tensor(m) -> np.ndarray:
    """Principal values ``(M1, M2)`` with ``M1 >= M2`` of ``(Mxx, Myy, Mxy)`` rows."""
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    mean = 0.5 * (m[:, 0] + m[:, 1])
    rad = np.hypot(0.5 * (m[:, 0] - m[:, 1]), m[:, 2])
    return np.column_stack([mean + rad, mean - rad])


def principal_moments(result: FemResult, element: int) -> tuple[float, float, float]:
    M1, M2 = principal_from_tensor(result.moments[element])[0]
    return float(M1), float(M2), float(M1)


# --------------------------------------------------------------------------
# grid-based models


def pinned_supports(n_nodes: int, nodes) -> np.ndarray:
    sup = np.zeros((n_nodes, 6), dtype=bool)
    sup[np.asarray(nodes, dtype=np.int64)] = PIN
    return sup


def model_from_grid(grid: GridSurface, support_nodes, material: ShellMaterial | None = None,
                    q: float = 1.0, load_per: str = "surface") -> FemModel:
    """FE model on the grid cells with pinned ``support_nodes``."""
    return FemModel(
        nodes=grid.flat_points,
        elements=quad_connectivity(grid.nu, grid.nv),
        supports=pinned_supports(grid.n_points, support_nodes),
        material=material or ShellMaterial(),
        q=q,
        load_per=load_per,
    )


def write_moments_csv(result: FemResult, path: str | Path) -> None:
    P = result.principal
    W = compliance(result)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["element", "M1", "M2", "Mmax", "W_total"])
        for e in range(len(P)):
            w.writerow([e, repr(float(P[e, 0])), repr(float(P[e, 1])), repr(float(P[e, 0])), repr(W)])
