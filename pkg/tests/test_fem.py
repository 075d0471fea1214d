import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

import oracles
from conftest import plate_model
from pdsopt.errors import ConfigError, NumericalError, SingularStiffnessError
from pdsopt.fem import (FemModel, ShellMaterial, assemble_and_solve, element_stiffness, load_vector,
                        model_from_grid, pinned_supports, principal_from_tensor, principal_moments,
                        write_moments_csv)
from pdsopt.grid import CASE1, BaseSurfaceSpec, build_base_surface, classify_points, layout_nodes, quad_connectivity


def _centre_node(n):
    return (n // 2) * (n + 1) + n // 2


@pytest.mark.parametrize("n", [16])
def test_simply_supported_plate(n):
    m = plate_model(n)
    r = assemble_and_solve(m)
    D = m.material.D
    w_ref, _, W_ref = oracles.navier_plate(10.0, D, 1.0, 0.2, 5.0, 5.0)
    assert -r.u[_centre_node(n), 2] == pytest.approx(w_ref, rel=0.02)
    assert r.W == pytest.approx(W_ref, rel=0.03)
    e = (n // 2) * n + n // 2
    xc = m.nodes[m.elements[e]].mean(axis=0)
    _, Mx_ref, _ = oracles.navier_plate(10.0, D, 1.0, 0.2, xc[0], xc[1])
    assert r.M_max[e] == pytest.approx(Mx_ref, rel=0.02)


def test_plate_coefficient_matches_series():
    D = ShellMaterial().D
    w, _, _ = oracles.navier_plate(10.0, D, 1.0, 0.2, 5.0, 5.0)
    assert w * D / 10.0**4 == pytest.approx(0.00406, abs=5e-6)


def test_plate_converges_without_shear_locking():
    errs = []
    for n in (4, 8, 16):
        m = plate_model(n, t=0.01)
        w_ref, _, _ = oracles.navier_plate(10.0, m.material.D, 1.0, 0.2, 5.0, 5.0)
        errs.append(abs(-assemble_and_solve(m).u[_centre_node(n), 2] / w_ref - 1))
    assert errs[0] > errs[1] > errs[2] and errs[2] < 0.01


def test_work_balance():
    r = assemble_and_solve(plate_model(8))
    assert r.strain_energy_twice() == pytest.approx(r.W, rel=1e-10)


def _patch(rotation=0.0, seed=0, n=4):
    rng = np.random.default_rng(seed)
    xs = np.linspace(0.0, 2.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    X[1:-1, 1:-1] += rng.uniform(-0.15, 0.15, (n - 1, n - 1))
    Y[1:-1, 1:-1] += rng.uniform(-0.15, 0.15, (n - 1, n - 1))
    nodes = np.column_stack([X.ravel(), Y.ravel(), np.zeros(X.size)])
    a, b = np.divmod(np.arange(len(nodes)), n + 1)
    boundary = (a == 0) | (a == n) | (b == 0) | (b == n)
    x, y = nodes[:, 0], nodes[:, 1]
    ex, ey, gxy = 1e-3, -4e-4, 6e-4
    kx, ky, kxy = 2e-3, 1e-3, -1.5e-3
    u = ex * x + 0.5 * gxy * y - rotation * y
    v = ey * y + 0.5 * gxy * x + rotation * x
    w = 0.5 * kx * x**2 + 0.5 * ky * y**2 + kxy * x * y
    exact = np.column_stack([u, v, w, ky * y + kxy * x, -(kx * x + kxy * y), np.full_like(x, rotation)])
    sup = np.zeros((len(nodes), 6), dtype=bool)
    sup[boundary] = True
    mat = ShellMaterial(20e6, 0.3, 0.1)
    model = FemModel(nodes, quad_connectivity(n + 1, n + 1), sup, mat, q=0.0, prescribed=exact)
    Dm = mat.E / (1 - mat.nu**2) * np.array([[1, mat.nu, 0], [mat.nu, 1, 0], [0, 0, 0.5 * (1 - mat.nu)]])
    N = mat.t * Dm @ [ex, ey, gxy]
    M = mat.t**3 / 12 * Dm @ [kx, ky, 2 * kxy]
    return model, exact, N, M


@pytest.mark.parametrize("rotation", [0.0, 2e-3])
def test_patch_constant_strain(rotation):
    model, exact, N, M = _patch(rotation)
    r = assemble_and_solve(model)
    assert np.allclose(r.u, exact, rtol=0, atol=1e-12)
    Np = principal_from_tensor(N)[0]
    Mp = principal_from_tensor(M)[0]
    assert np.max(np.abs(principal_from_tensor(r.membrane) - Np)) <= 1e-8 * np.max(np.abs(Np))
    assert np.max(np.abs(r.principal - Mp)) <= 1e-8 * np.max(np.abs(Mp))


def test_cantilever_strip_matches_beam_theory():
    L, b, t = 10.0, 1.0, 0.1
    X, Y = np.meshgrid(np.linspace(0, L, 21), np.linspace(0, b, 3), indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel(), np.zeros(X.size)])
    sup = np.zeros((len(nodes), 6), dtype=bool)
    sup[:3] = True
    mat = ShellMaterial(20e6, 0.0, t)
    r = assemble_and_solve(FemModel(nodes, quad_connectivity(21, 3), sup, mat, q=1.0))
    I = b * t**3 / 12
    assert -r.u[-1, 2] == pytest.approx(oracles.cantilever_tip(b, L, mat.E, I), rel=1e-3)
    assert r.W == pytest.approx(b**2 * L**5 / (20 * mat.E * I), rel=1e-2)


def _warped_quad():
    return np.array([[0.0, 0.0, 0.0], [1.2, 0.1, 0.05], [1.1, 0.9, -0.04], [-0.1, 1.0, 0.08]])


def test_element_has_exactly_six_rigid_modes_before_drilling():
    K = element_stiffness(_warped_quad(), ShellMaterial(), drill_ratio=0.0)
    keep = [k for k in range(24) if k % 6 != 5]
    ev = np.sort(np.abs(np.linalg.eigvalsh(K[np.ix_(keep, keep)])))
    assert np.all(ev[:6] <= 1e-8 * ev[-1])
    assert ev[6] > 1e-8 * ev[-1]


def test_element_with_drilling_keeps_six_zero_modes():
    K = element_stiffness(_warped_quad(), ShellMaterial())
    ev = np.sort(np.abs(np.linalg.eigvalsh(K)))
    assert np.all(ev[:6] <= 1e-12 * ev[-1])
    assert ev[6] > 1e-12 * ev[-1]
    assert np.array_equal(K, K.T)


def test_element_rigid_motions_are_force_free():
    X = _warped_quad()
    K = element_stiffness(X, ShellMaterial())
    c = X.mean(axis=0)
    for k in range(3):
        axis = np.eye(3)[k]
        mode = np.zeros((4, 6))
        mode[:, :3] = np.cross(axis, X - c)
        mode[:, 3:] = axis
        assert np.abs(K @ mode.ravel()).max() <= 1e-9 * np.abs(K).max()


def _rot(a, b, c):
    ca, sa, cb, sb, cc, sc = math.cos(a), math.sin(a), math.cos(b), math.sin(b), math.cos(c), math.sin(c)
    rx = np.array([[1, 0, 0], [0, ca, -sa], [0, sa, ca]])
    ry = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    rz = np.array([[cc, -sc, 0], [sc, cc, 0], [0, 0, 1]])
    return rz @ ry @ rx


def _shell(seed=0, n=7):
    g = classify_points(build_base_surface(BaseSurfaceSpec(nu=n, nv=n, h=2.0, jitter=0.03, seed=seed)), CASE1)
    return model_from_grid(g, layout_nodes(CASE1.supports, n, n))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_compliance_is_frame_invariant(seed):
    m = _shell(seed)
    R = _rot(0.3 + seed, -1.1, 2.0)
    moved = FemModel(m.nodes @ R.T + [3.0, -7.0, 11.0], m.elements, m.supports, m.material, m.q,
                     load_direction=tuple(R @ [0.0, 0.0, -1.0]))
    r0, r1 = assemble_and_solve(m), assemble_and_solve(moved)
    assert r1.W == pytest.approx(r0.W, rel=1e-8)
    assert np.allclose(r1.M_max, r0.M_max, rtol=1e-6, atol=1e-9 * np.abs(r0.M_max).max())


def test_scaling_laws():
    m = _shell()
    W = assemble_and_solve(m).W
    twice_q = FemModel(m.nodes, m.elements, m.supports, m.material, q=2.0)
    stiffer = FemModel(m.nodes, m.elements, m.supports, ShellMaterial(E=40e6), q=1.0)
    assert assemble_and_solve(twice_q).W == pytest.approx(4 * W, rel=1e-10)
    assert assemble_and_solve(stiffer).W == pytest.approx(0.5 * W, rel=1e-10)


def test_zero_load_gives_zero_compliance():
    m = _shell()
    r = assemble_and_solve(FemModel(m.nodes, m.elements, m.supports, m.material, q=0.0))
    assert r.W == 0.0 and np.all(r.u == 0.0)


def test_load_totals():
    m = _shell()
    f = load_vector(m).reshape(-1, 6)
    plan = FemModel(m.nodes, m.elements, m.supports, m.material, q=1.0, load_per="plan")
    fp = load_vector(plan).reshape(-1, 6)
    assert -fp[:, 2].sum() == pytest.approx(100.0, rel=1e-12)
    assert -f[:, 2].sum() > 100.0
    assert np.all(f[:, :2] == 0.0) and np.all(f[:, 3:] == 0.0)


def test_missing_supports_are_reported():
    m = _shell()
    sup = pinned_supports(m.n_nodes, [0])
    with pytest.raises(SingularStiffnessError) as info:
        assemble_and_solve(FemModel(m.nodes, m.elements, sup, m.material))
    assert info.value.null_vector is not None


def test_invalid_models_rejected():
    m = _shell()
    with pytest.raises(ConfigError):
        FemModel(m.nodes, m.elements[:, :3], m.supports)
    with pytest.raises(ConfigError):
        ShellMaterial(nu=0.5)
    with pytest.raises(ConfigError):
        FemModel(m.nodes, m.elements, m.supports, load_per="volume")


def test_inverted_element_rejected():
    m = _shell()
    el = m.elements.copy()
    el[0] = el[0, [0, 2, 1, 3]]  # bow-tie
    with pytest.raises(NumericalError):
        assemble_and_solve(FemModel(m.nodes, el, m.supports))


def test_sagging_moment_is_positive():
    r = assemble_and_solve(plate_model(8))
    e = 4 * 8 + 4
    M1, M2, Mmax = principal_moments(r, e)
    assert M1 >= M2 > 0 and Mmax == M1


def test_moments_csv(tmp_path):
    r = assemble_and_solve(plate_model(4))
    write_moments_csv(r, tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "element,M1,M2,Mmax,W_total"
    assert len(lines) == 17
    assert float(lines[1].split(",")[4]) == pytest.approx(r.W)


def test_python_fallback_matches_compiled_kernels():
    code = (
        "import json, numpy as np\n"
        "from pdsopt.fem import element_stiffness, ShellMaterial\n"
        "X = np.array([[0,0,0],[1.2,0.1,0.05],[1.1,0.9,-0.04],[-0.1,1,0.08]], float)\n"
        "print(json.dumps(element_stiffness(X, ShellMaterial()).tolist()))\n"
    )
    env = dict(os.environ, PDSOPT_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    K_py = np.array(json.loads(out.stdout))
    K_nb = element_stiffness(_warped_quad(), ShellMaterial())
    assert np.allclose(K_py, K_nb, rtol=1e-10, atol=1e-12 * np.abs(K_nb).max())
