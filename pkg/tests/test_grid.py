import numpy as np
import pytest

from pdsopt.errors import GridError, NoFanError
from pdsopt.grid import (CASE1, CASE2, BaseSurfaceSpec, CasePreset, GridSurface, Role, build_base_surface,
                         classify_points, fan_table, layout_nodes, load_grid, load_layout, neighbor_fan,
                         quad_connectivity, save_grid, save_obj)


def test_fan_is_counterclockwise_and_index_only():
    g = build_base_surface(BaseSurfaceSpec(nu=5, nv=6, jitter=0.05, seed=3))
    i = g.index(2, 3)
    fan = neighbor_fan(g, i)
    assert len(fan.neighbors) == 8
    plan = g.flat_points[:, :2]
    ang = np.arctan2(*(plan[fan.neighbors] - plan[i])[:, ::-1].T)
    steps = np.mod(np.diff(np.append(ang, ang[0])), 2 * np.pi)
    assert np.all(steps > 0) and np.isclose(steps.sum(), 2 * np.pi)
    g2 = build_base_surface(BaseSurfaceSpec(nu=5, nv=6, jitter=0.0))
    assert np.array_equal(neighbor_fan(g2, i).neighbors, fan.neighbors)


def test_fan_table_matches_single_fans():
    g = build_base_surface(BaseSurfaceSpec(nu=6, nv=4))
    centers, nbrs = fan_table(6, 4)
    assert len(centers) == 4 * 2
    for c, row in zip(centers, nbrs):
        assert np.array_equal(neighbor_fan(g, int(c)).neighbors, row)


def test_boundary_point_has_no_fan():
    g = build_base_surface(BaseSurfaceSpec(nu=4, nv=4))
    with pytest.raises(NoFanError):
        neighbor_fan(g, g.index(0, 2))


def test_jitter_is_seeded_and_keeps_outline():
    spec = BaseSurfaceSpec(nu=9, nv=7, Lx=10.0, Ly=5.0, jitter=0.02, seed=11)
    g1, g2 = build_base_surface(spec), build_base_surface(spec)
    assert np.array_equal(g1.points, g2.points)
    p = g1.points
    assert np.allclose(p[0, :, 0], 0.0) and np.allclose(p[-1, :, 0], 10.0)
    assert np.allclose(p[:, 0, 1], 0.0) and np.allclose(p[:, -1, 1], 5.0)
    flat = build_base_surface(BaseSurfaceSpec(nu=9, nv=7, Lx=10.0, Ly=5.0))
    assert not np.allclose(p[1:-1, 1:-1, :2], flat.points[1:-1, 1:-1, :2])


def test_jitter_that_would_fold_is_rejected():
    with pytest.raises(GridError):
        build_base_surface(BaseSurfaceSpec(nu=11, nv=11, jitter=0.05))


def test_grid_arrays_are_read_only():
    g = build_base_surface(BaseSurfaceSpec(nu=4, nv=4))
    with pytest.raises(ValueError):
        g.points[0, 0, 2] = 1.0


def test_case_layouts():
    g1 = classify_points(build_base_surface(BaseSurfaceSpec(nu=21, nv=21)), CASE1)
    assert len(g1.indices_with_role(Role.FIXED)) == 4
    assert len(g1.design_indices()) == 5
    assert g1.roles[10, 10] == Role.DESIGN
    g2 = classify_points(build_base_surface(BaseSurfaceSpec(nu=21, nv=11, Lx=10, Ly=5)), CASE2)
    held = g2.indices_with_role(Role.FIXED, Role.DESIGN)
    assert len(held) == 15 and len(g2.design_indices()) == 11
    exempt = g2.indices_with_role(Role.EXEMPT)
    assert len(exempt) == 4 and all(g2.is_interior(i) for i in exempt)
    assert not set(exempt) & set(g2.evaluation_set())
    assert set(exempt) <= set(g2.lower_level_variables())
    assert len(layout_nodes(CASE2.supports, 21, 11)) == 12


def test_role_clash_and_boundary_exempt_rejected():
    g = build_base_surface(BaseSurfaceSpec(nu=5, nv=5))
    with pytest.raises(GridError):
        classify_points(g, CasePreset("x", fixed=((0, 0),), design=((0, 0),)))
    with pytest.raises(GridError):
        classify_points(g, CasePreset("x", exempt=((0, 0.5),)))


def test_grid_text_round_trip_is_exact(tmp_path):
    g = classify_points(build_base_surface(BaseSurfaceSpec(nu=7, nv=5, jitter=0.03, seed=2)), CASE2)
    save_grid(g, tmp_path / "g.txt")
    h = load_grid(tmp_path / "g.txt")
    assert np.array_equal(g.points, h.points) and np.array_equal(g.roles, h.roles)
    assert (tmp_path / "g.txt").read_text().splitlines()[0] == "7 5"


def test_malformed_grid_file(tmp_path):
    (tmp_path / "bad.txt").write_text("3 3\n0 0 0 free\n")
    with pytest.raises(GridError):
        load_grid(tmp_path / "bad.txt")


def test_obj_quads_and_triangles(tmp_path):
    g = build_base_surface(BaseSurfaceSpec(nu=4, nv=3))
    save_obj(g, tmp_path / "q.obj")
    save_obj(g, tmp_path / "t.obj", triangulate=True)
    q = [ln for ln in (tmp_path / "q.obj").read_text().splitlines() if ln.startswith("f ")]
    t = [ln for ln in (tmp_path / "t.obj").read_text().splitlines() if ln.startswith("f ")]
    assert len(q) == 3 * 2 and all(len(ln.split()) == 5 for ln in q)
    assert len(t) == 12 and all(len(ln.split()) == 4 for ln in t)


def test_quads_are_counterclockwise():
    g = build_base_surface(BaseSurfaceSpec(nu=5, nv=4, jitter=0.05, seed=1))
    xy = g.flat_points[quad_connectivity(5, 4)][:, :, :2]
    x, y = xy[..., 0], xy[..., 1]
    area = 0.5 * np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1)
    assert np.all(area > 0)


def test_user_layout_file(tmp_path):
    f = tmp_path / "layout.txt"
    f.write_text("# corners\n0 0 fixed\n0 0 support\n2 2 design\n1 1 exempt\n")
    lay = load_layout(f)
    g = classify_points(build_base_surface(BaseSurfaceSpec(nu=5, nv=5)), lay)
    assert g.roles[0, 0] == Role.FIXED and g.roles[2, 2] == Role.DESIGN and g.roles[1, 1] == Role.EXEMPT
    f.write_text("0 0 bogus\n")
    with pytest.raises(GridError):
        load_layout(f)


def test_with_z_leaves_plan_unchanged():
    g = build_base_surface(BaseSurfaceSpec(nu=4, nv=4, jitter=0.05, seed=0))
    h = g.with_z(np.arange(16.0))
    assert np.array_equal(h.points[..., :2], g.points[..., :2])
    assert isinstance(h, GridSurface) and h.z[5] == 5.0
