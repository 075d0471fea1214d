import math

import numpy as np
import pytest

from pdsopt.anneal import (AnnealConfig, Annealer, DesignEvaluator, DesignVector, Evaluation, anneal,
                           evaluate_design, move_sigma, propose_move, reflect, write_history_csv)
from pdsopt.devmap import DevObjectiveConfig
from pdsopt.errors import ConfigError
from pdsopt.fem import assemble_and_solve, model_from_grid
from pdsopt.grid import CASE1, BaseSurfaceSpec, build_base_surface, classify_points, layout_nodes
from pdsopt.nlp import BoundsSpec, NlpSettings, solve_lower_level

Z2 = np.array([0.3, -0.2, 1.0, 0.5, 0.0])
BOX = BoundsSpec.around(Z2, 1.0)


def sphere(Z):
    return float(np.sum((Z - Z2) ** 2))


def rastrigin(Z):
    return float(10 * len(Z) + np.sum(Z**2 - 10 * np.cos(2 * np.pi * Z)))


def test_convex_quadratic_with_full_budget():
    calls = []

    def f(Z):
        calls.append(Z.copy())
        return sphere(Z)

    r = anneal(DesignVector(Z2 + 0.8, BOX), AnnealConfig(seed=1), f)
    assert r.best_W <= 1e-2
    assert all(BOX.contains(z) for z in calls)
    assert 1000 <= len(calls) <= 1050
    assert sum(h.phase != "polish" for h in r.history) == 1000


def test_rastrigin_escapes_local_minima():
    box = BoundsSpec([-1.0, -1.0], [1.0, 1.0])
    r = anneal(DesignVector([0.9, -0.8], box), AnnealConfig(seed=3), rastrigin)
    assert r.best_W <= 0.5


def test_budget_one_returns_initial_evaluation():
    r = anneal(DesignVector(Z2 + 0.5, BOX), AnnealConfig(steps=1, moves=1, local_search=False), sphere)
    assert len(r.history) == 1 and r.best_W == sphere(Z2 + 0.5)
    assert np.array_equal(r.best_Z, Z2 + 0.5)


def test_seeded_rerun_is_identical():
    run = lambda: anneal(DesignVector(Z2, BOX), AnnealConfig(steps=10, moves=5, seed=7), rastrigin)
    a, b = run(), run()
    assert [(h.W, h.Z, h.accepted) for h in a.history] == [(h.W, h.Z, h.accepted) for h in b.history]


def test_best_so_far_and_elitism():
    r = anneal(DesignVector(Z2 + 0.3, BOX), AnnealConfig(steps=10, moves=5, seed=2), rastrigin)
    best = r.best_so_far()
    assert np.all(np.diff(best) <= 0)
    assert r.best_W == min(h.W for h in r.history)


def test_failures_are_never_best():
    def f(Z):
        return math.inf if Z[0] > Z2[0] else sphere(Z)

    r = anneal(DesignVector(Z2, BOX), AnnealConfig(steps=5, moves=5, seed=0), f)
    assert math.isfinite(r.best_W) and r.best_Z[0] <= Z2[0]
    assert not any(h.accepted for h in r.history if not math.isfinite(h.W))


def test_reflection_at_bounds():
    lo, hi = np.array([0.0, -1.0]), np.array([1.0, 1.0])
    assert np.allclose(reflect(np.array([1.3, -1.5]), lo, hi), [0.7, -0.5])
    assert np.allclose(reflect(np.array([2.5, 3.5]), lo, hi), [0.5, -0.5])
    rng = np.random.default_rng(0)
    b = BoundsSpec([0.0], [1.0])
    for _ in range(200):
        z = propose_move([1.0], 1.0, rng, b, sigma0=2.0)
        assert 0.0 <= z[0] <= 1.0


def test_move_width_follows_schedule():
    rng = np.random.default_rng(123)
    b = BoundsSpec([-10.0] * 3, [10.0] * 3)
    T, T0 = 0.25, 1.0
    moves = np.array([propose_move(np.zeros(3), T, rng, b, T0, 0.01) for _ in range(10_000)])
    sigma = move_sigma(b, T, T0, 0.01)
    assert np.allclose(moves.std(axis=0), sigma, rtol=0.1)


def test_cold_limit_freezes_moves():
    rng = np.random.default_rng(0)
    z = propose_move(Z2, 0.0, rng, BOX, 1.0)
    assert np.array_equal(z, Z2)


def test_config_validation():
    with pytest.raises(ConfigError):
        AnnealConfig(alpha=1.0)
    with pytest.raises(ConfigError):
        AnnealConfig(steps=0)
    with pytest.raises(ConfigError):
        DesignVector([5.0], BoundsSpec([0.0], [1.0]))


def test_resume_reproduces_uninterrupted_run(tmp_path):
    dv = DesignVector([0.9, -0.8], BoundsSpec([-1, -1], [1, 1]))
    cfg = AnnealConfig(steps=20, moves=7, seed=4)
    full = anneal(dv, cfg, rastrigin)

    class Stop(Exception):
        pass

    count = [0]

    def crashing(Z):
        count[0] += 1
        if count[0] == 61:
            raise Stop
        return rastrigin(Z)

    with pytest.raises(Stop):
        anneal(dv, cfg, crashing, tmp_path / "ck.json")
    resumed = Annealer.restore(tmp_path / "ck.json", rastrigin).run()
    assert [h.W for h in resumed.history] == [h.W for h in full.history]
    assert np.array_equal(resumed.best_Z, full.best_Z)


def test_history_csv(tmp_path):
    r = anneal(DesignVector(Z2, BOX), AnnealConfig(steps=2, moves=3, local_search=False), sphere)
    write_history_csv(r, tmp_path / "a.csv")
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "eval,temperature,W,F_residual,accepted,Z0,Z1,Z2,Z3,Z4"
    assert len(lines) == 7


def test_evaluation_objects_pass_residual_through():
    r = anneal(DesignVector(Z2, BOX), AnnealConfig(steps=1, moves=2, local_search=False),
               lambda Z: Evaluation(sphere(Z), F=0.5))
    assert all(h.F == 0.5 for h in r.history)


@pytest.fixture(scope="module")
def small_case():
    g = classify_points(build_base_surface(BaseSurfaceSpec(nu=9, nv=9, jitter=0.02, seed=0)), CASE1)
    return g, layout_nodes(CASE1.supports, 9, 9)


def test_first_evaluation_matches_standalone_pipeline(small_case):
    g, sup = small_case
    settings = NlpSettings(max_iter=300)
    ev = DesignEvaluator(g, sup, nlp_settings=settings)
    out = evaluate_design(g.z[g.design_indices()], ev)
    ll = solve_lower_level(g, DevObjectiveConfig(), settings=settings)
    W = assemble_and_solve(model_from_grid(ll.grid, sup)).W
    assert out.ok and out.W == W and out.F == ll.F


def test_identical_state_gives_identical_result(small_case):
    g, sup = small_case
    Z = g.z[g.design_indices()] + 0.3
    a = DesignEvaluator(g, sup, nlp_settings=NlpSettings(max_iter=200)).evaluate(Z)
    b = DesignEvaluator(g, sup, nlp_settings=NlpSettings(max_iter=200)).evaluate(Z)
    assert a.W == b.W


def test_bound_corner_design_is_evaluated(small_case):
    g, sup = small_case
    dv = DesignVector.from_grid(g)
    ev = DesignEvaluator(g, sup, nlp_settings=NlpSettings(max_iter=200))
    out = ev.evaluate(dv.bounds.upper)
    assert out.ok and math.isfinite(out.W)
    assert ev.lower_bounds.contains(out.grid.z[g.lower_level_variables()])
    assert np.array_equal(out.grid.z[g.design_indices()], dv.bounds.upper)


def test_failed_lower_level_maps_to_sentinel(small_case):
    g, sup = small_case
    ev = DesignEvaluator(g, sup[:1], nlp_settings=NlpSettings(max_iter=20))
    out = ev.evaluate(g.z[g.design_indices()])
    assert not out.ok and out.W == math.inf and ev.warm is None
