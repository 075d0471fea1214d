"""End-to-end run: initial surface, developable surface, and optimized design."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import devmap, nlp
from ._accel import set_threads
from .anneal import Annealer, AnnealResult, DesignEvaluator, DesignVector
from .anneal import write_history_csv as write_anneal_csv
from .config import CaseConfig, dump_config, load_config
from .devmap import GaussMapReport, gauss_map_report
from .errors import ConfigError
from .fem import FemResult, assemble_and_solve, model_from_grid, write_moments_csv
from .grid import GridSurface, build_base_surface, classify_points, layout_nodes, load_grid, save_grid, save_obj
from .nlp import BoundsSpec, lower_level_bounds, solve_lower_level
from .vtk import write_vtk

log = logging.getLogger(__name__)

STAGES = ("initial", "pds", "optimal")
DEV_THRESHOLD = 1e-4
CHECKPOINT = "anneal_checkpoint.json"


@dataclass
class StageAnalysis:
    grid: GridSurface
    report: GaussMapReport
    fem: FemResult

    def stats(self, c: float) -> dict:
        r = self.report.sqrt_A[self.report.in_set]
        return {
            "W": self.fem.W,
            "F": self.report.objective,
            "c": c,
            "max_sqrt_A": float(r.max()) if r.size else 0.0,
            "median_sqrt_A": float(np.median(r)) if r.size else 0.0,
            "count_above_threshold": int(np.sum(r >= DEV_THRESHOLD)),
            "developable_fraction": devmap.developable_fraction(self.report, DEV_THRESHOLD),
            "concentration": devmap.concentration(self.report),
            "max_M": float(np.max(np.abs(self.fem.M_max))) if len(self.fem.M_max) else 0.0,
        }


@dataclass
class RunArtifacts:
    out: Path
    summary: dict
    timings: dict = field(default_factory=dict)
    stages: dict = field(default_factory=dict)  # name -> StageAnalysis
    anneal: AnnealResult | None = None

    def compliance_triple(self) -> tuple:
        return tuple(self.summary.get(s, {}).get("W") for s in STAGES)


def analyze(grid: GridSurface, config: CaseConfig, support_nodes) -> StageAnalysis:
    rep = gauss_map_report(grid, config.dev_config())
    m = config.material
    fem = assemble_and_solve(model_from_grid(grid, support_nodes, config.shell_material(), m.q, m.load_per))
    return StageAnalysis(grid, rep, fem)


def export_stage(name: str, st: StageAnalysis, out: Path, triangulate: bool = False) -> None:
    save_grid(st.grid, out / f"{name}.grid.txt")
    save_obj(st.grid, out / f"{name}.obj", triangulate=triangulate)
    devmap.write_report_csv(st.report, st.grid, out / f"{name}_gaussmap.csv")
    write_moments_csv(st.fem, out / f"{name}_moments.csv")
    write_vtk(st.grid, out / f"{name}_gaussmap.vtk", point_scalars={"sqrt_A": devmap.point_field(st.report, st.grid)},
              title=f"{name} local Gauss map area")
    write_vtk(st.grid, out / f"{name}_fem.vtk", point_vectors={"displacement": st.fem.u[:, :3]},
              cell_scalars={"M_max": st.fem.M_max}, title=f"{name} displacement and maximum bending moment")


def _supports(grid: GridSurface, config: CaseConfig) -> np.ndarray:
    nodes = layout_nodes(config.layout().supports, grid.nu, grid.nv)
    if nodes.size == 0:
        raise ConfigError("the case layout defines no supports")
    return nodes


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def initial_grid(config: CaseConfig) -> GridSurface:
    return classify_points(build_base_surface(config.surface_spec()), config.layout())


def run_pipeline(config: CaseConfig, skip_anneal: bool = False, triangulate: bool = False,
                 resume: bool = False) -> RunArtifacts:
    """Run the three stages and write every artifact under ``config.out``.

    With ``resume`` the first two stages are reloaded from their exported grids
    and the annealing continues from its last checkpoint.
    """
    config.validate()
    set_threads(config.threads)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(config, out / "config.yaml")
    summary = {"case": config.case, "seed": config.seed, "c": config.objective.c}
    timings = {}
    arts = RunArtifacts(out, summary, timings)
    c = config.objective.c

    # stage 1: initial surface
    t = time.perf_counter()
    grid0 = initial_grid(config)
    supports = _supports(grid0, config)
    s1 = analyze(grid0, config, supports)
    if not (resume and (out / "initial.grid.txt").is_file()):
        export_stage("initial", s1, out, triangulate)
    arts.stages["initial"] = s1
    summary["initial"] = s1.stats(c)
    timings["initial"] = time.perf_counter() - t

    # stage 2: developable surface
    t = time.perf_counter()
    pds_file = out / "pds.grid.txt"
    if resume and pds_file.is_file():
        pds_grid = load_grid(pds_file)
        ll_status = "reloaded"
    else:
        ll = solve_lower_level(grid0, config.dev_config(), lower_level_bounds(grid0, config.bounds.lower_half_range),
                               config.nlp_settings())
        nlp.write_history_csv(ll.nlp, out / "pds_nlp_history.csv")
        pds_grid, ll_status = ll.grid, ll.nlp.status
    s2 = analyze(pds_grid, config, supports)
    if ll_status != "reloaded":
        export_stage("pds", s2, out, triangulate)
    arts.stages["pds"] = s2
    summary["pds"] = {**s2.stats(c), "nlp_status": ll_status}
    timings["pds"] = time.perf_counter() - t

    if skip_anneal:
        _write_json(out / "summary.json", summary)
        _write_json(out / "timings.json", timings)
        return arts

    # stage 3: annealing over the design heights
    t = time.perf_counter()
    evaluator = DesignEvaluator(grid0, supports, config.dev_config(), config.nlp_settings(),
                                config.shell_material(), config.material.q, config.material.load_per,
                                lower_level_bounds(grid0, config.bounds.lower_half_range))
    design = DesignVector.from_grid(grid0, config.bounds.upper_half_range)
    ck = out / CHECKPOINT
    if resume and ck.is_file():
        annealer = Annealer.restore(ck, evaluator)
    else:
        annealer = Annealer(design, config.anneal_config(), evaluator, ck)
    result = annealer.run()
    write_anneal_csv(result, out / "anneal_history.csv")
    best = evaluator.best_grid()
    if best is None:
        best = pds_grid  # every evaluation failed; the developable start is the best known shape
    s3 = analyze(best, config, supports)
    export_stage("optimal", s3, out, triangulate)
    arts.stages["optimal"] = s3
    arts.anneal = result
    summary["optimal"] = {**s3.stats(c), "Z": result.best_Z.tolist(), "evaluations": result.n_evaluations,
                          "T0": result.T0}
    timings["optimal"] = time.perf_counter() - t
    _write_json(out / "summary.json", summary)
    _write_json(out / "timings.json", timings)
    return arts


def resume_pipeline(out: str | Path, triangulate: bool = False) -> RunArtifacts:
    out = Path(out)
    cfg_file = out / "config.yaml"
    if not cfg_file.is_file():
        raise ConfigError(f"{out} holds no run to resume (missing config.yaml)")
    config = load_config(cfg_file)
    return run_pipeline(config.replace(out=str(out)), triangulate=triangulate, resume=True)


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "n/a"
    return f"{x:#.4g}"


def report_summary(summary: dict) -> str:
    """Human-readable table of a run summary; missing stages show as ``n/a``."""
    W = [summary.get(s, {}).get("W") for s in STAGES]
    lines = [f"compliance: {' → '.join(_fmt(w) for w in W)} kNm"]
    if "c" in summary:
        lines.append(f"filter sharpness c = {summary['c']:g}")
    lines.append(f"{'stage':<9}{'W [kNm]':>12}{'F':>12}{'max sqrtA':>12}{'med sqrtA':>12}"
                 f"{'n>1e-4':>8}{'dev frac':>10}{'conc':>8}")
    for s in STAGES:
        d = summary.get(s)
        if not d:
            lines.append(f"{s:<9}{'n/a':>12}")
            continue
        lines.append(
            f"{s:<9}{_fmt(d.get('W')):>12}{_fmt(d.get('F')):>12}{_fmt(d.get('max_sqrt_A')):>12}"
            f"{_fmt(d.get('median_sqrt_A')):>12}{d.get('count_above_threshold', 'n/a'):>8}"
            f"{_fmt(d.get('developable_fraction')):>10}{_fmt(d.get('concentration')):>8}"
        )
    return "\n".join(lines)
