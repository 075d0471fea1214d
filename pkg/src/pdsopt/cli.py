"""Command-line entry point.

Verbs: ``run`` (full pipeline), ``analyze`` (shell analysis of a grid file),
``devcheck`` (Gauss-map report of a grid file) and ``resume``. Exit codes are
0 on success, 2 for configuration errors and 3 for numerical failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path

import numpy as np

from . import devmap
from ._accel import set_threads
from .config import CaseConfig, default_config, load_config
from .errors import ConfigError, NumericalError
from .fem import assemble_and_solve, model_from_grid, write_moments_csv
from .grid import PRESETS, layout_nodes, load_grid, load_layout
from .pipeline import report_summary, resume_pipeline, run_pipeline
from .vtk import write_vtk

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _grid_size(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", text)
    if not m:
        raise argparse.ArgumentTypeError(f"expected NUxNV, got {text!r}")
    return int(m.group(1)), int(m.group(2))


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--case", help="case preset (case1, case2) or layout file")
    p.add_argument("--config", help="YAML configuration file")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--c", type=float, dest="c", help="filter sharpness")
    p.add_argument("--grid", type=_grid_size, help="grid resolution NUxNV")
    p.add_argument("--threads", type=int, help="numba worker threads")
    p.add_argument("--out", help="output directory")
    p.add_argument("--triangulate", action="store_true", help="write triangles instead of quads to OBJ")
    p.add_argument("-v", "--verbose", action="store_true")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pdsopt", description="Shape optimization of piecewise developable shells.")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    p = sub.add_parser("run", help="run the full pipeline")
    _common(p)
    p.add_argument("--skip-anneal", action="store_true", help="stop after the developable surface")
    for verb, what in (("analyze", "shell analysis"), ("devcheck", "Gauss-map report")):
        p = sub.add_parser(verb, help=f"{what} of a grid file")
        p.add_argument("grid_file")
        _common(p)
    p = sub.add_parser("resume", help="continue an interrupted run")
    p.add_argument("--out", required=True, help="directory of the run to resume")
    p.add_argument("--triangulate", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def config_from_args(args) -> CaseConfig:
    if args.config:
        cfg = load_config(args.config)
        if args.case and args.case != cfg.case:
            cfg = cfg.replace(case=args.case)
    else:
        cfg = default_config(args.case or "case1")
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.c is not None:
        changes["objective__c"] = args.c
    if args.grid is not None:
        changes["surface__nu"], changes["surface__nv"] = args.grid
    if args.threads is not None:
        changes["threads"] = args.threads
    if args.out is not None:
        changes["out"] = args.out
    return cfg.replace(**changes).validate() if changes else cfg.validate()


def _support_nodes(args, cfg: CaseConfig, grid) -> np.ndarray:
    case = args.case or cfg.case
    preset = PRESETS[case] if case in PRESETS else load_layout(case)
    nodes = layout_nodes(preset.supports, grid.nu, grid.nv)
    if nodes.size == 0:
        raise ConfigError(f"case {case!r} defines no supports")
    return nodes


def _cmd_run(args) -> int:
    cfg = config_from_args(args)
    arts = run_pipeline(cfg, skip_anneal=args.skip_anneal, triangulate=args.triangulate)
    print(report_summary(arts.summary))
    return EXIT_OK


def _cmd_resume(args) -> int:
    arts = resume_pipeline(args.out, triangulate=args.triangulate)
    print(report_summary(arts.summary))
    return EXIT_OK


def _cmd_analyze(args) -> int:
    cfg = config_from_args(args)
    set_threads(cfg.threads)
    grid = load_grid(args.grid_file)
    m = cfg.material
    res = assemble_and_solve(model_from_grid(grid, _support_nodes(args, cfg, grid), cfg.shell_material(), m.q, m.load_per))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.grid_file).name.split(".")[0]
    write_moments_csv(res, out / f"{stem}_moments.csv")
    write_vtk(grid, out / f"{stem}_fem.vtk", point_vectors={"displacement": res.u[:, :3]},
              cell_scalars={"M_max": res.M_max})
    print(json.dumps({"W": res.W, "max_M": float(np.max(np.abs(res.M_max)))}))
    return EXIT_OK


def _cmd_devcheck(args) -> int:
    cfg = config_from_args(args)
    grid = load_grid(args.grid_file)
    rep = devmap.gauss_map_report(grid, cfg.dev_config())
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.grid_file).name.split(".")[0]
    devmap.write_report_csv(rep, grid, out / f"{stem}_gaussmap.csv")
    write_vtk(grid, out / f"{stem}_gaussmap.vtk", point_scalars={"sqrt_A": devmap.point_field(rep, grid)})
    r = rep.sqrt_A[rep.in_set]
    print(json.dumps({
        "F": rep.objective,
        "c": cfg.objective.c,
        "max_sqrt_A": float(r.max()) if r.size else 0.0,
        "median_sqrt_A": float(np.median(r)) if r.size else 0.0,
        "developable_fraction": devmap.developable_fraction(rep),
        "concentration": devmap.concentration(rep),
    }))
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "resume": _cmd_resume, "analyze": _cmd_analyze, "devcheck": _cmd_devcheck}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors exit 2, --help exits 0
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.verb](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
