"""Simulated annealing over the design heights (the upper-level search).

Each evaluation imposes the design heights, re-solves the lower-level
developability problem, and analyses the resulting shell. The chain uses the
Metropolis rule with geometric cooling; Gaussian moves shrink with
``sqrt(T / T0)`` and are reflected back into the bounds. A short
pattern-search polish around the best design follows the chain.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .devmap import DevObjectiveConfig
from .errors import ConfigError, PdsError
from .fem import FemResult, ShellMaterial, assemble_and_solve, model_from_grid
from .grid import GridSurface
from .nlp import BoundsSpec, NlpSettings, UPPER_LEVEL_HALF_RANGE, lower_level_bounds, solve_lower_level

log = logging.getLogger(__name__)

WARMUP_SAMPLES = 20
WARMUP_ACCEPTANCE = 0.8


@dataclass(frozen=True)
class DesignVector:
    Z: np.ndarray
    bounds: BoundsSpec

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=np.float64).ravel()
        if Z.shape != self.bounds.lower.shape:
            raise ConfigError("design vector and bounds differ in length")
        if not self.bounds.contains(Z):
            raise ConfigError("design vector lies outside its bounds")
        object.__setattr__(self, "Z", Z)

    @classmethod
    def from_grid(cls, grid: GridSurface, half_range: float = UPPER_LEVEL_HALF_RANGE) -> "DesignVector":
        z2 = grid.z[grid.design_indices()]
        return cls(z2, BoundsSpec.around(z2, half_range))


@dataclass(frozen=True)
class AnnealConfig:
    """Schedule of the annealing chain.

    ``steps * moves`` is the total evaluation budget of the chain, including the
    initial design and the temperature warm-up. ``sigma0`` is the move standard
    deviation at ``T0`` as a fraction of each bound width. ``T0=None`` picks the
    start temperature from a warm-up so that the median uphill step is accepted
    with probability 0.8.
    """

    steps: int = 100
    moves: int = 10
    T0: float | None = None
    alpha: float = 0.95
    sigma0: float = 0.2
    seed: int = 0
    local_search: bool = True
    polish_budget: int = 50
    polish_step: float = 0.05  # initial probe as a fraction of bound width
    polish_min_step: float = 1e-4

    def __post_init__(self):
        if self.steps < 1 or self.moves < 1:
            raise ConfigError("annealing needs at least one step and one move")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"cooling ratio must lie in (0, 1), got {self.alpha}")
        if self.T0 is not None and not self.T0 > 0:
            raise ConfigError("initial temperature must be positive")
        if not self.sigma0 > 0:
            raise ConfigError("sigma0 must be positive")
        if self.polish_budget < 0 or not self.polish_step > 0 or not self.polish_min_step > 0:
            raise ConfigError("invalid polish settings")

    @property
    def budget(self) -> int:
        return self.steps * self.moves


@dataclass(frozen=True)
class Evaluation:
    W: float
    F: float = float("nan")
    ok: bool = True
    message: str = ""


# --------------------------------------------------------------------------
# moves


def reflect(x: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Fold ``x`` back into ``[lower, upper]`` by mirror reflection at the bounds."""
    x = np.asarray(x, dtype=np.float64)
    width = upper - lower
    out = x.copy()
    bad = ((x < lower) | (x > upper)) & (width > 0)
    y = np.mod(x[bad] - lower[bad], 2.0 * width[bad])
    y = np.where(y > width[bad], 2.0 * width[bad] - y, y)
    out[bad] = lower[bad] + y
    return np.clip(out, lower, upper)


def move_sigma(bounds: BoundsSpec, temperature: float, T0: float, sigma0: float) -> np.ndarray:
    return sigma0 * (bounds.upper - bounds.lower) * math.sqrt(max(temperature, 0.0) / T0)


def propose_move(Z, temperature: float, rng: np.random.Generator, bounds: BoundsSpec,
                 T0: float = 1.0, sigma0: float = 0.2) -> np.ndarray:
    """Gaussian step with width ``sigma0 * (ub - lb) * sqrt(T / T0)``, reflected into the box."""
    sigma = move_sigma(bounds, temperature, T0, sigma0)
    step = rng.standard_normal(len(sigma)) * sigma
    return reflect(np.asarray(Z, dtype=np.float64) + step, bounds.lower, bounds.upper)


# --------------------------------------------------------------------------
# structural evaluator


@dataclass
class DesignOutcome:
    W: float
    F: float
    grid: GridSurface | None
    fem: FemResult | None
    ok: bool
    message: str = ""
    nlp_status: str = ""


class DesignEvaluator:
    """Compliance of the developable shape obtained for given design heights.

    The lower level is warm-started from the previous solution with the new
    heights imposed; the very first call (and any call after a failure) starts
    from ``grid``. Failures give ``W = inf`` instead of raising.
    """

    def __init__(self, grid: GridSurface, support_nodes, dev_config: DevObjectiveConfig | None = None,
                 nlp_settings: NlpSettings | None = None, material: ShellMaterial | None = None,
                 q: float = 1.0, load_per: str = "surface", lower_bounds: BoundsSpec | None = None,
                 warm_start: bool = True):
        self.grid = grid
        self.support_nodes = np.asarray(support_nodes, dtype=np.int64)
        self.dev_config = dev_config or DevObjectiveConfig()
        self.nlp_settings = nlp_settings or NlpSettings()
        self.material = material or ShellMaterial()
        self.q = q
        self.load_per = load_per
        self.design = grid.design_indices()
        self.variables = grid.lower_level_variables()
        self.lower_bounds = lower_bounds or lower_level_bounds(grid)
        self.warm_start = warm_start
        self.warm: np.ndarray | None = None
        self.n_calls = 0
        self.best_W = math.inf
        self.best_z: np.ndarray | None = None  # full z of the best shape seen

    def get_state(self) -> dict:
        return {
            "warm": None if self.warm is None else self.warm.tolist(),
            "n_calls": self.n_calls,
            "best_W": _enc(self.best_W),
            "best_z": None if self.best_z is None else self.best_z.tolist(),
        }

    def set_state(self, state: dict) -> None:
        self.warm = None if state.get("warm") is None else np.asarray(state["warm"], dtype=np.float64)
        self.n_calls = int(state.get("n_calls", 0))
        self.best_W = _dec(state.get("best_W", "inf"))
        self.best_z = None if state.get("best_z") is None else np.asarray(state["best_z"], dtype=np.float64)

    def reset(self) -> None:
        self.warm = None

    def best_grid(self) -> GridSurface | None:
        """Shape of the lowest-compliance evaluation so far.

        Because of warm starts the lower-level solution depends on the call
        history, so this shape is kept rather than re-solved from its ``Z``.
        """
        return None if self.best_z is None else self.grid.with_z(self.best_z)

    def shape(self, Z) -> tuple[GridSurface, object]:
        """Solve the lower level for heights ``Z``; raises on failure."""
        base = self.grid.with_z_at(self.design, np.asarray(Z, dtype=np.float64))
        start = self.warm if self.warm_start else None
        ll = solve_lower_level(base, self.dev_config, self.lower_bounds, self.nlp_settings, start_z=start)
        return ll.grid, ll.nlp

    def evaluate(self, Z) -> DesignOutcome:
        self.n_calls += 1
        try:
            shaped, nlp = self.shape(Z)
            result = assemble_and_solve(
                model_from_grid(shaped, self.support_nodes, self.material, self.q, self.load_per)
            )
            W = result.W
            if not math.isfinite(W):
                raise PdsError("compliance is not finite")
        except (PdsError, FloatingPointError, np.linalg.LinAlgError) as exc:
            self.warm = None
            log.info("design evaluation failed: %s", exc)
            return DesignOutcome(math.inf, math.nan, None, None, False, str(exc))
        if self.warm_start:
            self.warm = np.array(shaped.z[self.variables])
        if W < self.best_W:
            self.best_W = W
            self.best_z = np.array(shaped.z)
        return DesignOutcome(W, nlp.f, shaped, result, True, "", nlp.status)

    def __call__(self, Z) -> Evaluation:
        out = self.evaluate(Z)
        return Evaluation(out.W, out.F, out.ok, out.message)


def evaluate_design(Z, evaluator: DesignEvaluator) -> DesignOutcome:
    return evaluator.evaluate(Z)


# --------------------------------------------------------------------------
# annealing chain


@dataclass
class HistoryRow:
    eval: int
    temperature: float
    W: float
    F: float
    accepted: bool
    Z: list
    phase: str  # "init", "warmup", "chain" or "polish"


@dataclass
class AnnealResult:
    best_Z: np.ndarray
    best_W: float
    history: list = field(default_factory=list)
    T0: float = float("nan")

    @property
    def n_evaluations(self) -> int:
        return len(self.history)

    def best_so_far(self) -> np.ndarray:
        return np.minimum.accumulate([h.W for h in self.history])


def _as_evaluation(value) -> Evaluation:
    if isinstance(value, Evaluation):
        return value
    W = float(value)
    return Evaluation(W if not math.isnan(W) else math.inf)


@dataclass
class _State:
    eval: int
    Z: np.ndarray
    W: float
    best_Z: np.ndarray
    best_W: float
    T0: float | None
    warm_dW: list
    history: list
    rng: np.random.Generator
    polish_step: float | None = None
    polish_used: int = 0
    done: bool = False


class Annealer:
    """Resumable annealing run. Call :meth:`run` once, or restore a checkpoint first."""

    def __init__(self, initial: DesignVector, config: AnnealConfig, evaluator: Callable,
                 checkpoint: str | Path | None = None):
        self.initial = initial
        self.bounds = initial.bounds
        self.config = config
        self.evaluator = evaluator
        self.checkpoint = Path(checkpoint) if checkpoint else None
        self.state: _State | None = None

    # evaluation bookkeeping
    def _evaluate(self, Z, temperature, phase) -> Evaluation:
        st = self.state
        if not self.bounds.contains(Z):
            raise AssertionError("proposal left the design bounds")
        ev = _as_evaluation(self.evaluator(Z))
        W = ev.W if math.isfinite(ev.W) else math.inf
        st.history.append(HistoryRow(st.eval, temperature, W, ev.F, False, [float(z) for z in Z], phase))
        st.eval += 1
        if W < st.best_W:
            st.best_W = W
            st.best_Z = np.array(Z)
        return Evaluation(W, ev.F, ev.ok, ev.message)

    def _temperature(self, e: int) -> float:
        return self.state.T0 * self.config.alpha ** (e // self.config.moves)

    def _start(self) -> None:
        Z0 = self.initial.Z.copy()
        self.state = _State(0, Z0, math.inf, Z0.copy(), math.inf, self.config.T0, [], [],
                            np.random.default_rng(self.config.seed))
        first = self._evaluate(Z0, self.config.T0 if self.config.T0 else math.nan, "init")
        self.state.W = first.W
        self.state.history[-1].accepted = True
        self.save()

    def _warmup(self) -> None:
        """Pick T0 from uphill steps around the start; these calls use the chain budget."""
        st, cfg = self.state, self.config
        n = min(WARMUP_SAMPLES, cfg.budget - 1)
        while len(st.warm_dW) < n and st.T0 is None:
            Zp = propose_move(st.Z, 1.0, st.rng, self.bounds, 1.0, cfg.sigma0)
            ev = self._evaluate(Zp, math.nan, "warmup")
            st.warm_dW.append(abs(ev.W - st.W) if math.isfinite(ev.W) and math.isfinite(st.W) else math.nan)
            if st.eval % cfg.moves == 0:
                self.save()
        if st.T0 is None:
            d = np.asarray(st.warm_dW, dtype=np.float64)
            d = d[np.isfinite(d) & (d > 0)]
            st.T0 = float(np.median(d) / -math.log(WARMUP_ACCEPTANCE)) if d.size else 1.0
            for h in st.history:
                if h.phase in ("init", "warmup"):
                    h.temperature = st.T0
        log.info("annealing start temperature T0 = %.6g", st.T0)

    def _chain(self) -> None:
        st, cfg = self.state, self.config
        while st.eval < cfg.budget:
            T = self._temperature(st.eval)
            Zp = propose_move(st.Z, T, st.rng, self.bounds, st.T0, cfg.sigma0)
            ev = self._evaluate(Zp, T, "chain")
            u = st.rng.random()
            if not math.isfinite(ev.W):
                accept = False
            elif not math.isfinite(st.W) or ev.W <= st.W:
                accept = True
            else:
                accept = u < math.exp(-(ev.W - st.W) / T)
            if accept:
                st.Z, st.W = Zp, ev.W
                st.history[-1].accepted = True
            if st.eval % cfg.moves == 0:
                self.save()

    def _polish(self) -> None:
        """Coordinate pattern search around the best design with a halving step."""
        st, cfg = self.state, self.config
        if not cfg.local_search or not math.isfinite(st.best_W):
            return
        width = self.bounds.upper - self.bounds.lower
        if st.polish_step is None:
            st.polish_step = cfg.polish_step
        while st.polish_used < cfg.polish_budget and st.polish_step >= cfg.polish_min_step:
            improved = False
            for k in range(len(st.best_Z)):
                if width[k] == 0:
                    continue
                for sign in (1.0, -1.0):
                    if st.polish_used >= cfg.polish_budget:
                        break
                    Zp = st.best_Z.copy()
                    Zp[k] = np.clip(Zp[k] + sign * st.polish_step * width[k], self.bounds.lower[k], self.bounds.upper[k])
                    if Zp[k] == st.best_Z[k]:
                        continue
                    before = st.best_W
                    self._evaluate(Zp, 0.0, "polish")
                    st.polish_used += 1
                    if st.best_W < before:
                        st.history[-1].accepted = True
                        improved = True
                        break
            if not improved:
                st.polish_step *= 0.5
            self.save()

    def run(self) -> AnnealResult:
        if self.state is None:
            self._start()
        if not self.state.done:
            self._warmup()
            self._chain()
            self._polish()
            self.state.done = True
            self.save()
        st = self.state
        return AnnealResult(st.best_Z.copy(), st.best_W, list(st.history), st.T0)

    # checkpointing
    def _state_dict(self) -> dict:
        st = self.state
        ev_state = self.evaluator.get_state() if hasattr(self.evaluator, "get_state") else None
        return {
            "config": asdict(self.config),
            "initial_Z": self.initial.Z.tolist(),
            "lower": self.bounds.lower.tolist(),
            "upper": self.bounds.upper.tolist(),
            "eval": st.eval,
            "Z": st.Z.tolist(),
            "W": _enc(st.W),
            "best_Z": st.best_Z.tolist(),
            "best_W": _enc(st.best_W),
            "T0": st.T0,
            "warm_dW": [_enc(x) for x in st.warm_dW],
            "history": [{**asdict(h), "W": _enc(h.W), "F": _enc(h.F), "temperature": _enc(h.temperature)}
                        for h in st.history],
            "rng": st.rng.bit_generator.state,
            "polish_step": st.polish_step,
            "polish_used": st.polish_used,
            "done": st.done,
            "evaluator": ev_state,
        }

    def save(self) -> None:
        if self.checkpoint is None:
            return
        tmp = self.checkpoint.with_suffix(self.checkpoint.suffix + ".tmp")
        tmp.write_text(json.dumps(self._state_dict()))
        tmp.replace(self.checkpoint)

    @classmethod
    def restore(cls, path: str | Path, evaluator: Callable) -> "Annealer":
        data = json.loads(Path(path).read_text())
        config = AnnealConfig(**data["config"])
        bounds = BoundsSpec(data["lower"], data["upper"])
        obj = cls(DesignVector(data["initial_Z"], bounds), config, evaluator, path)
        rng = np.random.default_rng()
        rng.bit_generator.state = data["rng"]
        history = [HistoryRow(**{**h, "W": _dec(h["W"]), "F": _dec(h["F"]), "temperature": _dec(h["temperature"])})
                   for h in data["history"]]
        obj.state = _State(data["eval"], np.asarray(data["Z"]), _dec(data["W"]), np.asarray(data["best_Z"]),
                           _dec(data["best_W"]), data["T0"], [_dec(x) for x in data["warm_dW"]], history, rng,
                           data["polish_step"], data["polish_used"], data["done"])
        if data.get("evaluator") is not None and hasattr(evaluator, "set_state"):
            evaluator.set_state(data["evaluator"])
        return obj


def _enc(x: float):
    """JSON-safe float (inf and nan as strings)."""
    return x if math.isfinite(x) else str(x)


def _dec(x) -> float:
    return float(x)


def anneal(initial: DesignVector, config: AnnealConfig, evaluator: Callable,
           checkpoint: str | Path | None = None) -> AnnealResult:
    """Minimize ``evaluator(Z)`` over the box of ``initial`` by simulated annealing.

    ``evaluator`` returns a float or an :class:`Evaluation`. The chain calls it
    exactly ``config.budget`` times, then at most ``config.polish_budget`` more
    times when ``config.local_search`` is on.
    """
    return Annealer(initial, config, evaluator, checkpoint).run()


def write_history_csv(result: AnnealResult, path: str | Path) -> None:
    n = len(result.history[0].Z) if result.history else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eval", "temperature", "W", "F_residual", "accepted"] + [f"Z{k}" for k in range(n)])
        for h in result.history:
            w.writerow([h.eval, repr(h.temperature), repr(h.W), repr(h.F), int(h.accepted)] + [repr(z) for z in h.Z])
