"""Restarted acceleration cycles around fixed-point iterations.

The driver wraps a fixed-point map u -> G(u) and repeatedly (i) runs a few
plain iterations, (ii) collects a short window of consecutive iterates,
(iii) collapses the window with one of the sequence transforms, and
(iv) restarts the iteration from the collapsed point.  Projection-type
transforms (``rre``, ``mpe``, ``mmpe``, ``sbeta``, ``h``) consume a window
of ``m + 2`` terms per cycle; lozenge-type transforms (``vea``, ``tea``,
``stea1``, ``stea2``) consume ``2m + 1`` terms.  ``anderson`` runs its own
one-step-per-cycle mixing loop instead of restarting.

Map evaluations are counted exactly: one evaluation establishes the
reference residual at the starting guess (reused as the first stop check
when no warmup runs), each later stop check costs one evaluation, and each
completed cycle adds its warmup and window evaluations on top.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import BreakdownError, SequenceWindow
from .scalar import BasisFamily, NonexistenceError
from .vector import (
    AndersonState,
    VpeMethod,
    anderson_step,
    h_algorithm,
    sbeta,
    stea,
    tea,
    vea,
    vpe_extrapolate,
)

__all__ = [
    "CSV_HEADER",
    "CycleConfig",
    "DivergenceError",
    "FixedPointProblem",
    "METHOD_NAMES",
    "RunReport",
    "convergence_check",
    "run_cycles",
]

PROJECTION_METHODS = ("rre", "mpe", "mmpe", "sbeta", "h")
LOZENGE_METHODS = ("vea", "tea", "stea1", "stea2")
METHOD_NAMES = PROJECTION_METHODS + LOZENGE_METHODS + ("anderson",)

DIVERGENCE_FACTOR = 1e12
CSV_HEADER = "method,N,p,m,tol,cycles,iterations,final_residual,seconds"


class DivergenceError(RuntimeError):
    """The monitored residual outgrew the divergence guard."""


def _freeze(value: np.ndarray, dimension: int, label: str) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != dimension:
        raise ValueError(f"{label} must be a vector of length {dimension}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{label} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FixedPointProblem:
    """A fixed-point problem u = G(u) with a designated starting guess.

    ``mapping`` must accept and return vectors of length ``dimension``.
    ``solution`` is optional and only consulted by tests and reporting
    helpers, never by the driver itself.
    """

    dimension: int
    mapping: Callable[[np.ndarray], np.ndarray]
    initial_guess: np.ndarray
    solution: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        object.__setattr__(self, "initial_guess",
                           _freeze(self.initial_guess, self.dimension,
                                   "initial_guess"))
        if self.solution is not None:
            object.__setattr__(self, "solution",
                               _freeze(self.solution, self.dimension,
                                       "solution"))

    def residual(self, point: np.ndarray) -> np.ndarray:
        """F(u) = G(u) - u at the given point (one map evaluation)."""
        point = np.asarray(point, dtype=float)
        return np.asarray(self.mapping(point), dtype=float) - point


@dataclass(frozen=True)
class CycleConfig:
    """Settings for one accelerated run.

    ``width_m`` is the transform order used inside each cycle and
    ``warmup_p`` the number of plain iterations run before the window is
    collected.  ``test_vectors`` supplies projection columns for the
    ``mmpe``/``sbeta``/``h`` methods (canonical basis columns by default);
    ``weight`` supplies the pairing vector for ``tea``/``stea1``/``stea2``
    (default: the current cycle's residual).  ``depth`` and ``damping``
    configure ``anderson`` only, with ``depth`` falling back to
    ``width_m`` when unset.
    """

    method: str
    width_m: int = 5
    warmup_p: int = 0
    tol: float = 1e-8
    max_cycles: int = 100
    test_vectors: Optional[np.ndarray] = None
    weight: Optional[np.ndarray] = None
    depth: Optional[int] = None
    damping: float = 1.0

    def __post_init__(self):
        name = str(self.method).lower()
        if name not in METHOD_NAMES:
            raise ValueError(f"unknown method {self.method!r}")
        object.__setattr__(self, "method", name)
        if int(self.width_m) < 1:
            raise ValueError("width_m must be at least 1")
        object.__setattr__(self, "width_m", int(self.width_m))
        if int(self.warmup_p) < 0:
            raise ValueError("warmup_p must be nonnegative")
        object.__setattr__(self, "warmup_p", int(self.warmup_p))
        if not float(self.tol) > 0.0:
            raise ValueError("tol must be positive")
        object.__setattr__(self, "tol", float(self.tol))
        if int(self.max_cycles) < 1:
            raise ValueError("max_cycles must be at least 1")
        object.__setattr__(self, "max_cycles", int(self.max_cycles))
        if self.test_vectors is not None:
            tv = np.array(self.test_vectors, dtype=float)
            if tv.ndim != 2 or tv.size == 0 or not np.all(np.isfinite(tv)):
                raise ValueError("test_vectors must be a finite matrix")
            tv.setflags(write=False)
            object.__setattr__(self, "test_vectors", tv)
        if self.weight is not None:
            wv = np.array(self.weight, dtype=float)
            if wv.ndim != 1 or not np.all(np.isfinite(wv)):
                raise ValueError("weight must be a finite vector")
            wv.setflags(write=False)
            object.__setattr__(self, "weight", wv)
        if self.depth is not None:
            if int(self.depth) < 0:
                raise ValueError("depth must be nonnegative")
            object.__setattr__(self, "depth", int(self.depth))
        if not float(self.damping) > 0.0:
            raise ValueError("damping must be positive")
        object.__setattr__(self, "damping", float(self.damping))

    @property
    def inner_terms(self) -> int:
        """Map evaluations spent building one window (1 for anderson)."""
        if self.method in PROJECTION_METHODS:
            return self.width_m + 1
        if self.method in LOZENGE_METHODS:
            return 2 * self.width_m
        return 1


@dataclass(frozen=True)
class RunReport:
    """Outcome of one accelerated run.

    ``residual_history`` holds the relative residual that opened each
    completed cycle; ``final_residual`` is the relative residual measured
    at the stop check that ended the run.
    """

    method: str
    dimension: int
    warmup_p: int
    width_m: int
    tol: float
    cycles: int
    iterations: int
    final_residual: float
    residual_history: tuple[float, ...]
    seconds: float
    reason: str
    fallback_cycles: int = 0

    def __post_init__(self):
        object.__setattr__(self, "residual_history",
                           tuple(float(v) for v in self.residual_history))
        if len(self.residual_history) != self.cycles:
            raise ValueError("one recorded residual per completed cycle")

    def csv_row(self) -> str:
        """Serialize as the row matching CSV_HEADER."""
        return ",".join([
            self.method,
            str(self.dimension),
            str(self.warmup_p),
            str(self.width_m),
            format(self.tol, ".17g"),
            str(self.cycles),
            str(self.iterations),
            format(self.final_residual, ".17g"),
            format(self.seconds, ".6f"),
        ])


def convergence_check(residual_norm: float, initial_norm: float,
                      tol: float) -> bool:
    """True when residual_norm / initial_norm <= tol.

    A zero initial residual means the starting point is already a fixed
    point, so the check reports convergence immediately.
    """
    residual_norm = float(residual_norm)
    initial_norm = float(initial_norm)
    tol = float(tol)
    if residual_norm < 0.0 or initial_norm < 0.0:
        raise ValueError("residual norms must be nonnegative")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if initial_norm == 0.0:
        return True
    return residual_norm <= tol * initial_norm


def _projection_columns(config: CycleConfig, dimension: int) -> np.ndarray:
    k = config.width_m
    if config.test_vectors is not None:
        if config.test_vectors.shape[0] != dimension \
                or config.test_vectors.shape[1] < k:
            raise ValueError(
                f"test_vectors must have {dimension} rows and at least "
                f"{k} columns")
        return np.asarray(config.test_vectors[:, :k])
    if k > dimension:
        raise ValueError("width_m exceeds the space dimension for "
                         "projection columns")
    return np.eye(dimension)[:, :k]


def _extrapolate(config: CycleConfig, seq: list[np.ndarray],
                 residual0: np.ndarray) -> np.ndarray:
    """Collapse one window of iterates; raises on transform breakdown."""
    m = config.width_m
    method = config.method
    if method in ("rre", "mpe"):
        vm = VpeMethod.rre() if method == "rre" else VpeMethod.mpe()
        return vpe_extrapolate(SequenceWindow(seq), vm, m).value
    if method == "mmpe":
        basis = config.test_vectors
        if basis is None:
            basis = _projection_columns(config, seq[0].shape[0])
        return vpe_extrapolate(SequenceWindow(seq), VpeMethod.mmpe(basis),
                               m).value
    if method == "sbeta":
        cols = _projection_columns(config, seq[0].shape[0])
        return sbeta(SequenceWindow(seq),
                     [cols[:, j] for j in range(m)]).value
    if method == "h":
        cols = _projection_columns(config, seq[0].shape[0])
        d1 = [seq[j + 1] - seq[j] for j in range(len(seq) - 1)]
        basis = BasisFamily(lambda i, n: float(cols[:, i - 1] @ d1[n]))
        table = h_algorithm(SequenceWindow(seq[:m + 1]), basis, m)
        return table.get_entry(m, 0)
    weight = config.weight if config.weight is not None else residual0
    if method == "vea":
        return vea(SequenceWindow(seq)).get_entry(2 * m, 0)
    if method == "tea":
        return tea(SequenceWindow(seq), weight, m).value
    variant = 1 if method == "stea1" else 2
    return stea(SequenceWindow(seq), weight, m, variant).value


def run_cycles(problem: FixedPointProblem, config: CycleConfig) -> RunReport:
    """Run restarted acceleration cycles until the stop check passes.

    Stops when the residual norm relative to the starting residual drops
    to ``config.tol``, or after ``config.max_cycles`` cycles.  A transform
    breakdown inside a cycle falls back to the window's last plain iterate
    for that cycle (counted in ``fallback_cycles``); a residual exceeding
    ``DIVERGENCE_FACTOR`` times the starting residual raises
    DivergenceError.
    """
    start_time = time.perf_counter()
    dimension = problem.dimension
    counter = {"evals": 0}

    def apply_map(point: np.ndarray) -> np.ndarray:
        counter["evals"] += 1
        image = np.asarray(problem.mapping(point), dtype=float)
        if image.shape != (dimension,):
            raise ValueError("map output dimension mismatch")
        if not np.all(np.isfinite(image)):
            raise DivergenceError("map produced nonfinite values")
        return image

    def report(cycles: int, final_rel: float, history: list[float],
               reason: str, fallbacks: int) -> RunReport:
        return RunReport(
            method=config.method, dimension=dimension,
            warmup_p=config.warmup_p, width_m=config.width_m,
            tol=config.tol, cycles=cycles, iterations=counter["evals"],
            final_residual=final_rel, residual_history=tuple(history),
            seconds=time.perf_counter() - start_time, reason=reason,
            fallback_cycles=fallbacks)

    current = np.array(problem.initial_guess, dtype=float)
    g_current = apply_map(current)
    reference = float(np.linalg.norm(g_current - current))
    if reference == 0.0:
        return report(0, 0.0, [], "converged", 0)

    if config.method == "anderson":
        return _anderson_run(config, apply_map, current, g_current,
                             reference, report)

    rewarm_each_cycle = config.method in PROJECTION_METHODS
    inner_count = config.inner_terms
    history: list[float] = []
    fallbacks = 0
    cycles = 0
    check_is_fresh = config.warmup_p == 0
    while True:
        if not check_is_fresh:
            if config.warmup_p and (rewarm_each_cycle or cycles == 0):
                for _ in range(config.warmup_p):
                    current = apply_map(current)
            g_current = apply_map(current)
        check_is_fresh = False
        res = float(np.linalg.norm(g_current - current))
        rel = res / reference
        if res > DIVERGENCE_FACTOR * reference:
            raise DivergenceError(
                f"residual grew to {rel:.3e} times the starting residual")
        if convergence_check(res, reference, config.tol):
            reason = "warmup" if cycles == 0 and config.warmup_p > 0 \
                else "converged"
            return report(cycles, rel, history, reason, fallbacks)
        if cycles >= config.max_cycles:
            return report(cycles, rel, history, "max_cycles", fallbacks)
        history.append(rel)

        seq = [current]
        for _ in range(inner_count):
            seq.append(apply_map(seq[-1]))
        try:
            value = _extrapolate(config, seq, g_current - current)
        except (NonexistenceError, BreakdownError, KeyError):
            value = seq[-1]
            fallbacks += 1
        current = np.array(value, dtype=float)
        cycles += 1


def _anderson_run(config: CycleConfig, apply_map, current: np.ndarray,
                  g_current: np.ndarray, reference: float,
                  report) -> RunReport:
    """One mixing step per cycle; the step's own evaluation feeds the check."""
    if config.warmup_p:
        for _ in range(config.warmup_p):
            current = apply_map(current)
        g_current = apply_map(current)
    depth = config.depth if config.depth is not None else config.width_m
    state = AndersonState.start(current, depth=depth, damping=config.damping)
    history: list[float] = []
    cycles = 0
    g = g_current
    while True:
        res = float(np.linalg.norm(g - state.current))
        rel = res / reference
        if res > DIVERGENCE_FACTOR * reference:
            raise DivergenceError(
                f"residual grew to {rel:.3e} times the starting residual")
        if convergence_check(res, reference, config.tol):
            reason = "warmup" if cycles == 0 and config.warmup_p > 0 \
                else "converged"
            return report(cycles, rel, history, reason, 0)
        if cycles >= config.max_cycles:
            return report(cycles, rel, history, "max_cycles", 0)
        history.append(rel)
        _, state = anderson_step(state, g)
        cycles += 1
        g = apply_map(state.current)
