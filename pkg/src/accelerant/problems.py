"""Benchmark problem generators: series, linear iterations, a nonlinear
reaction-diffusion system, a Fredholm integral equation, PageRank, and
synthetic ill-posed spectral models.

Every generator is pure given its arguments (and seed, where one
applies); the returned iteration maps are reentrant, so independent runs
may share them across threads.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import SequenceWindow
from .driver import FixedPointProblem
from .illposed import SvdModel

__all__ = [
    "PROBLEM_NAMES",
    "SERIES_NAMES",
    "LinearIteration",
    "SparseGraph",
    "FredholmDiscretization",
    "series_generator",
    "linear_iteration_generator",
    "reaction_diffusion",
    "fredholm",
    "pagerank",
    "clustered_graph",
    "load_edge_list",
    "illposed_synthetic",
]

# Selection strings understood by the command-line layer.
PROBLEM_NAMES = ("log2", "leibniz", "logseq", "geom", "linear", "pde",
                 "fredholm", "pagerank", "illposed")

SERIES_NAMES = ("log2", "leibniz_pi", "logarithmic", "geometric_mixture")


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class LinearIteration:
    """An affine iteration s_{j+1} = B s_j + offset with known solution."""

    matrix: np.ndarray
    offset: np.ndarray
    solution: Optional[np.ndarray]
    spectral_radius_estimate: float

    def __post_init__(self) -> None:
        matrix = np.array(self.matrix, dtype=float)
        offset = np.array(self.offset, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("matrix must be square")
        if offset.shape != (matrix.shape[0],):
            raise ValueError("offset length must match the matrix dimension")
        matrix.setflags(write=False)
        offset.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "offset", offset)
        if self.solution is not None:
            solution = np.array(self.solution, dtype=float)
            if solution.shape != offset.shape:
                raise ValueError("solution length must match the dimension")
            solution.setflags(write=False)
            object.__setattr__(self, "solution", solution)

    @property
    def dimension(self) -> int:
        return int(self.matrix.shape[0])

    def step(self, state: np.ndarray) -> np.ndarray:
        """One application of the iteration map."""
        return self.matrix @ np.asarray(state, dtype=float) + self.offset

    def as_fixed_point(self, initial_guess=None) -> FixedPointProblem:
        """Package the iteration for the cycle driver (default start: 0)."""
        start = (np.zeros(self.dimension) if initial_guess is None
                 else initial_guess)
        return FixedPointProblem(dimension=self.dimension, mapping=self.step,
                                 initial_guess=start, solution=self.solution)


@dataclass(frozen=True)
class SparseGraph:
    """A directed graph as out-edge lists over node ids 0 .. N-1.

    ``original_ids`` maps each compact id back to the label it carried in
    the source data (identity for programmatically built graphs).
    """

    node_count: int
    out_edges: tuple[tuple[int, ...], ...]
    original_ids: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.node_count < 1:
            raise ValueError("graph needs at least one node")
        if len(self.out_edges) != self.node_count:
            raise ValueError("one out-edge list per node is required")
        if len(self.original_ids) != self.node_count:
            raise ValueError("one original id per node is required")
        for targets in self.out_edges:
            for node in targets:
                if not 0 <= node < self.node_count:
                    raise ValueError(f"edge target {node} out of range")

    @property
    def out_degrees(self) -> np.ndarray:
        return np.array([len(t) for t in self.out_edges], dtype=int)

    @property
    def edge_count(self) -> int:
        return sum(len(t) for t in self.out_edges)

    @classmethod
    def from_edges(cls, node_count: int,
                   edges: Sequence[tuple[int, int]]) -> "SparseGraph":
        lists: list[list[int]] = [[] for _ in range(node_count)]
        for src, dst in edges:
            if not (0 <= src < node_count and 0 <= dst < node_count):
                raise ValueError(f"edge ({src}, {dst}) out of range")
            lists[src].append(dst)
        return cls(node_count=node_count,
                   out_edges=tuple(tuple(t) for t in lists),
                   original_ids=tuple(range(node_count)))


@dataclass(frozen=True)
class FredholmDiscretization:
    """Trapezoid discretization of a second-kind integral equation.

    ``kernel_matrix`` holds plain kernel samples K(x_i, x_j); the
    iteration applies them with the quadrature weights folded in, so the
    discrete operator is ``kernel_matrix * weights`` acting on samples.
    """

    nodes: np.ndarray
    weights: np.ndarray
    kernel_matrix: np.ndarray
    coupling: float
    source: np.ndarray

    def __post_init__(self) -> None:
        nodes = np.array(self.nodes, dtype=float)
        weights = np.array(self.weights, dtype=float)
        kernel = np.array(self.kernel_matrix, dtype=float)
        source = np.array(self.source, dtype=float)
        n = nodes.size
        if n < 2:
            raise ValueError("at least two nodes are required")
        if weights.shape != (n,) or source.shape != (n,):
            raise ValueError("weights and source must match the node count")
        if kernel.shape != (n, n):
            raise ValueError("kernel matrix must be square over the nodes")
        spacing = 1.0 / (n - 1)
        expected = np.full(n, spacing)
        expected[0] = expected[-1] = spacing / 2.0
        if not np.allclose(weights, expected, rtol=0.0, atol=1e-12):
            raise ValueError("weights must be the composite trapezoid rule")
        for arr in (nodes, weights, kernel, source):
            arr.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "kernel_matrix", kernel)
        object.__setattr__(self, "source", source)

    @property
    def size(self) -> int:
        return int(self.nodes.size)

    def operator_matrix(self) -> np.ndarray:
        """Dense quadrature operator (kernel columns scaled by weights)."""
        return self.kernel_matrix * self.weights

    def as_fixed_point(self) -> FixedPointProblem:
        """Picard map u -> source + coupling * (operator u), started at source."""
        weighted = self.operator_matrix()
        coupling = self.coupling

        def apply_map(u: np.ndarray) -> np.ndarray:
            return self.source + coupling * (weighted @ u)

        return FixedPointProblem(dimension=self.size, mapping=apply_map,
                                 initial_guess=self.source)


# ---------------------------------------------------------------------------
# scalar series


def series_generator(name: str, count: int, limit: float = 0.0,
                     modes: Sequence[tuple[float, float]] = ((1.0, 0.5),)
                     ) -> SequenceWindow:
    """Classic scalar test sequences as a window of partial terms.

    ``log2`` and ``leibniz_pi`` are alternating-series partial sums with
    limits ln 2 and pi; ``logarithmic`` converges like 1/n to ``limit``;
    ``geometric_mixture`` is limit + sum of c * ratio^n over the supplied
    ``(coefficient, ratio)`` modes, the model sequence the polynomial
    methods terminate on.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if name == "log2":
        terms = np.array([(-1.0) ** m / (m + 1) for m in range(count)])
        values = np.cumsum(terms)
    elif name == "leibniz_pi":
        terms = np.array([4.0 * (-1.0) ** m / (2 * m + 1)
                          for m in range(count)])
        values = np.cumsum(terms)
    elif name == "logarithmic":
        values = limit + 1.0 / (np.arange(count) + 1.0)
    elif name == "geometric_mixture":
        if not modes:
            raise ValueError("geometric_mixture needs at least one mode")
        n = np.arange(count)
        values = np.full(count, float(limit))
        for coefficient, ratio in modes:
            values = values + coefficient * np.power(float(ratio), n)
    else:
        raise ValueError(f"unknown series name: {name!r}")
    return SequenceWindow(values)


# ---------------------------------------------------------------------------
# linear iterations


def _power_iteration_estimate(matrix: np.ndarray, start: np.ndarray,
                              steps: int = 100) -> float:
    """Dominant-eigenvalue magnitude estimate after a fixed step count."""
    vec = start / np.linalg.norm(start)
    growth = 0.0
    for _ in range(steps):
        nxt = matrix @ vec
        growth = float(np.linalg.norm(nxt))
        if growth == 0.0:
            return 0.0
        vec = nxt / growth
    return growth


def linear_iteration_generator(n: int, spectral_radius: float,
                               seed: int) -> LinearIteration:
    """Random affine iteration scaled to a prescribed spectral radius.

    The scaling normalizes a Gaussian matrix by a 100-step power-iteration
    estimate of its dominant eigenvalue magnitude, then the offset is
    chosen so a random point is the exact fixed point.  Deterministic
    under ``seed``.
    """
    if not 0.0 < spectral_radius < 1.0:
        raise ValueError("spectral_radius must lie in (0, 1)")
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((n, n))
    estimate = _power_iteration_estimate(raw, rng.standard_normal(n))
    if estimate == 0.0:
        raise ValueError("degenerate random matrix (zero spectral estimate)")
    matrix = (spectral_radius / estimate) * raw
    solution = rng.standard_normal(n)
    offset = solution - matrix @ solution
    return LinearIteration(matrix=matrix, offset=offset, solution=solution,
                           spectral_radius_estimate=spectral_radius)


# ---------------------------------------------------------------------------
# reaction-diffusion fixed point


def laplacian_apply(grid_values: np.ndarray, p_grid: int,
                    spacing: float) -> np.ndarray:
    """Five-point Laplacian on the interior of a uniform square grid.

    Input and output are flattened p x p interior samples; the boundary
    is held at zero.
    """
    g = np.asarray(grid_values, dtype=float).reshape(p_grid, p_grid)
    padded = np.pad(g, 1)
    lap = (4.0 * g
           - padded[:-2, 1:-1] - padded[2:, 1:-1]
           - padded[1:-1, :-2] - padded[1:-1, 2:]) / (spacing * spacing)
    return lap.ravel()


def reaction_diffusion(p_grid: int) -> FixedPointProblem:
    """Damped-residual iteration for -lap(u) + u^3 = f on the unit square.

    The source is manufactured so u(x, y) = sin(pi x) sin(pi y), sampled
    on the interior grid, solves the discrete system exactly.  The map is
    G(u) = u + omega * (b - A u - u^3) with omega = h^2 / 5, a touch
    under the h^2/4 stability bound for the five-point stencil, which
    makes G a (slow) contraction near the solution — the regime the cycle
    driver is meant to accelerate.  The Laplacian is applied matrix-free.
    """
    if p_grid < 3:
        raise ValueError("p_grid must be at least 3")
    spacing = 1.0 / (p_grid + 1)
    coords = spacing * np.arange(1, p_grid + 1)
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    exact = (np.sin(np.pi * xx) * np.sin(np.pi * yy)).ravel()
    rhs = laplacian_apply(exact, p_grid, spacing) + exact ** 3
    omega = spacing * spacing / 5.0

    def apply_map(u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        residual = rhs - laplacian_apply(u, p_grid, spacing) - u ** 3
        return u + omega * residual

    return FixedPointProblem(dimension=p_grid * p_grid, mapping=apply_map,
                             initial_guess=np.zeros(p_grid * p_grid),
                             solution=exact)


# ---------------------------------------------------------------------------
# Fredholm integral equation


def _default_kernel(x: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.exp(-np.abs(x - t))


def _default_source(x: np.ndarray) -> np.ndarray:
    return np.sin(np.pi * x)


def fredholm_discretization(n: int, coupling: float,
                            kernel: Callable = _default_kernel,
                            source: Callable = _default_source
                            ) -> FredholmDiscretization:
    """Trapezoid collocation of u = source + coupling * integral(kernel u)."""
    if n < 2:
        raise ValueError("n must be at least 2")
    nodes = np.linspace(0.0, 1.0, n)
    spacing = nodes[1] - nodes[0]
    weights = np.full(n, spacing)
    weights[0] = weights[-1] = spacing / 2.0
    kernel_matrix = kernel(nodes[:, None], nodes[None, :])
    disc = FredholmDiscretization(nodes=nodes, weights=weights,
                                  kernel_matrix=kernel_matrix,
                                  coupling=coupling, source=source(nodes))
    operator_norm = float(np.linalg.norm(disc.operator_matrix(), np.inf))
    if abs(coupling) * operator_norm >= 1.0:
        warnings.warn(
            "coupling * operator norm = "
            f"{abs(coupling) * operator_norm:.3f} >= 1: the Picard "
            "iteration may not contract", stacklevel=2)
    return disc


def fredholm(n: int, coupling: float,
             kernel: Callable = _default_kernel,
             source: Callable = _default_source) -> FixedPointProblem:
    """Picard iteration for a second-kind integral equation on [0, 1].

    Defaults reproduce the exponential-kernel benchmark: kernel
    exp(-|x - t|), source sin(pi x), started at the source samples (so
    plain iteration generates the partial sums of the series expansion
    in powers of the coupling).
    """
    return fredholm_discretization(n, coupling, kernel, source).as_fixed_point()


# ---------------------------------------------------------------------------
# PageRank


def pagerank(graph: SparseGraph, alpha: float = 0.85,
             personalization=None) -> FixedPointProblem:
    """Damped random-surfer iteration x -> alpha P x + (1 - alpha) v.

    P is the column-stochastic transition matrix of the graph; columns of
    dangling nodes (no out-edges) are replaced by the personalization
    vector v, and every iterate is renormalized to sum exactly one.  The
    map is applied edge-wise, so the dense matrix is never formed.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    n = graph.node_count
    if personalization is None:
        v = np.full(n, 1.0 / n)
    else:
        v = np.array(personalization, dtype=float)
        if v.shape != (n,) or np.any(v < 0.0):
            raise ValueError("personalization must be a nonnegative N-vector")
        total = v.sum()
        if total <= 0.0:
            raise ValueError("personalization must have positive mass")
        v = v / total
    v.setflags(write=False)

    degrees = graph.out_degrees
    sources = np.concatenate([
        np.full(len(targets), node, dtype=int)
        for node, targets in enumerate(graph.out_edges)
    ]) if graph.edge_count else np.empty(0, dtype=int)
    targets = np.concatenate([
        np.array(t, dtype=int) for t in graph.out_edges if t
    ]) if graph.edge_count else np.empty(0, dtype=int)
    inverse_degree = np.zeros(n)
    linked = degrees > 0
    inverse_degree[linked] = 1.0 / degrees[linked]
    dangling = ~linked

    def apply_map(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        spread = np.zeros(n)
        if sources.size:
            np.add.at(spread, targets, x[sources] * inverse_degree[sources])
        dangling_mass = float(x[dangling].sum())
        nxt = alpha * (spread + dangling_mass * v) + (1.0 - alpha) * v
        return nxt / nxt.sum()

    return FixedPointProblem(dimension=n, mapping=apply_map, initial_guess=v)


def clustered_graph(n: int, avg_deg: int, seed: int) -> SparseGraph:
    """Random two-community digraph with sparse links between communities.

    Nodes split 60/40 into two clusters.  Every node draws ``avg_deg``
    uniform targets inside its own cluster, except that each fourth node
    trades one of them for a single cross-cluster edge.  The weak coupling
    leaves a slowly mixing mode, so the induced random-surfer iteration
    takes many steps to equilibrate between the communities -- a useful
    stress case for acceleration.  Out-degrees are exactly ``avg_deg``;
    repeated targets (parallel edges) are allowed and weighted accordingly.
    """
    if n < 4:
        raise ValueError("clustered graphs need at least 4 nodes")
    if avg_deg < 2:
        raise ValueError("avg_deg must be at least 2")
    rng = np.random.default_rng(seed)
    split = (6 * n) // 10
    bounds = ((0, split), (split, n))
    out = []
    for i in range(n):
        c = 0 if i < split else 1
        lo, hi = bounds[c]
        if i % 4 == 0:
            targets = np.concatenate([rng.integers(lo, hi, size=avg_deg - 1),
                                      rng.integers(*bounds[1 - c], size=1)])
        else:
            targets = rng.integers(lo, hi, size=avg_deg)
        out.append(tuple(int(t) for t in targets))
    return SparseGraph(node_count=n, out_edges=tuple(out),
                       original_ids=tuple(range(n)))


def load_edge_list(path) -> SparseGraph:
    """Read a whitespace-separated "src dst" edge file into a graph.

    Lines starting with '#' are comments (SNAP convention).  Node labels
    are arbitrary integers and get compacted onto 0 .. N-1 in sorted
    order; the original labels are retained on the graph.
    """
    edges: list[tuple[int, int]] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if len(parts) != 2:
                raise ValueError(
                    f"{path}: line {line_number}: expected 'src dst', "
                    f"got {stripped!r}")
            try:
                src, dst = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise ValueError(
                    f"{path}: line {line_number}: non-integer node id in "
                    f"{stripped!r}") from exc
            edges.append((src, dst))
    if not edges:
        raise ValueError(f"{path}: no edges found (empty graph)")
    labels = sorted({node for edge in edges for node in edge})
    compact = {label: index for index, label in enumerate(labels)}
    lists: list[list[int]] = [[] for _ in labels]
    for src, dst in edges:
        lists[compact[src]].append(compact[dst])
    return SparseGraph(node_count=len(labels),
                       out_edges=tuple(tuple(t) for t in lists),
                       original_ids=tuple(labels))


# ---------------------------------------------------------------------------
# synthetic ill-posed models


def illposed_synthetic(n: int, decay: float, noise_level: float,
                       seed: int) -> SvdModel:
    """Spectral model with prescribed singular decay and white noise.

    Singular values fall like exp(-decay * j); the exact solution has
    smooth coefficients 1/j against the right singular vectors; the
    observed right-hand side adds a random direction scaled to the given
    relative noise level.  Orthonormal bases come from QR factorizations
    of seeded Gaussian matrices, so the model is deterministic per seed.
    """
    if decay <= 0.0:
        raise ValueError("decay must be positive")
    if noise_level < 0.0:
        raise ValueError("noise_level must be nonnegative")
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    u = np.linalg.qr(rng.standard_normal((n, n)))[0]
    v = np.linalg.qr(rng.standard_normal((n, n)))[0]
    j = np.arange(1, n + 1)
    sigma = np.exp(-decay * j)
    solution_coeffs = 1.0 / j
    clean = u @ (sigma * solution_coeffs)
    direction = rng.standard_normal(n)
    direction /= np.linalg.norm(direction)
    rhs = clean + noise_level * np.linalg.norm(clean) * direction
    return SvdModel(u=u, sigma=sigma, v=v, rhs=rhs, clean_rhs=clean,
                    noise_level=noise_level)
