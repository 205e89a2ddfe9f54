"""Spectral graph machinery and random-topology sampling.

Communication networks are simple undirected graphs on vertices 1..N.  A
topology model is a distribution over graph Laplacians: a fixed graph, a
graph whose links fail independently each iteration, or a pairwise gossip
protocol that activates exactly one link per iteration.  What the
estimator theory needs from the topology is only the algebraic
connectivity (Fiedler value, lambda_2) of the *mean* Laplacian: individual
samples may all be disconnected as long as the expected Laplacian is
connected.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NumericalError

#: eigenvalues above this count as nonzero when deciding connectivity
CONNECTIVITY_TOL = 1e-9

#: tolerance for validating Laplacian structure (row sums, symmetry, PSD)
LAPLACIAN_TOL = 1e-9


def _as_edge(u, v):
    if u == v:
        raise ValueError(f"self-loop ({u}, {v}) is not allowed")
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph with vertices 1..n_vertices."""

    n_vertices: int
    edges: tuple

    def __post_init__(self):
        if self.n_vertices < 1:
            raise ValueError("graph needs at least one vertex")
        canon = []
        seen = set()
        for u, v in self.edges:
            e = _as_edge(int(u), int(v))
            if not (1 <= e[0] <= self.n_vertices and 1 <= e[1] <= self.n_vertices):
                raise ValueError(f"edge {e} has an endpoint outside 1..{self.n_vertices}")
            if e in seen:
                raise ValueError(f"duplicate edge {e}")
            seen.add(e)
            canon.append(e)
        object.__setattr__(self, "edges", tuple(sorted(canon)))

    @property
    def n_edges(self):
        return len(self.edges)

    def edge_array(self):
        """Edges as a 0-indexed (E, 2) int array, for numeric work."""
        if not self.edges:
            return np.zeros((0, 2), dtype=np.int64)
        return np.asarray(self.edges, dtype=np.int64) - 1


def ring_graph(n: int) -> Graph:
    if n < 3:
        raise ValueError("a ring needs at least 3 vertices")
    return Graph(n, tuple((i, i % n + 1) for i in range(1, n + 1)))


def path_graph(n: int) -> Graph:
    return Graph(n, tuple((i, i + 1) for i in range(1, n)))


def complete_graph(n: int) -> Graph:
    return Graph(n, tuple((u, v) for u in range(1, n + 1) for v in range(u + 1, n + 1)))


def erdos_renyi_graph(n: int, p: float, rng: np.random.Generator) -> Graph:
    """Each of the n(n-1)/2 possible edges included independently with probability p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("edge probability must lie in [0, 1]")
    pairs = [(u, v) for u in range(1, n + 1) for v in range(u + 1, n + 1)]
    keep = rng.random(len(pairs)) < p
    return Graph(n, tuple(e for e, k in zip(pairs, keep) if k))


@dataclass(frozen=True)
class Laplacian:
    """Validated graph Laplacian: symmetric, zero row sums, PSD."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("Laplacian must be a square matrix")
        scale = max(1.0, float(np.abs(m).max(initial=0.0)))
        if np.abs(m - m.T).max(initial=0.0) > LAPLACIAN_TOL * scale:
            raise ValueError("Laplacian must be symmetric")
        if np.abs(m.sum(axis=1)).max(initial=0.0) > LAPLACIAN_TOL * scale:
            raise ValueError("Laplacian rows must sum to zero")
        off = m - np.diag(np.diag(m))
        if off.max(initial=0.0) > LAPLACIAN_TOL * scale:
            raise ValueError("Laplacian off-diagonal entries must be non-positive")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def n_vertices(self):
        return self.matrix.shape[0]

    def eigenvalues(self):
        try:
            return np.linalg.eigvalsh(self.matrix)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - eigh rarely fails
            raise NumericalError(f"eigensolver failed on {self.n_vertices}x{self.n_vertices} Laplacian") from exc


def laplacian(g: Graph) -> Laplacian:
    """Degree matrix minus adjacency matrix."""
    m = np.zeros((g.n_vertices, g.n_vertices))
    for u, v in g.edge_array():
        m[u, u] += 1.0
        m[v, v] += 1.0
        m[u, v] -= 1.0
        m[v, u] -= 1.0
    return Laplacian(m)


def _edge_laplacian(n: int, u: int, v: int) -> np.ndarray:
    m = np.zeros((n, n))
    m[u, u] = m[v, v] = 1.0
    m[u, v] = m[v, u] = -1.0
    return m


def fiedler_value(l: Laplacian) -> float:
    """Second-smallest Laplacian eigenvalue (algebraic connectivity), clamped to >= 0."""
    if l.n_vertices < 2:
        return 0.0
    lam2 = float(l.eigenvalues()[1])
    return max(lam2, 0.0)


@dataclass(frozen=True)
class FixedTopology:
    """Degenerate topology distribution: the same Laplacian every iteration."""

    laplacian: Laplacian

    @property
    def n_vertices(self):
        return self.laplacian.n_vertices

    def mean_laplacian(self) -> Laplacian:
        return self.laplacian

    def sample(self, rng: np.random.Generator) -> Laplacian:
        return self.laplacian


@dataclass(frozen=True)
class BernoulliLinkFailure:
    """Each base edge survives a given iteration independently with probability p."""

    base: Graph
    p: float
    _mean: Laplacian = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ValueError("link success probability must lie in (0, 1]")
        object.__setattr__(self, "_mean", Laplacian(self.p * laplacian(self.base).matrix))

    @property
    def n_vertices(self):
        return self.base.n_vertices

    def mean_laplacian(self) -> Laplacian:
        # exact by linearity: E[L] = p * L_base
        return self._mean

    def sample_masks(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """(size, E) uint8 activation masks, one row per iteration."""
        return (rng.random((size, self.base.n_edges)) < self.p).astype(np.uint8)

    def sample(self, rng: np.random.Generator) -> Laplacian:
        mask = self.sample_masks(rng, 1)[0]
        m = np.zeros((self.n_vertices, self.n_vertices))
        for keep, (u, v) in zip(mask, self.base.edge_array()):
            if keep:
                m += _edge_laplacian(self.n_vertices, u, v)
        return Laplacian(m)


@dataclass(frozen=True)
class PairwiseGossip:
    """Exactly one base edge activates per iteration, drawn from fixed weights."""

    base: Graph
    weights: np.ndarray
    _mean: Laplacian = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (self.base.n_edges,):
            raise ValueError(f"need one weight per edge ({self.base.n_edges}), got shape {w.shape}")
        if self.base.n_edges == 0:
            raise ValueError("gossip needs at least one edge")
        if np.any(w < 0.0):
            raise ValueError("gossip weights must be non-negative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("gossip weights must sum to 1")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        n = self.base.n_vertices
        mean = np.zeros((n, n))
        for we, (u, v) in zip(w, self.base.edge_array()):
            mean += we * _edge_laplacian(n, u, v)
        object.__setattr__(self, "_mean", Laplacian(mean))

    @classmethod
    def uniform(cls, base: Graph) -> "PairwiseGossip":
        return cls(base, np.full(base.n_edges, 1.0 / base.n_edges))

    @property
    def n_vertices(self):
        return self.base.n_vertices

    def mean_laplacian(self) -> Laplacian:
        return self._mean

    def sample_edge_indices(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """(size,) indices into the base edge list, one per iteration."""
        return rng.choice(self.base.n_edges, size=size, p=self.weights)

    def sample(self, rng: np.random.Generator) -> Laplacian:
        e = int(self.sample_edge_indices(rng, 1)[0])
        u, v = self.base.edge_array()[e]
        return Laplacian(_edge_laplacian(self.n_vertices, u, v))


#: any of the three topology variants
TopologyModel = FixedTopology | BernoulliLinkFailure | PairwiseGossip


def sample_topology(model: TopologyModel, rng: np.random.Generator) -> Laplacian:
    return model.sample(rng)


def mean_laplacian(model: TopologyModel) -> Laplacian:
    return model.mean_laplacian()


def check_mean_connectivity(model: TopologyModel, tol: float = CONNECTIVITY_TOL):
    """(connected on average?, lambda_2 of the mean Laplacian)."""
    lam2 = fiedler_value(model.mean_laplacian())
    return lam2 > tol, lam2


def write_edge_list(g: Graph, path) -> None:
    """Plain-text edge list: first line N, then one 1-indexed "u v" pair per line."""
    lines = [str(g.n_vertices)]
    lines += [f"{u} {v}" for u, v in g.edges]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path) -> Graph:
    tokens = Path(path).read_text().split()
    if not tokens:
        raise ValueError(f"empty edge-list file: {path}")
    n = int(tokens[0])
    rest = tokens[1:]
    if len(rest) % 2 != 0:
        raise ValueError(f"odd number of edge endpoints in {path}")
    edges = tuple((int(rest[i]), int(rest[i + 1])) for i in range(0, len(rest), 2))
    return Graph(n, edges)
