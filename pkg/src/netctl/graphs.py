"""Random directed networks and input/output node selection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .network import LinearNetwork


@dataclass(frozen=True)
class GraphSpec:
    n: int
    edge_prob: float
    normalize: bool = False
    seed: int | None = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if not 0.0 <= self.edge_prob <= 1.0:
            raise ValueError(f"edge_prob must lie in [0, 1], got {self.edge_prob}")

    @classmethod
    def connected(cls, n: int, epsilon: float = 0.05, **kwargs) -> "GraphSpec":
        """Edge probability ``ln(n)/n + epsilon``, clipped to 1."""
        return cls(n, min(1.0, math.log(n) / n + epsilon), **kwargs)


@dataclass(frozen=True)
class NodeSelection:
    input_nodes: np.ndarray
    output_nodes: np.ndarray
    n: int

    def __post_init__(self):
        for name in ("input_nodes", "output_nodes"):
            idx = np.asarray(getattr(self, name), dtype=int)
            if idx.size and (idx.min() < 0 or idx.max() >= self.n):
                raise ValueError(f"{name} out of range for n={self.n}")
            if np.unique(idx).size != idx.size:
                raise ValueError(f"{name} contains duplicates")
            object.__setattr__(self, name, idx)

    @property
    def B(self) -> np.ndarray:
        B = np.zeros((self.n, self.input_nodes.size))
        B[self.input_nodes, np.arange(self.input_nodes.size)] = 1.0
        return B

    @property
    def C(self) -> np.ndarray:
        C = np.zeros((self.output_nodes.size, self.n))
        C[np.arange(self.output_nodes.size), self.output_nodes] = 1.0
        return C


@dataclass(frozen=True)
class RepairReport:
    added_edges: int
    self_loops: int
    components_before: int


def _rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def erdos_renyi(spec: GraphSpec, rng=None) -> np.ndarray:
    """Directed G(n, p) adjacency with unit weights and an empty diagonal.

    Entry ``(i, j)`` is the weight of the edge from node ``j`` to node ``i``
    so that the matrix acts directly as the dynamics matrix.
    """
    rng = _rng(spec.seed if rng is None else rng)
    A = (rng.random((spec.n, spec.n)) < spec.edge_prob).astype(float)
    np.fill_diagonal(A, 0.0)
    if spec.normalize:
        A /= math.sqrt(spec.n)
    return A


def strong_components(adjacency) -> tuple[int, np.ndarray]:
    return connected_components(np.asarray(adjacency) != 0, directed=True, connection="strong")


def _condensation(adjacency):
    k, labels = strong_components(adjacency)
    # dag[a, b] is True when some edge runs from component a to component b;
    # adjacency[i, j] != 0 means an edge j -> i.
    tgt, src = np.nonzero(np.asarray(adjacency) != 0)
    dag = np.zeros((k, k), dtype=bool)
    dag[labels[src], labels[tgt]] = True
    np.fill_diagonal(dag, False)
    return k, labels, dag


def _reaches(dag: np.ndarray, start: int) -> np.ndarray:
    seen = np.zeros(dag.shape[0], dtype=bool)
    stack = [start]
    seen[start] = True
    while stack:
        c = stack.pop()
        for nxt in np.flatnonzero(dag[c] & ~seen):
            seen[nxt] = True
            stack.append(nxt)
    return seen


def repair_connectivity(adjacency, rng=None, self_loops: bool = True, weight: float = 1.0):
    """Add self-loops and the inter-component edges needed for strong connectivity.

    Edges are added greedily from a sink component to a source component of
    the condensation DAG, preferring pairs where the source does not already
    reach the sink, so that each edge removes one source and one sink. The
    endpoints inside each component are drawn at random.

    Returns the repaired matrix and a :class:`RepairReport`.
    """
    rng = _rng(rng)
    A = np.array(adjacency, dtype=float, copy=True)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"adjacency must be square, got {A.shape}")
    loops = 0
    if self_loops:
        loops = int(np.count_nonzero(np.diag(A) == 0))
        A[np.diag_indices(n)] = np.where(np.diag(A) == 0, weight, np.diag(A))
    k, labels, dag = _condensation(A)
    before, added = k, 0
    while k > 1:
        sources = np.flatnonzero(~dag.any(axis=0))
        sinks = np.flatnonzero(~dag.any(axis=1))
        pairs = [(s, r) for s in sinks for r in sources if s != r and not _reaches(dag, r)[s]]
        if not pairs:
            pairs = [(s, r) for s in sinks for r in sources if s != r]
        sink, source = pairs[rng.integers(len(pairs))]
        i = rng.choice(np.flatnonzero(labels == source))
        j = rng.choice(np.flatnonzero(labels == sink))
        A[i, j] = weight  # edge j (in sink component) -> i (in source component)
        added += 1
        k, labels, dag = _condensation(A)
    return A, RepairReport(added, loops, before)


def select_nodes(n: int, m: int, p: int, rng=None) -> NodeSelection:
    """Draw ``m`` input and ``p`` output nodes uniformly without replacement."""
    if m > n or p > n:
        raise ValueError(f"cannot select m={m}, p={p} nodes out of n={n}")
    rng = _rng(rng)
    return NodeSelection(rng.choice(n, m, replace=False), rng.choice(n, p, replace=False), n)


def perturb_edges(A, delta: float, rng=None, all_entries: bool = False) -> np.ndarray:
    """Add i.i.d. uniform noise on ``[-delta, delta]`` to the nonzero entries of ``A``."""
    rng = _rng(rng)
    A = np.asarray(A, dtype=float)
    noise = rng.uniform(-delta, delta, size=A.shape)
    if not all_entries:
        noise *= A != 0
    return A + noise


def random_network(
    n: int,
    m: int,
    p: int,
    rng=None,
    epsilon: float = 0.05,
    normalize: bool = True,
    repair: bool = True,
    full_state: bool = False,
) -> tuple[LinearNetwork, NodeSelection]:
    """Erdős–Rényi network with random input/output nodes.

    The raw unit-weight graph is repaired (self-loops plus strong
    connectivity) before the whole adjacency is scaled by ``1/sqrt(n)``.
    ``full_state`` sets ``C = I`` regardless of ``p``.
    """
    rng = _rng(rng)
    A = erdos_renyi(GraphSpec.connected(n, epsilon), rng)
    if repair:
        A, _ = repair_connectivity(A, rng)
    if normalize:
        A = A / math.sqrt(n)
    sel = select_nodes(n, m, n if full_state else p, rng)
    C = np.eye(n) if full_state else sel.C
    return LinearNetwork(A, sel.B, C), sel
