"""Personalized PageRank: forward push, a power-iteration oracle, and row truncation."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from .errors import ConvergenceError, DanglingNodeError
from .graph import Graph

__all__ = [
    "PprParams",
    "SparseScoreRow",
    "push_appr",
    "push_rows",
    "exact_ppr",
    "top_l",
    "elbow_select",
    "elbow_truncate",
]

ELBOW_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class PprParams:
    alpha: float = 0.25
    epsilon: float = 1e-4

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True, eq=False)
class SparseScoreRow:
    """Scores of one source row, sorted by descending score then ascending node."""

    source: int
    nodes: np.ndarray
    scores: np.ndarray

    def __len__(self):
        return self.nodes.size

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.nodes.tolist(), self.scores.tolist()))

    @classmethod
    def from_unsorted(cls, source, nodes, scores) -> "SparseScoreRow":
        nodes = np.asarray(nodes, dtype=np.int64)
        scores = np.asarray(scores, dtype=np.float64)
        order = np.lexsort((nodes, -scores))
        return cls(int(source), nodes[order], scores[order])


@numba.njit(cache=True, nogil=True)
def _forward_push(offsets, neighbors, source, alpha, eps):
    n = offsets.size - 1
    p = np.zeros(n)
    r = np.zeros(n)
    queued = np.zeros(n, dtype=np.bool_)
    seen = np.zeros(n, dtype=np.bool_)
    queue = np.empty(n, dtype=np.int64)
    touched = np.empty(n, dtype=np.int64)

    r[source] = 1.0
    seen[source] = True
    touched[0] = source
    n_touched = 1
    queue[0] = source
    queued[source] = True
    head = 0
    size = 1
    while size > 0:
        u = queue[head]
        head = (head + 1) % n
        size -= 1
        queued[u] = False
        deg = offsets[u + 1] - offsets[u]
        if deg == 0:
            return touched[:0], p[:0], u
        ru = r[u]
        r[u] = 0.0
        p[u] += alpha * ru
        share = (1.0 - alpha) * ru / deg
        for k in range(offsets[u], offsets[u + 1]):
            v = neighbors[k]
            r[v] += share
            if not seen[v]:
                seen[v] = True
                touched[n_touched] = v
                n_touched += 1
            if not queued[v] and r[v] >= eps * (offsets[v + 1] - offsets[v]):
                queue[(head + size) % n] = v
                size += 1
                queued[v] = True

    count = 0
    for i in range(n_touched):
        if p[touched[i]] > 0.0:
            count += 1
    nodes = np.empty(count, dtype=np.int64)
    scores = np.empty(count)
    j = 0
    for i in range(n_touched):
        v = touched[i]
        if p[v] > 0.0:
            nodes[j] = v
            scores[j] = p[v]
            j += 1
    return nodes, scores, -1


def push_appr(g: Graph, source: int, params: PprParams) -> SparseScoreRow:
    """Approximate row ``source`` of ``alpha (I - (1 - alpha) D^-1 A)^-1``.

    Non-lazy forward push with a FIFO work queue. The source is always
    pushed once; afterwards a node is pushed while its residual is at
    least ``epsilon * degree``. Each reported score undershoots the exact
    value by at most ``epsilon * degree(node)``.
    """
    source = int(source)
    if not 0 <= source < g.n:
        raise IndexError(f"source {source} out of range for n={g.n}")
    if g.offsets[source + 1] == g.offsets[source]:
        raise DanglingNodeError(f"dangling source: node {source} has degree 0")
    nodes, scores, bad = _forward_push(g.offsets, g.neighbors, source, params.alpha, params.epsilon)
    if bad >= 0:
        raise DanglingNodeError(f"dangling node on walk: node {bad} has degree 0")
    return SparseScoreRow.from_unsorted(source, nodes, scores)


def push_rows(g: Graph, sources, params: PprParams, threads: int | None = None) -> list[SparseScoreRow]:
    """``push_appr`` for many sources; output order follows ``sources``."""
    sources = [int(s) for s in sources]
    if threads is None or threads <= 1 or len(sources) < 2:
        return [push_appr(g, s, params) for s in sources]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: push_appr(g, s, params), sources))


def exact_ppr(g: Graph, source: int, alpha: float, tol: float = 1e-12, max_iter: int = 10000) -> np.ndarray:
    """Dense PPR vector by power iteration, for verification only."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    deg = g.degrees
    if alpha < 1.0:
        seen = np.zeros(g.n, dtype=bool)
        seen[source] = True
        stack = [int(source)]
        while stack:
            u = stack.pop()
            if deg[u] == 0:
                raise DanglingNodeError(f"dangling node on walk: node {u} has degree 0")
            for v in g.neighbors_of(u):
                if not seen[v]:
                    seen[v] = True
                    stack.append(int(v))

    walk_t = g.transition_matrix().T.tocsr()
    restart = np.zeros(g.n)
    restart[source] = alpha
    p = np.zeros(g.n)
    p[source] = 1.0
    for _ in range(max_iter):
        nxt = restart + (1.0 - alpha) * (walk_t @ p)
        change = np.abs(nxt - p).max()
        p = nxt
        if change < tol:
            return p
    raise ConvergenceError(f"exact_ppr did not converge in {max_iter} iterations")


def top_l(row: SparseScoreRow, l: int) -> SparseScoreRow:
    if l < 1:
        raise ValueError(f"l must be positive, got {l}")
    return SparseScoreRow(row.source, row.nodes[:l], row.scores[:l])


def _elbow_index(y: np.ndarray) -> int:
    """0-based elbow position in a score curve sampled at ranks 1..len(y)."""
    size = y.size
    if size <= 2:
        return int(np.argmax(y))
    x = np.arange(1, size + 1, dtype=np.float64)
    dx = x[-1] - x[0]
    dy = y[-1] - y[0]
    dist = np.abs(dy * x - dx * y + x[-1] * y[0] - y[-1] * x[0]) / np.hypot(dx, dy)
    best = dist.max()
    if np.count_nonzero(np.isclose(dist, best, rtol=ELBOW_TIE_RTOL, atol=0.0)) == 1:
        return int(np.argmax(dist))
    return 0


def elbow_select(row: SparseScoreRow) -> int:
    """Number of non-source neighbors to keep, from the elbow of the score curve.

    The source's own score is excluded from the curve. With one or zero
    non-source entries that count is returned unchanged.
    """
    mask = row.nodes != row.source
    y = row.scores[mask]
    if y.size == 0:
        if mask.size == 0:
            raise ValueError("elbow_select needs a non-empty row")
        return 0
    if y.size == 1:
        return 1
    return _elbow_index(y) + 1


def elbow_truncate(row: SparseScoreRow) -> SparseScoreRow:
    """Source plus the top ``elbow_select(row)`` non-source entries, score order kept."""
    keep_n = elbow_select(row)
    others = np.flatnonzero(row.nodes != row.source)[:keep_n]
    own = np.flatnonzero(row.nodes == row.source)
    idx = np.sort(np.concatenate([own, others]))
    return SparseScoreRow(row.source, row.nodes[idx], row.scores[idx])
