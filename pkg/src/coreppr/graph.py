"""Undirected graphs in CSR form, k-core decomposition and CoreRank."""

from __future__ import annotations

import io
import os
from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse as sp

from .errors import GraphFormatError

__all__ = [
    "Graph",
    "load_edge_list",
    "save_edge_list",
    "core_numbers",
    "corerank",
    "CoreScores",
    "core_scores",
]


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable symmetric graph.

    ``neighbors[offsets[i]:offsets[i+1]]`` is the sorted, duplicate-free
    neighbor list of node ``i``. An undirected edge ``{u, v}`` with
    ``u != v`` is stored twice, a self-loop once.
    """

    n: int
    m: int
    offsets: np.ndarray
    neighbors: np.ndarray
    self_loop_flag: bool = False

    def __post_init__(self):
        self.offsets.setflags(write=False)
        self.neighbors.setflags(write=False)

    @classmethod
    def from_edges(cls, src, dst, n: int | None = None, self_loop_flag: bool = False) -> "Graph":
        """Build a graph from endpoint arrays; directions and duplicates are merged."""
        src = np.asarray(src, dtype=np.int64).ravel()
        dst = np.asarray(dst, dtype=np.int64).ravel()
        if src.shape != dst.shape:
            raise GraphFormatError("edge endpoint arrays differ in length")
        if src.size and min(src.min(), dst.min()) < 0:
            raise GraphFormatError("node ids must be nonnegative")
        seen = int(max(src.max(), dst.max())) + 1 if src.size else 0
        if n is None:
            n = seen
        elif n < seen:
            raise GraphFormatError(f"node id {seen - 1} out of range for n={n}")
        if n == 0:
            raise GraphFormatError("graph has no nodes")

        loops = src == dst
        rows = np.concatenate([src, dst[~loops]])
        cols = np.concatenate([dst, src[~loops]])
        keys = np.unique(rows * n + cols)
        rows, cols = np.divmod(keys, n)
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=offsets[1:])
        n_loops = int(np.count_nonzero(rows == cols))
        m = (keys.size + n_loops) // 2
        return cls(n, m, offsets, cols.astype(np.int64), self_loop_flag)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.offsets)

    def neighbors_of(self, i: int) -> np.ndarray:
        return self.neighbors[self.offsets[i]:self.offsets[i + 1]]

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Each undirected edge once, as ``(u, v)`` with ``u <= v``."""
        rows = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)
        keep = rows <= self.neighbors
        return rows[keep], self.neighbors[keep]

    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(self.neighbors.size, dtype=np.float64)
        return sp.csr_matrix((data, self.neighbors, self.offsets), shape=(self.n, self.n))

    def transition_matrix(self) -> sp.csr_matrix:
        """Row-stochastic ``D^-1 A``; rows of isolated nodes stay empty."""
        deg = self.degrees.astype(np.float64)
        data = np.repeat(np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0), self.degrees)
        return sp.csr_matrix((data, self.neighbors, self.offsets), shape=(self.n, self.n))

    def with_self_loops(self) -> "Graph":
        u, v = self.edges()
        nodes = np.arange(self.n, dtype=np.int64)
        return Graph.from_edges(
            np.concatenate([u, nodes]), np.concatenate([v, nodes]), n=self.n, self_loop_flag=True
        )

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m}, self_loop_flag={self.self_loop_flag})"


def load_edge_list(source) -> Graph:
    """Parse a whitespace separated ``u v`` edge list.

    ``source`` is a text stream or a filesystem path. Lines starting with
    ``#`` and blank lines are skipped; ``n`` is one past the largest id.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            return load_edge_list(fh)

    src, dst = [], []
    for lineno, line in enumerate(source, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphFormatError(f"line {lineno}: expected 2 fields, got {len(parts)}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphFormatError(f"line {lineno}: non-integer node id in {line!r}") from None
        if u < 0 or v < 0:
            raise GraphFormatError(f"line {lineno}: negative node id")
        src.append(u)
        dst.append(v)
    if not src:
        raise GraphFormatError("edge list is empty")
    return Graph.from_edges(src, dst)


def save_edge_list(g: Graph, target) -> None:
    if isinstance(target, (str, os.PathLike)):
        with open(target, "w", encoding="utf-8") as fh:
            return save_edge_list(g, fh)
    u, v = g.edges()
    buf = io.StringIO()
    np.savetxt(buf, np.column_stack([u, v]), fmt="%d")
    target.write(buf.getvalue())


@numba.njit(cache=True)
def _bz_peel(offsets, neighbors):
    # Batagelj-Zaversnik bucket peel, O(n + m).
    n = offsets.size - 1
    deg = np.empty(n, dtype=np.int64)
    md = 0
    for v in range(n):
        deg[v] = offsets[v + 1] - offsets[v]
        if deg[v] > md:
            md = deg[v]
    bins = np.zeros(md + 1, dtype=np.int64)
    for v in range(n):
        bins[deg[v]] += 1
    start = 0
    for d in range(md + 1):
        count = bins[d]
        bins[d] = start
        start += count
    pos = np.empty(n, dtype=np.int64)
    vert = np.empty(n, dtype=np.int64)
    for v in range(n):
        pos[v] = bins[deg[v]]
        vert[pos[v]] = v
        bins[deg[v]] += 1
    for d in range(md, 0, -1):
        bins[d] = bins[d - 1]
    bins[0] = 0
    for i in range(n):
        v = vert[i]
        for k in range(offsets[v], offsets[v + 1]):
            u = neighbors[k]
            if deg[u] > deg[v]:
                du = deg[u]
                pu = pos[u]
                pw = bins[du]
                w = vert[pw]
                if u != w:
                    pos[u] = pw
                    vert[pu] = w
                    pos[w] = pu
                    vert[pw] = u
                bins[du] += 1
                deg[u] -= 1
    return deg


def core_numbers(g: Graph) -> np.ndarray:
    """Core number of every node; isolated nodes get 0.

    A self-loop counts once towards the degree of its node while peeling.
    """
    return _bz_peel(g.offsets, g.neighbors)


def corerank(g: Graph, cores) -> np.ndarray:
    """Sum of neighbor core numbers per node, in exact integer arithmetic."""
    cores = np.asarray(cores, dtype=np.int64)
    if cores.shape != (g.n,):
        raise ValueError(f"cores has shape {cores.shape}, expected ({g.n},)")
    csum = np.zeros(g.neighbors.size + 1, dtype=np.int64)
    np.cumsum(cores[g.neighbors], out=csum[1:])
    return csum[g.offsets[1:]] - csum[g.offsets[:-1]]


@dataclass(frozen=True, eq=False)
class CoreScores:
    core_number: np.ndarray
    corerank: np.ndarray


def core_scores(g: Graph) -> CoreScores:
    cores = core_numbers(g)
    return CoreScores(cores, corerank(g, cores))
