"""Propagation rows mixing truncated PPR with row-normalized CoreRank, and inference."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DanglingNodeError, DataFormatError
from .graph import CoreScores, Graph
from .ppr import PprParams, SparseScoreRow, elbow_truncate, push_rows, top_l

__all__ = [
    "PropagationRow",
    "DiffusionConfig",
    "build_row",
    "build_rows",
    "combine_gamma",
    "rows_to_csr",
    "ot_inference",
    "tt_inference",
    "write_row_cache",
    "read_row_cache",
]

ROW_CACHE_MAGIC = b"CPRROW1"
_ENTRY = np.dtype([("index", "<u8"), ("ppr", "<f8"), ("core", "<f8")])
_HEADER = np.dtype([("source", "<u8"), ("length", "<u8")])


@dataclass(frozen=True, eq=False)
class PropagationRow:
    """One row of the propagation operator.

    ``core_weights`` is None for plain PPRGo rows, which never build C.
    When present it is checked on construction: same support as the PPR
    weights and a sum of one.
    """

    source: int
    indices: np.ndarray
    ppr_weights: np.ndarray
    core_weights: np.ndarray | None = None

    def __post_init__(self):
        k = self.indices.size
        if k < 1:
            raise ValueError(f"row {self.source} is empty")
        if self.ppr_weights.shape != (k,):
            raise ValueError(f"row {self.source}: ppr_weights/indices length mismatch")
        if np.unique(self.indices).size != k:
            raise ValueError(f"row {self.source}: duplicate indices")
        if self.core_weights is not None:
            if self.core_weights.shape != (k,):
                raise ValueError(f"row {self.source}: core_weights/indices length mismatch")
            total = self.core_weights.sum()
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"row {self.source}: core_weights sum to {total!r}")

    def __len__(self):
        return self.indices.size


@dataclass(frozen=True)
class DiffusionConfig:
    ppr: PprParams = field(default_factory=PprParams)
    l: int = 32
    dynamic_l: bool = False
    inference_mode: str = "ot"
    power_iters: int = 50

    def __post_init__(self):
        if self.l < 1:
            raise ValueError(f"l must be >= 1, got {self.l}")
        if self.power_iters < 1:
            raise ValueError(f"power_iters must be >= 1, got {self.power_iters}")
        if self.inference_mode not in ("ot", "tt"):
            raise ValueError(f"inference_mode must be 'ot' or 'tt', got {self.inference_mode!r}")


def _core_row(corerank: np.ndarray, indices: np.ndarray) -> np.ndarray:
    cr = corerank[indices].astype(np.float64)
    total = cr.sum()
    if total == 0:
        return np.full(indices.size, 1.0 / indices.size)
    return cr / total


def _truncate(row: SparseScoreRow, cfg: DiffusionConfig) -> SparseScoreRow:
    return elbow_truncate(row) if cfg.dynamic_l else top_l(row, cfg.l)


def _to_propagation_row(row: SparseScoreRow, cores: CoreScores | None) -> PropagationRow:
    core = None if cores is None else _core_row(cores.corerank, row.nodes)
    return PropagationRow(row.source, row.nodes, row.scores, core)


def build_row(g: Graph, cores: CoreScores | None, source: int, cfg: DiffusionConfig) -> PropagationRow:
    """Push from ``source``, truncate, and attach CoreRank weights on the kept support.

    Pass ``cores=None`` for a PPR-only row.
    """
    return build_rows(g, cores, [source], cfg)[0]


def build_rows(g, cores, sources, cfg: DiffusionConfig, threads: int | None = None) -> list[PropagationRow]:
    raw = push_rows(g, sources, cfg.ppr, threads=threads)
    return [_to_propagation_row(_truncate(r, cfg), cores) for r in raw]


def combine_gamma(row: PropagationRow, gamma: float) -> np.ndarray:
    """``(1 - gamma) * ppr + gamma * core`` on the row's support."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    if row.core_weights is None:
        if gamma != 0.0:
            raise ValueError("row has no core weights; only gamma=0 is defined")
        return row.ppr_weights.copy()
    return (1.0 - gamma) * row.ppr_weights + gamma * row.core_weights


def rows_to_csr(rows, support: np.ndarray | None = None):
    """Stack rows into ``(ppr, core, support)`` CSR matrices over compact columns.

    Column ``j`` refers to node ``support[j]``; ``core`` is None when any
    row lacks core weights.
    """
    indices = [r.indices for r in rows]
    if support is None:
        support = np.unique(np.concatenate(indices))
    cols = np.searchsorted(support, np.concatenate(indices))
    indptr = np.zeros(len(rows) + 1, dtype=np.int64)
    np.cumsum([len(r) for r in rows], out=indptr[1:])
    shape = (len(rows), support.size)
    ppr = sp.csr_matrix((np.concatenate([r.ppr_weights for r in rows]), cols, indptr), shape=shape)
    core = None
    if all(r.core_weights is not None for r in rows):
        core = sp.csr_matrix((np.concatenate([r.core_weights for r in rows]), cols, indptr), shape=shape)
    return ppr, core, support


def ot_inference(g: Graph, H: np.ndarray, alpha: float, iters: int) -> np.ndarray:
    """Power iteration ``Q <- (1 - alpha) D^-1 A Q + alpha H`` started at ``H``.

    Converges to ``Pi_ppr @ H``; only sparse products with the walk matrix.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if np.any(g.degrees == 0):
        bad = int(np.flatnonzero(g.degrees == 0)[0])
        raise DanglingNodeError(f"dangling node: node {bad} has degree 0")
    walk = g.transition_matrix()
    H = np.asarray(H, dtype=np.float64)
    restart = alpha * H
    Q = H
    for _ in range(iters):
        Q = (1.0 - alpha) * (walk @ Q) + restart
    return Q


def tt_inference(g, cores, H_provider, gamma: float, cfg: DiffusionConfig, targets,
                 threads: int | None = None) -> np.ndarray:
    """Logits for ``targets`` from explicitly built ``Pi_gamma`` rows.

    ``H_provider`` is either an ``n x c`` array or a callable mapping an
    array of node ids to their rows of ``H``.
    """
    targets = np.asarray(targets, dtype=np.int64)
    rows = build_rows(g, cores, targets, cfg, threads=threads)
    ppr, core, support = rows_to_csr(rows)
    if callable(H_provider):
        H_support = np.asarray(H_provider(support), dtype=np.float64)
    else:
        H_support = np.asarray(H_provider, dtype=np.float64)[support]
    if gamma == 0.0:
        weights = ppr
    elif core is None:
        raise ValueError("gamma > 0 needs core scores")
    else:
        weights = (1.0 - gamma) * ppr + gamma * core
    return weights @ H_support


def write_row_cache(rows, target) -> None:
    """Binary row cache: magic, then per row (u64 source, u64 length, entries)."""
    if isinstance(target, (str, os.PathLike)):
        with open(target, "wb") as fh:
            return write_row_cache(rows, fh)
    target.write(ROW_CACHE_MAGIC)
    for r in rows:
        if r.core_weights is None:
            raise ValueError(f"row {r.source} has no core weights to cache")
        target.write(np.array([(r.source, len(r))], dtype=_HEADER).tobytes())
        entries = np.empty(len(r), dtype=_ENTRY)
        entries["index"] = r.indices
        entries["ppr"] = r.ppr_weights
        entries["core"] = r.core_weights
        target.write(entries.tobytes())


def read_row_cache(source) -> list[PropagationRow]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return read_row_cache(fh)
    buf = source.read()
    if buf[: len(ROW_CACHE_MAGIC)] != ROW_CACHE_MAGIC:
        raise DataFormatError("not a row cache file (bad magic)")
    pos = len(ROW_CACHE_MAGIC)
    rows = []
    while pos < len(buf):
        if pos + _HEADER.itemsize > len(buf):
            raise DataFormatError(f"truncated row header at byte {pos}")
        head = np.frombuffer(buf, dtype=_HEADER, count=1, offset=pos)[0]
        pos += _HEADER.itemsize
        length = int(head["length"])
        end = pos + length * _ENTRY.itemsize
        if end > len(buf):
            raise DataFormatError(f"truncated row body for source {int(head['source'])}")
        entries = np.frombuffer(buf, dtype=_ENTRY, count=length, offset=pos)
        pos = end
        rows.append(PropagationRow(
            int(head["source"]),
            entries["index"].astype(np.int64),
            entries["ppr"].astype(np.float64),
            entries["core"].astype(np.float64),
        ))
    return rows
