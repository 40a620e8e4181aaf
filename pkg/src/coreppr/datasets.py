"""Feature/label/split files and a stochastic block model benchmark generator."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .graph import Graph, save_edge_list

__all__ = [
    "Dataset",
    "load_features",
    "save_features",
    "load_labels",
    "save_labels",
    "load_splits",
    "save_splits",
    "stratified_split",
    "generate_sbm",
    "save_dataset",
    "load_dataset",
]

FEATURES_MAGIC = b"CPPRF1"


@dataclass(eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    c: int

    def __post_init__(self):
        n = self.X.shape[0]
        if self.y.shape != (n,):
            raise DataFormatError(f"{self.y.size} labels for {n} feature rows")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.c):
            raise DataFormatError(f"labels must lie in [0, {self.c})")
        parts = [self.train, self.val, self.test]
        every = np.concatenate(parts)
        if every.size and (every.min() < 0 or every.max() >= n):
            raise DataFormatError("split index out of range")
        if np.unique(every).size != every.size:
            raise DataFormatError("splits overlap or repeat a node")

    @property
    def n(self) -> int:
        return self.X.shape[0]


def load_features(path) -> np.ndarray:
    """Read a binary (``CPPRF1``) or CSV feature matrix as float32, by content sniffing."""
    with open(path, "rb") as fh:
        head = fh.read(len(FEATURES_MAGIC))
    if head == FEATURES_MAGIC:
        return _load_features_binary(path)
    return _load_features_csv(path)


def _load_features_binary(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    pos = len(FEATURES_MAGIC)
    if len(buf) < pos + 16:
        raise DataFormatError("feature file header truncated")
    n, f = (int(v) for v in np.frombuffer(buf, "<u8", 2, pos))
    pos += 16
    if len(buf) - pos != 4 * n * f:
        raise DataFormatError(f"header says {n}x{f} but payload holds {(len(buf) - pos) // 4} values")
    return np.frombuffer(buf, "<f4", n * f, pos).reshape(n, f).astype(np.float32)


def _load_features_csv(path) -> np.ndarray:
    rows = []
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                vals = [float(v) for v in line.split(",")]
            except ValueError:
                raise DataFormatError(f"row {lineno}: non-numeric value") from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise DataFormatError(f"row {lineno}: {len(vals)} columns, expected {width}")
            rows.append(vals)
    if not rows:
        raise DataFormatError("feature file is empty")
    return np.array(rows, dtype=np.float32)


def save_features(X: np.ndarray, path, fmt: str = "binary") -> None:
    X = np.asarray(X, dtype=np.float32)
    if fmt == "csv":
        np.savetxt(path, X, delimiter=",", fmt="%.9g")
        return
    with open(path, "wb") as fh:
        fh.write(FEATURES_MAGIC)
        fh.write(np.array(X.shape, dtype="<u8").tobytes())
        fh.write(np.ascontiguousarray(X, dtype="<f4").tobytes())


def load_labels(path, n: int | None = None) -> np.ndarray:
    """``node_id<TAB>class_id`` lines; every node in ``0..n-1`` must be labeled."""
    ids, classes = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DataFormatError(f"labels line {lineno}: expected 'node class'")
            try:
                ids.append(int(parts[0]))
                classes.append(int(parts[1]))
            except ValueError:
                raise DataFormatError(f"labels line {lineno}: non-integer field") from None
    ids = np.array(ids, dtype=np.int64)
    if n is None:
        n = int(ids.max()) + 1 if ids.size else 0
    if ids.size != n or np.unique(ids).size != n or (n and (ids.min() < 0 or ids.max() >= n)):
        raise DataFormatError(f"labels must cover nodes 0..{n - 1} exactly once")
    y = np.empty(n, dtype=np.int64)
    y[ids] = classes
    if n and y.min() < 0:
        raise DataFormatError("negative class id")
    return y


def save_labels(y: np.ndarray, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, c in enumerate(np.asarray(y).tolist()):
            fh.write(f"{i}\t{c}\n")


_SPLIT_NAMES = ("train", "val", "test")


def load_splits(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Splits from a directory of ``train.txt``/``val.txt``/``test.txt`` or one sectioned file."""
    path = Path(path)
    if path.is_dir():
        return tuple(_read_ids(path / f"{name}.txt") for name in _SPLIT_NAMES)
    sections: dict[str, list[int]] = {}
    current = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1].strip()
                if current not in _SPLIT_NAMES:
                    raise DataFormatError(f"splits line {lineno}: unknown section [{current}]")
                sections.setdefault(current, [])
                continue
            if current is None:
                raise DataFormatError(f"splits line {lineno}: node id before any section header")
            try:
                sections[current].append(int(line))
            except ValueError:
                raise DataFormatError(f"splits line {lineno}: not a node id") from None
    return tuple(np.array(sections.get(name, []), dtype=np.int64) for name in _SPLIT_NAMES)


def _read_ids(path) -> np.ndarray:
    ids = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                ids.append(int(line))
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: not a node id") from None
    return np.array(ids, dtype=np.int64)


def save_splits(train, val, test, path) -> None:
    """Write the single-file sectioned form, or three files when ``path`` is a directory."""
    path = Path(path)
    if path.is_dir():
        for name, ids in zip(_SPLIT_NAMES, (train, val, test)):
            np.savetxt(path / f"{name}.txt", np.asarray(ids, dtype=np.int64), fmt="%d")
        return
    with open(path, "w", encoding="utf-8") as fh:
        for name, ids in zip(_SPLIT_NAMES, (train, val, test)):
            fh.write(f"[{name}]\n")
            fh.writelines(f"{i}\n" for i in np.asarray(ids).tolist())


def stratified_split(y: np.ndarray, rng, train_frac: float = 0.1, val_frac: float = 0.1):
    """Per-class shuffle, then the first fractions go to train and val; rest is test."""
    rng = np.random.default_rng(rng)
    train, val, test = [], [], []
    for cls in np.unique(y):
        members = rng.permutation(np.flatnonzero(y == cls))
        n_train = int(round(train_frac * members.size))
        n_val = int(round(val_frac * members.size))
        train.append(members[:n_train])
        val.append(members[n_train:n_train + n_val])
        test.append(members[n_train + n_val:])
    return tuple(np.sort(np.concatenate(part)) for part in (train, val, test))


def _sample_pairs(rng, count, size):
    """``count`` distinct ints from ``range(size)``, sorted."""
    if count == 0:
        return np.empty(0, dtype=np.int64)
    return np.sort(rng.choice(size, size=count, replace=False)).astype(np.int64)


def _triangle_decode(k, size):
    # k-th pair (i, j), i < j, of range(size) in row-major upper-triangle order.
    i = size - 2 - np.floor(np.sqrt(-8.0 * k + 4.0 * size * (size - 1) - 7) / 2.0 - 0.5).astype(np.int64)
    j = k + i + 1 - size * (size - 1) // 2 + (size - i) * ((size - i) - 1) // 2
    return i, j


def generate_sbm(n: int, blocks: int, p_in: float, p_out: float, feature_noise: float,
                 seed=None, train_frac: float = 0.1, val_frac: float = 0.1) -> tuple[Graph, Dataset]:
    """Planted-partition graph with noisy one-hot block features.

    Blocks are contiguous id ranges of near-equal size. Each within-block
    pair is an edge with probability ``p_in``, each cross-block pair with
    ``p_out``. Isolated nodes get one edge to a random node of their own
    block so every node has degree >= 1.
    """
    if blocks < 2:
        raise ValueError("need at least 2 blocks")
    if not 0.0 <= p_out < p_in <= 1.0:
        raise ValueError("need 0 <= p_out < p_in <= 1")
    if n < 2 * blocks:
        raise ValueError(f"n={n} leaves a block with fewer than 2 nodes")
    if feature_noise < 0:
        raise ValueError("feature_noise must be nonnegative")
    rng = np.random.default_rng(seed)
    sizes = np.full(blocks, n // blocks)
    sizes[: n % blocks] += 1
    starts = np.concatenate([[0], np.cumsum(sizes)])
    y = np.repeat(np.arange(blocks), sizes)

    src, dst = [], []
    for a in range(blocks):
        sa = int(sizes[a])
        total = sa * (sa - 1) // 2
        k = _sample_pairs(rng, int(rng.binomial(total, p_in)), total)
        i, j = _triangle_decode(k, sa)
        src.append(i + starts[a])
        dst.append(j + starts[a])
        for b in range(a + 1, blocks):
            sb = int(sizes[b])
            k = _sample_pairs(rng, int(rng.binomial(sa * sb, p_out)), sa * sb)
            src.append(k // sb + starts[a])
            dst.append(k % sb + starts[b])
    src = np.concatenate(src)
    dst = np.concatenate(dst)

    deg = np.bincount(src, minlength=n) + np.bincount(dst, minlength=n)
    lonely = np.flatnonzero(deg == 0)
    if lonely.size:
        blk = y[lonely]
        offs = rng.integers(1, sizes[blk])
        partner = starts[blk] + (lonely - starts[blk] + offs) % sizes[blk]
        src = np.concatenate([src, lonely])
        dst = np.concatenate([dst, partner])

    graph = Graph.from_edges(src, dst, n=n)
    X = np.zeros((n, blocks), dtype=np.float32)
    X[np.arange(n), y] = 1.0
    if feature_noise > 0:
        X += rng.normal(0.0, feature_noise, size=X.shape).astype(np.float32)
    train, val, test = stratified_split(y, rng, train_frac, val_frac)
    return graph, Dataset(X, y, train, val, test, blocks)


def save_dataset(graph: Graph, data: Dataset, directory) -> None:
    """Bundle layout used by the CLI: graph.txt, features.bin, labels.txt, splits.txt."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_edge_list(graph, directory / "graph.txt")
    save_features(data.X, directory / "features.bin")
    save_labels(data.y, directory / "labels.txt")
    save_splits(data.train, data.val, data.test, directory / "splits.txt")


def load_dataset(features, labels, splits, n: int | None = None) -> Dataset:
    X = load_features(features)
    y = load_labels(labels, n=X.shape[0] if n is None else n)
    train, val, test = load_splits(splits)
    return Dataset(X, y, train, val, test, int(y.max()) + 1)
