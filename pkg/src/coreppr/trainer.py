"""Row precomputation, the training loop, and OT / T&T evaluation."""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .datasets import Dataset
from .diffusion import DiffusionConfig, build_rows, ot_inference, tt_inference, write_row_cache
from .graph import CoreScores, Graph
from .neural import AdamState, Model, adam_step, batch_logits, build_batch, init_model, loss_and_grads, mlp_forward

__all__ = ["TrainConfig", "RunReport", "precompute_rows", "train", "predict", "evaluate"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters.

    ``freeze_gamma`` pins the gate at gamma = 0 while still building C;
    ``use_core=False`` skips C altogether (the plain PPRGo pipeline).
    """

    epochs: int = 200
    batch_size: int = 512
    lr: float = 5e-3
    seed: int = 0
    hidden: tuple = (32,)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    patience: int = 20
    freeze_gamma: bool = False
    use_core: bool = True
    dropout: float = 0.0
    threads: int | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class RunReport:
    accuracy_test: float
    accuracy_val: float | None
    gamma_final: float
    mean_l: float
    time_precompute_s: float
    time_train_s: float
    time_infer_s: float
    loss_curve: list
    gamma_curve: list = field(default_factory=list)
    best_epoch: int = 0
    mode: str = "ot"
    seed: int = 0
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def precompute_rows(g: Graph, cores: CoreScores | None, cfg: DiffusionConfig, sources,
                    cache_path=None, threads: int | None = None) -> dict:
    """Build one propagation row per source, keyed by source id."""
    sources = np.unique(np.asarray(sources, dtype=np.int64))
    rows = build_rows(g, cores, sources, cfg, threads=threads)
    if cache_path is not None:
        write_row_cache(rows, cache_path)
    return dict(zip(sources.tolist(), rows))


def mean_neighbors(rows, dynamic: bool) -> float:
    """Average row size; dynamic rows do not count their source."""
    if not rows:
        return 0.0
    sizes = [len(r) - (dynamic and bool(np.any(r.indices == r.source))) for r in rows]
    return float(np.mean(sizes))


def _accuracy(pred, truth) -> float:
    return 100.0 * float(np.mean(pred == truth))


def _cross_entropy(logits, labels) -> float:
    return float(np.mean(logsumexp(logits, axis=1) - logits[np.arange(labels.size), labels]))


def train(g: Graph, cores: CoreScores | None, data: Dataset, cfg: TrainConfig) -> tuple[Model, RunReport]:
    """Fit the MLP and the gate jointly on the training split.

    The model with the best validation accuracy is kept; training stops
    after ``cfg.patience`` epochs without improvement.
    """
    if data.train.size == 0:
        raise ValueError("training split is empty")
    if cfg.use_core and cores is None:
        raise ValueError("use_core=True needs core scores")
    rng = np.random.default_rng(cfg.seed)
    model = init_model(data.X.shape[1], data.c, cfg.hidden, rng,
                       freeze_gamma=cfg.freeze_gamma or not cfg.use_core, dropout=cfg.dropout)
    row_cores = cores if cfg.use_core else None

    t0 = time.perf_counter()
    cache = precompute_rows(g, row_cores, cfg.diffusion, np.concatenate([data.train, data.val]),
                            threads=cfg.threads)
    time_pre = time.perf_counter() - t0
    mean_l = mean_neighbors([cache[i] for i in data.train.tolist()], cfg.diffusion.dynamic_l)

    val_ctx = build_batch([cache[i] for i in data.val.tolist()], data.X, data.y) if data.val.size else None

    t0 = time.perf_counter()
    state = AdamState.zeros_like(model)
    best, best_val, best_loss, best_epoch, stale = model.copy(), -1.0, np.inf, 0, 0
    loss_curve, gamma_curve = [], []
    drop_rng = rng if cfg.dropout > 0 else None
    for epoch in range(cfg.epochs):
        gamma_curve.append(model.gamma)
        order = rng.permutation(data.train)
        total = 0.0
        for start in range(0, order.size, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            ctx = build_batch([cache[i] for i in batch.tolist()], data.X, data.y)
            loss, grads, grad_g = loss_and_grads(model, ctx, drop_rng)
            adam_step(model, grads, grad_g, state, cfg.lr)
            total += loss * batch.size
        loss_curve.append(total / order.size)

        if val_ctx is None:
            best, best_epoch = model.copy(), epoch
            continue
        val_logits = batch_logits(model, val_ctx)
        val_acc = _accuracy(val_logits.argmax(axis=1), val_ctx.labels)
        val_loss = _cross_entropy(val_logits, val_ctx.labels)
        # ties in accuracy are common on small validation sets; lower loss wins
        if val_acc > best_val or (val_acc == best_val and val_loss < best_loss):
            best, best_val, best_loss, best_epoch, stale = model.copy(), val_acc, val_loss, epoch, 0
        else:
            stale += 1
            if stale >= cfg.patience:
                log.info("early stop at epoch %d (best %d, val %.2f%%)", epoch, best_epoch, best_val)
                break
        log.debug("epoch %d loss %.5f val %.2f%% gamma %.4f", epoch, loss_curve[-1], val_acc, model.gamma)
    time_train = time.perf_counter() - t0

    mode = cfg.diffusion.inference_mode
    acc_test, time_infer = evaluate(best, g, cores, data, mode, cfg.diffusion, threads=cfg.threads)
    report = RunReport(
        accuracy_test=acc_test,
        accuracy_val=best_val if val_ctx is not None else None,
        gamma_final=best.gamma,
        mean_l=mean_l,
        time_precompute_s=round(time_pre, 3),
        time_train_s=round(time_train, 3),
        time_infer_s=round(time_infer, 3),
        loss_curve=loss_curve,
        gamma_curve=gamma_curve,
        best_epoch=best_epoch,
        mode=mode,
        seed=cfg.seed,
        config=cfg.to_dict(),
    )
    return best, report


def predict(model: Model, g: Graph, cores: CoreScores | None, X: np.ndarray, nodes,
            cfg: DiffusionConfig, mode: str, threads: int | None = None) -> np.ndarray:
    """Class predictions for ``nodes``.

    ``"ot"`` runs power iteration over the MLP outputs of every node;
    ``"tt"`` builds the mixed rows of ``nodes`` explicitly.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    if mode == "ot":
        H = mlp_forward(model, X)
        return ot_inference(g, H, cfg.ppr.alpha, cfg.power_iters)[nodes].argmax(axis=1)
    if mode == "tt":
        gamma = model.gamma
        logits = tt_inference(g, cores if gamma > 0 else None, lambda idx: mlp_forward(model, X[idx]),
                              gamma, cfg, nodes, threads=threads)
        return logits.argmax(axis=1)
    raise ValueError(f"mode must be 'ot' or 'tt', got {mode!r}")


def evaluate(model: Model, g: Graph, cores: CoreScores | None, data: Dataset, mode: str,
             cfg: DiffusionConfig, split: str = "test", threads: int | None = None) -> tuple[float, float]:
    """Accuracy in percent on ``split`` and the inference wall time in seconds."""
    nodes = getattr(data, split)
    if nodes.size == 0:
        raise ValueError(f"{split} split is empty")
    t0 = time.perf_counter()
    pred = predict(model, g, cores, data.X, nodes, cfg, mode, threads=threads)
    return _accuracy(pred, data.y[nodes]), time.perf_counter() - t0
