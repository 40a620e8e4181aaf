"""MLP feature transform, propagated cross-entropy, hand-written gradients and Adam."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

from .diffusion import PropagationRow, rows_to_csr
from .errors import DataFormatError, TrainingError

__all__ = [
    "Model",
    "init_model",
    "mlp_forward",
    "BatchContext",
    "build_batch",
    "batch_logits",
    "loss_and_grads",
    "AdamState",
    "adam_step",
    "save_model",
    "load_model",
]

CHECKPOINT_MAGIC = b"CPPRM1"


@dataclass
class Model:
    """Layer weights ``W[k]`` of shape ``(in, out)``, biases, and the raw gate ``g``.

    The mixing weight is ``gamma = sigmoid(g)``. A frozen gate never
    receives updates; ``g = -inf`` freezes ``gamma`` at exactly 0.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    g: float = 0.0
    gate_trainable: bool = True
    dropout: float = 0.0

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (W.shape[1],):
                raise ValueError(f"layer {k}: bias shape {b.shape} does not match {W.shape}")
            if k and self.weights[k - 1].shape[1] != W.shape[0]:
                raise ValueError(f"layer {k}: input dim {W.shape[0]} != previous output dim")

    @property
    def gamma(self) -> float:
        return float(expit(self.g))

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    def copy(self) -> "Model":
        return Model([W.copy() for W in self.weights], [b.copy() for b in self.biases],
                     self.g, self.gate_trainable, self.dropout)


def init_model(n_features: int, n_classes: int, hidden=(32,), rng=None, *,
               freeze_gamma: bool = False, dropout: float = 0.0) -> Model:
    """Uniform fan-in init in ``[-1/sqrt(in), 1/sqrt(in)]``; ``g = 0`` so ``gamma = 0.5``.

    ``freeze_gamma`` pins ``gamma`` to 0, which is the PPRGo operator.
    """
    rng = np.random.default_rng(rng)
    dims = [n_features, *hidden, n_classes]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    g = -np.inf if freeze_gamma else 0.0
    return Model(weights, biases, g, gate_trainable=not freeze_gamma, dropout=dropout)


def _forward(model: Model, X: np.ndarray, rng=None):
    if X.ndim != 2 or X.shape[1] != model.weights[0].shape[0]:
        raise ValueError(f"features have shape {X.shape}, model expects width {model.weights[0].shape[0]}")
    acts = [np.asarray(X, dtype=np.float64)]
    masks = []
    last = len(model.weights) - 1
    a = acts[0]
    for k, (W, b) in enumerate(zip(model.weights, model.biases)):
        a = a @ W + b
        if k < last:
            a = np.maximum(a, 0.0)
            if rng is not None and model.dropout > 0:
                keep = 1.0 - model.dropout
                mask = (rng.random(a.shape) < keep) / keep
                a = a * mask
                masks.append(mask)
            else:
                masks.append(None)
            acts.append(a)
    return a, acts, masks


def mlp_forward(model: Model, features: np.ndarray) -> np.ndarray:
    """Affine/ReLU chain with a linear last layer (no dropout)."""
    return _forward(model, features)[0]


@dataclass(eq=False)
class BatchContext:
    sources: np.ndarray
    rows: list
    support: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    ppr: object = field(repr=False)
    core: object = field(repr=False, default=None)


def build_batch(rows: list[PropagationRow], X: np.ndarray, y: np.ndarray) -> BatchContext:
    """Gather the features of the union of row supports and the source labels."""
    ppr, core, support = rows_to_csr(rows)
    sources = np.array([r.source for r in rows], dtype=np.int64)
    return BatchContext(
        sources=sources,
        rows=rows,
        support=support,
        features=np.asarray(X[support], dtype=np.float64),
        labels=np.asarray(y[sources], dtype=np.int64),
        ppr=ppr,
        core=core,
    )


def _propagator(ctx: BatchContext, gamma: float):
    if gamma == 0.0:
        return ctx.ppr
    if ctx.core is None:
        raise ValueError("batch has no core weights but gamma > 0")
    return (1.0 - gamma) * ctx.ppr + gamma * ctx.core


def batch_logits(model: Model, ctx: BatchContext) -> np.ndarray:
    H = mlp_forward(model, ctx.features)
    return _propagator(ctx, model.gamma) @ H


def loss_and_grads(model: Model, ctx: BatchContext, rng=None):
    """Mean softmax cross-entropy and its exact gradients.

    Returns ``(loss, grads, grad_g)`` where ``grads`` lists ``(dW, db)``
    per layer. ``rng`` enables dropout masks when the model has dropout.
    """
    gamma = model.gamma
    H, acts, masks = _forward(model, ctx.features, rng)
    P = _propagator(ctx, gamma)
    Z = P @ H
    B = Z.shape[0]
    lse = logsumexp(Z, axis=1)
    loss = float(np.mean(lse - Z[np.arange(B), ctx.labels]))
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite loss {loss}; check learning rate and inputs")

    dZ = np.exp(Z - lse[:, None])
    dZ[np.arange(B), ctx.labels] -= 1.0
    dZ /= B

    grad_g = 0.0
    if ctx.core is not None and np.isfinite(model.g):
        d_gamma = float(np.sum(dZ * ((ctx.core - ctx.ppr) @ H)))
        grad_g = d_gamma * gamma * (1.0 - gamma)

    delta = P.T @ dZ
    grads = []
    for k in range(len(model.weights) - 1, -1, -1):
        grads.append((acts[k].T @ delta, delta.sum(axis=0)))
        if k:
            delta = delta @ model.weights[k].T
            if masks[k - 1] is not None:
                delta = delta * masks[k - 1]
            delta = delta * (acts[k] > 0)
    grads.reverse()
    return loss, grads, grad_g


@dataclass
class AdamState:
    m: list
    v: list
    m_g: float = 0.0
    v_g: float = 0.0
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, model: Model, **kwargs) -> "AdamState":
        shapes = [a for W, b in zip(model.weights, model.biases) for a in (W, b)]
        return cls([np.zeros_like(a) for a in shapes], [np.zeros_like(a) for a in shapes], **kwargs)


def adam_step(model: Model, grads, grad_g: float, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place. A frozen gate is skipped."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    params = [a for W, b in zip(model.weights, model.biases) for a in (W, b)]
    flat_grads = [a for dW, db in grads for a in (dW, db)]
    for p, gr, m, v in zip(params, flat_grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * gr
        v *= b2
        v += (1.0 - b2) * gr * gr
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    if model.gate_trainable:
        state.m_g = b1 * state.m_g + (1.0 - b1) * grad_g
        state.v_g = b2 * state.v_g + (1.0 - b2) * grad_g * grad_g
        model.g -= lr * (state.m_g / c1) / (np.sqrt(state.v_g / c2) + state.eps)


def save_model(model: Model, target) -> None:
    """Checkpoint: magic, u64 layer count, u64 dims, f64 (W, b) per layer, f64 g."""
    if isinstance(target, (str, os.PathLike)):
        with open(target, "wb") as fh:
            return save_model(model, fh)
    target.write(CHECKPOINT_MAGIC)
    target.write(np.array([len(model.weights), *model.dims], dtype="<u8").tobytes())
    for W, b in zip(model.weights, model.biases):
        target.write(np.ascontiguousarray(W, dtype="<f8").tobytes())
        target.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
    target.write(np.array([model.g], dtype="<f8").tobytes())


def load_model(source) -> Model:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return load_model(fh)
    buf = source.read()
    if buf[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise DataFormatError("not a model checkpoint (bad magic)")
    pos = len(CHECKPOINT_MAGIC)
    try:
        n_layers = int(np.frombuffer(buf, "<u8", 1, pos)[0])
        pos += 8
        dims = np.frombuffer(buf, "<u8", n_layers + 1, pos).astype(int)
        pos += 8 * (n_layers + 1)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            weights.append(np.frombuffer(buf, "<f8", fan_in * fan_out, pos).reshape(fan_in, fan_out).copy())
            pos += 8 * fan_in * fan_out
            biases.append(np.frombuffer(buf, "<f8", fan_out, pos).copy())
            pos += 8 * fan_out
        g = float(np.frombuffer(buf, "<f8", 1, pos)[0])
        pos += 8
    except ValueError as exc:
        raise DataFormatError(f"truncated checkpoint: {exc}") from None
    if pos != len(buf):
        raise DataFormatError(f"{len(buf) - pos} trailing bytes in checkpoint")
    return Model(weights, biases, g, gate_trainable=np.isfinite(g))
