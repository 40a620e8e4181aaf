import numpy as np

from coreppr.diffusion import DiffusionConfig, build_rows
from coreppr.graph import Graph, core_scores
from coreppr.neural import build_batch, init_model, loss_and_grads

from oracles import central_difference


def random_connected_graph(rng, n, p):
    """Erdos-Renyi edges plus a random spanning path, so every node has degree >= 1."""
    upper = np.triu(rng.random((n, n)) < p, 1)
    u, v = np.nonzero(upper)
    order = rng.permutation(n)
    u = np.concatenate([u, order[:-1]])
    v = np.concatenate([v, order[1:]])
    return Graph.from_edges(u, v, n=n)


def random_graph(rng, n, p):
    upper = np.triu(rng.random((n, n)) < p, 1)
    u, v = np.nonzero(upper)
    return Graph.from_edges(u, v, n=max(n, 1))


def star(leaves):
    return Graph.from_edges(np.zeros(leaves, dtype=int), np.arange(1, leaves + 1))


def gradient_instance(seed, n=10):
    """Random small graph, model, and batch with f, h <= 8, c <= 4, batch <= 5."""
    rng = np.random.default_rng(seed)
    g = random_connected_graph(rng, n, 0.3)
    f, h, c = (int(v) for v in rng.integers([2, 2, 2], [9, 9, 5]))
    X = rng.normal(size=(n, f))
    y = rng.integers(0, c, size=n)
    model = init_model(f, c, (h,), rng)
    model.g = float(rng.normal())
    sources = rng.choice(n, int(rng.integers(1, 6)), replace=False)
    rows = build_rows(g, core_scores(g), sources, DiffusionConfig(l=int(rng.integers(2, n + 1))))
    return model, build_batch(rows, X, y)


def max_relative_error(analytic, numeric):
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-12)
    return float((np.abs(analytic - numeric) / denom).max())


def numeric_gradients(model, ctx):
    out = []
    for k in range(len(model.weights)):
        per_layer = []
        for attr in ("weights", "biases"):
            def loss_at(x, k=k, attr=attr):
                m = model.copy()
                getattr(m, attr)[k] = x
                return loss_and_grads(m, ctx)[0]

            per_layer.append(central_difference(loss_at, getattr(model, attr)[k]))
        out.append(tuple(per_layer))

    def loss_at_g(x):
        m = model.copy()
        m.g = float(x[0])
        return loss_and_grads(m, ctx)[0]

    return out, float(central_difference(loss_at_g, [model.g])[0])


def check_gradients(model, ctx):
    _, grads, grad_g = loss_and_grads(model, ctx)
    num, num_g = numeric_gradients(model, ctx)
    errors = [max_relative_error(a, b) for pa, pb in zip(grads, num) for a, b in zip(pa, pb)]
    errors.append(max_relative_error([grad_g], [num_g]))
    return max(errors)
