"""Shared test oracles: finite-difference gradients and brute-force assignment."""

import itertools

import numpy as np

from panfl.network import backward, forward, softmax_cross_entropy


def loss_of(model, X, y):
    return softmax_cross_entropy(forward(model, X).output, y)[0]


def finite_difference_grads(model, X, y, h=1e-5):
    """Central-difference oracle over every parameter entry."""
    grads = []
    for p in model.parameters():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            ix = it.multi_index
            orig = p[ix]
            p[ix] = orig + h
            hi = loss_of(model, X, y)
            p[ix] = orig - h
            lo = loss_of(model, X, y)
            p[ix] = orig
            g[ix] = (hi - lo) / (2 * h)
        grads.append(g)
    return grads


def max_relative_grad_error(model, X, y, h=1e-5):
    acts = forward(model, X)
    _, lgrad = softmax_cross_entropy(acts.output, y)
    analytic = list(backward(model, acts, lgrad).parameters())
    numeric = finite_difference_grads(model, X, y, h)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def brute_force_assignment_cost(cost):
    """Exhaustive minimum over all permutations (J <= ~8)."""
    best = np.inf
    for perm in itertools.permutations(range(cost.shape[0])):
        total = sum(cost[i, j] for i, j in enumerate(perm))
        best = min(best, total)
    return best
