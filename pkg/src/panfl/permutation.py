"""Permutation plans: generation, network shuffling, and shuffle accounting.

Permutations are stored as index arrays: applying ``p`` to a vector means
``x[p]`` (dense form ``P[i, p[i]] = 1``). A plan holds one permutation per
hidden layer; the input and output layers are never permuted. Shuffling a
network rewires rows/columns of adjacent weight matrices consistently, so a
network without position encodings computes the same function afterwards.
Position encodings stay put: they belong to coordinates, not to neurons,
which is exactly what makes the shuffle observable when they are enabled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .network import MlpModel, forward, gen_encoding, jacobian_wrt_encoding


def gen_permutation(width: int, p_sf: float, rng: np.random.Generator) -> np.ndarray:
    """Random permutation with disorder probability ``p_sf``.

    Starting from the identity, row ``j`` swaps with a uniformly chosen later
    row with probability ``p_sf``, for ``j = 0 .. width-2`` (the last row has
    no later partner, so at most ``width-1`` swaps happen). Both draws are
    consumed every iteration so the stream position is independent of the
    swap outcomes.
    """
    if not 0.0 <= p_sf <= 1.0:
        raise ConfigError(f"p_sf must lie in [0, 1], got {p_sf}")
    perm = np.arange(width, dtype=np.int64)
    for j in range(width - 1):
        i = int(rng.integers(j + 1, width))
        p = rng.random()
        if p < p_sf:
            perm[j], perm[i] = perm[i], perm[j]
    return perm


def perm_matrix(perm: np.ndarray) -> np.ndarray:
    """Dense 0/1 matrix form, for display and tests only."""
    width = perm.shape[0]
    dense = np.zeros((width, width))
    dense[np.arange(width), perm] = 1.0
    return dense


def invert_perm(perm: np.ndarray) -> np.ndarray:
    """Inverse index array: composing with it recovers the identity."""
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.shape[0], dtype=perm.dtype)
    return inv


def invert_plan(plan: PermutationPlan) -> PermutationPlan:
    """Plan that undoes ``plan`` layer by layer."""
    return PermutationPlan([invert_perm(p) for p in plan.perms], p_sf=plan.p_sf)


def compose_perms(outer: np.ndarray, inner: np.ndarray) -> np.ndarray:
    """Index form of applying ``inner`` first, then ``outer``."""
    if outer.shape != inner.shape:
        raise ShapeError("cannot compose permutations of different lengths")
    return inner[outer]


def r_kept(perm_or_plan) -> float:
    """Fraction of indices mapped to themselves (mean of the matrix diagonal)."""
    if isinstance(perm_or_plan, PermutationPlan):
        return float(np.mean([r_kept(p) for p in perm_or_plan.perms]))
    perm = np.asarray(perm_or_plan)
    return float(np.mean(perm == np.arange(perm.shape[0])))


@dataclass
class PermutationPlan:
    """One permutation per hidden layer, plus the disorder level it was drawn at."""

    perms: list[np.ndarray]
    p_sf: float = 0.0

    def __post_init__(self):
        for p in self.perms:
            if sorted(p.tolist()) != list(range(len(p))):
                raise ShapeError("plan entries must be bijections")

    @property
    def hidden_widths(self) -> tuple[int, ...]:
        return tuple(len(p) for p in self.perms)

    def is_identity(self) -> bool:
        return all(np.array_equal(p, np.arange(len(p))) for p in self.perms)


def identity_plan(hidden_widths) -> PermutationPlan:
    return PermutationPlan([np.arange(int(w), dtype=np.int64) for w in hidden_widths],
                           p_sf=0.0)


def gen_plan(hidden_widths, p_sf: float, rng: np.random.Generator) -> PermutationPlan:
    return PermutationPlan([gen_permutation(int(w), p_sf, rng) for w in hidden_widths],
                           p_sf=p_sf)


def compose_plans(outer: PermutationPlan, inner: PermutationPlan) -> PermutationPlan:
    if outer.hidden_widths != inner.hidden_widths:
        raise ShapeError("plans cover different layer widths")
    return PermutationPlan([compose_perms(o, i) for o, i in zip(outer.perms, inner.perms)],
                           p_sf=outer.p_sf)


def shuffle_params(weights: list[np.ndarray], biases: list[np.ndarray],
                   plan: PermutationPlan) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Apply a plan to raw per-layer parameter arrays (used for models and for
    shape-matched optimizer state alike)."""
    n_layers = len(weights)
    last = n_layers - 1
    new_w, new_b = [], []
    for i in range(n_layers):
        row_p = plan.perms[i] if i < last else None
        col_p = plan.perms[i - 1] if i > 0 else None
        w, b = weights[i], biases[i]
        if row_p is not None:
            w = w[row_p]
            b = b[row_p]
        if col_p is not None:
            w = w[:, col_p]
        new_w.append(w.copy() if w is weights[i] else w)
        new_b.append(b.copy() if b is biases[i] else b)
    return new_w, new_b


def shuffle_model(model: MlpModel, plan: PermutationPlan) -> MlpModel:
    """Permuted copy of ``model``: rows of each hidden layer move together
    with their bias entries and the matching columns of the next layer.
    Encodings are not permuted."""
    if plan.hidden_widths != model.hidden_widths:
        raise ShapeError(f"plan widths {plan.hidden_widths} do not match model "
                         f"hidden widths {model.hidden_widths}")
    weights, biases = shuffle_params(model.weights, model.biases, plan)
    return MlpModel(weights=weights, biases=biases, pan=model.pan,
                    activations=list(model.activations))


def shuffle_error(model: MlpModel, plan: PermutationPlan, batch, *,
                  encoding_override: np.ndarray | None = None) -> float:
    """Mean over the batch of ||shuffled output - output||_2 / output_dim."""
    return shuffle_report(model, plan, batch,
                          encoding_override=encoding_override).err_mean


@dataclass(frozen=True)
class ShuffleReport:
    err_mean: float
    err_max: float
    r_kept_per_layer: tuple[float, ...]
    r_kept: float


def shuffle_report(model: MlpModel, plan: PermutationPlan, batch, *,
                   encoding_override: np.ndarray | None = None) -> ShuffleReport:
    """Shuffle error plus kept-ratio accounting for one plan.

    The encoding stays fixed on both sides of the comparison; an explicit
    ``encoding_override`` probes the model with that vector instead of the
    generated sinusoid (same hook as in :func:`panfl.network.forward`).
    """
    y = forward(model, batch, encoding_override=encoding_override).output
    y_sf = forward(shuffle_model(model, plan), batch,
                   encoding_override=encoding_override).output
    per_sample = np.linalg.norm(y_sf - y, axis=1) / y.shape[1]
    per_layer = tuple(r_kept(p) for p in plan.perms)
    return ShuffleReport(err_mean=float(per_sample.mean()),
                         err_max=float(per_sample.max()),
                         r_kept_per_layer=per_layer,
                         r_kept=float(np.mean(per_layer)))


def first_order_shuffle_error(model: MlpModel, plan: PermutationPlan, batch) -> float:
    """Taylor estimate of the shuffle error for a single-hidden-layer model.

    Treats the shuffled output as a function of the shared encoding vector
    and linearizes: |(Pe - e)^T dy_sf/de| (norm'd and averaged like
    ``shuffle_error`` when the output has several coordinates). The encoding
    difference is the same for additive and multiplicative modes because the
    multiplicative unit offset cancels.
    """
    if len(model.hidden_widths) != 1:
        raise ShapeError("the first-order estimate is defined for one hidden layer")
    e = gen_encoding(model.hidden_widths[0], model.pan)
    delta = e[plan.perms[0]] - e
    shuffled = shuffle_model(model, plan)
    jac = jacobian_wrt_encoding(shuffled, batch)
    est = jac @ delta
    per_sample = np.linalg.norm(est, axis=1) / est.shape[1]
    return float(per_sample.mean())


@dataclass(frozen=True)
class ShuffleSchedule:
    """In-training shuffle injection: expected count spread over local steps."""

    n_shuffles: float
    p_sf: float
    steps: float
    per_step_prob: float


def shuffle_injection_schedule(epochs: int, n_samples: int, batch_size: int,
                               n_shuffles: float, p_sf: float) -> ShuffleSchedule:
    """Per-step shuffle probability ``n_shuffles / (epochs * n_samples / batch_size)``."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    if n_samples < batch_size:
        raise ConfigError(f"need n_samples >= batch_size, got {n_samples} < {batch_size}")
    if n_shuffles < 0:
        raise ConfigError(f"n_shuffles must be >= 0, got {n_shuffles}")
    steps = epochs * n_samples / batch_size
    if steps <= 0:
        raise ConfigError("schedule has no local steps (epochs * n_samples / batch_size = 0)")
    prob = min(max(n_shuffles / steps, 0.0), 1.0)
    return ShuffleSchedule(n_shuffles=n_shuffles, p_sf=p_sf, steps=steps,
                           per_step_prob=prob)


def simulate_schedule_r_kept(schedule: ShuffleSchedule, width: int,
                             rng: np.random.Generator) -> float:
    """Run the injection schedule on a single layer and return the kept ratio
    of the composed permutation."""
    composed = np.arange(width, dtype=np.int64)
    for _ in range(int(round(schedule.steps))):
        if rng.random() <= schedule.per_step_prob:
            step_perm = gen_permutation(width, schedule.p_sf, rng)
            composed = compose_perms(step_perm, composed)
    return r_kept(composed)
