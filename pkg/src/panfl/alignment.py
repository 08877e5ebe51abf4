"""Post-hoc alignment diagnostics between two models of the same architecture.

A neuron's "representation" is its activation vector over a probe set; two
models are compared by solving the optimal assignment between their neurons'
representations (Hungarian method on the pairwise L2 cost matrix). The match
ratio -- the fraction of neurons assigned to their own coordinate -- is the
alignment signal. Preference vectors attribute each neuron to the class
whose logit it feeds most strongly, a second coordinate-wise comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .data import Dataset
from .errors import ConfigError, ShapeError
from .federated import evaluate
from .network import MlpModel, forward, output_grad_to_layer


@dataclass
class ActivationProfile:
    """Per-neuron activation rows over the probe set: shape (width, n_probe)."""

    layer: int
    matrix: np.ndarray


def collect_activations(model: MlpModel, probe: Dataset, layer: int) -> ActivationProfile:
    """Post-activation values of hidden layer ``layer`` (1..L-1), one row per neuron."""
    if not 1 <= layer <= model.n_layers - 1:
        raise IndexError(f"layer {layer} is not a hidden layer (valid: 1..{model.n_layers - 1})")
    acts = forward(model, probe.features)
    return ActivationProfile(layer=layer, matrix=acts.post[layer].T.copy())


@dataclass
class AssignmentResult:
    """Optimal assignment between two profiles: local neuron ``assignment[i]``
    matches global neuron ``i``."""

    assignment: np.ndarray
    cost: float
    match_ratio: float


def match_neurons(global_profile: ActivationProfile,
                  local_profile: ActivationProfile) -> AssignmentResult:
    """Minimum-total-L2 assignment between the two sets of neuron rows."""
    g, l = global_profile.matrix, local_profile.matrix
    if g.shape != l.shape:
        raise ShapeError(f"profiles differ in shape: {g.shape} vs {l.shape}")
    # cost[i, j] = ||g_i - l_j||_2; row-wise differences keep identical rows
    # at exactly zero cost (a Gram expansion would not)
    cost = np.empty((g.shape[0], g.shape[0]))
    for i in range(g.shape[0]):
        cost[i] = np.linalg.norm(g[i] - l, axis=1)
    rows, cols = linear_sum_assignment(cost)
    assignment = np.empty(g.shape[0], dtype=np.int64)
    assignment[rows] = cols
    total = float(cost[rows, cols].sum())
    ratio = float(np.mean(assignment == np.arange(g.shape[0])))
    return AssignmentResult(assignment=assignment, cost=total, match_ratio=ratio)


@dataclass
class PreferenceMatrix:
    """Per-neuron class-preference scores, shape (width, n_classes)."""

    layer: int
    scores: np.ndarray

    @property
    def argmax_class(self) -> np.ndarray:
        # ties resolve to the lowest class index
        return self.scores.argmax(axis=1)


def preference_vectors(model: MlpModel, probe: Dataset, layer: int) -> PreferenceMatrix:
    """Class preference of each neuron in hidden layer ``layer``.

    For class ``c`` the score of neuron ``j`` sums, over all probe samples of
    class ``c``, the neuron's activation times the gradient of the class-c
    logit with respect to that activation.
    """
    if not 1 <= layer <= model.n_layers - 1:
        raise IndexError(f"layer {layer} is not a hidden layer (valid: 1..{model.n_layers - 1})")
    counts = np.bincount(probe.labels, minlength=probe.n_classes)
    if (counts == 0).any():
        missing = np.flatnonzero(counts == 0).tolist()
        raise ConfigError(f"probe set is missing samples for classes {missing}")
    acts = forward(model, probe.features)
    h = acts.post[layer]
    n, out_dim = acts.output.shape
    scores = np.zeros((h.shape[1], probe.n_classes))
    for c in range(probe.n_classes):
        mask = probe.labels == c
        out_grad = np.zeros((n, out_dim))
        out_grad[:, c] = 1.0
        grad_h = output_grad_to_layer(model, acts, out_grad, layer)
        scores[:, c] = (h[mask] * grad_h[mask]).sum(axis=0)
    return PreferenceMatrix(layer=layer, scores=scores)


@dataclass
class FusionCurve:
    """Accuracy of (1-mu) * model_a + mu * model_b along a grid of mu."""

    grid: np.ndarray
    accuracy: np.ndarray


def interpolate_models(model_a: MlpModel, model_b: MlpModel, mu: float) -> MlpModel:
    if model_a.layer_sizes != model_b.layer_sizes:
        raise ShapeError(f"architectures differ: {model_a.layer_sizes} "
                         f"vs {model_b.layer_sizes}")
    if model_a.pan != model_b.pan or model_a.activations != model_b.activations:
        raise ShapeError("models must share encoding config and activations")
    out = model_a.copy()
    for i in range(out.n_layers):
        out.weights[i] = (1.0 - mu) * model_a.weights[i] + mu * model_b.weights[i]
        out.biases[i] = (1.0 - mu) * model_a.biases[i] + mu * model_b.biases[i]
    return out


def fusion_curve(model_a: MlpModel, model_b: MlpModel, test: Dataset,
                 grid=None) -> FusionCurve:
    if grid is None:
        grid = np.linspace(0.0, 1.0, 11)
    grid = np.asarray(grid, dtype=np.float64)
    accuracy = np.array([evaluate(interpolate_models(model_a, model_b, float(mu)), test)
                         for mu in grid])
    return FusionCurve(grid=grid, accuracy=accuracy)
