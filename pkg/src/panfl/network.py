"""Multilayer perceptron with optional position-aware neurons.

A position-aware neuron fuses a fixed sinusoidal value into its
pre-activation, either additively::

    h_l = f_l(W_l h_{l-1} + b_l + e_l)        e_j = A sin(2 pi T j / J)

or multiplicatively::

    h_l = f_l((W_l h_{l-1} + b_l) * e_l)      e_j = 1 + A sin(2 pi T j / J)

with ``j`` the neuron's index within its layer (starting at 0), ``J`` the
layer width, ``A`` the amplitude and ``T`` the period. Encodings are a pure
function of ``(j, J, A, T)``: never learned, never stored on the model, and
never permuted. Only hidden layers carry them; the output layer has identity
activation and no encoding. With ``A = 0`` (or mode off) every operation here
reproduces a plain MLP bit for bit, which is what makes the encodings usable
as a switch for the permutation-invariance property.

Layer bookkeeping: ``weights[i]`` has shape ``(sizes[i+1], sizes[i])`` and
maps activation ``h_i`` to pre-activation ``s_{i+1}``. Batches are row-major:
``X`` is ``(n_samples, sizes[0])``. Hidden activations are numbered 1..L-1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ShapeError
from .linalg import as_matrix


class PanMode(str, Enum):
    OFF = "off"
    ADDITIVE = "additive"
    MULTIPLICATIVE = "multiplicative"


@dataclass(frozen=True)
class PanConfig:
    """Position-encoding switch: mode plus amplitude ``A`` and period ``T``."""

    mode: PanMode = PanMode.OFF
    amplitude: float = 0.0
    period: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mode", PanMode(self.mode))
        if self.amplitude < 0:
            raise ValueError(f"amplitude must be >= 0, got {self.amplitude}")
        if self.period <= 0:
            raise ValueError(f"period must be > 0, got {self.period}")

    @property
    def enabled(self) -> bool:
        return self.mode is not PanMode.OFF


def gen_encoding(width: int, cfg: PanConfig) -> np.ndarray:
    """Per-neuron encoding vector for a hidden layer of ``width`` neurons.

    Additive entries lie in [-A, A]; multiplicative entries in [1-A, 1+A].
    Mode off returns zeros (additive semantics).
    """
    if width < 1:
        raise ShapeError(f"layer width must be >= 1, got {width}")
    j = np.arange(width, dtype=np.float64)
    wave = cfg.amplitude * np.sin(2.0 * math.pi * cfg.period * j / width)
    if cfg.mode is PanMode.MULTIPLICATIVE:
        return 1.0 + wave
    if cfg.mode is PanMode.ADDITIVE:
        return wave
    return np.zeros(width)


def _apply_activation(s: np.ndarray, tag: str) -> np.ndarray:
    if tag == "relu":
        return np.maximum(s, 0.0)
    if tag == "identity":
        return s
    raise ValueError(f"unknown activation tag {tag!r}")


def _activation_grad(s: np.ndarray, tag: str) -> np.ndarray:
    # ReLU subgradient at exactly 0 is taken as 0.
    if tag == "relu":
        return (s > 0.0).astype(np.float64)
    if tag == "identity":
        return np.ones_like(s)
    raise ValueError(f"unknown activation tag {tag!r}")


@dataclass
class MlpModel:
    """Layered dense network: the object that is trained, shuffled, averaged
    and analyzed.

    ``activations`` holds one tag per weight layer ("relu" or "identity");
    the last entry must be "identity".
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    pan: PanConfig = field(default_factory=PanConfig)
    activations: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ShapeError("weights and biases must pair up layer by layer")
        if not self.weights:
            raise ShapeError("model needs at least one layer")
        if not self.activations:
            self.activations = ["relu"] * (len(self.weights) - 1) + ["identity"]
        if len(self.activations) != len(self.weights):
            raise ShapeError("need one activation tag per weight layer")
        if self.activations[-1] != "identity":
            raise ShapeError("output layer activation must be identity")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ShapeError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i > 0 and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ShapeError(f"layer {i}: input width {w.shape[1]} does not "
                                 f"match previous layer width {self.weights[i - 1].shape[0]}")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @property
    def n_layers(self) -> int:
        """Number of weight layers (L)."""
        return len(self.weights)

    @property
    def hidden_widths(self) -> tuple[int, ...]:
        return self.layer_sizes[1:-1]

    def encoding(self, layer: int) -> np.ndarray:
        """Encoding vector of hidden layer ``layer`` (1..L-1)."""
        if not 1 <= layer <= self.n_layers - 1:
            raise ShapeError(f"layer {layer} is not a hidden layer of this model")
        return gen_encoding(self.layer_sizes[layer], self.pan)

    def copy(self) -> "MlpModel":
        return MlpModel(weights=[w.copy() for w in self.weights],
                        biases=[b.copy() for b in self.biases],
                        pan=self.pan,
                        activations=list(self.activations))

    def parameters(self):
        """Iterate over all parameter arrays (weights then biases, by layer)."""
        yield from self.weights
        yield from self.biases


def init_mlp(layer_sizes, pan: PanConfig, rng: np.random.Generator,
             hidden_activation: str = "relu") -> MlpModel:
    """Seeded Kaiming-uniform initialization (fan-in scaled), zero biases."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise ShapeError("need at least input and output sizes")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    acts = [hidden_activation] * (len(weights) - 1) + ["identity"]
    return MlpModel(weights=weights, biases=biases, pan=pan, activations=acts)


@dataclass
class Activations:
    """Per-layer pre- and post-activations for one batch.

    ``post[0]`` is the input batch; ``post[-1]`` the model output;
    ``pre[i]`` feeds ``post[i+1]``.
    """

    pre: list[np.ndarray]
    post: list[np.ndarray]

    @property
    def output(self) -> np.ndarray:
        return self.post[-1]


def forward(model: MlpModel, batch, *, encoding_override: np.ndarray | None = None
            ) -> Activations:
    """Forward pass keeping all intermediate activations.

    ``encoding_override`` substitutes the given vector for the generated
    encoding at every hidden layer (probe hook for sensitivity analysis;
    requires equal hidden widths).
    """
    x = as_matrix(batch, cols=model.layer_sizes[0])
    pan_on = model.pan.enabled
    pre: list[np.ndarray] = []
    post: list[np.ndarray] = [x]
    last = model.n_layers - 1
    for i, (w, b, tag) in enumerate(zip(model.weights, model.biases, model.activations)):
        z = post[-1] @ w.T + b
        if pan_on and i < last:
            e = encoding_override if encoding_override is not None \
                else gen_encoding(w.shape[0], model.pan)
            if e.shape[0] != w.shape[0]:
                raise ShapeError(f"encoding length {e.shape[0]} does not match "
                                 f"layer width {w.shape[0]}")
            if model.pan.mode is PanMode.MULTIPLICATIVE:
                s = z * e
            else:
                s = z + e
        else:
            s = z
        pre.append(s)
        post.append(_apply_activation(s, tag))
    return Activations(pre=pre, post=post)


def predict_logits(model: MlpModel, batch) -> np.ndarray:
    return forward(model, batch).output


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray
                          ) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over the batch and its gradient w.r.t. logits."""
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    loss = -log_probs[np.arange(n), labels].mean()
    grad = np.exp(log_probs)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def parameters(self):
        yield from self.weights
        yield from self.biases


def backward(model: MlpModel, acts: Activations, loss_grad: np.ndarray) -> Gradients:
    """Exact gradients of the loss w.r.t. all weights and biases.

    ``loss_grad`` is dLoss/dOutput with the batch already folded in. For
    multiplicative encodings the bias gradient through a hidden layer carries
    the per-neuron factor ``e_l`` on top of the activation derivative.
    """
    pan_on = model.pan.enabled
    last = model.n_layers - 1
    d_post = np.asarray(loss_grad, dtype=np.float64)
    if d_post.shape != acts.output.shape:
        raise ShapeError(f"loss gradient shape {d_post.shape} does not match "
                         f"output shape {acts.output.shape}")
    grad_w: list[np.ndarray] = [None] * model.n_layers
    grad_b: list[np.ndarray] = [None] * model.n_layers
    for i in range(last, -1, -1):
        d_pre = d_post * _activation_grad(acts.pre[i], model.activations[i])
        if pan_on and i < last and model.pan.mode is PanMode.MULTIPLICATIVE:
            d_pre = d_pre * gen_encoding(model.weights[i].shape[0], model.pan)
        grad_w[i] = d_pre.T @ acts.post[i]
        grad_b[i] = d_pre.sum(axis=0)
        if i > 0:
            d_post = d_pre @ model.weights[i]
    return Gradients(weights=grad_w, biases=grad_b)


def output_grad_to_layer(model: MlpModel, acts: Activations, out_grad: np.ndarray,
                         layer: int) -> np.ndarray:
    """Backpropagate a gradient at the output down to hidden activation ``h_layer``.

    Returns dL/dh_layer of shape (n_samples, width of layer). Used by the
    preference-vector analysis, where the "loss" is a single class logit.
    """
    if not 1 <= layer <= model.n_layers - 1:
        raise ShapeError(f"layer {layer} is not a hidden layer")
    pan_on = model.pan.enabled
    last = model.n_layers - 1
    d_post = np.asarray(out_grad, dtype=np.float64)
    for i in range(last, layer - 1, -1):
        d_pre = d_post * _activation_grad(acts.pre[i], model.activations[i])
        if pan_on and i < last and model.pan.mode is PanMode.MULTIPLICATIVE:
            d_pre = d_pre * gen_encoding(model.weights[i].shape[0], model.pan)
        d_post = d_pre @ model.weights[i]
    return d_post


class SgdOptimizer:
    """SGD with momentum, optional proximal pull toward an anchor model, and
    optional linear learning-rate warm-up.

    Update per parameter: ``g' = grad + prox_mu * (theta - anchor)``;
    ``v = momentum * v + g'``; ``theta -= lr_t * v`` where ``lr_t`` ramps
    linearly from ``lr / warmup_steps`` to ``lr`` when warm-up is enabled.
    """

    def __init__(self, lr: float, momentum: float = 0.0, prox_mu: float = 0.0,
                 anchor: MlpModel | None = None, warmup_steps: int = 0):
        if prox_mu < 0:
            raise ValueError(f"prox_mu must be >= 0, got {prox_mu}")
        if prox_mu > 0 and anchor is None:
            raise ValueError("prox_mu > 0 requires an anchor model")
        self.lr = lr
        self.momentum = momentum
        self.prox_mu = prox_mu
        self.anchor = anchor
        self.warmup_steps = warmup_steps
        self.velocity: list[np.ndarray] | None = None
        self._steps = 0

    def _lr_now(self) -> float:
        if self.warmup_steps > 0 and self._steps < self.warmup_steps:
            return self.lr * (self._steps + 1) / self.warmup_steps
        return self.lr

    def step(self, model: MlpModel, grads: Gradients) -> MlpModel:
        params = list(model.parameters())
        gs = list(grads.parameters())
        if self.velocity is None:
            self.velocity = [np.zeros_like(p) for p in params]
        anchors = list(self.anchor.parameters()) if self.anchor is not None else None
        lr = self._lr_now()
        for idx, (p, g) in enumerate(zip(params, gs)):
            if p.shape != g.shape:
                raise ShapeError(f"gradient shape {g.shape} does not match "
                                 f"parameter shape {p.shape}")
            eff = g
            if self.prox_mu > 0:
                eff = g + self.prox_mu * (p - anchors[idx])
            v = self.velocity[idx]
            v *= self.momentum
            v += eff
            p -= lr * v
        self._steps += 1
        return model


def jacobian_wrt_encoding(model: MlpModel, batch, step: float = 1e-5) -> np.ndarray:
    """Numeric Jacobian of the outputs w.r.t. a shared per-layer encoding.

    Central finite differences over one encoding vector applied identically
    at every hidden layer; requires encodings enabled and equal hidden
    widths. Returns shape (n_samples, output_dim, hidden_width).
    """
    if not model.pan.enabled:
        raise ShapeError("encodings are off; the Jacobian is undefined")
    widths = set(model.hidden_widths)
    if len(widths) != 1:
        raise ShapeError(f"hidden widths must all be equal, got {model.hidden_widths}")
    width = widths.pop()
    x = as_matrix(batch, cols=model.layer_sizes[0])
    base = gen_encoding(width, model.pan)
    out_dim = model.layer_sizes[-1]
    jac = np.zeros((x.shape[0], out_dim, width))
    for j in range(width):
        e_hi = base.copy()
        e_hi[j] += step
        e_lo = base.copy()
        e_lo[j] -= step
        y_hi = forward(model, x, encoding_override=e_hi).output
        y_lo = forward(model, x, encoding_override=e_lo).output
        jac[:, :, j] = (y_hi - y_lo) / (2.0 * step)
    return jac
