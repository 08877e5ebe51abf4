"""Federated training loop: client sampling, local SGD, coordinate averaging.

Each round a fraction of clients downloads the global model, trains it
locally (optionally with a proximal pull toward the download, and optionally
with scheduled mid-training shuffles), and the server aggregates the uploads
coordinate by coordinate. Aggregation is the plain unweighted mean by
default; sample-count weighting sits behind a flag. "fedopt" treats the
difference between the old global model and the average upload as a
pseudo-gradient for a server-side SGD-with-momentum step.

Determinism: everything derives from the root seed. Client selection uses
the stream (seed, 1, round); client ``k``'s local training uses
(seed, 2, round, k); model init uses (seed, 0). Results are therefore
independent of client execution order, and aggregation always sums in
client-id order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import ClientDataset, Dataset, PartitionSpec, iter_batches, partition_dirichlet
from .errors import ConfigError, NumericsError, ShapeError
from .linalg import derive_rng
from .network import (MlpModel, PanConfig, SgdOptimizer, backward, forward, init_mlp,
                      predict_logits, softmax_cross_entropy)
from .permutation import (PermutationPlan, ShuffleSchedule, compose_plans, gen_plan,
                          identity_plan, r_kept, shuffle_injection_schedule,
                          shuffle_params)

_TAG_INIT = 0
_TAG_SELECT = 1
_TAG_CLIENT = 2

ALGORITHMS = ("fedavg", "fedprox", "fedopt")


@dataclass(frozen=True)
class FederationConfig:
    n_clients: int = 10
    participation: float = 1.0
    local_epochs: int = 5
    rounds: int = 20
    batch_size: int = 64
    alpha: float = 10.0
    lr: float = 0.05
    momentum: float = 0.9
    algorithm: str = "fedavg"
    prox_mu: float = 1e-3
    server_lr: float = 1.0
    server_momentum: float = 0.9
    pan: PanConfig = field(default_factory=PanConfig)
    n_shuffles: float = 0.0
    shuffle_p: float = 0.1
    hidden_sizes: tuple[int, ...] = (32, 32)
    warmup_steps: int = 0
    sample_weighted: bool = False
    seed: int = 0
    partition_seed: int | None = None

    def __post_init__(self):
        if self.n_clients < 1:
            raise ConfigError(f"n_clients must be >= 1, got {self.n_clients}")
        if not 0.0 < self.participation <= 1.0:
            raise ConfigError(f"participation must lie in (0, 1], got {self.participation}")
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")
        if self.local_epochs < 0:
            raise ConfigError(f"local_epochs must be >= 0, got {self.local_epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; "
                              f"expected one of {ALGORITHMS}")
        if self.algorithm == "fedprox" and self.prox_mu <= 0:
            raise ConfigError("fedprox needs prox_mu > 0")
        if self.n_shuffles < 0:
            raise ConfigError(f"n_shuffles must be >= 0, got {self.n_shuffles}")

    @property
    def clients_per_round(self) -> int:
        return max(1, math.ceil(self.participation * self.n_clients))


@dataclass
class LocalResult:
    model: MlpModel
    n_shuffles: int
    composed_plan: PermutationPlan


def local_train(model: MlpModel, features: np.ndarray, labels: np.ndarray, *,
                epochs: int, batch_size: int, opt: SgdOptimizer,
                rng: np.random.Generator,
                schedule: ShuffleSchedule | None = None) -> LocalResult:
    """Train ``model`` in place for ``epochs`` passes over the given samples.

    When a shuffle schedule is given, each batch step first flips a coin; on
    a hit the weights and biases are permuted by a freshly drawn plan before
    the gradient step. The shuffle touches parameters only: optimizer
    momentum keeps its coordinates and goes stale, exactly as when a
    framework optimizer's state is keyed by parameter slot.
    Raises NumericsError on a non-finite loss.
    """
    composed = identity_plan(model.hidden_widths)
    shuffles = 0
    for _ in range(epochs):
        for xb, yb in iter_batches(features, labels, batch_size, rng):
            if schedule is not None and schedule.per_step_prob > 0 \
                    and rng.random() <= schedule.per_step_prob:
                plan = gen_plan(model.hidden_widths, schedule.p_sf, rng)
                model.weights, model.biases = shuffle_params(model.weights,
                                                             model.biases, plan)
                composed = compose_plans(plan, composed)
                shuffles += 1
            acts = forward(model, xb)
            loss, loss_grad = softmax_cross_entropy(acts.output, yb)
            if not math.isfinite(loss):
                raise NumericsError(f"non-finite training loss: {loss}")
            grads = backward(model, acts, loss_grad)
            opt.step(model, grads)
    return LocalResult(model=model, n_shuffles=shuffles, composed_plan=composed)


def evaluate(model: MlpModel, test: Dataset) -> float:
    """Top-1 accuracy; ties resolve to the lowest class index."""
    logits = predict_logits(model, test.features)
    predictions = logits.argmax(axis=1)
    return float(np.mean(predictions == test.labels))


def weight_divergence(models: list[MlpModel], layer: int) -> float:
    """Mean Frobenius distance of the clients' layer weights to their mean."""
    if len(models) < 2:
        raise ShapeError("weight divergence needs at least two client models")
    mats = [m.weights[layer] for m in models]
    shape = mats[0].shape
    if any(m.shape != shape for m in mats):
        raise ShapeError("client models disagree on layer shapes")
    # anchored mean: exactly zero deviations when all clients are identical
    center = mats[0] + np.mean([m - mats[0] for m in mats], axis=0)
    return float(np.mean([np.linalg.norm(m - center) for m in mats]))


def divergence_per_layer(models: list[MlpModel]) -> tuple[float, ...]:
    return tuple(weight_divergence(models, i) for i in range(models[0].n_layers))


@dataclass
class RoundRecord:
    round_index: int
    accuracy: float
    divergence: tuple[float, ...]
    n_shuffles: int
    r_kept: float


@dataclass
class RoundState:
    round_index: int
    model: MlpModel
    server_velocity: list[np.ndarray] | None = None


@dataclass
class MetricsLog:
    records: list[RoundRecord]
    model: MlpModel | None = None
    clients: list[ClientDataset] | None = None

    @property
    def final_accuracy(self) -> float:
        return self.records[-1].accuracy

    @property
    def best_accuracy(self) -> float:
        return max(r.accuracy for r in self.records)


def average_models(models: list[MlpModel], weights: np.ndarray) -> MlpModel:
    """Coordinate-wise weighted mean of same-shaped models."""
    out = models[0].copy()
    for i in range(out.n_layers):
        out.weights[i] = sum(w * m.weights[i] for w, m in zip(weights, models))
        out.biases[i] = sum(w * m.biases[i] for w, m in zip(weights, models))
    return out


def _client_update(state: RoundState, cfg: FederationConfig, train: Dataset,
                   client: ClientDataset, t: int) -> LocalResult:
    local = state.model.copy()
    anchor = state.model.copy() if cfg.algorithm == "fedprox" else None
    opt = SgdOptimizer(lr=cfg.lr, momentum=cfg.momentum,
                       prox_mu=cfg.prox_mu if cfg.algorithm == "fedprox" else 0.0,
                       anchor=anchor, warmup_steps=cfg.warmup_steps)
    schedule = None
    if cfg.n_shuffles > 0 and cfg.local_epochs > 0:
        schedule = shuffle_injection_schedule(cfg.local_epochs, client.n_samples,
                                              cfg.batch_size, cfg.n_shuffles,
                                              cfg.shuffle_p)
    return local_train(local,
                       train.features[client.indices],
                       train.labels[client.indices],
                       epochs=cfg.local_epochs,
                       batch_size=cfg.batch_size,
                       opt=opt,
                       rng=derive_rng(cfg.seed, _TAG_CLIENT, t, client.client_id),
                       schedule=schedule)


def run_round(state: RoundState, cfg: FederationConfig, train: Dataset,
              clients: list[ClientDataset], test: Dataset | None = None,
              jobs: int = 1) -> tuple[RoundState, RoundRecord]:
    """One communication round: sample, train locally, aggregate, evaluate.

    Client updates are independent; ``jobs > 1`` runs them concurrently.
    Per-client seed streams and client-id-ordered aggregation keep the result
    identical regardless of execution order.
    """
    t = state.round_index
    select_rng = derive_rng(cfg.seed, _TAG_SELECT, t)
    selected = np.sort(select_rng.choice(cfg.n_clients, size=cfg.clients_per_round,
                                         replace=False))
    if selected.size == 0:
        raise ConfigError("no clients selected")

    picked = [clients[k] for k in selected.tolist()]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda c: _client_update(state, cfg, train, c, t),
                                    picked))
    else:
        results = [_client_update(state, cfg, train, c, t) for c in picked]

    uploads = [res.model for res in results]
    sizes = [c.n_samples for c in picked]
    total_shuffles = sum(res.n_shuffles for res in results)
    kept_ratios = [r_kept(res.composed_plan) for res in results]

    if cfg.sample_weighted:
        weights = np.asarray(sizes, dtype=np.float64)
        weights /= weights.sum()
    else:
        weights = np.full(len(uploads), 1.0 / len(uploads))
    averaged = average_models(uploads, weights)

    if cfg.algorithm == "fedopt":
        velocity = state.server_velocity
        if velocity is None:
            velocity = [np.zeros_like(p) for p in state.model.parameters()]
        new_model = state.model.copy()
        params = list(new_model.parameters())
        for v, p_old, p_avg, p_new in zip(velocity, state.model.parameters(),
                                          averaged.parameters(), params):
            v *= cfg.server_momentum
            v += p_old - p_avg
            p_new -= cfg.server_lr * v
        next_state = RoundState(round_index=t + 1, model=new_model,
                                server_velocity=velocity)
    else:
        next_state = RoundState(round_index=t + 1, model=averaged,
                                server_velocity=state.server_velocity)

    divergence = divergence_per_layer(uploads) if len(uploads) >= 2 \
        else tuple(0.0 for _ in range(state.model.n_layers))
    accuracy = evaluate(next_state.model, test) if test is not None else float("nan")
    record = RoundRecord(round_index=t, accuracy=accuracy, divergence=divergence,
                         n_shuffles=total_shuffles,
                         r_kept=float(np.mean(kept_ratios)))
    return next_state, record


def run_experiment(cfg: FederationConfig, train: Dataset, test: Dataset,
                   jobs: int = 1) -> MetricsLog:
    """Full multi-round trajectory; deterministic under cfg.seed.

    The Dirichlet split follows cfg.seed unless ``partition_seed`` pins the
    task while training seeds vary across repetitions.
    """
    split_seed = cfg.seed if cfg.partition_seed is None else cfg.partition_seed
    clients = partition_dirichlet(train, PartitionSpec(n_clients=cfg.n_clients,
                                                       alpha=cfg.alpha,
                                                       seed=split_seed))
    sizes = (train.n_features, *cfg.hidden_sizes, train.n_classes)
    model = init_mlp(sizes, cfg.pan, derive_rng(cfg.seed, _TAG_INIT))
    state = RoundState(round_index=0, model=model)
    records: list[RoundRecord] = []
    for _ in range(cfg.rounds):
        state, record = run_round(state, cfg, train, clients, test, jobs=jobs)
        records.append(record)
    return MetricsLog(records=records, model=state.model, clients=clients)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    accuracy: float


def train_centralized(model: MlpModel, train: Dataset, test: Dataset | None, *,
                      epochs: int, lr: float, momentum: float = 0.9,
                      batch_size: int = 64, warmup_steps: int = 0,
                      rng: np.random.Generator) -> list[EpochRecord]:
    """Plain centralized SGD on ``model`` (mutated in place), one record per epoch."""
    opt = SgdOptimizer(lr=lr, momentum=momentum, warmup_steps=warmup_steps)
    history: list[EpochRecord] = []
    for epoch in range(epochs):
        losses = []
        for xb, yb in iter_batches(train.features, train.labels, batch_size, rng):
            acts = forward(model, xb)
            loss, loss_grad = softmax_cross_entropy(acts.output, yb)
            if not math.isfinite(loss):
                raise NumericsError(f"non-finite training loss: {loss}")
            losses.append(loss)
            grads = backward(model, acts, loss_grad)
            opt.step(model, grads)
        accuracy = evaluate(model, test) if test is not None else float("nan")
        history.append(EpochRecord(epoch=epoch, loss=float(np.mean(losses)),
                                   accuracy=accuracy))
    return history
