"""Command-line front end: binds JSON configs to experiments, emits CSV/JSON.

Subcommands::

    panfl train-central --config cfg.json --out dir    centralized training
    panfl shuffle-test  --config cfg.json --out dir    (P_sf, A, T, mode) sweep
    panfl fed-run       --config cfg.json --out dir    federated experiment
    panfl analyze       --config cfg.json --out dir    divergence/match/prefvec/fusion
    panfl match         --config cfg.json --out dir    assignment matching only
    panfl prefvec       --config cfg.json --out dir    preference vectors only

Common flags: ``--seed`` overrides the config seed, ``--set key=value``
overrides any dotted config key (values parsed as JSON when possible, flags
win over the file), ``--jobs`` caps concurrent client workers. Every run
writes ``config_echo.json`` into the output directory; re-running with the
same echo reproduces byte-identical CSVs. Exit codes: 0 success, 2 config
error, 3 data/format error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .alignment import (collect_activations, fusion_curve, match_neurons,
                        preference_vectors)
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Dataset, gen_synthetic, load_idx, make_synthetic_split, write_partition_csv
from .errors import ConfigError, FormatError, NumericsError, ShapeError
from .federated import (FederationConfig, divergence_per_layer, run_experiment,
                        train_centralized)
from .linalg import derive_rng, make_rng
from .network import MlpModel, PanConfig, init_mlp
from .permutation import gen_plan, perm_matrix, shuffle_report

_REQUIRED = object()


def _take(section: dict, key: str, default=_REQUIRED):
    if key in section:
        return section.pop(key)
    if default is _REQUIRED:
        raise ConfigError(f"missing required config key {key!r}")
    return default


def _done(section: dict, context: str) -> None:
    if section:
        raise ConfigError(f"unknown config keys in {context}: {sorted(section)}")


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------------------
# config loading


def _set_dotted(cfg: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = cfg
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override {dotted!r}: {key!r} is not a section")
    node[keys[-1]] = value


def load_run_config(args: argparse.Namespace) -> dict:
    if args.config is None:
        raise ConfigError("--config is required")
    try:
        with open(args.config) as f:
            cfg = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.config}: invalid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{args.config}: top level must be an object")
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        _set_dotted(cfg, key, value)
    if args.seed is not None:
        cfg["seed"] = args.seed
    cfg.setdefault("seed", 0)
    return cfg


def _dataset_pair(spec: dict, seed: int) -> tuple[Dataset, Dataset]:
    spec = dict(spec)
    kind = _take(spec, "kind")
    if kind == "synthetic":
        pair = make_synthetic_split(n_train=int(_take(spec, "n_train")),
                                    n_test=int(_take(spec, "n_test")),
                                    n_features=int(_take(spec, "features")),
                                    n_classes=int(_take(spec, "classes")),
                                    separation=float(_take(spec, "separation")),
                                    seed=int(_take(spec, "seed", seed)))
        _done(spec, "dataset")
        return pair
    if kind == "idx":
        train = load_idx(_take(spec, "train_images"), _take(spec, "train_labels"))
        test = load_idx(_take(spec, "test_images"), _take(spec, "test_labels"))
        _done(spec, "dataset")
        return train, test
    raise ConfigError(f"unknown dataset kind {kind!r}")


def _dataset_single(spec: dict, seed: int, context: str = "probe") -> Dataset:
    spec = dict(spec)
    kind = _take(spec, "kind")
    if kind == "synthetic":
        ds = gen_synthetic(n=int(_take(spec, "n")),
                           n_features=int(_take(spec, "features")),
                           n_classes=int(_take(spec, "classes")),
                           separation=float(_take(spec, "separation")),
                           seed=int(_take(spec, "seed", seed)))
        _done(spec, context)
        return ds
    if kind == "idx":
        ds = load_idx(_take(spec, "images"), _take(spec, "labels"))
        _done(spec, context)
        return ds
    raise ConfigError(f"unknown {context} kind {kind!r}")


def _model_from_section(spec: dict, n_features: int, n_classes: int,
                        seed: int) -> MlpModel:
    spec = dict(spec)
    hidden = tuple(int(h) for h in _take(spec, "hidden_sizes", [32, 32]))
    pan = PanConfig(mode=_take(spec, "pan_mode", "off"),
                    amplitude=float(_take(spec, "amplitude", 0.0)),
                    period=float(_take(spec, "period", 1.0)))
    _done(spec, "model")
    return init_mlp((n_features, *hidden, n_classes), pan, derive_rng(seed, 0))


# ---------------------------------------------------------------------------
# subcommands


def cmd_train_central(cfg: dict, out: Path, jobs: int) -> None:
    cfg = dict(cfg)
    seed = int(_take(cfg, "seed"))
    train, test = _dataset_pair(_take(cfg, "dataset"), seed)
    model = _model_from_section(_take(cfg, "model", {}), train.n_features,
                                train.n_classes, seed)
    train_spec = dict(_take(cfg, "train", {}))
    epochs = int(_take(train_spec, "epochs", 10))
    lr = float(_take(train_spec, "lr", 0.05))
    momentum = float(_take(train_spec, "momentum", 0.9))
    batch_size = int(_take(train_spec, "batch_size", 64))
    warmup_steps = int(_take(train_spec, "warmup_steps", 0))
    _done(train_spec, "train")
    _done(cfg, "config")

    history = train_centralized(model, train, test, epochs=epochs, lr=lr,
                                momentum=momentum, batch_size=batch_size,
                                warmup_steps=warmup_steps, rng=derive_rng(seed, 1))
    _write_csv(out / "central_metrics.csv", ["epoch", "loss", "accuracy"],
               [(rec.epoch, rec.loss, rec.accuracy) for rec in history])
    save_checkpoint(out / "checkpoint.json", model, seed=seed)


def cmd_shuffle_test(cfg: dict, out: Path, jobs: int) -> None:
    cfg = dict(cfg)
    seed = int(_take(cfg, "seed"))
    base_model, _ = load_checkpoint(_take(cfg, "checkpoint"))
    grid = dict(_take(cfg, "grid", {}))
    p_sf_grid = [float(v) for v in _take(grid, "p_sf", [0.0, 0.1, 0.5, 1.0])]
    amp_grid = [float(v) for v in _take(grid, "amplitude", [0.0, 0.05, 0.1, 0.25])]
    period_grid = [float(v) for v in _take(grid, "period", [1.0])]
    mode_grid = [str(v) for v in _take(grid, "mode", ["additive", "multiplicative"])]
    _done(grid, "grid")
    n_plans = int(_take(cfg, "n_plans", 10))
    probe_spec = dict(_take(cfg, "probe", {"kind": "gaussian", "n": 64}))
    _done(cfg, "config")

    kind = _take(probe_spec, "kind", "gaussian")
    if kind != "gaussian":
        raise ConfigError(f"shuffle-test probe kind must be 'gaussian', got {kind!r}")
    n_probe = int(_take(probe_spec, "n", 64))
    probe_seed = int(_take(probe_spec, "seed", seed))
    _done(probe_spec, "probe")
    batch = make_rng(probe_seed).normal(size=(n_probe, base_model.layer_sizes[0]))

    # plans depend only on (seed, p_sf slot, plan index) so every (A, T, mode)
    # cell sees the same plan family at a given disorder level
    rows = []
    for pi, p_sf in enumerate(p_sf_grid):
        plans = [gen_plan(base_model.hidden_widths, p_sf, derive_rng(seed, 10, pi, r))
                 for r in range(n_plans)]
        for mode in mode_grid:
            for amp in amp_grid:
                for period in period_grid:
                    model = base_model.copy()
                    model.pan = PanConfig(mode=mode, amplitude=amp, period=period)
                    reports = [shuffle_report(model, plan, batch) for plan in plans]
                    rows.append((p_sf, amp, period, mode,
                                 float(np.mean([r.err_mean for r in reports])),
                                 float(np.max([r.err_max for r in reports])),
                                 float(np.mean([r.r_kept for r in reports]))))
    _write_csv(out / "shuffle_test.csv",
               ["p_sf", "amplitude", "period", "mode", "err_mean", "err_max", "r_kept"],
               rows)


def _federation_from_section(spec: dict, seed: int, alpha: float) -> FederationConfig:
    spec = dict(spec)
    pan = PanConfig(mode=_take(spec, "pan_mode", "off"),
                    amplitude=float(_take(spec, "amplitude", 0.0)),
                    period=float(_take(spec, "period", 1.0)))
    fed = FederationConfig(
        n_clients=int(_take(spec, "n_clients", 10)),
        participation=float(_take(spec, "participation", 1.0)),
        local_epochs=int(_take(spec, "local_epochs", 5)),
        rounds=int(_take(spec, "rounds", 20)),
        batch_size=int(_take(spec, "batch_size", 64)),
        alpha=alpha,
        lr=float(_take(spec, "lr", 0.05)),
        momentum=float(_take(spec, "momentum", 0.9)),
        algorithm=str(_take(spec, "algorithm", "fedavg")),
        prox_mu=float(_take(spec, "prox_mu", 1e-3)),
        server_lr=float(_take(spec, "server_lr", 1.0)),
        server_momentum=float(_take(spec, "server_momentum", 0.9)),
        pan=pan,
        n_shuffles=float(_take(spec, "n_shuffles", 0.0)),
        shuffle_p=float(_take(spec, "shuffle_p", 0.1)),
        hidden_sizes=tuple(int(h) for h in _take(spec, "hidden_sizes", [32, 32])),
        warmup_steps=int(_take(spec, "warmup_steps", 0)),
        sample_weighted=bool(_take(spec, "sample_weighted", False)),
        seed=seed)
    _done(spec, "federation")
    return fed


def cmd_fed_run(cfg: dict, out: Path, jobs: int) -> None:
    cfg = dict(cfg)
    seed = int(_take(cfg, "seed"))
    train, test = _dataset_pair(_take(cfg, "dataset"), seed)
    fed_spec = dict(_take(cfg, "federation", {}))
    alpha_value = _take(fed_spec, "alpha", 10.0)
    _done(cfg, "config")

    alphas = [float(a) for a in alpha_value] if isinstance(alpha_value, list) \
        else [float(alpha_value)]
    sweep = len(alphas) > 1
    for alpha in alphas:
        fed = _federation_from_section(dict(fed_spec), seed, alpha)
        log = run_experiment(fed, train, test, jobs=jobs)
        suffix = f"_alpha_{alpha:g}" if sweep else ""
        div_header = [f"div_w{i}" for i in range(len(log.records[0].divergence))]
        _write_csv(out / f"rounds{suffix}.csv",
                   ["round", "accuracy", *div_header, "shuffles", "r_kept"],
                   [(rec.round_index, rec.accuracy, *rec.divergence,
                     rec.n_shuffles, rec.r_kept) for rec in log.records])
        write_partition_csv(out / f"partition{suffix}.csv", train, log.clients)
        save_checkpoint(out / f"checkpoint{suffix}.json", log.model, seed=seed)
        _write_json(out / f"summary{suffix}.json", {
            "final_accuracy": log.final_accuracy,
            "best_accuracy": log.best_accuracy,
            "seed": seed,
            "alpha": alpha,
            "config": {**fed_spec, "alpha": alpha},
        })


def _load_checkpoints(paths) -> list[MlpModel]:
    models = []
    for path in paths:
        model, _ = load_checkpoint(path)
        models.append(model)
    shapes = {m.layer_sizes for m in models}
    if len(shapes) > 1:
        raise ShapeError(f"checkpoints disagree on architecture: {sorted(shapes)}")
    return models


def _run_match(models: list[MlpModel], probe: Dataset, layer: int, out: Path,
               dump_dense: bool) -> dict:
    reference = collect_activations(models[0], probe, layer)
    rows, summary = [], {}
    for idx, model in enumerate(models[1:], start=1):
        local = collect_activations(model, probe, layer)
        result = match_neurons(reference, local)
        for neuron, assigned in enumerate(result.assignment.tolist()):
            rows.append((idx, layer, neuron, assigned, int(assigned == neuron)))
        summary[str(idx)] = {"match_ratio": result.match_ratio, "cost": result.cost}
        if dump_dense:
            _write_csv(out / f"match_dense_{idx}.csv",
                       [f"n{j}" for j in range(len(result.assignment))],
                       perm_matrix(result.assignment).astype(int).tolist())
    _write_csv(out / "match.csv",
               ["checkpoint", "layer", "neuron", "assigned", "fixed"], rows)
    return summary


def _run_prefvec(models: list[MlpModel], probe: Dataset, layer: int, out: Path) -> None:
    for idx, model in enumerate(models):
        pref = preference_vectors(model, probe, layer)
        header = ["neuron"] + [f"p_class{c}" for c in range(probe.n_classes)] + ["argmax"]
        rows = [(j, *pref.scores[j].tolist(), int(pref.argmax_class[j]))
                for j in range(pref.scores.shape[0])]
        _write_csv(out / f"prefvec_{idx}.csv", header, rows)


def cmd_analyze(cfg: dict, out: Path, jobs: int) -> None:
    cfg = dict(cfg)
    seed = int(_take(cfg, "seed"))
    paths = _take(cfg, "checkpoints")
    if not isinstance(paths, list) or len(paths) < 2:
        raise ConfigError("analyze needs a list of at least two checkpoints")
    tasks = list(_take(cfg, "tasks", ["divergence", "match", "prefvec", "fusion"]))
    layer = int(_take(cfg, "layer", 1))
    probe_spec = _take(cfg, "probe", None)
    fusion_points = int(_take(cfg, "fusion_points", 11))
    dump_dense = bool(_take(cfg, "dump_dense", False))
    _done(cfg, "config")

    models = _load_checkpoints(paths)
    needs_probe = {"match", "prefvec", "fusion"} & set(tasks)
    if needs_probe and probe_spec is None:
        raise ConfigError(f"tasks {sorted(needs_probe)} need a probe dataset")
    probe = _dataset_single(probe_spec, seed) if needs_probe else None

    summary: dict = {"seed": seed, "checkpoints": [str(p) for p in paths]}
    for task in tasks:
        if task == "divergence":
            divergence = divergence_per_layer(models)
            _write_csv(out / "divergence.csv", ["layer", "divergence"],
                       list(enumerate(divergence)))
            summary["divergence"] = list(divergence)
        elif task == "match":
            summary["match"] = _run_match(models, probe, layer, out, dump_dense)
        elif task == "prefvec":
            _run_prefvec(models, probe, layer, out)
        elif task == "fusion":
            curve = fusion_curve(models[0], models[1], probe,
                                 grid=np.linspace(0.0, 1.0, fusion_points))
            _write_csv(out / "fusion.csv", ["mu", "accuracy"],
                       list(zip(curve.grid.tolist(), curve.accuracy.tolist())))
            summary["fusion_endpoints"] = [float(curve.accuracy[0]),
                                           float(curve.accuracy[-1])]
        else:
            raise ConfigError(f"unknown analyze task {task!r}")
    _write_json(out / "analyze_summary.json", summary)


def cmd_match(cfg: dict, out: Path, jobs: int) -> None:
    cfg = dict(cfg)
    seed = int(_take(cfg, "seed"))
    paths = _take(cfg, "checkpoints")
    if not isinstance(paths, list) or len(paths) < 2:
        raise ConfigError("match needs a list of at least two checkpoints")
    layer = int(_take(cfg, "layer", 1))
    probe_spec = _take(cfg, "probe")
    dump_dense = bool(_take(cfg, "dump_dense", False))
    _done(cfg, "config")
    models = _load_checkpoints(paths)
    probe = _dataset_single(probe_spec, seed)
    summary = _run_match(models, probe, layer, out, dump_dense)
    _write_json(out / "match_summary.json", {"seed": seed, "match": summary})


def cmd_prefvec(cfg: dict, out: Path, jobs: int) -> None:
    cfg = dict(cfg)
    seed = int(_take(cfg, "seed"))
    path = _take(cfg, "checkpoint")
    layer = int(_take(cfg, "layer", 1))
    probe_spec = _take(cfg, "probe")
    _done(cfg, "config")
    model, _ = load_checkpoint(path)
    probe = _dataset_single(probe_spec, seed)
    _run_prefvec([model], probe, layer, out)


HANDLERS = {
    "train-central": cmd_train_central,
    "shuffle-test": cmd_shuffle_test,
    "fed-run": cmd_fed_run,
    "analyze": cmd_analyze,
    "match": cmd_match,
    "prefvec": cmd_prefvec,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="panfl",
                                     description="Position-aware-neuron federated "
                                                 "learning toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in HANDLERS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--jobs", type=int, default=1,
                       help="max concurrent client workers")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a dotted config key; flags win")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "config_echo.json", {"command": args.command, **cfg})
        HANDLERS[args.command](cfg, out, jobs=max(1, args.jobs))
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
