"""Experiment command line: fit, certify, sweep, attack, oracle, report.

Exit codes: 0 success, 2 configuration error, 3 stage failure (fit, bound,
attack, or IO blew up), 4 sandwich violation (an oracle or attack result
contradicted a certificate, which should be impossible for sound bounds).

Results append to a JSON-lines record file; `report` turns a record file into
a CSV table plus PNG figures.  All commands are deterministic for a fixed
config and seed; --strict-deterministic forces the already-sequential
evaluation order and is recorded so reruns can assert bit-identical output.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import data as data_mod
from .bound import EnhanceConfig, bound_joint_pair, certify
from .config import ConfigError, expand, load_config, require_scalar, sweep_axes, with_defaults
from .gpc import (
    LabeledDataset,
    OptimizerConfig,
    ThresholdPair,
    accuracy,
    compute_thresholds,
    fit_laplace,
    fit_sparse_dtc,
    load_model,
    predict_latent,
    regression_weights,
    save_model,
)
from .kernels import KernelSpec
from .logreg import fit_lr, lr_accuracy, lr_certified_min_inputs, lr_thresholds
from .mixture import GridBoundConfig
from .attacks import axis_grid_oracle, axis_search_attack, random_perturbation_search
from .records import config_core, make_record, project_csv, read_records, strip_volatile, write_records
from .report import render_report

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3
EXIT_SANDWICH = 4


class SandwichViolation(Exception):
    """An empirical result beat a certificate that claims this is impossible."""


class StageFailure(Exception):
    pass


# ---------------------------------------------------------------------------
# pipeline pieces


def build_dataset(cfg: dict) -> data_mod.SplitDataset:
    source = cfg["dataset.source"]
    seed = int(cfg.get("dataset.seed", cfg.get("seed", 0)))
    n_train = int(cfg["dataset.n_train"])
    n_test = int(cfg["dataset.n_test"])
    if source == "toy3d":
        return data_mod.split_synthetic(data_mod.gen_two_gaussians_3d, seed, n_train, n_test)
    if source == "synth8d":
        return data_mod.split_synthetic(data_mod.gen_three_clusters_8d, seed, n_train, n_test)
    if source == "mnist":
        path = cfg.get("dataset.path")
        if not path:
            raise ConfigError("dataset.source=mnist needs dataset.path")
        return data_mod.load_mnist(
            path,
            resolution=int(cfg.get("dataset.resolution", 28)),
            class_spec=str(cfg.get("dataset.classes", "0v1")),
            n_train=n_train,
            n_test=n_test,
            seed=seed,
        )
    if source in ("australian_credit", "spambase", "banknote"):
        path = cfg.get("dataset.path")
        if not path:
            raise ConfigError(f"dataset.source={source} needs dataset.path")
        return data_mod.load_uci(source, path, n_train=n_train, n_test=n_test, seed=seed)
    raise ConfigError(f"unknown dataset.source {source!r}")


def grid_config(cfg: dict) -> GridBoundConfig:
    return GridBoundConfig(
        pca_dims=int(cfg["mixture.pca_dims"]),
        grid_points_per_axis=int(cfg["mixture.grid_points"]),
        safety_inflation=float(cfg["mixture.safety_inflation"]),
        pair_tolerance=float(cfg["mixture.pair_tolerance"]),
    )


def fit_gpc(cfg: dict, split: data_mod.SplitDataset):
    """Laplace fit then regression onto the mode (dense or DTC)."""
    kernel = KernelSpec(variance=float(cfg["model.variance"]), lengthscale=float(cfg["model.lengthscale"]))
    noise = float(cfg["model.noise_variance"])
    fit = fit_laplace(
        split.train,
        kernel,
        tol=float(cfg["model.laplace_tol"]),
        max_iter=int(cfg["model.laplace_max_iter"]),
    )
    m = int(cfg["model.inducing"])
    if m <= 0:
        model = regression_weights(split.train.x, fit.f_hat, kernel, noise)
    else:
        result = fit_sparse_dtc(
            split.train.x, fit.f_hat, kernel, noise, m,
            opt=OptimizerConfig(seed=int(cfg.get("seed", 0))),
        )
        model = result.model
    return model, fit


def prepare_model(cfg: dict, split: data_mod.SplitDataset):
    """Model + thresholds + accuracies for a gpc config (loads if model.load set)."""
    if cfg.get("model.load"):
        model = load_model(cfg["model.load"])
        laplace = None
    else:
        model, laplace = fit_gpc(cfg, split)
    train_latents = predict_latent(model, split.train.x)
    thresholds = compute_thresholds(train_latents)
    acc = accuracy(model, split.test)
    return model, thresholds, acc, laplace


def dataset_info(split: data_mod.SplitDataset) -> dict:
    return {
        "dims": int(split.train.x.shape[1]),
        "n_train": len(split.train),
        "n_test": len(split.test),
        "kept_dims": None if split.kept_dims is None else [int(i) for i in split.kept_dims],
        "image_shape": None if split.image_shape is None else list(split.image_shape),
    }


def run_certify(cfg: dict) -> dict:
    t0 = time.perf_counter()
    split = build_dataset(cfg)
    fp = data_mod.fingerprint(split)
    if cfg["model.type"] == "lr":
        model = fit_lr(split.train.x, split.train.y, c=float(cfg["model.c"]))
        thresholds = lr_thresholds(model, split.train.x)
        acc = lr_accuracy(model, split.test.x, split.test.y)
        bounds = np.abs(model.weights)
        csum = np.cumsum(np.sort(bounds)[::-1])
        certified = lr_certified_min_inputs(model, thresholds.gap)
        payload = {}
    elif cfg["model.type"] == "gpc":
        model, thresholds, acc, _ = prepare_model(cfg, split)
        enh = None
        if cfg["bound.enhance"]:
            enh = EnhanceConfig(
                top_k=int(cfg["bound.enhance_top_k"]), slices_fine=int(cfg["bound.enhance_slices"])
            )
        cert = certify(model, thresholds, int(cfg["bound.slices"]), grid_config(cfg), enh)
        bounds, csum, certified = cert.per_dim_bounds, cert.sorted_cumulative, cert.certified_min_inputs
        payload = {}
        if cfg["bound.joint_pairs"]:
            d = model.dims
            if d > 12:
                raise ConfigError(f"bound.joint_pairs is brute force over pairs; {d} dims is too many")
            joint = {}
            for i in range(d):
                for j in range(i + 1, d):
                    joint[f"{i},{j}"] = bound_joint_pair(model, i, j, int(cfg["bound.slices"]), grid_config(cfg))
            payload["joint_pair_bounds"] = joint
        if cfg.get("model.save"):
            save_model(model, cfg["model.save"])
    else:
        raise ConfigError(f"unknown model.type {cfg['model.type']!r}")

    return make_record(
        "certify",
        cfg,
        fingerprint=fp,
        dataset_info=dataset_info(split),
        accuracy=acc,
        f05=thresholds.f05,
        f95=thresholds.f95,
        gap=thresholds.gap,
        per_dim_bounds=[float(b) for b in bounds],
        sorted_cumulative=[float(v) for v in csum],
        certified_min_inputs=certified,
        elapsed={"total": time.perf_counter() - t0},
        **payload,
    )


def run_fit(cfg: dict) -> dict:
    t0 = time.perf_counter()
    if cfg["model.type"] != "gpc":
        raise ConfigError("fit serializes gpc models only")
    split = build_dataset(cfg)
    model, thresholds, acc, laplace = prepare_model(cfg, split)
    out_path = cfg.get("model.save")
    if not out_path:
        raise ConfigError("fit needs model.save")
    save_model(model, out_path)
    return make_record(
        "fit",
        cfg,
        fingerprint=data_mod.fingerprint(split),
        dataset_info=dataset_info(split),
        accuracy=acc,
        f05=thresholds.f05,
        f95=thresholds.f95,
        gap=thresholds.gap,
        laplace={
            "iterations": None if laplace is None else laplace.iterations,
            "grad_norm": None if laplace is None else laplace.grad_norm,
            "converged": None if laplace is None else laplace.converged,
        },
        model_file=out_path,
        elapsed={"total": time.perf_counter() - t0},
    )


def run_attack(cfg: dict) -> dict:
    t0 = time.perf_counter()
    if cfg["model.type"] != "gpc":
        raise ConfigError("attack supports gpc models")
    split = build_dataset(cfg)
    model, thresholds, acc, _ = prepare_model(cfg, split)
    latents = predict_latent(model, split.test.x)
    confident = np.nonzero((latents <= thresholds.f05) | (latents >= thresholds.f95))[0]
    max_inputs = int(cfg["attack.max_inputs"])
    results = []
    for i in confident:
        res = axis_search_attack(
            model,
            split.test.x[i],
            thresholds,
            max_inputs=max_inputs,
            line_resolution=int(cfg["attack.line_resolution"]),
            mode=str(cfg["attack.mode"]),
        )
        results.append(res)
    succeeded = [r.n_modified for r in results if r.succeeded]
    attack_payload = {
        "n_confident": int(len(confident)),
        "n_succeeded": int(len(succeeded)),
        "min_inputs": min(succeeded) if succeeded else None,
        "median_inputs": float(np.median(succeeded)) if succeeded else None,
        "max_inputs_budget": max_inputs,
    }
    return make_record(
        "attack",
        cfg,
        fingerprint=data_mod.fingerprint(split),
        dataset_info=dataset_info(split),
        accuracy=acc,
        f05=thresholds.f05,
        f95=thresholds.f95,
        gap=thresholds.gap,
        attack=attack_payload,
        elapsed={"total": time.perf_counter() - t0},
    )


def run_oracle(cfg: dict, budget: float | None = None) -> dict:
    t0 = time.perf_counter()
    if cfg["model.type"] != "gpc":
        raise ConfigError("oracle supports gpc models")
    split = build_dataset(cfg)
    model, thresholds, acc, _ = prepare_model(cfg, split)
    kind = str(cfg["oracle.kind"])
    n_dims = int(cfg["oracle.n_dims"])
    payload = {"kind": kind, "n_dims": n_dims}
    if kind == "random":
        payload["trials"] = int(cfg["oracle.trials"])
        payload["max_change"] = random_perturbation_search(
            model, n_dims, int(cfg["oracle.trials"]), seed=int(cfg.get("oracle.seed", cfg.get("seed", 0)))
        )
    elif kind == "axis":
        dims = list(range(n_dims))
        kwargs = {} if budget is None else {"max_evals": budget}
        payload["dims"] = dims
        payload["max_change"] = axis_grid_oracle(model, dims, int(cfg["oracle.resolution"]), **kwargs)
    else:
        raise ConfigError(f"unknown oracle.kind {kind!r}")
    return make_record(
        "oracle",
        cfg,
        fingerprint=data_mod.fingerprint(split),
        dataset_info=dataset_info(split),
        accuracy=acc,
        f05=thresholds.f05,
        f95=thresholds.f95,
        gap=thresholds.gap,
        oracle=payload,
        elapsed={"total": time.perf_counter() - t0},
    )


# ---------------------------------------------------------------------------
# sandwich checks


def check_sandwich(new_record: dict, existing: list) -> None:
    """Raise SandwichViolation if an attack/oracle record beats its certificate."""
    certs = [
        r for r in existing
        if r.get("command") == "certify" and config_core(r) == config_core(new_record)
        and "per_dim_bounds" in r
    ]
    if not certs:
        return
    cert = certs[-1]
    bounds = np.asarray(cert["per_dim_bounds"], dtype=float)
    csum = np.cumsum(np.sort(bounds)[::-1])
    tol = 1e-9

    if new_record["command"] == "attack":
        attack = new_record.get("attack") or {}
        min_inputs = attack.get("min_inputs")
        if min_inputs is None:
            return
        certified = cert.get("certified_min_inputs")
        if certified == "unbounded-safe":
            raise SandwichViolation(
                f"attack succeeded with {min_inputs} inputs but the certificate says unbounded-safe"
            )
        if min_inputs < int(certified):
            raise SandwichViolation(
                f"attack succeeded with {min_inputs} inputs, below the certified minimum {certified}"
            )
    elif new_record["command"] == "oracle":
        oracle = new_record.get("oracle") or {}
        change = oracle.get("max_change")
        if change is None:
            return
        n = int(oracle.get("n_dims", 1))
        dims = oracle.get("dims")
        if dims is not None:
            limit = float(np.sum(bounds[np.asarray(dims, dtype=int)]))
        else:
            limit = float(csum[min(n, len(csum)) - 1])
        if change > limit * (1.0 + tol) + 1e-12:
            raise SandwichViolation(
                f"oracle found latent change {change:.9g} above the certified limit {limit:.9g}"
            )


# ---------------------------------------------------------------------------
# commands


def _load_and_merge(args) -> dict:
    cfg = with_defaults(load_config(args.config))
    if args.seed is not None:
        cfg["seed"] = int(args.seed)
    return cfg


def _emit(args, record) -> None:
    if args.out:
        write_records(args.out, [record], append=True)
    else:
        write_records("/dev/stdout", [record], append=True)


def cmd_certify(args) -> int:
    cfg = _load_and_merge(args)
    require_scalar(cfg, "certify")
    record = run_certify(cfg)
    record["strict_deterministic"] = bool(args.strict_deterministic)
    _emit(args, record)
    print(f"certify: gap={record['gap']:.6g} certified_min_inputs={record['certified_min_inputs']}")
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _load_and_merge(args)
    require_scalar(cfg, "fit")
    record = run_fit(cfg)
    _emit(args, record)
    print(f"fit: model saved to {record['model_file']} (test accuracy {record['accuracy']:.4f})")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_and_merge(args)
    axes = sweep_axes(cfg)
    if not axes:
        raise ConfigError("sweep needs at least one key with a value list")
    points = expand(cfg)
    done = set()
    if args.out and os.path.exists(args.out):
        for rec in read_records(args.out):
            done.add(repr(sorted(rec.get("config", {}).items())))
    ran = 0
    for point in points:
        key = repr(sorted(point.items()))
        if key in done:
            continue
        record = run_certify(point)
        record["command"] = "sweep"
        _emit(args, record)
        ran += 1
    print(f"sweep: {ran} new points, {len(points) - ran} already present, axes: {', '.join(axes)}")
    return EXIT_OK


def cmd_attack(args) -> int:
    cfg = _load_and_merge(args)
    require_scalar(cfg, "attack")
    record = run_attack(cfg)
    existing = read_records(args.out) if args.out and os.path.exists(args.out) else []
    check_sandwich(record, existing)
    _emit(args, record)
    a = record["attack"]
    print(f"attack: {a['n_succeeded']}/{a['n_confident']} succeeded, min inputs {a['min_inputs']}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = _load_and_merge(args)
    require_scalar(cfg, "oracle")
    record = run_oracle(cfg, budget=args.budget)
    existing = read_records(args.out) if args.out and os.path.exists(args.out) else []
    check_sandwich(record, existing)
    _emit(args, record)
    print(f"oracle: max latent change {record['oracle']['max_change']:.9g}")
    return EXIT_OK


def cmd_report(args) -> int:
    if not os.path.exists(args.records):
        raise ConfigError(f"records file not found: {args.records}")
    records = read_records(args.records)
    written = render_report(records, args.outdir)
    for path in written:
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpcert", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="flat key=value config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="append JSON-lines records here")
        p.add_argument("--strict-deterministic", action="store_true",
                       help="force sequential evaluation (already the default; recorded)")
        p.add_argument("--budget", type=float, default=None, help="cap on oracle grid evaluations")

    for name, fn in (("certify", cmd_certify), ("fit", cmd_fit), ("sweep", cmd_sweep),
                     ("attack", cmd_attack), ("oracle", cmd_oracle)):
        p = sub.add_parser(name)
        common(p)
        p.set_defaults(fn=fn)

    p = sub.add_parser("report", help="render CSV and figures from a record file")
    p.add_argument("--records", required=True)
    p.add_argument("--outdir", required=True)
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SandwichViolation as exc:
        print(f"SANDWICH VIOLATION: {exc}", file=sys.stderr)
        return EXIT_SANDWICH
    except Exception as exc:  # noqa: BLE001 - the CLI boundary maps everything to exit 3
        print(f"stage failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
