"""Flat dotted key-value experiment configs and their sweep expansion.

A config file is lines of `section.key = value` with `#` comments.  A value
holding several whitespace-separated tokens marks a sweep axis; `expand`
produces the Cartesian product of all axes in deterministic key order.
"""

from __future__ import annotations

import itertools


class ConfigError(Exception):
    """Malformed or inconsistent experiment configuration."""


_KNOWN_KEYS = {
    "seed": int,
    "dataset.source": str,
    "dataset.path": str,
    "dataset.resolution": int,
    "dataset.classes": str,
    "dataset.n_train": int,
    "dataset.n_test": int,
    "dataset.seed": int,
    "dataset.filter_threshold": float,
    "model.type": str,
    "model.variance": float,
    "model.lengthscale": float,
    "model.c": float,
    "model.noise_variance": float,
    "model.inducing": int,
    "model.laplace_tol": float,
    "model.laplace_max_iter": int,
    "model.load": str,
    "model.save": str,
    "bound.slices": int,
    "bound.enhance": bool,
    "bound.enhance_top_k": int,
    "bound.enhance_slices": int,
    "bound.joint_pairs": bool,
    "mixture.pca_dims": int,
    "mixture.grid_points": int,
    "mixture.safety_inflation": float,
    "mixture.pair_tolerance": float,
    "attack.max_inputs": int,
    "attack.line_resolution": int,
    "attack.mode": str,
    "oracle.kind": str,
    "oracle.trials": int,
    "oracle.n_dims": int,
    "oracle.resolution": int,
    "oracle.seed": int,
}

_DEFAULTS = {
    "seed": 0,
    "dataset.n_train": 100,
    "dataset.n_test": 100,
    "model.type": "gpc",
    "model.variance": 1.0,
    "model.lengthscale": 1.0,
    "model.c": 1.0,
    "model.noise_variance": 0.01,
    "model.inducing": 0,
    "model.laplace_tol": 1e-8,
    "model.laplace_max_iter": 100,
    "bound.slices": 4,
    "bound.enhance": False,
    "bound.enhance_top_k": 100,
    "bound.enhance_slices": 16,
    "bound.joint_pairs": False,
    "mixture.pca_dims": 2,
    "mixture.grid_points": 64,
    "mixture.safety_inflation": 1e-9,
    "mixture.pair_tolerance": 0.0,
    "attack.max_inputs": 25,
    "attack.line_resolution": 101,
    "attack.mode": "percentile",
    "oracle.kind": "random",
    "oracle.trials": 100000,
    "oracle.n_dims": 1,
    "oracle.resolution": 21,
}


def _coerce(key: str, token: str):
    caster = _KNOWN_KEYS[key]
    if caster is bool:
        if token.lower() in ("1", "true", "yes", "on"):
            return True
        if token.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: cannot read {token!r} as a boolean")
    try:
        return caster(token)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot read {token!r} as {caster.__name__}") from exc


def parse_config_text(text: str) -> dict:
    """Parse config text into {key: value or [values]} with type coercion."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        tokens = value.split()
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if not tokens:
            raise ConfigError(f"line {lineno}: no value for {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        vals = [_coerce(key, t) for t in tokens]
        out[key] = vals[0] if len(vals) == 1 else vals
    return out


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def with_defaults(cfg: dict) -> dict:
    merged = dict(_DEFAULTS)
    merged.update(cfg)
    if "dataset.source" not in merged:
        raise ConfigError("config must set dataset.source")
    return merged


def sweep_axes(cfg: dict) -> list:
    return sorted(k for k, v in cfg.items() if isinstance(v, list))


def expand(cfg: dict) -> list:
    """All scalar configs from the Cartesian product of the sweep axes."""
    axes = sweep_axes(cfg)
    if not axes:
        return [dict(cfg)]
    points = []
    for combo in itertools.product(*(cfg[k] for k in axes)):
        point = dict(cfg)
        point.update(dict(zip(axes, combo)))
        points.append(point)
    return points


def require_scalar(cfg: dict, command: str) -> None:
    axes = sweep_axes(cfg)
    if axes:
        raise ConfigError(f"{command} needs scalar values, but these sweep: {', '.join(axes)}")
