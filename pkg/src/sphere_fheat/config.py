"""Experiment configuration: loading, defaults and validation.

A config is one YAML (or JSON) mapping::

    experiment: spectrum
    seed: 20240601
    model: {hurst: 0.75, alpha: 1.0, L: 128, d0: 0.0}
    options: {t: 1.0, window: [8, 64]}

``resolve`` fills every omitted option with its documented default so the
snapshot stored in the run manifest names every number that was used.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, DomainError
from .spectral_sampler import ModelParams, TimeGrid, Upsilon

EXPERIMENTS = ("sample", "noise", "spectrum", "variogram", "slnd", "truncation", "modulus", "energy", "quadrature")

MODEL_DEFAULTS = {"beta": 5.0, "d0": 0.0, "horizon": 1.0, "upsilon": {"kind": "constant", "values": [1.0]}, "c0": None}

OPTION_DEFAULTS = {
    "sample": {"times": None, "sphere": None, "csv_replicates": 1},
    "noise": {"times": [0.5, 1.0], "points": [[0.5, 0.0], [0.6, 0.3]], "z_max": 4.0},
    "spectrum": {"t": 1.0, "window": [8, 64], "mode": "analytic", "tolerance": None},
    "variogram": {"kind": "temporal", "mode": "analytic", "t": None, "lags": {"dyadic": [12, 5]},
                  "distances": {"dyadic": [9, 4]}, "tolerance": None},
    "slnd": {"kind": "temporal", "t": 1.0, "ks": None, "n_obs": 8, "n_ring": 8, "tolerance": 0.15},
    "truncation": {"t": 1.0, "L_list": [8, 16, 32, 64, 128], "far_cutoff": 65536, "tolerance": 0.1},
    "modulus": {"kind": "temporal", "t": 1.0, "window": 0.125, "dt": 2.0**-14, "n_lon": 65536,
                "eps": [2.0**-6, 2.0**-8, 2.0**-10], "control_shift": 0.1, "stabilization": 0.5,
                "control_factor": 0.5},
    "energy": {"t": 1.0, "L_list": [64, 128, 256, 512], "orders": [1, 2], "tolerance": 1e-6},
    "quadrature": {"degrees": list(range(1, 33)), "times": [0.1, 0.5, 1.0], "tolerance": 1e-6},
}

NEEDS_REPLICATES = {"sample", "noise", "modulus"}


def load_config(path) -> dict:
    text = Path(path).read_text()
    try:
        data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    except (ValueError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    return data


def dyadic(spec):
    """``{dyadic: [a, b]}`` -> ``2^-a .. 2^-b`` ascending; lists pass through."""
    if isinstance(spec, dict):
        a, b = spec["dyadic"]
        ks = np.arange(max(a, b), min(a, b) - 1, -1)
        return (2.0 ** -ks.astype(float)).tolist()
    return [float(v) for v in spec]


def resolve(cfg: dict, seed=None, workers=None, tolerance_scale=None) -> dict:
    """Copy of ``cfg`` with CLI overrides applied and every default made explicit."""
    out = copy.deepcopy(cfg)
    if seed is not None:
        out["seed"] = int(seed)
    if workers is not None:
        out["workers"] = int(workers)
    out.setdefault("workers", 1)
    out["tolerance_scale"] = float(tolerance_scale if tolerance_scale is not None else out.get("tolerance_scale", 1.0))
    model = dict(MODEL_DEFAULTS)
    model.update(out.get("model") or {})
    out["model"] = model
    name = out.get("experiment")
    opts = copy.deepcopy(OPTION_DEFAULTS.get(name, {}))
    opts.update(out.get("options") or {})
    if name == "variogram" and opts.get("t") is None:
        opts["t"] = 0.5 if opts.get("kind") == "temporal" else 1.0
    if name in ("spectrum", "variogram") and opts.get("tolerance") is None:
        opts["tolerance"] = 0.1 if opts.get("mode") == "analytic" else 0.15
    if name == "slnd" and opts.get("ks") is None:
        opts["ks"] = [3, 9] if opts.get("kind") == "temporal" else [2, 7]
    out["options"] = opts
    return out


def model_params(cfg: dict) -> ModelParams:
    m = dict(cfg["model"])
    up = m.pop("upsilon", None) or {"kind": "constant", "values": [1.0]}
    try:
        return ModelParams(
            hurst=float(m["hurst"]), alpha=float(m["alpha"]), L=int(m["L"]), beta=float(m["beta"]),
            d0=float(m["d0"]), horizon=float(m["horizon"]),
            upsilon=Upsilon(up.get("kind", "constant"), tuple(up.get("values", [1.0]))),
            c0=None if m.get("c0") is None else float(m["c0"]),
        )
    except KeyError as exc:
        raise ConfigError(f"model is missing {exc.args[0]!r}") from exc


def time_grid(spec, horizon: float) -> TimeGrid:
    if isinstance(spec, dict):
        return TimeGrid.uniform(float(spec["start"]), float(spec["stop"]), int(spec["n"]), horizon)
    return TimeGrid(np.asarray(spec, float), horizon)


def validate(cfg: dict) -> tuple[list[str], list[str]]:
    """Return ``(config_errors, precondition_violations)``; nothing is computed."""
    errors: list[str] = []
    pre: list[str] = []
    name = cfg.get("experiment")
    if name not in EXPERIMENTS:
        errors.append(f"experiment must be one of {', '.join(EXPERIMENTS)} (got {name!r})")
    if cfg.get("seed") is None:
        errors.append("seed is mandatory")
    else:
        try:
            s = int(cfg["seed"])
            if s < 0 or s >= 2**64:
                errors.append("seed must be an unsigned 64-bit integer")
        except (TypeError, ValueError):
            errors.append("seed must be an integer")
    if not isinstance(cfg.get("model"), dict):
        errors.append("model section is missing")
        return errors, pre
    for key in ("hurst", "alpha", "L"):
        if key not in cfg["model"]:
            errors.append(f"model.{key} is required")
    if errors:
        return errors, pre
    try:
        params = model_params(resolve(cfg))
    except (DomainError, ConfigError, TypeError, ValueError) as exc:
        errors.append(f"model: {exc}")
        return errors, pre
    if name in NEEDS_REPLICATES:
        r = cfg.get("replicates")
        if not isinstance(r, int) or r < 1:
            errors.append("replicates must be a positive integer")
    w = cfg.get("workers", 1)
    if not isinstance(w, int) or w < 1:
        errors.append("workers must be a positive integer")
    opts = resolve(cfg)["options"]
    H, a = params.hurst, params.alpha
    gamma = a / 2 - 1 + 2 * H
    temporal_ok = params.d0 == 0 or params.beta > 4 * H + 2
    spatial_reasons = []
    if params.d0 != 0:
        spatial_reasons.append("D0 must be 0")
    if not 0 < gamma < 1:
        spatial_reasons.append(f"gamma = {gamma:g} not in (0, 1)")
    kind = opts.get("kind")
    if name in ("variogram", "slnd", "modulus"):
        if kind not in ("temporal", "spatial"):
            errors.append("options.kind must be 'temporal' or 'spatial'")
        elif kind == "spatial" and spatial_reasons:
            pre.append(f"spatial {name}: " + "; ".join(spatial_reasons))
        elif kind == "temporal" and not temporal_ok:
            pre.append(f"temporal {name}: needs D0 = 0 or beta > 4H + 2 = {4 * H + 2:g}")
    if name == "noise" and a <= 2:
        pre.append(f"noise covariance needs alpha > 2 (got {a:g})")
    if name == "spectrum":
        if params.d0 != 0:
            pre.append("spectrum law needs D0 = 0")
        if opts["window"][1] > params.L:
            pre.append("spectrum window exceeds L")
        if opts.get("mode") not in ("analytic", "monte_carlo"):
            errors.append("options.mode must be 'analytic' or 'monte_carlo'")
        if opts.get("mode") == "monte_carlo" and not isinstance(cfg.get("replicates"), int):
            errors.append("Monte Carlo spectrum needs replicates")
    if name == "variogram" and opts.get("mode") not in ("analytic", "monte_carlo"):
        errors.append("options.mode must be 'analytic' or 'monte_carlo'")
    if name == "variogram" and opts.get("mode") == "monte_carlo":
        r = cfg.get("replicates")
        if not isinstance(r, int) or r < 1:
            errors.append("Monte Carlo variogram needs replicates >= 1")
    if name == "sample":
        if opts.get("times") is None:
            errors.append("sample needs options.times")
        else:
            try:
                time_grid(opts["times"], params.horizon)
            except (DomainError, KeyError, TypeError, ValueError) as exc:
                errors.append(f"options.times: {exc}")
    if name == "truncation":
        Ls = opts["L_list"]
        if any(b <= a for a, b in zip(Ls, Ls[1:])):
            errors.append("L_list must be increasing")
        if not 0 < float(opts["t"]) <= params.horizon:
            pre.append("truncation time must lie in (0, T]")
    for key in ("t",):
        if key in opts and opts[key] is not None and name not in ("sample",):
            if not 0 < float(opts[key]) <= params.horizon:
                pre.append(f"options.t = {opts[key]} outside (0, T]")
    return errors, pre
