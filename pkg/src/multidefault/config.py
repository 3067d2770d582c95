"""JSON model configuration.

Schema (all sections are objects)::

    {
      "name": "fixtureA",                      optional label
      "n": 1,                                  number of defaults
      "ordered": false, "marks": false,
      "reference": {"kind": "lebesgue", "u_max": 10, "order": 16, "cell": 1,
                    "tail_rate": 1, "mark_bound": 8, "mark_cells": 16}
                 | {"kind": "grid", "points": [[...], ...], "weights": [...]},
      "tree": {"kind": "chain", "depth": 3}
            | {"kind": "binary", "depth": 2, "p": 0.5}
            | {"kind": "explicit", "parents": [[...], ...], "probs": [[...], ...]},
      "alpha": {"family": "exponential", "rates": [1.0, ...]}
             | {"family": "exchangeable-exponential", "rate": 1.0}
             | {"family": "exponential-gaussian-marks", "rate": 1.0}
             | {"family": "table", "values": [[[...]]]},   row-major (t, node, grid index)
      "scheme": {"kind": "progressive-single", "t0": null, "eps": null},
      "rng": {"algorithm": "PCG64"}
    }
"""
from __future__ import annotations

import hashlib
import json
import math
import os

import numpy as np

from .errors import ModelError
from .model import (
    DensityModel,
    DeterministicAlpha,
    ExponentialAlpha,
    ObservationScheme,
    ReferenceMeasure,
    ScenarioTree,
    TableAlpha,
)

REFERENCE_KEYS = {"kind", "points", "weights", "u_max", "order", "cell", "tail_rate", "mark_bound", "mark_cells"}


def canonical(cfg) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def config_hash(cfg) -> str:
    return hashlib.sha256(canonical(cfg).encode()).hexdigest()


def load_config(source):
    """Config dict from a path, a built-in fixture name or an existing dict."""
    if isinstance(source, dict):
        return source
    from . import fixtures

    if source in fixtures.FIXTURES and not os.path.exists(source):
        return fixtures.fixture_config(source)
    try:
        with open(source) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ModelError(f"model file not found: {source}") from None
    except json.JSONDecodeError as exc:
        raise ModelError(f"cannot parse {source}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ModelError(f"{source}: top level must be an object")
    return cfg


def build_reference(sec):
    unknown = set(sec) - REFERENCE_KEYS
    if unknown:
        raise ModelError(f"unknown reference fields: {sorted(unknown)}")
    kind = sec.get("kind")
    if kind == "grid":
        return ReferenceMeasure.grid(sec["points"], sec.get("weights"))
    if kind == "lebesgue":
        kw = {k: sec[k] for k in ("u_max", "order", "cell", "tail_rate", "mark_bound", "mark_cells") if k in sec}
        return ReferenceMeasure("lebesgue", **kw)
    raise ModelError(f"reference kind must be grid or lebesgue, got {kind!r}")


def build_tree(sec):
    kind = sec.get("kind", "chain")
    if kind == "chain":
        return ScenarioTree.chain(int(sec.get("depth", 1)))
    if kind == "binary":
        return ScenarioTree.binary(int(sec["depth"]), float(sec.get("p", 0.5)))
    if kind == "explicit":
        return ScenarioTree(tuple(sec["parents"]), tuple(sec["probs"]))
    raise ModelError(f"unknown tree kind {kind!r}")


def _gaussian_marks(rate, n):
    lam = float(rate)

    def fn(pts):
        v, l = pts[:, :n], pts[:, n:]
        ok = np.all(v >= 0, axis=1)
        dens = np.prod(lam * np.exp(-lam * v), axis=1) * np.prod(np.exp(-0.5 * l * l) / math.sqrt(2 * math.pi), axis=1)
        return np.where(ok, dens, 0.0)

    def sampler(rng, count):
        return np.column_stack([rng.exponential(1.0 / lam, size=(count, n)), rng.standard_normal((count, n))])

    return DeterministicAlpha(fn, sampler, label=f"exponential-gaussian-marks({lam!r})")


def build_alpha(sec, reference, n, ordered, marks):
    fam = sec.get("family")
    if fam == "exponential":
        rates = sec.get("rates", [1.0] * n)
        if len(rates) != n:
            raise ModelError(f"exponential family needs {n} rates")
        return ExponentialAlpha(rates, ordered=ordered)
    if fam == "exchangeable-exponential":
        return ExponentialAlpha([float(sec.get("rate", 1.0))] * n, ordered=ordered)
    if fam == "exponential-gaussian-marks":
        if not marks or n != 1:
            raise ModelError("exponential-gaussian-marks needs a marked model with n=1")
        return _gaussian_marks(sec.get("rate", 1.0), n)
    if fam == "table":
        return TableAlpha(sec["values"], reference)
    raise ModelError(f"unknown alpha family {fam!r}")


def build_scheme(sec):
    if isinstance(sec, str):
        return ObservationScheme(sec)
    return ObservationScheme(sec["kind"], t0=sec.get("t0"), eps=sec.get("eps"))


def build_model(cfg) -> DensityModel:
    try:
        n = int(cfg["n"])
        ordered = bool(cfg.get("ordered", False))
        marks = bool(cfg.get("marks", False))
        ref = build_reference(cfg["reference"])
        tree = build_tree(cfg.get("tree", {"kind": "chain", "depth": 1}))
        alpha = build_alpha(cfg["alpha"], ref, n, ordered, marks)
    except KeyError as exc:
        raise ModelError(f"missing config field {exc.args[0]!r}") from None
    return DensityModel(ref, alpha, n, tree=tree, ordered=ordered, marks=marks, name=cfg.get("name", ""))


def load(source):
    """(config, model, scheme or None)."""
    cfg = load_config(source)
    model = build_model(cfg)
    scheme = build_scheme(cfg["scheme"]) if "scheme" in cfg else None
    return cfg, model, scheme
