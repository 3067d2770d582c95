"""Reference models used by the tests, the acceptance suite and the CLI."""
from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

from .model import ScenarioTree

TIMES = [0.5, 1.25, 1.75, 2.5]


def _tree_cfg(tree: ScenarioTree):
    return {"kind": "explicit", "parents": [p.tolist() for p in tree.parents], "probs": [p.tolist() for p in tree.probs]}


def dirichlet_tables(tree: ScenarioTree, weights, seed, concentration=1.0):
    """Density tables whose terminal laws are seeded Dirichlet draws, earlier ones by backward induction."""
    rng = np.random.Generator(np.random.PCG64(seed))
    w = np.asarray(weights, dtype=float)
    T = tree.depth
    probs = rng.dirichlet(np.full(len(w), concentration), size=tree.size(T))
    terminal = probs / w
    return [tree.condexp(terminal, T, t) for t in range(T + 1)]


def _table_cfg(name, points, weights, tree, tables, n, ordered=False, marks=False, scheme=None):
    cfg = {
        "name": name,
        "n": n,
        "ordered": ordered,
        "marks": marks,
        "reference": {"kind": "grid", "points": [list(map(float, p)) for p in points],
                      "weights": [float(x) for x in weights]},
        "tree": _tree_cfg(tree),
        "alpha": {"family": "table", "values": [tab.tolist() for tab in tables]},
        "rng": {"algorithm": "PCG64"},
    }
    if scheme:
        cfg["scheme"] = scheme
    return cfg


def fixture_a():
    """One default, exponential(1) density, Lebesgue reference truncated at 10."""
    return {
        "name": "fixtureA",
        "n": 1,
        "reference": {"kind": "lebesgue", "u_max": 10.0, "order": 16, "cell": 1.0, "tail_rate": 1.0},
        "tree": {"kind": "chain", "depth": 3},
        "alpha": {"family": "exponential", "rates": [1.0]},
        "scheme": {"kind": "progressive-single"},
        "rng": {"algorithm": "PCG64"},
    }


def fixture_a_grid():
    """Grid version of the exponential: midpoints of unit cells carrying the exact cell mass."""
    pts = [[k + 0.5] for k in range(10)]
    mass = [math.exp(-k) - math.exp(-(k + 1)) for k in range(9)] + [math.exp(-9)]
    weights = [m / math.exp(-(k + 0.5)) for k, m in enumerate(mass)]
    tree = ScenarioTree.chain(3)
    tables = [np.array([[math.exp(-(k + 0.5)) for k in range(10)]]) for _ in range(4)]
    return _table_cfg("fixtureA-grid", pts, weights, tree, tables, 1, scheme={"kind": "progressive-single"})


def fixture_b():
    """Two scenarios and two points: chi is revealed by the environment at t=1."""
    tree = ScenarioTree.binary(1)
    tables = [np.array([[1.0, 1.0]]), np.array([[2.0, 0.0], [0.0, 2.0]])]
    return _table_cfg("fixtureB", [[0.0], [1.0]], [0.5, 0.5], tree, tables, 1,
                      scheme={"kind": "progressive-single"})


def fixture_c(seed=7):
    """Two ordered defaults on a grid with ties, coupled to a two-step binary tree."""
    pts = [(a, b) for a in TIMES for b in TIMES if a <= b]
    tree = ScenarioTree.binary(2, 0.4)
    w = np.ones(len(pts))
    return _table_cfg("fixtureC", pts, w, tree, dirichlet_tables(tree, w, seed), 2, ordered=True,
                      scheme={"kind": "ordered-counting"})


def fixture_c_nonordered(seed=11):
    """Two non-ordered defaults on the full 4 x 4 grid, coupled to the tree."""
    pts = list(itertools.product(TIMES, TIMES))
    tree = ScenarioTree.binary(2, 0.4)
    w = np.full(len(pts), 0.5)
    return _table_cfg("fixtureC-nonordered", pts, w, tree, dirichlet_tables(tree, w, seed), 2,
                      scheme={"kind": "nonordered-indicators"})


def fixture_c_independent():
    """Non-ordered grid with the same prior at every node (beta = 1) on a nontrivial tree."""
    base = fixture_c_nonordered()
    tabs = base["alpha"]["values"]
    prior = tabs[0][0]
    tree = ScenarioTree.binary(2, 0.4)
    base["alpha"]["values"] = [[list(prior) for _ in range(tree.size(t))] for t in range(3)]
    base["name"] = "fixtureC-independent"
    return base


def fixture_d(ordered=False):
    """Two exponential(1) defaults on the Lebesgue quadrant (or their order statistics)."""
    return {
        "name": "fixtureD-ordered" if ordered else "fixtureD",
        "n": 2,
        "ordered": ordered,
        "reference": {"kind": "lebesgue", "u_max": 10.0, "order": 16, "cell": 1.0, "tail_rate": 1.0},
        "tree": {"kind": "chain", "depth": 3},
        "alpha": {"family": "exchangeable-exponential", "rate": 1.0},
        "scheme": {"kind": "ordered-counting" if ordered else "nonordered-indicators"},
        "rng": {"algorithm": "PCG64"},
    }


def fixture_marked(seed=5):
    """Two ordered defaults with non-zero marks on a grid, coupled to the tree.

    Default times are strictly increasing: with a tie the counting observation
    does not tell which mark belongs to which default.
    """
    times = [(0.5, 1.5), (0.5, 2.5), (1.5, 2.5)]
    marks = list(itertools.product([-1.0, 2.0], repeat=2))
    pts = [(a, b, l1, l2) for (a, b) in times for (l1, l2) in marks]
    tree = ScenarioTree.binary(2, 0.5)
    w = np.ones(len(pts))
    return _table_cfg("fixture-marked", pts, w, tree, dirichlet_tables(tree, w, seed), 2, ordered=True,
                      marks=True, scheme={"kind": "marked-counting"})


def fixture_marked_lebesgue():
    """One default with a Gaussian mark."""
    return {
        "name": "fixture-marked-lebesgue",
        "n": 1,
        "marks": True,
        "reference": {"kind": "lebesgue", "u_max": 10.0, "order": 16, "cell": 1.0, "tail_rate": 1.0,
                      "mark_bound": 8.0, "mark_cells": 16},
        "tree": {"kind": "chain", "depth": 3},
        "alpha": {"family": "exponential-gaussian-marks", "rate": 1.0},
        "scheme": {"kind": "marked-counting"},
        "rng": {"algorithm": "PCG64"},
    }


def fixture_large(seed=3):
    """Three non-ordered defaults on an 8^3 grid with a six-step binary tree (64 paths)."""
    vals = [k + 0.5 for k in range(8)]
    pts = list(itertools.product(vals, vals, vals))
    tree = ScenarioTree.binary(6, 0.5)
    w = np.ones(len(pts))
    return _table_cfg("fixture-large", pts, w, tree, dirichlet_tables(tree, w, seed), 3,
                      scheme={"kind": "nonordered-indicators"})


FIXTURES = {
    "fixtureA": fixture_a,
    "fixtureA-grid": fixture_a_grid,
    "fixtureB": fixture_b,
    "fixtureC": fixture_c,
    "fixtureC-nonordered": fixture_c_nonordered,
    "fixtureC-independent": fixture_c_independent,
    "fixtureD": fixture_d,
    "fixtureD-ordered": lambda: fixture_d(ordered=True),
    "fixture-marked": fixture_marked,
    "fixture-marked-lebesgue": fixture_marked_lebesgue,
    "fixture-large": fixture_large,
}


def fixture_config(name):
    return FIXTURES[name]()


@lru_cache(maxsize=None)
def load_fixture(name):
    """(model, scheme) for a built-in fixture; cached since models are immutable."""
    from .config import build_model, build_scheme

    cfg = fixture_config(name)
    return build_model(cfg), build_scheme(cfg["scheme"])
