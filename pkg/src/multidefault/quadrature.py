"""Quadrature rules for the truncated Lebesgue reference measure.

Default-time coordinates use composite Gauss-Legendre on cells aligned to
multiples of ``cell`` up to ``u_max``; the semi-infinite part beyond ``u_max``
is handled by a scaled Gauss-Laguerre rule whose nodes are appended to the
last cell. The Laguerre scale is the reference's ``tail_rate`` and makes the
rule exact for exponential tails of that rate.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import roots_laguerre, roots_legendre

INF = math.inf


@lru_cache(maxsize=None)
def _legendre(order):
    x, w = roots_legendre(order)
    return x, w


@lru_cache(maxsize=None)
def _laguerre(order):
    y, w = roots_laguerre(order)
    # weights for integrating f directly: w_i * exp(y_i)
    return y, w * np.exp(y)


def gauss_legendre(a, b, order):
    x, w = _legendre(order)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def _breakpoints(a, b, cell, extra=()):
    inner = set()
    k = math.floor(a / cell) + 1
    while k * cell < b:
        if k * cell > a:
            inner.add(k * cell)
        k += 1
    inner.update(x for x in extra if a < x < b)
    return [a, *sorted(inner), b]


@lru_cache(maxsize=4096)
def line_rule(a, b, order, cell, u_max, tail_rate, breaks=()):
    """Nodes and weights for integrating over the interval (a, b] of the half line.

    ``a = -inf`` means integration starts at 0. ``breaks`` are extra cell
    edges, typically the jumps of the integrand.
    """
    a = 0.0 if a == -INF else max(float(a), 0.0)
    xs, ws = [], []
    finite_end = b if b != INF else max(a, u_max, *[x for x in breaks if x < INF])
    if finite_end > a:
        edges = _breakpoints(a, finite_end, cell, breaks)
        for lo, hi in zip(edges[:-1], edges[1:]):
            if hi > lo:
                x, w = gauss_legendre(lo, hi, order)
                xs.append(x)
                ws.append(w)
    if b == INF:
        y, w = _laguerre(order)
        xs.append(finite_end + y / tail_rate)
        ws.append(w / tail_rate)
    if not xs:
        return np.empty(0), np.empty(0)
    x = np.concatenate(xs)
    w = np.concatenate(ws)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=None)
def mark_rule(bound, cells, order):
    edges = np.linspace(-bound, bound, cells + 1)
    parts = [gauss_legendre(lo, hi, order) for lo, hi in zip(edges[:-1], edges[1:])]
    x = np.concatenate([p[0] for p in parts])
    w = np.concatenate([p[1] for p in parts])
    return x, w


def tensor(rules):
    """Tensor product of 1-D rules -> (points (M, k), weights (M,))."""
    if not rules:
        return np.zeros((1, 0)), np.ones(1)
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    pts = np.column_stack([g.ravel() for g in grids])
    w = np.prod(np.column_stack([g.ravel() for g in wgrids]), axis=1)
    return pts, w


def ordered_rule(k, lo, hi, ref, breaks=()):
    """Nested rule over lo < u_1 <= ... <= u_k (u_1 <= hi)."""
    x, w = line_rule(lo, hi, ref.order, ref.cell, ref.u_max, ref.tail_rate, breaks)
    if k == 1:
        return x[:, None], np.array(w)
    blocks, weights = [], []
    for xi, wi in zip(x, w):
        sub, sw = ordered_rule(k - 1, xi, INF, ref, breaks)
        blocks.append(np.column_stack([np.full(len(sub), xi), sub]))
        weights.append(wi * sw)
    return np.vstack(blocks), np.concatenate(weights)
