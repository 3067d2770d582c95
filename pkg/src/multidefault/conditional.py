"""Conditional expectations and laws in the total and the observable filtration.

Given the observable information (node at t, observation atom) the value of a
claim Y_T(chi) is a ratio of two integrals over the atom:

    numerator   = int E[Y_T(x) alpha_T(x) | F_t] nu(dx)
    denominator = int alpha_t(x) nu(dx)

Both are evaluated on the same points and weights. The generic grid path
integrates against the prior eta and beta; the fast paths integrate the
densities alpha over the regime region and serve as an independent route.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, permutations

import numpy as np

from . import _core
from .errors import ModelError, UnsupportedError
from .model import (
    DensityModel,
    ObservationScheme,
    PayoffSpec,
    ReferenceMeasure,
    Regime,
    TableAlpha,
    _lower,
    model_partition,
)
from .prediction import (
    marked_regime,
    nonordered_regime,
    ordered_regime,
    realized_regime,
)

METHODS = ("direct", "bayes")


def _ratio(num, den):
    """num / den with the 0/0 -> 0 convention; returns (values, mass_zero flags)."""
    zero = ~(den > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(zero, 0.0, num / np.where(zero, 1.0, den))
    return vals, zero


def _check_time(model, payoff, t):
    T = payoff.maturity
    if not 0 <= T <= model.horizon:
        raise ModelError(f"payoff maturity {T} outside 0..{model.horizon}")
    if not 0 <= t <= T:
        raise ModelError(f"time {t} outside 0..{T}")
    return T


def numerator(model: DensityModel, payoff: PayoffSpec, t, pts):
    """E[Y_T(x) alpha_T(x) | F_t] per node at depth t and point x -> (N_t, M)."""
    T = payoff.maturity
    y = payoff.values(model.tree.size(T), pts) * model.alpha_at(T, pts)
    return model.tree.condexp(y, T, t)


# ---------------------------------------------------------------------------
# tail integrals


def tail_integral(model: DensityModel, t, pinned, s, node=None, upper=math.inf):
    """Integral of alpha_s over the free coordinates restricted to (t, upper], pins substituted.

    ``pinned`` maps coordinate index -> value. Mark coordinates that are not
    pinned are integrated over the whole line. Returns one value per node at
    depth s (or the value at ``node``).
    """
    pinned = dict(pinned)
    if any(not 0 <= c < model.dim for c in pinned):
        raise ModelError(f"pinned coordinates {sorted(pinned)} exceed dimension {model.dim}")
    free = tuple(c for c in range(model.n) if c not in pinned)
    marks = tuple(c for c in range(model.n, model.dim) if c not in pinned)
    regime = Regime(pins=tuple(sorted(pinned.items())), free=free, free_marks=marks, lo=_lower(t),
                    hi=upper, ordered=model.ordered)
    pts, w, _ = model.region(regime)
    out = model.alpha_at(s, pts) @ w
    return out if node is None else float(out[node])


# ---------------------------------------------------------------------------
# total filtration


@dataclass(frozen=True, eq=False)
class ParametrizedMartingale:
    """Snapshot at time t of x -> E[Psi(x) | F_t] for every node, with its 0/0 flags."""

    model: DensityModel
    payoff: PayoffSpec
    t: int

    def evaluate(self, pts):
        """(values, mass_zero) arrays of shape (N_t, M)."""
        num = numerator(self.model, self.payoff, self.t, pts)
        return _ratio(num, self.model.alpha_at(self.t, pts))

    def __call__(self, pts):
        return self.evaluate(pts)[0]

    @property
    def table(self):
        return self(self.model.reference.points)


def condexp_H(model: DensityModel, payoff: PayoffSpec, t) -> ParametrizedMartingale:
    """E[Y_T(chi) | F_t v sigma(chi)] as a function of (node, x)."""
    _check_time(model, payoff, t)
    return ParametrizedMartingale(model, payoff, t)


def universal_martingale(model: DensityModel, terminal, T):
    """Per-depth tables of E[Psi(x) | F_t] for a (N_T, K) terminal table."""
    return [model.tree.condexp(terminal, T, t) for t in range(T + 1)]


# ---------------------------------------------------------------------------
# observable filtration, grid


@dataclass(frozen=True, eq=False)
class CondExpResult:
    """Values of E[Y | G_t] per (node at t, observation atom)."""

    t: int
    method: str
    values: np.ndarray  # (N_t, A)
    mass_zero: np.ndarray  # (N_t, A) bool
    keys: list
    labels: np.ndarray | None = None  # grid atom label per point
    regimes: list | None = None

    def at(self, node, key):
        return float(self.values[node, self.keys.index(key)])

    def for_points(self):
        """(N_t, K) table: the value of the atom containing each grid point."""
        return self.values[:, self.labels]


@dataclass(frozen=True, eq=False)
class ConditionalLawG:
    """eta^G_t: per node, a probability vector on each observation atom."""

    t: int
    weights: np.ndarray  # (N_t, K), sums to 1 on every atom with positive mass
    labels: np.ndarray
    keys: list
    mass_zero: np.ndarray  # (N_t, A)

    def law(self, node, atom):
        w = np.where(self.labels == atom, self.weights[node], 0.0)
        return w

    def integrate(self, values):
        """Atom-wise integral of a (N_t, K) table -> (N_t, A)."""
        v = np.broadcast_to(np.asarray(values, dtype=float), self.weights.shape)
        return _core.group_sum(self.weights * v, self.labels, len(self.keys))


def _grid_setup(model, scheme, t):
    if not model.is_grid:
        raise UnsupportedError("atom-wise computations need a grid reference; pass a realized point")
    model.require_valid()
    return model_partition(model, scheme, t)


def conditional_law_G(model: DensityModel, scheme: ObservationScheme, t) -> ConditionalLawG:
    """eta^G_t(dx) proportional to beta_t(x) eta_t(dx), per node and atom."""
    part = _grid_setup(model, scheme, t)
    mass = model.beta_grid(t) * model.eta[None, :]
    tot = _core.group_sum(mass, part.labels, part.n_atoms)
    per_point = tot[:, part.labels]
    w, _ = _ratio(mass, per_point)
    return ConditionalLawG(t, w, part.labels, part.keys, ~(tot > 0))


def _condexp_G_grid(model, scheme, payoff, t, method):
    part = _grid_setup(model, scheme, t)
    T = payoff.maturity
    pts = model.reference.points
    beta_t = model.beta_grid(t)
    if method == "bayes":
        # eta_t((Y beta_T)^F_t) / eta_t(beta_t): prior-weighted ratio on each atom
        yb = payoff.values(model.tree.size(T), pts) * model.beta_grid(T)
        num = _core.group_sum(model.tree.condexp(yb, T, t) * model.eta, part.labels, part.n_atoms)
        den = _core.group_sum(beta_t * model.eta, part.labels, part.n_atoms)
        vals, zero = _ratio(num, den)
    else:
        # condition on the total filtration first, then average under eta^G_t
        psi = condexp_H(model, payoff, t).table
        law = conditional_law_G(model, scheme, t)
        vals = law.integrate(psi)
        zero = law.mass_zero
        vals = np.where(zero, 0.0, vals)
    regimes = [scheme.regime(k, t, model.n, model.ordered) for k in part.keys]
    return CondExpResult(t, method, vals, zero, part.keys, part.labels, regimes)


def condexp_G(model: DensityModel, scheme: ObservationScheme, payoff: PayoffSpec, t, method="direct",
              realized=None) -> CondExpResult:
    """E[Y_T(chi) | G_t] on every (node, atom) (grid) or on the realized regime.

    With ``realized`` the computation goes through the regime closed forms
    (required for the Lebesgue reference); otherwise every grid atom is covered.
    """
    if method not in METHODS:
        raise ModelError(f"unknown method {method!r}; expected direct or bayes")
    scheme.check_compatible(model)
    _check_time(model, payoff, t)
    if realized is None:
        return _condexp_G_grid(model, scheme, payoff, t, method)
    regime = realized_regime(model, scheme, t, realized)
    res = regime_condexp(model, payoff, t, regime, method)
    return CondExpResult(t, method, res.values[:, None], res.mass_zero[:, None], [regime.label],
                         regimes=[regime])


# ---------------------------------------------------------------------------
# regime closed forms


@dataclass(frozen=True, eq=False)
class RegimeValue:
    regime: Regime
    values: np.ndarray  # (N_t,)
    mass_zero: np.ndarray
    denominator: np.ndarray


def regime_condexp(model: DensityModel, payoff: PayoffSpec, t, regime: Regime, method="bayes") -> RegimeValue:
    """Ratio of regime integrals of E[Y alpha_T | F_t] and alpha_t (shared nodes)."""
    _check_time(model, payoff, t)
    pts, w, _ = model.region(regime, payoff.breaks)
    a_t = model.alpha_at(t, pts)
    den = a_t @ w
    if method == "bayes":
        num = numerator(model, payoff, t, pts) @ w
    else:
        psi, _ = condexp_H(model, payoff, t).evaluate(pts)
        num = (psi * a_t) @ w
    vals, zero = _ratio(num, den)
    return RegimeValue(regime, vals, zero, den)


def condexp_G_single(model, payoff, t, tau, t0=None, method="bayes") -> RegimeValue:
    """One default (optionally with an insider cut t0)."""
    if model.n != 1:
        raise ModelError("single-default closed form needs n=1")
    scheme = ObservationScheme("insider", t0=t0) if t0 is not None else ObservationScheme("progressive-single")
    return regime_condexp(model, payoff, t, realized_regime(model, scheme, t, [tau]), method)


def condexp_G_ordered(model, payoff, t, sigma, method="bayes") -> RegimeValue:
    if model.n > 1 and not model.ordered:
        raise ModelError("ordered closed form needs an ordered model")
    return regime_condexp(model, payoff, t, ordered_regime(t, sigma, model.n), method)


def condexp_G_nonordered(model, payoff, t, tau, method="bayes") -> RegimeValue:
    if model.n > 16:
        raise ModelError("non-ordered regime enumeration is limited to n <= 16")
    if model.n > 1 and model.ordered:
        raise ModelError("non-ordered closed form needs a non-ordered model")
    return regime_condexp(model, payoff, t, nonordered_regime(t, tau, model.n), method)


def condexp_G_marked(model, payoff, t, pairs, method="bayes") -> RegimeValue:
    if not model.marks:
        raise ModelError("marked closed form needs a marked model")
    return regime_condexp(model, payoff, t, marked_regime(t, pairs, model.n), method)


def nonordered_subsets(n):
    """All 2^n observed-coordinate subsets, by size then lexicographically."""
    if n > 16:
        raise ModelError("non-ordered regime enumeration is limited to n <= 16")
    out = [()]
    for r in range(1, n + 1):
        out.extend(combinations(range(n), r))
    return out


# ---------------------------------------------------------------------------
# symmetrization


class SymmetrizedAlpha:
    """Density of the increasing rearrangement: chamber indicator times the permutation sum."""

    def __init__(self, base, n):
        if n > 8:
            raise ModelError("symmetrization is limited to n <= 8")
        self.base = base
        self.n = n
        self.deterministic = getattr(base, "deterministic", False)
        self.sampler = None
        base_sampler = getattr(base, "sampler", None)
        if base_sampler is not None:
            self.sampler = lambda rng, count: np.sort(base_sampler(rng, count), axis=1)

    def __call__(self, t, pts, n_nodes):
        pts = np.asarray(pts, dtype=float)
        chamber = np.all(np.diff(pts[:, : self.n], axis=1) > 0, axis=1)
        total = np.zeros((n_nodes, len(pts)))
        for perm in permutations(range(self.n)):
            total += self.base(t, pts[:, list(perm)], n_nodes)
        return np.where(chamber[None, :], total, 0.0)


def symmetrize_density(alpha, n):
    """Ordered-chamber density from a non-ordered one.

    ``alpha`` is either a density family (called as ``alpha(t, pts, n_nodes)``)
    or a plain function of points. Points off the strict chamber map to 0.
    """
    if n > 8:
        raise ModelError("symmetrization is limited to n <= 8")
    if hasattr(alpha, "deterministic"):
        return SymmetrizedAlpha(alpha, n)

    def sym(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        chamber = np.all(np.diff(pts[:, :n], axis=1) > 0, axis=1)
        total = sum(np.asarray(alpha(pts[:, list(p)]), dtype=float) for p in permutations(range(n)))
        return np.where(chamber, total, 0.0)

    return sym


def sorted_model(model: DensityModel, name=None) -> DensityModel:
    """Law of the increasing rearrangement of a non-ordered grid model.

    Mass of every grid point is pushed to its sorted image, ties included; the
    sorted point keeps the summed reference weight.
    """
    if not model.is_grid or model.marks or model.ordered:
        raise ModelError("sorted_model needs a non-ordered, unmarked grid model")
    pts = model.reference.points
    srt = np.sort(pts, axis=1)
    uniq, inv = np.unique(srt, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    w = model.reference.weights
    new_w = np.bincount(inv, weights=w, minlength=len(uniq))
    tables = []
    for t in range(model.horizon + 1):
        mass = _core.group_sum(model.alpha_grid(t) * w, inv, len(uniq))
        dens, _ = _ratio(mass, np.broadcast_to(new_w, mass.shape))
        tables.append(dens)
    ref = ReferenceMeasure.grid(uniq, new_w)
    return DensityModel(ref, TableAlpha(tables, ref), model.n, tree=model.tree, ordered=True,
                        name=name or f"{model.name}-sorted")
