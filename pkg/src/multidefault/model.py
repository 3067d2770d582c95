"""Default system model: reference measure, scenario tree, conditional density
family, observation schemes, payoffs and the joint law of (path, default variable).

Time is the integer grid ``0..horizon``. The environment filtration is a finite
scenario tree whose nodes at depth ``t`` are the atoms of ``F_t``. The default
variable lives in a finite grid (weighted points) or in the positive orthant
with a truncated Lebesgue reference measure handled by quadrature.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from itertools import permutations
from typing import Callable

import numpy as np

from . import _core, quadrature
from .errors import ModelError, NegativeDensityError, UnsupportedError, UnvalidatedModelError

INF = math.inf

GRID_TOL = 1e-9
QUAD_TOL = 1e-6


# ---------------------------------------------------------------------------
# reference measure


@dataclass(frozen=True, eq=False)
class ReferenceMeasure:
    """Reference measure on E: weighted grid points or truncated Lebesgue."""

    kind: str
    points: np.ndarray | None = None
    weights: np.ndarray | None = None
    u_max: float = 10.0
    order: int = 16
    cell: float = 1.0
    tail_rate: float = 1.0
    mark_bound: float = 8.0
    mark_cells: int = 16

    def __post_init__(self):
        if self.kind == "grid":
            if self.points is None:
                raise ModelError("grid reference needs points")
            pts = np.asarray(self.points, dtype=float)
            if pts.size == 0:
                raise ModelError("empty grid")
            if pts.ndim == 1:
                pts = pts[:, None]
            w = np.ones(len(pts)) if self.weights is None else np.asarray(self.weights, dtype=float)
            if w.shape != (len(pts),):
                raise ModelError(f"weights shape {w.shape} does not match {len(pts)} points")
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ModelError("grid weights must be finite and non-negative")
            if len({tuple(p) for p in pts}) != len(pts):
                raise ModelError("grid points must be pairwise distinct")
            pts.setflags(write=False)
            w.setflags(write=False)
            object.__setattr__(self, "points", pts)
            object.__setattr__(self, "weights", w)
        elif self.kind == "lebesgue":
            if not self.u_max > 0:
                raise ModelError("u_max must be positive")
            if self.order < 1 or self.cell <= 0 or self.tail_rate <= 0:
                raise ModelError("invalid quadrature settings")
        else:
            raise ModelError(f"unknown reference kind {self.kind!r}")

    @classmethod
    def grid(cls, points, weights=None):
        return cls("grid", points=points, weights=weights)

    @classmethod
    def lebesgue(cls, u_max=10.0, order=16, **kwargs):
        return cls("lebesgue", u_max=u_max, order=order, **kwargs)

    @property
    def is_grid(self):
        return self.kind == "grid"

    @property
    def size(self):
        return len(self.points) if self.is_grid else None

    @cached_property
    def _index(self):
        return {tuple(p): k for k, p in enumerate(self.points)}

    def lookup(self, pts):
        """Grid indices of the given points (KeyError if a point is off the grid)."""
        pts = np.asarray(pts, dtype=float)
        return np.array([self._index[tuple(p)] for p in pts], dtype=np.intp)


# ---------------------------------------------------------------------------
# scenario tree


@dataclass(frozen=True, eq=False)
class ScenarioTree:
    """Finite filtered probability space.

    ``parents[s - 1][j]`` is the parent (at depth ``s - 1``) of node ``j`` at
    depth ``s`` and ``probs[s - 1][j]`` the transition probability on that edge.
    """

    parents: tuple
    probs: tuple

    def __post_init__(self):
        parents = tuple(np.asarray(p, dtype=np.intp) for p in self.parents)
        probs = tuple(np.asarray(p, dtype=float) for p in self.probs)
        if len(parents) != len(probs):
            raise ModelError("parents and probs must have the same depth")
        n_prev = 1
        for s, (par, pr) in enumerate(zip(parents, probs), start=1):
            if par.shape != pr.shape or par.ndim != 1:
                raise ModelError(f"depth {s}: parent/probability arrays mismatch")
            if par.size and (par.min() < 0 or par.max() >= n_prev):
                raise ModelError(f"depth {s}: parent index out of range")
            if np.any(pr < 0):
                raise ModelError(f"depth {s}: negative transition probability")
            totals = np.bincount(par, weights=pr, minlength=n_prev)
            if np.any(np.abs(totals - 1.0) > 1e-12):
                bad = int(np.argmax(np.abs(totals - 1.0)))
                raise ModelError(f"depth {s}: probabilities out of node {bad} sum to {totals[bad]}")
            n_prev = len(par)
        for a in parents + probs:
            a.setflags(write=False)
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def chain(cls, depth):
        """Trivial tree (deterministic environment) of the given depth."""
        return cls(
            tuple(np.zeros(1, np.intp) for _ in range(depth)),
            tuple(np.ones(1) for _ in range(depth)),
        )

    @classmethod
    def binary(cls, depth, p=0.5):
        parents, probs = [], []
        for s in range(1, depth + 1):
            n_prev = 2 ** (s - 1)
            parents.append(np.repeat(np.arange(n_prev), 2))
            probs.append(np.tile([p, 1.0 - p], n_prev))
        return cls(tuple(parents), tuple(probs))

    @classmethod
    def from_transitions(cls, transitions):
        """Build from nested lists: ``transitions[s][i]`` = child probabilities of node i at depth s."""
        parents, probs = [], []
        for level in transitions:
            par, pr = [], []
            for i, children in enumerate(level):
                par.extend([i] * len(children))
                pr.extend(children)
            parents.append(par)
            probs.append(pr)
        return cls(tuple(parents), tuple(probs))

    @property
    def depth(self):
        return len(self.parents)

    def size(self, t):
        return 1 if t == 0 else len(self.parents[t - 1])

    @property
    def is_chain(self):
        return all(len(p) == 1 for p in self.parents)

    @cached_property
    def _path_probs(self):
        out = [np.ones(1)]
        for par, pr in zip(self.parents, self.probs):
            out.append(out[-1][par] * pr)
        return out

    def path_prob(self, t):
        """Unconditional probability of every node at depth t."""
        return self._path_probs[t]

    def ancestors(self, t, s):
        """Index at depth t of the ancestor of each node at depth s (t <= s)."""
        idx = np.arange(self.size(s))
        for level in range(s, t, -1):
            idx = self.parents[level - 1][idx]
        return idx

    def conditional(self, t, s):
        """P(node at s | its ancestor at t)."""
        return self.path_prob(s) / self.path_prob(t)[self.ancestors(t, s)]

    def condexp(self, values, s, t):
        """E[values_s | F_t]: backward induction of a (N_s, M) array down to depth t."""
        v = np.asarray(values, dtype=float)
        squeeze = v.ndim == 1
        if squeeze:
            v = v[:, None]
        for level in range(s, t, -1):
            v = _core.backward_step(v, self.parents[level - 1], self.probs[level - 1], self.size(level - 1))
        return v[:, 0] if squeeze else v

    def martingale_defect(self, process):
        """Max one-step defect |E[X_{t+1} | F_t] - X_t| of a list of per-depth arrays."""
        worst = 0.0
        for t in range(len(process) - 1):
            d = self.condexp(process[t + 1], t + 1, t) - np.asarray(process[t], dtype=float)
            if d.size:
                worst = max(worst, float(np.max(np.abs(d))))
        return worst

    def random_martingale(self, rng, scale=1.0, positive=False):
        """F-martingale obtained by backward induction of random terminal values."""
        T = self.depth
        term = rng.uniform(0.5, 1.5, self.size(T)) if positive else rng.normal(0.0, scale, self.size(T))
        return [self.condexp(term, T, t) for t in range(T + 1)]


# ---------------------------------------------------------------------------
# density families


class TableAlpha:
    """Tabulated conditional density ``tables[t][node, k]`` on a grid reference."""

    deterministic = False

    def __init__(self, tables, reference: ReferenceMeasure):
        if not reference.is_grid:
            raise ModelError("table densities need a grid reference")
        self.tables = [np.asarray(tab, dtype=float) for tab in tables]
        for t, tab in enumerate(self.tables):
            if tab.ndim != 2 or tab.shape[1] != reference.size:
                raise ModelError(f"density table at t={t} must have shape (nodes, {reference.size})")
            tab.setflags(write=False)
        self.reference = reference

    def __call__(self, t, pts, n_nodes):
        tab = self.tables[t]
        if tab.shape[0] != n_nodes:
            raise ModelError(f"density table at t={t} has {tab.shape[0]} rows, tree has {n_nodes} nodes")
        return tab[:, self.reference.lookup(pts)]


class DeterministicAlpha:
    """Density independent of time and scenario: ``fn(points) -> values``."""

    deterministic = True

    def __init__(self, fn, sampler=None, label="callable"):
        self.fn = fn
        self.sampler = sampler
        self.label = label

    def __call__(self, t, pts, n_nodes):
        v = np.asarray(self.fn(np.asarray(pts, dtype=float)), dtype=float)
        return np.broadcast_to(v, (n_nodes, len(v)))


class ExponentialAlpha(DeterministicAlpha):
    """Independent exponential default times, optionally as ordered statistics.

    For ``ordered=True`` the density is that of the increasing rearrangement,
    i.e. the sum over permutations restricted to the ordered chamber.
    """

    def __init__(self, rates, ordered=False):
        self.rates = np.asarray(rates, dtype=float)
        self.ordered = ordered
        super().__init__(self._density, sampler=self._sample,
                         label=f"exponential({', '.join(map(repr, self.rates.tolist()))})")

    def _density(self, pts):
        lam = self.rates
        if not self.ordered:
            inside = np.all(pts >= 0, axis=1)
            return np.where(inside, np.prod(lam * np.exp(-lam * pts), axis=1), 0.0)
        chamber = np.all(np.diff(pts, axis=1) >= 0, axis=1) & (pts[:, 0] >= 0)
        if np.all(lam == lam[0]):
            val = math.factorial(len(lam)) * np.prod(lam * np.exp(-lam * pts), axis=1)
        else:
            val = sum(np.prod(lam[list(p)] * np.exp(-lam[list(p)] * pts), axis=1)
                      for p in permutations(range(len(lam))))
        return np.where(chamber, val, 0.0)

    def _sample(self, rng, count):
        draws = rng.exponential(1.0 / self.rates, size=(count, len(self.rates)))
        return np.sort(draws, axis=1) if self.ordered else draws


# ---------------------------------------------------------------------------
# regimes (observed pins + free coordinates)


@dataclass(frozen=True)
class Regime:
    """Set of points sharing an observation history.

    Pinned coordinates take fixed values; free time coordinates lie in
    ``(lo, hi]`` (``lo = -inf`` means no lower cut); free mark coordinates are
    unrestricted. For ordered models the free time coordinates are in
    increasing order.
    """

    pins: tuple = ()
    free: tuple = ()
    free_marks: tuple = ()
    lo: float = -INF
    hi: float = INF
    ordered: bool = False
    label: str = ""

    @property
    def pin_dict(self):
        return dict(self.pins)

    def contains(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        mask = np.ones(len(pts), dtype=bool)
        for c, v in self.pins:
            mask &= pts[:, c] == v
        for c in self.free:
            mask &= (pts[:, c] > self.lo) & (pts[:, c] <= self.hi)
        if self.ordered and len(self.free) > 1:
            mask &= np.all(np.diff(pts[:, list(self.free)], axis=1) >= 0, axis=1)
        return mask


def region_rule(model: "DensityModel", regime: Regime, breaks=()):
    """Points and weights covering the regime: grid subset or quadrature nodes.

    ``breaks`` adds quadrature cell edges on the time axes (ignored on grids).
    """
    ref = model.reference
    if ref.is_grid:
        pts = ref.points
        mask = np.ones(len(pts), dtype=bool)
        for c, v in regime.pins:
            mask &= pts[:, c] == v
        for c in regime.free:
            mask &= pts[:, c] > regime.lo
            mask &= pts[:, c] <= regime.hi
        idx = np.flatnonzero(mask)
        return pts[idx], ref.weights[idx], idx
    dim = model.dim
    k = len(regime.free)
    if k and regime.ordered:
        tpts, tw = quadrature.ordered_rule(k, regime.lo, regime.hi, ref, breaks)
    else:
        rule = quadrature.line_rule(regime.lo, regime.hi, ref.order, ref.cell, ref.u_max, ref.tail_rate, breaks)
        tpts, tw = quadrature.tensor([rule] * k)
    mpts, mw = quadrature.tensor([quadrature.mark_rule(ref.mark_bound, ref.mark_cells, ref.order)]
                                 * len(regime.free_marks))
    m_t, m_m = len(tw), len(mw)
    pts = np.zeros((m_t * m_m, dim))
    for c, v in regime.pins:
        pts[:, c] = v
    for j, c in enumerate(regime.free):
        pts[:, c] = np.repeat(tpts[:, j], m_m)
    for j, c in enumerate(regime.free_marks):
        pts[:, c] = np.tile(mpts[:, j], m_t)
    w = np.repeat(tw, m_m) * np.tile(mw, m_t)
    return pts, w, None


# ---------------------------------------------------------------------------
# density model


@dataclass(frozen=True, eq=False)
class DensityModel:
    """F-conditional density family of the default variable w.r.t. the reference measure."""

    reference: ReferenceMeasure
    alpha: object
    n: int
    tree: ScenarioTree | None = None
    horizon: int | None = None
    ordered: bool = False
    marks: bool = False
    name: str = ""

    def __post_init__(self):
        if self.n < 1:
            raise ModelError("need at least one default")
        tree = self.tree
        if tree is None:
            tree = ScenarioTree.chain(self.horizon if self.horizon is not None else 1)
            object.__setattr__(self, "tree", tree)
        elif self.horizon is not None and self.horizon != tree.depth:
            raise ModelError("horizon does not match tree depth")
        object.__setattr__(self, "horizon", tree.depth)
        if self.reference.is_grid:
            pts = self.reference.points
            if pts.shape[1] != self.dim:
                raise ModelError(f"grid points have dimension {pts.shape[1]}, model needs {self.dim}")
            times = pts[:, : self.n]
            if self.ordered and self.n > 1 and np.any(np.diff(times, axis=1) < 0):
                raise ModelError("ordered model: grid points must satisfy u_1 <= ... <= u_n")
        if isinstance(self.alpha, TableAlpha) and len(self.alpha.tables) != self.horizon + 1:
            raise ModelError("density table must cover every time 0..horizon")

    @property
    def dim(self):
        return 2 * self.n if self.marks else self.n

    @property
    def is_grid(self):
        return self.reference.is_grid

    @property
    def deterministic(self):
        return getattr(self.alpha, "deterministic", False) and self.tree.is_chain

    @property
    def default_tol(self):
        return GRID_TOL if self.is_grid else QUAD_TOL

    def alpha_at(self, t, pts):
        """alpha_t(node, u) for every node at depth t and every row of pts -> (N_t, M)."""
        pts = np.asarray(pts, dtype=float)
        return np.asarray(self.alpha(t, pts, self.tree.size(t)), dtype=float)

    @cached_property
    def _grid_tables(self):
        if not self.is_grid:
            raise UnsupportedError("grid tables need a grid reference")
        return [np.ascontiguousarray(self.alpha_at(t, self.reference.points)) for t in range(self.horizon + 1)]

    def alpha_grid(self, t):
        return self._grid_tables[t]

    @cached_property
    def eta(self):
        """Prior law of the default variable on the grid: alpha_0 * w."""
        return self.alpha_grid(0)[0] * self.reference.weights

    def beta_grid(self, t):
        """Radon-Nikodym process alpha_t / alpha_0 (0 where alpha_0 = 0)."""
        a0 = self.alpha_grid(0)[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(a0 > 0, self.alpha_grid(t) / np.where(a0 > 0, a0, 1.0), 0.0)

    def region(self, regime, breaks=()):
        return region_rule(self, regime, tuple(sorted(float(x) for x in breaks)))

    def full_regime(self):
        free = tuple(range(self.n))
        marks = tuple(range(self.n, 2 * self.n)) if self.marks else ()
        return Regime(free=free, free_marks=marks, ordered=self.ordered, label="all")

    @cached_property
    def validation(self):
        return validate_density_model(self)

    def require_valid(self):
        report = self.validation
        if not report.passed:
            raise UnvalidatedModelError(f"model {self.name or '<unnamed>'} failed validation: {report.summary()}")
        return report


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    tol: float
    normalization: list  # per t: (N_t,) |integral alpha_t d nu - 1|
    martingale: list  # per t < T: max over nodes of one-step defect, per point
    beta_mean: np.ndarray  # |E[beta_T(x)] - 1| where alpha_0(x) > 0
    mass_zero_points: np.ndarray
    positivity_mass: float = 0.0
    absorption_violations: int = 0

    @property
    def max_normalization(self):
        return max(float(np.max(d)) for d in self.normalization)

    @property
    def max_martingale(self):
        return max([float(np.max(d)) for d in self.martingale if d.size] or [0.0])

    @property
    def max_beta_mean(self):
        return float(np.max(self.beta_mean)) if self.beta_mean.size else 0.0

    @property
    def passed(self):
        return (self.max_normalization <= self.tol and self.max_martingale <= self.tol
                and self.max_beta_mean <= self.tol and self.absorption_violations == 0
                and self.positivity_mass == 0.0)

    def summary(self):
        return (f"normalization={self.max_normalization:.3e} martingale={self.max_martingale:.3e} "
                f"beta_mean={self.max_beta_mean:.3e} absorption={self.absorption_violations} "
                f"tol={self.tol:.1e} passed={self.passed}")


def validate_density_model(model: DensityModel, tol=None) -> ValidationReport:
    """Check normalization, the F-martingale property of alpha and E[beta_T(x)] = 1."""
    tol = model.default_tol if tol is None else tol
    tree = model.tree
    T = model.horizon
    if model.is_grid:
        pts, w = model.reference.points, model.reference.weights
    else:
        pts, w, _ = region_rule(model, model.full_regime())
    tables = []
    for t in range(T + 1):
        a = model.alpha_at(t, pts)
        bad = np.argwhere(a < 0)
        if bad.size:
            node, k = bad[0]
            raise NegativeDensityError(
                f"negative density at t={t}, node={node}, u={tuple(map(float, pts[k]))}: {float(a[node, k])}")
        tables.append(a)
    normalization = [np.abs(a @ w - 1.0) for a in tables]
    martingale = [np.max(np.abs(tree.condexp(tables[t + 1], t + 1, t) - tables[t]), axis=0)
                  for t in range(T)]
    a0 = tables[0][0]
    positive = a0 > 0
    beta_T_mean = tree.condexp(tables[T], T, 0)[0]
    beta_mean = np.abs(beta_T_mean[positive] / a0[positive] - 1.0)
    absorption = 0
    positivity_mass = 0.0
    if model.is_grid:
        for t in range(T):
            zero = tables[t] == 0
            anc = tree.ancestors(t, t + 1)
            child_zero_parent = zero[anc]
            absorption += int(np.sum(child_zero_parent & (tables[t + 1] > 0)))
        # joint mass carried by {beta_t = 0}
        for t in range(T + 1):
            m = tree.path_prob(t)[:, None] * tables[t] * w
            positivity_mass += float(np.sum(m[tables[t] == 0]))
    return ValidationReport(tol, normalization, martingale, beta_mean, np.flatnonzero(~positive),
                            positivity_mass, absorption)


# ---------------------------------------------------------------------------
# joint measure


@dataclass(frozen=True, eq=False)
class JointMeasure:
    """Law of (node at depth t, default variable) on the grid."""

    t: int
    masses: np.ndarray  # (N_t, K)
    path_mass: np.ndarray
    eta: np.ndarray

    @property
    def total(self):
        return float(self.masses.sum())

    def marginal_paths(self):
        return self.masses.sum(axis=1)

    def marginal_grid(self):
        return self.masses.sum(axis=0)


def build_joint_measure(model: DensityModel, t: int) -> JointMeasure:
    """m(node, u) = P(node) * beta_t(node, u) * eta({u})."""
    if not model.is_grid:
        raise UnsupportedError("joint measure tables need a grid reference")
    if not 0 <= t <= model.horizon:
        raise ModelError(f"time {t} outside 0..{model.horizon}")
    model.require_valid()
    pp = model.tree.path_prob(t)
    masses = pp[:, None] * model.beta_grid(t) * model.eta[None, :]
    masses.setflags(write=False)
    return JointMeasure(t, masses, pp, model.eta)


# ---------------------------------------------------------------------------
# observation schemes

SCHEME_KINDS = (
    "initial",
    "progressive-single",
    "insider",
    "advanced",
    "delayed",
    "ordered-counting",
    "nonordered-indicators",
    "marked-counting",
)
SINGLE_KINDS = ("progressive-single", "insider", "advanced", "delayed")


def observed(u, t):
    """Default at u is known at time t (observation window (0, t], left-closed)."""
    return t > 0 and u <= t


def _lower(t):
    return t if t > 0 else -INF


@dataclass(frozen=True)
class ObservationScheme:
    """Generator of the observation filtration on E."""

    kind: str
    t0: float | None = None
    eps: float | None = None

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ModelError(f"unknown scheme {self.kind!r}; expected one of {', '.join(SCHEME_KINDS)}")
        if self.kind == "insider" and (self.t0 is None or self.t0 < 0):
            raise ModelError("insider scheme needs t0 >= 0")
        if self.kind in ("advanced", "delayed") and (self.eps is None or self.eps < 0):
            raise ModelError(f"{self.kind} scheme needs eps >= 0")

    def check_compatible(self, model: DensityModel):
        if self.kind in SINGLE_KINDS and model.n != 1:
            raise ModelError(f"{self.kind} scheme needs a single default (n=1), model has n={model.n}")
        if self.kind == "marked-counting" and not model.marks:
            raise ModelError("marked-counting scheme needs a marked model")
        if model.marks and self.kind not in ("marked-counting", "initial"):
            raise ModelError("marked models support the marked-counting and initial schemes")
        if self.kind == "ordered-counting" and not model.ordered and model.n > 1:
            raise ModelError("ordered-counting scheme needs an ordered model")
        if self.kind == "nonordered-indicators" and model.ordered and model.n > 1:
            raise ModelError("nonordered-indicators scheme needs a non-ordered model")

    def key(self, u, t, n):
        """Hashable label of the observation atom containing point u at time t."""
        kind = self.kind
        if kind == "initial":
            return tuple(float(x) for x in u)
        if kind == "progressive-single":
            x = float(u[0])
            return (x if observed(x, t) else None,)
        if kind == "insider":
            x = float(u[0])
            return (x if observed(x, t) else None, bool(x <= self.t0))
        if kind == "advanced":
            x = float(u[0])
            if t == 0:
                return ("?",)
            if x <= self.eps:
                return ("le",)
            return (x if x <= t + self.eps else None,)
        if kind == "delayed":
            x = float(u[0])
            return (x if observed(x, t - self.eps) else None,)
        if kind == "ordered-counting":
            return tuple(sorted(float(x) for x in u[:n] if observed(x, t)))
        if kind == "nonordered-indicators":
            return tuple(float(x) if observed(x, t) else None for x in u[:n])
        # marked-counting
        return tuple(sorted((float(u[k]), float(u[n + k])) for k in range(n) if observed(u[k], t)))

    def keys(self, pts, t, n):
        return [self.key(p, t, n) for p in np.asarray(pts, dtype=float)]

    def regime(self, key, t, n, ordered=False):
        """Regime (pins and free region) of the atom with the given key."""
        kind = self.kind
        lo = _lower(t)
        if kind == "initial":
            return Regime(pins=tuple(enumerate(key)), label="initial")
        if kind == "progressive-single":
            if key[0] is not None:
                return Regime(pins=((0, key[0]),), label="defaulted")
            return Regime(free=(0,), lo=lo, label="survival")
        if kind == "insider":
            if key[0] is not None:
                return Regime(pins=((0, key[0]),), label="defaulted")
            if key[1]:
                return Regime(free=(0,), lo=lo, hi=self.t0, label="before-t0")
            return Regime(free=(0,), lo=max(lo, self.t0), label="after-t0")
        if kind == "advanced":
            if key == ("?",):
                return Regime(free=(0,), label="prior")
            if key == ("le",):
                return Regime(free=(0,), hi=self.eps, label="within-eps")
            if key[0] is not None:
                return Regime(pins=((0, key[0]),), label="defaulted")
            return Regime(free=(0,), lo=t + self.eps, label="survival")
        if kind == "delayed":
            if key[0] is not None:
                return Regime(pins=((0, key[0]),), label="defaulted")
            return Regime(free=(0,), lo=_lower(t - self.eps), label="survival")
        if kind == "ordered-counting":
            i = len(key)
            return Regime(pins=tuple(enumerate(key)), free=tuple(range(i, n)), lo=lo, ordered=True,
                          label=f"ordered:{i}")
        if kind == "nonordered-indicators":
            pins = tuple((c, v) for c, v in enumerate(key) if v is not None)
            free = tuple(c for c, v in enumerate(key) if v is None)
            names = ",".join(str(c + 1) for c, _ in pins)
            return Regime(pins=pins, free=free, lo=lo, label="I={" + names + "}")
        i = len(key)
        pins = tuple((k, key[k][0]) for k in range(i)) + tuple((n + k, key[k][1]) for k in range(i))
        return Regime(pins=pins, free=tuple(range(i, n)), free_marks=tuple(range(n + i, 2 * n)),
                      lo=lo, ordered=True, label=f"marked:{i}")


@dataclass(frozen=True, eq=False)
class Partition:
    """Atoms of the observation sigma-algebra on the grid."""

    labels: np.ndarray  # (K,) atom index per grid point
    keys: list

    @property
    def n_atoms(self):
        return len(self.keys)

    def members(self, a):
        return np.flatnonzero(self.labels == a)

    def atoms(self):
        return [self.members(a) for a in range(self.n_atoms)]


def observation_partition(scheme: ObservationScheme, reference: ReferenceMeasure, t, n=None) -> Partition:
    """Partition of the grid into observation atoms at time t (first-appearance order)."""
    if not reference.is_grid:
        raise UnsupportedError("observation partitions need a finite grid reference")
    if n is None:
        n = reference.points.shape[1] // (2 if scheme.kind == "marked-counting" else 1)
    index, labels, keys = {}, [], []
    for key in scheme.keys(reference.points, t, n):
        if key not in index:
            index[key] = len(keys)
            keys.append(key)
        labels.append(index[key])
    lab = np.asarray(labels, dtype=np.intp)
    lab.setflags(write=False)
    return Partition(lab, keys)


def model_partition(model: DensityModel, scheme: ObservationScheme, t) -> Partition:
    scheme.check_compatible(model)
    return observation_partition(scheme, model.reference, t, model.n)


# ---------------------------------------------------------------------------
# payoffs


@dataclass(frozen=True, eq=False)
class PayoffSpec:
    """Claim Y_T(omega, u) paid at maturity T.

    ``evaluator(points)`` returns either (M,) values (scenario independent) or
    (N_T, M) values per node at depth T. ``breaks`` lists default times where
    the claim jumps; quadrature cells are split there.
    """

    maturity: int
    evaluator: Callable
    bounded: bool = True
    discount: float = 1.0
    label: str = ""
    breaks: tuple = ()

    def values(self, n_nodes, pts):
        v = np.asarray(self.evaluator(np.asarray(pts, dtype=float)), dtype=float)
        if v.ndim == 1:
            v = np.broadcast_to(v, (n_nodes, v.shape[0]))
        elif v.shape[0] != n_nodes:
            raise ModelError(f"payoff returned {v.shape[0]} rows, expected {n_nodes}")
        return self.discount * v

    @classmethod
    def survival(cls, threshold, maturity, coord="min", n_time=None, label=None):
        """Indicator that the selected default time(s) exceed ``threshold``."""

        def ev(pts):
            times = pts if n_time is None else pts[:, :n_time]
            if coord == "min":
                x = times.min(axis=1)
            elif coord == "max":
                x = times.max(axis=1)
            else:
                x = times[:, int(coord)]
            return (x > threshold).astype(float)

        return cls(maturity, ev, label=label or f"survive-{coord}-{threshold:g}", breaks=(float(threshold),))

    @classmethod
    def function(cls, fn, maturity, label="function", breaks=()):
        return cls(maturity, fn, label=label, breaks=tuple(breaks))

    @classmethod
    def table(cls, values, reference: ReferenceMeasure, maturity, label="table"):
        vals = np.asarray(values, dtype=float)
        if vals.ndim == 1:
            vals = vals[None, :]

        def ev(pts):
            try:
                idx = reference.lookup(pts)
            except KeyError as exc:
                raise ModelError(f"payoff table missing support point {exc.args[0]}") from None
            return vals[:, idx] if vals.shape[0] > 1 else vals[0, idx]

        return cls(maturity, ev, label=label)
