"""Prediction process: the law of the default variable given its observation history.

``predict_generic`` conditions a grid prior on the observation atom of the
realized point. The closed forms work from the realized default times directly:
they pin the observed coordinates, restrict the free ones to ``(t, inf)`` and
renormalize the prior density there.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ModelError
from .model import (
    DensityModel,
    ObservationScheme,
    ReferenceMeasure,
    Regime,
    _lower,
    observation_partition,
    observed,
)


@dataclass(frozen=True, eq=False)
class PredictionMeasure:
    """Conditional law of the default variable on one observation regime.

    ``points``/``probs`` are the support (grid points or quadrature nodes) and
    the normalized masses on it. ``grid_probs`` is the full vector over the
    grid when the reference is finite.
    """

    regime: Regime
    Z: float
    points: np.ndarray
    probs: np.ndarray
    grid_probs: np.ndarray | None = None
    mass_zero: bool = False
    density_fn: object = None

    @property
    def pins(self):
        return self.regime.pin_dict

    @property
    def total_mass(self):
        return float(self.probs.sum())

    def expect(self, h):
        """Integral of h (callable on (M, d) points, or a grid vector) against the measure."""
        if callable(h):
            return float(self.probs @ np.asarray(h(self.points), dtype=float))
        if self.grid_probs is None:
            raise ModelError("vector test functions need a grid prediction measure")
        return float(self.grid_probs @ np.asarray(h, dtype=float))

    def density(self, pts):
        """Normalized prior density on the regime at arbitrary points (0 outside)."""
        if self.density_fn is None:
            raise ModelError("no density evaluator attached")
        return self.density_fn(np.atleast_2d(np.asarray(pts, dtype=float)))


def _measure(regime, pts, mass, idx=None, size=None, prior=None):
    Z = float(mass.sum())
    mass_zero = not Z > 0
    probs = np.zeros_like(mass) if mass_zero else mass / Z
    grid = None
    if idx is not None:
        grid = np.zeros(size)
        grid[idx] = probs
    def fn(q):
        return np.where(regime.contains(q), prior(q), 0.0) / Z if Z > 0 else np.zeros(len(q))
    return PredictionMeasure(regime, Z, pts, probs, grid, mass_zero, fn if prior is not None else None)


def predict_generic(prior, scheme: ObservationScheme, reference: ReferenceMeasure, t, realized_index,
                    n=None) -> PredictionMeasure:
    """Prior restricted to the observation atom of the realized grid point, renormalized."""
    prior = np.asarray(prior, dtype=float)
    if not reference.is_grid:
        raise ModelError("generic prediction needs a grid reference")
    if prior.shape != (reference.size,):
        raise ModelError(f"prior must have length {reference.size}")
    if np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-9:
        raise ModelError("prior must be a probability vector")
    if not 0 <= realized_index < reference.size:
        raise ModelError(f"realized index {realized_index} outside the grid")
    if n is None:
        n = reference.points.shape[1] // (2 if scheme.kind == "marked-counting" else 1)
    part = observation_partition(scheme, reference, t, n)
    a = part.labels[realized_index]
    idx = part.members(a)
    regime = scheme.regime(part.keys[a], t, n)
    return _measure(regime, reference.points[idx], prior[idx], idx, reference.size)


def _from_regime(model: DensityModel, regime: Regime):
    pts, w, idx = model.region(regime)
    mass = model.alpha_at(0, pts)[0] * w
    return _measure(regime, pts, mass, idx, model.reference.size, lambda q: model.alpha_at(0, q)[0])


def predict_single_default(model: DensityModel, t, tau, t0=None) -> PredictionMeasure:
    """One default: Dirac at tau once observed, else prior density on (t, inf).

    With an insider cut ``t0`` and t < t0 the survival regime is further split
    by the side of t0 on which tau falls.
    """
    if model.n != 1:
        raise ModelError("single-default prediction needs n=1")
    if tau < 0:
        raise ModelError(f"default time must be non-negative, got {tau}")
    if observed(tau, t):
        regime = Regime(pins=((0, float(tau)),), label="defaulted")
    elif t0 is not None and t < t0:
        if tau <= t0:
            regime = Regime(free=(0,), lo=_lower(t), hi=t0, label="before-t0")
        else:
            regime = Regime(free=(0,), lo=t0, label="after-t0")
    else:
        regime = Regime(free=(0,), lo=_lower(t), label="survival")
    return _from_regime(model, regime)


def ordered_regime(t, sigma, n):
    sigma = [float(s) for s in sigma]
    if len(sigma) != n:
        raise ModelError(f"expected {n} default times, got {len(sigma)}")
    if any(b < a for a, b in zip(sigma, sigma[1:])):
        raise ModelError("ordered default times must be non-decreasing")
    i = sum(observed(s, t) for s in sigma)
    return Regime(pins=tuple(enumerate(sigma[:i])), free=tuple(range(i, n)), lo=_lower(t), ordered=True,
                  label=f"ordered:{i}")


def nonordered_regime(t, tau, n):
    tau = [float(s) for s in tau]
    if len(tau) != n:
        raise ModelError(f"expected {n} default times, got {len(tau)}")
    pins = tuple((c, v) for c, v in enumerate(tau) if observed(v, t))
    free = tuple(c for c, v in enumerate(tau) if not observed(v, t))
    return Regime(pins=pins, free=free, lo=_lower(t), label="I={" + ",".join(str(c + 1) for c, _ in pins) + "}")


def marked_regime(t, pairs, n):
    pairs = [(float(v), float(m)) for v, m in pairs]
    if any(m == 0 for _, m in pairs):
        raise ModelError("marks must be non-zero")
    vs = [v for v, _ in pairs]
    if any(b < a for a, b in zip(vs, vs[1:])):
        raise ModelError("marked default times must be non-decreasing")
    if len(pairs) > n:
        raise ModelError(f"at most {n} marked defaults")
    seen = [p for p in pairs if observed(p[0], t)]
    i = len(seen)
    pins = tuple((k, seen[k][0]) for k in range(i)) + tuple((n + k, seen[k][1]) for k in range(i))
    return Regime(pins=pins, free=tuple(range(i, n)), free_marks=tuple(range(n + i, 2 * n)), lo=_lower(t),
                  ordered=True, label=f"marked:{i}")


def predict_ordered(model: DensityModel, t, sigma) -> PredictionMeasure:
    """Ordered defaults: pin the i = #{sigma_k <= t} first times, free tail on (t, inf)."""
    if model.n > 1 and not model.ordered:
        raise ModelError("ordered prediction needs an ordered model")
    return _from_regime(model, ordered_regime(t, sigma, model.n))


def predict_nonordered(model: DensityModel, t, tau) -> PredictionMeasure:
    """Non-ordered defaults: pin the coordinates already observed, the others live on (t, inf)."""
    if model.n > 1 and model.ordered:
        raise ModelError("non-ordered prediction needs a non-ordered model")
    return _from_regime(model, nonordered_regime(t, tau, model.n))


def predict_marked(model: DensityModel, t, pairs) -> PredictionMeasure:
    """Marked defaults: pin observed (time, mark) pairs, free marks unrestricted."""
    if not model.marks:
        raise ModelError("marked prediction needs a marked model")
    return _from_regime(model, marked_regime(t, pairs, model.n))


def realized_regime(model: DensityModel, scheme: ObservationScheme, t, realized):
    """Regime of the realized default variable under the scheme, without grid atoms."""
    kind = scheme.kind
    n = model.n
    r = [float(x) for x in realized]
    if kind in ("progressive-single", "insider", "advanced", "delayed"):
        return scheme.regime(scheme.key(r, t, n), t, n)
    if kind == "ordered-counting":
        return ordered_regime(t, r[:n], n)
    if kind == "nonordered-indicators":
        return nonordered_regime(t, r[:n], n)
    if kind == "marked-counting":
        return marked_regime(t, list(zip(r[:n], r[n:])), n)
    return Regime(pins=tuple(enumerate(r)), label="initial")


def predict(model: DensityModel, scheme: ObservationScheme, t, realized) -> PredictionMeasure:
    """Dispatch to the closed form matching the scheme."""
    scheme.check_compatible(model)
    kind = scheme.kind
    n = model.n
    if kind == "progressive-single":
        return predict_single_default(model, t, realized[0])
    if kind == "insider":
        return predict_single_default(model, t, realized[0], scheme.t0)
    if kind == "ordered-counting":
        return predict_ordered(model, t, realized[:n])
    if kind == "nonordered-indicators":
        return predict_nonordered(model, t, realized[:n])
    if kind == "marked-counting":
        return predict_marked(model, t, list(zip(realized[:n], realized[n:])))
    return _from_regime(model, realized_regime(model, scheme, t, realized))
