import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from multidefault.errors import ModelError
from multidefault.fixtures import load_fixture
from multidefault.model import ObservationScheme, ReferenceMeasure, model_partition
from multidefault.prediction import (
    predict,
    predict_generic,
    predict_marked,
    predict_nonordered,
    predict_ordered,
    predict_single_default,
)

GRID3 = ReferenceMeasure.grid([0.5, 1.5, 2.5])
EXP_PRIOR = np.exp(-GRID3.points[:, 0]) / np.exp(-GRID3.points[:, 0]).sum()


def test_generic_renormalizes_surviving_atom():
    pm = predict_generic(EXP_PRIOR, ObservationScheme("progressive-single"), GRID3, 1, 2)
    np.testing.assert_allclose(pm.grid_probs, [0.0, 0.7310, 0.2690], atol=1e-4)
    assert pm.grid_probs[1] == pytest.approx(1.0 / (1.0 + math.exp(-1.0)), abs=1e-15)


def test_generic_initial_scheme_is_dirac():
    pm = predict_generic(EXP_PRIOR, ObservationScheme("initial"), GRID3, 2, 1)
    assert pm.grid_probs.tolist() == [0.0, 1.0, 0.0]


def test_generic_time_zero_returns_prior():
    for kind in ("progressive-single", "delayed"):
        pm = predict_generic(EXP_PRIOR, ObservationScheme(kind, eps=1.0), GRID3, 0, 0)
        np.testing.assert_array_equal(pm.grid_probs, EXP_PRIOR)


def test_generic_rejects_bad_prior():
    with pytest.raises(ModelError):
        predict_generic([0.5, 0.6, 0.1], ObservationScheme("progressive-single"), GRID3, 1, 0)
    with pytest.raises(ModelError):
        predict_generic(EXP_PRIOR, ObservationScheme("progressive-single"), GRID3, 1, 3)


# ---------------------------------------------------------------------------
# closed forms on the exponential fixtures


def test_single_default_is_memoryless():
    model, _ = load_fixture("fixtureA")
    pm = predict_single_default(model, 1, 3.0)
    assert pm.Z == pytest.approx(math.exp(-1.0), abs=1e-12)
    u = np.array([[1.2], [2.0], [5.0]])
    np.testing.assert_allclose(pm.density(u), np.exp(-(u[:, 0] - 1.0)), rtol=1e-12)
    assert pm.density([[0.8]])[0] == 0.0
    mass, _ = integrate.quad(lambda x: pm.density([[x]])[0], 1.0, 60.0)
    assert mass == pytest.approx(1.0, abs=1e-6)


def test_single_default_insider_cut():
    model, _ = load_fixture("fixtureA")
    pm = predict_single_default(model, 1, 1.5, t0=2.0)
    z = math.exp(-1.0) - math.exp(-2.0)
    assert pm.Z == pytest.approx(z, abs=1e-12)
    u = np.array([[1.1], [1.9], [2.0], [2.1]])
    np.testing.assert_allclose(pm.density(u), [math.exp(-1.1) / z, math.exp(-1.9) / z, math.exp(-2.0) / z, 0.0],
                               rtol=1e-12)


def test_single_default_observed_is_dirac():
    model, _ = load_fixture("fixtureA")
    pm = predict_single_default(model, 1, 0.4)
    assert pm.points.tolist() == [[0.4]] and pm.probs.tolist() == [1.0]
    assert pm.pins == {0: 0.4}


def test_ordered_one_observed():
    model, _ = load_fixture("fixtureD-ordered")
    pm = predict_ordered(model, 1, (0.5, 2.3))
    assert pm.pins == {0: 0.5}
    assert pm.Z == pytest.approx(2 * math.exp(-0.5) * math.exp(-1.0), rel=1e-12)
    u = np.array([[0.5, 1.5], [0.5, 4.0]])
    np.testing.assert_allclose(pm.density(u), np.exp(-(u[:, 1] - 1.0)), rtol=1e-12)
    # pins stay fixed until the next default
    assert predict_ordered(model, 2, (0.5, 2.3)).pins == {0: 0.5}


def test_ordered_no_defaults_and_all_defaults():
    model, _ = load_fixture("fixtureD-ordered")
    pm = predict_ordered(model, 1, (3.0, 4.0))
    assert pm.pins == {}
    # both order statistics beyond 1: mass 2 * e^{-2} / 2
    assert pm.Z == pytest.approx(math.exp(-2.0), rel=1e-10)
    full = predict_ordered(model, 3, (0.5, 2.3))
    assert full.points.tolist() == [[0.5, 2.3]] and full.probs.tolist() == [1.0]


def test_nonordered_subset_regime():
    model, _ = load_fixture("fixtureD")
    pm = predict_nonordered(model, 1, (0.3, 5.0))
    assert pm.regime.label == "I={1}"
    u = np.array([[0.3, 1.5], [0.3, 3.0]])
    np.testing.assert_allclose(pm.density(u), np.exp(-(u[:, 1] - 1.0)), rtol=1e-12)
    none = predict_nonordered(model, 1, (2.0, 5.0))
    assert none.Z == pytest.approx(math.exp(-2.0), rel=1e-10)


def test_marked_none_observed_factorizes():
    model, _ = load_fixture("fixture-marked-lebesgue")
    pm = predict_marked(model, 1, [(2.0, 0.7)])
    assert pm.regime.label == "marked:0"
    assert pm.Z == pytest.approx(math.exp(-1.0), abs=1e-9)
    v, l = np.array([1.3, 2.0, 4.0]), np.array([0.0, -1.2, 2.5])
    g = np.exp(-0.5 * l * l) / math.sqrt(2 * math.pi)
    np.testing.assert_allclose(pm.density(np.column_stack([v, l])), np.exp(-(v - 1.0)) * g, rtol=1e-8)
    assert abs(pm.total_mass - 1.0) < 1e-12


def test_marked_rejects_zero_mark():
    model, _ = load_fixture("fixture-marked-lebesgue")
    with pytest.raises(ModelError):
        predict_marked(model, 1, [(0.5, 0.0)])


def test_dispatcher_matches_closed_forms():
    model, scheme = load_fixture("fixtureD")
    a = predict(model, scheme, 1, (0.3, 5.0))
    b = predict_nonordered(model, 1, (0.3, 5.0))
    np.testing.assert_array_equal(a.probs, b.probs)


# ---------------------------------------------------------------------------
# closed forms against the generic grid path


def _closed(model, scheme, t, point):
    n = model.n
    if scheme.kind == "progressive-single":
        return predict_single_default(model, t, point[0])
    if scheme.kind == "insider":
        return predict_single_default(model, t, point[0], scheme.t0)
    if scheme.kind == "ordered-counting":
        return predict_ordered(model, t, point)
    if scheme.kind == "nonordered-indicators":
        return predict_nonordered(model, t, point)
    return predict_marked(model, t, list(zip(point[:n], point[n:])))


CLOSED_CASES = [("fixtureA-grid", None), ("fixtureA-grid", ObservationScheme("insider", t0=1.5)),
                ("fixtureB", None), ("fixtureC", None), ("fixtureC-nonordered", None), ("fixture-marked", None)]


@pytest.mark.parametrize("name,override", CLOSED_CASES)
def test_closed_forms_match_generic_on_every_atom(name, override):
    model, scheme = load_fixture(name)
    scheme = override or scheme
    for t in range(model.horizon + 1):
        part = model_partition(model, scheme, t)
        for a in range(part.n_atoms):
            k = part.members(a)[0]
            gen = predict_generic(model.eta, scheme, model.reference, t, k, n=model.n)
            closed = _closed(model, scheme, t, model.reference.points[k])
            np.testing.assert_allclose(closed.grid_probs, gen.grid_probs, atol=1e-10, rtol=0)


@settings(max_examples=40, deadline=None)
@given(tau=st.tuples(st.floats(0.05, 6.0), st.floats(0.05, 6.0)), t=st.integers(0, 3))
def test_lebesgue_prediction_normalizes(tau, t):
    model, _ = load_fixture("fixtureD")
    pm = predict_nonordered(model, t, tau)
    assert abs(pm.total_mass - 1.0) <= 1e-10
    assert pm.Z > 0


@settings(max_examples=40, deadline=None)
@given(tau=st.floats(0.05, 6.0), t=st.integers(1, 3))
def test_single_default_density_integrates_to_one(tau, t):
    model, _ = load_fixture("fixtureA")
    pm = predict_single_default(model, t, tau)
    if pm.pins:
        assert pm.probs.tolist() == [1.0]
    else:
        mass, _ = integrate.quad(lambda x: pm.density([[x]])[0], t, t + 60.0)
        assert mass == pytest.approx(1.0, abs=1e-6)
