import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import GRID_FIXTURES, payoffs_for, table_payoff
from multidefault.conditional import (
    condexp_G,
    condexp_G_nonordered,
    condexp_G_ordered,
    condexp_G_single,
    condexp_H,
    conditional_law_G,
    nonordered_subsets,
    sorted_model,
    symmetrize_density,
    tail_integral,
)
from multidefault.errors import ModelError, UnsupportedError
from multidefault.fixtures import load_fixture
from multidefault.model import PayoffSpec, build_joint_measure, model_partition, validate_density_model
from multidefault.oracle import AtomTable, brute_force_condexp

# ---------------------------------------------------------------------------
# tail integrals


def test_tail_integral_exponential():
    model, _ = load_fixture("fixtureA")
    for s in range(4):
        assert tail_integral(model, 1, {}, s, node=0) == pytest.approx(math.exp(-1.0), abs=1e-12)


def test_tail_integral_with_pin():
    model, _ = load_fixture("fixtureD")
    assert tail_integral(model, 1, {0: 0.5}, 1, node=0) == pytest.approx(math.exp(-1.5), abs=1e-12)


def test_tail_integral_matches_grid_sum():
    model, _ = load_fixture("fixtureC")
    pts, w = model.reference.points, model.reference.weights
    for t in (1, 2):
        for s in range(t, 3):
            pin = pts[0, 0]
            mask = (pts[:, 0] == pin) & (pts[:, 1] > t)
            expected = model.alpha_grid(s)[:, mask] @ w[mask]
            np.testing.assert_allclose(tail_integral(model, t, {0: pin}, s), expected, atol=1e-15)


def test_tail_integral_rejects_bad_pin():
    model, _ = load_fixture("fixtureA")
    with pytest.raises(ModelError):
        tail_integral(model, 1, {3: 0.5}, 1)


# ---------------------------------------------------------------------------
# total filtration


def test_condexp_H_is_plain_expectation_when_beta_is_one():
    model, _ = load_fixture("fixtureA-grid")
    pay = PayoffSpec.function(lambda p: p[:, 0] ** 2, 3)
    np.testing.assert_allclose(condexp_H(model, pay, 1).table, [model.reference.points[:, 0] ** 2])


def test_condexp_H_counterexample():
    model, _ = load_fixture("fixtureB")
    pay = PayoffSpec.function(lambda p: (p[:, 0] == 1.0).astype(float), 1)
    values, zero = condexp_H(model, pay, 1).evaluate(model.reference.points)
    # on the support chi(omega_0) = 0 and chi(omega_1) = 1
    assert values[0, 0] == 0.0 and values[1, 1] == 1.0
    assert zero.tolist() == [[False, True], [True, False]]


@pytest.mark.parametrize("name", GRID_FIXTURES)
def test_condexp_H_matches_oracle(name):
    model, _ = load_fixture(name)
    pay = table_payoff(model, 3)
    T = pay.maturity
    K = model.reference.size
    joint = build_joint_measure(model, T)
    terminal = pay.values(model.tree.size(T), model.reference.points)
    for t in range(T + 1):
        res = brute_force_condexp(joint, AtomTable.total(model.tree, t, T, K), terminal)
        vals, zero = condexp_H(model, pay, t).evaluate(model.reference.points)
        ref_zero = res.mass_zero.reshape(vals.shape)
        np.testing.assert_array_equal(zero, ref_zero)
        np.testing.assert_allclose(np.where(zero, 0, vals), res.values.reshape(vals.shape), atol=1e-12)


# ---------------------------------------------------------------------------
# observable filtration


def test_fixture_a_survival_value():
    model, scheme = load_fixture("fixtureA")
    pay = PayoffSpec.survival(2.0, 3, coord=0)
    res = condexp_G(model, scheme, pay, 1, realized=[5.0])
    assert res.values[0, 0] == pytest.approx(math.exp(-1.0), abs=1e-12)
    assert res.keys == ["survival"]
    with pytest.raises(UnsupportedError):
        condexp_G(model, scheme, pay, 1)


def test_counterexample_observable_values():
    model, scheme = load_fixture("fixtureB")
    pay = PayoffSpec.function(lambda p: p[:, 0], 1)
    res = condexp_G(model, scheme, pay, 1)
    assert res.at(0, (0.0,)) == 0.0 and res.at(1, (1.0,)) == 1.0
    law = conditional_law_G(model, scheme, 1)
    np.testing.assert_array_equal(law.weights, [[1.0, 0.0], [0.0, 1.0]])


def test_conditional_law_is_prior_when_beta_is_one():
    model, scheme = load_fixture("fixtureC-independent")
    for t in range(3):
        law = conditional_law_G(model, scheme, t)
        part = model_partition(model, scheme, t)
        mass = np.bincount(part.labels, weights=model.eta)
        expected = model.eta / mass[part.labels]
        for node in range(model.tree.size(t)):
            np.testing.assert_allclose(law.weights[node], expected, atol=1e-15)


@pytest.mark.parametrize("name", GRID_FIXTURES)
def test_conditional_law_matches_joint(name):
    model, scheme = load_fixture(name)
    for t in range(model.horizon + 1):
        law = conditional_law_G(model, scheme, t)
        m = build_joint_measure(model, t).masses
        part = model_partition(model, scheme, t)
        tot = np.stack([np.bincount(part.labels, weights=row, minlength=part.n_atoms) for row in m])
        expected = np.where(tot[:, part.labels] > 0, m / np.where(tot[:, part.labels] > 0, tot[:, part.labels], 1),
                            0.0)
        np.testing.assert_allclose(law.weights, expected, atol=1e-14)


def test_unknown_method_and_bad_time():
    model, scheme = load_fixture("fixtureC")
    pay = table_payoff(model, 0)
    with pytest.raises(ModelError):
        condexp_G(model, scheme, pay, 1, method="other")
    with pytest.raises(ModelError):
        condexp_G(model, scheme, pay, 3)


@pytest.mark.parametrize("name", GRID_FIXTURES + ["fixture-large"])
def test_direct_and_bayes_agree(name):
    model, scheme = load_fixture(name)
    for pay in payoffs_for(model, seed=11):
        for t in range(pay.maturity + 1):
            a = condexp_G(model, scheme, pay, t, method="direct")
            b = condexp_G(model, scheme, pay, t, method="bayes")
            np.testing.assert_array_equal(a.mass_zero, b.mass_zero)
            np.testing.assert_allclose(a.values, b.values, atol=1e-10, rtol=0)


@settings(max_examples=30, deadline=None)
@given(name=st.sampled_from(GRID_FIXTURES), seed=st.integers(0, 10_000), data=st.data())
def test_tower_property(name, seed, data):
    model, scheme = load_fixture(name)
    T = model.horizon
    s = data.draw(st.integers(0, T))
    t = data.draw(st.integers(0, s))
    pay = table_payoff(model, seed)
    inner = condexp_G(model, scheme, pay, s)
    outer_pay = PayoffSpec.table(inner.for_points(), model.reference, s)
    outer = condexp_G(model, scheme, outer_pay, t)
    direct = condexp_G(model, scheme, pay, t)
    np.testing.assert_allclose(outer.values, direct.values, atol=1e-10, rtol=0)


def test_environment_claim_projects_under_independence():
    model, scheme = load_fixture("fixtureC-independent")
    env = np.random.default_rng(2).normal(size=model.tree.size(2))
    pay = PayoffSpec(2, lambda p: np.repeat(env[:, None], len(p), axis=1))
    for t in range(3):
        res = condexp_G(model, scheme, pay, t)
        expected = model.tree.condexp(env, 2, t)
        np.testing.assert_allclose(res.values, np.repeat(expected[:, None], len(res.keys), axis=1), atol=1e-14)


# ---------------------------------------------------------------------------
# closed forms


def test_nonordered_independent_exponentials():
    model, _ = load_fixture("fixtureD")
    for t, S in ((1, 2.0), (1, 3.5), (2, 3.0)):
        pay = PayoffSpec.survival(S, 3, coord=1)
        v = condexp_G_nonordered(model, pay, t, (0.5, 7.0)).values[0]
        assert v == pytest.approx(math.exp(-(S - t)), abs=1e-12)


def test_ordered_second_default_memoryless():
    model, _ = load_fixture("fixtureD-ordered")
    for t, S in ((1, 2.0), (2, 3.0), (2, 2.5)):
        pay = PayoffSpec.survival(S, 3, coord=1)
        v = condexp_G_ordered(model, pay, t, (0.5, 7.0)).values[0]
        assert v == pytest.approx(math.exp(-(S - t)), abs=1e-12)


def test_ordered_fully_observed_regime():
    model, _ = load_fixture("fixtureC")
    pay = table_payoff(model, 5)
    pts = model.reference.points
    k = int(np.flatnonzero((pts[:, 1] <= 1) & (model.eta > 0))[0])
    res = condexp_G_ordered(model, pay, 1, pts[k])
    num = model.tree.condexp(pay.values(4, pts[[k]]) * model.alpha_grid(2)[:, [k]], 2, 1)[:, 0]
    np.testing.assert_allclose(res.values, num / model.alpha_grid(1)[:, k], rtol=1e-13)


def test_single_default_insider_before_cut():
    model, _ = load_fixture("fixtureA")
    pay = PayoffSpec.survival(1.5, 3, coord=0)
    # knowing tau <= 2 at t=1: P(tau > 1.5 | 1 < tau <= 2)
    v = condexp_G_single(model, pay, 1, 1.8, t0=2.0).values[0]
    expected = (math.exp(-1.5) - math.exp(-2.0)) / (math.exp(-1.0) - math.exp(-2.0))
    assert v == pytest.approx(expected, abs=1e-12)


def test_nonordered_subsets_enumeration():
    subsets = nonordered_subsets(3)
    assert len(subsets) == 8 and subsets[0] == () and subsets[-1] == (0, 1, 2)
    with pytest.raises(ModelError):
        nonordered_subsets(17)


# ---------------------------------------------------------------------------
# symmetrization


def test_symmetrize_exchangeable_exponential():
    sym = symmetrize_density(lambda p: np.exp(-p[:, 0] - p[:, 1]), 2)
    assert sym([[0.5, 1.0]])[0] == pytest.approx(2 * math.exp(-1.5), rel=1e-15)
    assert sym([[1.0, 0.5]])[0] == 0.0


def test_symmetrize_asymmetric_table():
    rng = np.random.default_rng(4)
    vals = [0.5, 1.0, 2.0]
    table = {p: rng.uniform() for p in itertools.product(vals, vals)}
    base = lambda pts: np.array([table[tuple(p)] for p in pts])  # noqa: E731
    sym = symmetrize_density(base, 2)
    for a, b in itertools.product(vals, vals):
        expected = table[(a, b)] + table[(b, a)] if a < b else 0.0
        assert sym([[a, b]])[0] == expected


def test_symmetrized_family_carries_sampler():
    model, _ = load_fixture("fixtureD")
    fam = symmetrize_density(model.alpha, 2)
    draws = fam.sampler(np.random.default_rng(0), 100)
    assert np.all(np.diff(draws, axis=1) >= 0)
    pts = np.array([[0.3, 0.9], [0.9, 0.3]])
    np.testing.assert_allclose(fam(0, pts, 1)[0], [2 * math.exp(-1.2), 0.0])


def test_sorted_model_is_valid_and_ordered():
    model, _ = load_fixture("fixtureC-nonordered")
    srt = sorted_model(model)
    assert srt.ordered and validate_density_model(srt).passed
    assert np.all(np.diff(srt.reference.points, axis=1) >= 0)
    np.testing.assert_allclose(srt.eta.sum(), 1.0, atol=1e-14)
