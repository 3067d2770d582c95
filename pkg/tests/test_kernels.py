import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multidefault import _core, _kernels_py

try:
    from multidefault import _kernels
except ImportError:  # pragma: no cover - extension not built
    _kernels = None

needs_ext = pytest.mark.skipif(_kernels is None, reason="compiled extension not built")


def test_backend_flag():
    assert _core.BACKEND in ("cython", "python")
    if _kernels is not None:
        assert _core.BACKEND == "cython" or _core._impl is _kernels_py


def test_backward_step_small():
    vals = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    out = _core.backward_step(vals, [0, 0, 1], [0.25, 0.75, 1.0], 2, impl=_kernels_py)
    np.testing.assert_array_equal(out, [[2.5, 3.5], [5.0, 6.0]])


def test_group_sum_small():
    vals = np.array([[1.0, 2.0, 4.0]])
    out = _core.group_sum(vals, [1, 0, 1], 3, impl=_kernels_py)
    np.testing.assert_array_equal(out, [[2.0, 5.0, 0.0]])


@needs_ext
@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), n_parent=st.integers(1, 20), n_child=st.integers(1, 80),
       m=st.integers(1, 30))
def test_backward_step_bitwise_parity(seed, n_parent, n_child, m):
    rng = np.random.default_rng(seed)
    vals = rng.normal(size=(n_child, m)) * 10.0 ** rng.integers(-8, 8, size=(n_child, 1))
    parent = rng.integers(0, n_parent, size=n_child)
    prob = rng.uniform(size=n_child)
    a = _core.backward_step(vals, parent, prob, n_parent, impl=_kernels)
    b = _core.backward_step(vals, parent, prob, n_parent, impl=_kernels_py)
    assert a.tobytes() == b.tobytes()


@needs_ext
@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), rows=st.integers(1, 10), cols=st.integers(1, 100),
       groups=st.integers(1, 15))
def test_group_sum_bitwise_parity(seed, rows, cols, groups):
    rng = np.random.default_rng(seed)
    vals = rng.normal(size=(rows, cols)) * 10.0 ** rng.integers(-8, 8, size=(1, cols))
    labels = rng.integers(0, groups, size=cols)
    a = _core.group_sum(vals, labels, groups, impl=_kernels)
    b = _core.group_sum(vals, labels, groups, impl=_kernels_py)
    assert a.tobytes() == b.tobytes()


def test_tree_condexp_uses_kernel_consistently():
    from multidefault.fixtures import load_fixture

    model, _ = load_fixture("fixtureC")
    tree = model.tree
    y = np.random.default_rng(1).normal(size=tree.size(2))
    first = tree.condexp(y, 2, 0)
    assert first.shape == (1,)
    np.testing.assert_allclose(first, tree.condexp(tree.condexp(y, 2, 1), 1, 0), atol=1e-15)
