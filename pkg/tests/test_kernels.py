import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskstrat import _kernels_py, kernels

try:
    from riskstrat import _kernels as compiled
except ImportError:  # extension not built
    compiled = None

needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled kernels not built")


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")
    if compiled is not None:
        assert kernels.BACKEND == "cython" or kernels.rank_auc is _kernels_py.rank_auc


@needs_compiled
@settings(max_examples=60, deadline=None)
@given(st.integers(2, 80).flatmap(lambda n: st.tuples(
    st.lists(st.sampled_from([0.1, 0.4, 0.5, 0.9]) | st.floats(0, 1), min_size=n, max_size=n),
    st.lists(st.integers(0, 1), min_size=n, max_size=n),
)).filter(lambda t: 0 < sum(t[1]) < len(t[1])))
def test_rank_auc_backends_identical(t):
    s, y = t
    assert compiled.rank_auc(s, y) == _kernels_py.rank_auc(s, y)


@needs_compiled
@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.floats(0.1, 5)), min_size=1, max_size=60))
def test_pava_backends_agree_and_monotone(pairs):
    y = np.array([p[0] for p in pairs], dtype=float)
    w = np.array([p[1] for p in pairs])
    a = compiled.pava(y, w)
    b = _kernels_py.pava(y, w)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)
    assert np.all(np.diff(a) >= -1e-15)
    # weighted mass is preserved
    assert abs(np.dot(a, w) - np.dot(y, w)) < 1e-9


@needs_compiled
@pytest.mark.parametrize("m", [1, 3, 5])
def test_coalition_and_shapley_backends_agree(m):
    rng = np.random.default_rng(m)
    t = rng.normal(size=(4, m))
    bg = rng.normal(size=(17, m))
    va = compiled.coalition_values_linear(t, bg, -0.3)
    vb = _kernels_py.coalition_values_linear(t, bg, -0.3)
    np.testing.assert_allclose(va, vb, rtol=0, atol=1e-14)
    np.testing.assert_allclose(compiled.shapley_from_values(va, m), _kernels_py.shapley_from_values(va, m),
                               rtol=0, atol=1e-14)


@pytest.mark.parametrize("impl", [_kernels_py, compiled], ids=["python", "compiled"])
def test_coalition_mean_exact_for_identical_rows(impl):
    if impl is None:
        pytest.skip("compiled kernels not built")
    t = np.array([[0.3, -0.2]])
    bg = np.tile([[0.1, 0.5]], (7, 1))
    v = impl.coalition_values_linear(t, bg, 0.05)
    single = impl.coalition_values_linear(t, bg[:1], 0.05)
    np.testing.assert_array_equal(v, single)


@pytest.mark.parametrize("impl", [_kernels_py, compiled], ids=["python", "compiled"])
def test_shapley_from_values_efficiency_and_weights(impl):
    if impl is None:
        pytest.skip("compiled kernels not built")
    rng = np.random.default_rng(0)
    for m in range(1, 7):
        v = rng.normal(size=(3, 1 << m))
        phi = impl.shapley_from_values(v, m)
        np.testing.assert_allclose(phi.sum(axis=1), v[:, -1] - v[:, 0], atol=1e-12)
    np.testing.assert_allclose(_kernels_py.shapley_weights(3), [1 / 3, 1 / 6, 1 / 3])
