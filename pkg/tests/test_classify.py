import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geoflow.classify import SvmModel, svm_predict, svm_train
from geoflow.errors import DegenerateTrainingError, DimensionError, InputError

PAIR_X = np.array([[-1.0, 0.0], [1.0, 0.0]])
PAIR_Y = np.array(["A", "B"])


def blobs(seed, n=50, sigma=0.5):
    rng = np.random.default_rng(seed)
    centres = np.array([[0, 0], [10, 0], [0, 10]], dtype=float)
    x = np.vstack([c + sigma * rng.standard_normal((n, 2)) for c in centres])
    return x, np.repeat([0, 1, 2], n)


class TestBinary:
    def test_symmetric_pair(self):
        m = svm_train(PAIR_X, PAIR_Y, c=1.0)
        w, b = m.weights[0], m.bias[0]
        # boundary w.x + b = 0 crosses the x axis at -b / w0
        assert abs(-b / w[0]) <= 1e-3
        labels, _ = svm_predict(m, PAIR_X)
        assert list(labels) == ["A", "B"]

    def test_midpoint_tie_goes_to_first_class(self):
        m = svm_train(PAIR_X, PAIR_Y)
        labels, margins = svm_predict(m, np.zeros((1, 2)))
        assert margins[0] == 0.0 and labels[0] == "A"

    def test_large_c_separable(self):
        rng = np.random.default_rng(0)
        x = np.vstack([rng.normal(-2, 0.5, (30, 3)), rng.normal(2, 0.5, (30, 3))])
        y = np.repeat([0, 1], 30)
        m = svm_train(x, y, c=1e3)
        assert np.array_equal(svm_predict(m, x)[0], y)
        assert np.array_equal(svm_predict(svm_train(PAIR_X, PAIR_Y, c=1e3), PAIR_X)[0], PAIR_Y)

    def test_matches_reference_solver(self):
        sklearn = pytest.importorskip("sklearn.svm")
        rng = np.random.default_rng(5)
        x = np.vstack([rng.normal(-1, 1, (60, 4)), rng.normal(1, 1, (60, 4))])
        y = np.repeat([0, 1], 60)
        m = svm_train(x, y, c=0.5)
        ref = sklearn.SVC(kernel="linear", C=0.5, tol=1e-10).fit(x, y)
        np.testing.assert_allclose(m.weights[0], ref.coef_[0], atol=1e-4)
        assert m.bias[0] == pytest.approx(ref.intercept_[0], abs=1e-4)

    def test_deterministic(self):
        x, y = blobs(1)
        a, b = svm_train(x, y), svm_train(x, y)
        assert np.array_equal(a.weights, b.weights) and np.array_equal(a.bias, b.bias)


class TestMulticlass:
    def test_blobs(self):
        x, y = blobs(0)
        m = svm_train(x, y)
        assert m.weights.shape == (3, 2) and m.classes == (0, 1, 2)
        assert np.mean(svm_predict(m, x)[0] == y) >= 0.99
        xt, yt = blobs(99)
        assert np.mean(svm_predict(m, xt)[0] == yt) >= 0.99

    def test_argmax_tie_lowest_class(self):
        m = SvmModel(weights=np.zeros((3, 2)), bias=np.zeros(3), c=1.0, classes=(4, 7, 9))
        labels, margins = svm_predict(m, np.ones((2, 2)))
        assert list(labels) == [4, 4] and margins.shape == (2, 3)


class TestErrors:
    def test_single_class(self):
        with pytest.raises(DegenerateTrainingError):
            svm_train(PAIR_X, np.array(["A", "A"]))

    def test_shapes(self):
        with pytest.raises(DimensionError):
            svm_train(PAIR_X, np.array([0, 1, 1]))
        m = svm_train(PAIR_X, PAIR_Y)
        with pytest.raises(DimensionError):
            svm_predict(m, np.zeros((2, 3)))

    def test_c(self):
        with pytest.raises(InputError):
            svm_train(PAIR_X, PAIR_Y, c=0.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.05, 20.0))
def test_scaling_property(seed, a):
    """Scaling features by a and c by 1/a^2 leaves predictions unchanged."""
    rng = np.random.default_rng(seed)
    x = np.vstack([rng.normal(-1, 1.2, (25, 3)), rng.normal(1, 1.2, (25, 3))])
    y = np.repeat([0, 1], 25)
    xt = rng.normal(0, 2, (40, 3))
    m1 = svm_train(x, y, c=1.0, tol=1e-10)
    m2 = svm_train(a * x, y, c=1.0 / a**2, tol=1e-10)
    s1 = svm_predict(m1, xt)[1]
    s2 = svm_predict(m2, a * xt)[1]
    np.testing.assert_allclose(s2, s1, atol=1e-5 * max(1.0, np.abs(s1).max()))
    clear = np.abs(s1) > 1e-4
    assert np.array_equal(svm_predict(m1, xt)[0][clear], svm_predict(m2, a * xt)[0][clear])
