import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fpqn.prox import prox_oracle_1d, prox_tv_isotropic, residual_prox, tv_isotropic

fields = arrays(np.float64, st.tuples(st.just(2), st.integers(1, 6), st.integers(1, 6)),
                elements=st.floats(-100, 100))
thresholds = st.floats(0.0, 50.0)


def pair(x, y):
    return np.array([x, y], dtype=float).reshape(2, 1, 1)


class TestClosedForm:
    def test_3_4(self):
        assert np.allclose(prox_tv_isotropic(pair(3, 4), 1.0).ravel(), [2.4, 3.2], atol=1e-15)

    def test_below_threshold(self):
        assert np.array_equal(prox_tv_isotropic(pair(0.5, 0), 1.0).ravel(), [0.0, 0.0])

    def test_zero_vector(self):
        assert np.array_equal(prox_tv_isotropic(pair(0, 0), 2.0).ravel(), [0.0, 0.0])

    def test_t_zero_identity(self):
        v = np.random.default_rng(0).standard_normal((2, 5, 5))
        assert np.array_equal(prox_tv_isotropic(v, 0.0), v)

    def test_negative_t(self):
        with pytest.raises(ValueError):
            prox_tv_isotropic(pair(1, 1), -1.0)
        with pytest.raises(ValueError):
            residual_prox(pair(1, 1), float("nan"))

    def test_pixels_independent(self):
        v = np.zeros((2, 1, 2))
        v[:, 0, 0] = (3, 4)
        v[:, 0, 1] = (0.1, 0.0)
        p = prox_tv_isotropic(v, 1.0)
        assert np.allclose(p[:, 0, 0], (2.4, 3.2))
        assert np.all(p[:, 0, 1] == 0)


class TestResidual:
    def test_3_4(self):
        r = residual_prox(pair(3, 4), 1.0).ravel()
        assert np.allclose(r, [0.6, 0.8], atol=1e-15)
        assert np.hypot(*r) == pytest.approx(1.0, abs=1e-15)

    def test_t_zero(self):
        v = np.random.default_rng(1).standard_normal((2, 4, 4))
        assert np.all(residual_prox(v, 0.0) == 0)

    def test_identity_below(self):
        assert np.array_equal(residual_prox(pair(0.2, 0), 1.0).ravel(), [0.2, 0.0])

    @settings(max_examples=100, deadline=None)
    @given(fields, thresholds)
    def test_magnitude_bound(self, v, t):
        r = residual_prox(v, t)
        assert np.all(np.sqrt(r[0] ** 2 + r[1] ** 2) <= t * (1 + 1e-12) + 1e-300)

    @settings(max_examples=100, deadline=None)
    @given(fields, thresholds)
    def test_decomposition(self, v, t):
        s = prox_tv_isotropic(v, t) + residual_prox(v, t)
        assert np.all(np.abs(s - v) <= 4 * np.finfo(float).eps * np.abs(v))


class TestFirmNonexpansive:
    @pytest.mark.parametrize("op", [prox_tv_isotropic, residual_prox])
    def test_random_pairs(self, op):
        rng = np.random.default_rng(2)
        for _ in range(200):
            t = rng.uniform(0, 3)
            x, y = rng.standard_normal((2, 2, 8, 8)) * rng.uniform(0.1, 4)
            px, py = op(x, t), op(y, t)
            lhs = np.sum((px - py) ** 2)
            rhs = np.vdot(x - y, px - py)
            assert lhs <= rhs + 1e-10

    @settings(max_examples=100, deadline=None)
    @given(fields, fields, thresholds)
    def test_property(self, x, y, t):
        if x.shape != y.shape:
            return
        for op in (prox_tv_isotropic, residual_prox):
            d = op(x, t) - op(y, t)
            assert np.sum(d * d) <= np.vdot(x - y, d) + 1e-10 * (1 + np.sum((x - y) ** 2))


class TestSubdifferential:
    def test_random(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            t = rng.uniform(0, 3)
            v = rng.standard_normal((2, 6, 6)) * rng.uniform(0.1, 4)
            p = prox_tv_isotropic(v, t)
            d = v - p
            pn = np.sqrt(p[0] ** 2 + p[1] ** 2)
            nz = pn > 0
            assert np.all(np.abs(d[:, nz] - t * p[:, nz] / pn[nz]) <= 1e-10)
            assert np.all(np.sqrt(d[0] ** 2 + d[1] ** 2)[~nz] <= t + 1e-10)

    def test_prox_minimizes_per_pixel(self):
        # the prox value beats random perturbations of itself
        rng = np.random.default_rng(4)
        v = rng.standard_normal((2, 3, 3)) * 3
        t = 1.3
        p = prox_tv_isotropic(v, t)

        def obj(x):
            return t * np.sqrt(x[0] ** 2 + x[1] ** 2) + 0.5 * ((x[0] - v[0]) ** 2 + (x[1] - v[1]) ** 2)

        base = obj(p)
        for _ in range(200):
            assert np.all(obj(p + 1e-3 * rng.standard_normal(p.shape)) >= base - 1e-12)


class TestOracle:
    def test_3_4(self):
        assert np.allclose(prox_oracle_1d([3, 4], 1.0, 1e-4), [2.4, 3.2], atol=2e-4)

    def test_zero(self):
        assert np.array_equal(prox_oracle_1d([0, 0], 5.0, 1e-3), [0, 0])

    def test_t_zero(self):
        assert np.array_equal(prox_oracle_1d([1.5, -2], 0.0, 1e-3), [1.5, -2])

    def test_bad_step(self):
        with pytest.raises(ValueError):
            prox_oracle_1d([1, 1], 1.0, 0.0)

    def test_closed_form_agrees(self):
        rng = np.random.default_rng(5)
        step = 1e-4
        for _ in range(100):
            v = rng.uniform(-5, 5, 2)
            t = rng.uniform(0, 4)
            closed = prox_tv_isotropic(v.reshape(2, 1, 1), t).ravel()
            assert np.max(np.abs(closed - prox_oracle_1d(v, t, step))) <= 2 * step


def test_tv_isotropic():
    p = np.zeros((2, 1, 2))
    p[:, 0, 0] = (3, 4)
    p[:, 0, 1] = (0, -2)
    assert tv_isotropic(p) == pytest.approx(7.0)
