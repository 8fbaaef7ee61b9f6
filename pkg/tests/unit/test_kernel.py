"""
カーネル関数の単体テスト
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.asybo.core.error_handler import InvalidArgumentError
from src.asybo.surrogate.kernel import (
    KernelFamily,
    KernelSpec,
    kernel_eval,
    kernel_matrix,
    set_length_scale,
    with_shared_scale,
)

coordinates = st.lists(st.floats(-5.0, 5.0, allow_nan=False), min_size=3, max_size=3)


class TestKernelEval:
    """kernel_eval のテスト"""

    def test_squared_exponential_identity(self):
        """同じ点では 1"""
        spec = KernelSpec(family=KernelFamily.SQUARED_EXPONENTIAL, length_scale=1.0)
        assert kernel_eval(spec, [0.3, -0.2], [0.3, -0.2]) == 1.0

    def test_squared_exponential_unit_distance(self):
        """r = 1 で exp(-1)（1/2 係数なし）"""
        spec = KernelSpec(length_scale=1.0)
        assert kernel_eval(spec, [0.0], [1.0]) == pytest.approx(math.exp(-1.0), abs=1e-12)

    def test_piecewise_polynomial_compact_support(self):
        """r/l ≥ 1 で 0"""
        spec = KernelSpec(family=KernelFamily.PIECEWISE_POLY_D0, length_scale=1.0, dim=2)
        assert kernel_eval(spec, [0.0, 0.0], [1.5, 0.0]) == 0.0

    def test_piecewise_polynomial_exponent(self):
        """j = ⌊D/2⌋ + 1"""
        spec = KernelSpec(family=KernelFamily.PIECEWISE_POLY_D0, length_scale=1.0, dim=3)
        assert kernel_eval(spec, [0.0], [0.5]) == pytest.approx(0.5**2, abs=1e-15)

    @pytest.mark.parametrize("r", [0.0, 0.1, 0.7, 1.3, 4.0])
    def test_matern32_closed_form(self, r):
        """Matérn 3/2 の閉形式と一致"""
        spec = KernelSpec(family=KernelFamily.MATERN32, length_scale=1.0)
        expected = (1.0 + math.sqrt(3.0) * r) * math.exp(-math.sqrt(3.0) * r)
        assert kernel_eval(spec, [0.0], [r]) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("r", [0.0, 0.25, 1.0, 2.5])
    def test_matern52_closed_form(self, r):
        spec = KernelSpec(family=KernelFamily.MATERN52, length_scale=2.0)
        s = r / 2.0
        expected = (1.0 + math.sqrt(5.0) * s + 5.0 * s**2 / 3.0) * math.exp(-math.sqrt(5.0) * s)
        assert kernel_eval(spec, [0.0], [r]) == pytest.approx(expected, abs=1e-12)

    def test_other_families(self):
        """指数・γ 指数・有理二次の閉形式"""
        r = 0.8
        exponential = KernelSpec(family=KernelFamily.EXPONENTIAL, length_scale=1.0)
        gamma = KernelSpec(family=KernelFamily.GAMMA_EXPONENTIAL, length_scale=1.0, gamma=1.5)
        rq = KernelSpec(family=KernelFamily.RATIONAL_QUADRATIC, length_scale=1.0, alpha=2.0)

        assert kernel_eval(exponential, [0.0], [r]) == pytest.approx(math.exp(-r), abs=1e-12)
        assert kernel_eval(gamma, [0.0], [r]) == pytest.approx(math.exp(-(r**1.5)), abs=1e-12)
        assert kernel_eval(rq, [0.0], [r]) == pytest.approx((1.0 + r**2 / 4.0) ** -2.0, abs=1e-12)

    def test_anisotropic_scales(self):
        """軸ごとに長さスケールで割ってから距離を取る"""
        spec = KernelSpec(length_scale=(1.0, 2.0))
        assert kernel_eval(spec, [0.0, 0.0], [1.0, 2.0]) == pytest.approx(math.exp(-2.0), abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            kernel_eval(KernelSpec(), [0.0, 1.0], [0.0])

    def test_non_finite_coordinates(self):
        with pytest.raises(InvalidArgumentError):
            kernel_eval(KernelSpec(), [math.nan], [0.0])

    def test_anisotropic_scale_dimension_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            kernel_eval(KernelSpec(length_scale=(1.0, 2.0)), [0.0, 0.0, 0.0], [1.0, 1.0, 1.0])

    @settings(max_examples=200, deadline=None)
    @given(a=coordinates, b=coordinates, family=st.sampled_from(list(KernelFamily)))
    def test_symmetry(self, a, b, family):
        """k(a, b) = k(b, a)"""
        spec = KernelSpec(family=family, length_scale=0.7, dim=3)
        assert kernel_eval(spec, a, b) == kernel_eval(spec, b, a)


class TestKernelSpec:
    """KernelSpec と長さスケール操作のテスト"""

    def test_set_length_scale_replaces_field_only(self):
        spec = KernelSpec(family=KernelFamily.SQUARED_EXPONENTIAL, length_scale=1.0)
        updated = set_length_scale(spec, 2.0)

        assert updated.length_scale == (2.0,)
        assert updated.family is KernelFamily.SQUARED_EXPONENTIAL
        assert spec.length_scale == (1.0,)

    def test_set_length_scale_anisotropic(self):
        spec = KernelSpec(family=KernelFamily.MATERN52, length_scale=(1.0, 1.0))
        updated = set_length_scale(spec, [0.5, 3.0])
        assert updated.length_scale == (0.5, 3.0)
        assert not updated.is_isotropic

    @pytest.mark.parametrize("bad", [0.0, -1.0, [1.0, 0.0], math.inf])
    def test_set_length_scale_rejects_non_positive(self, bad):
        with pytest.raises(InvalidArgumentError):
            set_length_scale(KernelSpec(), bad)

    def test_gamma_out_of_range(self):
        with pytest.raises(ValueError):
            KernelSpec(family=KernelFamily.GAMMA_EXPONENTIAL, gamma=2.5)

    def test_with_shared_scale_keeps_anisotropy(self):
        spec = KernelSpec(length_scale=(0.1, 0.2, 0.3))
        assert with_shared_scale(spec, 0.5).length_scale == (0.5, 0.5, 0.5)
        assert with_shared_scale(KernelSpec(length_scale=0.1), 0.5, dim=3).length_scale == (0.5,)

    def test_gram_matrix_unit_diagonal(self):
        """全カーネルで k(x, x) = 1"""
        X = np.random.default_rng(0).uniform(size=(6, 2))
        for family in KernelFamily:
            K = kernel_matrix(KernelSpec(family=family, length_scale=0.4, dim=2), X)
            np.testing.assert_allclose(np.diag(K), 1.0)
            np.testing.assert_allclose(K, K.T)

    def test_piecewise_polynomial_dimension_defaults_to_points(self):
        """dim を省略すると点の次元 D から j を決める"""
        spec = KernelSpec(family=KernelFamily.PIECEWISE_POLY_D0, length_scale=1.0)
        assert kernel_eval(spec, [0.0, 0.0, 0.0], [0.5, 0.0, 0.0]) == pytest.approx(0.5**2, abs=1e-15)
        assert kernel_eval(spec, [0.0], [0.5]) == pytest.approx(0.5, abs=1e-15)

    def test_piecewise_polynomial_rejects_higher_dimension_points(self):
        spec = KernelSpec(family=KernelFamily.PIECEWISE_POLY_D0, length_scale=1.0, dim=1)
        with pytest.raises(InvalidArgumentError):
            kernel_eval(spec, [0.0, 0.0, 0.0], [0.3, 0.2, 0.1])


def kernel_specs():
    """全種類のカーネル（パラメータも値域内で振る）"""
    return st.builds(
        KernelSpec,
        family=st.sampled_from(list(KernelFamily)),
        length_scale=st.floats(0.05, 2.0),
        gamma=st.floats(0.1, 2.0),
        alpha=st.floats(0.1, 5.0),
    )


class TestKernelProperties:
    """正定値性・値域・距離に対する単調性"""

    @settings(max_examples=300, deadline=None)
    @given(
        spec=kernel_specs(),
        n=st.integers(2, 12),
        dim=st.integers(1, 3),
        seed=st.integers(0, 2**31 - 1),
    )
    def test_gram_matrix_is_positive_semidefinite(self, spec, n, dim, seed):
        X = np.random.default_rng(seed).uniform(size=(n, dim))
        K = kernel_matrix(spec, X)
        assert np.linalg.eigvalsh(K).min() >= -1e-8

    @settings(max_examples=300, deadline=None)
    @given(spec=kernel_specs(), a=coordinates, b=coordinates)
    def test_values_in_unit_interval(self, spec, a, b):
        value = kernel_eval(spec, a, b)
        assert 0.0 <= value <= 1.0 + 1e-12
        assert kernel_eval(spec, a, a) == 1.0

    @settings(max_examples=300, deadline=None)
    @given(
        spec=kernel_specs(),
        distances=st.lists(st.floats(0.0, 6.0), min_size=2, max_size=20),
        dim=st.integers(1, 3),
    )
    def test_decreasing_with_distance(self, spec, distances, dim):
        origin = np.zeros(dim)
        values = []
        for r in sorted(distances):
            point = origin.copy()
            point[0] = r
            values.append(kernel_eval(spec, origin, point))
        assert all(later <= earlier + 1e-12 for earlier, later in zip(values, values[1:]))
