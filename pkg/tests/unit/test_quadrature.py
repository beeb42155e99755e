"""
Unit tests for angular and spatial quadrature rules.
"""
import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from smtrt.quadrature import AngularQuadrature, alpha, gauss3, gauss_legendre_sn, lobatto2


class TestGaussLegendreSn:
    """Test the slab Sn sets."""

    @pytest.mark.parametrize("n", [2, 4, 6, 8, 16])
    def test_weights_sum_to_two(self, n):
        """Test sum(w) = 2 and the directions sorted ascending."""
        q = gauss_legendre_sn(n)
        assert q.n_directions == n
        assert q.w.sum() == pytest.approx(2.0, abs=1e-14)
        assert np.all(np.diff(q.mu) > 0.0)

    @pytest.mark.parametrize("n", [2, 6, 16])
    def test_exact_symmetry(self, n):
        """Test that odd moments vanish exactly and mu^2 integrates to 2/3."""
        q = gauss_legendre_sn(n)
        np.testing.assert_array_equal(q.mu, -q.mu[::-1])
        np.testing.assert_array_equal(q.w, q.w[::-1])
        assert abs(q.moment(1)) < 1e-15
        assert q.moment(2) == pytest.approx(2.0 / 3.0, abs=1e-14)

    def test_s2_alpha(self, s2):
        """Test alpha(S2) = 1/sqrt(3)."""
        assert alpha(s2) == pytest.approx(1.0 / np.sqrt(3.0), abs=1e-15)
        assert s2.alpha == alpha(s2)

    def test_alpha_approaches_half(self):
        """Test that alpha tends to the half-range value 1/2 as n grows."""
        assert abs(alpha(gauss_legendre_sn(64)) - 0.5) < abs(alpha(gauss_legendre_sn(4)) - 0.5)
        assert alpha(gauss_legendre_sn(64)) == pytest.approx(0.5, abs=1e-3)

    @pytest.mark.parametrize("n", [0, 3, -2, 2.0])
    def test_invalid_order_rejected(self, n):
        """Test that odd, non-positive or non-integer orders raise ValueError."""
        with pytest.raises(ValueError):
            gauss_legendre_sn(n)

    def test_manual_set_is_sorted(self):
        """Test that AngularQuadrature sorts user-supplied directions."""
        q = AngularQuadrature(np.array([0.5, -0.5]), np.array([1.0, 1.0]))
        np.testing.assert_array_equal(q.mu, [-0.5, 0.5])


class TestSpatialRules:
    """Test reference-element rules."""

    def test_lobatto_is_trapezoid(self):
        """Test that the lumping rule integrates linears exactly."""
        rule = lobatto2()
        assert rule.integrate(lambda x: 3.0 * x + 1.0, 0.0, 2.0) == pytest.approx(8.0)

    def test_gauss3_exact_to_degree_five(self):
        """Test exactness of the 3-point rule on x^5."""
        assert gauss3().integrate(lambda x: x**5, 0.0, 2.0) == pytest.approx(64.0 / 6.0, rel=1e-14)
