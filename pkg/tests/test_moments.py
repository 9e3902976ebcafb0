import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import ndtr

from emptyball.analytic import ball_volume, heat_kernel
from emptyball.moments import _cross_term, moment1, moment2, particle_moment2, radial_density


def interval_prob(y, tau, r):
    s = math.sqrt(tau)
    return ndtr((r - y) / s) - ndtr((-r - y) / s)


def moment2_d1_oracle(t, r, x):
    """Direct nested quadrature of the second-moment formula in one dimension."""

    def inner(s):
        if s == 0:
            return interval_prob(x, t, r) ** 2
        f = lambda y: heat_kernel(s, y - x, d=1) * interval_prob(y, t - s, r) ** 2
        sd = math.sqrt(s)
        lo, hi = x - 12 * sd, x + 12 * sd
        # the integrand sharpens into an indicator of (-r, r) as s -> t
        pts = [p for p in (-r, r, x) if lo < p < hi]
        return integrate.quad(f, lo, hi, points=pts, epsabs=1e-14, epsrel=1e-12, limit=500)[0]

    cross = integrate.quad(inner, 0, t, epsabs=1e-13, epsrel=1e-11, limit=500)[0]
    return interval_prob(x, t, r) ** 2 + 2 * cross


class TestRadialDensity:
    @pytest.mark.parametrize("d,a,t", [(1, 0.0, 1.0), (2, 1.5, 0.7), (3, 0.0, 2.0), (3, 2.0, 0.5), (5, 1.0, 1.0)])
    def test_normalised(self, d, a, t):
        val = integrate.quad(lambda r: radial_density(np.array([r]), a, t, d)[0], 0, a + 15 * math.sqrt(t), points=[a] if a else None, limit=200)[0]
        assert val == pytest.approx(1.0, abs=1e-9)

    def test_matches_heat_kernel_at_origin(self):
        rho = np.array([0.3, 1.0, 2.2, 3.1])
        expected = 4 * math.pi * rho**2 * heat_kernel(1.3, rho, d=3)
        assert np.allclose(radial_density(rho, 0.0, 1.3, 3), expected)


class TestMoment1:
    def test_standard_interval(self):
        assert moment1(1.0, 1.0, [0.0]) == pytest.approx(0.682689, abs=1e-6)

    def test_whole_space(self):
        assert moment1(1.0, math.inf, [0.3, 0.1]) == 1.0

    def test_zero_radius(self):
        assert moment1(1.0, 0.0, [0.0, 0.0, 0.0]) == 0.0

    def test_center_is_translation(self):
        assert moment1(0.8, 1.0, [1.0, 2.0], center=[0.5, 1.0]) == pytest.approx(moment1(0.8, 1.0, [0.5, 1.0]))

    @given(x=st.floats(-3, 3), t=st.floats(0.05, 5), r=st.floats(0.05, 3))
    def test_one_dimensional_closed_form(self, x, t, r):
        assert moment1(t, r, [x]) == pytest.approx(interval_prob(x, t, r), abs=1e-9)

    @given(d=st.integers(1, 5), a=st.floats(0, 3), r=st.floats(0.2, 2), k=st.floats(1, 4))
    def test_lower_bound(self, d, a, r, k):
        t = k * r * r
        x = np.zeros(d)
        x[0] = a
        bound = math.exp(-1.5) * 3 ** (-d / 2) * ball_volume(d, 1.0) * r**d * heat_kernel(t / 3, x)
        assert moment1(t, r, x) >= bound

    def test_monte_carlo(self):
        rng = np.random.default_rng(3)
        x = np.array([0.4, -0.2, 0.9])
        w = x + rng.normal(scale=math.sqrt(0.6), size=(400_000, 3))
        p = np.mean(np.linalg.norm(w, axis=1) < 1.0)
        assert abs(p - moment1(0.6, 1.0, x)) < 4 * math.sqrt(p * (1 - p) / 400_000)

    def test_domain(self):
        with pytest.raises(ValueError):
            moment1(0.0, 1.0, [0.0])
        with pytest.raises(ValueError):
            moment1(1.0, -1.0, [0.0])


class TestMoment2:
    @pytest.mark.parametrize("x,t,r", [(0.0, 1.0, 1.0), (1.5, 2.0, 0.5), (0.3, 0.4, 2.0)])
    def test_one_dimensional_oracle(self, x, t, r):
        assert moment2(t, r, [x]) == pytest.approx(moment2_d1_oracle(t, r, x), rel=1e-9)

    @settings(max_examples=8)
    @given(d=st.integers(1, 3), a=st.floats(0, 2), t=st.floats(0.2, 2), r=st.floats(0.3, 1.5))
    def test_at_least_mean_square(self, d, a, t, r):
        x = np.zeros(d)
        x[0] = a
        assert moment2(t, r, x) >= moment1(t, r, x) ** 2

    @pytest.mark.parametrize("a,k", [(0.0, 1.0), (1.0, 2.0), (3.0, 4.0)])
    def test_cross_term_bound(self, a, k):
        r = 0.8
        t = k * r * r
        assert _cross_term(a, t, r, 3) <= 3 * r * r * moment1(t, r, [a, 0.0, 0.0])

    def test_reference_value(self):
        # frozen oracle value at the acceptance configuration
        assert moment1(1.0, 1.0, [0.0, 0.0, 0.0]) == pytest.approx(0.198748, abs=1e-6)
        assert moment2(1.0, 1.0, [0.0, 0.0, 0.0]) == pytest.approx(0.170615, abs=2e-6)

    def test_particle_correction(self):
        m1 = moment1(1.0, 1.0, [0.0, 0.0, 0.0])
        assert particle_moment2(1.0, 1.0, 1000, [0.0, 0.0, 0.0]) - moment2(1.0, 1.0, [0.0, 0.0, 0.0]) == pytest.approx(
            (m1 - m1 * m1) / 1000
        )

    def test_zero_radius(self):
        assert moment2(1.0, 0.0, [0.0]) == 0.0
