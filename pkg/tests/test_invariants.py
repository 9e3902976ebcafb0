import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from invariants import (
    check_antitone,
    check_bound,
    check_jobs_identical,
    check_martingale,
    check_routes,
    check_uniform,
    check_wilson_coverage,
    small_plan,
)

dims = st.integers(1, 3)


@settings(max_examples=12)
@given(d=dims, r=st.floats(0.3, 2.0), t=st.floats(0.2, 6.0))
def test_bound_exact_mode(d, r, t):
    ok, detail = check_bound(d, r, t)
    assert ok, detail


@settings(max_examples=8)
@given(d=dims, t=st.floats(0.2, 4.0), theta=st.floats(1.0, 1e4))
def test_bound_theta_mode(d, t, theta):
    ok, detail = check_bound(d, 1.0, t, theta=theta)
    assert ok, detail


@given(d=st.integers(1, 4), t=st.floats(0.01, 1e3), frac=st.floats(1e-4, 0.5))
def test_uniform_mode(d, t, frac):
    ok, detail = check_uniform(d, t, t0=frac * t)
    assert ok, detail


@settings(max_examples=10)
@given(d=dims, r=st.floats(0.3, 2.0), t=st.floats(0.3, 6.0))
def test_poisson_route_dominates(d, r, t):
    ok, detail = check_routes(d, r, t)
    assert ok, detail


points = lambda d: hnp.arrays(np.float64, st.tuples(st.integers(0, 30), st.just(d)), elements=st.floats(-10, 10))


@given(data=st.data(), d=st.integers(1, 4))
def test_radius_antitone(data, d):
    a = data.draw(points(d))
    b = data.draw(points(d))
    c = data.draw(hnp.arrays(np.float64, d, elements=st.floats(-5, 5)))
    ok, detail = check_antitone(a, b, c)
    assert ok, detail


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_mean_mass_martingale(t):
    ok, detail = check_martingale(t)
    assert ok, detail


@pytest.mark.parametrize("p", [0.05, 0.2, 0.5, 0.8])
def test_wilson_coverage(p):
    ok, detail = check_wilson_coverage(p)
    assert ok, detail


@pytest.mark.parametrize("d,mode", [(1, "poisson_start"), (2, "lebesgue_proxy"), (3, "poisson_start")])
def test_bit_identical_across_jobs(d, mode):
    from dataclasses import replace

    plan = replace(small_plan(d=d), mode=mode)
    ok, detail = check_jobs_identical(plan)
    assert ok, detail
