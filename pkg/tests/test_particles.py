import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from emptyball import _kernels
from emptyball.analytic import csbp_extinction, csbp_laplace, projected_hit_tail
from emptyball.moments import moment1
from emptyball.particles import (
    BallSpec,
    Box,
    ParticleSystem,
    SimConfig,
    SizingError,
    advance,
    ball_mass,
    empty_ball_radius,
    init_point_mass,
    init_poisson,
    init_prm,
    truncation_window,
)
from emptyball.rng import check_seed, stream
from emptyball.stats import wilson_interval


def config(d=1, N=100, half=5.0, horizon=1.0, seed=1, **kw):
    return SimConfig(d=d, N=N, window=Box.centered(d, half), horizon=horizon, seed=seed, **kw)


def point_masses(cfg, t, R, m=1.0, method="tree", x=None):
    x = np.zeros(cfg.d) if x is None else x
    out = np.empty(R)
    for i in range(R):
        ps = advance(init_point_mass(cfg, x, m), t, stream(cfg.seed, i), method=method)
        out[i] = ps.total_mass
    return out


class TestStreams:
    def test_same_key_same_draws(self):
        assert np.array_equal(stream(7, 3).random(5), stream(7, 3).random(5))

    def test_keys_separate(self):
        a, b, c = stream(7, 3).random(4), stream(7, 4).random(4), stream(8, 3).random(4)
        assert not np.array_equal(a, b) and not np.array_equal(a, c)
        assert not np.array_equal(stream(7, 3, 0).random(4), stream(7, 3, 1).random(4))

    @pytest.mark.parametrize("bad", [-1, 2**64, 1.5, True])
    def test_seed_range(self, bad):
        with pytest.raises(ValueError):
            check_seed(bad)

    def test_full_width_seed(self):
        assert stream(2**64 - 1, 0).random() >= 0


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            config(N=0)
        with pytest.raises(ValueError):
            config(horizon=0.0)
        with pytest.raises(ValueError):
            SimConfig(d=2, N=1, window=Box.centered(1, 1.0), horizon=1.0, seed=0)
        with pytest.raises(ValueError):
            config(method="euler")

    def test_digest_ignores_stream(self):
        assert config(stream_id=0).digest() == config(stream_id=9).digest()
        assert config(seed=1).digest() != config(seed=2).digest()

    def test_box(self):
        b = Box((0.0, -1.0), (2.0, 1.0))
        assert b.d == 2 and b.volume == 4.0
        with pytest.raises(ValueError):
            Box((1.0,), (0.0,))
        with pytest.raises(ValueError):
            BallSpec((0.0,), -1.0)


class TestInit:
    def test_poisson_count_moments(self):
        cfg = config(d=1, N=100, half=5.0)
        n = np.array([init_poisson(cfg, stream(1, i)).count for i in range(3000)])
        se = math.sqrt(1000 / n.size)
        assert abs(n.mean() - 1000) < 4 * se
        assert n.var(ddof=1) == pytest.approx(1000, rel=0.1)

    def test_poisson_planar_chi_square(self):
        cfg = config(d=2, N=50, half=2.0)
        n = np.array([init_poisson(cfg, stream(2, i)).count for i in range(10_000)])
        assert abs(n.mean() - 800) < 3 * math.sqrt(800 / n.size)
        # chi-square goodness of fit against Poisson(800) on pooled bins
        edges = np.arange(700, 905, 10)
        obs = np.histogram(n, bins=np.concatenate([[-np.inf], edges, [np.inf]]))[0]
        cdf = stats.poisson(800).cdf
        probs = np.diff(np.concatenate([[0.0], cdf(edges - 1), [1.0]]))
        chi2, p = stats.chisquare(obs, probs * n.size)
        assert p > 1e-3

    def test_positions_in_window(self):
        cfg = SimConfig(d=2, N=10, window=Box((0.0, 1.0), (2.0, 3.0)), horizon=1.0, seed=0)
        ps = init_poisson(cfg, stream(0, 0))
        assert np.all(ps.positions >= [0.0, 1.0]) and np.all(ps.positions <= [2.0, 3.0])
        assert ps.unit_mass == pytest.approx(0.1)

    def test_zero_volume_window(self):
        cfg = SimConfig(d=1, N=100, window=Box((1.0,), (1.0,)), horizon=1.0, seed=0)
        assert init_poisson(cfg, stream(0, 0)).count == 0
        assert init_prm(cfg, stream(0, 0)).count == 0

    def test_sizing_cap(self):
        cfg = config(d=3, N=1000, half=50.0)
        with pytest.raises(SizingError):
            init_poisson(cfg, stream(0, 0))

    def test_prm_atoms_carry_n_particles(self):
        cfg = config(d=1, N=7, half=10.0)
        ps = init_prm(cfg, stream(0, 0))
        _, counts = np.unique(ps.positions[:, 0], return_counts=True)
        assert np.all(counts == 7)

    def test_point_mass(self):
        cfg = config(N=1000)
        assert init_point_mass(cfg, [0.0], 1.0).count == 1000
        assert init_point_mass(cfg, [0.0], 0.5).count == 500
        with pytest.raises(ValueError):
            init_point_mass(cfg, [0.0], 0.0)
        with pytest.raises(ValueError):
            init_point_mass(cfg, [0.0, 1.0], 1.0)


class TestAdvance:
    def test_empty_stays_empty(self):
        ps = ParticleSystem(0.0, np.empty((0, 2)), 0.1)
        out = advance(ps, 3.0, stream(0, 0))
        assert out.count == 0 and out.time == 3.0

    def test_backwards_rejected(self):
        ps = ParticleSystem(1.0, np.zeros((1, 1)), 1.0)
        with pytest.raises(ValueError):
            advance(ps, 0.5, stream(0, 0))

    @pytest.mark.parametrize("method", ["tree", "events"])
    def test_reproducible(self, method):
        cfg = config(d=2, N=30)
        runs = [advance(init_point_mass(cfg, [0.5, 0.0], 1.0), 1.0, stream(4, 2), method=method) for _ in range(2)]
        assert np.array_equal(runs[0].positions, runs[1].positions)

    def test_extinction_law(self):
        cfg = config(N=1000)
        masses = point_masses(cfg, 1.0, 4000)
        k = int(np.sum(masses == 0))
        lo, hi = wilson_interval(k, masses.size, 0.9973)
        assert lo <= csbp_extinction(1.0, 1.0) <= hi

    @pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
    def test_laplace_functional(self, theta):
        cfg = config(N=1000, seed=11)
        masses = point_masses(cfg, 1.0, 4000)
        vals = np.exp(-theta * masses)
        se = vals.std(ddof=1) / math.sqrt(vals.size)
        assert abs(vals.mean() - csbp_laplace(theta, 1.0, 1.0)) <= 3 * se

    def test_spatial_first_moment(self):
        cfg = config(d=2, N=500, seed=12)
        ball = BallSpec((0.0, 0.0), 1.0)
        x = np.array([0.8, 0.0])
        vals = np.array(
            [ball_mass(advance(init_point_mass(cfg, x, 1.0), 0.5, stream(12, i)), ball) for i in range(3000)]
        )
        se = vals.std(ddof=1) / math.sqrt(vals.size)
        assert abs(vals.mean() - moment1(0.5, 1.0, x)) <= 3 * se

    def test_tree_matches_events(self):
        # same law from the genealogy sampler and the event-driven one
        cfg = config(d=1, N=20, seed=13)
        R = 3000
        tree = [advance(init_point_mass(cfg, [0.0], 1.0), 1.0, stream(13, i), "tree") for i in range(R)]
        evs = [advance(init_point_mass(cfg, [0.0], 1.0), 1.0, stream(14, i), "events") for i in range(R)]
        m_tree = np.array([p.total_mass for p in tree])
        m_evs = np.array([p.total_mass for p in evs])
        assert stats.ks_2samp(m_tree, m_evs).pvalue > 1e-3
        x_tree = np.concatenate([p.positions[:, 0] for p in tree])
        x_evs = np.concatenate([p.positions[:, 0] for p in evs])
        # particles sit on correlated families, so compare second moments loosely
        assert np.mean(x_tree**2) == pytest.approx(1.0, rel=0.15)
        assert np.mean(x_evs**2) == pytest.approx(1.0, rel=0.15)

    def test_events_counted(self):
        cfg = config(d=1, N=10)
        ps = advance(init_point_mass(cfg, [0.0], 1.0), 1.0, stream(0, 1), method="events")
        assert ps.events > 0 and ps.peak >= ps.count

    @pytest.mark.parametrize("method", ["tree", "events"])
    def test_overflow_flagged(self, method):
        cfg = config(d=1, N=200)
        ps = advance(init_point_mass(cfg, [0.0], 5.0), 2.0, stream(0, 3), method=method, cap=50)
        assert ps.overflow and ps.count == 0

    def test_counts_kernel_mean(self):
        counts = _kernels.tree_counts(stream(0, 0), 200_000, 0.5, 10.0)
        assert counts.mean() == pytest.approx(1.0, abs=4 * math.sqrt(2 * 10 * 0.5 / 200_000))
        assert np.mean(counts == 0) == pytest.approx(5 / 6, abs=0.005)


class TestObservables:
    def test_empty_radius(self):
        s = empty_ball_radius(ParticleSystem(1.0, np.empty((0, 2)), 1.0))
        assert math.isinf(s.radius) and s.censored

    def test_pythagoras(self):
        s = empty_ball_radius(ParticleSystem(0.0, np.array([[3.0, 4.0]]), 1.0))
        assert s.radius == 5.0 and not s.censored

    def test_center_offset(self):
        s = empty_ball_radius(ParticleSystem(0.0, np.array([[3.0, 4.0]]), 1.0), center=[3.0, 0.0])
        assert s.radius == 4.0

    @given(n=st.integers(1, 300), d=st.integers(1, 4), seed=st.integers(0, 2**32))
    def test_matches_brute_force(self, n, d, seed):
        pos = np.random.default_rng(seed).normal(size=(n, d)) * 3
        ps = ParticleSystem(0.0, pos, 0.5)
        c = np.full(d, 0.25)
        assert empty_ball_radius(ps, c).radius == pytest.approx(np.min(np.linalg.norm(pos - c, axis=1)), rel=1e-14)

    def test_ball_mass_degenerate(self):
        empty = ParticleSystem(0.0, np.empty((0, 1)), 0.1)
        assert ball_mass(empty, BallSpec((0.0,), 1.0)) == 0.0
        full = ParticleSystem(0.0, np.zeros((3, 1)), 0.1)
        assert ball_mass(full, BallSpec((0.0,), 0.0)) == 0.0
        assert ball_mass(full, BallSpec((0.0,), 1.0)) == pytest.approx(0.3)

    @given(n=st.integers(0, 200), r=st.floats(0.0, 5.0), seed=st.integers(0, 2**32))
    def test_mass_radius_duality(self, n, r, seed):
        pos = np.random.default_rng(seed).normal(size=(n, 2)) * 2
        ps = ParticleSystem(0.0, pos, 0.01)
        assert (ball_mass(ps, BallSpec((0.0, 0.0), r)) > 0) == (empty_ball_radius(ps).radius < r)

    def test_superpose_checks(self):
        a = ParticleSystem(0.0, np.zeros((1, 1)), 0.1)
        with pytest.raises(ValueError):
            a.superpose(ParticleSystem(0.0, np.zeros((1, 1)), 0.2))
        assert a.superpose(a).count == 2


class TestTruncation:
    def test_long_time_window(self):
        w = truncation_window(1, 20.0, 20.0, 1e-6)
        gap = w.half_width - 20.0
        assert gap > 0
        assert w.certified_bound <= 1e-6
        # the far-field hit bound at the gap alone is already small
        assert projected_hit_tail(20.0, gap) < 1e-4

    def test_monotone_in_epsilon(self):
        widths = [truncation_window(2, 1.0, 4.0, eps).half_width for eps in (1e-1, 1e-3, 1e-6)]
        assert widths[0] < widths[1] < widths[2]

    @pytest.mark.parametrize("d,r", [(1, 0.5), (2, 2.0), (3, 1.0)])
    def test_contains_target_ball(self, d, r):
        w = truncation_window(d, r, 4.0, 1e-2)
        assert w.half_width > r and w.box.d == d

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.1])
    def test_epsilon_range(self, bad):
        with pytest.raises(ValueError):
            truncation_window(1, 1.0, 1.0, bad)
