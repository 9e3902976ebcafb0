"""Monte Carlo plans, estimate tables and comparisons against predictions."""
from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed

from . import _kernels
from .analytic import check_dimension, scaling_exponent
from .moments import moment1, moment2, particle_moment2
from .particles import (
    DEFAULT_POPULATION_CAP,
    BallSpec,
    Box,
    ParticleSystem,
    SimConfig,
    advance,
    ball_mass,
    init_point_mass,
    truncation_window,
)
from .rng import check_seed, stream
from .stats import binomial_se, ks_test_exponential, wilson_interval, z_value

__all__ = [
    "MODES",
    "ExperimentPlan",
    "ReplicaRecord",
    "EstimateRow",
    "EstimateTable",
    "Prediction",
    "ComparisonRow",
    "ComparisonReport",
    "run_replicas",
    "run_plan",
    "estimate",
    "compare",
    "n_trend",
    "ks_report",
    "moment_validation",
]

MODES = ("poisson_start", "lebesgue_proxy", "point_mass")
UNRELIABLE_CAP_FRACTION = 0.01
BLOCK = 32


@functools.lru_cache(maxsize=64)
def _window(d, radius, t, epsilon):
    return truncation_window(d, radius, t, epsilon)


@dataclass(frozen=True)
class ExperimentPlan:
    """Which probabilities to estimate and how.

    ``targets`` are ``(t, r)`` pairs.  With ``normalized=True`` the ball at
    time t has radius ``r * t**a`` where ``a`` is the regime exponent
    (1, 1/2, 0 for d = 1, 2, >= 3); otherwise it has radius ``r``.
    """

    d: int
    targets: tuple[tuple[float, float], ...]
    replicas: int
    N: int
    seed: int
    mode: str = "poisson_start"
    confidence: float = 0.95
    epsilon: float = 1e-2
    normalized: bool = False
    start_point: tuple[float, ...] | None = None
    mass: float = 1.0
    method: str = "tree"
    population_cap: int = DEFAULT_POPULATION_CAP

    def __post_init__(self):
        check_dimension(self.d)
        check_seed(self.seed)
        if self.replicas < 100:
            raise ValueError("a plan needs at least 100 replicas")
        if not self.targets:
            raise ValueError("a plan needs at least one target")
        object.__setattr__(self, "targets", tuple((float(t), float(r)) for t, r in self.targets))
        if any(t <= 0 or r < 0 for t, r in self.targets):
            raise ValueError("targets need t > 0 and r >= 0")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must lie in (0, 1)")
        if self.mode == "point_mass":
            pt = self.start_point if self.start_point is not None else (0.0,) * self.d
            if len(pt) != self.d:
                raise ValueError("start point dimension does not match d")
            object.__setattr__(self, "start_point", tuple(float(v) for v in pt))

    def ball_radius(self, t: float, r: float) -> float:
        return r * t ** scaling_exponent(self.d) if self.normalized else r

    @property
    def times(self) -> tuple[float, ...]:
        return tuple(sorted({t for t, _ in self.targets}))

    def window(self):
        """Certified window for the most demanding target (None for point-mass starts)."""
        if self.mode == "point_mass":
            return None
        radius = max(self.ball_radius(t, r) for t, r in self.targets)
        return _window(self.d, radius, max(self.times), self.epsilon)

    def sim_config(self, stream_id: int = 0) -> SimConfig:
        w = self.window()
        box = w.box if w is not None else Box.centered(self.d, 1.0)
        return SimConfig(
            d=self.d,
            N=self.N,
            window=box,
            horizon=max(self.times),
            seed=self.seed,
            stream_id=stream_id,
            method=self.method,
            population_cap=self.population_cap,
        )

    def digest(self) -> str:
        return self.sim_config().digest()


@dataclass(frozen=True)
class ReplicaRecord:
    replica_id: int
    t: float
    radius: float
    total_mass: float
    peak: int
    overflow: bool

    @property
    def censored(self) -> bool:
        return math.isinf(self.radius)


def _initial(plan: ExperimentPlan, rng: np.random.Generator, p_survive: float) -> ParticleSystem:
    """Initial state, with families that die before the first target already removed.

    Removing them is exact: each initial particle's family survives to the
    first observation time independently with probability ``p_survive``, so
    the survivors of a Poisson cloud are a thinned Poisson cloud, and the
    survivors of an atom of N particles are Binomial(N, p_survive).
    """
    d, N = plan.d, plan.N
    if plan.mode == "point_mass":
        return init_point_mass(plan.sim_config(), plan.start_point, plan.mass)
    box = plan.sim_config().window
    lo, hi = np.asarray(box.lo), np.asarray(box.hi)
    vol = box.volume
    if plan.mode == "lebesgue_proxy":
        n = int(rng.poisson(N * vol * p_survive))
        pos = lo + (hi - lo) * rng.random((n, d))
    else:
        k = int(rng.poisson(vol))
        atoms = lo + (hi - lo) * rng.random((k, d))
        per = rng.binomial(N, p_survive, size=k)
        pos = np.repeat(atoms, per, axis=0)
    return ParticleSystem(0.0, pos, 1.0 / N)


def _conditioned_advance(ps, t, rng, plan, conditioned: bool):
    """Advance; with ``conditioned`` every family is known to survive to ``t``."""
    if not conditioned or ps.count == 0 or plan.method != "tree":
        return advance(ps, t, rng, method=plan.method, cap=plan.population_cap)
    b = plan.N
    dt = t - ps.time
    q = b * dt / (1.0 + b * dt)
    counts = rng.geometric(1.0 - q, size=ps.count)
    total = int(counts.sum())
    if total > plan.population_cap:
        return ParticleSystem(t, np.empty((0, ps.d)), ps.unit_mass, peak=total, overflow=True)
    out = np.empty((total, ps.d))
    _kernels.tree_positions(rng, ps.positions, counts.astype(np.int64), dt, float(b), out)
    return ParticleSystem(t, out, ps.unit_mass, peak=total)


def _replica(plan: ExperimentPlan, replica_id: int) -> list[ReplicaRecord]:
    rng = stream(plan.seed, replica_id)
    times = plan.times
    # pre-thinning applies to the tree sampler from spatially spread starts
    thin = plan.method == "tree" and plan.mode != "point_mass"
    p_survive = 1.0 / (1.0 + plan.N * times[0]) if thin else 1.0
    ps = _initial(plan, rng, p_survive)
    out = []
    overflow = False
    for k, t in enumerate(times):
        if not overflow:
            ps = _conditioned_advance(ps, t, rng, plan, conditioned=thin and k == 0)
            overflow = ps.overflow
        if overflow:
            out.append(ReplicaRecord(replica_id, t, math.nan, math.nan, ps.peak, True))
            continue
        radius = math.inf if ps.count == 0 else float(_kernels.min_norm(ps.positions, np.zeros(plan.d)))
        out.append(ReplicaRecord(replica_id, t, radius, ps.total_mass, ps.peak, False))
    return out


def _block(plan: ExperimentPlan, ids) -> list[ReplicaRecord]:
    recs = []
    for i in ids:
        recs.extend(_replica(plan, int(i)))
    return recs


def run_replicas(plan: ExperimentPlan, jobs: int = 1) -> list[ReplicaRecord]:
    """All replica records, ordered by (replica_id, t) whatever ``jobs`` is."""
    ids = np.arange(plan.replicas)
    blocks = [ids[i : i + BLOCK] for i in range(0, plan.replicas, BLOCK)]
    if jobs == 1:
        parts = [_block(plan, b) for b in blocks]
    else:
        parts = Parallel(n_jobs=jobs)(delayed(_block)(plan, b) for b in blocks)
    recs = [r for part in parts for r in part]
    recs.sort(key=lambda r: (r.replica_id, r.t))
    return recs


@dataclass(frozen=True)
class EstimateRow:
    d: int
    t: float
    r: float
    p_hat: float
    ci_lo: float
    ci_hi: float
    n_effective: int
    successes: int
    censored_count: int
    cap_hit_count: int
    radius: float = math.nan

    @property
    def key(self):
        return (self.d, self.t, self.r)

    @property
    def reliable(self) -> bool:
        return self.cap_hit_count <= UNRELIABLE_CAP_FRACTION * (self.n_effective + self.cap_hit_count)

    @property
    def se(self) -> float:
        return binomial_se(self.p_hat, self.n_effective) if self.n_effective else math.nan


@dataclass
class EstimateTable:
    rows: list[EstimateRow]
    digest: str = ""
    seed: int = 0
    confidence: float = 0.95

    def row(self, d, t, r) -> EstimateRow:
        for row in self.rows:
            if row.key == (d, float(t), float(r)):
                return row
        raise KeyError((d, t, r))

    def keys(self):
        return [r.key for r in self.rows]


def estimate(plan: ExperimentPlan, records: list[ReplicaRecord]) -> EstimateTable:
    """Threshold replica radii into empty-ball probabilities with Wilson intervals."""
    by_t: dict[float, list[ReplicaRecord]] = {}
    for rec in records:
        by_t.setdefault(rec.t, []).append(rec)
    rows = []
    for t, r in plan.targets:
        recs = by_t.get(t, [])
        good = [x for x in recs if not x.overflow]
        caps = len(recs) - len(good)
        n = len(good)
        radius = plan.ball_radius(t, r)
        radii = np.array([x.radius for x in good])
        # censored (extinct) replicas have radius inf and count as empty
        k = int(np.sum(radii >= radius)) if n else 0
        lo, hi = wilson_interval(k, n, plan.confidence) if n else (0.0, 1.0)
        rows.append(
            EstimateRow(
                plan.d, t, r, k / n if n else math.nan, lo, hi, n, k,
                int(np.sum(np.isinf(radii))), caps, radius,
            )
        )
    return EstimateTable(rows, plan.digest(), plan.seed, plan.confidence)


def run_plan(plan: ExperimentPlan, jobs: int = 1) -> EstimateTable:
    return estimate(plan, run_replicas(plan, jobs))


@dataclass(frozen=True)
class Prediction:
    p: float
    source: str
    systematic: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0 or math.isnan(self.p):
            raise ValueError(f"predicted probability {self.p} is outside [0, 1]")
        if self.systematic < 0:
            raise ValueError("systematic budget must be nonnegative")


@dataclass(frozen=True)
class ComparisonRow:
    key: tuple
    source: str
    predicted: float
    estimated: float
    sigma: float
    z: float
    budget: float
    passed: bool


@dataclass
class ComparisonReport:
    rows: list[ComparisonRow]
    confidence: float
    ks: dict | None = None
    n_trend: list | None = None
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        ok = all(r.passed for r in self.rows)
        if self.ks is not None:
            ok = ok and bool(self.ks["passed"])
        return ok

    def failing(self) -> list[ComparisonRow]:
        return [r for r in self.rows if not r.passed]


def compare(mc: EstimateTable, predictions: dict, confidence: float | None = None, z: float | None = None) -> ComparisonReport:
    """Pass iff |p_hat - p| <= z * sigma + systematic budget.

    ``sigma`` is the binomial standard error at the larger of p_hat(1-p_hat)
    and p(1-p), so an all-empty or never-empty sample is not granted zero
    variance.  ``predictions`` maps ``(d, t, r)`` to :class:`Prediction` or a
    bare probability.
    """
    conf = mc.confidence if confidence is None else confidence
    zz = z_value(conf) if z is None else z
    keys = set(mc.keys())
    missing = [k for k in predictions if k not in keys]
    unused = [k for k in keys if k not in predictions]
    if missing or unused:
        raise KeyError(f"prediction keys without estimates: {missing}; estimates without predictions: {unused}")
    rows = []
    for row in mc.rows:
        pred = predictions[row.key]
        if not isinstance(pred, Prediction):
            pred = Prediction(float(pred), "given")
        var = max(row.p_hat * (1 - row.p_hat), pred.p * (1 - pred.p))
        sigma = math.sqrt(var / row.n_effective) if row.n_effective else math.inf
        gap = abs(row.p_hat - pred.p)
        zscore = gap / sigma if sigma > 0 else (0.0 if gap == 0 else math.inf)
        ok = gap <= zz * sigma + pred.systematic and row.reliable
        rows.append(ComparisonRow(row.key, pred.source, pred.p, row.p_hat, sigma, zscore, pred.systematic, ok))
    return ComparisonReport(rows, conf)


def n_trend(plan: ExperimentPlan, Ns=(50, 100, 200), jobs: int = 1):
    """Estimate tables at several densities and the finite-N budget per target.

    The budget for a target is the gap between the two largest N.
    """
    tables = {}
    for N in Ns:
        tables[N] = run_plan(replace(plan, N=int(N)), jobs)
    big = sorted(Ns)[-2:]
    budget = {}
    for key in tables[big[-1]].keys():
        budget[key] = abs(tables[big[-1]].row(*key).p_hat - tables[big[0]].row(*key).p_hat) if len(big) == 2 else 0.0
    return tables, budget


def ks_report(plan: ExperimentPlan, records, t: float, rate: float, envelope: float) -> dict:
    """KS test of R_t / t^a against Exp(rate) at time t, censored radii dropped."""
    a = scaling_exponent(plan.d)
    radii = np.array([r.radius for r in records if r.t == t and not r.overflow])
    finite = radii[np.isfinite(radii)]
    stat, p = ks_test_exponential(finite / t**a, rate)
    return {
        "t": t,
        "rate": rate,
        "statistic": stat,
        "p_value": p,
        "n": int(finite.size),
        "censored": int(radii.size - finite.size),
        "envelope": envelope,
        "passed": stat <= envelope,
    }


def _moment_block(d, N, x, t, r, seed, ids, method):
    cfg = SimConfig(d=d, N=N, window=Box.centered(d, 1.0), horizon=t, seed=seed, method=method)
    ball = BallSpec((0.0,) * d, r)
    out = np.empty((len(ids), 2))
    for k, i in enumerate(ids):
        ps = advance(init_point_mass(cfg, x, 1.0), t, stream(seed, int(i)), method=method)
        out[k] = ball_mass(ps, ball), ps.total_mass
    return out


def moment_validation(
    x, t: float, r: float, replicas: int, N: int = 1000, seed: int = 0, jobs: int = 1, method: str = "tree", z: float = 3.0
) -> dict:
    """Empirical first/second moments of X_t(B(r)) from a unit mass at x vs quadrature.

    The second-moment target includes the exact finite-N correction
    ``(m1 - m1^2)/N``; the superprocess value is reported alongside.  With
    ``r = inf`` the ball is all of space and the mean must equal 1.
    """
    x = tuple(float(v) for v in np.asarray(x, dtype=float).reshape(-1))
    d = len(x)
    ids = np.arange(replicas)
    blocks = [ids[i : i + 256] for i in range(0, replicas, 256)]
    if jobs == 1:
        parts = [_moment_block(d, N, x, t, r, seed, b, method) for b in blocks]
    else:
        parts = Parallel(n_jobs=jobs)(delayed(_moment_block)(d, N, x, t, r, seed, b, method) for b in blocks)
    data = np.vstack(parts)
    mass = data[:, 0]
    n = mass.size
    mean = float(mass.mean())
    second = float(np.mean(mass**2))
    se1 = float(mass.std(ddof=1) / math.sqrt(n))
    se2 = float((mass**2).std(ddof=1) / math.sqrt(n))
    if math.isinf(r):
        m1, m2_sbm, m2 = 1.0, math.nan, math.nan
    else:
        m1 = moment1(t, r, x)
        m2_sbm = moment2(t, r, x)
        m2 = particle_moment2(t, r, N, x)
    hit = float(np.mean(mass > 0))
    hit_se = math.sqrt(hit * (1 - hit) / n)
    var_hat = float(mass.var(ddof=1))
    rep = {
        "x": list(x),
        "t": t,
        "r": r,
        "N": N,
        "replicas": n,
        "mean": mean,
        "mean_se": se1,
        "moment1": m1,
        "mean_z": (mean - m1) / se1 if se1 > 0 else 0.0,
        "second": second,
        "second_se": se2,
        "moment2": m2,
        "moment2_superprocess": m2_sbm,
        "second_z": (second - m2) / se2 if se2 > 0 and not math.isnan(m2) else 0.0,
        "variance": var_hat,
        "variance_predicted": m2 - m1 * m1 if not math.isnan(m2) else math.nan,
        "hit_probability": hit,
        "hit_se": hit_se,
    }
    rep["mean_ok"] = abs(rep["mean_z"]) <= z
    rep["second_ok"] = abs(rep["second_z"]) <= z
    if not math.isnan(m2):
        rep["paley_zygmund"] = m1 * m1 / m2_sbm
        rep["paley_zygmund_ok"] = rep["paley_zygmund"] <= hit + z * hit_se
    return rep
