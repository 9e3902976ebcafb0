"""Critical binary branching Brownian motion at density N.

Each particle carries mass ``1/N``, branches at rate ``2N`` and then dies or
splits in two with equal probability.  As ``N -> inf`` the measure
``(1/N) sum_i delta_{x_i}`` converges to super-Brownian motion with branching
mechanism ``u**2``; the total mass then has extinction probability
``exp(-m/t)``, which the calibration tests check directly.

Two exact advancing methods are available (see :mod:`emptyball._kernels`):
``"events"`` replays every branching event, ``"tree"`` samples only the
survivors at the target time together with their genealogy.  They have the
same law; ``"tree"`` is far cheaper once most families die out.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import _kernels
from .analytic import certified_outer_radius, check_dimension, projected_hit_tail
from .rng import check_seed

__all__ = [
    "Box",
    "SimConfig",
    "ParticleSystem",
    "EmptyBallSample",
    "BallSpec",
    "PopulationOverflow",
    "SizingError",
    "TruncationWindow",
    "init_poisson",
    "init_prm",
    "init_point_mass",
    "advance",
    "empty_ball_radius",
    "ball_mass",
    "truncation_window",
]

DEFAULT_POPULATION_CAP = 10**7
DEFAULT_INIT_CAP = 10**8
METHODS = ("tree", "events")


class SizingError(ValueError):
    """Requested initial population exceeds the configured cap."""


class PopulationOverflow(RuntimeError):
    """Raised only when a caller asks for overflow to be fatal."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``prod [lo_i, hi_i]``."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi) or not self.lo:
            raise ValueError("box corners must have the same positive dimension")
        if any(h < l for l, h in zip(self.lo, self.hi)):
            raise ValueError("box has hi < lo")
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))

    @classmethod
    def centered(cls, d: int, half_width: float) -> "Box":
        if half_width < 0:
            raise ValueError("half width must be nonnegative")
        return cls((-half_width,) * d, (half_width,) * d)

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return math.prod(h - l for l, h in zip(self.lo, self.hi))


@dataclass(frozen=True)
class BallSpec:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("ball radius must be nonnegative")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))


@dataclass(frozen=True)
class SimConfig:
    """Everything that determines a replica, given its ``stream_id``."""

    d: int
    N: int
    window: Box
    horizon: float
    seed: int
    stream_id: int = 0
    method: str = "tree"
    population_cap: int = DEFAULT_POPULATION_CAP
    init_cap: int = DEFAULT_INIT_CAP

    def __post_init__(self):
        check_dimension(self.d)
        if isinstance(self.N, bool) or int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        if self.window.d != self.d:
            raise ValueError("window dimension does not match d")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        check_seed(self.seed)
        if self.stream_id < 0:
            raise ValueError("stream_id must be nonnegative")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")

    def digest(self) -> str:
        """Stable hash of every field except the stream id."""
        data = asdict(self)
        data.pop("stream_id")
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class ParticleSystem:
    time: float
    positions: np.ndarray
    unit_mass: float
    peak: int = 0
    events: int = 0
    overflow: bool = False

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=float)
        if self.positions.ndim != 2:
            raise ValueError("positions must be an (n, d) array")
        self.peak = max(self.peak, self.count)

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    @property
    def total_mass(self) -> float:
        return self.unit_mass * self.count

    def superpose(self, other: "ParticleSystem") -> "ParticleSystem":
        if other.d != self.d or other.unit_mass != self.unit_mass or other.time != self.time:
            raise ValueError("can only superpose systems with the same d, mass and time")
        return ParticleSystem(self.time, np.vstack([self.positions, other.positions]), self.unit_mass)


@dataclass(frozen=True)
class EmptyBallSample:
    t: float
    radius: float
    replica_id: int = 0
    config_digest: str = ""

    @property
    def censored(self) -> bool:
        return math.isinf(self.radius)


@dataclass(frozen=True)
class TruncationWindow:
    box: Box
    half_width: float
    certified_bound: float
    epsilon: float


def _empty(d: int, unit_mass: float, time: float = 0.0) -> ParticleSystem:
    return ParticleSystem(time, np.empty((0, d)), unit_mass)


def _check_expected(expected: float, cap: int):
    if expected > cap:
        raise SizingError(f"expected initial population {expected:.3g} exceeds the cap {cap:.3g}")


def init_poisson(config: SimConfig, rng: np.random.Generator) -> ParticleSystem:
    """Poisson(N |window|) particles uniform on the window (Lebesgue proxy)."""
    vol = config.window.volume
    _check_expected(config.N * vol, config.init_cap)
    n = int(rng.poisson(config.N * vol)) if vol > 0 else 0
    lo = np.asarray(config.window.lo)
    hi = np.asarray(config.window.hi)
    pos = lo + (hi - lo) * rng.random((n, config.d))
    return ParticleSystem(0.0, pos, 1.0 / config.N)


def init_prm(config: SimConfig, rng: np.random.Generator) -> ParticleSystem:
    """Unit-mass atoms of a rate-1 Poisson random measure, N particles per atom."""
    vol = config.window.volume
    _check_expected(config.N * vol, config.init_cap)
    k = int(rng.poisson(vol)) if vol > 0 else 0
    lo = np.asarray(config.window.lo)
    hi = np.asarray(config.window.hi)
    atoms = lo + (hi - lo) * rng.random((k, config.d))
    return ParticleSystem(0.0, np.repeat(atoms, config.N, axis=0), 1.0 / config.N)


def init_point_mass(config: SimConfig, x, m: float) -> ParticleSystem:
    """``round(m N)`` particles at ``x``."""
    if not m > 0:
        raise ValueError("point mass must be positive")
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != config.d:
        raise ValueError("point dimension does not match d")
    n = int(round(m * config.N))
    _check_expected(n, config.init_cap)
    return ParticleSystem(0.0, np.tile(x, (n, 1)), 1.0 / config.N)


def advance(
    ps: ParticleSystem,
    t_target: float,
    rng: np.random.Generator,
    method: str = "tree",
    cap: int = DEFAULT_POPULATION_CAP,
) -> ParticleSystem:
    """Run the branching system forward to ``t_target``.

    A replica whose population would exceed ``cap`` comes back empty with
    ``overflow=True``; callers count it separately.
    """
    if t_target < ps.time:
        raise ValueError("cannot advance backwards in time")
    dt = t_target - ps.time
    if ps.count == 0 or dt == 0:
        return replace(ps, time=t_target, positions=ps.positions.copy())
    b = 1.0 / ps.unit_mass
    if method == "tree":
        counts = _kernels.tree_counts(rng, ps.count, dt, b)
        total = int(counts.sum())
        if total > cap:
            return ParticleSystem(t_target, np.empty((0, ps.d)), ps.unit_mass, peak=total, overflow=True)
        out = np.empty((total, ps.d))
        _kernels.tree_positions(rng, ps.positions, counts, dt, b, out)
        # the genealogy is not replayed, so the running peak is not observed
        return ParticleSystem(t_target, out, ps.unit_mass, peak=max(ps.peak, total), events=ps.events)
    if method == "events":
        pos, events, peak, overflow = _kernels.event_advance(rng, ps.positions, dt, b, cap)
        if overflow:
            pos = np.empty((0, ps.d))
        return ParticleSystem(
            t_target, pos, ps.unit_mass, peak=max(ps.peak, peak), events=ps.events + events, overflow=overflow
        )
    raise ValueError(f"unknown method {method!r}")


def _center(ps: ParticleSystem, center) -> np.ndarray:
    c = np.zeros(ps.d) if center is None else np.asarray(center, dtype=float).reshape(-1)
    if c.shape[0] != ps.d:
        raise ValueError("center dimension does not match the system")
    return c


def empty_ball_radius(ps: ParticleSystem, center=None, replica_id: int = 0, digest: str = "") -> EmptyBallSample:
    """Distance from ``center`` to the nearest particle (inf when extinct)."""
    c = _center(ps, center)
    radius = math.inf if ps.count == 0 else float(_kernels.min_norm(ps.positions, c))
    return EmptyBallSample(ps.time, radius, replica_id, digest)


def ball_mass(ps: ParticleSystem, ball: BallSpec) -> float:
    """Mass in the open ball."""
    if ball.radius == 0 or ps.count == 0:
        return 0.0
    return ps.unit_mass * int(_kernels.count_within(ps.positions, _center(ps, ball.center), ball.radius))


def truncation_window(d: int, r_target: float, t: float, epsilon: float, hit_tail=projected_hit_tail) -> TruncationWindow:
    """Centered box outside which initial mass contributes < ``epsilon``.

    The expected number of families started outside the box that reach
    B(r_target) by time t is at most the integral of u(t, .) outside the
    box, and the box contains the ball of radius ``half_width``; the
    certified far-field bound does the rest.  The same bound covers the
    Lebesgue, Poisson and finite-N starts since each contribution is
    dominated by u.
    """
    d = check_dimension(d)
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if r_target < 0:
        raise ValueError("target radius must be nonnegative")
    half, bound = certified_outer_radius(d, r_target, t, epsilon, hit_tail)
    return TruncationWindow(Box.centered(d, half), half, bound, epsilon)
