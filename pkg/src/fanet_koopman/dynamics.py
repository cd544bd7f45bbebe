"""Fixed-wing UAV kinematics on a discrete 2D grid of time steps.

Units are per step: velocities in meters/step, turning rates in radians/step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


class PlacementError(RuntimeError):
    """Raised when orbits cannot be packed into the operational area."""


def wrap_angle(angle: float) -> float:
    a = angle % TWO_PI
    # float % can round up to exactly 2*pi for tiny negative inputs
    return 0.0 if a >= TWO_PI else a


@dataclass(frozen=True)
class UavParams:
    velocity: float
    turn_rate: float
    heading0: float = 0.0
    position0: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.velocity >= 0.0:
            raise ValueError(f"velocity must be >= 0, got {self.velocity}")
        if not math.isfinite(self.turn_rate):
            raise ValueError("turn_rate must be finite")
        if not 0.0 <= self.heading0 < TWO_PI:
            raise ValueError(f"heading0 must lie in [0, 2pi), got {self.heading0}")

    @property
    def orbit_radius(self) -> float:
        """Circumradius of the closed polygonal orbit, u / (2 sin(r/2)) ~ u / r."""
        if self.turn_rate == 0.0:
            return math.inf
        return self.velocity / (2.0 * abs(math.sin(self.turn_rate / 2.0)))

    @property
    def orbit_center(self) -> tuple[float, float]:
        """Center of the circle the zero-wind vertices lie on."""
        if self.turn_rate == 0.0:
            return (math.inf, math.inf)
        # p_t = p_0 + u e^{i psi0} (e^{i r t} - 1) / (e^{i r} - 1)
        step = complex(self.velocity * math.cos(self.heading0),
                       self.velocity * math.sin(self.heading0))
        offset = step / (complex(math.cos(self.turn_rate), math.sin(self.turn_rate)) - 1.0)
        return (self.position0[0] - offset.real, self.position0[1] - offset.imag)

    def initial_state(self) -> UavState:
        return UavState(self.position0[0], self.position0[1], self.heading0)


@dataclass(frozen=True)
class WindParams:
    velocity: float = 1e-8
    angle: float = 1e-8

    def __post_init__(self):
        if not self.velocity >= 0.0:
            raise ValueError(f"wind velocity must be >= 0, got {self.velocity}")
        if not 0.0 <= self.angle < TWO_PI:
            raise ValueError(f"wind angle must lie in [0, 2pi), got {self.angle}")


CALM = WindParams(0.0, 0.0)


@dataclass(frozen=True)
class UavState:
    x: float
    y: float
    psi: float


@dataclass
class Trajectory:
    """Time-ordered states; row t is (x, y, psi) at step t."""

    states: np.ndarray

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, :2]

    @property
    def headings(self) -> np.ndarray:
        return self.states[:, 2]

    def state(self, t: int) -> UavState:
        x, y, psi = self.states[t]
        return UavState(float(x), float(y), float(psi))


@dataclass
class FleetScenario:
    uavs: list[UavParams]
    wind: WindParams = field(default_factory=WindParams)
    area: tuple[float, float] = (1000.0, 1000.0)
    rng_seed: int = 0

    def __post_init__(self):
        if len(self.uavs) < 2:
            raise ValueError(f"a fleet needs at least 2 UAVs, got {len(self.uavs)}")
        if self.area[0] <= 0 or self.area[1] <= 0:
            raise ValueError(f"area dimensions must be positive, got {self.area}")

    @property
    def size(self) -> int:
        return len(self.uavs)


def step_uav(state: UavState, params: UavParams, wind: WindParams) -> UavState:
    # position moves along the pre-update heading, then the heading turns
    x = state.x + params.velocity * math.cos(state.psi) + wind.velocity * math.cos(wind.angle)
    y = state.y + params.velocity * math.sin(state.psi) + wind.velocity * math.sin(wind.angle)
    return UavState(x, y, wrap_angle(state.psi + params.turn_rate))


def simulate_trajectory(initial: UavState, params: UavParams, wind: WindParams,
                        steps: int) -> Trajectory:
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    out = np.empty((steps + 1, 3))
    state = initial
    out[0] = (state.x, state.y, state.psi)
    for t in range(1, steps + 1):
        state = step_uav(state, params, wind)
        out[t] = (state.x, state.y, state.psi)
    return Trajectory(out)


def simulate_fleet(scenario: FleetScenario, steps: int) -> np.ndarray:
    """Return an array of shape (steps + 1, L, 3) with every UAV's states."""
    out = np.empty((steps + 1, scenario.size, 3))
    for l, params in enumerate(scenario.uavs):
        out[:, l, :] = simulate_trajectory(params.initial_state(), params,
                                           scenario.wind, steps).states
    return out


@dataclass(frozen=True)
class FleetSampling:
    """Ranges for random fleet generation (defaults match the table1 preset)."""

    uavs: int = 4
    area: tuple[float, float] = (1000.0, 1000.0)
    velocity_range: tuple[float, float] = (10.0, 15.0)
    turn_rate_range: tuple[float, float] = (0.01, 0.05)
    wind: WindParams = field(default_factory=WindParams)
    separation: str = "centers"
    attempts_per_uav: int = 2_000
    restarts: int = 200

    def __post_init__(self):
        if self.uavs < 2:
            raise ValueError(f"a fleet needs at least 2 UAVs, got {self.uavs}")
        for name in ("velocity_range", "turn_rate_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: min {lo} exceeds max {hi}")
        if self.velocity_range[0] < 0:
            raise ValueError("velocity_range must be non-negative")
        if self.area[0] <= 0 or self.area[1] <= 0:
            raise ValueError(f"area dimensions must be positive, got {self.area}")
        if self.separation not in SEPARATION_RULES:
            raise ValueError(f"separation must be one of {sorted(SEPARATION_RULES)}")


def _annulus_gap(a: UavParams, b: UavParams) -> bool:
    """True if the two orbits' +-2u bands neither cross nor touch."""
    (ax, ay), (bx, by) = a.orbit_center, b.orbit_center
    dist = math.hypot(ax - bx, ay - by)
    ra, rb = a.orbit_radius, b.orbit_radius
    margin = 2.0 * a.velocity + 2.0 * b.velocity
    if dist >= ra + rb:
        return dist - ra - rb > margin
    return abs(ra - rb) - dist > margin


def _center_gap(a: UavParams, b: UavParams) -> bool:
    """True if the orbit centers are more than 2(u_a + u_b) apart."""
    (ax, ay), (bx, by) = a.orbit_center, b.orbit_center
    return math.hypot(ax - bx, ay - by) > 2.0 * (a.velocity + b.velocity)


# "annulus": the +-2u bands around the two orbit circles are disjoint (strict,
# rarely satisfiable for four default-range orbits in 1 km^2); "centers": orbits may
# cross, but no two UAVs share (nearly) the same circle.
SEPARATION_RULES = {"annulus": _annulus_gap, "centers": _center_gap}


def _fits(p: UavParams, area: tuple[float, float]) -> bool:
    cx, cy = p.orbit_center
    rad = p.orbit_radius
    return rad <= cx <= area[0] - rad and rad <= cy <= area[1] - rad


def _place_fleet(config: FleetSampling, rng: np.random.Generator) -> list[UavParams] | None:
    separated = SEPARATION_RULES[config.separation]
    placed: list[UavParams] = []
    for _ in range(config.uavs):
        for _ in range(config.attempts_per_uav):
            u = float(rng.uniform(*config.velocity_range))
            r = float(rng.uniform(*config.turn_rate_range))
            cx = float(rng.uniform(0.0, config.area[0]))
            cy = float(rng.uniform(0.0, config.area[1]))
            psi0 = wrap_angle(float(rng.uniform(0.0, TWO_PI)))
            if r == 0.0 or u == 0.0:
                continue
            step = complex(u * math.cos(psi0), u * math.sin(psi0))
            offset = step / (complex(math.cos(r), math.sin(r)) - 1.0)
            cand = UavParams(u, r, psi0, (cx + offset.real, cy + offset.imag))
            if _fits(cand, config.area) and all(separated(cand, p) for p in placed):
                placed.append(cand)
                break
        else:
            return None
    return placed


def sample_fleet(config: FleetSampling, seed: int) -> FleetScenario:
    """Draw velocities, turn rates and orbit centers until every orbit fits.

    UAVs are placed one at a time; each draw resamples velocity, turn rate,
    center and heading together, since large-radius orbits can never fit.
    A UAV that finds no room restarts the whole fleet.
    """
    rng = np.random.default_rng(seed)
    for _ in range(config.restarts):
        placed = _place_fleet(config, rng)
        if placed is not None:
            return FleetScenario(placed, config.wind, config.area, seed)
    raise PlacementError(
        f"could not place {config.uavs} orbits in area {config.area} "
        f"after {config.restarts} restarts of {config.attempts_per_uav} draws per UAV")
