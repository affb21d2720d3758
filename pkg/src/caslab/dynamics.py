"""Point-mass vertical kinematics, pilot response, and maneuver projection.

A complying pilot accelerates at a constant rate toward the nearest edge of
the advisory's vertical-rate band and saturates exactly at the edge; altitude
integrates the trapezoidal mean of the step's start/end rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import Advisory

# Default pilot parameters: ~g/4 vertical acceleration, 5 s deterministic
# projection delay, and a geometric per-step response probability whose mean
# delay (1-p)/p matches the 5 s figure.
DEFAULT_PILOT_ACCEL_FPS2 = 8.05
DEFAULT_PILOT_DELAY_S = 5.0
DEFAULT_RESPONSE_PROBABILITY = 1.0 / 6.0

# Intruder acceleration spread comparable to the ownship's own maneuver
# authority; weaker values wash out the near-coaltitude wait region.
DEFAULT_INTRUDER_SIGMA_FPS2 = 8.0


@dataclass(frozen=True)
class PilotModel:
    """Pilot response model.

    response_probability is the per-step probability of beginning to comply
    (geometric delay); acceleration is the constant vertical acceleration
    magnitude once complying (ft/s^2); deterministic_delay is the fixed
    response delay used by deterministic TCAS projections (s).
    """

    response_probability: float = DEFAULT_RESPONSE_PROBABILITY
    acceleration: float = DEFAULT_PILOT_ACCEL_FPS2
    deterministic_delay: float = DEFAULT_PILOT_DELAY_S

    def __post_init__(self) -> None:
        if not (0.0 < self.response_probability <= 1.0):
            raise ValueError("response_probability must be in (0, 1]")
        if self.acceleration <= 0:
            raise ValueError("acceleration must be > 0")
        if self.deterministic_delay < 0:
            raise ValueError("deterministic_delay must be >= 0")


@dataclass(frozen=True)
class IntruderModel:
    """Zero-mean Gaussian per-step vertical acceleration (ft/s^2 std dev)."""

    sigma_accel: float = DEFAULT_INTRUDER_SIGMA_FPS2

    def __post_init__(self) -> None:
        if self.sigma_accel < 0:
            raise ValueError("sigma_accel must be >= 0")


def step_vertical(
    z: float,
    vz: float,
    target_band: Optional[Advisory],
    complying: bool,
    pilot: PilotModel,
    dt: float,
) -> Tuple[float, float]:
    """Advance (altitude, vertical rate) by one step of length dt.

    With no band or a non-complying pilot the rate is held; otherwise the
    rate moves toward the band edge at +/- pilot.acceleration and clamps
    exactly at the edge.  Altitude integrates the trapezoidal mean of the
    start/end rates.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    vz_new = vz
    if complying and target_band is not None and target_band is not Advisory.COC:
        target = target_band.target_rate_fps
        sense = target_band.sense
        inside = vz >= target if sense > 0 else vz <= target
        if not inside:
            step = pilot.acceleration * dt
            if target > vz:
                vz_new = min(vz + step, target)
            else:
                vz_new = max(vz - step, target)
    return z + 0.5 * (vz + vz_new) * dt, vz_new


def sample_response_delay(pilot: PilotModel, rng: np.random.Generator) -> int:
    """Draw a geometric response delay in whole steps, support {0, 1, ...}."""
    p = pilot.response_probability
    if p >= 1.0:
        return 0
    u = rng.random()
    # Inverse CDF of P(k) = (1-p)^k p.
    return int(math.floor(math.log(max(u, 1e-300)) / math.log(1.0 - p)))


def project_template(
    own: Tuple[float, float],
    intr: Tuple[float, float],
    advisory: Advisory,
    pilot: PilotModel,
    horizon: float,
    dt: float = 1.0,
) -> float:
    """Deterministic projected vertical separation at the horizon (ft).

    The intruder holds constant velocity; the ownship holds constant
    velocity for pilot.deterministic_delay seconds and then complies with
    the advisory via step_vertical until the horizon.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    z0, vz0 = own
    z1, vz1 = intr
    delay = min(pilot.deterministic_delay, horizon)
    z0 += vz0 * delay
    t = delay
    while t < horizon - 1e-12:
        step = min(dt, horizon - t)
        z0, vz0 = step_vertical(z0, vz0, advisory, True, pilot, step)
        t += step
    return abs((z1 + vz1 * horizon) - z0)
