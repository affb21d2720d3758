"""Simplified TCAS threat logic.

Threat detection extrapolates both aircraft at constant velocity and gates
on time to closest point of approach and projected horizontal miss
distance.  RA selection is the classic two-step scheme: pick the vertical
sense whose standard-maneuver projection separates most at closest
approach, then pick the weakest advisory of that sense projected to achieve
the required separation (ALIM).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple

from .core import (
    DOWN,
    DOWN_ADVISORIES,
    FT_PER_NMI,
    UP,
    UP_ADVISORIES,
    Advisory,
    AircraftState,
)
from .dynamics import PilotModel, project_template


class Threat(Enum):
    NONE = "none"
    TA = "TA"
    RA = "RA"


@dataclass(frozen=True)
class TcasConfig:
    """Alerting thresholds and the projection pilot model."""

    ta_tau: float = 40.0
    ra_tau: float = 25.0
    miss_distance_threshold: float = 1.2 * FT_PER_NMI
    alim: float = 400.0
    pilot: PilotModel = field(default_factory=PilotModel)

    def __post_init__(self) -> None:
        if not (self.ta_tau >= self.ra_tau > 0):
            raise ValueError("thresholds must satisfy ta_tau >= ra_tau > 0")
        if self.alim <= 0:
            raise ValueError("alim must be > 0")
        if self.miss_distance_threshold <= 0:
            raise ValueError("miss_distance_threshold must be > 0")


def closest_approach(own: AircraftState, intr: AircraftState) -> Tuple[Optional[float], float]:
    """(time to horizontal CPA, projected miss distance) at constant velocity.

    Returns (None, current range) for non-closing geometry: the threat has
    no defined approach time.
    """
    px, py = intr.x - own.x, intr.y - own.y
    vx, vy = intr.vx - own.vx, intr.vy - own.vy
    vv = vx * vx + vy * vy
    if vv == 0.0:
        return 0.0, math.hypot(px, py)
    t = -(px * vx + py * vy) / vv
    if t < 0.0:
        return None, math.hypot(px, py)
    return t, math.hypot(px + vx * t, py + vy * t)


def assess_threat(own: AircraftState, intr: AircraftState, cfg: TcasConfig) -> Threat:
    """Classify the intruder as none, TA, or RA."""
    t_cpa, miss = closest_approach(own, intr)
    if t_cpa is None or miss >= cfg.miss_distance_threshold:
        return Threat.NONE
    if t_cpa < cfg.ra_tau:
        return Threat.RA
    if t_cpa < cfg.ta_tau:
        return Threat.TA
    return Threat.NONE


def select_sense(own: AircraftState, intr: AircraftState, cfg: TcasConfig) -> int:
    """Choose the RA sense by projecting the standard climb and descend.

    Ties break toward down so behavior stays deterministic.
    """
    t_cpa, _ = closest_approach(own, intr)
    horizon = 0.0 if t_cpa is None else t_cpa
    up_sep = project_template(
        (own.z, own.vz), (intr.z, intr.vz), Advisory.CL1500, cfg.pilot, horizon
    )
    down_sep = project_template(
        (own.z, own.vz), (intr.z, intr.vz), Advisory.DES1500, cfg.pilot, horizon
    )
    return UP if up_sep > down_sep else DOWN


def select_strength(
    own: AircraftState, intr: AircraftState, sense: int, cfg: TcasConfig
) -> Advisory:
    """Weakest advisory of the chosen sense projected to achieve ALIM.

    Falls back to the strongest advisory when none achieves it.
    """
    candidates = UP_ADVISORIES if sense == UP else DOWN_ADVISORIES
    t_cpa, _ = closest_approach(own, intr)
    horizon = 0.0 if t_cpa is None else t_cpa
    separations = [
        project_template((own.z, own.vz), (intr.z, intr.vz), a, cfg.pilot, horizon)
        for a in candidates
    ]
    return pick_min_strength(candidates, separations, cfg.alim)


def pick_min_strength(
    candidates: Sequence[Advisory], separations: Sequence[float], alim: float
) -> Advisory:
    """Minimum-strength selection rule on projected separations."""
    for a, sep in zip(candidates, separations):
        if sep >= alim:
            return a
    return candidates[-1]


def arbitrate_multithreat(
    advisories: Sequence[Advisory], time_to_cpa: Sequence[float]
) -> Advisory:
    """Command arbitration across intruders.

    A single RA passes through; same-sense RAs merge to the strongest;
    mixed senses defer to the most urgent intruder (smallest time to
    closest approach).  time_to_cpa must parallel advisories.
    """
    if len(advisories) == 0:
        raise ValueError("advisory list must be non-empty")
    if len(time_to_cpa) != len(advisories):
        raise ValueError("time_to_cpa must parallel advisories")
    ras = [(a, t) for a, t in zip(advisories, time_to_cpa) if a is not Advisory.COC]
    if not ras:
        return Advisory.COC
    if len(ras) == 1:
        return ras[0][0]
    senses = {a.sense for a, _ in ras}
    if len(senses) == 1:
        return max(ras, key=lambda at: at[0].strength)[0]
    return min(ras, key=lambda at: at[1])[0]


class TcasTracker:
    """Per-aircraft RA state with simple switching hysteresis.

    A fresh RA is issued immediately; once an RA is active, a differing
    selection must persist for two consecutive steps before it replaces the
    active one (covers strengthen, weaken, reversal, and clear).
    """

    def __init__(self, cfg: TcasConfig):
        self.cfg = cfg
        self.current = Advisory.COC
        self._pending_streak = 0

    def step(self, own: AircraftState, intr: AircraftState) -> Tuple[Advisory, Threat]:
        threat = assess_threat(own, intr, self.cfg)
        if threat is Threat.RA:
            sense = select_sense(own, intr, self.cfg)
            selected = select_strength(own, intr, sense, self.cfg)
        else:
            selected = Advisory.COC
        if self.current is Advisory.COC:
            self.current = selected
            self._pending_streak = 0
        elif selected is not self.current:
            self._pending_streak += 1
            if self._pending_streak >= 2:
                self.current = selected
                self._pending_streak = 0
        else:
            self._pending_streak = 0
        return self.current, threat
