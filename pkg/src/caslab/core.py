"""Shared airspace domain types, relative geometry, and safety-event predicates.

Internal units are feet and feet/second throughout; advisory rate targets are
expressed in feet/minute at the interface (the conventional cockpit unit) and
converted once at the boundary.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

# NMAC volume thresholds (ft): both separations strictly below these at once.
NMAC_VERTICAL_FT = 100.0
NMAC_HORIZONTAL_FT = 500.0

FT_PER_NMI = 6076.115

# Vertical sense codes.
UP = +1
DOWN = -1

# Event flag labels used in EncounterTrace.events.
EVENT_TA = "TA"
EVENT_RA = "RA"
EVENT_STRENGTHEN = "STRENGTHEN"
EVENT_REVERSAL = "REVERSAL"
EVENT_CROSSING = "CROSSING"
EVENT_NMAC = "NMAC"


class Advisory(Enum):
    """Vertical resolution advisories.

    Members are declared in selection tie-break order: no advisory first,
    then weaker before stronger, down before up at equal strength.  Each
    non-COC member carries a sense (up/down) and a one-sided target
    vertical-rate band expressed in ft/min.
    """

    COC = "COC"
    DNC = "DNC"
    DND = "DND"
    DES1500 = "DES1500"
    CL1500 = "CL1500"
    DES2500 = "DES2500"
    CL2500 = "CL2500"

    @property
    def sense(self) -> int:
        """+1 for up-sense, -1 for down-sense, 0 for COC."""
        return _SENSE[self]

    @property
    def strength(self) -> int:
        """0 for rate-limit advisories (DNC/DND), 1 for 1500, 2 for 2500."""
        return _STRENGTH[self]

    @property
    def target_rate_fpm(self) -> Optional[float]:
        """Signed band edge in ft/min; None for COC.

        Up-sense advisories require vertical rate >= target; down-sense
        require rate <= target.
        """
        return _TARGET_FPM[self]

    @property
    def target_rate_fps(self) -> Optional[float]:
        t = _TARGET_FPM[self]
        return None if t is None else t / 60.0


_SENSE = {
    Advisory.COC: 0,
    Advisory.DNC: DOWN,
    Advisory.DND: UP,
    Advisory.DES1500: DOWN,
    Advisory.CL1500: UP,
    Advisory.DES2500: DOWN,
    Advisory.CL2500: UP,
}

_STRENGTH = {
    Advisory.COC: -1,
    Advisory.DNC: 0,
    Advisory.DND: 0,
    Advisory.DES1500: 1,
    Advisory.CL1500: 1,
    Advisory.DES2500: 2,
    Advisory.CL2500: 2,
}

_TARGET_FPM = {
    Advisory.COC: None,
    Advisory.DNC: 0.0,
    Advisory.DND: 0.0,
    Advisory.DES1500: -1500.0,
    Advisory.CL1500: 1500.0,
    Advisory.DES2500: -2500.0,
    Advisory.CL2500: 2500.0,
}

# Canonical advisory axis order (also the argmax tie-break order).
ADVISORIES: Tuple[Advisory, ...] = tuple(Advisory)

UP_ADVISORIES: Tuple[Advisory, ...] = (Advisory.DND, Advisory.CL1500, Advisory.CL2500)
DOWN_ADVISORIES: Tuple[Advisory, ...] = (Advisory.DNC, Advisory.DES1500, Advisory.DES2500)


def is_strengthening(prev: Advisory, new: Advisory) -> bool:
    """True when ``new`` strictly strengthens ``prev`` within the same sense."""
    return prev.sense != 0 and new.sense == prev.sense and new.strength > prev.strength


def is_reversal(prev: Advisory, new: Advisory) -> bool:
    """True when ``prev`` and ``new`` carry opposite senses."""
    return prev.sense != 0 and new.sense != 0 and new.sense == -prev.sense


def normalize_angle(a: float) -> float:
    """Wrap an angle in radians to (-pi, pi]."""
    w = a % (2.0 * math.pi)
    if w > math.pi:
        w -= 2.0 * math.pi
    return w


@dataclass(frozen=True)
class VerticalState:
    """State of one pairwise vertical conflict.

    h is intruder-minus-ownship relative altitude (ft), hdot0/hdot1 are the
    ownship/intruder vertical rates (ft/s), a_prev the previously issued
    advisory, and tau the time to loss of horizontal separation (s,
    quantized to whole seconds by producers; must be >= 0).
    """

    h: float
    hdot0: float
    hdot1: float
    a_prev: Advisory
    tau: float

    def __post_init__(self) -> None:
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if not isinstance(self.a_prev, Advisory):
            raise TypeError("a_prev must be an Advisory")


@dataclass(frozen=True)
class HorizontalGeometry:
    """Own-frame horizontal geometry of a pair of aircraft.

    r is range (ft), theta the bearing of the intruder from the ownship
    heading, psi the intruder heading relative to the ownship heading
    (both radians, wrapped to (-pi, pi]), v0/v1 ground speeds (ft/s).
    """

    r: float
    theta: float
    psi: float
    v0: float
    v1: float

    def __post_init__(self) -> None:
        if self.r < 0:
            raise ValueError("range must be >= 0")
        if self.v0 < 0 or self.v1 < 0:
            raise ValueError("speeds must be >= 0")
        object.__setattr__(self, "theta", normalize_angle(self.theta))
        object.__setattr__(self, "psi", normalize_angle(self.psi))

    def relative_position(self) -> Tuple[float, float]:
        return (self.r * math.cos(self.theta), self.r * math.sin(self.theta))

    def relative_velocity(self) -> Tuple[float, float]:
        return (self.v1 * math.cos(self.psi) - self.v0, self.v1 * math.sin(self.psi))


@dataclass(frozen=True)
class AircraftState:
    """Instantaneous point-mass state (ft, ft/s)."""

    x: float
    y: float
    z: float
    vx: float
    vy: float
    vz: float


@dataclass(frozen=True)
class AircraftTrack:
    """Point-mass kinematic time series sampled at a fixed step dt."""

    dt: float
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    vx: np.ndarray
    vy: np.ndarray
    vz: np.ndarray

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        n = len(self.x)
        for name in ("x", "y", "z", "vx", "vy", "vz"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError("track series must share one length")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"track series {name} contains non-finite values")
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.x)

    def state(self, step: int) -> AircraftState:
        return AircraftState(
            float(self.x[step]), float(self.y[step]), float(self.z[step]),
            float(self.vx[step]), float(self.vy[step]), float(self.vz[step]),
        )


@dataclass(frozen=True)
class EncounterTrace:
    """Simulated pairwise encounter: kinematics plus advisory/event annotations.

    advisories[i] holds the (ownship, intruder) advisories active at step i;
    events[i] is a frozenset of EVENT_* labels raised at step i.
    """

    ownship: AircraftTrack
    intruder: AircraftTrack
    advisories: Tuple[Tuple[Advisory, Advisory], ...]
    events: Tuple[frozenset, ...]

    def __post_init__(self) -> None:
        n = len(self.ownship)
        if len(self.intruder) != n or len(self.advisories) != n or len(self.events) != n:
            raise ValueError("trace series must share one length")
        if self.ownship.dt != self.intruder.dt:
            raise ValueError("tracks must share one dt")

    @property
    def dt(self) -> float:
        return self.ownship.dt

    def __len__(self) -> int:
        return len(self.ownship)

    def has_event(self, flag: str) -> bool:
        return any(flag in ev for ev in self.events)


@dataclass(frozen=True)
class BeliefState:
    """Finite set of weighted state samples representing state uncertainty."""

    particles: Tuple[Tuple[VerticalState, float], ...]

    def __post_init__(self) -> None:
        if not self.particles:
            raise ValueError("belief must contain at least one particle")
        total = 0.0
        for _, w in self.particles:
            if w < 0:
                raise ValueError("particle weights must be >= 0")
            total += w
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"particle weights must sum to 1, got {total}")


def horizontal_tau_xy(
    rel_pos: Tuple[float, float],
    rel_vel: Tuple[float, float],
    separation_threshold: float,
) -> Optional[float]:
    """Time until constant-velocity horizontal range first drops to threshold.

    Returns the smallest t >= 0 with |rel_pos + t * rel_vel| <= threshold,
    0.0 if already inside, or None if the range never reaches the threshold.
    """
    if separation_threshold < 0:
        raise ValueError("separation threshold must be >= 0")
    px, py = rel_pos
    vx, vy = rel_vel
    rr = px * px + py * py
    thr2 = separation_threshold * separation_threshold
    if rr <= thr2:
        return 0.0
    vv = vx * vx + vy * vy
    if vv == 0.0:
        return None
    pv = px * vx + py * vy
    disc = pv * pv - vv * (rr - thr2)
    if disc < 0.0:
        return None
    t = (-pv - math.sqrt(disc)) / vv
    if t < 0.0:
        return None
    return t


def horizontal_tau(g: HorizontalGeometry, separation_threshold: float) -> Optional[float]:
    """Time to loss of horizontal separation under constant velocity.

    Degenerate zero-closure geometry yields None unless the pair is already
    inside the threshold, in which case the result is 0.
    """
    if separation_threshold < 0:
        raise ValueError("separation threshold must be >= 0")
    return horizontal_tau_xy(g.relative_position(), g.relative_velocity(), separation_threshold)


def is_nmac(dz: float, dxy: float) -> bool:
    """NMAC predicate on absolute vertical/horizontal separations (ft)."""
    if dz < 0 or dxy < 0:
        raise ValueError("separations must be absolute (>= 0)")
    return dz < NMAC_VERTICAL_FT and dxy < NMAC_HORIZONTAL_FT


def geometry_from_states(own: AircraftState, intr: AircraftState) -> HorizontalGeometry:
    """Assemble own-frame horizontal geometry from two Cartesian states.

    A stationary ownship is assigned heading +x so bearings stay defined.
    """
    dx = intr.x - own.x
    dy = intr.y - own.y
    r = math.hypot(dx, dy)
    v0 = math.hypot(own.vx, own.vy)
    v1 = math.hypot(intr.vx, intr.vy)
    own_heading = math.atan2(own.vy, own.vx) if v0 > 0 else 0.0
    intr_heading = math.atan2(intr.vy, intr.vx) if v1 > 0 else 0.0
    theta = math.atan2(dy, dx) - own_heading if r > 0 else 0.0
    psi = intr_heading - own_heading
    return HorizontalGeometry(r=r, theta=theta, psi=psi, v0=v0, v1=v1)


def vertical_state_of(
    trace: EncounterTrace,
    step: int,
    a_prev: Advisory,
    separation_threshold: float,
    tau_max: float = 40.0,
) -> VerticalState:
    """Assemble the vertical conflict state at one trace step.

    tau is quantized to whole seconds; a never-converging geometry maps to
    tau_max (beyond-horizon threats are the least-urgent grid state).
    """
    if step < 0 or step >= len(trace):
        raise IndexError(f"step {step} out of range for trace of length {len(trace)}")
    own = trace.ownship.state(step)
    intr = trace.intruder.state(step)
    tau = horizontal_tau_xy(
        (intr.x - own.x, intr.y - own.y),
        (intr.vx - own.vx, intr.vy - own.vy),
        separation_threshold,
    )
    if tau is None:
        tau_q = float(tau_max)
    else:
        tau_q = float(min(round(tau), tau_max))
    return VerticalState(
        h=intr.z - own.z,
        hdot0=own.vz,
        hdot1=intr.vz,
        a_prev=a_prev,
        tau=tau_q,
    )


# ---------------------------------------------------------------------------
# EncounterTrace CSV interchange
# ---------------------------------------------------------------------------

TRACE_CSV_HEADER = [
    "t",
    "x0", "y0", "z0", "vx0", "vy0", "vz0",
    "x1", "y1", "z1", "vx1", "vy1", "vz1",
    "adv0", "adv1", "events",
]


def write_trace_csv(trace: EncounterTrace, path) -> None:
    """Write a trace as CSV with a leading ``# dt=<seconds>`` comment line."""
    with open(path, "w", newline="") as f:
        f.write(f"# dt={trace.dt}\n")
        writer = csv.writer(f)
        writer.writerow(TRACE_CSV_HEADER)
        for i in range(len(trace)):
            own = trace.ownship
            intr = trace.intruder
            a0, a1 = trace.advisories[i]
            writer.writerow(
                [repr(i * trace.dt)]
                + [repr(float(v[i])) for v in (own.x, own.y, own.z, own.vx, own.vy, own.vz)]
                + [repr(float(v[i])) for v in (intr.x, intr.y, intr.z, intr.vx, intr.vy, intr.vz)]
                + [a0.value, a1.value, "|".join(sorted(trace.events[i]))]
            )


def read_trace_csv(path) -> EncounterTrace:
    with open(path, "r", newline="") as f:
        first = f.readline().strip()
        if not first.startswith("# dt="):
            raise ValueError("trace CSV must begin with a '# dt=<seconds>' line")
        dt = float(first.split("=", 1)[1])
        reader = csv.reader(f)
        header = next(reader)
        if header != TRACE_CSV_HEADER:
            raise ValueError("unexpected trace CSV header")
        cols: list = [[] for _ in TRACE_CSV_HEADER]
        for row in reader:
            for c, v in zip(cols, row):
                c.append(v)
    own = AircraftTrack(
        dt,
        *(np.array([float(v) for v in cols[i]]) for i in range(1, 7)),
    )
    intr = AircraftTrack(
        dt,
        *(np.array([float(v) for v in cols[i]]) for i in range(7, 13)),
    )
    advisories = tuple(
        (Advisory(a0), Advisory(a1)) for a0, a1 in zip(cols[13], cols[14])
    )
    events = tuple(
        frozenset(e.split("|")) if e else frozenset() for e in cols[15]
    )
    return EncounterTrace(ownship=own, intruder=intr, advisories=advisories, events=events)
