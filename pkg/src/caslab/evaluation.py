"""Closed-loop encounter simulation and safety-metric estimation.

RNG discipline: a root seed derives independent streams for encounter
generation and for logic/pilot/belief sampling, each advanced per encounter
index, so paired-seed comparisons across equipages see identical nominal
encounters.  Aggregation always runs in encounter-index order to keep
results bit-reproducible regardless of worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .bayesnet import fit_cpts
from .core import (
    EVENT_CROSSING,
    EVENT_NMAC,
    EVENT_RA,
    EVENT_REVERSAL,
    EVENT_STRENGTHEN,
    EVENT_TA,
    NMAC_HORIZONTAL_FT,
    NMAC_VERTICAL_FT,
    Advisory,
    AircraftState,
    AircraftTrack,
    EncounterTrace,
    horizontal_tau_xy,
    is_nmac,
    is_reversal,
    is_strengthening,
)
from .dynamics import PilotModel, sample_response_delay, step_vertical
from .encounters import (
    SEPARATION_THRESHOLD_FT,
    EncounterModel,
    SampledEncounter,
    build_encounter,
    trace_log_likelihood,
)
from .optimizer import LogicTable
from .runtime import (
    DEFAULT_BELIEF_PARTICLES,
    DEFAULT_BELIEF_SIGMA_H_FT,
    DEFAULT_BELIEF_SIGMA_RATE_FPS,
    OnlineContext,
    apply_online_costs,
    coordinate,
    select_action,
    weighted_particle_values,
)
from .tcas import TcasConfig, TcasTracker, Threat

LOGIC_NONE = "none"
LOGIC_TCAS = "tcas"
LOGIC_TABLE = "table"
LOGIC_KINDS = (LOGIC_NONE, LOGIC_TCAS, LOGIC_TABLE)

# Stream tags under the root seed.
STREAM_ENCOUNTER = 0
STREAM_SIMULATE = 1
STREAM_CE_ENCOUNTER = 2
STREAM_CE_SIMULATE = 3


@dataclass(frozen=True)
class Equipage:
    """Per-aircraft logic selection plus the shared response/runtime models."""

    own: str = LOGIC_NONE
    intruder: str = LOGIC_NONE
    pilot: PilotModel = field(default_factory=PilotModel)
    table: Optional[LogicTable] = None
    tcas: TcasConfig = field(default_factory=TcasConfig)
    context: OnlineContext = field(default_factory=OnlineContext)
    belief_sigma_h: float = DEFAULT_BELIEF_SIGMA_H_FT
    belief_sigma_rate: float = DEFAULT_BELIEF_SIGMA_RATE_FPS
    belief_particles: int = DEFAULT_BELIEF_PARTICLES

    def __post_init__(self) -> None:
        for side in (self.own, self.intruder):
            if side not in LOGIC_KINDS:
                raise ValueError(f"unknown logic kind {side!r}")
        if LOGIC_TABLE in (self.own, self.intruder) and self.table is None:
            raise ValueError("table equipage requires a LogicTable")


@dataclass(frozen=True)
class MetricsReport:
    """Estimated event probabilities with standard errors."""

    n: int
    p_nmac: float
    p_nmac_se: float
    alert_rate: float
    strengthen_rate: float
    reversal_rate: float
    crossing_rate: float
    effective_sample_size: float

    def __post_init__(self) -> None:
        for name in ("p_nmac", "alert_rate", "strengthen_rate", "reversal_rate", "crossing_rate"):
            v = getattr(self, name)
            if not (-1e-9 <= v <= 1.0 + 1e-9):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.p_nmac_se < 0 or self.effective_sample_size < 0:
            raise ValueError("standard error and ESS must be >= 0")


@dataclass(frozen=True)
class RiskRatio:
    value: float
    se: float


@dataclass
class _Side:
    logic: str
    advisory: Advisory = Advisory.COC
    complying: bool = False
    delay_remaining: int = 0
    tracker: Optional[TcasTracker] = None


def simulate_encounter(
    enc: SampledEncounter, eq: Equipage, rng: np.random.Generator
) -> EncounterTrace:
    """Run both aircraft through the encounter under their equipped logic.

    Equipped aircraft re-evaluate their logic every step; advisories
    override the nominal vertical command once the (geometric) pilot delay
    elapses.  Unequipped aircraft replay the nominal commands exactly.
    """
    if LOGIC_TABLE in (eq.own, eq.intruder) and enc.dt != 1.0:
        raise ValueError("table logic assumes a 1 s step; encounter dt mismatch")
    n = enc.n_steps
    dt = enc.dt
    pilot_rng, belief_rng = rng.spawn(2)

    headings = (enc.own_heading, enc.int_heading)
    speeds = (enc.own_speed, enc.int_speed)
    pos0 = (enc.own_pos0, enc.int_pos0)
    vxvy = [
        (speeds[i] * math.cos(headings[i]), speeds[i] * math.sin(headings[i]))
        for i in range(2)
    ]
    cmds = (enc.own_vrate, enc.int_vrate)

    sides = []
    for logic in (eq.own, eq.intruder):
        tracker = TcasTracker(eq.tcas) if logic == LOGIC_TCAS else None
        sides.append(_Side(logic=logic, tracker=tracker))

    z = [enc.own_alt0, enc.int_alt0]
    vz = [float(cmds[0][0]), float(cmds[1][0])]

    zs = [np.empty(n + 1), np.empty(n + 1)]
    vzs = [np.empty(n + 1), np.empty(n + 1)]
    advisories: List[Tuple[Advisory, Advisory]] = []
    events: List[frozenset] = []

    both_table = eq.own == LOGIC_TABLE and eq.intruder == LOGIC_TABLE

    for k in range(n):
        states = [
            AircraftState(
                x=pos0[i][0] + vxvy[i][0] * k * dt,
                y=pos0[i][1] + vxvy[i][1] * k * dt,
                z=z[i],
                vx=vxvy[i][0],
                vy=vxvy[i][1],
                vz=vz[i],
            )
            for i in range(2)
        ]
        step_events = set()
        prev_advisories = [sides[i].advisory for i in range(2)]

        constraint = None
        for i in (0, 1):
            side = sides[i]
            me, other = states[i], states[1 - i]
            if side.logic == LOGIC_NONE:
                selected = Advisory.COC
            elif side.logic == LOGIC_TCAS:
                selected, threat = side.tracker.step(me, other)
                if threat is Threat.TA:
                    step_events.add(EVENT_TA)
            else:
                table = eq.table
                tau = horizontal_tau_xy(
                    (other.x - me.x, other.y - me.y),
                    (other.vx - me.vx, other.vy - me.vy),
                    SEPARATION_THRESHOLD_FT,
                )
                tau_q = (
                    float(table.grid.tau_max)
                    if tau is None
                    else float(min(round(tau), table.grid.tau_max))
                )
                # Array-form equivalent of synthesize_belief followed by
                # belief_action_values (same noise stream, same weights).
                n_p = eq.belief_particles
                if eq.belief_sigma_h == 0.0 and eq.belief_sigma_rate == 0.0:
                    noise = np.zeros((n_p, 3))
                else:
                    noise = belief_rng.normal(0.0, 1.0, size=(n_p, 3))
                    noise[:, 0] *= eq.belief_sigma_h
                    noise[:, 1] *= eq.belief_sigma_rate
                    noise[:, 2] *= eq.belief_sigma_rate
                values = weighted_particle_values(
                    table,
                    (other.z - me.z) + noise[:, 0],
                    me.vz + noise[:, 1],
                    other.vz + noise[:, 2],
                    np.full(n_p, tau_q),
                    np.full(n_p, table.grid.advisory_index(side.advisory)),
                    np.full(n_p, 1.0 / n_p),
                )
                ctx = replace(
                    eq.context,
                    own_altitude_agl=me.z,
                    coordination_constraint=constraint if (both_table and i == 1) else
                    eq.context.coordination_constraint,
                )
                values = apply_online_costs(values, ctx, table.grid.advisories)
                selected = select_action(values, side.advisory, table.grid.advisories)
                if both_table and i == 0:
                    msg = coordinate(selected, (0, 1))
                    constraint = msg.constraint if msg else None

            if selected is not side.advisory:
                side.advisory = selected
                if selected is not Advisory.COC:
                    side.delay_remaining = sample_response_delay(eq.pilot, pilot_rng)
                side.complying = False
            if side.advisory is not Advisory.COC and not side.complying:
                if side.delay_remaining == 0:
                    side.complying = True
                else:
                    side.delay_remaining -= 1

        for i in (0, 1):
            new = sides[i].advisory
            prev = prev_advisories[i]
            if new is not prev:
                if prev is Advisory.COC and new is not Advisory.COC:
                    step_events.add(EVENT_RA)
                if is_strengthening(prev, new):
                    step_events.add(EVENT_STRENGTHEN)
                if is_reversal(prev, new):
                    step_events.add(EVENT_REVERSAL)

        # Record sample k, then advance kinematics over [k, k+1).
        h_before = z[1] - z[0]
        for i in (0, 1):
            side = sides[i]
            if side.advisory is not Advisory.COC and side.complying:
                zs[i][k] = z[i]
                vzs[i][k] = vz[i]
                z[i], vz[i] = step_vertical(z[i], vz[i], side.advisory, True, eq.pilot, dt)
            else:
                vz[i] = float(cmds[i][k])
                zs[i][k] = z[i]
                vzs[i][k] = vz[i]
                z[i] = z[i] + vz[i] * dt

        dz = abs(zs[1][k] - zs[0][k])
        dxy = math.hypot(
            (pos0[1][0] + vxvy[1][0] * k * dt) - (pos0[0][0] + vxvy[0][0] * k * dt),
            (pos0[1][1] + vxvy[1][1] * k * dt) - (pos0[0][1] + vxvy[0][1] * k * dt),
        )
        if is_nmac(dz, dxy):
            step_events.add(EVENT_NMAC)
        h_after = z[1] - z[0]
        ra_active = any(s.advisory is not Advisory.COC for s in sides)
        if ra_active and h_before * h_after < 0:
            step_events.add(EVENT_CROSSING)

        advisories.append((sides[0].advisory, sides[1].advisory))
        events.append(frozenset(step_events))

    # Terminal sample.
    for i in (0, 1):
        zs[i][n] = z[i]
        vzs[i][n] = vz[i]
    dz = abs(z[1] - z[0])
    dxy = math.hypot(
        (pos0[1][0] + vxvy[1][0] * n * dt) - (pos0[0][0] + vxvy[0][0] * n * dt),
        (pos0[1][1] + vxvy[1][1] * n * dt) - (pos0[0][1] + vxvy[0][1] * n * dt),
    )
    final_events = set()
    if is_nmac(dz, dxy):
        final_events.add(EVENT_NMAC)
    advisories.append(advisories[-1])
    events.append(frozenset(final_events))

    tracks = []
    for i in (0, 1):
        t = np.arange(n + 1) * dt
        tracks.append(
            AircraftTrack(
                dt=dt,
                x=pos0[i][0] + vxvy[i][0] * t,
                y=pos0[i][1] + vxvy[i][1] * t,
                z=zs[i],
                vx=np.full(n + 1, vxvy[i][0]),
                vy=np.full(n + 1, vxvy[i][1]),
                vz=vzs[i],
            )
        )
    return EncounterTrace(
        ownship=tracks[0],
        intruder=tracks[1],
        advisories=tuple(advisories),
        events=tuple(events),
    )


def trace_severity(trace: EncounterTrace) -> float:
    """Minimum 3-D separation scaled by the NMAC thresholds (< 1 iff NMAC)."""
    dz = np.abs(trace.intruder.z - trace.ownship.z) / NMAC_VERTICAL_FT
    dxy = (
        np.hypot(
            trace.intruder.x - trace.ownship.x,
            trace.intruder.y - trace.ownship.y,
        )
        / NMAC_HORIZONTAL_FT
    )
    return float(np.min(np.maximum(dz, dxy)))


@dataclass(frozen=True)
class EncounterOutcome:
    nmac: bool
    alert: bool
    strengthen: bool
    reversal: bool
    crossing: bool
    severity: float
    log_weight: float


def _outcome_of(trace: EncounterTrace, log_weight: float) -> EncounterOutcome:
    return EncounterOutcome(
        nmac=trace.has_event(EVENT_NMAC),
        alert=trace.has_event(EVENT_RA),
        strengthen=trace.has_event(EVENT_STRENGTHEN),
        reversal=trace.has_event(EVENT_REVERSAL),
        crossing=trace.has_event(EVENT_CROSSING),
        severity=trace_severity(trace),
        log_weight=log_weight,
    )


def run_indexed_encounter(
    model: EncounterModel,
    eq: Equipage,
    seed: int,
    index: int,
    nominal: Optional[EncounterModel] = None,
    enc_stream: int = STREAM_ENCOUNTER,
    sim_stream: int = STREAM_SIMULATE,
) -> Tuple[SampledEncounter, EncounterTrace, EncounterOutcome]:
    """Build and simulate the index-th encounter under the seed discipline."""
    enc_rng = np.random.default_rng([seed, enc_stream, index])
    enc = build_encounter(model, enc_rng)
    sim_rng = np.random.default_rng([seed, sim_stream, index])
    trace = simulate_encounter(enc, eq, sim_rng)
    if nominal is None:
        logw = 0.0
    else:
        logw = trace_log_likelihood(nominal, enc) - trace_log_likelihood(model, enc)
    return enc, trace, _outcome_of(trace, logw)


_POOL_CONTEXT: dict = {}


def _pool_init(model, eq, seed, nominal):
    _POOL_CONTEXT["args"] = (model, eq, seed, nominal)


def _pool_run(index: int) -> EncounterOutcome:
    model, eq, seed, nominal = _POOL_CONTEXT["args"]
    return run_indexed_encounter(model, eq, seed, index, nominal)[2]


def _run_batch(
    model: EncounterModel,
    eq: Equipage,
    n: int,
    seed: int,
    workers: int,
    nominal: Optional[EncounterModel],
) -> List[EncounterOutcome]:
    if n < 1:
        raise ValueError("n must be >= 1")
    if workers <= 1:
        return [run_indexed_encounter(model, eq, seed, i, nominal)[2] for i in range(n)]
    with ProcessPoolExecutor(
        max_workers=workers, initializer=_pool_init, initargs=(model, eq, seed, nominal)
    ) as pool:
        return list(pool.map(_pool_run, range(n), chunksize=max(1, n // (workers * 8))))


def _report(outcomes: Sequence[EncounterOutcome], weighted: bool) -> MetricsReport:
    n = len(outcomes)
    w = np.array([math.exp(o.log_weight) for o in outcomes])
    flags = {
        "nmac": np.array([o.nmac for o in outcomes], dtype=float),
        "alert": np.array([o.alert for o in outcomes], dtype=float),
        "strengthen": np.array([o.strengthen for o in outcomes], dtype=float),
        "reversal": np.array([o.reversal for o in outcomes], dtype=float),
        "crossing": np.array([o.crossing for o in outcomes], dtype=float),
    }
    if weighted:
        # Unnormalized importance-sampling estimator (divide by n, not sum w).
        est = {k: float(np.sum(w * v) / n) for k, v in flags.items()}
        wi = w * flags["nmac"]
        se = float(np.std(wi, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        sw2 = float(np.sum(w * w))
        ess = float(np.sum(w) ** 2 / sw2) if sw2 > 0 else 0.0
    else:
        est = {k: float(np.mean(v)) for k, v in flags.items()}
        p = est["nmac"]
        se = math.sqrt(p * (1.0 - p) / n)
        ess = float(n)
    return MetricsReport(
        n=n,
        p_nmac=est["nmac"],
        p_nmac_se=se,
        alert_rate=est["alert"],
        strengthen_rate=est["strengthen"],
        reversal_rate=est["reversal"],
        crossing_rate=est["crossing"],
        effective_sample_size=ess,
    )


def estimate_metrics(
    model: EncounterModel, eq: Equipage, n: int, seed: int, workers: int = 1
) -> MetricsReport:
    """Plain Monte Carlo estimate over n independent encounters."""
    return _report(_run_batch(model, eq, n, seed, workers, nominal=None), weighted=False)


def risk_ratio(equipped: MetricsReport, unequipped: MetricsReport) -> RiskRatio:
    """Equipped-to-unequipped NMAC probability ratio with delta-method SE."""
    if unequipped.p_nmac <= 0.0:
        raise ValueError(
            "risk ratio undefined: unequipped run produced no NMACs "
            "(insufficient unequipped NMAC count)"
        )
    r = equipped.p_nmac / unequipped.p_nmac
    if equipped.p_nmac > 0.0:
        se = r * math.sqrt(
            (equipped.p_nmac_se / equipped.p_nmac) ** 2
            + (unequipped.p_nmac_se / unequipped.p_nmac) ** 2
        )
    else:
        se = equipped.p_nmac_se / unequipped.p_nmac
    return RiskRatio(value=r, se=se)


def is_estimate(
    nominal: EncounterModel,
    proposal: EncounterModel,
    eq: Equipage,
    n: int,
    seed: int,
    workers: int = 1,
) -> MetricsReport:
    """Importance-sampled estimate: sample the proposal, reweight to nominal.

    Requires the proposal to share bins and structure with the nominal model
    so bin-level likelihood ratios are exact.
    """
    _check_shared_structure(nominal, proposal)
    outcomes = _run_batch(proposal, eq, n, seed, workers, nominal=nominal)
    return _report(outcomes, weighted=True)


def _check_shared_structure(nominal: EncounterModel, proposal: EncounterModel) -> None:
    for a, b in ((nominal.initial_net, proposal.initial_net),
                 (nominal.transition_net, proposal.transition_net)):
        if a.nodes != b.nodes or a.parents != b.parents:
            raise ValueError("proposal must share the nominal model structure")
        for ea, eb in zip(a.bins, b.bins):
            if not np.array_equal(ea, eb):
                raise ValueError("proposal must share the nominal model bins")
    if (nominal.mode, nominal.duration, nominal.dt) != (
        proposal.mode, proposal.duration, proposal.dt,
    ):
        raise ValueError("proposal must share the nominal mode and run geometry")


def cross_entropy_adapt(
    nominal: EncounterModel,
    proposal: EncounterModel,
    eq: Equipage,
    iterations: int,
    n_per_iter: int,
    elite_fraction: float,
    seed: int,
) -> EncounterModel:
    """Adapt the proposal toward failure-heavy regions by elite refitting.

    Each iteration samples the current proposal, ranks encounters by
    severity (NMACs first, ordered by nominal weight, then nearest misses),
    and refits every CPT on the elite set with the Laplace prior.
    """
    _check_shared_structure(nominal, proposal)
    if not (0.0 < elite_fraction <= 1.0):
        raise ValueError("elite_fraction must be in (0, 1]")
    n_elite = int(math.floor(elite_fraction * n_per_iter))
    if n_elite < 1:
        raise ValueError("elite set is empty; raise elite_fraction or n_per_iter")
    current = proposal
    for it in range(iterations):
        encs: List[SampledEncounter] = []
        keys: List[Tuple[float, float]] = []
        for i in range(n_per_iter):
            enc, trace, outcome = run_indexed_encounter(
                current,
                eq,
                seed,
                it * n_per_iter + i,
                nominal=nominal,
                enc_stream=STREAM_CE_ENCOUNTER,
                sim_stream=STREAM_CE_SIMULATE,
            )
            encs.append(enc)
            if outcome.nmac:
                keys.append((0.0, -math.exp(outcome.log_weight)))
            else:
                keys.append((1.0, outcome.severity))
        order = sorted(range(n_per_iter), key=lambda j: keys[j])
        elite = [encs[j] for j in order[:n_elite]]
        initial_data = np.vstack(
            [rec.initial_bins for enc in elite for rec in enc.draws]
        )
        transition_data = np.vstack(
            [rec.transition_rows for enc in elite for rec in enc.draws]
        )
        current = EncounterModel(
            initial_net=fit_cpts(current.initial_net, initial_data, prior_count=1.0),
            transition_net=fit_cpts(current.transition_net, transition_data, prior_count=1.0),
            mode=current.mode,
            duration=current.duration,
            dt=current.dt,
        )
    return current
