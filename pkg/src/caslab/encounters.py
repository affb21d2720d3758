"""Bayesian-network airspace encounter models.

An encounter model pairs an initial-state network with a dynamic (two-slice)
network.  Correlated models draw both aircraft jointly; uncorrelated models
draw two independent samples and combine them with a horizontal placement
rule.  Every CPT draw is recorded so trace likelihoods (and importance
weights) can be recomputed exactly at the bin level.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .bayesnet import (
    Assignment,
    DiscreteBayesNet,
    _draw_bin,
    log_prob_bins,
    net_from_dict,
    net_to_dict,
)
from .core import NMAC_HORIZONTAL_FT, AircraftTrack, horizontal_tau_xy

NEXT_SUFFIX = "_next"

CORRELATED = "correlated"
UNCORRELATED = "uncorrelated"

# Variable names the encounter assembly expects in the initial net.
VAR_ALT = "alt_layer"
VAR_OWN_VRATE = "own_vrate"
VAR_INT_VRATE = "int_vrate"
VAR_CLOSURE = "closure"
VAR_TAU0 = "tau0"
REQUIRED_VARS = (VAR_ALT, VAR_OWN_VRATE, VAR_INT_VRATE, VAR_CLOSURE, VAR_TAU0)

# Loss-of-separation threshold tying encounter geometry to the grid's tau,
# and the tau ceiling the uncorrelated placement must reach.
SEPARATION_THRESHOLD_FT = NMAC_HORIZONTAL_FT
PLACEMENT_TAU_MAX_S = 40.0
PLACEMENT_MAX_RETRIES = 100

MODEL_SCHEMA_VERSION = 1


class EncounterError(RuntimeError):
    pass


class LikelihoodSupportWarning(UserWarning):
    """A trace contains a bin with zero probability under the scoring model."""


@dataclass(frozen=True)
class EncounterModel:
    """Initial-state net, two-slice transition net, and run geometry."""

    initial_net: DiscreteBayesNet
    transition_net: DiscreteBayesNet
    mode: str
    duration: float
    dt: float

    def __post_init__(self) -> None:
        if self.mode not in (CORRELATED, UNCORRELATED):
            raise ValueError(f"mode must be correlated or uncorrelated, got {self.mode!r}")
        if self.dt <= 0 or self.duration <= 0:
            raise ValueError("duration and dt must be > 0")
        steps = self.duration / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("duration must be an integral number of steps")
        n = len(self.initial_net.nodes)
        if self.transition_net.nodes[:n] != self.initial_net.nodes:
            raise ValueError("transition net t-variables must mirror the initial net")
        for i in range(n):
            if not np.array_equal(self.transition_net.bins[i], self.initial_net.bins[i]):
                raise ValueError("transition net t-variable bins must match the initial net")
        for j in range(n, len(self.transition_net.nodes)):
            name = self.transition_net.nodes[j]
            if not name.endswith(NEXT_SUFFIX):
                raise ValueError(f"extra transition node {name!r} must end with {NEXT_SUFFIX!r}")
            base = name[: -len(NEXT_SUFFIX)]
            if base not in self.initial_net.nodes:
                raise ValueError(f"next-slice node {name!r} has no base variable")
            bi = self.initial_net.node_index(base)
            if not np.array_equal(self.transition_net.bins[j], self.initial_net.bins[bi]):
                raise ValueError(f"next-slice node {name!r} bins must match its base variable")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def next_node_map(self) -> Tuple[Tuple[int, int], ...]:
        """Pairs of (transition-net node index, initial-net base index)."""
        n = len(self.initial_net.nodes)
        pairs = []
        for j in range(n, len(self.transition_net.nodes)):
            base = self.transition_net.nodes[j][: -len(NEXT_SUFFIX)]
            pairs.append((j, self.initial_net.node_index(base)))
        return tuple(pairs)


@dataclass(frozen=True)
class DrawRecord:
    """Bin indices of every CPT draw made for one trajectory sample."""

    initial_bins: np.ndarray
    transition_rows: np.ndarray


@dataclass(frozen=True)
class SampledEncounter:
    """Kinematic commands and initial geometry for one sampled encounter.

    Vertical-rate commands are piecewise constant over each step; turn-rate
    commands are carried for interface completeness and are zero under the
    bundled models.  log_probability accumulates the log of every CPT draw.
    """

    dt: float
    n_steps: int
    own_vrate: np.ndarray
    int_vrate: np.ndarray
    own_turn: np.ndarray
    int_turn: np.ndarray
    own_speed: float
    int_speed: float
    own_pos0: Tuple[float, float]
    int_pos0: Tuple[float, float]
    own_heading: float
    int_heading: float
    own_alt0: float
    int_alt0: float
    log_probability: float
    mode: str
    draws: Tuple[DrawRecord, ...]

    def __post_init__(self) -> None:
        if not math.isfinite(self.log_probability):
            raise ValueError("sample log-probability must be finite")
        for name in ("own_vrate", "int_vrate", "own_turn", "int_turn"):
            if len(getattr(self, name)) != self.n_steps:
                raise ValueError("command series length must equal duration/dt")


def sample_initial(model: EncounterModel, rng: np.random.Generator) -> Assignment:
    """Ancestral draw of the initial-state network."""
    asn, _ = _sample_with_logp(model.initial_net, rng)
    return asn


def sample_transition(
    model: EncounterModel, current: Assignment, rng: np.random.Generator
) -> Assignment:
    """Propagate an assignment one step through the dynamic network."""
    nxt, _, _ = _transition_with_logp(model, current, rng)
    return nxt


def _sample_with_logp(
    net: DiscreteBayesNet,
    rng: np.random.Generator,
    given_bins: Optional[Dict[int, int]] = None,
) -> Tuple[Assignment, float]:
    """Ancestral sampling that accumulates the log-probability of its draws."""
    if not net.is_fitted:
        raise ValueError("network has no fitted CPTs")
    given_bins = given_bins or {}
    n = len(net.nodes)
    bins = np.zeros(n, dtype=int)
    values = np.full(n, np.nan)
    logp = 0.0
    for i in range(n):
        if i in given_bins:
            bins[i] = given_bins[i]
            continue
        row = net.parent_row_index(i, bins)
        probs = net.cpt[i][row]
        b = _draw_bin(probs, rng)
        bins[i] = b
        logp += math.log(probs[b])
        lo, hi = net.bins[i][b], net.bins[i][b + 1]
        values[i] = rng.uniform(lo, hi) if hi > lo else lo
    return Assignment(bins=bins, values=values), logp


def _transition_with_logp(
    model: EncounterModel, current: Assignment, rng: np.random.Generator
) -> Tuple[Assignment, float, np.ndarray]:
    """One dynamic-net step; returns (next assignment, logp, full bin row)."""
    n = len(model.initial_net.nodes)
    given = {i: int(current.bins[i]) for i in range(n)}
    asn, logp = _sample_with_logp(model.transition_net, rng, given)
    bins = current.bins.copy()
    values = current.values.copy()
    for j, base in model.next_node_map:
        bins[base] = asn.bins[j]
        values[base] = asn.values[j]
    return Assignment(bins=bins, values=values), logp, asn.bins.copy()


def _sample_trajectory(
    model: EncounterModel, rng: np.random.Generator
) -> Tuple[Assignment, DrawRecord, float, np.ndarray, np.ndarray]:
    """Sample one full trajectory: initial state plus a command chain."""
    init, logp = _sample_with_logp(model.initial_net, rng)
    own_idx = model.initial_net.node_index(VAR_OWN_VRATE)
    int_idx = model.initial_net.node_index(VAR_INT_VRATE)
    n_steps = model.n_steps
    own_cmd = np.empty(n_steps)
    int_cmd = np.empty(n_steps)
    own_cmd[0] = init.values[own_idx]
    int_cmd[0] = init.values[int_idx]
    rows = np.zeros((n_steps - 1, len(model.transition_net.nodes)), dtype=int)
    current = init
    for k in range(1, n_steps):
        current, lp, row = _transition_with_logp(model, current, rng)
        logp += lp
        rows[k - 1] = row
        own_cmd[k] = current.values[own_idx]
        int_cmd[k] = current.values[int_idx]
    record = DrawRecord(initial_bins=init.bins.copy(), transition_rows=rows)
    return init, record, logp, own_cmd, int_cmd


def build_encounter(model: EncounterModel, rng: np.random.Generator) -> SampledEncounter:
    """Sample a complete encounter.

    Correlated mode draws one joint trajectory pair on a head-on collision
    course whose separation is lost at the sampled tau0.  Uncorrelated mode
    draws two independent trajectories and translates the intruder so the
    minimum horizontal range in the window hits a uniformly drawn miss
    distance at a uniformly drawn time.
    """
    for name in REQUIRED_VARS:
        if name not in model.initial_net.nodes:
            raise EncounterError(f"model is missing required variable {name!r}")
    n_steps = model.n_steps
    zeros = np.zeros(n_steps)
    if model.mode == CORRELATED:
        init, record, logp, own_cmd, int_cmd = _sample_trajectory(model, rng)
        vals = init.values
        closure = float(vals[model.initial_net.node_index(VAR_CLOSURE)])
        tau0 = float(vals[model.initial_net.node_index(VAR_TAU0)])
        alt = float(vals[model.initial_net.node_index(VAR_ALT)])
        r0 = SEPARATION_THRESHOLD_FT + closure * tau0
        return SampledEncounter(
            dt=model.dt,
            n_steps=n_steps,
            own_vrate=own_cmd,
            int_vrate=int_cmd,
            own_turn=zeros,
            int_turn=zeros.copy(),
            own_speed=closure / 2.0,
            int_speed=closure / 2.0,
            own_pos0=(0.0, 0.0),
            int_pos0=(r0, 0.0),
            own_heading=0.0,
            int_heading=math.pi,
            own_alt0=alt,
            int_alt0=alt,
            log_probability=logp,
            mode=model.mode,
            draws=(record,),
        )

    # Uncorrelated: ownship variables from draw A, intruder variables from an
    # independent draw B, then horizontal placement.
    initA, recA, lpA, own_cmd, _ = _sample_trajectory(model, rng)
    initB, recB, lpB, _, int_cmd = _sample_trajectory(model, rng)
    own_speed = float(initA.values[model.initial_net.node_index(VAR_CLOSURE)]) / 2.0
    int_speed = float(initB.values[model.initial_net.node_index(VAR_CLOSURE)]) / 2.0
    own_alt = float(initA.values[model.initial_net.node_index(VAR_ALT)])
    int_alt = float(initB.values[model.initial_net.node_index(VAR_ALT)])
    int_heading = math.pi
    vr = (-int_speed - own_speed, 0.0)
    speed = math.hypot(*vr)
    for _ in range(PLACEMENT_MAX_RETRIES):
        t_star = rng.uniform(0.0, model.duration)
        miss = rng.uniform(0.0, NMAC_HORIZONTAL_FT)
        if speed > 0.0:
            ux, uy = vr[0] / speed, vr[1] / speed
            nhat = (-uy, ux)
        else:
            nhat = (1.0, 0.0)
        rel0 = (nhat[0] * miss - vr[0] * t_star, nhat[1] * miss - vr[1] * t_star)
        ok = False
        for k in range(n_steps + 1):
            t = k * model.dt
            tau = horizontal_tau_xy(
                (rel0[0] + vr[0] * t, rel0[1] + vr[1] * t), vr, SEPARATION_THRESHOLD_FT
            )
            if tau is not None and tau <= PLACEMENT_TAU_MAX_S:
                ok = True
                break
        if ok:
            return SampledEncounter(
                dt=model.dt,
                n_steps=n_steps,
                own_vrate=own_cmd,
                int_vrate=int_cmd,
                own_turn=zeros,
                int_turn=zeros.copy(),
                own_speed=own_speed,
                int_speed=int_speed,
                own_pos0=(0.0, 0.0),
                int_pos0=rel0,
                own_heading=0.0,
                int_heading=int_heading,
                own_alt0=own_alt,
                int_alt0=int_alt,
                log_probability=lpA + lpB,
                mode=model.mode,
                draws=(recA, recB),
            )
    raise EncounterError(
        f"uncorrelated placement failed after {PLACEMENT_MAX_RETRIES} retries"
    )


def trace_log_likelihood(model: EncounterModel, enc: SampledEncounter) -> float:
    """Bin-level log-likelihood of a sampled encounter under a model.

    Within-bin densities are uniform and cancel between models sharing the
    same bins, so only CPT bin probabilities are scored.  A zero-probability
    bin yields -inf and raises LikelihoodSupportWarning.
    """
    expected_records = 1 if model.mode == CORRELATED else 2
    if len(enc.draws) != expected_records:
        raise ValueError("encounter draw records do not match the model mode")
    if enc.n_steps != model.n_steps:
        raise ValueError("encounter length does not match the model duration")
    next_nodes = [j for j, _ in model.next_node_map]
    total = 0.0
    for record in enc.draws:
        if record.transition_rows.shape != (
            model.n_steps - 1,
            len(model.transition_net.nodes),
        ):
            raise ValueError("transition rows do not match the model networks")
        lp = log_prob_bins(model.initial_net, record.initial_bins)
        for row in record.transition_rows:
            if not math.isfinite(lp):
                break
            lp += log_prob_bins(model.transition_net, row, nodes=next_nodes)
        if not math.isfinite(lp):
            warnings.warn(
                "encounter contains a zero-probability bin under the scoring model",
                LikelihoodSupportWarning,
            )
            return -math.inf
        total += lp
    return total


def nominal_tracks(enc: SampledEncounter) -> Tuple[AircraftTrack, AircraftTrack]:
    """Integrate the nominal (logic-free) kinematics of both aircraft."""
    return (
        _integrate_track(
            enc, enc.own_pos0, enc.own_heading, enc.own_speed, enc.own_alt0, enc.own_vrate
        ),
        _integrate_track(
            enc, enc.int_pos0, enc.int_heading, enc.int_speed, enc.int_alt0, enc.int_vrate
        ),
    )


def _integrate_track(
    enc: SampledEncounter,
    pos0: Tuple[float, float],
    heading: float,
    speed: float,
    alt0: float,
    vrate: np.ndarray,
) -> AircraftTrack:
    n = enc.n_steps
    t = np.arange(n + 1) * enc.dt
    vx = speed * math.cos(heading)
    vy = speed * math.sin(heading)
    z = np.empty(n + 1)
    z[0] = alt0
    z[1:] = alt0 + np.cumsum(vrate * enc.dt)
    vz = np.empty(n + 1)
    vz[:n] = vrate
    vz[n] = vrate[-1]
    return AircraftTrack(
        dt=enc.dt,
        x=pos0[0] + vx * t,
        y=pos0[1] + vy * t,
        z=z,
        vx=np.full(n + 1, vx),
        vy=np.full(n + 1, vy),
        vz=vz,
    )


# ---------------------------------------------------------------------------
# Bundled model definitions
# ---------------------------------------------------------------------------

# Vertical-rate bins shared by the bundled models (ft/s; +/-3000 fpm hull).
_VRATE_EDGES = np.array([-50.0, -1000.0 / 60.0, -250.0 / 60.0, 250.0 / 60.0, 1000.0 / 60.0, 50.0])

_VRATE_DRIFT = np.array(
    [
        [0.85, 0.15, 0.00, 0.00, 0.00],
        [0.08, 0.80, 0.12, 0.00, 0.00],
        [0.00, 0.08, 0.84, 0.08, 0.00],
        [0.00, 0.00, 0.12, 0.80, 0.08],
        [0.00, 0.00, 0.00, 0.15, 0.85],
    ]
)


def default_structure() -> Tuple[DiscreteBayesNet, DiscreteBayesNet]:
    """Unfitted default vertical-study networks.

    Initial net: altitude layer, both vertical rates (conditioned on the
    layer), horizontal closure speed (conditioned on the layer), and initial
    tau.  Transition net: next-step vertical rates conditioned on the current
    rates.
    """
    nodes = REQUIRED_VARS
    parents = ((), (0,), (0,), (0,), ())
    bins = (
        np.array([1000.0, 5000.0, 15000.0, 30000.0]),
        _VRATE_EDGES,
        _VRATE_EDGES,
        np.array([100.0, 300.0, 600.0, 1000.0]),
        np.array([10.0, 20.0, 30.0, 40.0]),
    )
    initial = DiscreteBayesNet(nodes=nodes, parents=parents, bins=bins)
    t_nodes = nodes + (VAR_OWN_VRATE + NEXT_SUFFIX, VAR_INT_VRATE + NEXT_SUFFIX)
    t_parents = parents + ((1,), (2,))
    t_bins = bins + (_VRATE_EDGES, _VRATE_EDGES)
    transition = DiscreteBayesNet(nodes=t_nodes, parents=t_parents, bins=t_bins)
    return initial, transition


def default_correlated_model(duration: float = 50.0, dt: float = 1.0) -> EncounterModel:
    """Hand-parameterized conflict-forced correlated model.

    Both aircraft start coaltitude on a head-on course losing horizontal
    separation at the sampled tau0; vertical rates wander by the sticky
    drift CPT, so unresolved encounters frequently end in NMACs.
    """
    initial_s, transition_s = default_structure()
    rate_rows = np.array(
        [
            [0.10, 0.17, 0.46, 0.17, 0.10],
            [0.07, 0.15, 0.56, 0.15, 0.07],
            [0.05, 0.12, 0.66, 0.12, 0.05],
        ]
    )
    initial = DiscreteBayesNet(
        nodes=initial_s.nodes,
        parents=initial_s.parents,
        bins=initial_s.bins,
        cpt=(
            np.array([[0.35, 0.45, 0.20]]),
            rate_rows,
            rate_rows.copy(),
            np.array([[0.50, 0.40, 0.10], [0.30, 0.50, 0.20], [0.15, 0.45, 0.40]]),
            np.array([[0.30, 0.40, 0.30]]),
        ),
    )
    transition = DiscreteBayesNet(
        nodes=transition_s.nodes,
        parents=transition_s.parents,
        bins=transition_s.bins,
        cpt=(
            np.array([[0.35, 0.45, 0.20]]),
            rate_rows,
            rate_rows.copy(),
            np.array([[0.50, 0.40, 0.10], [0.30, 0.50, 0.20], [0.15, 0.45, 0.40]]),
            np.array([[0.30, 0.40, 0.30]]),
            _VRATE_DRIFT,
            _VRATE_DRIFT.copy(),
        ),
    )
    return EncounterModel(
        initial_net=initial,
        transition_net=transition,
        mode=CORRELATED,
        duration=duration,
        dt=dt,
    )


def default_uncorrelated_model(duration: float = 50.0, dt: float = 1.0) -> EncounterModel:
    base = default_correlated_model(duration=duration, dt=dt)
    return EncounterModel(
        initial_net=base.initial_net,
        transition_net=base.transition_net,
        mode=UNCORRELATED,
        duration=duration,
        dt=dt,
    )


def toy_two_bin_model(
    p_conflict: float = 0.05, duration: float = 30.0, dt: float = 1.0
) -> EncounterModel:
    """Analytically enumerable toy model.

    Both aircraft hold near-level rates (|h| stays < 60 ft), so an NMAC
    occurs exactly when tau0 lands in its first bin (separation lost inside
    the simulation window): p_nmac = p_conflict.
    """
    if not (0.0 < p_conflict < 1.0):
        raise ValueError("p_conflict must be in (0, 1)")
    nodes = REQUIRED_VARS
    parents = ((), (), (), (), ())
    bins = (
        np.array([5000.0, 5000.0]),
        np.array([-1.0, 1.0]),
        np.array([-1.0, 1.0]),
        np.array([200.0, 300.0]),
        np.array([10.0, duration, duration + 20.0]),
    )
    one = np.array([[1.0]])
    initial = DiscreteBayesNet(
        nodes=nodes,
        parents=parents,
        bins=bins,
        cpt=(one, one.copy(), one.copy(), one.copy(), np.array([[p_conflict, 1.0 - p_conflict]])),
    )
    t_nodes = nodes + (VAR_OWN_VRATE + NEXT_SUFFIX, VAR_INT_VRATE + NEXT_SUFFIX)
    t_parents = parents + ((1,), (2,))
    t_bins = bins + (np.array([-1.0, 1.0]), np.array([-1.0, 1.0]))
    transition = DiscreteBayesNet(
        nodes=t_nodes,
        parents=t_parents,
        bins=t_bins,
        cpt=(
            one,
            one.copy(),
            one.copy(),
            one.copy(),
            np.array([[p_conflict, 1.0 - p_conflict]]),
            one.copy(),
            one.copy(),
        ),
    )
    return EncounterModel(
        initial_net=initial,
        transition_net=transition,
        mode=CORRELATED,
        duration=duration,
        dt=dt,
    )


# ---------------------------------------------------------------------------
# Model file interchange
# ---------------------------------------------------------------------------


def model_to_dict(model: EncounterModel) -> dict:
    return {
        "schema_version": MODEL_SCHEMA_VERSION,
        "mode": model.mode,
        "duration": model.duration,
        "dt": model.dt,
        "initial_net": net_to_dict(model.initial_net),
        "transition_net": net_to_dict(model.transition_net),
    }


def model_from_dict(d: dict) -> EncounterModel:
    version = d.get("schema_version")
    if version != MODEL_SCHEMA_VERSION:
        raise ValueError(f"unsupported model schema version: {version}")
    return EncounterModel(
        initial_net=net_from_dict(d["initial_net"]),
        transition_net=net_from_dict(d["transition_net"]),
        mode=d["mode"],
        duration=float(d["duration"]),
        dt=float(d["dt"]),
    )


def write_model_file(model: EncounterModel, path) -> None:
    with open(path, "w") as f:
        json.dump(model_to_dict(model), f, indent=2)
        f.write("\n")


def read_model_file(path) -> EncounterModel:
    with open(path) as f:
        return model_from_dict(json.load(f))
