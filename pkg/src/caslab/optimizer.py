"""Vertical resolution-advisory MDP and its backward-induction solver.

The state is (relative altitude h, ownship rate, intruder rate, previous
advisory, tau) on a rectilinear grid with a unit time step.  One DP step
enumerates the pilot response branch (complies this step with the geometric
per-step probability, or not) against a three-point sigma discretization of
the intruder's Gaussian acceleration, propagates the continuous variables,
and distributes each successor onto its enclosing grid vertices with
multilinear weights while tau decrements by exactly one.  Values are
expected cumulative rewards; the emitted table stores every state-action
value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import sparse

from .core import ADVISORIES, Advisory, VerticalState, is_reversal, is_strengthening
from .dynamics import IntruderModel, PilotModel, step_vertical

PROB_TOL = 1e-9

# Three-point sigma discretization of a zero-mean Gaussian: matches mean and
# variance with minimal branching.
SIGMA_POINTS = (-1.0, 0.0, 1.0)
SIGMA_WEIGHTS = (1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0)

DEFAULT_H_CUTS = np.array(
    [
        -4000.0, -3000.0, -2000.0, -1600.0, -1200.0, -900.0, -700.0, -500.0,
        -400.0, -300.0, -200.0, -150.0, -100.0, -75.0, -50.0, -25.0, 0.0,
        25.0, 50.0, 75.0, 100.0, 150.0, 200.0, 300.0, 400.0, 500.0, 700.0,
        900.0, 1200.0, 1600.0, 2000.0, 3000.0, 4000.0,
    ]
)

DEFAULT_RATE_CUTS = np.array(
    [
        -2500.0, -2000.0, -1500.0, -1000.0, -500.0, -250.0, 0.0,
        250.0, 500.0, 1000.0, 1500.0, 2000.0, 2500.0,
    ]
) / 60.0  # ft/min -> ft/s


@dataclass(frozen=True)
class Grid:
    """Discretization of the vertical conflict state space.

    Cut points are strictly increasing; h cut points must be symmetric about
    zero.  The tau axis runs 0..tau_max in unit steps and the advisory axis
    is the canonical advisory tuple.
    """

    h_cuts: np.ndarray = field(default_factory=lambda: DEFAULT_H_CUTS.copy())
    hdot0_cuts: np.ndarray = field(default_factory=lambda: DEFAULT_RATE_CUTS.copy())
    hdot1_cuts: np.ndarray = field(default_factory=lambda: DEFAULT_RATE_CUTS.copy())
    tau_max: int = 40
    advisories: Tuple[Advisory, ...] = ADVISORIES

    def __post_init__(self) -> None:
        for name in ("h_cuts", "hdot0_cuts", "hdot1_cuts"):
            cuts = np.asarray(getattr(self, name), dtype=float)
            if cuts.ndim != 1 or len(cuts) < 2:
                raise ValueError(f"{name} needs at least two cut points")
            if np.any(np.diff(cuts) <= 0):
                raise ValueError(f"{name} must be strictly increasing")
            cuts = cuts.copy()
            cuts.setflags(write=False)
            object.__setattr__(self, name, cuts)
        if np.max(np.abs(self.h_cuts + self.h_cuts[::-1])) > 1e-9:
            raise ValueError("h cut points must be symmetric about 0")
        if self.tau_max < 0:
            raise ValueError("tau_max must be >= 0")
        if Advisory.COC not in self.advisories:
            raise ValueError("advisory axis must include COC")

    @property
    def shape(self) -> Tuple[int, int, int, int, int]:
        return (
            len(self.h_cuts),
            len(self.hdot0_cuts),
            len(self.hdot1_cuts),
            self.tau_max + 1,
            len(self.advisories),
        )

    @property
    def n_states(self) -> int:
        return int(np.prod(self.shape))

    def state_index(self, ih: int, i0: int, i1: int, itau: int, ia_prev: int) -> int:
        """Flat state index; axes (h, hdot0, hdot1, tau, a_prev), C order."""
        return int(np.ravel_multi_index((ih, i0, i1, itau, ia_prev), self.shape))

    def state_of_index(self, index: int) -> VerticalState:
        ih, i0, i1, itau, ia = np.unravel_index(index, self.shape)
        return VerticalState(
            h=float(self.h_cuts[ih]),
            hdot0=float(self.hdot0_cuts[i0]),
            hdot1=float(self.hdot1_cuts[i1]),
            a_prev=self.advisories[ia],
            tau=float(itau),
        )

    def advisory_index(self, a: Advisory) -> int:
        return self.advisories.index(a)


@dataclass(frozen=True)
class RewardParams:
    """Penalty magnitudes balancing safety against alerting (all <= 0)."""

    collision_cost: float = -1.0
    alert_cost: float = -0.01
    strengthen_cost: float = -0.005
    reversal_cost: float = -0.02
    nmac_vertical: float = 100.0

    def __post_init__(self) -> None:
        for name in ("collision_cost", "alert_cost", "strengthen_cost", "reversal_cost"):
            if getattr(self, name) > 0:
                raise ValueError(f"{name} must be <= 0")
        if self.collision_cost > self.alert_cost:
            raise ValueError("collision_cost must not exceed alert_cost")
        if self.nmac_vertical <= 0:
            raise ValueError("nmac_vertical must be > 0")


@dataclass(frozen=True)
class LogicTable:
    """Grid axes plus the dense state-action expected-value array.

    values has axes (h, hdot0, hdot1, tau, a_prev, action); values_2d views
    it as value[state_index][advisory].
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        expected = self.grid.shape + (len(self.grid.advisories),)
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} != grid shape {expected}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("table values must be finite")

    @property
    def values_2d(self) -> np.ndarray:
        return self.values.reshape(self.grid.n_states, len(self.grid.advisories))


def reward(s: VerticalState, a: Advisory, params: RewardParams) -> float:
    """One-step reward: collision cost at tau=0 plus advisory-change costs."""
    r = 0.0
    if s.tau == 0 and abs(s.h) < params.nmac_vertical:
        r += params.collision_cost
    if a is not Advisory.COC and s.a_prev is Advisory.COC:
        r += params.alert_cost
    if is_strengthening(s.a_prev, a):
        r += params.strengthen_cost
    if is_reversal(s.a_prev, a):
        r += params.reversal_cost
    return r


def _advisory_cost_matrix(advisories: Sequence[Advisory], params: RewardParams) -> np.ndarray:
    """cost[a_prev, a]: alert/strengthen/reversal terms of the reward."""
    na = len(advisories)
    cost = np.zeros((na, na))
    for ip, ap in enumerate(advisories):
        for ia, a in enumerate(advisories):
            c = 0.0
            if a is not Advisory.COC and ap is Advisory.COC:
                c += params.alert_cost
            if is_strengthening(ap, a):
                c += params.strengthen_cost
            if is_reversal(ap, a):
                c += params.reversal_cost
            cost[ip, ia] = c
    return cost


def _locate(x: float, cuts: np.ndarray) -> Tuple[int, float]:
    """Cell index and fractional position of a clamped scalar coordinate."""
    if x <= cuts[0]:
        return 0, 0.0
    if x >= cuts[-1]:
        return len(cuts) - 2, 1.0
    i = int(np.searchsorted(cuts, x, side="right")) - 1
    i = min(i, len(cuts) - 2)
    return i, (x - cuts[i]) / (cuts[i + 1] - cuts[i])


def transition_distribution(
    s: VerticalState,
    a: Advisory,
    pilot: PilotModel,
    intruder: IntruderModel,
    grid: Grid,
) -> List[Tuple[int, float]]:
    """Distribution over successor grid states for one state-action pair.

    Enumerates pilot response (complies this step w.p. p, or not) against
    the intruder sigma points, propagates one unit step, decrements tau, and
    spreads each continuous successor over its enclosing vertices.  Weights
    are aggregated per vertex and sum to 1.
    """
    if s.tau < 1:
        raise ValueError("tau=0 states are terminal")
    p = pilot.response_probability
    pilot_branches = [(True, p)]
    if p < 1.0:
        pilot_branches.append((False, 1.0 - p))
    itau_next = int(round(s.tau)) - 1
    ia_prev_next = grid.advisory_index(a)
    acc: Dict[Tuple[int, int, int], float] = {}
    for complying, w_pilot in pilot_branches:
        _, vz0p = step_vertical(0.0, s.hdot0, a, complying, pilot, 1.0)
        dz0 = 0.5 * (s.hdot0 + vz0p)
        for u, w_sig in zip(SIGMA_POINTS, SIGMA_WEIGHTS):
            vz1p = s.hdot1 + u * intruder.sigma_accel
            dz1 = 0.5 * (s.hdot1 + vz1p)
            hp = s.h + dz1 - dz0
            w_branch = w_pilot * w_sig
            ih, fh = _locate(hp, grid.h_cuts)
            i0, f0 = _locate(vz0p, grid.hdot0_cuts)
            i1, f1 = _locate(vz1p, grid.hdot1_cuts)
            for bh in (0, 1):
                wh = fh if bh else 1.0 - fh
                if wh == 0.0:
                    continue
                for b0 in (0, 1):
                    w0 = f0 if b0 else 1.0 - f0
                    if w0 == 0.0:
                        continue
                    for b1 in (0, 1):
                        w1 = f1 if b1 else 1.0 - f1
                        if w1 == 0.0:
                            continue
                        key = (ih + bh, i0 + b0, i1 + b1)
                        acc[key] = acc.get(key, 0.0) + w_branch * wh * w0 * w1
    return [
        (grid.state_index(ih, i0, i1, itau_next, ia_prev_next), w)
        for (ih, i0, i1), w in sorted(acc.items())
    ]


def _locate_many(x: np.ndarray, cuts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized _locate with hull clamping."""
    x = np.clip(x, cuts[0], cuts[-1])
    i = np.searchsorted(cuts, x, side="right") - 1
    i = np.clip(i, 0, len(cuts) - 2)
    frac = (x - cuts[i]) / (cuts[i + 1] - cuts[i])
    return i, np.clip(frac, 0.0, 1.0)


def _action_operator(
    a: Advisory,
    grid: Grid,
    pilot: PilotModel,
    intruder: IntruderModel,
) -> sparse.csr_matrix:
    """Sparse one-step operator over the continuous sub-grid for action a.

    Row m holds the successor distribution (over continuous vertices) of the
    m-th (h, hdot0, hdot1) vertex; tau and a_prev advance deterministically
    and are handled by the DP loop.
    """
    nh, n0, n1 = len(grid.h_cuts), len(grid.hdot0_cuts), len(grid.hdot1_cuts)
    H, V0, V1 = np.meshgrid(grid.h_cuts, grid.hdot0_cuts, grid.hdot1_cuts, indexing="ij")
    H, V0, V1 = H.ravel(), V0.ravel(), V1.ravel()
    m = H.size
    src_all: List[np.ndarray] = []
    tgt_all: List[np.ndarray] = []
    w_all: List[np.ndarray] = []
    p = pilot.response_probability
    pilot_branches = [(True, p)]
    if p < 1.0:
        pilot_branches.append((False, 1.0 - p))
    target = a.target_rate_fps
    for complying, w_pilot in pilot_branches:
        if complying and a is not Advisory.COC:
            step = pilot.acceleration * 1.0
            if a.sense > 0:
                vz0p = np.where(V0 >= target, V0, np.minimum(V0 + step, target))
            else:
                vz0p = np.where(V0 <= target, V0, np.maximum(V0 - step, target))
        else:
            vz0p = V0
        dz0 = 0.5 * (V0 + vz0p)
        i0, f0 = _locate_many(vz0p, grid.hdot0_cuts)
        for u, w_sig in zip(SIGMA_POINTS, SIGMA_WEIGHTS):
            vz1p = V1 + u * intruder.sigma_accel
            dz1 = 0.5 * (V1 + vz1p)
            hp = H + dz1 - dz0
            ih, fh = _locate_many(hp, grid.h_cuts)
            i1, f1 = _locate_many(vz1p, grid.hdot1_cuts)
            w_branch = w_pilot * w_sig
            src = np.arange(m)
            for bh in (0, 1):
                wh = fh if bh else 1.0 - fh
                for b0 in (0, 1):
                    w0 = f0 if b0 else 1.0 - f0
                    for b1 in (0, 1):
                        w1 = f1 if b1 else 1.0 - f1
                        w = w_branch * wh * w0 * w1
                        mask = w > 0.0
                        if not np.any(mask):
                            continue
                        tgt = ((ih + bh) * n0 + (i0 + b0)) * n1 + (i1 + b1)
                        src_all.append(src[mask])
                        tgt_all.append(tgt[mask])
                        w_all.append(w[mask])
    mat = sparse.coo_matrix(
        (np.concatenate(w_all), (np.concatenate(src_all), np.concatenate(tgt_all))),
        shape=(m, m),
    )
    return mat.tocsr()


def backward_induction(
    grid: Grid,
    pilot: PilotModel,
    intruder: IntruderModel,
    params: RewardParams,
) -> LogicTable:
    """Solve the finite-horizon MDP exactly on the grid.

    Works backward from tau=0 (terminal rewards) to tau_max; within a tau
    layer every state depends only on the previous layer, so each layer is
    evaluated in one vectorized pass per action.
    """
    nh, n0, n1 = len(grid.h_cuts), len(grid.hdot0_cuts), len(grid.hdot1_cuts)
    na = len(grid.advisories)
    m = nh * n0 * n1
    ntau = grid.tau_max + 1

    cost = _advisory_cost_matrix(grid.advisories, params)
    collision = np.repeat(
        (np.abs(grid.h_cuts) < params.nmac_vertical) * params.collision_cost, n0 * n1
    )

    operators = [
        _action_operator(a, grid, pilot, intruder) for a in grid.advisories
    ]

    # layer[itau] has axes (a_prev, m, action)
    values = np.empty((ntau, na, m, na))
    values[0] = cost[:, None, :] + collision[None, :, None]
    for itau in range(1, ntau):
        prev = values[itau - 1]
        layer = np.empty((na, m, na))
        for ia in range(na):
            best_next = prev[ia].max(axis=1)
            expected = operators[ia].dot(best_next)
            layer[:, :, ia] = cost[:, ia, None] + expected[None, :]
        values[itau] = layer
        if not np.all(np.isfinite(layer)):
            raise OverflowError(f"non-finite values at tau={itau}")

    # (tau, a_prev, m, action) -> (h, hdot0, hdot1, tau, a_prev, action)
    table = values.reshape(ntau, na, nh, n0, n1, na).transpose(2, 3, 4, 0, 1, 5)
    return LogicTable(grid=grid, values=np.ascontiguousarray(table))


def policy_slice(
    table: LogicTable, fixed: Dict[str, object]
) -> np.ndarray:
    """Argmax advisory over (tau, h) at fixed rates and previous advisory.

    fixed maps 'hdot0'/'hdot1' to on-grid rates and 'a_prev' to an Advisory.
    Ties break toward the canonical advisory order (COC first, weaker before
    stronger, down before up).  Returns an object array [itau, ih].
    """
    grid = table.grid
    try:
        i0 = _exact_cut_index(grid.hdot0_cuts, float(fixed["hdot0"]))
        i1 = _exact_cut_index(grid.hdot1_cuts, float(fixed["hdot1"]))
    except KeyError as exc:
        raise KeyError(f"policy_slice requires fixed value for {exc}") from exc
    a_prev = fixed["a_prev"]
    if not isinstance(a_prev, Advisory):
        raise TypeError("a_prev must be an Advisory")
    ia = grid.advisory_index(a_prev)
    vals = table.values[:, i0, i1, :, ia, :]  # (h, tau, action)
    best = np.argmax(vals, axis=2)  # first maximum wins: canonical tie-break
    ntau = grid.tau_max + 1
    out = np.empty((ntau, len(grid.h_cuts)), dtype=object)
    for itau in range(ntau):
        for ih in range(len(grid.h_cuts)):
            out[itau, ih] = grid.advisories[best[ih, itau]]
    return out


def _exact_cut_index(cuts: np.ndarray, value: float) -> int:
    idx = np.nonzero(cuts == value)[0]
    if len(idx) == 0:
        raise ValueError(f"value {value} is not a grid cut point")
    return int(idx[0])
