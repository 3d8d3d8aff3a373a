"""Finite MDP built from a REM (states, transitions, rewards) and a tabular
Policy Iteration solver, plus the versioned policy artifact (POLv1)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .rem import Rem, _fmt_num, _parse_header_fields

RLF_PENALTY = -1000.0
SWITCH_COST = -1.0
WRONG_BEAM_PENALTY = -1000.0

DEFAULT_GAMMA = 0.9
DEFAULT_TOL = 1e-6
EVAL_ITER_CAP = 100_000
IMPROVE_ROUND_CAP = 1000


class NonConvergenceError(RuntimeError):
    """Raised when an iterative solve exceeds its iteration cap."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True, order=True)
class State:
    """MDP state: REM tile, quantized motion and the current source beam."""

    tile: tuple[int, int]
    speed: float
    direction: float
    source_beam: int


@dataclass
class RewardParams:
    """Reward mix: beta balances reselection-minimizing vs RSRP-maximizing."""

    beta: float
    delta_th_db: float = 8.0

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta={self.beta} outside [0, 1]")
        if self.delta_th_db <= 0:
            raise ValueError("delta_th_db must be strictly positive")


def heading_unit(alpha_deg):
    """Unit motion vector for heading alpha: 0 deg points -y, 180 deg +y."""
    rad = math.radians(alpha_deg)
    return math.sin(rad), -math.cos(rad)


def heading_tile_step(alpha_deg):
    """Integer tile step along a heading quantized to 45 deg."""
    ux, uy = heading_unit(alpha_deg)
    return int(round(ux)), int(round(uy))


def build_state_space(rem: Rem) -> list[State]:
    """Known tiles x observed (speed, direction) pairs x source beams, sorted.

    A tile counts as known only when every beam has RSRP data there, which is
    what the reward function needs.
    """
    tiles = rem.rsrp.known_tiles()
    if not tiles:
        raise ValueError("REM has no fully known tiles")
    pairs = rem.mobility.observed_pairs()
    if not pairs:
        raise ValueError("REM has no mobility observations")
    return [State(tile, v, a, b)
            for tile in tiles for (v, a) in pairs for b in range(rem.n_beams)]


def reward(state: State, action: int, rem: Rem, params: RewardParams) -> float:
    """Reward of taking `action` in `state`, judged against REM means.

    The reselection term charges -1000 when the state's source beam sits more
    than delta_th below the tile's best mean (the radio-link-failure
    condition, evaluated on the beam the UE arrives with), -1 for a beam
    change and 0 otherwise; pricing arrival in a failed state is what trains
    the policy to switch before the drop. The RSRP term is 0 only for the
    tile's argmax beam and -1000 otherwise.
    """
    means = rem.rsrp.tile_means(state.tile)
    if not 0 <= action < rem.n_beams:
        raise IndexError(f"action {action} out of range [0, {rem.n_beams})")
    best = float(np.max(means))
    if means[state.source_beam] < best - params.delta_th_db:
        f_br = RLF_PENALTY
    elif action != state.source_beam:
        f_br = SWITCH_COST
    else:
        f_br = 0.0
    f_rsrp = 0.0 if action == int(np.argmax(means)) else WRONG_BEAM_PENALTY
    return params.beta * f_br + (1.0 - params.beta) * f_rsrp


def transition(state: State, action: int, rem: Rem, t_b_ms: float = 20.0,
               known_tiles=None):
    """Next-state distribution {State | None: prob}; None is the absorbing exit.

    The next source beam is `action`; (v, alpha) is drawn from the mobility
    map, and the tile advances one step along the new heading with crossing
    probability p = v * t_b / g (clamped to [0, 1]). Mass that leaves the
    known-tile set is absorbed by the zero-value terminal (None).
    """
    if known_tiles is None:
        known_tiles = set(rem.rsrp.known_tiles())
    g = rem.grid.tile_size_m
    dist: dict = {}
    for (v, a), p_move in rem.mobility.mobility_dist(state.tile, state.speed, state.direction).items():
        p_cross = min(max(v * (t_b_ms / 1000.0) / g, 0.0), 1.0)
        if p_cross < 1.0:
            stay = State(state.tile, v, a, action)
            dist[stay] = dist.get(stay, 0.0) + p_move * (1.0 - p_cross)
        if p_cross > 0.0:
            dx, dy = heading_tile_step(a)
            nxt_tile = (state.tile[0] + dx, state.tile[1] + dy)
            key = State(nxt_tile, v, a, action) if nxt_tile in known_tiles else None
            dist[key] = dist.get(key, 0.0) + p_move * p_cross
    return dist


@dataclass
class TabularMdp:
    """Dense rewards + sparse transitions over integer states.

    `trans` has one row per (state, action) pair (row = s * n_actions + a)
    and n_states + 1 columns; the last column is the absorbing terminal with
    value pinned to zero.
    """

    rewards: np.ndarray               # (n_states, n_actions)
    trans: sp.csr_matrix              # (n_states * n_actions, n_states + 1)

    @property
    def n_states(self):
        return self.rewards.shape[0]

    @property
    def n_actions(self):
        return self.rewards.shape[1]


def policy_evaluation(mdp: TabularMdp, policy, gamma: float,
                      tol: float = DEFAULT_TOL, max_iter: int = EVAL_ITER_CAP):
    """Iterative Bellman expectation sweeps until the max-norm residual < tol."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma={gamma} outside [0, 1)")
    n, n_a = mdp.n_states, mdp.n_actions
    rows = np.arange(n) * n_a + np.asarray(policy)
    p_pi = mdp.trans[rows]
    r_pi = mdp.rewards[np.arange(n), policy]
    values = np.zeros(n)
    for _ in range(max_iter):
        v_ext = np.append(values, 0.0)
        new_values = r_pi + gamma * (p_pi @ v_ext)
        residual = float(np.max(np.abs(new_values - values))) if n else 0.0
        values = new_values
        if residual < tol:
            return values
    raise NonConvergenceError(
        f"policy evaluation residual {residual:.3e} after {max_iter} sweeps", residual)


def policy_improvement(mdp: TabularMdp, values, gamma: float):
    """Greedy one-step lookahead; ties resolve to the lowest action index."""
    v_ext = np.append(np.asarray(values, dtype=float), 0.0)
    q = mdp.rewards + gamma * (mdp.trans @ v_ext).reshape(mdp.n_states, mdp.n_actions)
    return np.argmax(q, axis=1)


def solve_policy_iteration(mdp: TabularMdp, gamma: float, tol: float = DEFAULT_TOL,
                           initial_policy=None, max_rounds: int = IMPROVE_ROUND_CAP):
    """Alternate evaluation/improvement until the policy stops changing."""
    if initial_policy is None:
        policy = np.zeros(mdp.n_states, dtype=int)
    else:
        policy = np.asarray(initial_policy, dtype=int).copy()
    for rounds in range(1, max_rounds + 1):
        values = policy_evaluation(mdp, policy, gamma, tol)
        improved = policy_improvement(mdp, values, gamma)
        if np.array_equal(improved, policy):
            return policy, values, rounds
        policy = improved
    raise NonConvergenceError(f"policy did not stabilize within {max_rounds} rounds")


class RemMdp:
    """Tabular MDP assembled from a REM for one reward/transition setting."""

    def __init__(self, rem: Rem, params: RewardParams, t_b_ms: float = 20.0):
        self.rem = rem
        self.params = params
        self.t_b_ms = t_b_ms
        self.states = build_state_space(rem)
        self._index = {s: i for i, s in enumerate(self.states)}
        self.tabular = self._assemble()

    def state_index(self, state):
        return self._index.get(state)

    def _assemble(self) -> TabularMdp:
        rem, params = self.rem, self.params
        n = len(self.states)
        n_a = rem.n_beams
        rewards = np.empty((n, n_a))
        actions = np.arange(n_a)

        means_cache = {}
        for i, s in enumerate(self.states):
            cached = means_cache.get(s.tile)
            if cached is None:
                means = rem.rsrp.tile_means(s.tile)
                best = float(np.max(means))
                argmax = int(np.argmax(means))
                cached = (means, best, argmax)
                means_cache[s.tile] = cached
            means, best, argmax = cached
            if means[s.source_beam] < best - params.delta_th_db:
                f_br = np.full(n_a, RLF_PENALTY)
            else:
                f_br = np.where(actions != s.source_beam, SWITCH_COST, 0.0)
            f_rsrp = np.where(actions == argmax, 0.0, WRONG_BEAM_PENALTY)
            rewards[i] = params.beta * f_br + (1.0 - params.beta) * f_rsrp

        known = set(rem.rsrp.known_tiles())
        terminal = n
        data, cols, indptr = [], [], [0]
        for s in self.states:
            for a in range(n_a):
                for nxt, p in transition(s, a, rem, self.t_b_ms, known_tiles=known).items():
                    cols.append(terminal if nxt is None else self._index[nxt])
                    data.append(p)
                indptr.append(len(data))
        trans = sp.csr_matrix((data, cols, indptr), shape=(n * n_a, n + 1))
        return TabularMdp(rewards=rewards, trans=trans)

    def evaluate(self, policy_actions, gamma, tol=DEFAULT_TOL):
        """Values per State for a {State: action} mapping."""
        policy = np.array([policy_actions[s] for s in self.states], dtype=int)
        values = policy_evaluation(self.tabular, policy, gamma, tol)
        return dict(zip(self.states, values))


@dataclass
class Policy:
    """Deterministic state -> beam mapping with training metadata (POLv1)."""

    actions: dict[State, int]
    beta: float
    gamma: float
    rem_checksum: str
    n_beams: int
    version: str = field(default="POLv1")

    def lookup(self, tile, speed, direction, source_beam):
        """Action for a quantized state, or None when the state is unknown."""
        return self.actions.get(State(tuple(tile), float(speed), float(direction),
                                      int(source_beam)))

    def to_bytes(self) -> bytes:
        lines = [f"POLv1 beta={_fmt_num(self.beta)} gamma={_fmt_num(self.gamma)} "
                 f"rem_checksum={self.rem_checksum} nbeams={self.n_beams}"]
        lines.append("tile_x,tile_y,v,alpha,source_beam,action")
        for s in sorted(self.actions):
            lines.append(f"{s.tile[0]},{s.tile[1]},{_fmt_num(s.speed)},"
                         f"{_fmt_num(s.direction)},{s.source_beam},{self.actions[s]}")
        return ("\n".join(lines) + "\n").encode()

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "Policy":
        lines = data.decode().splitlines()
        if not lines or not lines[0].startswith("POLv1 "):
            raise ValueError("not a POLv1 artifact")
        header = _parse_header_fields(
            lines[0], ("beta", "gamma", "rem_checksum", "nbeams"))
        actions = {}
        for line in lines[2:]:
            if not line:
                continue
            parts = line.split(",")
            try:
                s = State((int(parts[0]), int(parts[1])), float(parts[2]),
                          float(parts[3]), int(parts[4]))
                actions[s] = int(parts[5])
            except (IndexError, ValueError) as exc:
                raise ValueError(f"malformed POLv1 row {line!r}: {exc}") from exc
        return cls(actions=actions, beta=float(header["beta"]),
                   gamma=float(header["gamma"]), rem_checksum=header["rem_checksum"],
                   n_beams=int(header["nbeams"]))

    @classmethod
    def load(cls, path) -> "Policy":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def policy_iteration(rem: Rem, params: RewardParams, gamma: float = DEFAULT_GAMMA,
                     tol: float = DEFAULT_TOL, t_b_ms: float = 20.0) -> Policy:
    """Train a beam-selection policy on a REM.

    Starts from the keep-source-beam policy and alternates evaluation and
    greedy improvement until the policy is stable.
    """
    model = RemMdp(rem, params, t_b_ms)
    initial = np.array([s.source_beam for s in model.states], dtype=int)
    actions, _, _ = solve_policy_iteration(model.tabular, gamma, tol, initial)
    return Policy(actions={s: int(a) for s, a in zip(model.states, actions)},
                  beta=params.beta, gamma=gamma, rem_checksum=rem.checksum(),
                  n_beams=rem.n_beams)
