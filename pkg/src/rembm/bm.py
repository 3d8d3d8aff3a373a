"""Runtime beam-management decisions: margin-based 5G baseline switching,
policy lookup, radio-link-failure detection and the highest-RSRP fallback."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import Policy
from .rem import Grid, quantize_direction, quantize_speed

KEEP = "keep"
SWITCH = "switch"

REASON_BASELINE = "baseline-margin"
REASON_POLICY = "policy"
REASON_RLF_FALLBACK = "rlf-fallback"


@dataclass
class MeasurementSet:
    """Per-beam RSRP (dBm) reported by one UE after one SSB burst."""

    rsrp_dbm: np.ndarray
    timestamp_ms: float
    ue_id: int

    def __post_init__(self):
        self.rsrp_dbm = np.asarray(self.rsrp_dbm, dtype=float)

    @property
    def best_beam(self):
        """Argmax beam; ties resolve to the lowest index."""
        return int(np.argmax(self.rsrp_dbm))


@dataclass
class Decision:
    """Keep the serving beam or switch to `target`."""

    action: str
    reason: str
    target: int | None = None

    def __post_init__(self):
        if self.action not in (KEEP, SWITCH):
            raise ValueError(f"unknown action {self.action!r}")
        if self.action == SWITCH and self.target is None:
            raise ValueError("switch decision needs a target beam")

    @property
    def is_switch(self):
        return self.action == SWITCH


def _keep(reason):
    return Decision(action=KEEP, reason=reason)


def _switch(target, reason):
    return Decision(action=SWITCH, reason=reason, target=int(target))


def detect_rlf(m: MeasurementSet, source: int, delta_th_db: float) -> bool:
    """True iff the source beam is strictly more than delta_th below the best."""
    return bool(m.rsrp_dbm[source] < float(np.max(m.rsrp_dbm)) - delta_th_db)


def baseline_decide(m: MeasurementSet, source: int, delta_ho_db: float) -> Decision:
    """5G baseline margin rule on one measurement set.

    Switches to the argmax beam iff it exceeds the source beam by more than
    delta_ho. The caller supplies the previous burst's measurements, which is
    where the one-burst reaction delay of the baseline comes from.
    """
    best = m.best_beam
    if m.rsrp_dbm[source] < m.rsrp_dbm[best] - delta_ho_db and best != source:
        return _switch(best, REASON_BASELINE)
    return _keep(REASON_BASELINE)


def policy_decide(policy: Policy, grid: Grid, reported_pos, speed_mps: float,
                  direction_deg: float, source: int) -> Decision | None:
    """Look up the trained policy for the UE's quantized state.

    Returns None when the state (or its tile) is not covered by the policy,
    signalling that the caller must fall back to another controller.
    """
    if not grid.contains(reported_pos):
        return None
    tile = grid.quantize_location(reported_pos)
    action = policy.lookup(tile, quantize_speed(speed_mps),
                           quantize_direction(direction_deg), source)
    if action is None:
        return None
    if action == source:
        return _keep(REASON_POLICY)
    return _switch(action, REASON_POLICY)


def rlf_fallback(m: MeasurementSet, source: int) -> Decision:
    """Emergency switch to the measured argmax beam after an RLF.

    Degenerate guard: if the argmax already is the serving beam (impossible
    when an RLF was actually detected) the decision is keep.
    """
    best = m.best_beam
    if best == source:
        return _keep(REASON_RLF_FALLBACK)
    return _switch(best, REASON_RLF_FALLBACK)


def write_decision_log(path, entries, comments=()):
    """CSV decision log; entries are (t_ms, ue, reason, from_beam, to_beam)."""
    with open(path, "w") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        fh.write("t_ms,ue,reason,from_beam,to_beam\n")
        for t_ms, ue, reason, from_beam, to_beam in entries:
            fh.write(f"{_fmt_ms(t_ms)},{ue},{reason},{from_beam},{to_beam}\n")


def _fmt_ms(t_ms):
    f = float(t_ms)
    return str(int(f)) if f == int(f) else repr(f)
