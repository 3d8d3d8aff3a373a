"""Single-process O-RAN split: a non-real-time pipeline (REM build, policy
training, A1 policy transfer) and the near-real-time BM-xApp enforcement loop
with E2-style commands and QoS fallback."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from . import bm
from .mdp import Policy, RewardParams, policy_iteration
from .rem import Grid, Rem


@dataclass
class A1PolicyMessage:
    """Policy artifact handed from the non-RT side to the BM-xApp."""

    artifact: bytes
    beta: float
    gamma: float
    rem_checksum: str
    issued_at_ms: float = 0.0

    def to_line(self) -> str:
        return (f"A1 issued_at_ms={self.issued_at_ms:g} beta={self.beta:g} "
                f"gamma={self.gamma:g} rem_checksum={self.rem_checksum} "
                f"artifact_bytes={len(self.artifact)}")


@dataclass
class E2Command:
    """Beam-reselection command toward the gNB; emitted only for switches."""

    ue_id: int
    target_beam: int
    issued_at_ms: float
    reason: str

    def to_line(self) -> str:
        return (f"E2 t_ms={self.issued_at_ms:g} ue={self.ue_id} "
                f"target_beam={self.target_beam} reason={self.reason}")


class NonRtRic:
    """REM aggregation and offline policy training; emits A1 messages."""

    @staticmethod
    def build_rem_from_reports(grid: Grid, n_beams: int, reports) -> Rem:
        """Assemble a REM from a stream of report records.

        Records are ("rsrp", tile, beam, dbm) or
        ("mob", tile, v_cond, a_cond, v, alpha).
        """
        rem = Rem(grid, n_beams)
        count = 0
        for record in reports:
            kind = record[0]
            if kind == "rsrp":
                _, tile, beam, dbm = record
                rem.rsrp.ingest_report(tile, beam, dbm)
            elif kind == "mob":
                _, tile, v_cond, a_cond, v, alpha = record
                rem.mobility.observe_transition(tile, v_cond, a_cond, v, alpha)
            else:
                raise ValueError(f"unknown report record kind {kind!r}")
            count += 1
        if count == 0:
            raise ValueError("empty report stream")
        return rem

    @staticmethod
    def train(rem_source, params: RewardParams, gamma: float = 0.9,
              tol: float = 1e-6, t_b_ms: float = 20.0,
              issued_at_ms: float = 0.0) -> A1PolicyMessage:
        """Train a policy on a REM (object or REMv1 file) and wrap it for A1."""
        if isinstance(rem_source, Rem):
            rem = rem_source
        elif isinstance(rem_source, (str, os.PathLike)):
            rem = Rem.load(rem_source)
        else:
            raise TypeError("rem_source must be a Rem or a path to a REMv1 file")
        policy = policy_iteration(rem, params, gamma=gamma, tol=tol, t_b_ms=t_b_ms)
        return A1PolicyMessage(artifact=policy.to_bytes(), beta=params.beta,
                               gamma=gamma, rem_checksum=policy.rem_checksum,
                               issued_at_ms=issued_at_ms)


class ChecksumMismatchError(ValueError):
    """A1 policy does not match the REM it claims to be trained on."""


class BmXapp:
    """Near-RT policy enforcement with RLF and unknown-state fallbacks.

    Decision order per UE per burst: an RLF on the current measurement forces
    an immediate switch to the measured best beam; otherwise the deployed
    policy is looked up for the UE's quantized state; off-map states fall
    back to the baseline margin rule on the delayed measurement.
    """

    label = "policy"

    def __init__(self, grid: Grid, delta_th_db: float = 8.0,
                 fallback_delta_ho_db: float = 5.0):
        self.grid = grid
        self.delta_th_db = delta_th_db
        self.fallback_delta_ho_db = fallback_delta_ho_db
        self.policy: Policy | None = None
        self._deployed_artifact: bytes | None = None
        self.commands: list[E2Command] = []

    def deploy(self, message: A1PolicyMessage, rem: Rem | None = None) -> bool:
        """Install a policy from an A1 message; returns False on no-op redeploy.

        When the matching REM is supplied its checksum is verified against
        the message, rejecting policies trained on a different (or tampered)
        map.
        """
        if rem is not None and rem.checksum() != message.rem_checksum:
            raise ChecksumMismatchError(
                f"policy was trained on REM {message.rem_checksum[:12]}..., "
                f"got {rem.checksum()[:12]}...")
        policy = Policy.from_bytes(message.artifact)
        if policy.rem_checksum != message.rem_checksum:
            raise ChecksumMismatchError("A1 message checksum disagrees with artifact header")
        if self._deployed_artifact == message.artifact:
            return False
        self.policy = policy
        self._deployed_artifact = message.artifact
        return True

    def decide(self, ue_id, reported_pos, speed_mps, direction_deg, serving,
               meas_now, meas_prev):
        """One UE's decision for one burst (sim controller interface)."""
        if self.policy is None:
            raise RuntimeError("no policy deployed")
        decision = None
        if meas_now is not None and bm.detect_rlf(meas_now, serving, self.delta_th_db):
            decision = bm.rlf_fallback(meas_now, serving)
        else:
            decision = bm.policy_decide(self.policy, self.grid, reported_pos,
                                        speed_mps, direction_deg, serving)
            if decision is None and meas_prev is not None:
                decision = bm.baseline_decide(meas_prev, serving,
                                              self.fallback_delta_ho_db)
        if decision is not None and decision.is_switch:
            t_ms = meas_now.timestamp_ms if meas_now is not None else 0.0
            self.commands.append(E2Command(ue_id=ue_id, target_beam=decision.target,
                                           issued_at_ms=t_ms, reason=decision.reason))
        return decision

    def step(self, ue_feed, measurements, prev_measurements=None) -> list[E2Command]:
        """Process one burst for many UEs; at most one command per UE.

        ue_feed rows are (ue_id, position, speed_mps, direction_deg,
        serving_beam); measurements maps ue_id to the current burst's
        MeasurementSet, prev_measurements to the previous burst's.
        """
        prev_measurements = prev_measurements or {}
        issued = []
        before = len(self.commands)
        for ue_id, pos, speed, direction, serving in ue_feed:
            self.decide(ue_id, pos, speed, direction, serving,
                        measurements.get(ue_id), prev_measurements.get(ue_id))
        issued = self.commands[before:]
        return issued

    def write_command_log(self, path):
        with open(path, "w") as fh:
            for cmd in self.commands:
                fh.write(cmd.to_line() + "\n")
