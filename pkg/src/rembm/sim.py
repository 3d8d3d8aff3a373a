"""Scenario engine: UEs on the urban road, SSB-burst-clocked measurements,
controller invocation, KPI collection and REM population."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import bm
from .channel import Channel, measurement_fading
from .mdp import heading_unit
from .rem import Grid, Rem, quantize_direction, quantize_speed


@dataclass
class ScenarioConfig:
    """Urban-road scenario parameters (defaults reproduce the studied setup)."""

    cell_width_m: float = 500.0
    cell_height_m: float = 500.0
    ssb_period_ms: float = 20.0
    n_ues: int = 300
    ue_speed_mps: float = 25.0
    directions_deg: tuple[float, ...] = (0.0, 180.0)
    delta_th_db: float = 8.0
    duration_s: float = 15.0
    road_x_m: float = 250.0
    position_noise_m: float = 0.0
    fading_diversity: int = 12        # Rayleigh realizations averaged per RSRP measurement
    seed: int = 1                     # traffic seed: arrivals + position noise

    def __post_init__(self):
        for name in ("cell_width_m", "cell_height_m", "ssb_period_ms",
                     "ue_speed_mps", "duration_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.n_ues < 1:
            raise ValueError("n_ues must be at least 1")
        if not 0 <= self.road_x_m <= self.cell_width_m:
            raise ValueError("road_x_m outside the cell")
        if self.position_noise_m < 0:
            raise ValueError("position_noise_m must be non-negative")
        if self.fading_diversity < 1:
            raise ValueError("fading_diversity must be at least 1")
        for d in self.directions_deg:
            if quantize_direction(d) != d:
                raise ValueError(f"direction {d} is not a quantized heading")

    @property
    def n_bursts(self):
        return int(round(self.duration_s * 1000.0 / self.ssb_period_ms))


@dataclass
class UeState:
    """Ground-truth UE state plus per-UE KPI counters."""

    ue_id: int
    pos: tuple[float, float]
    speed_mps: float
    direction_deg: float
    start_burst: int
    serving_beam: int | None = None
    prev_meas: bm.MeasurementSet | None = None
    departed: bool = False
    reselections: int = 0
    rlf_count: int = 0
    active_bursts: int = 0


@dataclass
class KpiReport:
    """Reselection/RLF counters, raw RSRP samples and the serving-beam trace."""

    controller_label: str
    delta_ho_db: float | None
    beta: float | None
    ssb_period_ms: float
    per_ue: list = field(default_factory=list)   # (ue_id, reselections, rlfs, active_s)
    rsrp_samples: list = field(default_factory=list)   # serving-beam dBm, burst order
    trace: list = field(default_factory=list)    # (t_ms, ue, beam, rsrp_dbm)
    decisions: list = field(default_factory=list)  # (t_ms, ue, reason, from, to)
    measurements: list = field(default_factory=list)  # optional (t_ms, ue, rsrp vector)

    @property
    def total_active_s(self):
        return sum(row[3] for row in self.per_ue)

    @property
    def total_reselections(self):
        return sum(row[1] for row in self.per_ue)

    @property
    def total_rlfs(self):
        return sum(row[2] for row in self.per_ue)

    @property
    def reselections_per_user_s(self):
        return self.total_reselections / self.total_active_s

    @property
    def rlf_per_user_s(self):
        return self.total_rlfs / self.total_active_s


class BaselineController:
    """5G baseline margin switching, acting on the previous burst's report."""

    label = "baseline"

    def __init__(self, delta_ho_db: float):
        if delta_ho_db <= 0:
            raise ValueError("delta_ho_db must be strictly positive")
        self.delta_ho_db = delta_ho_db

    def decide(self, ue_id, reported_pos, speed_mps, direction_deg, serving,
               meas_now, meas_prev):
        if meas_prev is None:
            return None
        return bm.baseline_decide(meas_prev, serving, self.delta_ho_db)


def _spawn_ues(scenario: ScenarioConfig, rng) -> list[UeState]:
    """Evenly staggered arrivals entering the road at the edge they drive from."""
    ues = []
    for i in range(scenario.n_ues):
        start_burst = (i * scenario.n_bursts) // scenario.n_ues
        direction = float(rng.choice(scenario.directions_deg))
        _, uy = heading_unit(direction)
        entry_y = scenario.cell_height_m if uy < 0 else 0.0
        ues.append(UeState(ue_id=i, pos=(scenario.road_x_m, entry_y),
                           speed_mps=scenario.ue_speed_mps,
                           direction_deg=direction, start_burst=start_burst))
    return ues


def run(scenario: ScenarioConfig, controller, chan: Channel,
        label: str | None = None, delta_ho_db: float | None = None,
        beta: float | None = None, collect_measurements: bool = False) -> KpiReport:
    """Advance the scenario in SSB-burst steps and collect KPIs.

    Per burst: move UEs, draw fading, build measurement sets, count RLFs on
    the pre-decision serving beam, invoke the controller, apply switches and
    record the serving-beam RSRP. Newly arrived UEs attach to the measured
    argmax beam; controllers act from their next burst on. Fully
    deterministic given (scenario.seed, chan.shadowing.seed).
    """
    report = KpiReport(controller_label=label or controller.label,
                       delta_ho_db=delta_ho_db, beta=beta,
                       ssb_period_ms=scenario.ssb_period_ms)
    arrival_rng = np.random.default_rng([scenario.seed, 0])
    noise_rng = np.random.default_rng([scenario.seed, 1])
    fading_rng = np.random.default_rng([chan.shadowing.seed, 1])
    ues = _spawn_ues(scenario, arrival_rng)
    t_b = scenario.ssb_period_ms
    dt_s = t_b / 1000.0

    for burst in range(scenario.n_bursts):
        t_ms = burst * t_b
        active = []
        for ue in ues:
            if ue.departed or burst < ue.start_burst:
                continue
            if burst > ue.start_burst:
                ux, uy = heading_unit(ue.direction_deg)
                ue.pos = (ue.pos[0] + ux * ue.speed_mps * dt_s,
                          ue.pos[1] + uy * ue.speed_mps * dt_s)
                if not (0.0 <= ue.pos[0] <= scenario.cell_width_m
                        and 0.0 <= ue.pos[1] <= scenario.cell_height_m):
                    ue.departed = True
                    continue
            active.append(ue)
        if not active:
            continue

        positions = np.array([ue.pos for ue in active])
        fading = measurement_fading(fading_rng, (len(active), chan.n_beams),
                                    scenario.fading_diversity)
        rsrp_now = chan.rsrp_matrix(positions, fading)

        for row, ue in enumerate(active):
            meas = bm.MeasurementSet(rsrp_dbm=rsrp_now[row], timestamp_ms=t_ms,
                                     ue_id=ue.ue_id)
            ue.active_bursts += 1
            if collect_measurements:
                report.measurements.append((t_ms, ue.ue_id, rsrp_now[row].copy()))
            if ue.serving_beam is None:
                ue.serving_beam = meas.best_beam      # initial access
            else:
                if bm.detect_rlf(meas, ue.serving_beam, scenario.delta_th_db):
                    ue.rlf_count += 1
                reported = ue.pos
                if scenario.position_noise_m > 0:
                    noise = noise_rng.normal(0.0, scenario.position_noise_m, 2)
                    reported = (ue.pos[0] + noise[0], ue.pos[1] + noise[1])
                decision = controller.decide(ue.ue_id, reported, ue.speed_mps,
                                             ue.direction_deg, ue.serving_beam,
                                             meas, ue.prev_meas)
                if decision is not None and decision.is_switch:
                    report.decisions.append((t_ms, ue.ue_id, decision.reason,
                                             ue.serving_beam, decision.target))
                    ue.serving_beam = decision.target
                    ue.reselections += 1
            report.trace.append((t_ms, ue.ue_id, ue.serving_beam,
                                 float(meas.rsrp_dbm[ue.serving_beam])))
            report.rsrp_samples.append(float(meas.rsrp_dbm[ue.serving_beam]))
            ue.prev_meas = meas

    for ue in ues:
        if ue.active_bursts:
            report.per_ue.append((ue.ue_id, ue.reselections, ue.rlf_count,
                                  ue.active_bursts * dt_s))
    return report


def populate_rem(scenario: ScenarioConfig, chan: Channel, grid: Grid,
                 n_passes: int, seed: int, linear_average: bool = False) -> Rem:
    """Build a REM by driving probe UEs along the road.

    Each pass traverses the road once per configured direction, reporting all
    beams' faded RSRP every burst and recording the mobility transition. The
    probe walks the same burst-by-burst position lattice the scenario UEs use.
    """
    if n_passes < 1:
        raise ValueError("n_passes must be at least 1")
    rem = Rem(grid, chan.n_beams, linear_average=linear_average)
    rng = np.random.default_rng([seed, 2])
    step_m = scenario.ue_speed_mps * scenario.ssb_period_ms / 1000.0
    v_q = quantize_speed(scenario.ue_speed_mps)

    for direction in scenario.directions_deg:
        a_q = quantize_direction(direction)
        ux, uy = heading_unit(direction)
        entry_y = scenario.cell_height_m if uy < 0 else 0.0
        n_steps = int(np.floor(scenario.cell_height_m / step_m)) + 1
        ys = entry_y + uy * step_m * np.arange(n_steps)
        positions = np.column_stack([np.full(n_steps, scenario.road_x_m), ys])
        tiles = [grid.quantize_location(p) for p in positions]
        for _ in range(n_passes):
            fading = measurement_fading(rng, (n_steps, chan.n_beams),
                                        scenario.fading_diversity)
            rsrp = chan.rsrp_matrix(positions, fading)
            for k, tile in enumerate(tiles):
                for b in range(chan.n_beams):
                    rem.rsrp.ingest_report(tile, b, rsrp[k, b])
                if k + 1 < n_steps:
                    rem.mobility.observe_transition(tile, v_q, a_q, v_q, a_q)
    return rem


def rsrp_cdf(report, percentile: float) -> float:
    """Nearest-rank empirical percentile of the report's RSRP samples (dBm)."""
    samples = report.rsrp_samples if hasattr(report, "rsrp_samples") else report
    if len(samples) == 0:
        raise ValueError("no RSRP samples")
    if not 0.0 < percentile <= 1.0:
        raise ValueError("percentile must be in (0, 1]")
    ordered = np.sort(np.asarray(samples, dtype=float))
    rank = int(np.ceil(percentile * len(ordered)))
    return float(ordered[rank - 1])


def smooth_trace(values, window: int):
    """Centered moving average with truncated windows at the edges."""
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be odd and >= 1")
    v = np.asarray(values, dtype=float)
    if window == 1 or len(v) == 0:
        return v.copy()
    half = window // 2
    csum = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(len(v))
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, len(v))
    return (csum[hi] - csum[lo]) / (hi - lo)


def _fmt(x):
    if x is None:
        return ""
    f = float(x)
    return str(int(f)) if f == int(f) else repr(f)


def write_kpi_csv(path, reports, comments=()):
    """kpi.csv: one row per run with per-user-per-second rates."""
    if hasattr(reports, "per_ue"):
        reports = [reports]
    with open(path, "w") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        fh.write("controller,delta_ho,beta,reselections_per_user_s,rlf_per_user_s\n")
        for r in reports:
            fh.write(f"{r.controller_label},{_fmt(r.delta_ho_db)},{_fmt(r.beta)},"
                     f"{r.reselections_per_user_s!r},{r.rlf_per_user_s!r}\n")


def write_samples_csv(path, report, comments=()):
    """rsrp_samples.csv: serving-beam RSRP samples, one per UE per burst."""
    with open(path, "w") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        fh.write("controller,dbm\n")
        for s in report.rsrp_samples:
            fh.write(f"{report.controller_label},{s!r}\n")


def write_trace_csv(path, report, comments=()):
    """trace.csv: serving beam and its RSRP per UE per burst."""
    with open(path, "w") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        fh.write("t_ms,ue,beam,rsrp_dbm\n")
        for t_ms, ue, beam, dbm in report.trace:
            fh.write(f"{_fmt(t_ms)},{ue},{beam},{dbm!r}\n")
