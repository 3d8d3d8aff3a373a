"""Ground-truth radio layer: DFT beam codebook, antenna gains, path loss,
spatially correlated shadowing and Rayleigh-faded per-beam RSRP."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

# UE antenna height is fixed; only the gNB height is configurable.
UE_HEIGHT_M = 1.5

# RSRP is reported on a 1 MHz reference bandwidth, so the configured
# dBm/MHz power density is used directly as the per-beam reference power.
# This is an absolute-level constant only; it cancels in every comparison.
RSRP_REF_BW_MHZ = 1.0

# Floor for the array factor power so nulls stay finite in dB.
_ARRAY_FACTOR_FLOOR = 1e-12


@dataclass
class ArrayConfig:
    """gNB antenna array and radio parameters."""

    rows: int = 8
    cols: int = 8
    element_spacing: float = 0.5      # wavelengths
    height_m: float = 10.0
    position: tuple[float, float] = (0.0, 250.0)
    tx_power_dbm_per_mhz: float = 10.0
    bandwidth_mhz: float = 100.0
    center_frequency_ghz: float = 26.0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("array must have at least one element")
        for name in ("element_spacing", "height_m", "tx_power_dbm_per_mhz",
                     "bandwidth_mhz", "center_frequency_ghz"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")

    @property
    def n_elements(self):
        return self.rows * self.cols

    @property
    def tx_ref_power_dbm(self):
        """Per-beam reference power on the RSRP reference bandwidth."""
        return self.tx_power_dbm_per_mhz + 10.0 * np.log10(RSRP_REF_BW_MHZ)


@dataclass
class BeamCodebook:
    """Static grid-of-beams codebook of mutually orthogonal DFT beams.

    weights[b, e] is the complex weight of element e for beam b; elements are
    flattened as e = m * rows + n with m the horizontal (azimuth) index and
    n the vertical index.
    """

    weights: np.ndarray               # (n_beams, n_elements) complex
    steering_deg: np.ndarray          # (n_beams, 2) = (azimuth, elevation)
    rows: int
    cols: int
    element_spacing: float

    @property
    def n_beams(self):
        return self.weights.shape[0]


def _signed_dft_index(p, size):
    """Map DFT bin p in 0..size-1 to the signed index in -size/2..size/2-1."""
    return p if p < size - p else p - size


def build_codebook(cfg: ArrayConfig, n_beams: int) -> BeamCodebook:
    """Select n_beams orthogonal 2D-DFT beams covering the forward half-space.

    The selection takes all `cols` azimuth DFT bins for as many elevation
    rows as needed (horizon row first, then alternating downtilt/uptilt),
    so n_beams must be a multiple of cols. Beam 0 is the broadside
    (uniform-phase) beam.
    """
    if n_beams > cfg.n_elements:
        raise ValueError(f"n_beams={n_beams} exceeds {cfg.n_elements} array elements")
    if n_beams < 1 or n_beams % cfg.cols != 0:
        raise ValueError(f"n_beams={n_beams} must be a positive multiple of cols={cfg.cols}")
    n_rows_sel = n_beams // cfg.cols
    if n_rows_sel > cfg.rows:
        raise ValueError(f"n_beams={n_beams} needs {n_rows_sel} elevation rows, array has {cfg.rows}")

    # Elevation DFT bins nearest the horizon, preferring downtilt: 0, -1, +1, -2, ...
    elev_order = [0]
    step = 1
    while len(elev_order) < n_rows_sel:
        elev_order.append(-step)
        if len(elev_order) < n_rows_sel:
            elev_order.append(step)
        step += 1

    m = np.arange(cfg.cols)
    n = np.arange(cfg.rows)
    norm = 1.0 / np.sqrt(cfg.n_elements)
    weights = np.empty((n_beams, cfg.n_elements), dtype=complex)
    steering = np.empty((n_beams, 2))
    b = 0
    for q_signed in elev_order:
        sin_el = q_signed / (cfg.rows * cfg.element_spacing)
        el = np.degrees(np.arcsin(np.clip(sin_el, -1.0, 1.0)))
        for p in range(cfg.cols):
            p_signed = _signed_dft_index(p, cfg.cols)
            phase = 2.0 * np.pi * (np.add.outer(m * p / cfg.cols, n * q_signed / cfg.rows))
            weights[b] = (norm * np.exp(1j * phase)).ravel()
            sin_az = p_signed / (cfg.cols * cfg.element_spacing) / max(np.cos(np.radians(el)), 1e-12)
            steering[b] = (np.degrees(np.arcsin(np.clip(sin_az, -1.0, 1.0))), el)
            b += 1
    return BeamCodebook(weights=weights, steering_deg=steering,
                        rows=cfg.rows, cols=cfg.cols,
                        element_spacing=cfg.element_spacing)


def _wrap_deg(angle):
    """Wrap angle(s) into [-180, 180)."""
    return (np.asarray(angle, dtype=float) + 180.0) % 360.0 - 180.0


def element_gain_db(azimuth_deg, elevation_deg):
    """Synthetic sector element: 8 dBi peak, 65 deg 3-dB width, 30 dB front-to-back."""
    az = _wrap_deg(azimuth_deg)
    el = _wrap_deg(elevation_deg)
    a_h = -np.minimum(12.0 * (az / 65.0) ** 2, 30.0)
    a_v = -np.minimum(12.0 * (el / 65.0) ** 2, 30.0)
    return 8.0 - np.minimum(-(a_h + a_v), 30.0)


def _steering_matrix(codebook: BeamCodebook, azimuth_deg, elevation_deg):
    """Array response vectors for the given directions, shape (k, n_elements)."""
    az = np.radians(np.atleast_1d(np.asarray(azimuth_deg, dtype=float)))
    el = np.radians(np.atleast_1d(np.asarray(elevation_deg, dtype=float)))
    u_h = np.cos(el) * np.sin(az)
    u_v = np.sin(el)
    m = np.arange(codebook.cols)
    n = np.arange(codebook.rows)
    phase = 2.0 * np.pi * codebook.element_spacing * (
        u_h[:, None, None] * m[None, :, None] + u_v[:, None, None] * n[None, None, :])
    return np.exp(1j * phase).reshape(az.shape[0], -1)


def array_factor_db(codebook: BeamCodebook, azimuth_deg, elevation_deg):
    """Array factor power of every beam toward the given directions, in dB.

    Returns shape (k, n_beams); 0 dB corresponds to a single element.
    """
    a = _steering_matrix(codebook, azimuth_deg, elevation_deg)
    af = np.abs(a @ codebook.weights.conj().T) ** 2
    return 10.0 * np.log10(np.maximum(af, _ARRAY_FACTOR_FLOOR))


def beam_gain(codebook: BeamCodebook, beam: int, azimuth_deg: float, elevation_deg: float) -> float:
    """Total gain (dBi) of one beam toward (azimuth, elevation): element + array factor."""
    if not 0 <= beam < codebook.n_beams:
        raise IndexError(f"beam {beam} out of range [0, {codebook.n_beams})")
    af = array_factor_db(codebook, azimuth_deg, elevation_deg)
    return float(element_gain_db(azimuth_deg, elevation_deg) + af[0, beam])


def path_loss(d3d_m: float, fc_ghz: float) -> float:
    """UMi street-canyon LOS path loss: 32.4 + 21 log10(d) + 20 log10(fc)."""
    d = np.asarray(d3d_m, dtype=float)
    if np.any(d < 1.0):
        logger.debug("path_loss distance below 1 m clamped (min %.3g m)", float(np.min(d)))
        d = np.maximum(d, 1.0)
    return 32.4 + 21.0 * np.log10(d) + 20.0 * np.log10(fc_ghz)


@dataclass
class ShadowingField:
    """Per-beam spatially correlated shadowing grids (dB) over the cell area.

    Fields are zero-mean Gaussian with exponential (Gudmundson) spatial
    autocorrelation exp(-d/correlation_m), one independent field per beam,
    sampled on a square grid and bilinearly interpolated between nodes.
    """

    values_db: np.ndarray             # (n_beams, n_y, n_x)
    resolution_m: float
    correlation_m: float
    sigma_db: float
    seed: int
    area_m: tuple[float, float] = field(default=(500.0, 500.0))

    @property
    def n_beams(self):
        return self.values_db.shape[0]

    def sample(self, beam, pos):
        """Shadowing (dB) for one beam at a continuous (x, y) position."""
        return float(self.sample_batch(np.asarray([pos], dtype=float))[0, beam])

    def sample_all(self, pos):
        """Shadowing (dB) of every beam at one position, shape (n_beams,)."""
        return self.sample_batch(np.asarray([pos], dtype=float))[0]

    def sample_batch(self, positions):
        """Bilinear shadowing for positions (k, 2), returns (k, n_beams)."""
        pos = np.asarray(positions, dtype=float)
        _, n_y, n_x = self.values_db.shape
        gx = np.clip(pos[:, 0] / self.resolution_m, 0.0, n_x - 1.0)
        gy = np.clip(pos[:, 1] / self.resolution_m, 0.0, n_y - 1.0)
        x0 = np.minimum(gx.astype(int), n_x - 2)
        y0 = np.minimum(gy.astype(int), n_y - 2)
        fx = gx - x0
        fy = gy - y0
        v = self.values_db
        out = (v[:, y0, x0] * (1 - fx) * (1 - fy)
               + v[:, y0, x0 + 1] * fx * (1 - fy)
               + v[:, y0 + 1, x0] * (1 - fx) * fy
               + v[:, y0 + 1, x0 + 1] * fx * fy)
        return out.T

    def to_csv(self, path):
        """Export the raw grid as CSV rows x,y,beam,shadowing_db."""
        with open(path, "w") as fh:
            fh.write("x,y,beam,shadowing_db\n")
            n_b, n_y, n_x = self.values_db.shape
            for b in range(n_b):
                for iy in range(n_y):
                    for ix in range(n_x):
                        fh.write(f"{ix * self.resolution_m:g},{iy * self.resolution_m:g},"
                                 f"{b},{float(self.values_db[b, iy, ix])!r}\n")


def _correlated_grid(rng, n_x, n_y, resolution_m, d_corr_m, sigma_db):
    """One zero-mean Gaussian grid with exp(-d/d_corr) autocorrelation.

    Circulant embedding: the exact torus covariance spectrum is sampled via
    FFT on a power-of-two grid large enough that wrap-around is negligible,
    then cropped. The sample mean is removed so each field is exactly
    zero-mean.
    """
    size = 1
    while size < 2 * max(n_x, n_y):
        size *= 2
    idx = np.arange(size)
    d = np.minimum(idx, size - idx) * resolution_m
    cov = sigma_db ** 2 * np.exp(-np.hypot(d[:, None], d[None, :]) / d_corr_m)
    spec_root = np.sqrt(np.maximum(np.fft.fft2(cov).real, 0.0))
    white = rng.standard_normal((size, size))
    grid = np.fft.ifft2(np.fft.fft2(white) * spec_root).real[:n_y, :n_x]
    return grid - grid.mean()


def generate_shadowing(seed: int, area, resolution: float, d_corr: float,
                       sigma: float, n_beams: int) -> ShadowingField:
    """Generate n_beams independent correlated shadowing fields over `area` m.

    Equal seeds give bit-identical fields; per-beam fields come from
    independent child streams of the seed.
    """
    if sigma <= 0 or d_corr <= 0:
        raise ValueError("sigma and d_corr must be strictly positive")
    if resolution <= 0 or resolution > d_corr:
        raise ValueError("resolution must be in (0, d_corr]")
    width, height = float(area[0]), float(area[1])
    if width <= 0 or height <= 0:
        raise ValueError("area must be strictly positive")
    n_x = int(np.floor(width / resolution)) + 1
    n_y = int(np.floor(height / resolution)) + 1
    children = np.random.SeedSequence(seed).spawn(n_beams)
    values = np.empty((n_beams, n_y, n_x))
    for b in range(n_beams):
        rng = np.random.default_rng(children[b])
        values[b] = _correlated_grid(rng, n_x, n_y, resolution, d_corr, sigma)
    return ShadowingField(values_db=values, resolution_m=resolution,
                          correlation_m=d_corr, sigma_db=sigma, seed=seed,
                          area_m=(width, height))


def rayleigh_power(rng, size=None):
    """Unit-mean Rayleigh fading power samples (|h|^2 with h ~ CN(0,1))."""
    return rng.exponential(1.0, size)


def measurement_fading(rng, shape, diversity: int = 1):
    """Per-measurement fading power: mean of `diversity` Rayleigh realizations.

    A wideband RSRP estimate averages independently faded resource elements
    across the SSB, so the per-measurement fading factor is the mean of that
    many unit-mean Rayleigh power samples (still unit mean; diversity=1 is a
    single raw Rayleigh draw).
    """
    if diversity < 1:
        raise ValueError("diversity must be at least 1")
    if diversity == 1:
        return rayleigh_power(rng, shape)
    full = rayleigh_power(rng, tuple(np.atleast_1d(shape)) + (diversity,))
    return full.mean(axis=-1)


class Channel:
    """Bundles array config, codebook and shadowing into an RSRP oracle."""

    def __init__(self, cfg: ArrayConfig, codebook: BeamCodebook, shadowing: ShadowingField):
        if codebook.n_beams != shadowing.n_beams:
            raise ValueError("codebook and shadowing disagree on beam count")
        self.cfg = cfg
        self.codebook = codebook
        self.shadowing = shadowing

    @property
    def n_beams(self):
        return self.codebook.n_beams

    def geometry(self, positions):
        """(d3d, azimuth_deg, elevation_deg) from the gNB to positions (k, 2)."""
        pos = np.asarray(positions, dtype=float)
        gx, gy = self.cfg.position
        dx = pos[:, 0] - gx
        dy = pos[:, 1] - gy
        d2d = np.hypot(dx, dy)
        dz = UE_HEIGHT_M - self.cfg.height_m
        d3d = np.hypot(d2d, dz)
        az = np.degrees(np.arctan2(dy, dx))
        el = np.degrees(np.arctan2(dz, d2d))
        return d3d, az, el

    def mean_rsrp_matrix(self, positions):
        """Fading-free RSRP (dBm) for positions (k, 2), shape (k, n_beams)."""
        pos = np.asarray(positions, dtype=float)
        d3d, az, el = self.geometry(pos)
        gain = element_gain_db(az, el)[:, None] + array_factor_db(self.codebook, az, el)
        pl = path_loss(d3d, self.cfg.center_frequency_ghz)[:, None]
        return self.cfg.tx_ref_power_dbm + gain - pl + self.shadowing.sample_batch(pos)

    def rsrp_matrix(self, positions, fading_power):
        """Faded RSRP (dBm): mean_rsrp + 10 log10(fading), fading (k, n_beams)."""
        return self.mean_rsrp_matrix(positions) + 10.0 * np.log10(fading_power)


def rsrp(cfg: ArrayConfig, codebook: BeamCodebook, shadowing: ShadowingField,
         ue_pos, beam: int, fading_draw: float = 1.0) -> float:
    """RSRP (dBm) of one beam at one UE position for a given fading power draw."""
    if not 0 <= beam < codebook.n_beams:
        raise IndexError(f"beam {beam} out of range [0, {codebook.n_beams})")
    ch = Channel(cfg, codebook, shadowing)
    row = ch.rsrp_matrix(np.asarray([ue_pos], dtype=float),
                         np.full((1, codebook.n_beams), float(fading_draw)))
    return float(row[0, beam])
