"""Run configuration: flat key=value sections in an INI-style file, with the
scenario's reference parameters pre-filled as defaults, strict unknown-key
rejection and a canonical serialized form."""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field

from .channel import ArrayConfig, Channel, build_codebook, generate_shadowing
from .rem import Grid
from .sim import ScenarioConfig

# section -> key -> (type, default); also fixes the canonical ordering.
_SCHEMA = {
    "channel": {
        "rows": (int, 8),
        "cols": (int, 8),
        "element_spacing": (float, 0.5),
        "height_m": (float, 10.0),
        "gnb_x": (float, 0.0),
        "gnb_y": (float, 250.0),
        "tx_power_dbm_per_mhz": (float, 10.0),
        "bandwidth_mhz": (float, 100.0),
        "center_frequency_ghz": (float, 26.0),
        "n_beams": (int, 16),
        "shadowing_sigma_db": (float, 10.0),
        "shadowing_correlation_m": (float, 10.0),
        "shadowing_resolution_m": (float, 1.0),
    },
    "rem": {
        "tile_size_m": (float, 2.0),
        "linear_average": (bool, False),
    },
    "scenario": {
        "cell_width_m": (float, 500.0),
        "cell_height_m": (float, 500.0),
        "ssb_period_ms": (float, 20.0),
        "n_ues": (int, 300),
        "ue_speed_mps": (float, 25.0),
        "directions_deg": (str, "0,180"),
        "delta_th_db": (float, 8.0),
        "duration_s": (float, 15.0),
        "road_x_m": (float, 250.0),
        "position_noise_m": (float, 0.0),
        "fading_diversity": (int, 2),
    },
    "solver": {
        "beta": (float, 1.0),
        "gamma": (float, 0.9),
        "tolerance": (float, 1e-6),
        "fallback_delta_ho_db": (float, 5.0),
    },
    "seeds": {
        "channel_seed": (int, 1),
        "traffic_seed": (int, 1),
    },
}


class ConfigError(ValueError):
    """Malformed run configuration (unknown keys, bad values)."""


def _coerce(section, key, raw):
    typ, _ = _SCHEMA[section][key]
    try:
        if typ is bool:
            lowered = str(raw).strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {key}={raw!r} is not a valid {typ.__name__}") from exc


def _fmt_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return str(int(value)) if value == int(value) and abs(value) < 1e15 else repr(value)
    return str(value)


@dataclass
class RunConfig:
    """Typed view of the configuration file; values[section][key]."""

    values: dict = field(default_factory=dict)

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls(values={sec: {k: d for k, (_, d) in keys.items()}
                           for sec, keys in _SCHEMA.items()})

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser()
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config: {exc}") from exc
        cfg = cls.defaults()
        for section in parser.sections():
            if section not in _SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in _SCHEMA[section]:
                    raise ConfigError(f"unknown key {key!r} in section [{section}]")
                cfg.values[section][key] = _coerce(section, key, raw)
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                return cls.from_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def get(self, section, key):
        return self.values[section][key]

    def to_text(self) -> str:
        """Canonical serialization: schema ordering, normalized values."""
        out = io.StringIO()
        for sec, keys in _SCHEMA.items():
            out.write(f"[{sec}]\n")
            for key in keys:
                out.write(f"{key} = {_fmt_value(self.values[sec][key])}\n")
            out.write("\n")
        return out.getvalue()

    def checksum(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    # Builders for the runtime objects.

    def directions(self) -> tuple[float, ...]:
        raw = self.get("scenario", "directions_deg")
        try:
            dirs = tuple(float(tok) for tok in str(raw).split(",") if tok.strip() != "")
        except ValueError as exc:
            raise ConfigError(f"directions_deg={raw!r} is not a comma-separated list") from exc
        if not dirs:
            raise ConfigError("directions_deg must name at least one heading")
        return dirs

    def array_config(self) -> ArrayConfig:
        c = self.values["channel"]
        try:
            return ArrayConfig(rows=c["rows"], cols=c["cols"],
                               element_spacing=c["element_spacing"],
                               height_m=c["height_m"],
                               position=(c["gnb_x"], c["gnb_y"]),
                               tx_power_dbm_per_mhz=c["tx_power_dbm_per_mhz"],
                               bandwidth_mhz=c["bandwidth_mhz"],
                               center_frequency_ghz=c["center_frequency_ghz"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def build_channel(self, channel_seed: int | None = None) -> Channel:
        c = self.values["channel"]
        seed = self.get("seeds", "channel_seed") if channel_seed is None else channel_seed
        cfg = self.array_config()
        try:
            codebook = build_codebook(cfg, c["n_beams"])
            area = (self.get("scenario", "cell_width_m"), self.get("scenario", "cell_height_m"))
            shadowing = generate_shadowing(seed=seed, area=area,
                                           resolution=c["shadowing_resolution_m"],
                                           d_corr=c["shadowing_correlation_m"],
                                           sigma=c["shadowing_sigma_db"],
                                           n_beams=c["n_beams"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return Channel(cfg, codebook, shadowing)

    def build_grid(self) -> Grid:
        g = self.get("rem", "tile_size_m")
        if g <= 0:
            raise ConfigError("tile_size_m must be strictly positive")
        width = self.get("scenario", "cell_width_m")
        height = self.get("scenario", "cell_height_m")
        n_x, n_y = round(width / g), round(height / g)
        if abs(n_x * g - width) > 1e-9 or abs(n_y * g - height) > 1e-9:
            raise ConfigError(f"tile size {g} m does not exactly tile the {width}x{height} m cell")
        return Grid(tile_size_m=g, n_x=n_x, n_y=n_y)

    def build_scenario(self, traffic_seed: int | None = None) -> ScenarioConfig:
        s = self.values["scenario"]
        seed = self.get("seeds", "traffic_seed") if traffic_seed is None else traffic_seed
        try:
            return ScenarioConfig(cell_width_m=s["cell_width_m"],
                                  cell_height_m=s["cell_height_m"],
                                  ssb_period_ms=s["ssb_period_ms"],
                                  n_ues=s["n_ues"],
                                  ue_speed_mps=s["ue_speed_mps"],
                                  directions_deg=self.directions(),
                                  delta_th_db=s["delta_th_db"],
                                  duration_s=s["duration_s"],
                                  road_x_m=s["road_x_m"],
                                  position_noise_m=s["position_noise_m"],
                                  fading_diversity=s["fading_diversity"],
                                  seed=seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
