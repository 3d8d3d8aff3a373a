"""Radio Environment Map: per-tile per-beam RSRP averages built from
location-tagged reports, plus the UE mobility-pattern map, with a versioned
text artifact format (REMv1)."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

SPEED_BUCKET_MPS = 5.0
SPEED_MAX_MPS = 50.0
DIRECTION_STEP_DEG = 45.0


def quantize_speed(v, bucket=SPEED_BUCKET_MPS, v_max=SPEED_MAX_MPS):
    """Round speed to the nearest bucket multiple in [0, v_max]; ties go down."""
    q = math.ceil(v / bucket - 0.5) * bucket
    return float(min(max(q, 0.0), v_max))


def quantize_direction(alpha_deg, step=DIRECTION_STEP_DEG):
    """Round a heading to the nearest multiple of `step` in [0, 360); ties go down."""
    q = math.ceil(alpha_deg / step - 0.5) * step
    return float(q % 360.0)


def _fmt_num(x):
    """Integral values print without a decimal point; floats use repr (round-trips)."""
    f = float(x)
    if f == int(f) and abs(f) < 1e15:
        return str(int(f))
    return repr(f)


def _parse_header_fields(header_line, required):
    """key=value tokens after the version tag; missing keys are an error."""
    fields = {}
    for token in header_line.split()[1:]:
        key, sep, value = token.partition("=")
        if not sep:
            raise ValueError(f"malformed header token {token!r}")
        fields[key] = value
    missing = [key for key in required if key not in fields]
    if missing:
        raise ValueError(f"header missing fields: {', '.join(missing)}")
    return fields


@dataclass
class Grid:
    """Square tiling of the cell area; tile (0, 0) covers [0, g) x [0, g)."""

    tile_size_m: float = 2.0
    n_x: int = 250
    n_y: int = 250
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.tile_size_m <= 0:
            raise ValueError("tile size must be strictly positive")
        if self.n_x < 1 or self.n_y < 1:
            raise ValueError("grid must contain at least one tile")

    @property
    def width_m(self):
        return self.n_x * self.tile_size_m

    @property
    def height_m(self):
        return self.n_y * self.tile_size_m

    def _axis_index(self, coord, n_tiles):
        # ceil(c/g) - 1 puts boundary points into the lower tile (nearest-center
        # quantization with ties toward the lower index).
        if coord < 0 or coord > n_tiles * self.tile_size_m:
            raise ValueError(f"position coordinate {coord} outside grid")
        return min(max(math.ceil(coord / self.tile_size_m) - 1, 0), n_tiles - 1)

    def quantize_location(self, pos):
        """Tile (ix, iy) whose center is nearest to pos; raises on out-of-bounds."""
        x, y = float(pos[0]) - self.origin[0], float(pos[1]) - self.origin[1]
        return self._axis_index(x, self.n_x), self._axis_index(y, self.n_y)

    def contains(self, pos):
        x, y = float(pos[0]) - self.origin[0], float(pos[1]) - self.origin[1]
        return 0 <= x <= self.width_m and 0 <= y <= self.height_m

    def tile_center(self, tile):
        ix, iy = tile
        return (self.origin[0] + (ix + 0.5) * self.tile_size_m,
                self.origin[1] + (iy + 0.5) * self.tile_size_m)


class RsrpMap:
    """Running per-(tile, beam) RSRP means with report counts.

    Averaging happens in the dB domain by default; set linear_average=True to
    average in linear power instead (the stored value stays in dBm).
    """

    def __init__(self, grid: Grid, n_beams: int, linear_average: bool = False):
        self.grid = grid
        self.n_beams = n_beams
        self.linear_average = linear_average
        self.mean_dbm = np.zeros((grid.n_x, grid.n_y, n_beams))
        self.count = np.zeros((grid.n_x, grid.n_y, n_beams), dtype=np.int64)

    def _check(self, tile, beam):
        ix, iy = tile
        if not (0 <= ix < self.grid.n_x and 0 <= iy < self.grid.n_y):
            raise IndexError(f"tile {tile} outside grid")
        if not 0 <= beam < self.n_beams:
            raise IndexError(f"beam {beam} out of range [0, {self.n_beams})")
        return ix, iy

    def ingest_report(self, tile, beam, rsrp_dbm):
        """Fold one report into the running mean for (tile, beam)."""
        ix, iy = self._check(tile, beam)
        self.count[ix, iy, beam] += 1
        n = self.count[ix, iy, beam]
        if self.linear_average:
            mean_mw = 10.0 ** (self.mean_dbm[ix, iy, beam] / 10.0) if n > 1 else 0.0
            mean_mw += (10.0 ** (rsrp_dbm / 10.0) - mean_mw) / n
            self.mean_dbm[ix, iy, beam] = 10.0 * np.log10(mean_mw)
        else:
            self.mean_dbm[ix, iy, beam] += (rsrp_dbm - self.mean_dbm[ix, iy, beam]) / n

    def query_rsrp(self, tile, beam):
        """Stored mean (dBm) for (tile, beam), or None when never reported."""
        ix, iy = self._check(tile, beam)
        if self.count[ix, iy, beam] == 0:
            return None
        return float(self.mean_dbm[ix, iy, beam])

    def tile_means(self, tile):
        """Means of all beams at a tile, shape (n_beams,); raises if any unknown."""
        ix, iy = self._check(tile, 0)
        if not np.all(self.count[ix, iy, :] > 0):
            raise ValueError(f"tile {tile} has beams without RSRP data")
        return self.mean_dbm[ix, iy, :].copy()

    def known_tiles(self):
        """Sorted tiles where every beam has at least one report."""
        full = np.all(self.count > 0, axis=2)
        return [(int(ix), int(iy)) for ix, iy in zip(*np.nonzero(full))]


class MobilityMap:
    """Empirical P(v, alpha | tile, v~, alpha~) from quantized observations."""

    def __init__(self):
        # (tile, v_cond, a_cond) -> {(v, a): count}
        self._counts: dict = {}

    @staticmethod
    def _check_quantized(v, alpha):
        if alpha % DIRECTION_STEP_DEG != 0 or not 0 <= alpha < 360:
            raise ValueError(f"direction {alpha} is not quantized to {DIRECTION_STEP_DEG} deg")
        if v < 0:
            raise ValueError(f"speed {v} is negative")

    def observe_transition(self, tile, v_cond, a_cond, v, alpha):
        """Count one observed (v, alpha) outcome for the conditioning triple."""
        self._check_quantized(v_cond, a_cond)
        self._check_quantized(v, alpha)
        key = (tuple(tile), float(v_cond), float(a_cond))
        bucket = self._counts.setdefault(key, {})
        outcome = (float(v), float(alpha))
        bucket[outcome] = bucket.get(outcome, 0) + 1

    def mobility_dist(self, tile, v_cond, a_cond):
        """Distribution {(v, alpha): p}; identity fallback when unobserved."""
        key = (tuple(tile), float(v_cond), float(a_cond))
        bucket = self._counts.get(key)
        if not bucket:
            return {(float(v_cond), float(a_cond)): 1.0}
        total = sum(bucket.values())
        return {pair: c / total for pair, c in sorted(bucket.items())}

    def observed_pairs(self):
        """Sorted set of every (v, alpha) seen as conditioning or outcome."""
        pairs = set()
        for (_, v_cond, a_cond), bucket in self._counts.items():
            pairs.add((v_cond, a_cond))
            pairs.update(bucket.keys())
        return sorted(pairs)

    def entries(self):
        """Deterministic iteration: (tile, v_cond, a_cond, v, a, count)."""
        for key in sorted(self._counts):
            (tile, v_cond, a_cond) = key
            for (v, a), c in sorted(self._counts[key].items()):
                yield tile, v_cond, a_cond, v, a, c


class Rem:
    """RSRP map plus mobility map over one grid, with REMv1 persistence."""

    def __init__(self, grid: Grid, n_beams: int, linear_average: bool = False):
        self.grid = grid
        self.n_beams = n_beams
        self.rsrp = RsrpMap(grid, n_beams, linear_average)
        self.mobility = MobilityMap()

    def to_bytes(self) -> bytes:
        lines = [f"REMv1 g={_fmt_num(self.grid.tile_size_m)} nx={self.grid.n_x} "
                 f"ny={self.grid.n_y} nbeams={self.n_beams}"]
        lines.append("RSRP: tile_x,tile_y,beam,mean_dbm,count")
        cnt = self.rsrp.count
        for ix, iy, b in zip(*np.nonzero(cnt > 0)):
            lines.append(f"{ix},{iy},{b},{float(self.rsrp.mean_dbm[ix, iy, b])!r},"
                         f"{int(cnt[ix, iy, b])}")
        lines.append("MOB: tile_x,tile_y,vq,aq,v,a,count")
        for (ix, iy), vq, aq, v, a, c in self.mobility.entries():
            lines.append(f"{ix},{iy},{_fmt_num(vq)},{_fmt_num(aq)},{_fmt_num(v)},{_fmt_num(a)},{c}")
        return ("\n".join(lines) + "\n").encode()

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    def checksum(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Rem":
        lines = data.decode().splitlines()
        if not lines or not lines[0].startswith("REMv1 "):
            raise ValueError("not a REMv1 artifact")
        header = _parse_header_fields(lines[0], ("g", "nx", "ny", "nbeams"))
        grid = Grid(tile_size_m=float(header["g"]), n_x=int(header["nx"]), n_y=int(header["ny"]))
        rem = cls(grid, n_beams=int(header["nbeams"]))
        section = None
        for line in lines[1:]:
            if line.startswith("RSRP:"):
                section = "rsrp"
                continue
            if line.startswith("MOB:"):
                section = "mob"
                continue
            if not line:
                continue
            parts = line.split(",")
            try:
                if section == "rsrp":
                    ix, iy, b = int(parts[0]), int(parts[1]), int(parts[2])
                    rem.rsrp.mean_dbm[ix, iy, b] = float(parts[3])
                    rem.rsrp.count[ix, iy, b] = int(parts[4])
                elif section == "mob":
                    ix, iy = int(parts[0]), int(parts[1])
                    vq, aq, v, a = (float(parts[i]) for i in range(2, 6))
                    key = ((ix, iy), vq, aq)
                    bucket = rem.mobility._counts.setdefault(key, {})
                    bucket[(v, a)] = int(parts[6])
                else:
                    raise ValueError("data row before any section header")
            except (IndexError, ValueError) as exc:
                raise ValueError(f"malformed REMv1 row {line!r}: {exc}") from exc
        return rem

    @classmethod
    def load(cls, path) -> "Rem":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())
