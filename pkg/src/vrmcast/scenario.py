"""Theater geometry, video/tile catalog, pose handling and time bookkeeping."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np


class ConfigurationError(ValueError):
    """Raised when scenario parameters are structurally invalid."""


class TraceError(ValueError):
    """Raised when a pose trace file cannot be parsed or is inconsistent."""


def wrap_angle(deg: float) -> float:
    """Wrap an angle in degrees into [-180, 180)."""
    return (deg + 180.0) % 360.0 - 180.0


# ---------------------------------------------------------------------------
# Tile sets
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class TileSet:
    """Fixed-length bit vector over the tile grid.

    Backed by an int bitmask so union/intersection/difference are single
    integer operations; bit ``n`` set means tile ``n`` is in the set.
    """

    mask: int
    size: int

    def __post_init__(self) -> None:
        if self.mask < 0 or self.mask >> self.size:
            raise ValueError("mask has bits outside the tile grid")

    @classmethod
    def empty(cls, size: int) -> "TileSet":
        return cls(0, size)

    @classmethod
    def full(cls, size: int) -> "TileSet":
        return cls((1 << size) - 1, size)

    @classmethod
    def from_indices(cls, indices: Iterable[int], size: int) -> "TileSet":
        mask = 0
        for n in indices:
            n = int(n)  # numpy ints would overflow the shift
            if not 0 <= n < size:
                raise ValueError(f"tile index {n} outside grid of {size}")
            mask |= 1 << n
        return cls(mask, size)

    def _check(self, other: "TileSet") -> None:
        if self.size != other.size:
            raise ValueError("tile sets live on different grids")

    def __or__(self, other: "TileSet") -> "TileSet":
        self._check(other)
        return TileSet(self.mask | other.mask, self.size)

    def __and__(self, other: "TileSet") -> "TileSet":
        self._check(other)
        return TileSet(self.mask & other.mask, self.size)

    def __sub__(self, other: "TileSet") -> "TileSet":
        self._check(other)
        return TileSet(self.mask & ~other.mask, self.size)

    def __contains__(self, n: int) -> bool:
        return bool((self.mask >> n) & 1)

    def __len__(self) -> int:
        return self.mask.bit_count()

    def __bool__(self) -> bool:
        return self.mask != 0

    def __iter__(self) -> Iterator[int]:
        m, n = self.mask, 0
        while m:
            if m & 1:
                yield n
            m >>= 1
            n += 1

    def issubset(self, other: "TileSet") -> bool:
        self._check(other)
        return self.mask & ~other.mask == 0


# ---------------------------------------------------------------------------
# Catalog and layout
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class VideoCatalog:
    """Shared encoding parameters of every video in the catalog."""

    num_videos: int = 1
    frames_per_video: int = 1800
    frame_period_ms: float = 33.0
    tiles_h: int = 20
    tiles_v: int = 10
    chunk_bits: float = 0.972e6
    fov_deg: float = 100.0

    @property
    def num_tiles(self) -> int:
        return self.tiles_h * self.tiles_v

    @property
    def tile_width_deg(self) -> float:
        return 360.0 / self.tiles_h

    @property
    def tile_height_deg(self) -> float:
        return 180.0 / self.tiles_v

    def tile_center(self, n: int) -> tuple[float, float]:
        """(longitude, latitude) of tile ``n`` in the lat-long projection."""
        row, col = divmod(n, self.tiles_h)
        lon = -180.0 + (col + 0.5) * self.tile_width_deg
        lat = 90.0 - (row + 0.5) * self.tile_height_deg
        return lon, lat


@dataclass(frozen=True)
class Pose3DoF:
    """Head orientation in degrees; yaw wraps modulo 360."""

    yaw: float
    pitch: float
    roll: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))
        if not -90.0 <= self.pitch <= 90.0:
            raise ValueError(f"pitch {self.pitch} outside [-90, 90]")


@dataclass(frozen=True)
class TheaterLayout:
    """Seat grid plus the fixed ceiling-corner cell positions."""

    rows: int
    cols: int
    seat_spacing_m: float = 2.0
    wall_margin_m: float = 4.0
    user_height_m: float = 1.0
    sbs_height_m: float = 3.0
    seat_xy: np.ndarray = field(repr=False, default=None)  # (rows*cols, 2)
    sbs_positions: np.ndarray = field(repr=False, default=None)  # (4, 3)

    @property
    def num_seats(self) -> int:
        return self.rows * self.cols

    @property
    def num_sbs(self) -> int:
        return len(self.sbs_positions)

    def seat_position(self, seat: int) -> np.ndarray:
        """3-D position of a seated user's head."""
        x, y = self.seat_xy[seat]
        return np.array([x, y, self.user_height_m])


def build_theater(
    rows: int,
    cols: int,
    seat_spacing_m: float = 2.0,
    wall_margin_m: float = 4.0,
    user_height_m: float = 1.0,
    sbs_height_m: float = 3.0,
) -> TheaterLayout:
    """Lay out the seat grid and place one cell in each ceiling corner."""
    if rows < 1 or cols < 1:
        raise ConfigurationError("theater needs at least one row and one column")
    xs = wall_margin_m + seat_spacing_m * np.arange(cols)
    ys = wall_margin_m + seat_spacing_m * np.arange(rows)
    seat_xy = np.array([(x, y) for y in ys for x in xs], dtype=float)
    width = 2 * wall_margin_m + seat_spacing_m * (cols - 1)
    depth = 2 * wall_margin_m + seat_spacing_m * (rows - 1)
    sbs = np.array(
        [
            (0.0, 0.0, sbs_height_m),
            (width, 0.0, sbs_height_m),
            (0.0, depth, sbs_height_m),
            (width, depth, sbs_height_m),
        ]
    )
    return TheaterLayout(
        rows=rows,
        cols=cols,
        seat_spacing_m=seat_spacing_m,
        wall_margin_m=wall_margin_m,
        user_height_m=user_height_m,
        sbs_height_m=sbs_height_m,
        seat_xy=seat_xy,
        sbs_positions=sbs,
    )


# ---------------------------------------------------------------------------
# Pose -> tiled viewport
# ---------------------------------------------------------------------------
def pose_to_fov(pose: Pose3DoF, catalog: VideoCatalog) -> TileSet:
    """Tiles whose grid centers fall inside the viewport window of ``pose``.

    The window is ``fov_deg`` tall, centered at the pitch (clamped at the
    poles), and ``fov_deg / cos(pitch)`` wide (capped at 360) to account for
    the lat-long stretching toward the poles.  Roll is ignored: at the grid
    granularity it moves tile membership by under one tile.
    """
    half_v = catalog.fov_deg / 2.0
    lat_lo = max(-90.0, pose.pitch - half_v)
    lat_hi = min(90.0, pose.pitch + half_v)
    cos_p = math.cos(math.radians(pose.pitch))
    if cos_p <= catalog.fov_deg / 360.0:
        half_h = 180.0
    else:
        half_h = min(180.0, catalog.fov_deg / cos_p / 2.0)

    mask = 0
    n = 0
    for row in range(catalog.tiles_v):
        lat = 90.0 - (row + 0.5) * catalog.tile_height_deg
        row_in = lat_lo <= lat <= lat_hi
        for col in range(catalog.tiles_h):
            if row_in:
                lon = -180.0 + (col + 0.5) * catalog.tile_width_deg
                dlon = abs(wrap_angle(lon - pose.yaw))
                if dlon <= half_h:
                    mask |= 1 << n
            n += 1
    return TileSet(mask, catalog.num_tiles)


# ---------------------------------------------------------------------------
# Time bookkeeping
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class SimClock:
    """Slot/frame/blockage index arithmetic on an exact microsecond grid."""

    slot_us: int = 250
    frame_us: int = 33_000
    coherence_us: int = 1_000
    blockage_us: int = 100_000

    @classmethod
    def from_ms(
        cls,
        slot_ms: float = 0.25,
        frame_ms: float = 33.0,
        coherence_ms: float = 1.0,
        blockage_ms: float = 100.0,
    ) -> "SimClock":
        vals = {}
        for name, ms in (
            ("slot_us", slot_ms),
            ("frame_us", frame_ms),
            ("coherence_us", coherence_ms),
            ("blockage_us", blockage_ms),
        ):
            us = round(ms * 1000)
            if us <= 0 or abs(us - ms * 1000) > 1e-6:
                raise ConfigurationError(f"{name} must be a positive whole microsecond count")
            vals[name] = us
        return cls(**vals)

    def frame_of(self, t: int) -> int:
        """1-based frame index playing during slot ``t`` (slots are 1-based)."""
        return -((-t * self.slot_us) // self.frame_us)

    def blockage_epoch_of(self, t: int) -> int:
        return -((-t * self.slot_us) // self.blockage_us)

    def coherence_epoch_of(self, t: int) -> int:
        return -((-t * self.slot_us) // self.coherence_us)

    def slot_start_ms(self, t: int) -> float:
        return (t - 1) * self.slot_us / 1000.0

    def slot_end_ms(self, t: int) -> float:
        return t * self.slot_us / 1000.0

    def first_slot_of_frame(self, f: int) -> int:
        """Smallest slot index whose playing frame is ``f``."""
        return ((f - 1) * self.frame_us) // self.slot_us + 1

    def frame_deadline_ms(self, f: int) -> float:
        """Display deadline of frame ``f``: stream start plus f frame periods."""
        return f * self.frame_us / 1000.0


# ---------------------------------------------------------------------------
# Pose traces
# ---------------------------------------------------------------------------
TRACE_COLUMNS = ("user_id", "video_id", "frame_index", "yaw", "pitch", "roll")


def load_pose_traces(path: str) -> dict[int, dict[int, np.ndarray]]:
    """Load per-user pose traces from CSV.

    Returns ``{user_id: {video_id: array (frames, 3)}}`` with dense 1-based
    frame coverage; gaps are filled by holding the previous pose.  Yaw is
    wrapped into [-180, 180).
    """
    raw: dict[tuple[int, int], list[tuple[int, float, float, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceError("trace file is empty (header row required)") from None
        if [h.strip() for h in header] != list(TRACE_COLUMNS):
            raise TraceError(f"bad header {header!r}, expected {TRACE_COLUMNS}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise TraceError(f"line {lineno}: expected 6 fields, got {len(row)}")
            try:
                uid, vid, f = int(row[0]), int(row[1]), int(row[2])
                yaw, pitch, roll = (float(x) for x in row[3:6])
            except ValueError as exc:
                raise TraceError(f"line {lineno}: {exc}") from None
            if f < 1:
                raise TraceError(f"line {lineno}: frame index {f} must be >= 1")
            if not -90.0 <= pitch <= 90.0:
                raise TraceError(f"line {lineno}: pitch {pitch} outside [-90, 90]")
            key = (uid, vid)
            seq = raw.setdefault(key, [])
            if seq and f <= seq[-1][0]:
                raise TraceError(
                    f"line {lineno}: frame index {f} not increasing for user {uid}"
                )
            seq.append((f, wrap_angle(yaw), pitch, roll))

    traces: dict[int, dict[int, np.ndarray]] = {}
    for (uid, vid), seq in raw.items():
        last_frame = seq[-1][0]
        dense = np.empty((last_frame, 3), dtype=float)
        cursor = 0
        current = np.array(seq[0][1:], dtype=float)
        for f in range(1, last_frame + 1):
            if cursor < len(seq) and seq[cursor][0] == f:
                current = np.array(seq[cursor][1:], dtype=float)
                cursor += 1
            dense[f - 1] = current
        traces.setdefault(uid, {})[vid] = dense
    return traces


# ---------------------------------------------------------------------------
# Human blockers
# ---------------------------------------------------------------------------
BLOCKER_RADIUS_M = 0.3


def blocker_count(
    layout: TheaterLayout,
    occupied_seats: Iterable[int],
    user_seat: int,
    sbs: int,
    radius_m: float = BLOCKER_RADIUS_M,
) -> int:
    """Occupied seats whose head disc intersects the azimuth-plane ray.

    The ray runs from the cell's floor projection to the user's seat; the
    user's own seat never counts.
    """
    a = np.asarray(layout.sbs_positions[sbs][:2], dtype=float)
    b = np.asarray(layout.seat_xy[user_seat], dtype=float)
    ab = b - a
    ab2 = float(ab @ ab)
    count = 0
    for seat in occupied_seats:
        if seat == user_seat:
            continue
        p = layout.seat_xy[seat]
        if ab2 == 0.0:
            d2 = float((p - a) @ (p - a))
        else:
            s = float((p - a) @ ab) / ab2
            s = min(1.0, max(0.0, s))
            closest = a + s * ab
            d2 = float((p - closest) @ (p - closest))
        if d2 <= radius_m * radius_m:
            count += 1
    return count
