"""Geometry, tile mapping, clock arithmetic and trace ingestion."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vrmcast.scenario import (
    BLOCKER_RADIUS_M,
    ConfigurationError,
    Pose3DoF,
    SimClock,
    TileSet,
    TraceError,
    VideoCatalog,
    blocker_count,
    build_theater,
    load_pose_traces,
    pose_to_fov,
    wrap_angle,
)

CATALOG = VideoCatalog()


# ---------------------------------------------------------------------------
# TileSet
# ---------------------------------------------------------------------------
def test_tileset_algebra():
    a = TileSet.from_indices([1, 2, 3], 10)
    b = TileSet.from_indices([3, 4], 10)
    assert sorted(a | b) == [1, 2, 3, 4]
    assert sorted(a & b) == [3]
    assert sorted(a - b) == [1, 2]
    assert len(a) == 3 and 2 in a and 4 not in a
    assert TileSet.full(10).mask == (1 << 10) - 1


def test_tileset_rejects_out_of_grid():
    with pytest.raises(ValueError):
        TileSet.from_indices([10], 10)
    with pytest.raises(ValueError):
        TileSet(1 << 10, 10)
    with pytest.raises(ValueError):
        TileSet.from_indices([0], 4) | TileSet.from_indices([0], 5)


# ---------------------------------------------------------------------------
# Theater
# ---------------------------------------------------------------------------
def test_small_theater():
    layout = build_theater(5, 10)
    assert layout.num_seats == 50
    assert layout.num_sbs == 4
    assert np.allclose(layout.sbs_positions[:, 2], 3.0)
    # seats span the grid with 2 m spacing and 4 m margins
    assert np.isclose(layout.seat_xy[:, 0].min(), 4.0)
    assert np.isclose(layout.seat_xy[:, 0].max(), 4.0 + 2.0 * 9)
    assert np.isclose(layout.seat_xy[:, 1].max(), 4.0 + 2.0 * 4)
    diffs = np.diff(sorted(set(layout.seat_xy[:, 0])))
    assert np.allclose(diffs, 2.0)


def test_big_theater():
    layout = build_theater(10, 15)
    assert layout.num_seats == 150
    width = 2 * 4.0 + 2.0 * 14
    assert np.isclose(layout.sbs_positions[:, 0].max(), width)


def test_single_seat_centered():
    layout = build_theater(1, 1)
    assert layout.num_seats == 1
    assert np.allclose(layout.seat_xy[0], [4.0, 4.0])
    assert np.allclose(layout.sbs_positions[1][:2], [8.0, 0.0])


def test_zero_rows_rejected():
    with pytest.raises(ConfigurationError):
        build_theater(0, 5)


def test_build_theater_deterministic():
    a, b = build_theater(3, 4), build_theater(3, 4)
    assert np.array_equal(a.seat_xy, b.seat_xy)
    assert np.array_equal(a.sbs_positions, b.sbs_positions)


# ---------------------------------------------------------------------------
# Tiled viewport mapping (independent enumeration oracle)
# ---------------------------------------------------------------------------
def oracle_fov(yaw: float, pitch: float, catalog: VideoCatalog) -> set[int]:
    """Direct re-enumeration: every tile center tested against the window."""
    half_v = catalog.fov_deg / 2.0
    cos_p = math.cos(math.radians(pitch))
    if cos_p > 0 and catalog.fov_deg / cos_p < 360.0:
        half_h = catalog.fov_deg / cos_p / 2.0
    else:
        half_h = 180.0
    out = set()
    for n in range(catalog.num_tiles):
        lon, lat = catalog.tile_center(n)
        dlon = (lon - yaw + 180.0) % 360.0 - 180.0
        lo = max(-90.0, pitch - half_v)
        hi = min(90.0, pitch + half_v)
        if lo <= lat <= hi and abs(dlon) <= half_h:
            out.add(n)
    return out


def test_forward_fov_is_36_tiles():
    tiles = pose_to_fov(Pose3DoF(0.0, 0.0), CATALOG)
    assert len(tiles) == 36
    assert set(tiles) == oracle_fov(0.0, 0.0, CATALOG)


def test_fov_wraps_at_seam():
    tiles = pose_to_fov(Pose3DoF(180.0 - 1e-6, 0.0), CATALOG)
    assert len(tiles) == 36
    assert set(tiles) == oracle_fov(180.0 - 1e-6, 0.0, CATALOG)
    cols = {n % CATALOG.tiles_h for n in tiles}
    assert 0 in cols and CATALOG.tiles_h - 1 in cols  # both grid edges present


def test_fov_at_pole_covers_full_rows():
    tiles = pose_to_fov(Pose3DoF(0.0, 90.0), CATALOG)
    rows = {n // CATALOG.tiles_h for n in tiles}
    assert rows == {0, 1, 2}  # top rows, horizontally complete
    assert len(tiles) == 3 * CATALOG.tiles_h


@given(
    yaw=st.floats(-180.0, 179.999),
    pitch=st.floats(-90.0, 90.0),
)
@settings(max_examples=150, deadline=None)
def test_fov_matches_oracle(yaw, pitch):
    assert set(pose_to_fov(Pose3DoF(yaw, pitch), CATALOG)) == oracle_fov(
        yaw, pitch, CATALOG
    )


@given(yaw=st.floats(-180.0, 179.999), shift=st.integers(-20, 20))
@settings(max_examples=60, deadline=None)
def test_fov_yaw_shift_is_column_rotation(yaw, shift):
    width = CATALOG.tile_width_deg
    base = pose_to_fov(Pose3DoF(yaw, 0.0), CATALOG)
    moved = pose_to_fov(Pose3DoF(wrap_angle(yaw + shift * width), 0.0), CATALOG)
    rotated = {
        (n // CATALOG.tiles_h) * CATALOG.tiles_h
        + (n % CATALOG.tiles_h + shift) % CATALOG.tiles_h
        for n in base
    }
    assert set(moved) == rotated


@given(yaw=st.floats(-180.0, 179.999))
@settings(max_examples=60, deadline=None)
def test_fov_size_at_zero_pitch_periodic_in_yaw(yaw):
    # A 100-degree window over an 18-degree grid covers 5 or 6 column centers
    # depending on alignment, so the size is periodic in yaw (period = one
    # tile width) rather than constant.
    size = len(pose_to_fov(Pose3DoF(yaw, 0.0), CATALOG))
    assert size in (30, 36)
    shifted = len(
        pose_to_fov(Pose3DoF(wrap_angle(yaw + CATALOG.tile_width_deg), 0.0), CATALOG)
    )
    assert size == shifted


# ---------------------------------------------------------------------------
# Clock
# ---------------------------------------------------------------------------
def test_frame_index_relation():
    clock = SimClock.from_ms()
    frames = [clock.frame_of(t) for t in range(1, 1000)]
    assert frames[0] == 1
    assert all(b - a in (0, 1) for a, b in zip(frames, frames[1:]))
    # one frame every 132 slots at defaults
    changes = [t for t in range(2, 1000) if clock.frame_of(t) != clock.frame_of(t - 1)]
    assert np.allclose(np.diff(changes), 132)
    assert clock.frame_of(132) == 1 and clock.frame_of(133) == 2


def test_blockage_epoch_scale():
    clock = SimClock.from_ms()
    assert clock.blockage_epoch_of(400) == 1
    assert clock.blockage_epoch_of(401) == 2
    assert clock.blockage_us // clock.slot_us == 400


def test_frame_deadline_and_first_slot():
    clock = SimClock.from_ms()
    assert clock.first_slot_of_frame(1) == 1
    assert clock.first_slot_of_frame(2) == 133
    assert clock.frame_deadline_ms(2) == 66.0
    assert clock.slot_start_ms(1) == 0.0
    assert clock.slot_end_ms(1) == 0.25


# ---------------------------------------------------------------------------
# Pose traces
# ---------------------------------------------------------------------------
def _write(tmp_path, text):
    p = tmp_path / "trace.csv"
    p.write_text(text, encoding="utf-8")
    return str(p)


def test_hold_last_fill(tmp_path):
    path = _write(
        tmp_path,
        "user_id, video_id, frame_index, yaw, pitch, roll\n"
        "0,0,1,10,5,0\n"
        "0,0,3,20,6,0\n",
    )
    traces = load_pose_traces(path)
    arr = traces[0][0]
    assert arr.shape == (3, 3)
    assert np.allclose(arr[1], arr[0])  # frame 2 held from frame 1
    assert np.allclose(arr[2], [20, 6, 0])


def test_yaw_normalized(tmp_path):
    path = _write(
        tmp_path,
        "user_id,video_id,frame_index,yaw,pitch,roll\n0,0,1,400,0,0\n",
    )
    assert load_pose_traces(path)[0][0][0, 0] == pytest.approx(40.0)


def test_full_dataset_shape_accepted(tmp_path):
    lines = ["user_id,video_id,frame_index,yaw,pitch,roll"]
    for u in range(3):
        for f in (1, 900, 1800):
            lines.append(f"{u},{u % 2},{f},{u * 10},{u},0")
    traces = load_pose_traces(_write(tmp_path, "\n".join(lines) + "\n"))
    assert traces[2][0].shape == (1800, 3)


def test_malformed_row_reports_line(tmp_path):
    path = _write(
        tmp_path,
        "user_id,video_id,frame_index,yaw,pitch,roll\n0,0,1,oops,0,0\n",
    )
    with pytest.raises(TraceError, match="line 2"):
        load_pose_traces(path)


def test_non_monotone_frames_rejected(tmp_path):
    path = _write(
        tmp_path,
        "user_id,video_id,frame_index,yaw,pitch,roll\n0,0,5,0,0,0\n0,0,4,0,0,0\n",
    )
    with pytest.raises(TraceError, match="not increasing"):
        load_pose_traces(path)


def test_missing_header_rejected(tmp_path):
    with pytest.raises(TraceError, match="header"):
        load_pose_traces(_write(tmp_path, "0,0,1,0,0,0\n"))


# ---------------------------------------------------------------------------
# Blockers
# ---------------------------------------------------------------------------
def _oracle_blockers(layout, occupied, user_seat, sbs):
    """Dense sampling along the ray instead of the projection formula."""
    a = layout.sbs_positions[sbs][:2]
    b = layout.seat_xy[user_seat]
    samples = a[None, :] + np.linspace(0, 1, 20001)[:, None] * (b - a)[None, :]
    count = 0
    for seat in occupied:
        if seat == user_seat:
            continue
        p = layout.seat_xy[seat]
        d = np.min(np.hypot(samples[:, 0] - p[0], samples[:, 1] - p[1]))
        if d <= BLOCKER_RADIUS_M + 1e-9:
            count += 1
    return count


def test_no_seat_between_corner_pair():
    layout = build_theater(5, 10)
    # nearest seat to SBS 0 (corner at origin) with nobody closer
    assert blocker_count(layout, [0], 0, 0) == 0


def test_single_user_theater_never_blocked():
    layout = build_theater(5, 10)
    for b in range(4):
        assert blocker_count(layout, [17], 17, b) == 0


def test_diagonal_link_matches_sampling_oracle():
    layout = build_theater(5, 10)
    occupied = list(range(50))
    for sbs in range(4):
        for seat in (0, 27, 49):
            assert blocker_count(layout, occupied, seat, sbs) == _oracle_blockers(
                layout, occupied, seat, sbs
            )


def test_blocker_count_reflection_symmetric():
    layout = build_theater(4, 6)
    occupied = list(range(24))

    def mirror(seat):
        row, col = divmod(seat, 6)
        return row * 6 + (5 - col)

    # mirroring the seat grid and swapping the two front corners is a symmetry
    for seat in range(24):
        left = blocker_count(layout, occupied, seat, 0)
        right = blocker_count(layout, occupied, mirror(seat), 1)
        assert left == right
