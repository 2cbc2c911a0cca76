"""Slot-driven orchestration: poses, prediction, clustering, admission,
matching, transmission, queue evolution, and per-frame bookkeeping.

One engine instance runs one (config, scheme, seed) combination and is fully
deterministic: every random stream is derived from the seed, and the slot
loop is single-threaded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from . import channel as ch
from . import clustering as cl
from . import lyapunov as ly
from . import matching as mt
from . import predictor as pr
from .config import SimConfig
from .scenario import (
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


class SchemeKind(Enum):
    UREAC = "UREAC"
    MREAC = "MREAC"
    MPROAC = "MPROAC"
    MPROAC_PLUS = "MPROAC+"

    @property
    def multicast(self) -> bool:
        return self is not SchemeKind.UREAC

    @property
    def proactive(self) -> bool:
        return self in (SchemeKind.MPROAC, SchemeKind.MPROAC_PLUS)

    @property
    def delay_queues(self) -> bool:
        return self is SchemeKind.MPROAC_PLUS


@dataclass
class FrameLifecycle:
    """Delivery record of one (user, frame) pair."""

    user: int
    frame: int
    request_slot: int
    deadline_ms: float
    fov: TileSet
    delay_ms: float | None = None
    hd_complete: bool = False
    delivered: TileSet | None = None

    @property
    def closed(self) -> bool:
        return self.delay_ms is not None


@dataclass(frozen=True)
class MetricsReport:
    scheme: str
    seed: int
    frames_scored: int
    avg_delay_ms: float
    p99_delay_ms: float
    hd_delivery_rate: float
    delivered_jaccard: float
    violation_fraction: float
    admitted_bits: float
    delivered_bits: float
    dropped_bits: float
    residual_bits: float

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "seed": self.seed,
            "frames_scored": self.frames_scored,
            "avg_delay_ms": self.avg_delay_ms,
            "p99_delay_ms": self.p99_delay_ms,
            "hd_delivery_rate": self.hd_delivery_rate,
            "delivered_jaccard": self.delivered_jaccard,
            "violation_fraction": self.violation_fraction,
            "admitted_bits": self.admitted_bits,
            "delivered_bits": self.delivered_bits,
            "dropped_bits": self.dropped_bits,
            "residual_bits": self.residual_bits,
        }


CSV_HEADER = (
    "user,frame,scheme,t_request_ms,deadline_ms,delay_ms,"
    "hd_complete,jaccard_delivered,tiles_sent,tiles_fov"
)


def nearest_rank_percentile(values: list[float], pct: float) -> float:
    """Nearest-rank percentile: the ceil(p*n)-th smallest sample."""
    if not values:
        return 0.0
    ordered = sorted(values)
    rank = max(1, math.ceil(pct / 100.0 * len(ordered)))
    return ordered[rank - 1]


def record_metrics(
    lifecycles: list[FrameLifecycle],
    scheme: str,
    seed: int,
    violation_fraction: float = 0.0,
    totals: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0),
) -> MetricsReport:
    closed = [lc for lc in lifecycles if lc.closed]
    delays = [lc.delay_ms for lc in closed]
    jaccards = [
        pr.jaccard(lc.delivered, lc.fov) for lc in closed if lc.delivered is not None
    ]
    return MetricsReport(
        scheme=scheme,
        seed=seed,
        frames_scored=len(closed),
        avg_delay_ms=float(np.mean(delays)) if delays else 0.0,
        p99_delay_ms=nearest_rank_percentile(delays, 99.0),
        hd_delivery_rate=(
            sum(1 for lc in closed if lc.hd_complete) / len(closed) if closed else 0.0
        ),
        delivered_jaccard=float(np.mean(jaccards)) if jaccards else 0.0,
        violation_fraction=violation_fraction,
        admitted_bits=totals[0],
        delivered_bits=totals[1],
        dropped_bits=totals[2],
        residual_bits=totals[3],
    )


# ---------------------------------------------------------------------------
# Synthetic pose generation
# ---------------------------------------------------------------------------
def generate_poses(cfg: SimConfig, num_frames: int, rng: np.random.Generator) -> np.ndarray:
    """Smoothed random-walk head motion with per-video shared attractors.

    Users watching the same video drift toward a common attractor that jumps
    every ``attractor_dwell_frames``, so their viewports overlap: the content
    correlation that clustered transmission exploits.  Returns degrees,
    shape (users, num_frames, 3).
    """
    users = cfg.num_users
    out = np.empty((users, num_frames, 3))
    for v in range(cfg.num_videos):
        n_epochs = num_frames // cfg.attractor_dwell_frames + 1
        att_yaw = rng.uniform(-180.0, 180.0, size=n_epochs)
        att_pitch = np.clip(
            rng.normal(0.0, cfg.attractor_pitch_std_deg, size=n_epochs), -30.0, 30.0
        )
        for j in range(cfg.users_per_video):
            u = v * cfg.users_per_video + j
            yaw = att_yaw[0] + rng.normal(0.0, cfg.user_offset_std_deg)
            pitch = att_pitch[0] + rng.normal(0.0, cfg.user_offset_std_deg / 2.0)
            noise = rng.normal(0.0, cfg.pose_sigma_deg, size=(num_frames, 2))
            for f in range(num_frames):
                epoch = f // cfg.attractor_dwell_frames
                yaw = wrap_angle(
                    yaw + cfg.pose_theta * wrap_angle(att_yaw[epoch] - yaw) + noise[f, 0]
                )
                pitch = pitch + cfg.pose_theta * (att_pitch[epoch] - pitch) + 0.5 * noise[f, 1]
                pitch = min(85.0, max(-85.0, pitch))
                out[u, f] = (yaw, pitch, 0.0)
    return out


@lru_cache(maxsize=8)
def max_viewport_tiles(tiles_h: int, tiles_v: int, fov_deg: float) -> int:
    """Upper bound on viewport size over all poses (sizes the admission cap)."""
    tile_w = 360.0 / tiles_h
    tile_h = 180.0 / tiles_v
    best = 0
    for pitch in np.linspace(-90.0, 90.0, 721):
        lat_lo = max(-90.0, pitch - fov_deg / 2.0)
        lat_hi = min(90.0, pitch + fov_deg / 2.0)
        rows = min(tiles_v, int((lat_hi - lat_lo) / tile_h) + 1)
        cos_p = math.cos(math.radians(pitch))
        if cos_p <= fov_deg / 360.0:
            cols = tiles_h
        else:
            cols = min(tiles_h, int(fov_deg / cos_p / tile_w) + 1)
        best = max(best, rows * cols)
    return best


# ---------------------------------------------------------------------------
# Engine internals
# ---------------------------------------------------------------------------
@dataclass
class _ClusterRuntime:
    video: int
    members: list[int]
    member_arr: np.ndarray
    member_row: dict[int, int]
    chunk_keys: list[tuple[int, int]]  # (frame, tile), sorted
    key_index: dict[tuple[int, int], int]
    residual: np.ndarray  # (members, chunks) bits outstanding
    tx_gains: np.ndarray  # (num_sbs, members)
    beam_plans: list[list[ch.BeamAssignment]]  # per sbs
    urgencies: np.ndarray | None = None


class _UserState:
    __slots__ = (
        "z_bits", "q_bits", "f_playing", "alpha", "gamma", "violated",
        "playing_pending", "admitted_this_slot", "estimator",
    )

    def __init__(self, estimator: mt.InterferenceEstimator) -> None:
        self.z_bits = 0.0
        self.q_bits = 0.0
        self.f_playing = 0.0
        self.alpha = 0.0
        self.gamma = 0.0
        self.violated = False
        self.playing_pending = 0
        self.admitted_this_slot = 0.0
        self.estimator = estimator


class Engine:
    """Deterministic slot-level simulation of one (config, scheme, seed) run."""

    def __init__(
        self,
        cfg: SimConfig,
        scheme: SchemeKind | str | None = None,
        seed: int | None = None,
        record_drift: bool = False,
        assert_invariants: bool = False,
    ):
        cfg.validate()
        self.cfg = cfg
        self.scheme = SchemeKind(scheme) if scheme is not None else SchemeKind(cfg.scheme)
        self.seed = cfg.seed if seed is None else seed
        self.record_drift = record_drift
        self.assert_invariants = assert_invariants
        self.clock = SimClock.from_ms(
            cfg.slot_ms, cfg.frame_ms, cfg.coherence_ms, cfg.blockage_ms
        )
        self.params = cfg.channel_params()
        self.layout = build_theater(cfg.rows, cfg.cols)
        self.total_slots = int(round(cfg.sim_time_ms * 1000)) // self.clock.slot_us
        self.total_frames = max(1, self.clock.frame_of(max(1, self.total_slots)))
        self.horizon = cfg.horizon_frames
        self.proactive = self.scheme.proactive and self.horizon > 0

        self.catalog = VideoCatalog(
            num_videos=cfg.num_videos,
            frames_per_video=self.total_frames + self.horizon + 1,
            frame_period_ms=cfg.frame_ms,
            tiles_h=cfg.tiles_h,
            tiles_v=cfg.tiles_v,
            chunk_bits=cfg.chunk_bits,
            fov_deg=cfg.fov_deg,
        )
        self.users = cfg.num_users
        self.video_of = [u // cfg.users_per_video for u in range(self.users)] if self.users else []

        root = np.random.SeedSequence(self.seed)
        ss_seats, ss_pose, ss_links, ss_da, ss_pred = root.spawn(5)
        seat_rng = np.random.default_rng(ss_seats)
        perm = seat_rng.permutation(self.layout.num_seats)
        self.seat_of = [int(perm[u]) for u in range(self.users)]
        self.positions = (
            self.layout.seat_xy[self.seat_of]
            if self.users
            else np.zeros((0, 2))
        )

        pose_rng = np.random.default_rng(ss_pose)
        if cfg.trace_path:
            self.poses = self._poses_from_traces(cfg.trace_path)
        else:
            self.poses = generate_poses(cfg, self.catalog.frames_per_video, pose_rng)

        n_sbs = self.layout.num_sbs
        self.n_sbs = n_sbs
        sbs_xy = self.layout.sbs_positions[:, :2]
        diff = self.positions[None, :, :] - sbs_xy[:, None, :]  # (B, U, 2)
        self.d2d = np.hypot(diff[:, :, 0], diff[:, :, 1])
        dz = self.layout.user_height_m - self.layout.sbs_height_m
        self.d3d = np.sqrt(self.d2d**2 + dz**2)
        self.az_sbs_to_user = np.degrees(np.arctan2(diff[:, :, 1], diff[:, :, 0])) % 360.0
        self.az_user_to_sbs = (self.az_sbs_to_user + 180.0) % 360.0
        self.blockers = np.array(
            [
                [
                    blocker_count(self.layout, self.seat_of, self.seat_of[u], b)
                    for u in range(self.users)
                ]
                for b in range(n_sbs)
            ]
        ).reshape(n_sbs, self.users)

        link_seeds = ss_links.spawn(max(1, n_sbs * self.users))
        self.link_rngs = [
            [np.random.default_rng(link_seeds[b * self.users + u]) for u in range(self.users)]
            for b in range(n_sbs)
        ]
        self.link_states: list[list[ch.LinkState | None]] = [
            [None] * self.users for _ in range(n_sbs)
        ]
        self.h_gain = np.zeros((n_sbs, self.users))
        self.da_rng = np.random.default_rng(ss_da)
        self.pred_rng = np.random.default_rng(ss_pred)

        self.rx_main_gain = ch.antenna_gain(
            math.radians(cfg.rx_beamwidth_deg), 0.0, cfg.sidelobe_gain
        )
        self.rx_bw_rad = math.radians(cfg.rx_beamwidth_deg)

        max_fov = max_viewport_tiles(cfg.tiles_h, cfg.tiles_v, cfg.fov_deg)
        self.a_max_bits = cfg.chunk_bits * (max_fov + self.catalog.num_tiles)
        self.lyap = ly.LyapunovParams(
            v_delta=cfg.v_delta,
            epsilon_d=cfg.epsilon_d,
            a_max_bits=self.a_max_bits,
            mu_max_bps=self.params.mu_max_bps,
            mtp_ms=cfg.mtp_ms,
        )
        self.mtp_slots = int(round(cfg.mtp_ms * 1000)) // self.clock.slot_us

        self.model = pr.load_weights(cfg.weight_path) if cfg.predictor == "gru" else None
        if self.model is not None:
            if self.model.num_tiles != self.catalog.num_tiles:
                raise pr.WeightFormatError(
                    f"weight file covers {self.model.num_tiles} tiles, "
                    f"catalog has {self.catalog.num_tiles}"
                )
            if self.proactive and self.model.horizon != self.horizon:
                raise pr.WeightFormatError(
                    f"weight file was trained for horizon {self.model.horizon}, "
                    f"run is configured for {self.horizon}"
                )
        self.synthetic_target = cfg.synthetic_target(max(1, self.horizon))

        self.user_states = [
            _UserState(mt.InterferenceEstimator(nu1=cfg.nu1, window=cfg.nu2))
            for _ in range(self.users)
        ]
        self.clusters: list[_ClusterRuntime] = []
        self.delivered: dict[tuple[int, int], int] = {}
        self.lifecycles: dict[tuple[int, int], FrameLifecycle] = {}
        self.closed_lifecycles: list[FrameLifecycle] = []
        self.fov_cache: dict[tuple[int, int], TileSet] = {}
        self.playing_frame = 0
        self.frame_request_slot: dict[int, int] = {}

        self.total_admitted = 0.0
        self.total_delivered = 0.0
        self.total_dropped = 0.0
        self.violation_slots = 0
        self.observed_user_slots = 0
        self.drift_records: list[list[ly.UserSlotRecord]] = []


    # -- inputs ---------------------------------------------------------------
    def _poses_from_traces(self, path: str) -> np.ndarray:
        traces = load_pose_traces(path)
        need = self.catalog.frames_per_video
        out = np.zeros((self.users, need, 3))
        for u in range(self.users):
            v = self.video_of[u]
            per_user = traces.get(u)
            if not per_user or v not in per_user:
                raise TraceError(f"trace file lacks user {u} / video {v}")
            arr = per_user[v]
            take = min(need, len(arr))
            out[u, :take] = arr[:take]
            if take < need:
                out[u, take:] = arr[take - 1]
        return out

    def true_fov(self, user: int, frame: int) -> TileSet:
        key = (user, frame)
        hit = self.fov_cache.get(key)
        if hit is None:
            row = self.poses[user, frame - 1]
            hit = pose_to_fov(Pose3DoF(row[0], row[1], row[2]), self.catalog)
            self.fov_cache[key] = hit
        return hit

    # -- frame boundary ---------------------------------------------------------
    def _predict(self, user: int, target_frame: int) -> TileSet:
        if self.model is not None:
            t_p = self.model.input_len
            fr = self.playing_frame
            idx = np.clip(np.arange(fr - t_p + 1, fr + 1), 1, None) - 1
            seq = pr.normalize_pose_sequence(self.poses[user, idx])
            return pr.forward(self.model, seq).tiles
        return pr.synthetic_predict(
            self.true_fov(user, target_frame),
            self.synthetic_target,
            self.catalog,
            self.pred_rng,
        )

    def _expire_frame(self, frame: int) -> None:
        """Drop leftovers of a frame whose display window just ended."""
        if frame < 1:
            return
        for crt in self.clusters:
            cols = [i for i, (f, _) in enumerate(crt.chunk_keys) if f == frame]
            if not cols:
                continue
            sub = crt.residual[:, cols]
            per_user = sub.sum(axis=1)
            for row, u in enumerate(crt.members):
                if per_user[row] > 0.0:
                    self.user_states[u].q_bits -= float(per_user[row])
                    self.total_dropped += float(per_user[row])
            crt.residual[:, cols] = 0.0
        for u in range(self.users):
            lc = self.lifecycles.pop((u, frame), None)
            if lc is None:
                continue
            if not lc.closed:
                lc.delay_ms = lc.deadline_ms - self.clock.slot_start_ms(lc.request_slot)
                lc.hd_complete = False
            lc.delivered = TileSet(
                self.delivered.pop((u, frame), 0), self.catalog.num_tiles
            )
            self.closed_lifecycles.append(lc)

    def _carry_over_chunks(self) -> list[dict[tuple[int, int], float]]:
        pending: list[dict[tuple[int, int], float]] = [dict() for _ in range(self.users)]
        for crt in self.clusters:
            for row, u in enumerate(crt.members):
                res = crt.residual[row]
                for col in np.flatnonzero(res > 0.0):
                    pending[u][crt.chunk_keys[col]] = float(res[col])
        return pending

    def _build_cluster_runtime(
        self,
        video: int,
        members: list[int],
        chunks: dict[tuple[int, int], dict[int, float]],
    ) -> _ClusterRuntime:
        keys = sorted(chunks)
        key_index = {k: i for i, k in enumerate(keys)}
        member_row = {u: r for r, u in enumerate(members)}
        residual = np.zeros((len(members), len(keys)))
        for key, holders in chunks.items():
            col = key_index[key]
            for u, bits in holders.items():
                residual[member_row[u], col] = bits
        tx_gains = np.full((self.n_sbs, len(members)), self.cfg.sidelobe_gain)
        plans: list[list[ch.BeamAssignment]] = []
        for b in range(self.n_sbs):
            az = {u: float(self.az_sbs_to_user[b, u]) for u in members}
            plan = ch.plan_beams(az, self.cfg.tx_beamwidths_deg, self.cfg.sbs_beams)
            gains = ch.beam_gains(plan, az, self.cfg.sidelobe_gain)
            for r, u in enumerate(members):
                tx_gains[b, r] = gains[u]
            plans.append(plan)
        return _ClusterRuntime(
            video=video,
            members=members,
            member_arr=np.array(members, dtype=int),
            member_row=member_row,
            chunk_keys=keys,
            key_index=key_index,
            residual=residual,
            tx_gains=tx_gains,
            beam_plans=plans,
        )

    def _frame_boundary(self, t: int, fr: int) -> None:
        cfg = self.cfg
        self._expire_frame(fr - 1)
        self.playing_frame = fr
        self.frame_request_slot[fr] = t
        fp = fr + self.horizon

        predicted: dict[int, TileSet] = {}
        basis: dict[int, TileSet] = {}
        for u in range(self.users):
            if self.proactive:
                predicted[u] = self._predict(u, fp)
                basis[u] = predicted[u]
            else:
                basis[u] = self.true_fov(u, fr)

        # Partition each video's audience (singletons when unicast).
        groups: list[tuple[int, list[int]]] = []
        if not self.scheme.multicast:
            groups = [(self.video_of[u], [u]) for u in range(self.users)]
        else:
            for v in range(cfg.num_videos):
                members = [u for u in range(self.users) if self.video_of[u] == v]
                if not members:
                    continue
                mat = cl.build_distance_matrix(
                    [basis[u] for u in members],
                    self.positions[members],
                    self.layout.seat_spacing_m,
                )
                part = cl.agglomerate(mat, min(cfg.clusters_per_video, len(members)))
                groups.extend((v, [members[i] for i in cluster]) for cluster in part)

        shared_fovs = []
        for v, members in groups:
            shared = TileSet.empty(self.catalog.num_tiles)
            if self.proactive:
                for u in members:
                    shared = shared | predicted[u]
            shared_fovs.append(shared)

        if self.assert_invariants:
            seen = sorted(u for _, members in groups for u in members)
            assert seen == list(range(self.users)), "partition must cover every user once"
            for (v, members), shared in zip(groups, shared_fovs):
                assert all(self.video_of[u] == v for u in members)
                if self.proactive:
                    assert all(predicted[u].issubset(shared) for u in members)

        pending = self._carry_over_chunks()
        empty = TileSet.empty(self.catalog.num_tiles)
        new_chunks: list[dict[tuple[int, int], dict[int, float]]] = [dict() for _ in groups]
        for gi, (v, members) in enumerate(groups):
            shared = shared_fovs[gi]
            for u in members:
                st = self.user_states[u]
                fov_now = self.true_fov(u, fr)
                have = self.delivered.get((u, fr), 0)
                queued = 0
                for (f, n) in pending[u]:
                    if f == fr:
                        queued |= 1 << n
                missing = TileSet(fov_now.mask & ~have & ~queued, self.catalog.num_tiles)

                lc = FrameLifecycle(
                    user=u,
                    frame=fr,
                    request_slot=t,
                    deadline_ms=self.clock.frame_deadline_ms(fr),
                    fov=fov_now,
                )
                self.lifecycles[(u, fr)] = lc
                st.playing_pending = len(TileSet(fov_now.mask & ~have, self.catalog.num_tiles))
                if st.playing_pending == 0:
                    lc.delay_ms = 0.0
                    lc.hd_complete = True
                st.f_playing = 0.0
                st.violated = False

                alpha = ly.alpha_weight(st.q_bits, 0.0, cfg.epsilon_d, False)
                a_u = ly.admit(st.z_bits, alpha)
                pred_fov = shared if self.proactive else empty
                admitted = ly.admitted_bits(a_u, a_u, missing, pred_fov, cfg.chunk_bits)
                st.admitted_this_slot = admitted
                if a_u:
                    bucket = new_chunks[gi]
                    for n in missing:
                        bucket.setdefault((fr, n), {})[u] = cfg.chunk_bits
                    if self.proactive:
                        for n in pred_fov:
                            bucket.setdefault((fp, n), {})[u] = cfg.chunk_bits
                    st.q_bits += admitted
                    self.total_admitted += admitted

        self.clusters = []
        self.txg = np.full((self.n_sbs, self.users), self.cfg.sidelobe_gain)
        for gi, (v, members) in enumerate(groups):
            chunks = new_chunks[gi]
            for u in members:
                for key, bits in pending[u].items():
                    chunks.setdefault(key, {})[u] = bits
            crt = self._build_cluster_runtime(v, members, chunks)
            self.txg[:, crt.member_arr] = crt.tx_gains
            self.clusters.append(crt)

    # -- per-slot helpers ---------------------------------------------------
    def _refresh_channel(self, t: int) -> None:
        first = t == 1
        new_block = first or self.clock.blockage_epoch_of(t) != self.clock.blockage_epoch_of(t - 1)
        new_coher = first or self.clock.coherence_epoch_of(t) != self.clock.coherence_epoch_of(t - 1)
        if not (new_block or new_coher):
            return
        for b in range(self.n_sbs):
            states = self.link_states[b]
            rngs = self.link_rngs[b]
            for u in range(self.users):
                states[u] = ch.sample_link(
                    self.params,
                    float(self.d2d[b, u]),
                    float(self.d3d[b, u]),
                    int(self.blockers[b, u]),
                    rngs[u],
                    prev=states[u],
                    new_blockage_epoch=new_block,
                    new_coherence_epoch=new_coher,
                )
                self.h_gain[b, u] = states[u].gain_linear

    def _interference_at(self, u: int, serving: int, active: list[tuple[int, int]]) -> float:
        total = 0.0
        for b2, k2 in active:
            if b2 == serving:
                continue
            g_tx = ch.gain_toward(
                self.clusters[k2].beam_plans[b2],
                float(self.az_sbs_to_user[b2, u]),
                self.cfg.sidelobe_gain,
            )
            dev = abs(
                wrap_angle(self.az_user_to_sbs[b2, u] - self.az_user_to_sbs[serving, u])
            )
            g_rx = ch.antenna_gain(self.rx_bw_rad, math.radians(dev), self.cfg.sidelobe_gain)
            total += ch.interference_term(self.params, self.h_gain[b2, u], g_tx, g_rx)
        return total

    def _pool_iter(self, crt: _ClusterRuntime):
        """Cluster request pool in urgency order, materialized lazily."""
        urg = crt.urgencies
        order = np.argsort(-urg, kind="stable")
        for col in order:
            if urg[col] <= 0.0:
                return
            rows = np.flatnonzero(crt.residual[:, col] > 0.0)
            if rows.size == 0:
                continue
            f, n = crt.chunk_keys[col]
            yield mt.PoolChunk(
                frame=f,
                tile=n,
                urgency=float(urg[col]),
                residual_bits={
                    crt.members[r]: float(crt.residual[r, col]) for r in rows
                },
            )

    def _apply_delivery(self, crt: _ClusterRuntime, chunk: mt.PoolChunk, got: dict[int, float], t: int) -> None:
        col = crt.key_index[(chunk.frame, chunk.tile)]
        for u, bits in got.items():
            row = crt.member_row[u]
            left = crt.residual[row, col] - bits
            crt.residual[row, col] = left if left > 1e-9 else 0.0
            st = self.user_states[u]
            st.q_bits -= bits
            self.total_delivered += bits
            if crt.residual[row, col] == 0.0:
                mask = self.delivered.get((u, chunk.frame), 0)
                self.delivered[(u, chunk.frame)] = mask | (1 << chunk.tile)
                if chunk.frame == self.playing_frame:
                    lc = self.lifecycles.get((u, chunk.frame))
                    if lc is not None and chunk.tile in lc.fov and not lc.closed:
                        st.playing_pending -= 1
                        if st.playing_pending == 0:
                            lc.delay_ms = (
                                self.clock.slot_end_ms(t)
                                - self.clock.slot_start_ms(lc.request_slot)
                            )
                            lc.hd_complete = True
                            st.f_playing = 0.0
                            st.violated = False

    # -- main loop ------------------------------------------------------------
    def step(self, t: int) -> None:
        cfg = self.cfg
        fr = self.clock.frame_of(t)
        if fr != self.playing_frame:
            self._frame_boundary(t, fr)
        else:
            for st in self.user_states:
                st.admitted_this_slot = 0.0
        self._refresh_channel(t)

        eps = cfg.epsilon_d
        use_f = self.scheme.delay_queues
        request_slot = self.frame_request_slot[fr]
        violated_now = t - request_slot >= self.mtp_slots
        drift_before = None
        if self.record_drift:
            drift_before = [
                (st.q_bits - st.admitted_this_slot, st.z_bits, st.f_playing if use_f else 0.0)
                for st in self.user_states
            ]
        per_user_served = [0.0] * self.users if self.record_drift else None

        for st in self.user_states:
            st.violated = violated_now and st.playing_pending > 0
            if st.violated:
                self.violation_slots += 1
            f_tot = st.f_playing if use_f else 0.0
            st.alpha = ly.alpha_weight(st.q_bits, f_tot, eps, st.violated)
            st.gamma = ly.select_auxiliary(st.z_bits, cfg.v_delta, self.a_max_bits)
        self.observed_user_slots += self.users

        # Cluster pools, urgencies and estimated utilities.
        n_k = len(self.clusters)
        util_sbs = np.full((self.n_sbs, n_k), np.nan)
        util_cluster = np.full((n_k, self.n_sbs), np.nan)
        noise_w = self.params.noise_power_w
        p_w = self.params.tx_power_w
        bw = self.params.bandwidth_hz
        mu_cap = self.params.mu_max_bps
        states = self.user_states
        alpha_all = np.fromiter((st.alpha for st in states), float, self.users)
        i_hat_all = np.fromiter(
            (st.estimator.estimate() for st in states), float, self.users
        )
        # Estimated rate of every (cell, user) pair under each user's own
        # cluster beam plan; exactly the pairs the utilities can reference.
        mu_hat = np.minimum(
            mu_cap,
            bw
            * np.log2(
                1.0
                + (p_w * self.rx_main_gain)
                * self.h_gain
                * self.txg
                / (i_hat_all + noise_w)
            ),
        )
        for k, crt in enumerate(self.clusters):
            if crt.residual.size == 0:
                crt.urgencies = None
                continue
            pending_mask = crt.residual > 0.0
            urg = alpha_all[crt.member_arr] @ pending_mask
            if not urg.any():
                crt.urgencies = None
                continue
            crt.urgencies = urg
            col = int(np.argmax(urg))
            if urg[col] <= 0.0:
                continue
            requesters = crt.member_arr[pending_mask[:, col]]
            util_cluster[k, :] = mu_hat[:, requesters].min(axis=1)
            util_sbs[:, k] = urg[col]

        matching = mt.deferred_acceptance(util_sbs, util_cluster, self.da_rng)

        # True rates and interference under the fixed matching.
        active = list(matching.pairs)
        pools: dict[int, object] = {}
        member_rates: dict[int, dict[int, float]] = {}
        for b, k in active:
            crt = self.clusters[k]
            i_true = np.empty(len(crt.members))
            for row, u in enumerate(crt.members):
                i_true[row] = self._interference_at(u, b, active)
                states[u].estimator.observe(float(i_true[row]))
            rate_vec = np.minimum(
                mu_cap,
                bw
                * np.log2(
                    1.0
                    + p_w
                    * self.h_gain[b, crt.member_arr]
                    * crt.tx_gains[b]
                    * self.rx_main_gain
                    / (i_true + noise_w)
                ),
            )
            member_rates[k] = dict(zip(crt.members, rate_vec.tolist()))
            pools[k] = self._pool_iter(crt)

        served = mt.settle_slot(matching, pools, member_rates, self.clock.slot_us / 1e6)
        for (b, k) in active:
            crt = self.clusters[k]
            for chunk, got in served[k]:
                self._apply_delivery(crt, chunk, got, t)
                if per_user_served is not None:
                    for u, bits in got.items():
                        per_user_served[u] += bits

        # Queue evolution.
        for u, st in enumerate(self.user_states):
            st.z_bits = ly.update_z(st.z_bits, st.admitted_this_slot, st.gamma)
            if use_f and st.playing_pending > 0:
                st.f_playing = ly.update_f(st.f_playing, st.q_bits, eps, st.violated)

        if self.record_drift:
            records = []
            for u, st in enumerate(self.user_states):
                q0, z0, f0 = drift_before[u]
                records.append(
                    ly.UserSlotRecord(
                        q_before=q0,
                        z_before=z0,
                        f_before=f0,
                        q_after=st.q_bits,
                        z_after=st.z_bits,
                        f_after=st.f_playing if use_f else 0.0,
                        served=per_user_served[u],
                        admitted=st.admitted_this_slot,
                        gamma=st.gamma,
                        violated=st.violated,
                    )
                )
            self.drift_records.append(records)

    def run(self) -> tuple[MetricsReport, list[str]]:
        for t in range(1, self.total_slots + 1):
            self.step(t)
        violation_fraction = (
            self.violation_slots / self.observed_user_slots
            if self.observed_user_slots
            else 0.0
        )
        residual = sum(st.q_bits for st in self.user_states)
        report = record_metrics(
            self.closed_lifecycles,
            self.scheme.value,
            self.seed,
            violation_fraction,
            (self.total_admitted, self.total_delivered, self.total_dropped, residual),
        )
        rows = []
        for lc in sorted(self.closed_lifecycles, key=lambda x: (x.frame, x.user)):
            jac = pr.jaccard(lc.delivered, lc.fov) if lc.delivered is not None else 0.0
            sent = len(lc.delivered) if lc.delivered is not None else 0
            rows.append(
                f"{lc.user},{lc.frame},{self.scheme.value},"
                f"{self.clock.slot_start_ms(lc.request_slot):.3f},{lc.deadline_ms:.3f},"
                f"{lc.delay_ms:.6f},{int(lc.hd_complete)},{jac:.6f},{sent},{len(lc.fov)}"
            )
        return report, rows


def run(
    cfg: SimConfig,
    scheme: SchemeKind | str | None = None,
    seed: int | None = None,
    **engine_kwargs,
) -> tuple[MetricsReport, list[str]]:
    """Convenience wrapper: build an engine and run it to completion."""
    return Engine(cfg, scheme=scheme, seed=seed, **engine_kwargs).run()
