"""Traffic/virtual queue dynamics and the closed-form per-slot control laws.

Admission control works on three per-user quantities: the traffic backlog Q
(bits), an auxiliary virtual queue Z that tracks the gap between granted and
admitted traffic, and per-frame delay virtual queues F that inflate a user's
scheduling weight while its playing frame is past the motion-to-photon budget.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .scenario import TileSet


@dataclass(frozen=True)
class LyapunovParams:
    v_delta: float = 1e8
    epsilon_d: float = 0.01
    a_max_bits: float = 0.0
    mu_max_bps: float = 0.0
    mtp_ms: float = 10.0

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon_d < 1.0:
            raise ValueError("delay reliability metric must lie in (0, 1)")
        if self.v_delta <= 0:
            raise ValueError("drift/utility trade-off weight must be positive")


@dataclass
class ChunkBacklog:
    """One queued chunk: frame, tile, bits left, and its request slot."""

    frame: int
    tile: int
    remaining_bits: float
    arrival_slot: int


@dataclass
class UserQueueState:
    """Q is always the sum of per-chunk residuals; Z and F are virtual."""

    q_bits: float = 0.0
    z_bits: float = 0.0
    f_bits: dict[int, float] = field(default_factory=dict)
    backlog: list[ChunkBacklog] = field(default_factory=list)

    @property
    def f_total(self) -> float:
        return sum(self.f_bits.values())

    def recompute_q(self) -> float:
        return sum(c.remaining_bits for c in self.backlog)


def mtp_slack_ms(arrival_slot: int, slot: int, slot_ms: float, mtp_ms: float) -> float:
    """Time left before the motion-to-photon budget expires, floored at zero."""
    return max(0.0, arrival_slot * slot_ms + mtp_ms - slot * slot_ms)


def select_auxiliary(z_bits: float, v_delta: float, a_max_bits: float) -> float:
    """Optimal auxiliary grant under a linear utility: all or nothing.

    Granting ``a_max`` scores ``(v_delta - z)·a_max``; the boundary ``z ==
    v_delta`` ties and resolves toward granting.
    """
    return a_max_bits if z_bits <= v_delta else 0.0


def alpha_weight(
    q_bits: float, f_total_bits: float, epsilon_d: float, mtp_violated: bool
) -> float:
    """Scheduling weight of a user: backlog term plus, under violation, a delay term."""
    alpha_q = q_bits * (1.0 + epsilon_d**2) - epsilon_d * f_total_bits
    if not mtp_violated:
        return alpha_q
    alpha_f = f_total_bits + (1.0 - 2.0 * epsilon_d) * q_bits
    return alpha_q + alpha_f


def admit(z_bits: float, alpha: float) -> int:
    """Whole-frame admission: admit exactly when Z dominates the weight."""
    return 1 if z_bits >= alpha else 0


def admitted_bits(
    a_real: int,
    a_pred: int,
    missing_real: TileSet,
    cluster_pred: TileSet,
    chunk_bits: float,
) -> float:
    """Bits entering the queue this slot.

    ``missing_real`` must already exclude tiles delivered or queued earlier,
    so proactively delivered content is never double-queued.
    """
    return chunk_bits * (a_real * len(missing_real) + a_pred * len(cluster_pred))


def update_z(z_bits: float, admitted: float, gamma: float) -> float:
    return max(0.0, z_bits - admitted + gamma)


def update_f(
    f_bits: float, q_next_bits: float, epsilon_d: float, mtp_violated: bool
) -> float:
    """Delay virtual queue of the playing frame; grows only in violation slots."""
    drift = (1.0 if mtp_violated else 0.0) - epsilon_d
    return max(0.0, f_bits + drift * q_next_bits)


def update_queues(
    state: UserQueueState,
    served_bits: dict[tuple[int, int], float],
    admitted_chunks: list[ChunkBacklog],
    gamma: float,
    epsilon_d: float,
    mtp_violated: bool,
    playing_frame: int,
    expired_frames: set[int] | None = None,
    f_enabled: bool = True,
) -> float:
    """Advance one user's queues through one slot; returns the bits dropped.

    Service is applied chunk by chunk (never past a chunk's residual), expired
    frames are dropped, then new admissions are appended.  Z moves by the
    admitted/granted gap; the playing frame's F queue moves by the violation
    indicator against the post-update backlog.
    """
    dropped = 0.0
    admitted = sum(c.remaining_bits for c in admitted_chunks)
    for chunk in state.backlog:
        bits = served_bits.get((chunk.frame, chunk.tile), 0.0)
        if bits < 0 or bits > chunk.remaining_bits + 1e-6:
            raise ValueError("served bits exceed chunk residual")
        chunk.remaining_bits = max(0.0, chunk.remaining_bits - bits)

    keep: list[ChunkBacklog] = []
    for chunk in state.backlog:
        if chunk.remaining_bits <= 0.0:
            continue
        if expired_frames and chunk.frame in expired_frames:
            dropped += chunk.remaining_bits
            continue
        keep.append(chunk)
    keep.extend(admitted_chunks)
    state.backlog = keep
    state.q_bits = state.recompute_q()

    state.z_bits = update_z(state.z_bits, admitted, gamma)

    if f_enabled:
        f_prev = state.f_bits.get(playing_frame, 0.0)
        state.f_bits[playing_frame] = update_f(
            f_prev, state.q_bits, epsilon_d, mtp_violated
        )
    return dropped


# ---------------------------------------------------------------------------
# Drift bound checking
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class UserSlotRecord:
    """Per-user snapshot of one slot transition for the bound checker."""

    q_before: float
    z_before: float
    f_before: float  # playing frame's delay queue before the update
    q_after: float
    z_after: float
    f_after: float
    served: float  # total bits served this slot (all queued chunks)
    admitted: float
    gamma: float
    violated: bool


@dataclass(frozen=True)
class DriftBoundResult:
    lhs: float
    rhs: float
    holds: bool


def drift_bound_check(
    records: list[UserSlotRecord], params: LyapunovParams
) -> DriftBoundResult:
    """Evaluate the one-slot drift-minus-reward bound against its closed form.

    The left side is the exact quadratic-congestion change minus the scaled
    linear reward.  The right side groups the quadratic residue terms into a
    per-slot constant and debits the scheduling weight times net service plus
    the auxiliary queue times net admission.  The inequality holds for any
    control as long as service never exceeds a chunk residual.
    """
    eps = params.epsilon_d
    lhs = 0.0
    rhs = 0.0
    for r in records:
        l_before = 0.5 * (r.q_before**2 + r.z_before**2 + r.f_before**2)
        l_after = 0.5 * (r.q_after**2 + r.z_after**2 + r.f_after**2)
        reward = params.v_delta * r.gamma
        lhs += (l_after - l_before) - reward

        ind = 1.0 if r.violated else 0.0
        net = r.served - r.admitted
        delta0 = (
            0.5 * (1.0 + (ind - eps) ** 2) * net**2
            + 0.5 * (r.admitted - r.gamma) ** 2
            + 0.5 * (ind - eps) ** 2 * r.q_before**2
            + (ind - eps) * r.f_before * r.q_before
        )
        alpha = (
            r.q_before
            + (ind - eps) ** 2 * r.q_before
            + (ind - eps) * r.f_before
        )
        rhs += (
            delta0
            - reward
            - alpha * net
            - r.z_before * (r.admitted - r.gamma)
        )
    scale = max(1.0, abs(lhs), abs(rhs))
    return DriftBoundResult(lhs=lhs, rhs=rhs, holds=lhs <= rhs + 1e-9 * scale)
