"""Indoor mmWave propagation, human blockage, sectored antennas and rates."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ChannelParams:
    """Radio parameters; dB quantities are converted lazily where used."""

    fc_ghz: float = 28.0
    bandwidth_ghz: float = 0.85
    noise_dbm_hz: float = -174.0
    noise_figure_db: float = 9.0
    tx_power_dbm: float = 15.0
    shadow_std_los_db: float = 3.0
    shadow_std_nlos_db: float = 8.03
    blockage_loss_db: tuple[float, float] = (20.0, 30.0)
    blockage_prob_per_blocker: float = 0.05
    sidelobe_gain: float = 0.05
    mu_max_sinr_db: float = 30.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.sidelobe_gain < 1.0:
            raise ValueError("sidelobe gain must lie in [0, 1)")
        lo, hi = self.blockage_loss_db
        if lo < 0 or hi < lo:
            raise ValueError("blockage loss range must be ordered and nonnegative")

    @property
    def bandwidth_hz(self) -> float:
        return self.bandwidth_ghz * 1e9

    @property
    def tx_power_w(self) -> float:
        return dbm_to_watts(self.tx_power_dbm)

    @property
    def noise_power_w(self) -> float:
        """Thermal noise over the full band with the receiver noise figure folded in."""
        return dbm_to_watts(self.noise_dbm_hz + self.noise_figure_db) * self.bandwidth_hz

    @property
    def mu_max_bps(self) -> float:
        """Rate ceiling: Shannon rate at the highest-modulation SINR proxy."""
        return self.bandwidth_hz * math.log2(1.0 + db_to_linear(self.mu_max_sinr_db))


@dataclass
class LinkState:
    """Large-scale state of one cell-to-user link for the current epoch."""

    is_los: bool
    pathloss_db: float
    shadow_db: float
    blockage_db: float
    d2d_m: float
    d3d_m: float

    @property
    def loss_db(self) -> float:
        return self.pathloss_db + self.shadow_db + self.blockage_db

    @property
    def gain_linear(self) -> float:
        return db_to_linear(-self.loss_db)


def los_probability(d2d_m: float) -> float:
    """Distance-dependent line-of-sight probability for indoor open deployments."""
    if d2d_m < 0:
        raise ValueError("distance must be nonnegative")
    if d2d_m <= 5.0:
        return 1.0
    if d2d_m <= 49.0:
        return math.exp(-(d2d_m - 5.0) / 70.8)
    return 0.54 * math.exp(-(d2d_m - 49.0) / 211.7)


def pathloss_los_db(d3d_m: float, fc_ghz_norm: float) -> float:
    return 32.4 + 17.3 * math.log10(d3d_m) + 20.0 * math.log10(fc_ghz_norm)


def pathloss_db(d3d_m: float, fc_ghz_norm: float, is_los: bool) -> float:
    """Large-scale pathloss in dB; the NLOS branch never undercuts LOS."""
    if d3d_m <= 0 or fc_ghz_norm <= 0:
        raise ValueError("distance and frequency must be positive")
    los = pathloss_los_db(d3d_m, fc_ghz_norm)
    if is_los:
        return los
    nlos = 38.3 * math.log10(d3d_m) + 17.3 + 24.9 * math.log10(fc_ghz_norm)
    return max(los, nlos)


def sample_link(
    params: ChannelParams,
    d2d_m: float,
    d3d_m: float,
    blockers: int,
    rng: np.random.Generator,
    prev: LinkState | None = None,
    new_blockage_epoch: bool = True,
    new_coherence_epoch: bool = True,
) -> LinkState:
    """Advance one link's large-scale state.

    Per blockage epoch the LOS state is redrawn and a blockage event occurs
    with probability ``min(1, blockers * blockage_prob_per_blocker)``, adding
    a uniform attenuation from the configured range for the whole epoch.
    Shadowing is redrawn i.i.d. every coherence interval with the deviation
    of the current LOS state.  The RNG stream must be dedicated to the link
    so sequences replay bit-identically under a fixed seed.
    """
    if prev is None or new_blockage_epoch:
        is_los = bool(rng.random() < los_probability(d2d_m))
        p_block = min(1.0, blockers * params.blockage_prob_per_blocker)
        if rng.random() < p_block:
            lo, hi = params.blockage_loss_db
            blockage_db = float(rng.uniform(lo, hi))
        else:
            blockage_db = 0.0
    else:
        is_los = prev.is_los
        blockage_db = prev.blockage_db

    if prev is None or new_blockage_epoch or new_coherence_epoch:
        std = params.shadow_std_los_db if is_los else params.shadow_std_nlos_db
        shadow_db = float(rng.normal(0.0, std)) if std > 0 else 0.0
    else:
        shadow_db = prev.shadow_db

    return LinkState(
        is_los=is_los,
        pathloss_db=pathloss_db(d3d_m, params.fc_ghz, is_los),
        shadow_db=shadow_db,
        blockage_db=blockage_db,
        d2d_m=d2d_m,
        d3d_m=d3d_m,
    )


def antenna_gain(beamwidth_rad: float, deviation_rad: float, sidelobe_gain: float) -> float:
    """Sectored-pattern gain: flat mainlobe within half the beamwidth, else sidelobe."""
    if not 0.0 < beamwidth_rad <= TWO_PI:
        raise ValueError("beamwidth must lie in (0, 2*pi]")
    if abs(deviation_rad) <= beamwidth_rad / 2.0:
        return (TWO_PI - (TWO_PI - beamwidth_rad) * sidelobe_gain) / beamwidth_rad
    return sidelobe_gain


def sinr(
    signal_gain_linear: float,
    tx_gain: float,
    rx_gain: float,
    params: ChannelParams,
    interference_w: float = 0.0,
) -> float:
    """Linear SINR of a link given its channel gain and the summed interference."""
    signal = params.tx_power_w * signal_gain_linear * rx_gain * tx_gain
    return signal / (interference_w + params.noise_power_w)


def interference_term(
    params: ChannelParams, link_gain_linear: float, tx_gain: float, rx_gain: float
) -> float:
    """One interfering cell's contribution to the denominator, in watts."""
    return params.tx_power_w * link_gain_linear * rx_gain * tx_gain


def unicast_rate(sinr_linear: float, params: ChannelParams) -> float:
    """Shannon rate over the band, clipped at the highest-modulation ceiling."""
    if sinr_linear < 0:
        raise ValueError("SINR must be nonnegative")
    return min(params.mu_max_bps, params.bandwidth_hz * math.log2(1.0 + sinr_linear))


def multicast_rate(member_rates: list[float]) -> float:
    """A shared transmission decodes at every receiver: the slowest one sets the rate."""
    if not member_rates:
        raise ValueError("multicast needs at least one receiving member")
    return min(member_rates)


# ---------------------------------------------------------------------------
# Beam grouping
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class BeamAssignment:
    """One transmit beam: boresight azimuth, width, and the member slice it covers."""

    boresight_deg: float
    beamwidth_deg: float
    member_ids: tuple[int, ...]


def _arc_spread(angles: list[float]) -> float:
    return angles[-1] - angles[0] if angles else 0.0


def plan_beams(
    azimuths_deg: dict[int, float],
    beamwidths_deg: tuple[float, ...] = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0),
    max_beams: int = 4,
) -> list[BeamAssignment]:
    """Split users into at most ``max_beams`` contiguous angular groups.

    Members are sorted by azimuth around the circle; every way of cutting the
    circular order into up to ``max_beams`` arcs is scored by its largest arc
    spread and the best cut wins.  Each group gets the narrowest catalog beam
    at least as wide as its spread, or the widest beam when no catalog entry
    fits (members outside that mainlobe then only see the sidelobe floor).
    """
    members = sorted(azimuths_deg)
    if not members:
        return []
    order = sorted(members, key=lambda m: (azimuths_deg[m], m))
    n = len(order)
    if n == 1:
        return [BeamAssignment(azimuths_deg[order[0]], beamwidths_deg[0], (order[0],))]

    angles = [azimuths_deg[m] % 360.0 for m in order]

    def segments_for(cuts: tuple[int, ...]) -> list[tuple[int, int]]:
        # cut i means the arc boundary between order[i] and order[i+1 mod n]
        segs = []
        k = len(cuts)
        for i in range(k):
            start = (cuts[i] + 1) % n
            end = cuts[(i + 1) % k]
            segs.append((start, end))
        return segs

    def seg_spread(start: int, end: int) -> float:
        if start <= end:
            return angles[end] - angles[start]
        # wraps past 360
        return angles[end] + 360.0 - angles[start]

    from itertools import combinations

    # Extra groups never widen the max spread, so use the full beam budget.
    k = min(max_beams, n)
    best_cuts: tuple[int, ...] | None = None
    best_score = math.inf
    for cuts in combinations(range(n), k):
        spread = max(seg_spread(s, e) for s, e in segments_for(cuts))
        if spread < best_score - 1e-12:
            best_score = spread
            best_cuts = cuts

    beams = []
    for start, end in segments_for(best_cuts):
        idx = list(range(start, end + 1)) if start <= end else list(range(start, n)) + list(
            range(0, end + 1)
        )
        group = [order[i] for i in idx]
        spread = seg_spread(start, end)
        width = next((w for w in beamwidths_deg if w >= spread), beamwidths_deg[-1])
        if start <= end:
            boresight = (angles[start] + angles[end]) / 2.0
        else:
            boresight = (angles[start] + angles[end] + 360.0) / 2.0 % 360.0
        beams.append(BeamAssignment(boresight % 360.0, width, tuple(group)))
    return beams


def beam_gains(
    beams: list[BeamAssignment],
    azimuths_deg: dict[int, float],
    sidelobe_gain: float,
) -> dict[int, float]:
    """Transmit gain each member sees from its cell under a beam plan."""
    gains: dict[int, float] = {}
    for beam in beams:
        w_rad = math.radians(beam.beamwidth_deg)
        for m in beam.member_ids:
            dev = abs((azimuths_deg[m] - beam.boresight_deg + 180.0) % 360.0 - 180.0)
            gains[m] = antenna_gain(w_rad, math.radians(dev), sidelobe_gain)
    return gains


def gain_toward(
    beams: list[BeamAssignment], azimuth_deg: float, sidelobe_gain: float
) -> float:
    """Transmit gain of a beam plan toward an arbitrary azimuth (for interference)."""
    best = sidelobe_gain
    for beam in beams:
        dev = abs((azimuth_deg - beam.boresight_deg + 180.0) % 360.0 - 180.0)
        g = antenna_gain(math.radians(beam.beamwidth_deg), math.radians(dev), sidelobe_gain)
        best = max(best, g)
    return best
