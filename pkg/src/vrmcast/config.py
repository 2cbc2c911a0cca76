"""Run configuration: defaults, JSON parsing, validation, scenario presets."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Any

from .channel import ChannelParams
from .scenario import ConfigurationError


class ConfigError(ValueError):
    """Raised for unknown keys or out-of-range values; CLI maps it to exit 2."""


SCHEMES = ("UREAC", "MREAC", "MPROAC", "MPROAC+")


@dataclass
class SimConfig:
    # timing
    sim_time_ms: float = 60000.0
    slot_ms: float = 0.25
    coherence_ms: float = 1.0
    blockage_ms: float = 100.0
    frame_ms: float = 33.0
    # theater and population
    rows: int = 5
    cols: int = 10
    num_videos: int = 1
    users_per_video: int = 10
    # radio
    fc_ghz: float = 28.0
    bandwidth_ghz: float = 0.85
    noise_dbm_hz: float = -174.0
    noise_figure_db: float = 9.0
    tx_power_dbm: float = 15.0
    shadow_los_db: float = 3.0
    shadow_nlos_db: float = 8.03
    blockage_loss_db_min: float = 20.0
    blockage_loss_db_max: float = 30.0
    blockage_prob_per_blocker: float = 0.05
    sidelobe_gain: float = 0.05
    rx_beamwidth_deg: float = 5.0
    tx_beamwidths_deg: tuple[float, ...] = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0)
    sbs_beams: int = 4
    mu_max_sinr_db: float = 30.0
    # control
    mtp_ms: float = 10.0
    epsilon_d: float = 0.01
    v_delta: float = 1e8
    # content
    tiles_h: int = 20
    tiles_v: int = 10
    fov_deg: float = 100.0
    chunk_mbit: float = 0.972
    # prediction and clustering
    clusters_per_video: int = 2
    horizon_frames: int = 5
    history_frames: int = 30
    cutoff: float = 0.5
    predictor: str = "synthetic"
    weight_path: str | None = None
    synthetic_jaccard_map: dict[int, float] = field(
        default_factory=lambda: {5: 0.70, 10: 0.66, 20: 0.62, 30: 0.57}
    )
    # interference learning
    nu1: float = 0.5
    nu2: int = 10
    # pose source
    trace_path: str | None = None
    pose_theta: float = 0.05
    pose_sigma_deg: float = 2.0
    attractor_dwell_frames: int = 150
    attractor_pitch_std_deg: float = 10.0
    user_offset_std_deg: float = 8.0
    # run identity
    seed: int = 0
    scheme: str = "MPROAC+"

    @property
    def chunk_bits(self) -> float:
        return self.chunk_mbit * 1e6

    @property
    def num_users(self) -> int:
        return self.num_videos * self.users_per_video

    def channel_params(self) -> ChannelParams:
        return ChannelParams(
            fc_ghz=self.fc_ghz,
            bandwidth_ghz=self.bandwidth_ghz,
            noise_dbm_hz=self.noise_dbm_hz,
            noise_figure_db=self.noise_figure_db,
            tx_power_dbm=self.tx_power_dbm,
            shadow_std_los_db=self.shadow_los_db,
            shadow_std_nlos_db=self.shadow_nlos_db,
            blockage_loss_db=(self.blockage_loss_db_min, self.blockage_loss_db_max),
            blockage_prob_per_blocker=self.blockage_prob_per_blocker,
            sidelobe_gain=self.sidelobe_gain,
            mu_max_sinr_db=self.mu_max_sinr_db,
        )

    def validate(self) -> None:
        def positive(name: str) -> None:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")

        for name in (
            "sim_time_ms", "slot_ms", "coherence_ms", "blockage_ms", "frame_ms",
            "fc_ghz", "bandwidth_ghz", "chunk_mbit", "fov_deg", "v_delta",
            "mtp_ms", "rx_beamwidth_deg", "pose_theta", "pose_sigma_deg",
        ):
            positive(name)
        for name in ("rows", "cols", "num_videos", "tiles_h",
                     "tiles_v", "clusters_per_video", "history_frames", "nu2",
                     "sbs_beams", "attractor_dwell_frames"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.users_per_video < 0:
            raise ConfigError("users_per_video must be nonnegative")
        if not 0.0 < self.epsilon_d < 1.0:
            raise ConfigError("epsilon_d must lie in (0, 1)")
        if not 0.0 < self.cutoff < 1.0:
            raise ConfigError("cutoff must lie in (0, 1)")
        if not 0.0 <= self.sidelobe_gain < 1.0:
            raise ConfigError("sidelobe_gain must lie in [0, 1)")
        if not 0.0 <= self.nu1 <= 1.0:
            raise ConfigError("nu1 must lie in [0, 1]")
        if not 0.0 <= self.blockage_prob_per_blocker <= 1.0:
            raise ConfigError("blockage_prob_per_blocker must lie in [0, 1]")
        if self.blockage_loss_db_min < 0 or self.blockage_loss_db_max < self.blockage_loss_db_min:
            raise ConfigError("blockage loss range must be ordered and nonnegative")
        if self.horizon_frames < 0:
            raise ConfigError("horizon_frames must be nonnegative")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        if self.predictor not in ("synthetic", "gru"):
            raise ConfigError("predictor must be 'synthetic' or 'gru'")
        if self.predictor == "gru" and not self.weight_path:
            raise ConfigError("predictor 'gru' requires weight_path")
        if self.num_users > self.rows * self.cols:
            raise ConfigError(
                f"{self.num_users} users exceed {self.rows * self.cols} seats"
            )
        if self.users_per_video and self.clusters_per_video > self.users_per_video:
            raise ConfigError("clusters_per_video cannot exceed users_per_video")
        if not self.synthetic_jaccard_map:
            raise ConfigError("synthetic_jaccard_map cannot be empty")
        for k, v in self.synthetic_jaccard_map.items():
            if not 0.0 < v <= 1.0:
                raise ConfigError(f"synthetic jaccard target for horizon {k} outside (0, 1]")

    def synthetic_target(self, horizon: int) -> float:
        """Target overlap for a horizon: linear interpolation over the map keys."""
        table = sorted(self.synthetic_jaccard_map.items())
        if horizon <= table[0][0]:
            return table[0][1]
        if horizon >= table[-1][0]:
            return table[-1][1]
        for (h0, j0), (h1, j1) in zip(table, table[1:]):
            if h0 <= horizon <= h1:
                w = (horizon - h0) / (h1 - h0)
                return j0 + w * (j1 - j0)
        raise AssertionError("unreachable")

    def to_json_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["tx_beamwidths_deg"] = list(self.tx_beamwidths_deg)
        out["synthetic_jaccard_map"] = {
            str(k): v for k, v in sorted(self.synthetic_jaccard_map.items())
        }
        return out


_FIELD_TYPES = {f.name: f for f in dataclasses.fields(SimConfig)}


def _coerce(name: str, value: Any) -> Any:
    if name == "tx_beamwidths_deg":
        if not isinstance(value, (list, tuple)) or not value:
            raise ConfigError("tx_beamwidths_deg must be a nonempty list")
        return tuple(sorted(float(v) for v in value))
    if name == "synthetic_jaccard_map":
        if not isinstance(value, dict):
            raise ConfigError("synthetic_jaccard_map must be an object")
        try:
            return {int(k): float(v) for k, v in value.items()}
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"synthetic_jaccard_map: {exc}") from None
    if name in ("weight_path", "trace_path"):
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"{name} must be a path or null")
        return value
    if name in ("predictor", "scheme"):
        if not isinstance(value, str):
            raise ConfigError(f"{name} must be a string")
        return value
    target = _FIELD_TYPES[name].type
    try:
        if target == "int":
            if isinstance(value, float) and value != int(value):
                raise ConfigError(f"{name} must be an integer")
            return int(value)
        if target == "float":
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: cannot interpret {value!r}") from None
    return value


def parse_config(
    path: str | None = None, overrides: dict[str, Any] | None = None
) -> SimConfig:
    """Defaults, optionally updated from a JSON file, then flag overrides."""
    data: dict[str, Any] = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            text = fh.read().strip()
        if text:
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file is not valid JSON: {exc}") from None
            if not isinstance(data, dict):
                raise ConfigError("config file must contain a JSON object")
    if overrides:
        data.update(overrides)

    cfg = SimConfig()
    for key, value in data.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown configuration key: {key!r}")
        setattr(cfg, key, _coerce(key, value))
    try:
        cfg.validate()
    except ConfigurationError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def parse_override_value(name: str, raw: str) -> Any:
    """Interpret a ``--param name=value`` string with JSON first, string fallback."""
    if name not in _FIELD_TYPES:
        raise ConfigError(f"unknown configuration key: {name!r}")
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


PRESETS = {
    "sT-1v": dict(rows=5, cols=10, num_videos=1, users_per_video=10),
    "sT-3v": dict(rows=5, cols=10, num_videos=3, users_per_video=10),
    "sT-5v": dict(rows=5, cols=10, num_videos=5, users_per_video=10),
    "bT-1v": dict(rows=10, cols=15, num_videos=1, users_per_video=15),
    "bT-3v": dict(rows=10, cols=15, num_videos=3, users_per_video=15),
    "bT-5v": dict(rows=10, cols=15, num_videos=5, users_per_video=15),
    "bT-10v": dict(rows=10, cols=15, num_videos=10, users_per_video=15),
}


def preset(name: str, overrides: dict[str, Any] | None = None) -> SimConfig:
    """Named theater scenarios: small (10 users/video) and big (15 users/video)."""
    if name not in PRESETS:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}"
        )
    merged = dict(PRESETS[name])
    if overrides:
        merged.update(overrides)
    cfg = SimConfig()
    for key, value in merged.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown configuration key: {key!r}")
        setattr(cfg, key, _coerce(key, value))
    cfg.validate()
    return cfg
