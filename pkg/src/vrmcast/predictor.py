"""Viewport prediction: GRU inference from a weight file, plus a synthetic stand-in.

The synthetic predictor perturbs the true future viewport to a target overlap
level so scheduling experiments can dial prediction accuracy without a trained
model.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .scenario import TileSet, VideoCatalog

WEIGHT_MAGIC = b"GRUFOV1\n"
_HEADER = struct.Struct("<IIIIII d")  # layers, input, hidden, tiles, t_p, t_h, cutoff


class WeightFormatError(ValueError):
    """Raised when a weight file is malformed or inconsistent."""


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


@dataclass(frozen=True)
class GruLayerWeights:
    """Parameters of one recurrent layer.

    ``w_*`` act on the step input, ``z_*`` on the previous hidden state;
    ``update``/``reset`` name the two gates, the unsuffixed pair feeds the
    candidate state.
    """

    w_update: np.ndarray
    z_update: np.ndarray
    b_update: np.ndarray
    w_reset: np.ndarray
    z_reset: np.ndarray
    b_reset: np.ndarray
    w_cand: np.ndarray
    z_cand: np.ndarray
    b_cand: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.w_update.shape[0]

    @property
    def input_size(self) -> int:
        return self.w_update.shape[1]

    def validate(self) -> None:
        h, i = self.w_update.shape
        expect = {
            "w_update": (h, i), "z_update": (h, h), "b_update": (h,),
            "w_reset": (h, i), "z_reset": (h, h), "b_reset": (h,),
            "w_cand": (h, i), "z_cand": (h, h), "b_cand": (h,),
        }
        for name, shape in expect.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise WeightFormatError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise WeightFormatError(f"{name} contains non-finite values")

    def ordered_arrays(self) -> list[np.ndarray]:
        return [
            self.w_update, self.z_update, self.b_update,
            self.w_reset, self.z_reset, self.b_reset,
            self.w_cand, self.z_cand, self.b_cand,
        ]


def gru_step(x: np.ndarray, h_prev: np.ndarray, w: GruLayerWeights) -> np.ndarray:
    """Advance one recurrent step.

    Update gate interpolates between the previous state and a candidate state
    whose recurrent input is damped by the reset gate.  ``x`` and ``h_prev``
    may carry a leading batch axis.
    """
    if x.shape[-1] != w.input_size or h_prev.shape[-1] != w.hidden_size:
        raise ValueError(
            f"shape mismatch: x {x.shape}, h {h_prev.shape}, "
            f"layer ({w.hidden_size}, {w.input_size})"
        )
    update = sigmoid(x @ w.w_update.T + h_prev @ w.z_update.T + w.b_update)
    reset = sigmoid(x @ w.w_reset.T + h_prev @ w.z_reset.T + w.b_reset)
    cand = np.tanh(x @ w.w_cand.T + (reset * h_prev) @ w.z_cand.T + w.b_cand)
    return (1.0 - update) * h_prev + update * cand


@dataclass(frozen=True)
class PredictorModel:
    """Two recurrent layers, a ReLU between them, and a dense sigmoid head."""

    layers: tuple[GruLayerWeights, GruLayerWeights]
    dense_w: np.ndarray  # (num_tiles, hidden)
    dense_b: np.ndarray  # (num_tiles,)
    input_len: int
    horizon: int
    cutoff: float

    @property
    def num_tiles(self) -> int:
        return self.dense_w.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.layers[0].hidden_size

    def validate(self) -> None:
        if len(self.layers) != 2:
            raise WeightFormatError(f"expected 2 recurrent layers, got {len(self.layers)}")
        for layer in self.layers:
            layer.validate()
        if self.layers[1].input_size != self.layers[0].hidden_size:
            raise WeightFormatError("second layer input does not match first layer output")
        if self.dense_w.shape != (self.num_tiles, self.hidden_size):
            raise WeightFormatError("dense weight shape inconsistent")
        if self.dense_b.shape != (self.num_tiles,):
            raise WeightFormatError("dense bias shape inconsistent")
        if not (np.all(np.isfinite(self.dense_w)) and np.all(np.isfinite(self.dense_b))):
            raise WeightFormatError("dense head contains non-finite values")
        if not 0.0 < self.cutoff < 1.0:
            raise WeightFormatError(f"cutoff {self.cutoff} outside (0, 1)")


@dataclass(frozen=True)
class PredictionResult:
    logits: np.ndarray
    tiles: TileSet


def normalize_pose_sequence(poses_deg: np.ndarray) -> np.ndarray:
    """Scale (T, 3) [yaw, pitch, roll] degrees into [-1, 1] model inputs."""
    return np.asarray(poses_deg, dtype=float) / np.array([180.0, 90.0, 180.0])


def forward_batch(model: PredictorModel, sequences: np.ndarray) -> np.ndarray:
    """Logits for a batch of normalized pose sequences of shape (B, T, 3)."""
    seq = np.asarray(sequences, dtype=float)
    if seq.ndim != 3 or seq.shape[1] != model.input_len:
        raise ValueError(
            f"expected (batch, {model.input_len}, 3) inputs, got {seq.shape}"
        )
    batch = seq.shape[0]
    h1 = np.zeros((batch, model.layers[0].hidden_size))
    h2 = np.zeros((batch, model.layers[1].hidden_size))
    for step in range(model.input_len):
        h1 = gru_step(seq[:, step, :], h1, model.layers[0])
        h2 = gru_step(np.maximum(h1, 0.0), h2, model.layers[1])
    return sigmoid(h2 @ model.dense_w.T + model.dense_b)


def forward(model: PredictorModel, pose_seq: np.ndarray) -> PredictionResult:
    """Predict the viewport ``model.horizon`` frames ahead of the sequence end.

    ``pose_seq`` is (input_len, 3), already normalized to [-1, 1].  Tiles at
    or above the cutoff are included.
    """
    logits = forward_batch(model, np.asarray(pose_seq, dtype=float)[None, :, :])[0]
    return PredictionResult(logits=logits, tiles=binarize(logits, model.cutoff))


def binarize(logits: np.ndarray, cutoff: float) -> TileSet:
    mask = 0
    for n in np.flatnonzero(logits >= cutoff):
        mask |= 1 << int(n)
    return TileSet(mask, len(logits))


def jaccard(a: TileSet, b: TileSet) -> float:
    """Intersection over union; two empty sets agree exactly, so 1.0."""
    union = a | b
    if not union:
        return 1.0
    return len(a & b) / len(union)


# ---------------------------------------------------------------------------
# Weight file I/O
# ---------------------------------------------------------------------------
def save_weights(model: PredictorModel, path: str) -> None:
    """Write the binary weight format consumed by :func:`load_weights`."""
    model.validate()
    with open(path, "wb") as fh:
        fh.write(WEIGHT_MAGIC)
        fh.write(
            _HEADER.pack(
                len(model.layers),
                model.layers[0].input_size,
                model.hidden_size,
                model.num_tiles,
                model.input_len,
                model.horizon,
                model.cutoff,
            )
        )
        for layer in model.layers:
            for arr in layer.ordered_arrays():
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.dense_w, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.dense_b, dtype="<f8").tobytes())


def _read_exact(fh, count: int) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise WeightFormatError("weight file truncated")
    return data


def load_weights(path: str) -> PredictorModel:
    """Load and validate a weight file; rejects anything but 2 recurrent layers."""
    with open(path, "rb") as fh:
        if _read_exact(fh, len(WEIGHT_MAGIC)) != WEIGHT_MAGIC:
            raise WeightFormatError("bad magic string")
        layers_n, input_dim, hidden, tiles, t_p, t_h, cutoff = _HEADER.unpack(
            _read_exact(fh, _HEADER.size)
        )
        if layers_n != 2:
            raise WeightFormatError(f"expected 2 recurrent layers, got {layers_n}")
        if min(input_dim, hidden, tiles, t_p) < 1:
            raise WeightFormatError("degenerate dimensions in header")

        def matrix(rows: int, cols: int) -> np.ndarray:
            data = np.frombuffer(_read_exact(fh, rows * cols * 8), dtype="<f8")
            return data.reshape(rows, cols).copy() if cols > 1 else data.copy()

        def read_layer(in_dim: int) -> GruLayerWeights:
            return GruLayerWeights(
                w_update=matrix(hidden, in_dim),
                z_update=matrix(hidden, hidden),
                b_update=matrix(hidden, 1).reshape(hidden),
                w_reset=matrix(hidden, in_dim),
                z_reset=matrix(hidden, hidden),
                b_reset=matrix(hidden, 1).reshape(hidden),
                w_cand=matrix(hidden, in_dim),
                z_cand=matrix(hidden, hidden),
                b_cand=matrix(hidden, 1).reshape(hidden),
            )

        model = PredictorModel(
            layers=(read_layer(input_dim), read_layer(hidden)),
            dense_w=matrix(tiles, hidden),
            dense_b=matrix(tiles, 1).reshape(tiles),
            input_len=t_p,
            horizon=t_h,
            cutoff=cutoff,
        )
        if fh.read(1):
            raise WeightFormatError("trailing bytes after weight payload")
    model.validate()
    return model


# ---------------------------------------------------------------------------
# Synthetic predictor
# ---------------------------------------------------------------------------
def _swap_counts(fov_size: int, target: float) -> tuple[int, float]:
    """Swap count whose mixture hits the target overlap exactly in expectation.

    ``s`` swaps turn an ``m``-tile viewport into one overlapping ``(m-s)`` of
    ``(m+s)`` union tiles, so the overlap after ``s`` swaps is (m-s)/(m+s);
    mixing floor/ceil swap counts matches any target in between.
    """
    m = fov_size
    s_exact = m * (1.0 - target) / (1.0 + target)
    s_lo = int(s_exact)
    if s_lo >= m:
        return m, 0.0
    j_lo = (m - s_lo) / (m + s_lo)
    j_hi = (m - s_lo - 1) / (m + s_lo + 1)
    if j_lo == j_hi or target >= j_lo:
        return s_lo, 0.0
    frac = (j_lo - target) / (j_lo - j_hi)
    return s_lo, min(1.0, max(0.0, frac))


def synthetic_predict(
    true_fov: TileSet,
    target_jaccard: float,
    catalog: VideoCatalog,
    rng: np.random.Generator,
) -> TileSet:
    """Degrade the true future viewport to a target overlap level.

    Mimics a head-motion predictor that misjudges the motion direction:
    trailing-edge tiles are swapped for adjacent tiles just past the leading
    edge, keeping the prediction spatially contiguous and the same size.
    """
    if not 0.0 < target_jaccard <= 1.0:
        raise ValueError("target overlap must lie in (0, 1]")
    m = len(true_fov)
    if m == 0 or target_jaccard == 1.0:
        return true_fov
    s_base, frac = _swap_counts(m, target_jaccard)
    swaps = s_base + (1 if rng.random() < frac else 0)
    if swaps == 0:
        return true_fov

    n_h, n_v = catalog.tiles_h, catalog.tiles_v
    direction = int(rng.integers(0, 4))  # 0:+col 1:-col 2:+row 3:-row
    tiles = [(n // n_h, n % n_h) for n in true_fov]

    # Center for circular column arithmetic: columns re-expressed relative to
    # the set's circular mean so the leading/trailing order is wrap-safe.
    ref_col = tiles[0][1]
    rel = {
        (r, c): ((c - ref_col + n_h // 2) % n_h - n_h // 2) for r, c in tiles
    }

    if direction < 2:
        sign = 1 if direction == 0 else -1
        axis_val = lambda rc: sign * rel[rc]
    else:
        sign = 1 if direction == 2 else -1
        axis_val = lambda rc: sign * rc[0]

    # Drop the rearmost tiles.
    order = sorted(tiles, key=lambda rc: (axis_val(rc), rc))
    removed = order[:swaps]
    kept = set(order[swaps:])
    if not kept:  # degenerate: keep at least one tile to grow from
        kept = {order[-1]}
        removed = order[:-1]

    # Grow past the leading edge, breadth-first in the motion direction.
    if direction < 2:
        step = (0, sign)
    else:
        step = (-sign, 0)  # +row direction means moving up in latitude

    result = set(kept)
    needed = len(removed)
    frontier = set(kept)
    truth = set(tiles)
    guard = 0
    while needed > 0 and guard < 4 * n_h * n_v:
        guard += 1
        candidates = []
        for r, c in frontier:
            nr, nc = r + step[0], (c + step[1]) % n_h
            if 0 <= nr < n_v and (nr, nc) not in result and (nr, nc) not in truth:
                candidates.append((nr, nc))
        if not candidates:
            # fall back to any outside neighbor to keep the size invariant
            for r, c in sorted(result):
                for dr, dc in ((0, 1), (0, -1), (1, 0), (-1, 0)):
                    nr, nc = r + dr, (c + dc) % n_h
                    if 0 <= nr < n_v and (nr, nc) not in result and (nr, nc) not in truth:
                        candidates.append((nr, nc))
            if not candidates:
                break
        take = sorted(set(candidates))[:needed]
        result.update(take)
        frontier = set(take)
        needed -= len(take)

    return TileSet.from_indices((r * n_h + c for r, c in result), catalog.num_tiles)
