"""GRU inference, weight file round-trips, overlap index, synthetic predictor."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vrmcast.predictor import (
    GruLayerWeights,
    PredictorModel,
    WeightFormatError,
    binarize,
    forward,
    forward_batch,
    gru_step,
    jaccard,
    load_weights,
    normalize_pose_sequence,
    save_weights,
    sigmoid,
    synthetic_predict,
)
from vrmcast.scenario import Pose3DoF, TileSet, VideoCatalog, pose_to_fov

CATALOG = VideoCatalog()


def make_layer(rng, hidden, inp):
    def m(r, c):
        return rng.normal(0, 0.5, size=(r, c))

    return GruLayerWeights(
        w_update=m(hidden, inp), z_update=m(hidden, hidden), b_update=rng.normal(0, 0.5, hidden),
        w_reset=m(hidden, inp), z_reset=m(hidden, hidden), b_reset=rng.normal(0, 0.5, hidden),
        w_cand=m(hidden, inp), z_cand=m(hidden, hidden), b_cand=rng.normal(0, 0.5, hidden),
    )


def make_model(rng, hidden=6, tiles=12, t_p=4, t_h=3, cutoff=0.5):
    return PredictorModel(
        layers=(make_layer(rng, hidden, 3), make_layer(rng, hidden, hidden)),
        dense_w=rng.normal(0, 0.5, size=(tiles, hidden)),
        dense_b=rng.normal(0, 0.5, size=tiles),
        input_len=t_p,
        horizon=t_h,
        cutoff=cutoff,
    )


def zero_model(hidden=4, tiles=8, t_p=3):
    def z(r, c=None):
        return np.zeros((r, c)) if c else np.zeros(r)

    layer1 = GruLayerWeights(z(hidden, 3), z(hidden, hidden), z(hidden),
                             z(hidden, 3), z(hidden, hidden), z(hidden),
                             z(hidden, 3), z(hidden, hidden), z(hidden))
    layer2 = GruLayerWeights(z(hidden, hidden), z(hidden, hidden), z(hidden),
                             z(hidden, hidden), z(hidden, hidden), z(hidden),
                             z(hidden, hidden), z(hidden, hidden), z(hidden))
    return PredictorModel(
        layers=(layer1, layer2), dense_w=np.zeros((tiles, hidden)),
        dense_b=np.zeros(tiles), input_len=t_p, horizon=2, cutoff=0.5,
    )


# ---------------------------------------------------------------------------
# gru_step
# ---------------------------------------------------------------------------
def test_gru_step_zero_weights_halves_state():
    rng = np.random.default_rng(0)
    w = zero_model().layers[1]
    h_prev = rng.normal(size=4)
    x = rng.normal(size=4)
    out = gru_step(x, h_prev, w)
    # update gate sits at 1/2 and the candidate vanishes
    assert np.allclose(out, 0.5 * h_prev, atol=1e-12)


def test_gru_step_fresh_state_uses_only_input():
    rng = np.random.default_rng(1)
    w = make_layer(rng, 5, 3)
    w = GruLayerWeights(
        w.w_update, w.z_update, np.zeros(5),
        w.w_reset, w.z_reset, np.zeros(5),
        w.w_cand, w.z_cand, np.zeros(5),
    )
    x = rng.normal(size=3)
    out = gru_step(x, np.zeros(5), w)
    gate = sigmoid(w.w_update @ x)
    assert np.allclose(out, gate * np.tanh(w.w_cand @ x), atol=1e-12)


def straight_line_step(x, h, w):
    """Literal transcription of the gate recurrences, scalar loops only."""
    hidden = len(h)
    update = np.empty(hidden)
    reset = np.empty(hidden)
    for i in range(hidden):
        update[i] = 1 / (1 + np.exp(-(w.w_update[i] @ x + w.z_update[i] @ h + w.b_update[i])))
        reset[i] = 1 / (1 + np.exp(-(w.w_reset[i] @ x + w.z_reset[i] @ h + w.b_reset[i])))
    cand = np.empty(hidden)
    for i in range(hidden):
        cand[i] = np.tanh(w.w_cand[i] @ x + w.z_cand[i] @ (reset * h) + w.b_cand[i])
    return (1 - update) * h + update * cand


def test_gru_step_matches_dual_implementation():
    rng = np.random.default_rng(42)
    w = make_layer(rng, 4, 4)
    for _ in range(20):
        x = rng.normal(size=4)
        h = rng.normal(size=4)
        assert np.allclose(gru_step(x, h, w), straight_line_step(x, h, w), atol=1e-12)


def test_gru_step_forced_closed_gate_keeps_state():
    rng = np.random.default_rng(3)
    w = make_layer(rng, 4, 3)
    w = GruLayerWeights(
        w.w_update, w.z_update, np.full(4, -50.0),
        w.w_reset, w.z_reset, w.b_reset,
        w.w_cand, w.z_cand, w.b_cand,
    )
    h = rng.normal(size=4)
    out = gru_step(rng.normal(size=3), h, w)
    assert np.allclose(out, h, atol=1e-9)


def test_gru_step_shape_mismatch():
    rng = np.random.default_rng(0)
    w = make_layer(rng, 4, 3)
    with pytest.raises(ValueError):
        gru_step(np.zeros(5), np.zeros(4), w)


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------
def test_forward_zero_model_selects_all_tiles():
    model = zero_model()
    res = forward(model, np.zeros((3, 3)))
    assert np.allclose(res.logits, 0.5)
    assert len(res.tiles) == model.num_tiles  # 0.5 >= cutoff 0.5


def test_forward_logits_strictly_inside_unit_interval():
    rng = np.random.default_rng(5)
    model = make_model(rng)
    seq = rng.uniform(-1, 1, size=(model.input_len, 3))
    res = forward(model, seq)
    assert np.all(res.logits > 0) and np.all(res.logits < 1)
    assert 0 <= len(res.tiles) <= model.num_tiles


def test_forward_deterministic():
    rng = np.random.default_rng(6)
    model = make_model(rng)
    seq = rng.uniform(-1, 1, size=(model.input_len, 3))
    a = forward(model, seq)
    b = forward(model, seq)
    assert np.array_equal(a.logits, b.logits)
    assert a.tiles == b.tiles


def test_forward_batch_consistent_with_single():
    rng = np.random.default_rng(7)
    model = make_model(rng)
    seqs = rng.uniform(-1, 1, size=(5, model.input_len, 3))
    batch = forward_batch(model, seqs)
    for i in range(5):
        assert np.allclose(batch[i], forward(model, seqs[i]).logits, atol=1e-12)


def test_forward_rejects_wrong_length():
    model = zero_model(t_p=3)
    with pytest.raises(ValueError):
        forward(model, np.zeros((4, 3)))


def test_normalize_pose_sequence():
    seq = normalize_pose_sequence(np.array([[180.0, -90.0, 90.0]]))
    assert np.allclose(seq, [[1.0, -1.0, 0.5]])


# ---------------------------------------------------------------------------
# jaccard
# ---------------------------------------------------------------------------
def test_jaccard_examples():
    a = TileSet.from_indices(range(36), 200)
    assert jaccard(a, a) == 1.0
    b = TileSet.from_indices(range(36, 72), 200)
    assert jaccard(a, b) == 0.0
    c = TileSet.from_indices(list(range(12, 48)), 200)
    assert jaccard(a, c) == pytest.approx(24 / 48)


def test_jaccard_both_empty_is_one():
    e = TileSet.empty(10)
    assert jaccard(e, e) == 1.0


@given(
    a=st.sets(st.integers(0, 19), max_size=20),
    b=st.sets(st.integers(0, 19), max_size=20),
    c=st.sets(st.integers(0, 19), max_size=20),
)
@settings(max_examples=200, deadline=None)
def test_jaccard_symmetric_and_triangle(a, b, c):
    ta, tb, tc = (TileSet.from_indices(s, 20) for s in (a, b, c))
    assert jaccard(ta, tb) == jaccard(tb, ta)
    assert (jaccard(ta, tb) == 1.0) == (a == b)
    dab = 1 - jaccard(ta, tb)
    dbc = 1 - jaccard(tb, tc)
    dac = 1 - jaccard(ta, tc)
    assert dac <= dab + dbc + 1e-12


# ---------------------------------------------------------------------------
# weight file
# ---------------------------------------------------------------------------
def test_weight_roundtrip_lossless(tmp_path):
    rng = np.random.default_rng(9)
    model = make_model(rng, hidden=5, tiles=16, t_p=6, t_h=4, cutoff=0.35)
    path = str(tmp_path / "w.bin")
    save_weights(model, path)
    back = load_weights(path)
    assert back.input_len == 6 and back.horizon == 4 and back.cutoff == 0.35
    for la, lb in zip(model.layers, back.layers):
        for x, y in zip(la.ordered_arrays(), lb.ordered_arrays()):
            assert np.array_equal(x, y)
    assert np.array_equal(model.dense_w, back.dense_w)
    assert np.array_equal(model.dense_b, back.dense_b)
    seq = rng.uniform(-1, 1, size=(6, 3))
    assert np.array_equal(forward(model, seq).logits, forward(back, seq).logits)


def test_truncated_file_rejected(tmp_path):
    rng = np.random.default_rng(10)
    model = make_model(rng)
    path = str(tmp_path / "w.bin")
    save_weights(model, path)
    raw = open(path, "rb").read()
    open(path, "wb").write(raw[: len(raw) - 16])
    with pytest.raises(WeightFormatError, match="truncated"):
        load_weights(path)


def test_bad_magic_rejected(tmp_path):
    path = str(tmp_path / "w.bin")
    open(path, "wb").write(b"NOTMAGIC" + b"\0" * 64)
    with pytest.raises(WeightFormatError, match="magic"):
        load_weights(path)


def test_small_hidden_size_accepted(tmp_path):
    rng = np.random.default_rng(11)
    model = make_model(rng, hidden=64, tiles=20, t_p=5)
    path = str(tmp_path / "w.bin")
    save_weights(model, path)
    assert load_weights(path).hidden_size == 64


def test_nonfinite_weights_rejected(tmp_path):
    rng = np.random.default_rng(12)
    model = make_model(rng)
    model.dense_w[0, 0] = np.nan
    path = str(tmp_path / "w.bin")
    with pytest.raises(WeightFormatError, match="non-finite"):
        save_weights(model, path)


def test_trailing_bytes_rejected(tmp_path):
    rng = np.random.default_rng(13)
    model = make_model(rng)
    path = str(tmp_path / "w.bin")
    save_weights(model, path)
    with open(path, "ab") as fh:
        fh.write(b"\0")
    with pytest.raises(WeightFormatError, match="trailing"):
        load_weights(path)


# ---------------------------------------------------------------------------
# synthetic predictor
# ---------------------------------------------------------------------------
def test_synthetic_identity_at_full_overlap():
    rng = np.random.default_rng(14)
    truth = pose_to_fov(Pose3DoF(10.0, 5.0), CATALOG)
    assert synthetic_predict(truth, 1.0, CATALOG, rng) == truth


def test_synthetic_rejects_zero_target():
    rng = np.random.default_rng(15)
    truth = pose_to_fov(Pose3DoF(0.0, 0.0), CATALOG)
    with pytest.raises(ValueError):
        synthetic_predict(truth, 0.0, CATALOG, rng)


def test_synthetic_preserves_cardinality():
    rng = np.random.default_rng(16)
    for yaw in (-170, -60, 0, 45, 179):
        truth = pose_to_fov(Pose3DoF(float(yaw), 10.0), CATALOG)
        pred = synthetic_predict(truth, 0.7, CATALOG, rng)
        assert len(pred) == len(truth)


@pytest.mark.parametrize("target", [0.83, 0.70, 0.61])
def test_synthetic_calibration(target):
    rng = np.random.default_rng(17)
    truth = pose_to_fov(Pose3DoF(0.0, 0.0), CATALOG)
    assert len(truth) == 36
    vals = [
        jaccard(synthetic_predict(truth, target, CATALOG, rng), truth)
        for _ in range(2000)
    ]
    assert np.mean(vals) == pytest.approx(target, abs=0.02)


def test_synthetic_prediction_is_contiguous():
    rng = np.random.default_rng(18)
    truth = pose_to_fov(Pose3DoF(30.0, 0.0), CATALOG)
    pred = synthetic_predict(truth, 0.6, CATALOG, rng)
    cells = {(n // CATALOG.tiles_h, n % CATALOG.tiles_h) for n in pred}
    seen = {next(iter(cells))}
    frontier = list(seen)
    while frontier:
        r, c = frontier.pop()
        for dr, dc in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            nxt = (r + dr, (c + dc) % CATALOG.tiles_h)
            if nxt in cells and nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    assert seen == cells


def test_binarize_boundary_inclusive():
    tiles = binarize(np.array([0.5, 0.499999, 0.9]), 0.5)
    assert sorted(tiles) == [0, 2]
