import numpy as np
import pytest

from gmr.body import BodySkeleton
from gmr.net import GmrConfig, checkpoint_bytes, init_params
from gmr.objective import LossWeights
from gmr.trainer import (
    AdamState, NumericFailure, TrainConfig, adam_update, draw_batch, evaluate, evaluate_predictions,
    format_log, gt_predictions, pack_checkpoint, train, unpack_checkpoint, zero_predictions,
)

from helpers import small_windows

TINY = GmrConfig(layers=1, hidden=8, proj_dim=8)


@pytest.fixture(scope="module")
def skel():
    return BodySkeleton.default()


@pytest.fixture(scope="module")
def data():
    return small_windows(length=9, count=4, stride=4, duration=2.0)


def cfg(**kw):
    base = dict(steps=6, batch=4, lr=1e-3, seed=3, model=TINY)
    base.update(kw)
    return TrainConfig(**base)


def test_adam_first_step_is_lr_sign():
    p = {"w": np.array([1.0, -2.0, 3.0])}
    g = {"w": np.array([0.5, -4.0, 0.0])}
    new, st = adam_update(p, g, AdamState({"w": np.zeros(3)}, {"w": np.zeros(3)}), 0.1)
    np.testing.assert_allclose(new["w"], p["w"] - 0.1 * np.sign(g["w"]), atol=1e-7)
    assert st.step == 1


def test_adam_matches_hand_recurrence():
    rng = np.random.default_rng(0)
    p = {"w": rng.normal(size=3)}
    st = AdamState({"w": np.zeros(3)}, {"w": np.zeros(3)})
    m = v = np.zeros(3)
    w = p["w"].copy()
    for t in range(1, 6):
        g = rng.normal(size=3)
        p, st = adam_update(p, {"w": g}, st, 0.01)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w = w - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    np.testing.assert_allclose(p["w"], w, atol=1e-12)


def test_zero_lr_leaves_params_unchanged(data, skel):
    res = train(data, cfg(lr=0.0, steps=3), skel)
    init = init_params(TINY, 3)
    for k in init:
        assert res.params[k].tobytes() == init[k].tobytes()


def test_sampler_depends_only_on_seed_and_step():
    c = cfg()
    a = draw_batch(1, 5, 100, c)
    b = draw_batch(1, 5, 100, c)
    np.testing.assert_array_equal(a[0], b[0])
    assert not np.array_equal(draw_batch(1, 6, 100, c)[0], a[0])
    assert not draw_batch(1, 5, 100, cfg(flip_aug=False))[1].any()


def test_training_is_deterministic(data, skel):
    a = train(data, cfg(), skel)
    b = train(data, cfg(), skel)
    assert checkpoint_bytes(pack_checkpoint(a.params, a.adam, cfg())) == checkpoint_bytes(
        pack_checkpoint(b.params, b.adam, cfg()))
    assert format_log(a.rows) == format_log(b.rows)


def test_resume_reproduces_uninterrupted_run(data, skel):
    full = train(data, cfg(steps=8), skel)
    half = train(data, cfg(steps=4), skel)
    ck = unpack_checkpoint(__import__("gmr.net", fromlist=["parse_checkpoint"]).parse_checkpoint(
        checkpoint_bytes(pack_checkpoint(half.params, half.adam, cfg(steps=4)))))
    rest = train(data, cfg(steps=8), skel, start=ck)
    assert [r["step"] for r in rest.rows] == [5, 6, 7, 8]
    assert checkpoint_bytes(pack_checkpoint(rest.params, rest.adam, cfg(steps=8))) == checkpoint_bytes(
        pack_checkpoint(full.params, full.adam, cfg(steps=8)))


def test_flip_changes_sample_stream(data, skel):
    on = [draw_batch(3, k, len(data), cfg()) for k in range(1, 20)]
    off = [draw_batch(3, k, len(data), cfg(flip_aug=False)) for k in range(1, 20)]
    assert any(a[1].any() for a in on) and not any(b[1].any() for b in off)
    for a, b in zip(on, off):
        np.testing.assert_array_equal(a[0], b[0])


def test_overfit_single_sample_desk_config(skel):
    sample = small_windows(length=17, count=1, stride=16, duration=1.6)[:1]
    c = TrainConfig(steps=500, batch=8, lr=5e-5, seed=0, flip_aug=False)
    losses = np.array([r["L_total"] for r in train(sample, c, skel).rows])
    blocks = losses.reshape(5, 100).mean(axis=1)
    assert np.all(np.diff(blocks) < 0), blocks
    assert losses[-1] < 0.05 * losses[0]


def test_overfit_reduces_loss(skel):
    data = small_windows(length=9, count=1, stride=8, duration=0.8)
    res = train(data, cfg(steps=150, batch=2, lr=3e-3, flip_aug=False), skel)
    first = np.mean([r["L_total"] for r in res.rows[:5]])
    last = np.mean([r["L_total"] for r in res.rows[-5:]])
    assert last < 0.3 * first


def test_eval_rows(data, skel):
    res = train(data, cfg(steps=4, eval_every=2), skel, eval_samples=data[:2])
    assert "OME" not in res.rows[0] and "VME" in res.rows[1]
    header = format_log(res.rows).splitlines()[0]
    assert header == "step,L_total,L_ori,L_trans,L_vertex,L_smooth,OME,TME,VME"


def test_numeric_failure(data, skel):
    with pytest.raises(NumericFailure):
        train(data, cfg(weights=LossWeights(w_trans=np.inf)), skel)


def test_reference_predictors(data, skel):
    gt = evaluate_predictions(gt_predictions(data), data, skel)
    assert gt.ome == 0 and gt.tme == 0 and gt.vme == 0
    assert all(c == 0 for c in gt.curve)
    zero = evaluate_predictions(zero_predictions(data), data, skel)
    assert zero.tme > 10 and zero.n_sequences == len(data)
    assert len(zero.curve) == data[0].local.shape[0]


def test_evaluate_matches_predictions(data, skel):
    params = init_params(TINY, 0)
    rep = evaluate(params, data, skel)
    assert rep.n_sequences == len(data) and rep.tme > 0


def test_config_flat_round_trip():
    c = cfg(flip_aug=False, ori_loss="angular")
    back = TrainConfig.from_flat({k: str(v) for k, v in c.to_flat().items()})
    assert back == c
    with pytest.raises(KeyError):
        TrainConfig.from_flat({"learning_rate": "1"})
    with pytest.raises(ValueError):
        TrainConfig.from_flat({"ori_loss": "cosine"})
    with pytest.raises(ValueError):
        TrainConfig.from_flat({"flip_aug": "maybe"})


def test_resume_model_mismatch(data, skel):
    res = train(data, cfg(steps=1), skel)
    with pytest.raises(ValueError):
        train(data, cfg(steps=2, model=GmrConfig(layers=1, hidden=4, proj_dim=8)), skel,
              start=(res.params, res.adam))
