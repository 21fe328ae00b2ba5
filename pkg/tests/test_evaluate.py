import io
import json

import numpy as np
import pytest

from egopose.encoding import encode_task
from egopose.errors import EmptySubset, InsufficientData, LayoutHashMismatch
from egopose.evaluate import (Metrics, baseline_predict, compute_metrics,
                              decode_global, predict_sequence, run_evaluation,
                              split_corpus)
from egopose.occlusion import simulate_sequence
from egopose.skeleton import fk_sequence
from egopose.synthetic import generate_motion, make_profile, make_skeleton
from egopose.training import TrainConfig, train


def test_metrics_three_four_five():
    gt = np.zeros((1, 1, 3))
    pred = np.array([[[0.03, 0.04, 0.0]]])
    m = compute_metrics(pred, gt, np.ones((1, 1), dtype=bool))
    assert abs(m.mpjpe_cm - 5.0) < 1e-12
    assert abs(m.rmsjpe_cm - 5.0) < 1e-12
    assert m.count == 1


def test_metrics_two_samples():
    gt = np.zeros((2, 1, 3))
    pred = np.zeros((2, 1, 3))
    pred[1, 0] = [0.05, 0.0, 0.0]
    m = compute_metrics(pred, gt, np.ones((2, 1), dtype=bool))
    assert abs(m.mpjpe_cm - 2.5) < 1e-12
    assert abs(m.rmsjpe_cm - np.sqrt(12.5)) < 1e-12
    assert m.count == 2


def test_metrics_respect_selection():
    gt = np.zeros((2, 2, 3))
    pred = np.full((2, 2, 3), 1.0)
    sel = np.zeros((2, 2), dtype=bool)
    sel[0, 1] = True
    m = compute_metrics(pred, gt, sel)
    assert m.count == 1
    with pytest.raises(EmptySubset):
        compute_metrics(pred, gt, np.zeros((2, 2), dtype=bool))


def test_rmsjpe_dominates_mpjpe_on_random_errors():
    rng = np.random.Generator(np.random.PCG64(0))
    gt = rng.normal(size=(50, 4, 3))
    pred = gt + rng.normal(scale=0.02, size=gt.shape)
    m = compute_metrics(pred, gt, np.ones((50, 4), dtype=bool))
    assert m.rmsjpe_cm >= m.mpjpe_cm


def test_baseline_holds_last_visible():
    enc = np.arange(12, dtype=np.float64).reshape(4, 1, 3)
    visible = np.array([[True], [False], [False], [True]])
    rest = np.zeros((1, 3))
    out = baseline_predict(enc, visible, rest)
    np.testing.assert_array_equal(out[1], enc[0])
    np.testing.assert_array_equal(out[2], enc[0])
    np.testing.assert_array_equal(out[3], enc[3])


# --- corpus splitting ---------------------------------------------------------

class FakeSeq:
    def __init__(self, name, subject):
        self.name = name
        self.subject = subject


def fake_corpus(n=10, n_subjects=5):
    return [FakeSeq(f"seq{i}", f"s{i % n_subjects}") for i in range(n)]


def test_split_is_deterministic():
    corpus = fake_corpus()
    a = split_corpus(corpus, ratio=0.8, seed=7)
    b = split_corpus(corpus, ratio=0.8, seed=7)
    assert a[2] == b[2]
    assert [s.name for s in a[1]] == [s.name for s in b[1]]
    c = split_corpus(corpus, ratio=0.8, seed=8)
    assert a[2]["test"] != c[2]["test"] or a[2]["seed"] != c[2]["seed"]


def test_split_ratio_counts():
    corpus = fake_corpus()
    train_set, test_set, manifest = split_corpus(corpus, ratio=0.8, seed=0)
    assert len(test_set) == 2 and len(train_set) == 8
    assert sorted(manifest["train"] + manifest["test"]) == \
        sorted(s.name for s in corpus)
    # small corpora still get at least one test sequence
    train_set, test_set, _ = split_corpus(fake_corpus(2), ratio=0.8, seed=0)
    assert len(test_set) == 1 and len(train_set) == 1


def test_split_forces_held_out_subjects():
    corpus = fake_corpus()
    train_set, test_set, manifest = split_corpus(
        corpus, ratio=0.8, held_out_subjects=["s1"], seed=0)
    assert all(s.subject != "s1" for s in train_set)
    held_names = {s.name for s in corpus if s.subject == "s1"}
    assert held_names <= set(manifest["test"])


def test_split_insufficient_data():
    with pytest.raises(InsufficientData):
        split_corpus([], ratio=0.8)
    with pytest.raises(InsufficientData):
        split_corpus(fake_corpus(4), ratio=1.0)  # no test sequences
    with pytest.raises(InsufficientData):
        # everything forced into test leaves nothing to train on
        split_corpus(fake_corpus(4, n_subjects=1), held_out_subjects=["s0"])


def test_split_accepts_sequence_record_tuples():
    corpus = [(FakeSeq(f"seq{i}", f"s{i}"), None) for i in range(4)]
    train_set, test_set, manifest = split_corpus(corpus, ratio=0.75, seed=1)
    assert len(train_set) == 3 and len(test_set) == 1
    assert isinstance(train_set[0], tuple)


# --- decoding and the harness -------------------------------------------------

@pytest.fixture(scope="module")
def trained():
    sk = make_skeleton()
    resolved = make_profile(sk).resolve(sk)
    corpus = []
    for seed in (0, 1, 2):
        seq = generate_motion(sk, duration_s=2.0, fps=30.0, seed=seed,
                              name=f"seq{seed}", subject=f"s{seed}")
        corpus.append((seq, simulate_sequence(seq, resolved)))
    config = TrainConfig(epochs=2, batch_schedule=(32, 32), seed=0, window=9,
                         hidden=16, mlp_hidden=(16, 16))
    params, _ = train(corpus[:2], resolved, "inside-out", config)
    return sk, resolved, corpus, params


def test_decode_global_recovers_world_positions(trained):
    sk, resolved, corpus, params = trained
    seq, rec = corpus[2]
    enc = encode_task(seq, rec, resolved, "inside-out")
    idx = np.arange(enc.n_frames)
    world = decode_global(enc, enc.targets, idx)
    positions = fk_sequence(seq)
    for s in range(enc.n_out):
        j = int(enc.out_joint[s])
        np.testing.assert_allclose(world[:, s], positions[:, j], atol=1e-9)


def test_predict_sequence_shapes(trained):
    sk, resolved, corpus, params = trained
    seq, rec = corpus[2]
    enc = encode_task(seq, rec, resolved, "inside-out")
    frames_idx, preds, logits = predict_sequence(params, enc, batch_size=16)
    assert len(frames_idx) == enc.n_frames - params.window + 1
    assert preds.shape == (len(frames_idx), enc.n_out, 3)
    assert logits.shape == (len(frames_idx), len(enc.group_names))
    # batch size must not change the result
    _, preds2, _ = predict_sequence(params, enc, batch_size=1024)
    np.testing.assert_allclose(preds, preds2, atol=1e-12)


def test_run_evaluation_report(trained):
    sk, resolved, corpus, params = trained
    report = run_evaluation(corpus[2:], params, resolved, "inside-out",
                            ik_max_frames=30, manifest={"note": "test"})
    assert "body/all" in report.rows and "finger/all" in report.rows
    assert "body_finger/all" in report.rows
    for key, row in report.rows.items():
        for m in row.values():
            assert m.rmsjpe_cm >= m.mpjpe_cm - 1e-12
            assert m.count > 0
    assert set(report.acceleration) == {"model_raw", "model_smoothed",
                                        "model_ik", "ground_truth"}
    assert report.acceleration["model_raw"] is not None
    assert report.manifest == {"note": "test"}

    buf = io.StringIO()
    report.to_json(buf)
    parsed = json.loads(buf.getvalue())
    assert parsed["task"] == "inside-out"
    assert "body/occluded" in parsed["rows"]

    buf = io.StringIO()
    report.to_csv(buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0].startswith("row,model_rmsjpe_cm")
    assert len(lines) == 1 + len(report.rows)


def test_run_evaluation_smoothing_reduces_acceleration(trained):
    sk, resolved, corpus, params = trained
    report = run_evaluation(corpus[2:], params, resolved, "inside-out",
                            ik_max_frames=30)
    acc = report.acceleration
    assert acc["model_smoothed"] <= acc["model_raw"]


def test_run_evaluation_rejects_layout_mismatch(trained):
    sk, resolved, corpus, params = trained
    import copy
    wrong = copy.deepcopy(params)
    wrong.meta["layout"] = {"task": "inside-out", "other": True}
    with pytest.raises(LayoutHashMismatch):
        run_evaluation(corpus[2:], wrong, resolved, "inside-out")
