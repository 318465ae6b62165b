import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hvis.data import (
    MotionSequence, SkeletonSpec, default_hard_joints, default_skeleton, downsample, load_csv,
    load_skeleton, make_windows, mpjpe, ms_to_frames, per_joint_mpjpe, root_align, save_csv,
    save_skeleton, split_corpus, stack_windows, synth_corpus, zero_velocity_baseline,
)
from hvis.data.synth import EASY_FREQ_HZ
from hvis.errors import DimensionError, FormatError, ParameterError, ParseError


# -- skeleton ------------------------------------------------------------------
def test_default_skeleton_shape():
    sk = default_skeleton()
    assert sk.n_joints == 12 and sk.root == 0
    assert set(sk.part_of) == {0, 1, 2, 3, 4}


@pytest.mark.parametrize("parents,parts", [
    ([-1, -1, 0, 0, 0], [0, 1, 2, 3, 4]),   # two roots
    ([-1, 2, 1, 0, 0], [0, 1, 2, 3, 4]),    # cycle 1 <-> 2
    ([-1, 0, 0, 0, 0], [0, 1, 2, 3, 3]),    # part 4 unused
    ([-1, 0, 0, 0, 0], [0, 1, 2, 3, 5]),    # part out of range
])
def test_skeleton_validation(parents, parts):
    with pytest.raises(ParameterError):
        SkeletonSpec(list("abcde"), parents, parts)


def test_skeleton_file_round_trip(tmp_path):
    sk = default_skeleton()
    save_skeleton(sk, tmp_path / "sk.txt")
    assert load_skeleton(tmp_path / "sk.txt") == sk


def test_skeleton_file_errors(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("name=a parent=-1\n")
    with pytest.raises(FormatError):
        load_skeleton(p)
    p.write_text("name=a parent=x part=0\n")
    with pytest.raises(ParseError):
        load_skeleton(p)


# -- CSV -----------------------------------------------------------------------
def test_load_zero_file(tmp_path, tiny_skeleton):
    cols = 1 + 3 * tiny_skeleton.n_joints
    path = tmp_path / "z.csv"
    header = ",".join(["frame"] + [f"{n}_{c}" for n in tiny_skeleton.names for c in "xyz"])
    path.write_text("# fps=25\n" + header + "\n" + "\n".join(",".join(["0"] * cols) for _ in range(2)) + "\n")
    seq = load_csv(path, tiny_skeleton)
    assert seq.n_frames == 2 and seq.fps == 25.0
    assert not seq.positions.any()


def test_load_column_mismatch(tmp_path, tiny_skeleton):
    bigger = SkeletonSpec(list(tiny_skeleton.names) + ["extra"], list(tiny_skeleton.parents) + [0],
                          list(tiny_skeleton.part_of) + [1])
    seq = MotionSequence(np.zeros((2, 5, 3)), 25)
    save_csv(seq, tmp_path / "s.csv", tiny_skeleton)
    with pytest.raises(FormatError) as info:
        load_csv(tmp_path / "s.csv", bigger)
    assert "19" in str(info.value) and "16" in str(info.value)


def test_load_non_numeric_cell(tmp_path, tiny_skeleton):
    seq = MotionSequence(np.zeros((3, 5, 3)), 25)
    path = tmp_path / "s.csv"
    save_csv(seq, path, tiny_skeleton)
    lines = path.read_text().splitlines()
    cells = lines[3].split(",")
    cells[4] = "abc"
    lines[3] = ",".join(cells)
    path.write_text("\n".join(lines))
    with pytest.raises(ParseError) as info:
        load_csv(path, tiny_skeleton)
    assert info.value.row == 4 and info.value.column == 5


def test_load_needs_fps(tmp_path, tiny_skeleton):
    path = tmp_path / "s.csv"
    save_csv(MotionSequence(np.zeros((2, 5, 3)), 25), path, tiny_skeleton)
    path.write_text("\n".join(path.read_text().splitlines()[1:]))
    with pytest.raises(FormatError):
        load_csv(path, tiny_skeleton)
    assert load_csv(path, tiny_skeleton, fps=50).fps == 50


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**16), frames=st.integers(1, 6))
def test_csv_round_trip(tmp_path_factory, seed, frames):
    sk = default_skeleton()
    r = np.random.default_rng(seed)
    seq = MotionSequence(r.normal(scale=2.0, size=(frames, 12, 3)), 25.0, "x")
    path = tmp_path_factory.mktemp("csv") / "x.csv"
    save_csv(seq, path, sk)
    back = load_csv(path, sk)
    np.testing.assert_allclose(back.positions, seq.positions, rtol=0, atol=1e-9)
    save_csv(back, path.with_name("y.csv"), sk)
    assert path.read_text() == path.with_name("y.csv").read_text()


# -- resampling ----------------------------------------------------------------
def test_downsample_identity():
    seq = MotionSequence(np.arange(30.0).reshape(10, 1, 3), 25)
    np.testing.assert_array_equal(downsample(seq, 25).positions, seq.positions)


def test_downsample_50_to_25():
    seq = MotionSequence(np.arange(30.0).reshape(10, 1, 3), 50)
    out = downsample(seq, 25)
    assert out.n_frames == 5 and out.fps == 25
    np.testing.assert_array_equal(out.positions, seq.positions[::2])


def test_downsample_30_to_25_keeps_length():
    seq = MotionSequence(np.arange(30.0).reshape(10, 1, 3), 30)
    out = downsample(seq, 25)
    assert out.n_frames == 10 and out.fps == 25


def test_downsample_rejects_upsampling():
    with pytest.raises(ParameterError):
        downsample(MotionSequence(np.zeros((4, 1, 3)), 25), 50)


# -- windows -------------------------------------------------------------------
def moving_sequence(frames, n=3, seed=0):
    return MotionSequence(np.random.default_rng(seed).normal(size=(frames, n, 3)), 25)


def test_window_boundary_count():
    assert len(make_windows(moving_sequence(7), 4, 3, stride=5)) == 1
    assert len(make_windows(moving_sequence(6), 4, 3)) == 0


def test_window_count_formula():
    O, F = 4, 3
    assert len(make_windows(moving_sequence(O + F + 3), O, F, stride=1)) == 4


@settings(max_examples=30, deadline=None)
@given(frames=st.integers(7, 30), stride=st.integers(1, 5), seed=st.integers(0, 1000))
def test_window_alignment_and_continuity(frames, stride, seed):
    O, F = 4, 3
    seq = moving_sequence(frames, seed=seed)
    wins = make_windows(seq, O, F, stride)
    assert len(wins) == len(range(0, frames - O - F + 1, stride))
    for w in wins:
        np.testing.assert_array_equal(w.observed[-1, 0], np.zeros(3))
        src = seq.positions[w.start:w.start + O + F] - seq.positions[w.start + O - 1, 0]
        np.testing.assert_array_equal(np.concatenate([w.observed, w.future]), src)
        # aligning an aligned window again changes nothing
        again, _ = root_align(np.concatenate([w.observed, w.future]), 0, O - 1)
        np.testing.assert_array_equal(again, src)


def test_split_is_by_sequence_and_seeded():
    corpus = [moving_sequence(5, seed=i) for i in range(20)]
    a = split_corpus(corpus, (0.7, 0.15, 0.15), seed=3)
    b = split_corpus(corpus, (0.7, 0.15, 0.15), seed=3)
    assert [len(p) for p in a] == [14, 3, 3]
    ids = [[id(s) for s in part] for part in a]
    assert ids == [[id(s) for s in part] for part in b]
    assert len(set(sum(ids, []))) == 20


# -- metrics -------------------------------------------------------------------
def test_ms_to_frames():
    assert [ms_to_frames(ms, 25) for ms in (80, 160, 320, 400, 1000)] == [2, 4, 8, 10, 25]


def test_mpjpe_identity_and_offset(rng):
    x = rng.normal(size=(4, 3, 3))
    assert mpjpe(x, x) == 0.0
    assert mpjpe(x + np.array([0.001, 0, 0]), x) == pytest.approx(1.0, abs=1e-9)


def test_mpjpe_loop_oracle(rng):
    pred, truth = rng.normal(size=(2, 2, 3)), rng.normal(size=(2, 2, 3))
    total = 0.0
    for f in range(2):
        for j in range(2):
            total += math.sqrt(sum((pred[f, j, c] - truth[f, j, c]) ** 2 for c in range(3)))
    assert mpjpe(pred, truth) == pytest.approx(total / 4 * 1000, abs=1e-12 * 1000)


def test_mpjpe_horizon_is_one_based(rng):
    pred, truth = rng.normal(size=(5, 2, 3)), rng.normal(size=(5, 2, 3))
    assert mpjpe(pred, truth, [2]) == pytest.approx(mpjpe(pred[1:2], truth[1:2]))


def test_mpjpe_shape_mismatch():
    with pytest.raises(DimensionError):
        mpjpe(np.zeros((2, 2, 3)), np.zeros((2, 3, 3)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**16))
def test_mpjpe_properties(seed):
    r = np.random.default_rng(seed)
    pred, truth = r.normal(size=(3, 4, 3)), r.normal(size=(3, 4, 3))
    shift = r.normal(size=3)
    assert mpjpe(pred, truth) > 0
    assert mpjpe(pred + shift, truth + shift) == pytest.approx(mpjpe(pred, truth), rel=1e-12)


def test_zero_velocity_baseline():
    obs = np.arange(2 * 2 * 3, dtype=float).reshape(2, 2, 3)
    base = zero_velocity_baseline(obs, 3)
    assert base.shape == (3, 2, 3)
    assert all((base[k] == obs[-1]).all() for k in range(3))
    const = np.ones((4, 2, 3))
    assert mpjpe(zero_velocity_baseline(const, 2), np.ones((2, 2, 3))) == 0.0
    moving = np.cumsum(np.ones((3, 2, 3)), axis=0)
    assert mpjpe(zero_velocity_baseline(const, 3), const[-1] + moving) > 0


# -- synthetic corpus ----------------------------------------------------------
@pytest.fixture(scope="module")
def corpus():
    return synth_corpus(default_skeleton(), n_sequences=40, frames=100, seed=5)


def test_synth_is_deterministic(corpus):
    again = synth_corpus(default_skeleton(), n_sequences=40, frames=100, seed=5)
    assert all((a.positions == b.positions).all() for a, b in zip(corpus, again))
    other = synth_corpus(default_skeleton(), n_sequences=40, frames=100, seed=6)
    assert not (corpus[0].positions == other[0].positions).all()


def test_synth_trunk_is_static(corpus):
    trunk = [j for j, p in enumerate(default_skeleton().part_of) if p == 0]
    for seq in corpus:
        assert not np.diff(seq.positions[:, trunk], axis=0).any()


def test_synth_frame_guard():
    with pytest.raises(ParameterError):
        synth_corpus(default_skeleton(), n_sequences=2, frames=99)


def test_hard_joints_beat_easy_at_horizon(corpus):
    sk = default_skeleton()
    obs, fut = stack_windows(sum((make_windows(s, 25, 25, 5) for s in corpus), []))
    err = per_joint_mpjpe(zero_velocity_baseline(obs, 25), fut, [25])
    hard = default_hard_joints(sk)
    easy = [j for j in range(sk.n_joints) if sk.part_of[j] != 0 and j not in hard]
    assert hard == [5, 7, 9]
    assert err[hard].min() > err[easy].max()


def test_easy_joint_baseline_grows_over_quarter_period(corpus):
    sk = default_skeleton()
    hard = default_hard_joints(sk)
    easy = [j for j in range(sk.n_joints) if sk.part_of[j] != 0 and j not in hard]
    quarter = int(25 / (4 * EASY_FREQ_HZ[1]))
    obs, fut = stack_windows(sum((make_windows(s, 25, 25, 1) for s in corpus), []))
    base = zero_velocity_baseline(obs, 25)
    for j in easy:
        curve = [per_joint_mpjpe(base, fut, [k])[j] for k in range(1, quarter + 1)]
        assert np.all(np.diff(curve) > 0), (j, curve)
