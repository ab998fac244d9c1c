import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vidsal.core import RegionSet, SaliencyMap
from vidsal.errors import InvalidArgument
from vidsal.evaluation import (adaptive_threshold, dataset_f_adaptive,
                               dataset_f_sweep, dataset_mae, f_measure,
                               fuse_scales, iou, mae, majority_vote,
                               precision_recall, quantize, read_report,
                               region_similarity_stats, vos_segment,
                               write_prc, write_report)


def sal(values, frame_index=0):
    return SaliencyMap(frame_index=frame_index,
                       values=np.asarray(values, np.float64))


# ---- fuse_scales ------------------------------------------------------------

def test_fuse_identical_maps():
    m = sal(np.random.default_rng(0).random((4, 4)))
    out = fuse_scales([m, m, m])
    # mean of equals, up to float rounding of (3a)/3
    np.testing.assert_allclose(out.values, m.values, atol=1e-15)


def test_fuse_zero_and_one():
    out = fuse_scales([sal(np.zeros((2, 2))), sal(np.ones((2, 2)))])
    np.testing.assert_array_equal(out.values, np.full((2, 2), 0.5))


def test_fuse_four_random_maps_per_pixel_oracle(rng):
    maps = [sal(rng.random((3, 5))) for _ in range(4)]
    out = fuse_scales(maps)
    expected = sum(m.values for m in maps) / 4.0
    np.testing.assert_allclose(out.values, expected, atol=1e-12)


def test_fuse_mismatched_shapes_rejected():
    with pytest.raises(InvalidArgument):
        fuse_scales([sal(np.zeros((2, 2))), sal(np.zeros((3, 3)))])


# ---- adaptive threshold -------------------------------------------------------

def test_adaptive_threshold_half_and_half():
    values = np.zeros((2, 2))
    values[0] = 1.0
    mask = adaptive_threshold(sal(values))
    # mu = 0.5, std = 0.5, tau = 1.0 -> exactly the ones
    np.testing.assert_array_equal(mask, values == 1.0)


def test_adaptive_threshold_constant_map_all_salient():
    mask = adaptive_threshold(sal(np.full((3, 3), 0.4)))
    assert mask.all()


def test_adaptive_threshold_hand_statistics():
    values = np.array([[0.2, 0.2], [0.2, 0.8]])
    mu = 0.35
    eta = math.sqrt(((0.2 - mu) ** 2 * 3 + (0.8 - mu) ** 2) / 4)
    assert mu + eta == pytest.approx(0.6098076211, abs=1e-9)
    mask = adaptive_threshold(sal(values))
    assert mask.sum() == 1
    assert mask[1, 1]


# ---- precision / recall / F ----------------------------------------------------

def test_pr_perfect_match():
    gt = np.zeros((4, 4), bool)
    gt[1:3, 1:3] = True
    assert precision_recall(gt, gt) == (1.0, 1.0)


def test_pr_empty_prediction_convention():
    gt = np.ones((2, 2), bool)
    assert precision_recall(np.zeros((2, 2), bool), gt) == (1.0, 0.0)


def test_pr_empty_gt_convention():
    assert precision_recall(np.zeros((2, 2), bool),
                            np.zeros((2, 2), bool)) == (1.0, 1.0)


def test_pr_counted_example():
    # TP=3, FP=1, FN=2
    mask = np.array([1, 1, 1, 1, 0, 0], bool).reshape(2, 3)
    gt = np.array([1, 1, 1, 0, 1, 1], bool).reshape(2, 3)
    p, r = precision_recall(mask, gt)
    assert p == pytest.approx(0.75)
    assert r == pytest.approx(0.6)


@pytest.mark.parametrize("p", np.linspace(0, 1, 11))
def test_f_measure_identity_on_diagonal(p):
    assert f_measure(p, p) == pytest.approx(p, abs=1e-12)


def test_f_measure_zero_cases():
    assert f_measure(1.0, 0.0) == 0.0
    assert f_measure(0.0, 0.0) == 0.0


def test_f_measure_derived_value():
    expected = 1.3 * 0.9 * 0.6 / (0.3 * 0.9 + 0.6)
    assert f_measure(0.9, 0.6) == pytest.approx(expected, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_f_measure_range(p, r):
    assert 0.0 <= f_measure(p, r) <= 1.0


# ---- dataset-level F ------------------------------------------------------------

def test_dataset_f_single_frame_collapse():
    gt = np.zeros((4, 4), bool)
    gt[:2] = True
    m = sal(gt.astype(float))
    f_adap, p, r = dataset_f_adaptive([[m]], [[gt]])
    pf, rf = precision_recall(adaptive_threshold(m), gt)
    assert (p, r) == (pf, rf)
    assert f_adap == pytest.approx(f_measure(pf, rf))


def test_dataset_f_two_video_hand_average():
    # video A frames score (1, 1); video B frames score (0.5, 0.5)
    gt = np.zeros((2, 2), bool)
    gt[0] = True
    good = sal(gt.astype(float))
    half = sal(np.array([[1.0, 0.0], [1.0, 0.0]]))
    # half: predicted = column 0 rows -> TP=1 FP=1 FN=1 -> P=0.5 R=0.5
    f, p, r = dataset_f_adaptive([[good], [half]], [[gt], [gt]])
    assert (p, r) == (0.75, 0.75)
    assert f == pytest.approx(0.75)


def test_f_max_dominates_fixed_thresholds(rng):
    videos_maps, videos_gts = [], []
    for _ in range(20):
        m = sal(rng.random((6, 6)))
        gt = rng.random((6, 6)) > 0.5
        videos_maps.append([m])
        videos_gts.append([gt])
    f_max, curve = dataset_f_sweep(videos_maps, videos_gts)
    # independent fixed-threshold evaluation
    for tau in range(0, 256, 17):
        ps, rs = [], []
        for maps, gts in zip(videos_maps, videos_gts):
            p, r = precision_recall(quantize(maps[0]) >= tau, gts[0])
            ps.append(p)
            rs.append(r)
        f_tau = f_measure(float(np.mean(ps)), float(np.mean(rs)))
        assert f_max >= f_tau - 1e-12
    assert len(curve) == 256


# ---- MAE -------------------------------------------------------------------------

def test_mae_trivial_cases():
    gt = np.zeros((3, 3))
    assert mae(sal(np.zeros((3, 3))), gt) == 0.0
    assert mae(sal(np.ones((3, 3))), gt) == 1.0
    gt_binary = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert mae(sal(np.full((2, 2), 0.5)), gt_binary) == pytest.approx(0.5)


def test_dataset_mae_video_average():
    gt = np.zeros((2, 2))
    v1 = [sal(np.zeros((2, 2))), sal(np.ones((2, 2)))]  # frame MAEs 0, 1
    v2 = [sal(np.full((2, 2), 0.25))]
    assert dataset_mae([v1, v2], [[gt, gt], [gt]]) == pytest.approx(
        (0.5 + 0.25) / 2)


# ---- VOS -------------------------------------------------------------------------

def grid_regions():
    labels = np.zeros((4, 4), np.int32)
    labels[:, 2:] = 1
    return RegionSet.from_labels(labels)


def test_majority_vote_full_coverage():
    rs = grid_regions()
    mask = np.zeros((4, 4), bool)
    mask[:, 2:] = True
    out = majority_vote(mask, rs)
    np.testing.assert_array_equal(out, mask)


def test_majority_vote_forty_percent_is_background():
    labels = np.zeros((1, 5), np.int32)
    rs = RegionSet.from_labels(labels)
    mask = np.array([[1, 1, 0, 0, 0]], bool)
    assert not majority_vote(mask, rs).any()


def test_majority_vote_exact_half_is_foreground():
    rs = grid_regions()
    mask = np.zeros((4, 4), bool)
    mask[:2, :] = True  # each region exactly half covered
    assert majority_vote(mask, rs).all()


def test_vos_segment_idempotent_under_revoting(rng):
    labels = rng.integers(0, 4, (8, 8)).astype(np.int32)
    labels.ravel()[:4] = np.arange(4)
    rs = RegionSet.from_labels(labels)
    m = sal(rng.random((8, 8)))
    mask = vos_segment(m, rs)
    np.testing.assert_array_equal(majority_vote(mask, rs), mask)


# ---- region similarity -------------------------------------------------------------

def test_region_similarity_perfect():
    gt = np.zeros((4, 4), bool)
    gt[:2] = True
    masks = [gt.copy() for _ in range(8)]
    j_mean, j_recall, j_decay = region_similarity_stats([masks], [masks])
    assert (j_mean, j_recall, j_decay) == (1.0, 1.0, 0.0)


def test_region_similarity_constant_third():
    # rectangles overlapping half-area: J = 1/3 every frame
    a = np.zeros((4, 4), bool)
    a[:, :2] = True
    b = np.zeros((4, 4), bool)
    b[:, 1:3] = True
    assert iou(a, b) == pytest.approx(1.0 / 3.0)
    masks = [a] * 8
    gts = [b] * 8
    j_mean, j_recall, j_decay = region_similarity_stats([masks], [gts])
    assert j_mean == pytest.approx(1.0 / 3.0)
    assert j_recall == 0.0
    assert j_decay == pytest.approx(0.0)


def test_region_similarity_improving_sequence_negative_decay():
    gt = np.zeros((4, 4), bool)
    gt[:2] = True
    masks = []
    for t in range(8):
        m = gt.copy()
        if t < 4:  # early frames degraded
            m[3, :] = True
        masks.append(m)
    _, _, decay = region_similarity_stats([masks], [[gt] * 8])
    assert decay < 0.0


def test_iou_both_empty_is_one():
    z = np.zeros((2, 2), bool)
    assert iou(z, z) == 1.0


# ---- reports ------------------------------------------------------------------------

def test_report_round_trip(tmp_path):
    path = tmp_path / "report.txt"
    write_report(path, {"f_adap": 0.5, "videos": 3})
    parsed = read_report(path)
    assert parsed["f_adap"] == "0.500000"
    assert parsed["videos"] == "3"


def test_prc_csv_has_256_rows(tmp_path, rng):
    maps = [[sal(rng.random((4, 4)))]]
    gts = [[rng.random((4, 4)) > 0.5]]
    _, curve = dataset_f_sweep(maps, gts)
    path = tmp_path / "prc.csv"
    write_prc(path, curve)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == 257  # header + 256 thresholds
    assert lines[0] == "threshold,precision,recall"
