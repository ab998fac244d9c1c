import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vidsal.core import FlowField, RegionSet
from vidsal.errors import InvalidArgument, MalformedInput
from vidsal.flow import (estimate_flow, match_ratio, pair_overlap_counts,
                         read_flow, write_flow)

from conftest import make_frame


def field(vectors):
    vectors = np.asarray(vectors, dtype=np.float32)
    return FlowField(width=vectors.shape[1], height=vectors.shape[0],
                     vectors=vectors)


def test_zero_flow_round_trip(tmp_path):
    f = field(np.zeros((2, 2, 2)))
    path = tmp_path / "z.flo"
    write_flow(f, path)
    g = read_flow(path)
    assert g.vectors.tobytes() == f.vectors.tobytes()


def test_random_flow_round_trips_bit_exact(tmp_path, rng):
    vec = rng.standard_normal((8, 8, 2)).astype(np.float32)
    path = tmp_path / "r.flo"
    write_flow(field(vec), path)
    # byte-level comparison of a second write
    again = tmp_path / "r2.flo"
    write_flow(read_flow(path), again)
    assert path.read_bytes() == again.read_bytes()


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.flo"
    import struct
    path.write_bytes(struct.pack("<fii", 12345.0, 2, 2) + b"\x00" * 32)
    with pytest.raises(MalformedInput, match="magic"):
        read_flow(path)


def test_truncated_payload_rejected(tmp_path):
    path = tmp_path / "t.flo"
    write_flow(field(np.zeros((4, 4, 2))), path)
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(MalformedInput, match="truncated"):
        read_flow(path)


def test_identical_frames_give_zero_flow(rng):
    px = rng.integers(0, 256, (20, 20, 3)).astype(np.uint8)
    fr = make_frame(px)
    fl = estimate_flow(fr, make_frame(px, index=1))
    assert np.abs(fl.vectors).max() == 0.0


def test_uniform_frames_tie_to_zero():
    px = np.full((16, 16, 3), 99, np.uint8)
    fl = estimate_flow(make_frame(px), make_frame(px, index=1))
    assert np.abs(fl.vectors).max() == 0.0


def test_translation_recovered_interior(rng):
    px = rng.integers(0, 256, (32, 32, 3)).astype(np.uint8)
    shifted = np.roll(px, 3, axis=1)  # content moves 3 pixels right
    fl = estimate_flow(make_frame(px), make_frame(shifted, index=1))
    interior = fl.vectors[11:21, 11:21]
    assert np.all(interior[..., 0] == 3)
    assert np.all(interior[..., 1] == 0)


def test_dimension_mismatch_rejected(rng):
    a = make_frame(np.zeros((8, 8, 3), np.uint8))
    b = make_frame(np.zeros((8, 10, 3), np.uint8), index=1)
    with pytest.raises(InvalidArgument):
        estimate_flow(a, b)


def _region_pair(labels_t, labels_t1):
    rs_t = RegionSet.from_labels(np.asarray(labels_t, np.int32))
    rs_t1 = RegionSet.from_labels(np.asarray(labels_t1, np.int32),
                                  frame_index=1)
    return rs_t, rs_t1


def test_match_ratio_identical_static():
    labels = np.zeros((4, 4), np.int32)
    labels[:, 2:] = 1
    rs_t, rs_t1 = _region_pair(labels, labels)
    zero = field(np.zeros((4, 4, 2)))
    phi = match_ratio(rs_t.labels, rs_t.regions[0],
                      rs_t1.labels, rs_t1.regions[0], zero, zero)
    assert phi == 1.0


def test_match_ratio_disjoint_static():
    labels = np.zeros((4, 4), np.int32)
    labels[:, 2:] = 1
    rs_t, rs_t1 = _region_pair(labels, labels)
    zero = field(np.zeros((4, 4, 2)))
    phi = match_ratio(rs_t.labels, rs_t.regions[0],
                      rs_t1.labels, rs_t1.regions[1], zero, zero)
    assert phi == 0.0


def test_match_ratio_half_overlap_oracle():
    # region i: 10x10 block (area 100); forward flow shifts it so 50 pixels
    # land in j; region j: 10x20 block (area 200); backward flow returns 100
    # pixels into i -> phi = 0.5 * (0.5 + 0.5)
    labels_t = np.ones((30, 30), np.int32)
    labels_t[0:10, 0:10] = 0
    labels_t1 = np.ones((30, 30), np.int32)
    labels_t1[15:25, 0:20] = 0
    rs_t, rs_t1 = _region_pair(labels_t, labels_t1)

    fwd = np.zeros((30, 30, 2), np.float32)
    fwd[0:10, 0:5] = (0, 15)   # left half of i lands in j
    fwd[0:10, 5:10] = (15, 0)  # right half lands in the surround
    bwd = np.zeros((30, 30, 2), np.float32)
    bwd[15:25, 0:10] = (0, -15)  # half of j returns onto i
    bwd[15:25, 10:20] = (5, 0)   # other half lands in the surround

    phi = match_ratio(rs_t.labels, rs_t.regions[0],
                      rs_t1.labels, rs_t1.regions[0],
                      field(fwd), field(bwd))
    assert phi == pytest.approx(0.5)


def test_out_of_frame_counts_against_match():
    labels = np.zeros((4, 4), np.int32)
    labels[:, 2:] = 1
    rs_t, rs_t1 = _region_pair(labels, labels)
    away = field(np.full((4, 4, 2), 99, np.float32))
    zero = field(np.zeros((4, 4, 2)))
    phi = match_ratio(rs_t.labels, rs_t.regions[0],
                      rs_t1.labels, rs_t1.regions[0], away, zero)
    assert phi == 0.5  # forward all dropped, backward still perfect


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_match_ratio_in_unit_interval(seed):
    rng = np.random.default_rng(seed)
    labels_t = rng.integers(0, 3, (8, 8)).astype(np.int32)
    labels_t.ravel()[:3] = np.arange(3)
    labels_t1 = rng.integers(0, 3, (8, 8)).astype(np.int32)
    labels_t1.ravel()[:3] = np.arange(3)
    rs_t = RegionSet.from_labels(labels_t)
    rs_t1 = RegionSet.from_labels(labels_t1, frame_index=1)
    fwd = field(rng.uniform(-4, 4, (8, 8, 2)).astype(np.float32))
    bwd = field(rng.uniform(-4, 4, (8, 8, 2)).astype(np.float32))
    phi = match_ratio(rs_t.labels, rs_t.regions[0],
                      rs_t1.labels, rs_t1.regions[rng.integers(0, 3)],
                      fwd, bwd)
    assert 0.0 <= phi <= 1.0


def test_pair_overlap_counts_matches_bruteforce(rng):
    labels_t = rng.integers(0, 4, (10, 10)).astype(np.int32)
    labels_t.ravel()[:4] = np.arange(4)
    labels_t1 = rng.integers(0, 3, (10, 10)).astype(np.int32)
    labels_t1.ravel()[:3] = np.arange(3)
    vec = rng.integers(-3, 4, (10, 10, 2)).astype(np.float32)
    counts = pair_overlap_counts(labels_t, labels_t1, field(vec))
    brute = np.zeros_like(counts)
    for y in range(10):
        for x in range(10):
            tx, ty = x + int(vec[y, x, 0]), y + int(vec[y, x, 1])
            if 0 <= tx < 10 and 0 <= ty < 10:
                brute[labels_t[y, x], labels_t1[ty, tx]] += 1
    assert np.array_equal(counts, brute)
