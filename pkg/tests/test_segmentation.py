import numpy as np
import pytest

from vidsal.core import FlowField, RegionSet, connectivity_ok
from vidsal.errors import InvalidArgument, MalformedInput
from vidsal.segmentation import (ScaleConfig, ingest_segmentation,
                                 link_temporal, segment_frame, segment_video,
                                 write_segmentation)

from conftest import make_frame


def zero_flow(w, h):
    return FlowField(width=w, height=h, vectors=np.zeros((h, w, 2), np.float32))


def test_single_region_degenerate_scale(rng):
    fr = make_frame(rng.integers(0, 256, (12, 17, 3)).astype(np.uint8))
    rs = segment_frame(fr, 1)
    assert len(rs.regions) == 1
    assert rs.regions[0].area == 12 * 17


def test_two_tone_halves_oracle():
    # oracle: exact connected components of the two-tone image
    px = np.zeros((16, 16, 3), np.uint8)
    px[:, 8:] = 255
    rs = segment_frame(make_frame(px), 2)
    assert len(rs.regions) == 2
    # pixel sets match the halves up to a 1-pixel boundary band
    left_ids = set(np.unique(rs.labels[:, :7]).tolist())
    right_ids = set(np.unique(rs.labels[:, 9:]).tolist())
    assert len(left_ids) == 1 and len(right_ids) == 1
    assert left_ids != right_ids


def test_uniform_gray_near_equal_areas():
    px = np.full((32, 32, 3), 120, np.uint8)
    rs = segment_frame(make_frame(px), 16)
    areas = [r.area for r in rs.regions]
    assert len(areas) == 16
    assert max(areas) / min(areas) <= 2.0


def test_region_count_within_factor_two(clip):
    rs = segment_frame(clip.frames[0], 100)
    assert 50 <= len(rs.regions) <= 200
    assert connectivity_ok(rs.labels)


def test_target_count_beyond_pixels_rejected():
    fr = make_frame(np.zeros((4, 4, 3), np.uint8))
    with pytest.raises(InvalidArgument):
        segment_frame(fr, 17)
    with pytest.raises(InvalidArgument):
        segment_frame(fr, 0)


def test_segment_frame_deterministic(clip):
    a = segment_frame(clip.frames[3], 60)
    b = segment_frame(clip.frames[3], 60)
    assert np.array_equal(a.labels, b.labels)


def test_static_video_tracks_span_all_frames(rng):
    labels = rng.integers(0, 4, (8, 8)).astype(np.int32)
    labels.ravel()[:4] = np.arange(4)
    n = 5
    region_sets = [RegionSet.from_labels(labels, frame_index=t)
                   for t in range(n)]
    flows = [zero_flow(8, 8) for _ in range(n - 1)]
    tracks = link_temporal(region_sets, flows)
    assert len(tracks) == 4
    for tr in tracks:
        assert tr.first_frame == 0
        assert tr.last_frame == n - 1


def test_zero_overlap_gives_singleton_tracks(rng):
    labels = rng.integers(0, 3, (8, 8)).astype(np.int32)
    labels.ravel()[:3] = np.arange(3)
    region_sets = [RegionSet.from_labels(labels, frame_index=t)
                   for t in range(3)]
    away = FlowField(width=8, height=8,
                     vectors=np.full((8, 8, 2), 50, np.float32))
    tracks = link_temporal(region_sets, [away, away])
    assert all(len(tr.members) == 1 for tr in tracks)
    assert len(tracks) == 9


def test_mismatched_flow_count_rejected(rng):
    labels = np.zeros((4, 4), np.int32)
    region_sets = [RegionSet.from_labels(labels, frame_index=t)
                   for t in range(3)]
    with pytest.raises(InvalidArgument):
        link_temporal(region_sets, [zero_flow(4, 4)])


def test_share_below_threshold_never_links():
    # region 1 keeps only 25% overlap with its successor shape -> no link
    a = np.zeros((8, 8), np.int32)
    a[0:2, 0:2] = 1
    b = np.zeros((8, 8), np.int32)
    b[1:3, 1:3] = 1
    rs = [RegionSet.from_labels(a, frame_index=0),
          RegionSet.from_labels(b, frame_index=1)]
    tracks = link_temporal(rs, [zero_flow(8, 8)], link_threshold=0.3)
    by_members = {tr.members for tr in tracks}
    assert ((0, 1),) in by_members  # the small square stays unlinked
    assert ((1, 1),) in by_members


def test_appearing_object_track_never_leaks(clip_two_objects):
    # no track through the second object's body may extend outside its
    # ground-truth presence window
    clip = clip_two_objects
    _, first, last = clip.extents[1]
    cfg = ScaleConfig(initial_superpixels=(64,), compactness=10.0)
    segs = segment_video(list(clip.frames), cfg, list(clip.flows_fwd))
    seg = segs[0]
    mid = (first + last) // 2
    ys, xs = np.nonzero(clip.object_masks[1][mid])
    rid = int(seg.region_sets[mid].labels[int(ys.mean()), int(xs.mean())])
    track = seg.track(seg.track_of(mid, rid))
    assert track.first_frame >= first
    assert track.last_frame <= last
    for frame, region in track.members:
        region_mask = seg.region_sets[frame].labels == region
        overlap = (region_mask & clip.object_masks[1][frame]).sum() \
            / region_mask.sum()
        assert overlap > 0.5


def test_track_extent_matches_generator_oracle(clip_two_objects):
    # at a scale where the object stays one coherent region, its track spans
    # exactly the generator's ground-truth extent
    clip = clip_two_objects
    _, first, last = clip.extents[1]
    cfg = ScaleConfig(initial_superpixels=(64,), compactness=10.0)
    segs = segment_video(list(clip.frames), cfg, list(clip.flows_fwd))
    seg = segs[0]
    candidate_tracks = set()
    for t in range(first, last + 1):
        ys, xs = np.nonzero(clip.object_masks[1][t])
        rid = int(seg.region_sets[t].labels[int(ys.mean()), int(xs.mean())])
        candidate_tracks.add(seg.track_of(t, rid))
    assert len(candidate_tracks) == 1
    track = seg.track(candidate_tracks.pop())
    assert (track.first_frame, track.last_frame) == (first, last)


def test_segment_video_structure(clip):
    cfg = ScaleConfig(initial_superpixels=(20, 40), compactness=10.0)
    segs = segment_video(list(clip.frames), cfg, list(clip.flows_fwd))
    assert [s.scale_id for s in segs] == [0, 1]
    for seg in segs:
        assert len(seg.region_sets) == len(clip.frames)
        # partition at every (scale, frame): track_of covers all regions
        for rs in seg.region_sets:
            for info in rs.regions:
                seg.track_of(rs.frame_index, info.id)


def test_single_scale_matches_direct_path(clip):
    frames = list(clip.frames)[:4]
    flows = list(clip.flows_fwd)[:3]
    cfg = ScaleConfig(initial_superpixels=(30,), compactness=10.0)
    segs = segment_video(frames, cfg, flows)
    direct = [segment_frame(f, 30, 10.0, scale_id=0) for f in frames]
    for rs_a, rs_b in zip(segs[0].region_sets, direct):
        assert np.array_equal(rs_a.labels, rs_b.labels)


def test_coarser_scale_has_fewer_regions(clip):
    frames = list(clip.frames)[:4]
    flows = list(clip.flows_fwd)[:3]
    cfg = ScaleConfig(initial_superpixels=(30, 120), compactness=10.0)
    segs = segment_video(frames, cfg, flows)
    for rs_c, rs_f in zip(segs[0].region_sets, segs[1].region_sets):
        assert len(rs_c.regions) < len(rs_f.regions)


def test_link_deterministic(clip):
    frames = list(clip.frames)[:5]
    flows = list(clip.flows_fwd)[:4]
    cfg = ScaleConfig(initial_superpixels=(25,), compactness=10.0)
    a = segment_video(frames, cfg, flows)[0]
    b = segment_video(frames, cfg, flows)[0]
    assert [t.members for t in a.tracks] == [t.members for t in b.tracks]


def test_write_ingest_round_trip(tmp_path, clip):
    frames = list(clip.frames)[:3]
    flows = list(clip.flows_fwd)[:2]
    cfg = ScaleConfig(initial_superpixels=(15, 30), compactness=10.0)
    segs = segment_video(frames, cfg, flows)
    write_segmentation(segs, tmp_path)
    loaded = ingest_segmentation(tmp_path)
    assert len(loaded) == 2
    for orig, back in zip(segs, loaded):
        for rs_a, rs_b in zip(orig.region_sets, back.region_sets):
            assert np.array_equal(rs_a.labels, rs_b.labels)
        assert {t.members for t in orig.tracks} == \
            {t.members for t in back.tracks}


def test_ingest_rejects_track_gap(tmp_path, clip):
    frames = list(clip.frames)[:3]
    flows = list(clip.flows_fwd)[:2]
    cfg = ScaleConfig(initial_superpixels=(15,), compactness=10.0)
    segs = segment_video(frames, cfg, flows)
    write_segmentation(segs, tmp_path)
    track_file = tmp_path / "tracks.txt"
    rows = [line.split() for line in track_file.read_text().splitlines()]
    # give one region a track id whose frames cannot be consecutive
    spanning = [r for r in rows if r[1] == "0"][0][3]
    victim = [r for r in rows if r[1] == "2"][-1]
    victim[3] = spanning
    # ensure the original (frame 1) member of that track stays -> frame gap
    track_file.write_text("\n".join(" ".join(r) for r in rows) + "\n")
    with pytest.raises(MalformedInput):
        ingest_segmentation(tmp_path)


def test_ingest_rejects_label_gap(tmp_path, clip):
    from vidsal.core import write_label_map
    frames = list(clip.frames)[:2]
    flows = list(clip.flows_fwd)[:1]
    cfg = ScaleConfig(initial_superpixels=(15,), compactness=10.0)
    segs = segment_video(frames, cfg, flows)
    write_segmentation(segs, tmp_path)
    bad = segs[0].region_sets[0].labels.copy()
    bad[bad == 0] = 1  # id 0 disappears
    write_label_map(bad, tmp_path / "labels_s00_f00000.stlb")
    with pytest.raises(MalformedInput, match="gap"):
        ingest_segmentation(tmp_path)


def test_scale_config_validation():
    with pytest.raises(InvalidArgument):
        ScaleConfig(initial_superpixels=(200, 100))
    with pytest.raises(InvalidArgument):
        ScaleConfig(initial_superpixels=())
    with pytest.raises(InvalidArgument):
        ScaleConfig(compactness=0.0)
