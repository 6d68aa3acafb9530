from __future__ import annotations

import numpy as np
import pytest

from bevcast import synthetic, tracks
from bevcast.errors import GenerationError, RangeError


def _rect(state):
    return state.x, state.x + state.w, state.y, state.y + state.h


def _any_overlap(scene, frames) -> bool:
    for f in frames:
        rects = [_rect(tr.state_at(f)) for tr in scene.tracks if tr.covers(f)]
        for i in range(len(rects)):
            for j in range(i + 1, len(rects)):
                ax0, ax1, ay0, ay1 = rects[i]
                bx0, bx1, by0, by1 = rects[j]
                if ax0 < bx1 and bx0 < ax1 and ay0 < by1 and by0 < ay1:
                    return True
    return False


class TestSceneSpec:
    def test_rejects_bad_values(self):
        with pytest.raises(GenerationError):
            synthetic.SceneSpec(seed=0, n_vehicles=0)
        with pytest.raises(GenerationError):
            synthetic.SceneSpec(seed=0, n_vehicles=1, n_lanes=0)
        with pytest.raises(GenerationError):
            synthetic.SceneSpec(seed=0, n_vehicles=1, duration=5.0)
        with pytest.raises(GenerationError):
            synthetic.SceneSpec(seed=0, n_vehicles=1, speed_range=(5.0, 3.0))
        with pytest.raises(GenerationError):
            synthetic.SceneSpec(seed=0, n_vehicles=1, lane_change_probability=1.5)


class TestGenerateScene:
    def test_deterministic_for_a_seed(self):
        spec = synthetic.SceneSpec(seed=9, n_vehicles=5, duration=10.0)
        a = synthetic.generate_scene(spec)
        b = synthetic.generate_scene(spec)
        assert tracks.serialize_tracks(a.tracks) == tracks.serialize_tracks(b.tracks)

    def test_different_seeds_differ(self):
        a = synthetic.generate_scene(synthetic.SceneSpec(seed=1, n_vehicles=5, duration=10.0))
        b = synthetic.generate_scene(synthetic.SceneSpec(seed=2, n_vehicles=5, duration=10.0))
        assert tracks.serialize_tracks(a.tracks) != tracks.serialize_tracks(b.tracks)

    def test_constant_velocity_closed_form(self, small_scene):
        for tr in small_scene.tracks:
            plan = small_scene.plans[tr.id]
            assert not plan.changes_lane
            for f in (0, 37, 150, tr.last_frame):
                s = tr.state_at(f)
                assert s.x == pytest.approx(plan.x0 + plan.vx * f / 25.0, abs=1e-12)
                assert s.y == plan.y0
                assert s.vy == 0.0

    def test_track_count_and_duration(self, small_scene):
        assert len(small_scene.tracks) == 6
        for tr in small_scene.tracks:
            assert tr.first_frame == 0
            assert tr.last_frame == int(round(12.0 * 25))
            assert len(tr.states) == 301

    def test_no_overlap_constant_velocity(self, small_scene):
        frames = range(0, 301, 10)
        assert not _any_overlap(small_scene, frames)

    def test_no_overlap_with_lane_changes(self):
        spec = synthetic.SceneSpec(
            seed=21, n_vehicles=9, duration=14.0, lane_change_probability=1.0
        )
        scene = synthetic.generate_scene(spec)
        assert not _any_overlap(scene, range(0, 351, 5))

    def test_lane_change_moves_between_lane_centers(self):
        spec = synthetic.SceneSpec(
            seed=5, n_vehicles=6, duration=14.0, lane_change_probability=1.0
        )
        scene = synthetic.generate_scene(spec)
        movers = [vid for vid, p in scene.plans.items() if p.changes_lane]
        assert movers, "with probability 1.0 at least one vetted change is expected"
        for vid in movers:
            plan = scene.plans[vid]
            lane0 = int((plan.y0 + plan.width / 2) // spec.lane_width)
            lane1 = int((plan.y1 + plan.width / 2) // spec.lane_width)
            assert abs(lane1 - lane0) == 1
            track = next(tr for tr in scene.tracks if tr.id == vid)
            lane_ids = {s.lane_id for s in track.states}
            assert len(lane_ids) == 2

    def test_overfull_lane_is_a_generation_error(self):
        with pytest.raises(GenerationError, match="pack"):
            synthetic.generate_scene(synthetic.SceneSpec(seed=0, n_vehicles=90, n_lanes=1))

    def test_speeds_within_range(self, small_scene):
        lo, hi = small_scene.spec.speed_range
        for plan in small_scene.plans.values():
            assert lo <= plan.vx <= hi

    def test_meta_covers_the_scene(self, small_scene):
        last = small_scene.spec.duration
        max_front = max(p.x_at(last) + p.length for p in small_scene.plans.values())
        assert small_scene.meta.road_length >= max_front
        assert small_scene.meta.frame_rate == 25.0
        assert len(small_scene.meta.lane_boundaries) == small_scene.spec.n_lanes + 1


class TestOracleFuture:
    def test_shape_and_first_step(self, small_scene):
        tr = small_scene.tracks[0]
        fut = synthetic.oracle_future(small_scene, tr.id, 0)
        assert fut.shape == (31, 2)
        plan = small_scene.plans[tr.id]
        assert fut[0, 0] == pytest.approx(plan.vx * 4 / 25.0, abs=1e-12)
        assert fut[0, 1] == 0.0

    def test_out_of_range_frames_rejected(self, small_scene):
        tr = small_scene.tracks[0]
        with pytest.raises(RangeError):
            synthetic.oracle_future(small_scene, tr.id, tr.last_frame - 123)
        with pytest.raises(RangeError):
            synthetic.oracle_future(small_scene, 999, 0)

    def test_last_valid_anchor_accepted(self, small_scene):
        tr = small_scene.tracks[0]
        fut = synthetic.oracle_future(small_scene, tr.id, tr.last_frame - 124)
        assert fut.shape == (31, 2)


class TestWriteScene:
    def test_round_trip_through_the_ingest_formats(self, small_scene, tmp_path):
        tracks_path, meta_path = synthetic.write_scene(small_scene, tmp_path)
        parsed = tracks.parse_tracks(tracks_path)
        meta = tracks.parse_recording_meta(meta_path)
        assert parsed == small_scene.tracks
        assert meta == small_scene.meta
