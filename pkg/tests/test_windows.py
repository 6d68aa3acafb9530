from __future__ import annotations

import numpy as np
import pytest

from bevcast import windows as win
from bevcast.errors import ConfigError, FormatError, IntegrityError, RangeError, SplitError
from bevcast.raster import SceneRaster, RoiBox
from bevcast.synthetic import oracle_future
from bevcast.windows import (
    FRAME_STEP,
    FUTURE_STEPS,
    HISTORY_SPAN,
    HISTORY_STEPS,
    Window,
    extract_corpus,
    extract_window,
    iter_anchor_frames,
    load_split,
    load_window,
    save_corpus,
    save_window,
    split_dataset,
    window_dirs,
)


class TestExtractWindow:
    def test_invariants(self, small_corpus):
        for w in small_corpus:
            assert len(w.history) == HISTORY_STEPS
            assert w.future.shape == (FUTURE_STEPS, 2)
            frames = [r.frame for r in w.history]
            assert frames == list(range(w.t - HISTORY_SPAN, w.t + 1, FRAME_STEP))
            # the anchor-frame relative coordinate of the TV is exactly (0, 0)
            assert w.history_xy[-1, 0] == 0.0 and w.history_xy[-1, 1] == 0.0

    def test_future_matches_generator_oracle(self, small_scene):
        track = small_scene.tracks[0]
        t = track.first_frame + HISTORY_SPAN
        w = extract_window(track, small_scene.tracks, t, small_scene.meta)
        expected = oracle_future(small_scene, track.id, t)
        assert np.allclose(w.future, expected, atol=1e-9)

    def test_insufficient_frames_is_a_range_error(self, small_scene):
        track = small_scene.tracks[0]
        with pytest.raises(RangeError):
            extract_window(
                track, small_scene.tracks, track.first_frame + HISTORY_SPAN - 1, small_scene.meta
            )
        with pytest.raises(RangeError):
            extract_window(
                track, small_scene.tracks, track.last_frame - win.FUTURE_SPAN + 1, small_scene.meta
            )

    def test_history_rasters_are_tv_centered(self, one_window, default_meta):
        # per-frame re-centering: the TV covers the center of every history raster
        from bevcast.tracks import meters_to_pixels

        px = lambda v: meters_to_pixels(v, default_meta)
        for r in one_window.history:
            row = int((59 + px(one_window.tv_h) / 2) * 48 / r.roi.height)
            col = int((267 + px(one_window.tv_w) / 2) * 416 / r.roi.width)
            assert r.occupancy[row, col] > 0.0

    def test_anchor_metadata(self, small_scene):
        track = small_scene.tracks[0]
        t = track.first_frame + HISTORY_SPAN
        w = extract_window(track, small_scene.tracks, t, small_scene.meta)
        s = track.state_at(t)
        assert (w.vx, w.vy) == (s.vx, s.vy)
        assert (w.anchor_x, w.anchor_y) == (s.x, s.y)
        assert (w.tv_w, w.tv_h) == (s.w, s.h)


class TestAnchorsAndCorpus:
    def test_anchor_frames_respect_spans(self, small_scene):
        for tr in small_scene.tracks:
            anchors = list(iter_anchor_frames(tr, stride=25))
            assert anchors, "a 12 s track admits at least one window"
            assert anchors[0] == tr.first_frame + HISTORY_SPAN
            assert all(b - a == 25 for a, b in zip(anchors, anchors[1:]))
            assert anchors[-1] + win.FUTURE_SPAN <= tr.last_frame

    def test_corpus_covers_requested_targets(self, small_scene):
        ids = [tr.id for tr in small_scene.tracks[:3]]
        corpus = extract_corpus(small_scene.tracks, small_scene.meta, ids, stride=50)
        assert {w.tv_id for w in corpus} == set(ids)


def _stub_window(tv_id: int) -> Window:
    # split tests only need tv_id; the heavy fields stay minimal
    occupancy = np.zeros((48, 416), dtype=np.float32)
    roi = RoiBox(0, 583, 0, 137)
    history = [
        SceneRaster(occupancy=occupancy, roi=roi, tv_id=tv_id, frame=4 * j)
        for j in range(HISTORY_STEPS)
    ]
    return Window(tv_id=tv_id, t=72, history=history, future=np.zeros((FUTURE_STEPS, 2)))


class TestSplit:
    def test_small_split_counts(self, small_corpus):
        tags = {}
        for w in small_corpus:
            tags.setdefault(w.tv_id, set()).add(w.split_tag)
        # all windows of one TV share a tag
        assert all(len(s) == 1 for s in tags.values())
        by_tag = {tag: sum(1 for s in tags.values() if s == {tag}) for tag in win.SPLITS}
        assert by_tag["train"] == 3 and by_tag["test"] == 1 and by_tag["eval"] == 2

    def test_420_targets_split_252_84_84(self):
        stubs = [_stub_window(tv_id) for tv_id in range(1, 421)]
        tagged = split_dataset(stubs, seed=0)
        counts = {tag: 0 for tag in win.SPLITS}
        for w in tagged:
            counts[w.split_tag] += 1
        assert counts == {"train": 252, "test": 84, "eval": 84}

    def test_split_is_deterministic(self):
        a = split_dataset([_stub_window(i) for i in range(1, 21)], seed=7)
        b = split_dataset([_stub_window(i) for i in range(1, 21)], seed=7)
        assert [w.split_tag for w in a] == [w.split_tag for w in b]
        c = split_dataset([_stub_window(i) for i in range(1, 21)], seed=8)
        assert [w.split_tag for w in a] != [w.split_tag for w in c]

    def test_too_few_targets_is_a_split_error(self):
        with pytest.raises(SplitError):
            split_dataset([_stub_window(i) for i in range(1, 5)], seed=0)


class TestPersistence:
    def test_round_trip(self, one_window, tmp_path):
        save_window(one_window, tmp_path)
        loaded = load_window(
            tmp_path / one_window.split_tag / str(one_window.tv_id) / str(one_window.t)
        )
        assert loaded.tv_id == one_window.tv_id
        assert loaded.t == one_window.t
        assert loaded.split_tag == one_window.split_tag
        assert loaded.vx == one_window.vx and loaded.vy == one_window.vy
        assert loaded.anchor_x == one_window.anchor_x
        assert loaded.tv_w == one_window.tv_w and loaded.tv_h == one_window.tv_h
        assert loaded.meters_per_pixel == one_window.meters_per_pixel
        assert np.array_equal(loaded.future, one_window.future)
        assert np.array_equal(loaded.history_xy, one_window.history_xy)
        for a, b in zip(loaded.history, one_window.history):
            assert a.frame == b.frame and a.roi == b.roi
            assert np.array_equal(a.occupancy, b.occupancy)

    def test_untagged_window_is_not_saveable(self, one_window, tmp_path):
        bare = Window(
            tv_id=one_window.tv_id,
            t=one_window.t,
            history=one_window.history,
            future=one_window.future,
        )
        with pytest.raises(ConfigError):
            save_window(bare, tmp_path)

    def test_missing_meta_key_is_a_format_error(self, one_window, tmp_path):
        d = save_window(one_window, tmp_path)
        meta = d / "meta.txt"
        lines = [l for l in meta.read_text().splitlines() if not l.startswith("vx =")]
        meta.write_text("\n".join(lines) + "\n")
        with pytest.raises(FormatError, match="missing field"):
            load_window(d)

    def test_truncated_raster_is_a_format_error(self, one_window, tmp_path):
        d = save_window(one_window, tmp_path)
        f = d / "raster_03.bin"
        f.write_bytes(f.read_bytes()[:100])
        with pytest.raises(FormatError):
            load_window(d)

    def test_frame_mismatch_is_a_format_error(self, one_window, tmp_path):
        d = save_window(one_window, tmp_path)
        meta = d / "meta.txt"
        text = meta.read_text()
        old = f"raster.00 = {one_window.history[0].frame} "
        new = f"raster.00 = {one_window.history[0].frame + 1} "
        meta.write_text(text.replace(old, new))
        with pytest.raises(FormatError, match="frame"):
            load_window(d)

    def test_corpus_round_trip_and_numeric_ordering(self, small_corpus, tmp_path):
        n = save_corpus(small_corpus, tmp_path)
        assert n == len(small_corpus)
        dirs = window_dirs(tmp_path)
        assert len(dirs) == len(small_corpus)
        for split in win.SPLITS:
            loaded = load_split(tmp_path, split)
            expected = [w for w in small_corpus if w.split_tag == split]
            assert len(loaded) == len(expected)
            # numeric directory ordering: ids and anchors ascend as integers
            ids = [w.tv_id for w in loaded]
            assert ids == sorted(ids)
            for tv in set(ids):
                ts = [w.t for w in loaded if w.tv_id == tv]
                assert ts == sorted(ts)
