import numpy as np
import pytest

from railcount.geometry import HeadBox
from railcount.metrics import clear_mot
from railcount.motion_models import MotionModel
from railcount.simulator import scripted_scenarios
from railcount.tracker import (
    Detection,
    Tracker,
    TrackerConfig,
    TrackStatus,
    run_sequence,
    to_frame_mapping,
)


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def _emb(i, dim=16):
    v = np.zeros(dim)
    v[i] = 1.0
    return v


def _det(x, y, h=40.0, a=0.75, conf=0.9, emb=None):
    return Detection(HeadBox(x, y, a, h), conf, emb)


@pytest.fixture
def config():
    return TrackerConfig(model=MotionModel.CV8D, n_init=3, max_age=5, fps=25.0)


class TestLifecycle:
    def test_empty_step_on_empty_tracker(self, config, cam):
        tracker = Tracker(config, cam)
        out = tracker.step(1, [])
        assert out.frame == 1 and out.entries == ()

    def test_confirmation_after_n_init_frames(self, config, cam):
        tracker = Tracker(config, cam)
        statuses = []
        for frame in range(1, 5):
            out = tracker.step(frame, [_det(500, 400, emb=_emb(0))])
            assert len(out.entries) == 1
            entry = out.entries[0]
            assert entry.track_id == 1
            statuses.append(entry.status)
        assert statuses[:2] == [TrackStatus.TENTATIVE, TrackStatus.TENTATIVE]
        assert statuses[2] == TrackStatus.CONFIRMED
        assert statuses[3] == TrackStatus.CONFIRMED

    def test_vanished_track_dies_and_new_id_issued(self, config, cam):
        tracker = Tracker(config, cam)
        for frame in range(1, 5):
            tracker.step(frame, [_det(500, 400, emb=_emb(0))])
        # vanish for max_age + 1 frames
        frame = 5
        for _ in range(config.max_age + 1):
            tracker.step(frame, [])
            frame += 1
        assert tracker.tracks == []
        out = tracker.step(frame, [_det(500, 400, emb=_emb(0))])
        assert out.entries[0].track_id == 2

    def test_unmatched_tentative_deleted_immediately(self, config, cam):
        tracker = Tracker(config, cam)
        tracker.step(1, [_det(500, 400, emb=_emb(0))])
        tracker.step(2, [])
        assert tracker.tracks == []

    def test_coasting_emits_predicted_flag(self, config, cam):
        tracker = Tracker(config, cam)
        for frame in range(1, 4):
            tracker.step(frame, [_det(500, 400, emb=_emb(0))])
        out = tracker.step(4, [])
        assert len(out.entries) == 1
        assert out.entries[0].predicted is True
        out = tracker.step(5, [])
        assert out.entries[0].predicted is True
        out = tracker.step(6, [])  # beyond the coasting budget
        assert out.entries == ()

    def test_out_of_order_frame_rejected(self, config, cam):
        tracker = Tracker(config, cam)
        tracker.step(3, [])
        with pytest.raises(ValueError, match="strictly increasing"):
            tracker.step(3, [])

    def test_low_confidence_detections_dropped(self, config, cam):
        tracker = Tracker(config, cam)
        out = tracker.step(1, [_det(500, 400, conf=0.4, emb=_emb(0))])
        assert out.entries == ()


class TestInvariants:
    def test_id_monotone_issuance_and_no_reuse(self, config, cam, rng):
        tracker = Tracker(config, cam)
        seen_ids = []
        for frame in range(1, 60):
            dets = []
            for j in range(int(rng.integers(0, 4))):
                dets.append(_det(rng.uniform(100, 1800), rng.uniform(100, 900),
                                 h=rng.uniform(20, 60), emb=_unit(rng.normal(size=16))))
            out = tracker.step(frame, dets)
            for entry in out.entries:
                seen_ids.append(entry.track_id)
        first_seen = {}
        for order, track_id in enumerate(seen_ids):
            first_seen.setdefault(track_id, order)
        ordered = sorted(first_seen, key=first_seen.get)
        assert ordered == sorted(ordered)

    def test_no_deleted_track_reappears(self, config, cam):
        tracker = Tracker(config, cam)
        for frame in range(1, 4):
            tracker.step(frame, [_det(500, 400, emb=_emb(0))])
        frame = 4
        for _ in range(config.max_age + 2):
            tracker.step(frame, [])
            frame += 1
        out = tracker.step(frame, [_det(500, 400, emb=_emb(0))])
        assert all(e.track_id != 1 for e in out.entries)

    def test_determinism_across_runs(self, config, cam, rng):
        frames = {}
        for frame in range(1, 40):
            frames[frame] = [
                _det(rng.uniform(100, 1800), rng.uniform(100, 900),
                     h=rng.uniform(20, 60), emb=_unit(rng.normal(size=16)))
                for _ in range(3)
            ]
        first = run_sequence(frames, config, cam)
        second = run_sequence(frames, config, cam)
        assert first == second


class TestScenarios:
    def test_crossing_pair_preserves_ids(self, cam):
        scenario = scripted_scenarios()["crossing-pair"]
        seq = scenario.sequence
        config = TrackerConfig(model=MotionModel.PHYS3D, fps=seq.fps)
        outputs = run_sequence(seq.detections, config, seq.cam)
        report = clear_mot(seq.gt, to_frame_mapping(outputs))
        assert report.idsw == scenario.expected_idsw == 0

    @pytest.mark.parametrize("model", list(MotionModel))
    def test_noiseless_single_target_single_track(self, cam, model):
        scenario = scripted_scenarios()["occlusion-3"]
        seq = scenario.sequence
        config = TrackerConfig(model=model, fps=seq.fps)
        outputs = run_sequence(seq.detections, config, seq.cam)
        ids = {e.track_id for out in outputs for e in out.entries
               if e.status is TrackStatus.CONFIRMED}
        assert len(ids) == 1

    def test_singular_update_deletes_track_and_respawns(self, cam, config, monkeypatch):
        tracker = Tracker(config, cam)
        for frame in range(1, 4):
            tracker.step(frame, [_det(500, 400, emb=_emb(0))])

        def broken_update(state, det):
            raise np.linalg.LinAlgError("singular")

        monkeypatch.setattr(tracker.filter, "update", broken_update)
        out = tracker.step(4, [_det(500, 400, emb=_emb(0))])
        new_ids = {e.track_id for e in out.entries}
        assert 1 not in new_ids and len(new_ids) == 1


def test_run_sequence_fills_frame_gaps(config, cam):
    frames = {1: [_det(500, 400, emb=_emb(0))], 4: [_det(500, 400, emb=_emb(0))]}
    outputs = run_sequence(frames, config, cam)
    assert [o.frame for o in outputs] == [1, 2, 3, 4]


def test_to_frame_mapping_filters_statuses(config, cam):
    tracker = Tracker(config, cam)
    outputs = [tracker.step(f, [_det(500, 400, emb=_emb(0))]) for f in range(1, 4)]
    mapping = to_frame_mapping(outputs)
    assert mapping[1] == [] and mapping[2] == []
    assert len(mapping[3]) == 1
