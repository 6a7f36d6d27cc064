import itertools
import math

import numpy as np
import pytest

from cavtraj.detection import OrientedBox
from cavtraj.errors import InvalidArgument
from cavtraj.fusion import FusedFrame
from cavtraj.tracking import (
    Assignment,
    MultiObjectTracker,
    Track,
    TrackingConfig,
    associate,
    kf_predict,
    kf_update,
)

CFG = TrackingConfig()


def make_track(pos=(0, 0, 0), vel=(0, 0, 0), acc=(0, 0, 0), heading=0.0, track_id=1):
    state = np.r_[pos, vel, acc, [heading]].astype(float)
    return Track(
        track_id=track_id,
        state=state,
        covariance=np.eye(10) * 0.1,
        length=4.0,
        width=2.0,
        height=1.5,
        last_timestamp=0.0,
    )


def det(x, y, z=0.75, heading=0.0, conf=0.9):
    return OrientedBox(x, y, z, 4.0, 2.0, 1.5, heading, conf)


def frame(t, boxes):
    return FusedFrame(timestamp=t, boxes=boxes, provenance=[(0,)] * len(boxes))


# --- prediction -----------------------------------------------------------------


def test_predict_constant_velocity():
    t = make_track(vel=(10, 0, 0))
    out = kf_predict(t, 0.1, CFG)
    assert out.position[0] == pytest.approx(1.0)
    assert out.velocity[0] == pytest.approx(10.0)


def test_predict_stationary_grows_covariance():
    t = make_track()
    out = kf_predict(t, 0.1, CFG)
    np.testing.assert_allclose(out.position, [0, 0, 0])
    assert np.trace(out.covariance) > np.trace(t.covariance)


def test_predict_constant_acceleration():
    t = make_track(acc=(1, 0, 0))
    out = kf_predict(t, 1.0, CFG)
    assert out.position[0] == pytest.approx(0.5)
    assert out.velocity[0] == pytest.approx(1.0)


def test_predict_rejects_bad_dt():
    t = make_track()
    for dt in (0.0, -0.1, float("nan")):
        with pytest.raises(InvalidArgument):
            kf_predict(t, dt, CFG)


# --- association ------------------------------------------------------------------


def test_associate_simple_match():
    a = associate([make_track()], [det(0.5, 0.0, z=0.0)], gate=2.0)
    assert a.pairs == [(0, 0)]
    assert a.unmatched_tracks == [] and a.unmatched_detections == []


def test_associate_gated_out():
    a = associate([make_track()], [det(5.0, 0.0, z=0.0)], gate=2.0)
    assert a.pairs == []
    assert a.unmatched_tracks == [0] and a.unmatched_detections == [0]


def brute_force_min_cost(cost):
    n_rows, n_cols = cost.shape
    best = math.inf
    if n_rows <= n_cols:
        for perm in itertools.permutations(range(n_cols), n_rows):
            best = min(best, sum(cost[i, j] for i, j in enumerate(perm)))
    else:
        for perm in itertools.permutations(range(n_rows), n_cols):
            best = min(best, sum(cost[i, j] for j, i in enumerate(perm)))
    return best


def test_associate_matches_permutation_oracle():
    rng = np.random.default_rng(3)
    for _ in range(40):
        n_t = int(rng.integers(1, 8))
        n_d = int(rng.integers(1, 8))
        tracks = [make_track(pos=rng.uniform(-20, 20, 3), track_id=i) for i in range(n_t)]
        dets = [det(*rng.uniform(-20, 20, 2), z=float(rng.uniform(-2, 2))) for _ in range(n_d)]
        a = associate(tracks, dets, gate=1e9)
        cost = np.array(
            [[np.linalg.norm(t.position - np.array([d.x, d.y, d.z])) for d in dets] for t in tracks]
        )
        total = sum(cost[i, j] for i, j in a.pairs)
        assert total == pytest.approx(brute_force_min_cost(cost), abs=1e-9)
        assert len(a.pairs) == min(n_t, n_d)


def test_associate_invariant_under_detection_permutation():
    rng = np.random.default_rng(9)
    tracks = [make_track(pos=rng.uniform(-20, 20, 3), track_id=i) for i in range(5)]
    dets = [det(*rng.uniform(-20, 20, 2), z=float(rng.uniform(-2, 2))) for _ in range(5)]
    base = associate(tracks, dets, gate=1e9)
    base_set = {(ti, (dets[di].x, dets[di].y)) for ti, di in base.pairs}
    for _ in range(10):
        perm = rng.permutation(5)
        shuffled = [dets[k] for k in perm]
        a = associate(tracks, shuffled, gate=1e9)
        got = {(ti, (shuffled[di].x, shuffled[di].y)) for ti, di in a.pairs}
        assert got == base_set


# --- tracker lifecycle ---------------------------------------------------------------


def test_tracker_empty_stream_never_confirms():
    tracker = MultiObjectTracker()
    for k in range(20):
        assert tracker.step(frame(0.1 * k + 0.1, [])) == []
    assert tracker.tracks == []


def test_tracker_single_object_single_id():
    tracker = MultiObjectTracker()
    confirmed_ids = set()
    for k in range(20):
        t = 0.1 * (k + 1)
        out = tracker.step(frame(t, [det(10.0 + 15.0 * t, 0.0)]))
        confirmed_ids.update(tr.track_id for tr in out)
        if k >= CFG.confirm_hits:
            assert len(out) == 1
            assert abs(out[0].position[0] - (10.0 + 15.0 * t)) < 0.5
    assert len(confirmed_ids) == 1
    assert len(tracker.tracks) == 1


def test_tracker_speed_converges_to_truth():
    tracker = MultiObjectTracker()
    speed = 12.0
    out = []
    for k in range(25):
        t = 0.1 * (k + 1)
        out = tracker.step(frame(t, [det(speed * t, 0.0)]))
    assert out and out[0].speed == pytest.approx(speed, rel=0.02)


def test_tracker_id_switch_after_long_dropout():
    tracker = MultiObjectTracker()
    ids_before, ids_after = set(), set()
    k = 0
    for _ in range(10):
        k += 1
        out = tracker.step(frame(0.1 * k, [det(12.0 * 0.1 * k, 0.0)]))
        ids_before.update(t.track_id for t in out)
    for _ in range(CFG.max_age + 2):  # dropout long enough to kill the track
        k += 1
        tracker.step(frame(0.1 * k, []))
    for _ in range(10):
        k += 1
        out = tracker.step(frame(0.1 * k, [det(12.0 * 0.1 * k, 0.0)]))
        ids_after.update(t.track_id for t in out)
    assert ids_before and ids_after
    assert ids_before.isdisjoint(ids_after)


def test_tracker_ids_strictly_increase():
    tracker = MultiObjectTracker()
    seen = []
    for k in range(30):
        boxes = [det(5.0 * i + 0.01 * k, 8.0 * i) for i in range((k % 3) + 1)]
        tracker.step(frame(0.1 * (k + 1), boxes))
        seen.extend(t.track_id for t in tracker.tracks)
    assert all(t.track_id >= 1 for t in tracker.tracks)
    ids = [t.track_id for t in tracker.tracks]
    assert len(ids) == len(set(ids))


def test_tracker_rejects_time_regression():
    tracker = MultiObjectTracker()
    tracker.step(frame(1.0, []))
    with pytest.raises(InvalidArgument):
        tracker.step(frame(0.9, []))


def test_covariance_stays_spd_over_many_cycles():
    cfg = TrackingConfig()
    track = make_track(vel=(5, 0, 0))
    rng = np.random.default_rng(17)
    for k in range(10_000):
        track = kf_predict(track, 0.1, cfg)
        box = det(track.position[0] + rng.normal(0, 0.2), rng.normal(0, 0.2))
        track = kf_update(track, box, cfg)
        if k % 997 == 0:
            cov = track.covariance
            np.testing.assert_allclose(cov, cov.T, atol=1e-12)
            assert np.min(np.linalg.eigvalsh(cov)) > 0


def test_heading_update_wraps_shortest_arc():
    track = make_track(heading=math.pi - 0.05)
    box = det(0.0, 0.0, z=0.0, heading=-math.pi + 0.05)  # 0.1 rad away across the seam
    out = kf_update(track, box, TrackingConfig())
    assert abs(out.heading) > math.pi - 0.1  # stayed near the seam, no half-turn jump
