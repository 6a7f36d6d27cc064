import copy
import json
import math
from pathlib import Path

import numpy as np
import pytest

from cavtraj.errors import ValidationError
from cavtraj.world_model import filter_on_road, load_vector_map, to_frenet, vector_map_from_dict

MAPS = Path(__file__).parent / "fixtures" / "maps"


@pytest.fixture(scope="module")
def straight():
    return load_vector_map(MAPS / "straight.json")


@pytest.fixture(scope="module")
def arc():
    return load_vector_map(MAPS / "arc.json")


@pytest.fixture(scope="module")
def freeway():
    return load_vector_map(MAPS / "freeway3.json")


def test_load_minimal_straight_map(straight):
    assert len(straight.lanelets) == 3  # 120 m split into 50 m lanelets
    fc = straight.to_frenet((5.0, 0.0, 0.0))
    assert fc is not None
    assert fc.total_lanes == 1


def test_load_freeway_topology(freeway):
    lane_ids = {ll.lane_id for ll in freeway.lanelets.values()}
    assert lane_ids == {1, 2, 3}
    # chained lanelets accumulate offsets
    offsets = sorted(ll.chain_offset for ll in freeway.lanelets.values() if ll.lane_id == 2)
    assert offsets[0] == 0.0 and offsets[-1] == pytest.approx(250.0)


def test_load_dangling_successor_rejected(straight):
    data = json.loads((MAPS / "straight.json").read_text())
    data["lanelets"][0]["successors"] = [999]
    with pytest.raises(ValidationError, match="999"):
        vector_map_from_dict(data)


def test_load_schema_violation_rejected():
    with pytest.raises(ValidationError, match="schema"):
        vector_map_from_dict({"lanelets": [{"lanelet_id": 1}]})


def test_load_bad_json_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ValidationError):
        load_vector_map(bad)


def test_frenet_centerline_start_is_origin(straight):
    fc = straight.to_frenet((0.0, 0.0, 0.0))
    assert fc.downtrack == pytest.approx(0.0, abs=1e-9)
    assert fc.crosstrack == pytest.approx(0.0, abs=1e-9)


def test_frenet_straight_offset_point(straight):
    # 1.5 m to the right of the centerline at downtrack 20 (right = -y here)
    fc = straight.to_frenet((20.0, -1.5, 0.0))
    assert fc.downtrack == pytest.approx(20.0, abs=1e-6)
    assert fc.crosstrack == pytest.approx(1.5, abs=1e-6)
    left = straight.to_frenet((20.0, 1.5, 0.0))
    assert left.crosstrack == pytest.approx(-1.5, abs=1e-6)


def test_frenet_downtrack_crosses_lanelet_chain(straight):
    fc = straight.to_frenet((80.0, 0.4, 0.0))
    assert fc.downtrack == pytest.approx(80.0, abs=1e-6)
    assert fc.lanelet_id == 101  # second lanelet of lane 1


def test_frenet_arc_half_arc_downtrack(arc):
    # halfway around a 50 m radius quarter circle
    radius, angle = 50.0, math.radians(45.0)
    p = (radius * math.sin(angle), radius * (1 - math.cos(angle)), 0.0)
    fc = arc.to_frenet(p)
    assert fc is not None
    assert fc.downtrack == pytest.approx(radius * angle, abs=1e-3)
    assert fc.crosstrack == pytest.approx(0.0, abs=1e-3)


def test_frenet_arc_lateral_sign(arc):
    # a point radially outward from the turn center is right of the path
    radius, angle = 50.0, math.radians(30.0)
    out_p = ((radius + 1.0) * math.sin(angle), 50.0 - (radius + 1.0) * math.cos(angle), 0.0)
    fc = arc.to_frenet(out_p)
    assert fc.crosstrack == pytest.approx(1.0, abs=2e-3)


def test_frenet_off_road_marker(straight):
    assert straight.to_frenet((20.0, 12.0, 0.0)) is None
    assert straight.to_frenet((20.0, 2.5, 0.0)) is None  # 0.65 m past boundary+margin


def test_frenet_margin_keeps_near_boundary_points(straight):
    # boundary at 1.85 m; margin 0.5 keeps up to 2.35
    assert straight.to_frenet((20.0, -2.2, 0.0)) is not None


def test_freeway_lane_assignment(freeway):
    for lane, y in ((1, 3.7), (2, 0.0), (3, -3.7)):
        fc = freeway.to_frenet((150.0, y, 0.0))
        assert fc.lane_id == lane
        assert fc.total_lanes == 3
        assert abs(fc.crosstrack) < 1e-6


def test_freeway_ties_broken_by_smaller_crosstrack(freeway):
    # point on the shared boundary between lanes 1 and 2 belongs to either;
    # nudge slightly toward lane 2
    fc = freeway.to_frenet((150.0, 1.8, 0.0))
    assert fc.lane_id == 2


def test_round_trip_straight(straight):
    rng = np.random.default_rng(3)
    for _ in range(50):
        x = rng.uniform(0, 120)
        y = rng.uniform(-1.8, 1.8)
        fc = straight.to_frenet((x, y, 0.0))
        # analytic inverse for the straight east-bound road
        back = (fc.downtrack, -fc.crosstrack)
        assert back[0] == pytest.approx(x, abs=1e-3)
        assert back[1] == pytest.approx(y, abs=1e-3)


def test_round_trip_arc(arc):
    rng = np.random.default_rng(5)
    for _ in range(50):
        theta = rng.uniform(0.05, math.radians(90) - 0.05)
        lateral = rng.uniform(-1.5, 1.5)
        radius = 50.0 + lateral
        p = (radius * math.sin(theta), 50.0 - radius * math.cos(theta), 0.0)
        fc = arc.to_frenet(p)
        back_theta = fc.downtrack / 50.0
        back_r = 50.0 + fc.crosstrack
        back = (back_r * math.sin(back_theta), 50.0 - back_r * math.cos(back_theta))
        assert back[0] == pytest.approx(p[0], abs=1e-3)
        assert back[1] == pytest.approx(p[1], abs=1e-3)


def test_downtrack_monotone_along_route(freeway):
    ss = np.linspace(0.0, 299.0, 400)
    downs = [freeway.to_frenet((s, 0.0, 0.0)).downtrack for s in ss]
    assert all(b >= a - 1e-9 for a, b in zip(downs, downs[1:]))


class FakeTrack:
    def __init__(self, x, y):
        self.position = np.array([x, y, 0.0])


def test_filter_on_road_keeps_and_drops(straight):
    tracks = [FakeTrack(30.0, 0.0), FakeTrack(30.0, 10.0), FakeTrack(50.0, -1.0)]
    kept = filter_on_road(tracks, straight)
    assert [t.position[0] for t, _ in kept] == [30.0, 50.0]
    for _, fc in kept:
        assert fc is not None


def test_filter_on_road_idempotent(straight):
    rng = np.random.default_rng(11)
    tracks = [FakeTrack(rng.uniform(0, 120), rng.uniform(-4, 4)) for _ in range(40)]
    once = filter_on_road(tracks, straight)
    twice = filter_on_road([t for t, _ in once], straight)
    assert [id(t) for t, _ in once] == [id(t) for t, _ in twice]


def test_filter_on_road_mixed_labels(straight):
    rng = np.random.default_rng(13)
    tracks, labels = [], []
    for _ in range(60):
        x = rng.uniform(1, 119)
        if rng.random() < 0.5:
            y = rng.uniform(-1.3, 1.3)  # >= 0.5 m inside the boundary
            labels.append(True)
        else:
            y = rng.choice([-1, 1]) * rng.uniform(2.9, 8.0)  # >= 0.5 m outside margin
            labels.append(False)
        tracks.append(FakeTrack(x, y))
    kept_ids = {id(t) for t, _ in filter_on_road(tracks, straight)}
    for track, on_road in zip(tracks, labels):
        assert (id(track) in kept_ids) == on_road
