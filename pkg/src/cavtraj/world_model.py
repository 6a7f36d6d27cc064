"""Vector map with Frenet projection, on-road tests, and lane lookup.

The map is a set of lanelets (atomic lane segments) with centerline and
boundary polylines. Downtrack distance is measured from the start of a
lanelet's chain (predecessors of the same lane); crosstrack is positive to
the right of the driving direction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ValidationError

_CONNECT_TOL = 0.1  # m, successor start must sit on predecessor end


@dataclass(frozen=True)
class FrenetCoord:
    """Road-aligned coordinates plus lane bookkeeping."""

    downtrack: float
    crosstrack: float
    lanelet_id: int
    lane_id: int
    total_lanes: int


class _Polyline:
    """2D polyline with cached segment geometry for fast projection."""

    __slots__ = ("points", "seg_start", "seg_dir", "seg_len", "cum_len", "length")

    def __init__(self, points: np.ndarray):
        pts = np.asarray(points, dtype=float)
        self.points = pts
        d = np.diff(pts[:, :2], axis=0)
        self.seg_len = np.hypot(d[:, 0], d[:, 1])
        if np.any(self.seg_len < 1e-9):
            raise ValidationError("polyline has zero-length segment")
        self.seg_start = pts[:-1, :2]
        self.seg_dir = d / self.seg_len[:, None]
        self.cum_len = np.r_[0.0, np.cumsum(self.seg_len)]
        self.length = float(self.cum_len[-1])

    def project(self, xy) -> tuple[float, float, float, bool]:
        """Project a 2D point.

        Returns (arc_length, crosstrack_right_positive, distance, interior):
        `interior` is True when the unclamped perpendicular foot falls inside
        the polyline span (0.5 m end tolerance).
        """
        p = np.asarray(xy, dtype=float)[:2]
        rel = p - self.seg_start
        t_raw = np.einsum("ij,ij->i", rel, self.seg_dir)
        t = np.clip(t_raw, 0.0, self.seg_len)
        foot = self.seg_start + t[:, None] * self.seg_dir
        diff = p - foot
        dist = np.hypot(diff[:, 0], diff[:, 1])
        k = int(np.argmin(dist))
        # right-positive lateral offset relative to the travel direction
        cross = diff[k, 0] * self.seg_dir[k, 1] - diff[k, 1] * self.seg_dir[k, 0]
        s = float(self.cum_len[k] + t[k])
        interior = -0.5 <= (self.cum_len[k] + t_raw[k]) <= self.length + 0.5
        return s, float(cross), float(dist[k]), interior


@dataclass
class Lanelet:
    lanelet_id: int
    lane_id: int
    centerline: _Polyline
    left_boundary: _Polyline
    right_boundary: _Polyline
    predecessors: tuple[int, ...]
    successors: tuple[int, ...]
    chain_offset: float = 0.0  # downtrack of this lanelet's start within its lane chain

    @property
    def length(self) -> float:
        return self.centerline.length


class VectorMap:
    """Immutable-after-load lanelet map supporting Frenet queries."""

    def __init__(self, lanelets: list[Lanelet], name: str = "", lateral_window: float = 15.0):
        self.name = name
        self.lateral_window = lateral_window
        self.lanelets: dict[int, Lanelet] = {}
        for ll in lanelets:
            if ll.lanelet_id in self.lanelets:
                raise ValidationError(f"duplicate lanelet_id {ll.lanelet_id}")
            self.lanelets[ll.lanelet_id] = ll
        self._validate_connectivity()
        self._compute_chain_offsets()

    def _validate_connectivity(self):
        for ll in self.lanelets.values():
            for sid in ll.successors:
                if sid not in self.lanelets:
                    raise ValidationError(
                        f"lanelet {ll.lanelet_id} references unknown successor {sid}"
                    )
                succ = self.lanelets[sid]
                gap = np.linalg.norm(
                    ll.centerline.points[-1, :2] - succ.centerline.points[0, :2]
                )
                if gap > _CONNECT_TOL:
                    raise ValidationError(
                        f"successor {sid} of lanelet {ll.lanelet_id} starts {gap:.3f} m "
                        f"away from its end (tolerance {_CONNECT_TOL} m)"
                    )
            for pid in ll.predecessors:
                if pid not in self.lanelets:
                    raise ValidationError(
                        f"lanelet {ll.lanelet_id} references unknown predecessor {pid}"
                    )

    def _compute_chain_offsets(self):
        # predecessor within the same lane; lane chains must be linear
        same_lane_pred: dict[int, int] = {}
        for ll in self.lanelets.values():
            for sid in ll.successors:
                succ = self.lanelets[sid]
                if succ.lane_id == ll.lane_id:
                    if sid in same_lane_pred:
                        raise ValidationError(f"lanelet {sid} has multiple same-lane predecessors")
                    same_lane_pred[sid] = ll.lanelet_id
        for ll in self.lanelets.values():
            offset = 0.0
            seen = set()
            cur = ll.lanelet_id
            while cur in same_lane_pred:
                if cur in seen:
                    raise ValidationError(f"lane chain containing lanelet {cur} has a cycle")
                seen.add(cur)
                cur = same_lane_pred[cur]
                offset += self.lanelets[cur].length
            ll.chain_offset = offset

    def to_frenet(self, point, margin: float = 0.5) -> FrenetCoord | None:
        """Project a map point; None marks off-road (beyond boundaries + margin)."""
        xy = np.asarray(point, dtype=float)[:2]
        best = None
        for ll in sorted(self.lanelets.values(), key=lambda l: l.lanelet_id):
            s, cross, dist, interior = ll.centerline.project(xy)
            if not interior:
                continue
            _, y_left, _, _ = ll.left_boundary.project(xy)
            _, y_right, _, _ = ll.right_boundary.project(xy)
            if y_left < -margin or y_right > margin:
                continue  # outside this lanelet's corridor
            key = (round(dist, 9), abs(cross), ll.lanelet_id)
            if best is None or key < best[0]:
                best = (key, ll, s, cross)
        if best is None:
            return None
        _, ll, s, cross = best
        return FrenetCoord(
            downtrack=ll.chain_offset + s,
            crosstrack=cross,
            lanelet_id=ll.lanelet_id,
            lane_id=ll.lane_id,
            total_lanes=self._total_lanes_at(xy),
        )

    def _total_lanes_at(self, xy) -> int:
        lanes = set()
        for ll in self.lanelets.values():
            _, cross, dist, interior = ll.centerline.project(xy)
            if interior and abs(cross) <= self.lateral_window:
                lanes.add(ll.lane_id)
        return len(lanes)

    def is_on_road(self, point, margin: float = 0.5) -> bool:
        return self.to_frenet(point, margin) is not None


def to_frenet(point, vmap: VectorMap, margin: float = 0.5) -> FrenetCoord | None:
    return vmap.to_frenet(point, margin)


def filter_on_road(tracks, vmap: VectorMap, margin: float = 0.5):
    """Keep tracks whose center projects on-road; annotate with FrenetCoord.

    `tracks` is any iterable of objects exposing .position (3-vector).
    Returns a list of (track, FrenetCoord) pairs.
    """
    kept = []
    for track in tracks:
        fc = vmap.to_frenet(track.position, margin)
        if fc is not None:
            kept.append((track, fc))
    return kept


def _load_schema() -> dict:
    with resources.files("cavtraj.data").joinpath("vector_map.schema.json").open() as fh:
        return json.load(fh)


def vector_map_from_dict(data: dict) -> VectorMap:
    """Build and validate a VectorMap from parsed JSON."""
    try:
        jsonschema.validate(data, _load_schema())
    except jsonschema.ValidationError as exc:
        raise ValidationError(f"vector map schema violation at {list(exc.absolute_path)}: {exc.message}") from exc

    lanelets = []
    for entry in data["lanelets"]:
        try:
            lanelets.append(
                Lanelet(
                    lanelet_id=int(entry["lanelet_id"]),
                    lane_id=int(entry["lane_id"]),
                    centerline=_Polyline(np.array(entry["centerline"], dtype=float)),
                    left_boundary=_Polyline(np.array(entry["left_boundary"], dtype=float)),
                    right_boundary=_Polyline(np.array(entry["right_boundary"], dtype=float)),
                    predecessors=tuple(entry.get("predecessors", ())),
                    successors=tuple(entry.get("successors", ())),
                )
            )
        except ValidationError as exc:
            raise ValidationError(f"lanelet {entry.get('lanelet_id')}: {exc}") from exc
    return VectorMap(lanelets, name=data.get("name", ""), lateral_window=data.get("lateral_window", 15.0))


def load_vector_map(path) -> VectorMap:
    """Load and validate a vector map JSON file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from exc
    try:
        return vector_map_from_dict(data)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
