"""Deterministic synthetic scenario generator.

Builds a road (straight or circular arc), drives agent vehicles and
surrounding vehicles (SVs) along lane centerlines, and renders LiDAR-style
frames per agent: vehicle hulls sampled with range-dependent density,
ground returns, and optional roadside poles and walls. All randomness goes
through one seeded generator, so a spec produces byte-identical output.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..detection import PointCloudFrame
from ..errors import ValidationError
from ..geometry import EulerAngles, RigidTransform, wrap_angle
from .frames_io import write_frame_csv, write_pose_csv

_LANELET_CHUNK = 50.0  # m, lane split into lanelets of roughly this length


@dataclass
class RoadSpec:
    kind: str = "straight"          # "straight" or "arc"
    length: float = 300.0           # straight only
    radius: float = 200.0           # arc only, reference centerline radius
    arc_angle_deg: float = 90.0     # arc only
    n_lanes: int = 1
    lane_width: float = 3.7
    sample_step: float = 2.0        # polyline sampling step (arc uses min(step, 0.5))

    def __post_init__(self):
        if self.kind not in ("straight", "arc"):
            raise ValidationError(f"unknown road kind {self.kind!r}")
        if self.n_lanes < 1 or self.lane_width <= 0:
            raise ValidationError("road needs >= 1 lane with positive width")

    def lane_offset(self, lane: int) -> float:
        """Right-positive lateral offset of a lane center; lane 1 is leftmost."""
        if not 1 <= lane <= self.n_lanes:
            raise ValidationError(f"lane {lane} outside 1..{self.n_lanes}")
        return (lane - (self.n_lanes + 1) / 2.0) * self.lane_width

    def lane_length(self, lane: int) -> float:
        if self.kind == "straight":
            return self.length
        return (self.radius + self.lane_offset(lane)) * math.radians(self.arc_angle_deg)

    def frame_at(self, s_road: float) -> tuple[float, float, float]:
        """(x, y, heading) of the road reference line at arc length s_road."""
        if self.kind == "straight":
            return s_road, 0.0, 0.0
        theta = s_road / self.radius
        return self.radius * math.sin(theta), self.radius * (1 - math.cos(theta)), theta

    def point_at(self, s_lane: float, lane: int) -> tuple[float, float, float]:
        """(x, y, heading) of a lane center at arc length s_lane along that lane."""
        offset = self.lane_offset(lane)
        if self.kind == "straight":
            x, y = self.offset_point(s_lane, offset)
            return x, y, 0.0
        radius_lane = self.radius + offset
        theta = s_lane / radius_lane
        x = radius_lane * math.sin(theta)
        y = self.radius - radius_lane * math.cos(theta)
        return x, y, theta

    def _lateral(self, heading: float, offset: float) -> tuple[float, float]:
        # right-positive offset from a frame with the given heading
        return offset * math.sin(heading), -offset * math.cos(heading)

    def offset_point(self, s_road: float, offset: float) -> tuple[float, float]:
        x, y, heading = self.frame_at(s_road)
        dx, dy = self._lateral(heading, offset)
        return x + dx, y + dy

    @property
    def road_length(self) -> float:
        if self.kind == "straight":
            return self.length
        return self.radius * math.radians(self.arc_angle_deg)

    @property
    def half_width(self) -> float:
        return self.n_lanes * self.lane_width / 2.0


def build_vector_map_dict(road: RoadSpec, name: str = "road") -> dict:
    """Vector map JSON content for a RoadSpec (lanelet chains per lane)."""
    step = road.sample_step if road.kind == "straight" else min(road.sample_step, 0.5)
    lanelets = []
    for lane in range(1, road.n_lanes + 1):
        offset = road.lane_offset(lane)
        lane_len = road.lane_length(lane)
        n_chunks = max(1, int(math.ceil(lane_len / _LANELET_CHUNK - 1e-9)))
        bounds = np.linspace(0.0, lane_len, n_chunks + 1)
        for k in range(n_chunks):
            s0, s1 = bounds[k], bounds[k + 1]
            n_pts = max(2, int(math.ceil((s1 - s0) / step)) + 1)
            ss = np.linspace(s0, s1, n_pts)

            def polyline(lat_offset):
                pts = []
                for s_lane in ss:
                    if road.kind == "straight":
                        s_road = s_lane
                    else:
                        s_road = s_lane * road.radius / (road.radius + offset)
                    x, y = road.offset_point(s_road, lat_offset)
                    pts.append([float(x), float(y), 0.0])
                return pts

            lanelet_id = lane * 100 + k
            entry = {
                "lanelet_id": lanelet_id,
                "lane_id": lane,
                "centerline": polyline(offset),
                "left_boundary": polyline(offset - road.lane_width / 2.0),
                "right_boundary": polyline(offset + road.lane_width / 2.0),
                "successors": [lane * 100 + k + 1] if k + 1 < n_chunks else [],
                "predecessors": [lane * 100 + k - 1] if k > 0 else [],
            }
            lanelets.append(entry)
    return {"name": name, "lanelets": lanelets}


@dataclass
class VehicleSpec:
    vehicle_id: int
    lane: int
    start_s: float
    speed: float
    accel: float = 0.0
    length: float = 4.6
    width: float = 1.8
    height: float = 1.6

    def s_at(self, t: float) -> float:
        return self.start_s + self.speed * t + 0.5 * self.accel * t * t

    def speed_at(self, t: float) -> float:
        return self.speed + self.accel * t


@dataclass
class SensorSpec:
    range: float = 50.0             # m, hard detection cutoff (40-60 m regime)
    noise_sigma: float = 0.02       # m, per-coordinate Gaussian noise
    base_spacing: float = 0.15      # m, hull sample spacing at reference range
    reference_range: float = 10.0   # m
    min_hull_z: float = 0.4         # hull points start above the ground gate

    def spacing_at(self, distance: float) -> float:
        """Hull sample spacing; density falls off as 1/distance^2."""
        return self.base_spacing * max(distance, 1.0) / self.reference_range


@dataclass
class DropoutWindow:
    sv_id: int
    t_start: float
    t_end: float


@dataclass
class ScenarioSpec:
    name: str = "scenario"
    duration: float = 10.0
    dt: float = 0.1
    seed: int = 0
    road: RoadSpec = field(default_factory=RoadSpec)
    agents: list[VehicleSpec] = field(default_factory=list)
    svs: list[VehicleSpec] = field(default_factory=list)
    sensor: SensorSpec = field(default_factory=SensorSpec)
    dropouts: list[DropoutWindow] = field(default_factory=list)
    ground_spacing: float = 2.5     # m lattice of road-surface returns; 0 disables
    poles: bool = True              # roadside poles every 20 m
    walls: bool = False             # sound barriers (useful for scan matching)

    def validate(self):
        if self.duration <= 0 or self.dt <= 0:
            raise ValidationError("duration and dt must be positive")
        if not self.agents:
            raise ValidationError("scenario needs at least one agent")
        ids = [a.vehicle_id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate agent ids")
        sv_ids = [s.vehicle_id for s in self.svs]
        if len(set(sv_ids)) != len(sv_ids):
            raise ValidationError("duplicate sv ids")
        for v in list(self.agents) + list(self.svs):
            for t in (0.0, self.duration):
                s = v.s_at(t)
                if not -1e-6 <= s <= self.road.lane_length(v.lane) + 1e-6:
                    raise ValidationError(
                        f"vehicle {v.vehicle_id} leaves the road at t={t:.1f}s (s={s:.1f})"
                    )


@dataclass
class GroundTruthRow:
    sv_id: int
    time: float
    x: float
    y: float
    heading: float
    speed: float
    accel: float
    downtrack: float
    lane_id: int
    lanelet_id: int
    length: float
    width: float
    height: float
    visible_to: tuple[int, ...]


@dataclass
class ScenarioData:
    spec: ScenarioSpec
    vector_map: dict
    poses: dict[int, list[tuple[float, RigidTransform]]]
    frames: dict[int, list[PointCloudFrame]]
    dynamic_masks: dict[int, list[np.ndarray]]  # per agent, per frame: True = SV hull point
    ground_truth: list[GroundTruthRow]


def _vehicle_pose(road: RoadSpec, v: VehicleSpec, t: float) -> tuple[float, float, float]:
    return road.point_at(v.s_at(t), v.lane)


def _hull_points(center_xy, heading, v: VehicleSpec, spacing, min_z) -> np.ndarray:
    """Sample the four side walls and roof of a vehicle box hull."""
    half_l, half_w = v.length / 2.0, v.width / 2.0
    n_l = max(2, int(round(v.length / spacing)) + 1)
    n_w = max(2, int(round(v.width / spacing)) + 1)
    n_z = max(2, int(round((v.height - min_z) / spacing)) + 1)
    ls = np.linspace(-half_l, half_l, n_l)
    ws = np.linspace(-half_w, half_w, n_w)
    zs = np.linspace(min_z, v.height, n_z)

    side_u = np.repeat(ls, 2 * len(zs))
    side_v = np.tile(np.repeat([-half_w, half_w], len(zs)), len(ls))
    side_z = np.tile(zs, 2 * len(ls))
    end_v = np.repeat(ws, 2 * len(zs))
    end_u = np.tile(np.repeat([-half_l, half_l], len(zs)), len(ws))
    end_z = np.tile(zs, 2 * len(ws))
    roof_u, roof_v = np.meshgrid(ls, ws, indexing="ij")
    local = np.vstack(
        [
            np.c_[side_u, side_v, side_z],
            np.c_[end_u, end_v, end_z],
            np.c_[roof_u.ravel(), roof_v.ravel(), np.full(roof_u.size, v.height)],
        ]
    )
    c, s = math.cos(heading), math.sin(heading)
    out = np.empty_like(local)
    out[:, 0] = center_xy[0] + local[:, 0] * c - local[:, 1] * s
    out[:, 1] = center_xy[1] + local[:, 0] * s + local[:, 1] * c
    out[:, 2] = local[:, 2]
    return out


def _static_world_points(spec: ScenarioSpec) -> np.ndarray:
    """Poles and walls on a fixed world lattice (stable across frames)."""
    road = spec.road
    pts = []
    margin = road.half_width + 2.0
    if spec.poles:
        for s_road in np.arange(10.0, road.road_length - 1e-6, 20.0):
            for side in (-margin, margin):
                x, y = road.offset_point(float(s_road), side)
                for z in np.arange(0.4, 4.0, 0.25):
                    pts.append([x, y, z])
                    pts.append([x + 0.08, y + 0.05, z])
    if spec.walls:
        wall_off = road.half_width + 5.0
        for s_road in np.arange(0.0, road.road_length - 1e-6, 0.4):
            for side in (-wall_off, wall_off):
                x, y = road.offset_point(float(s_road), side)
                for z in np.arange(0.4, 3.2, 0.4):
                    pts.append([x, y, z])
    return np.array(pts) if pts else np.zeros((0, 3))


def _ground_points_near(spec: ScenarioSpec, center_xy) -> np.ndarray:
    """Road-surface returns on a world-aligned lattice around an agent."""
    g = spec.ground_spacing
    if g <= 0:
        return np.zeros((0, 3))
    r = spec.sensor.range
    x0 = math.floor((center_xy[0] - r) / g) * g
    y0 = math.floor((center_xy[1] - r) / g) * g
    xs = np.arange(x0, center_xy[0] + r + g, g)
    ys = np.arange(y0, center_xy[1] + r + g, g)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.c_[gx.ravel(), gy.ravel(), np.zeros(gx.size)]
    keep = np.hypot(pts[:, 0] - center_xy[0], pts[:, 1] - center_xy[1]) <= r
    return pts[keep]


def _dropout_active(spec: ScenarioSpec, sv_id: int, t: float) -> bool:
    return any(d.sv_id == sv_id and d.t_start <= t < d.t_end for d in spec.dropouts)


def _lanelet_of(road: RoadSpec, lane: int, s: float) -> int:
    lane_len = road.lane_length(lane)
    n_chunks = max(1, int(math.ceil(lane_len / _LANELET_CHUNK - 1e-9)))
    k = min(n_chunks - 1, int(s / (lane_len / n_chunks)))
    return lane * 100 + k


def generate_scenario(spec: ScenarioSpec) -> ScenarioData:
    """Render all frames, poses, and ground truth for a scenario spec."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    road = spec.road
    sensor = spec.sensor
    statics = _static_world_points(spec)

    n_frames = int(round(spec.duration / spec.dt))
    times = [round(k * spec.dt, 6) for k in range(n_frames)]

    poses = {a.vehicle_id: [] for a in spec.agents}
    frames = {a.vehicle_id: [] for a in spec.agents}
    masks = {a.vehicle_id: [] for a in spec.agents}
    ground_truth = []

    agents = sorted(spec.agents, key=lambda a: a.vehicle_id)
    svs = sorted(spec.svs, key=lambda s: s.vehicle_id)

    for t in times:
        sv_states = {}
        for sv in svs:
            x, y, heading = _vehicle_pose(road, sv, t)
            sv_states[sv.vehicle_id] = (x, y, heading)

        agent_states = {}
        for agent in agents:
            x, y, heading = _vehicle_pose(road, agent, t)
            agent_states[agent.vehicle_id] = (x, y, heading)
            pose = RigidTransform.from_euler_translation(EulerAngles(0, 0, heading), (x, y, 0.0))
            poses[agent.vehicle_id].append((t, pose))

        visibility = {sv.vehicle_id: [] for sv in svs}
        for agent in agents:
            ax, ay, _ = agent_states[agent.vehicle_id]
            world_pts = []
            dyn_flags = []

            ground = _ground_points_near(spec, (ax, ay))
            if len(ground):
                world_pts.append(ground)
                dyn_flags.append(np.zeros(len(ground), dtype=bool))

            if len(statics):
                d = np.hypot(statics[:, 0] - ax, statics[:, 1] - ay)
                near = statics[d <= sensor.range]
                if len(near):
                    world_pts.append(near)
                    dyn_flags.append(np.zeros(len(near), dtype=bool))

            for sv in svs:
                if _dropout_active(spec, sv.vehicle_id, t):
                    continue
                sx, sy, sheading = sv_states[sv.vehicle_id]
                dist = math.hypot(sx - ax, sy - ay)
                if dist > sensor.range:
                    continue
                spacing = sensor.spacing_at(dist)
                hull = _hull_points((sx, sy), sheading, sv, spacing, sensor.min_hull_z)
                keep = np.hypot(hull[:, 0] - ax, hull[:, 1] - ay) <= sensor.range
                hull = hull[keep]
                if len(hull):
                    world_pts.append(hull)
                    dyn_flags.append(np.ones(len(hull), dtype=bool))
                    visibility[sv.vehicle_id].append(agent.vehicle_id)

            if world_pts:
                cloud = np.vstack(world_pts)
                dyn = np.concatenate(dyn_flags)
            else:
                cloud = np.zeros((0, 3))
                dyn = np.zeros(0, dtype=bool)

            # map -> agent frame, then sensor noise
            pose = poses[agent.vehicle_id][-1][1]
            local = pose.inverse().apply(cloud) if len(cloud) else cloud
            if sensor.noise_sigma > 0 and len(local):
                local = local + rng.normal(0.0, sensor.noise_sigma, size=local.shape)
            frames[agent.vehicle_id].append(
                PointCloudFrame(
                    timestamp=t,
                    points=local,
                    intensities=np.full(len(local), 20.0),
                    agent_id=agent.vehicle_id,
                )
            )
            masks[agent.vehicle_id].append(dyn)

        for sv in svs:
            seen = tuple(sorted(visibility[sv.vehicle_id]))
            if not seen:
                continue
            x, y, heading = sv_states[sv.vehicle_id]
            s = sv.s_at(t)
            ground_truth.append(
                GroundTruthRow(
                    sv_id=sv.vehicle_id,
                    time=t,
                    x=x,
                    y=y,
                    heading=wrap_angle(heading),
                    speed=sv.speed_at(t),
                    accel=sv.accel,
                    downtrack=s,
                    lane_id=sv.lane,
                    lanelet_id=_lanelet_of(road, sv.lane, s),
                    length=sv.length,
                    width=sv.width,
                    height=sv.height,
                    visible_to=seen,
                )
            )

    return ScenarioData(
        spec=spec,
        vector_map=build_vector_map_dict(road, name=spec.name),
        poses=poses,
        frames=frames,
        dynamic_masks=masks,
        ground_truth=ground_truth,
    )


GROUND_TRUTH_HEADER = (
    "sv_id,time,x,y,heading,speed,accel,downtrack,lane_id,lanelet_id,length,width,height,visible_to"
)


def write_scenario(data: ScenarioData, out_dir) -> Path:
    """Write map, per-agent frames and poses, ground truth, and a run config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    (out / "map.json").write_text(json.dumps(data.vector_map))

    agent_entries = []
    for aid in sorted(data.frames):
        agent_dir = out / "agents" / f"agent_{aid}"
        frame_dir = agent_dir / "frames"
        frame_dir.mkdir(parents=True, exist_ok=True)
        for k, frame in enumerate(data.frames[aid]):
            write_frame_csv(frame_dir / f"frame_{k:06d}.csv", frame)
        write_pose_csv(agent_dir / "poses.csv", data.poses[aid])
        agent_entries.append(
            {
                "agent_id": aid,
                "frames_dir": str(frame_dir.relative_to(out)),
                "pose_file": str((agent_dir / "poses.csv").relative_to(out)),
            }
        )

    with (out / "ground_truth.csv").open("w") as fh:
        fh.write(GROUND_TRUTH_HEADER + "\n")
        for row in data.ground_truth:
            seen = ";".join(str(a) for a in row.visible_to)
            fh.write(
                f"{row.sv_id},{row.time:.6f},{row.x:.6f},{row.y:.6f},{row.heading:.9f},"
                f"{row.speed:.6f},{row.accel:.6f},{row.downtrack:.6f},{row.lane_id},"
                f"{row.lanelet_id},{row.length:.3f},{row.width:.3f},{row.height:.3f},{seen}\n"
            )

    config = {
        "map": {"file": "map.json"},
        "agents": agent_entries,
        "reference_agent": sorted(data.frames)[0],
        "output_dir": "out",
    }
    (out / "config.json").write_text(json.dumps(config, indent=2))
    return out
