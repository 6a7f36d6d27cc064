"""Kalman-filter multi-object tracker over fused detections.

State per track: position, velocity, acceleration (constant-acceleration
model) plus heading; box dimensions are smoothed separately with an
exponential moving average. Detections are associated to predicted track
positions with the Hungarian algorithm under a Euclidean gate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .detection import OrientedBox
from .errors import InvalidArgument
from .fusion import FusedFrame
from .geometry import wrap_angle

# state layout: [x, y, z, vx, vy, vz, ax, ay, az, heading]
_NX = 10
_POS = slice(0, 3)
_VEL = slice(3, 6)
_ACC = slice(6, 9)
_HEAD = 9


@dataclass
class TrackingConfig:
    q_pos: float = 0.1          # process noise per nominal step, position (m)
    q_vel: float = 0.5          # velocity (m/s)
    q_acc: float = 0.5          # acceleration (m/s^2)
    q_heading: float = 0.1      # heading (rad)
    r_pos: float = 0.3          # measurement noise, box center (m)
    r_heading: float = 0.15     # measurement noise, box heading (rad)
    nominal_dt: float = 0.1     # step the q_* values are quoted for (s)
    association_gate: float = 4.0
    confirm_hits: int = 3
    max_age: int = 5
    dim_ema: float = 0.3
    init_vel_sigma: float = 10.0
    init_acc_sigma: float = 3.0


@dataclass
class Track:
    """One tracked object; `state` covers kinematics, dims are EMA-smoothed."""

    track_id: int
    state: np.ndarray
    covariance: np.ndarray
    length: float
    width: float
    height: float
    hits: int = 1
    misses: int = 0
    last_timestamp: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return self.state[_POS]

    @property
    def velocity(self) -> np.ndarray:
        return self.state[_VEL]

    @property
    def acceleration(self) -> np.ndarray:
        return self.state[_ACC]

    @property
    def heading(self) -> float:
        return float(self.state[_HEAD])

    @property
    def speed(self) -> float:
        return float(np.hypot(self.state[3], self.state[4]))


def _transition(dt: float) -> np.ndarray:
    f = np.eye(_NX)
    for axis in range(3):
        f[axis, 3 + axis] = dt
        f[axis, 6 + axis] = 0.5 * dt * dt
        f[3 + axis, 6 + axis] = dt
    return f


def _process_noise(config: TrackingConfig, dt: float) -> np.ndarray:
    scale = dt / config.nominal_dt
    diag = np.r_[
        np.full(3, config.q_pos**2),
        np.full(3, config.q_vel**2),
        np.full(3, config.q_acc**2),
        [config.q_heading**2],
    ]
    return np.diag(diag * scale)


_H = np.zeros((4, _NX))
_H[0, 0] = _H[1, 1] = _H[2, 2] = 1.0
_H[3, _HEAD] = 1.0


def kf_predict(track: Track, dt: float, config: TrackingConfig | None = None) -> Track:
    """Advance a track by dt with the constant-acceleration model."""
    if dt <= 0.0 or not math.isfinite(dt):
        raise InvalidArgument(f"dt must be positive, got {dt}")
    config = config or TrackingConfig()
    f = _transition(dt)
    state = f @ track.state
    state[_HEAD] = wrap_angle(state[_HEAD])
    cov = f @ track.covariance @ f.T + _process_noise(config, dt)
    cov = 0.5 * (cov + cov.T)
    return replace(track, state=state, covariance=cov, last_timestamp=track.last_timestamp + dt)


def _aligned_heading(measured: float, predicted: float) -> float:
    """Resolve the pi ambiguity of a fitted box heading against the track."""
    candidates = (measured, measured + math.pi, measured - math.pi)
    return min(candidates, key=lambda h: abs(wrap_angle(h - predicted)))


def kf_update(track: Track, box: OrientedBox, config: TrackingConfig) -> Track:
    """Measurement update with the detected box center and heading."""
    r = np.diag(
        [config.r_pos**2, config.r_pos**2, config.r_pos**2, config.r_heading**2]
    )
    z = np.array([box.x, box.y, box.z, _aligned_heading(box.heading, track.heading)])
    innovation = z - _H @ track.state
    innovation[3] = wrap_angle(innovation[3])
    s = _H @ track.covariance @ _H.T + r
    gain = track.covariance @ _H.T @ np.linalg.inv(s)
    state = track.state + gain @ innovation
    state[_HEAD] = wrap_angle(state[_HEAD])
    ikh = np.eye(_NX) - gain @ _H
    cov = ikh @ track.covariance @ ikh.T + gain @ r @ gain.T  # Joseph form
    cov = 0.5 * (cov + cov.T)

    beta = config.dim_ema
    return replace(
        track,
        state=state,
        covariance=cov,
        length=(1 - beta) * track.length + beta * box.length,
        width=(1 - beta) * track.width + beta * box.width,
        height=(1 - beta) * track.height + beta * box.height,
        hits=track.hits + 1,
        misses=0,
    )


@dataclass
class Assignment:
    pairs: list[tuple[int, int]]
    unmatched_tracks: list[int]
    unmatched_detections: list[int]


def associate(tracks: list[Track], detections: list[OrientedBox], gate: float) -> Assignment:
    """Hungarian assignment on Euclidean distance, gated at `gate` meters."""
    if gate <= 0.0:
        raise InvalidArgument("gate must be positive")
    if not tracks or not detections:
        return Assignment([], list(range(len(tracks))), list(range(len(detections))))

    track_pos = np.array([t.position for t in tracks])
    det_pos = np.array([[d.x, d.y, d.z] for d in detections])
    cost = np.linalg.norm(track_pos[:, None, :] - det_pos[None, :, :], axis=2)
    rows, cols = linear_sum_assignment(cost)

    pairs = []
    unmatched_t = set(range(len(tracks)))
    unmatched_d = set(range(len(detections)))
    for i, j in zip(rows, cols):
        if cost[i, j] <= gate:
            pairs.append((int(i), int(j)))
            unmatched_t.discard(int(i))
            unmatched_d.discard(int(j))
    return Assignment(pairs, sorted(unmatched_t), sorted(unmatched_d))


class MultiObjectTracker:
    """Tracker state machine: predict, associate, update, manage lifecycles."""

    def __init__(self, config: TrackingConfig | None = None):
        self.config = config or TrackingConfig()
        self.tracks: list[Track] = []
        self._next_id = 1
        self._last_timestamp: float | None = None

    def _new_track(self, box: OrientedBox, timestamp: float) -> Track:
        c = self.config
        state = np.zeros(_NX)
        state[_POS] = [box.x, box.y, box.z]
        state[_HEAD] = box.heading
        cov = np.diag(
            np.r_[
                np.full(3, c.r_pos**2),
                np.full(3, c.init_vel_sigma**2),
                np.full(3, c.init_acc_sigma**2),
                [c.r_heading**2 * 4],
            ]
        )
        track = Track(
            track_id=self._next_id,
            state=state,
            covariance=cov,
            length=box.length,
            width=box.width,
            height=box.height,
            hits=1,
            misses=0,
            last_timestamp=timestamp,
        )
        self._next_id += 1
        return track

    def step(self, frame: FusedFrame) -> list[Track]:
        """Process one fused frame; returns the confirmed tracks seen in it."""
        c = self.config
        if self._last_timestamp is not None and frame.timestamp <= self._last_timestamp:
            raise InvalidArgument(
                f"frame timestamps must increase: {frame.timestamp} after {self._last_timestamp}"
            )

        if self._last_timestamp is not None and self.tracks:
            dt = frame.timestamp - self._last_timestamp
            self.tracks = [kf_predict(t, dt, c) for t in self.tracks]

        assignment = associate(self.tracks, frame.boxes, c.association_gate)
        for ti, di in assignment.pairs:
            self.tracks[ti] = kf_update(self.tracks[ti], frame.boxes[di], c)
            self.tracks[ti].last_timestamp = frame.timestamp

        for ti in assignment.unmatched_tracks:
            self.tracks[ti].misses += 1
        self.tracks = [t for t in self.tracks if t.misses <= c.max_age]

        for di in assignment.unmatched_detections:
            self.tracks.append(self._new_track(frame.boxes[di], frame.timestamp))

        self._last_timestamp = frame.timestamp
        return [t for t in self.tracks if t.hits >= c.confirm_hits and t.misses == 0]
