"""Synthetic street scene: static clutter plus rectangular blockers
moving along lanes, a ray-cast 2-D LiDAR, and geometric link status.

All randomness flows from a single 64-bit seed through named
`numpy.random.SeedSequence` streams, so equal configs reproduce equal
bytes. The stream layout is part of the public contract:

    root = SeedSequence(seed)
    schedule_ss, scans_ss = root.spawn(2)

`schedule_ss` drives blocker scheduling (see `build_scene` for the
exact draw order); `scans_ss.spawn(n)` yields one child per scan in
time order. A standalone `cast_scan` call without an explicit
generator uses SeedSequence([seed, 2, time_index]).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .geometry import ray_cast, rect_segments, segment_intersects_rect, wrap_angle


@dataclass
class NoiseConfig:
    """Sensor imperfections applied to every cast scan."""

    range_sigma: float = 0.0          # Gaussian std of distance readings, m
    dropout_prob: float = 0.0         # probability a hit reads as 0
    angle_jitter_sigma: float = 0.0   # per-ray angle perturbation, rad
    # Fixed clutter echoes injected per scan with probability
    # spurious_prob, each replacing the sample nearest in angle.
    spurious_static_points: list[tuple[float, float]] = field(default_factory=list)
    spurious_prob: float = 1.0


# Default street: 8 m wide, x spanning +-16 m, facades just behind the
# link endpoints plus a little parked clutter. No static segment may
# touch the tx-rx segment (x = 0, y in [0.5, 7.5]); only movers block.
_DEFAULT_STATIC = [
    (-16.0, -1.0, 16.0, -1.0),
    (-16.0, 9.0, 16.0, 9.0),
    (-12.0, 0.9, -8.5, 0.9),
    (-12.0, 0.9, -12.0, -1.0),
    (4.0, 7.1, 7.5, 7.1),
    (7.5, 7.1, 7.5, 9.0),
    (10.5, 0.6, 13.0, 0.6),
]

_DEFAULT_LANES = [
    ((-16.0, 2.5), (16.0, 2.5)),   # near lane, travels +x
    ((16.0, 5.5), (-16.0, 5.5)),   # far lane, travels -x
]


@dataclass
class SceneConfig:
    """Street geometry, traffic statistics and sensor parameters."""

    street_width: float = 8.0
    tx_position: tuple[float, float] = (0.0, 7.5)
    rx_position: tuple[float, float] = (0.0, 0.5)
    static_objects: list[tuple[float, float, float, float]] = field(
        default_factory=lambda: list(_DEFAULT_STATIC))
    blocker_spawn_rate: float = 0.35            # expected blockers per second
    blocker_speed_range: tuple[float, float] = (1.5, 3.0)
    blocker_size_range: tuple[tuple[float, float], tuple[float, float]] = (
        (2.4, 5.2), (1.4, 2.4))                 # (length, width) intervals, m
    lanes: list[tuple[tuple[float, float], tuple[float, float]]] = field(
        default_factory=lambda: list(_DEFAULT_LANES))
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    sample_rate: float = 10.0                   # scans per second
    samples_per_scan: int = 460
    max_range: float = 16.0                     # m
    seed: int = 0


@dataclass
class Blocker:
    """Rectangle travelling at constant velocity along a lane."""

    center: tuple[float, float]     # position at spawn_time
    heading: float                  # radians, direction of travel
    speed: float                    # m/s
    half_length: float
    half_width: float
    spawn_time: float               # seconds
    despawn_time: float

    def position(self, t: float) -> np.ndarray:
        dt = t - self.spawn_time
        return np.array([self.center[0] + np.cos(self.heading) * self.speed * dt,
                         self.center[1] + np.sin(self.heading) * self.speed * dt])

    def active(self, t: float) -> bool:
        return self.spawn_time <= t < self.despawn_time


@dataclass
class Scan:
    """One full sweep: samples[i] = (angle rad in (-pi, pi], distance m).

    Distances are stored as float32; 0 encodes "no return". Samples
    appear in emission order, not sorted by angle.
    """

    time_index: int
    samples: np.ndarray             # (P, 2) float32

    @property
    def angles(self) -> np.ndarray:
        return self.samples[:, 0]

    @property
    def distances(self) -> np.ndarray:
        return self.samples[:, 1]


@dataclass
class ScanSequence:
    """Time-ordered scans with per-instance link status."""

    scans: list[Scan]
    link_status: np.ndarray         # (T,) uint8, 1 = blocked
    sample_rate: float
    metadata: dict

    def __len__(self) -> int:
        return len(self.scans)


@dataclass
class Scene:
    config: SceneConfig
    static_segments: np.ndarray     # (S, 4) float64
    blockers: list[Blocker]

    def active_blockers(self, t: float) -> list[Blocker]:
        return [b for b in self.blockers if b.active(t)]


def config_digest(config: SceneConfig) -> str:
    """Short stable digest of a config, for provenance headers."""
    blob = json.dumps(asdict(config), sort_keys=True, default=float)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _validate(config: SceneConfig) -> None:
    if tuple(config.tx_position) == tuple(config.rx_position):
        raise ValueError("tx_position and rx_position must differ")
    if config.blocker_spawn_rate < 0:
        raise ValueError("blocker_spawn_rate must be >= 0")
    if config.blocker_spawn_rate > 0 and not config.lanes:
        raise ValueError("nonzero blocker_spawn_rate requires at least one lane")
    lo, hi = config.blocker_speed_range
    if not (0 <= lo <= hi):
        raise ValueError("blocker_speed_range must be ordered and nonnegative")
    for lo, hi in config.blocker_size_range:
        if not (0 <= lo <= hi):
            raise ValueError("blocker_size_range bounds must be ordered and nonnegative")
    if config.samples_per_scan <= 0 or config.sample_rate <= 0 or config.max_range <= 0:
        raise ValueError("samples_per_scan, sample_rate and max_range must be positive")


def build_scene(config: SceneConfig, horizon: float = 30.0) -> Scene:
    """Schedule blockers over [0, horizon) seconds and freeze the scene.

    Draw order per spawn, from generator default_rng(root.spawn(2)[0]):
    exponential inter-arrival gap, lane index, speed, length, width.
    Each blocker enters at its lane start and despawns after driving
    the lane end-to-end. The procedure is documented so an independent
    replay can verify the schedule.
    """
    _validate(config)
    schedule_ss, _ = np.random.SeedSequence(config.seed).spawn(2)
    rng = np.random.default_rng(schedule_ss)
    blockers: list[Blocker] = []
    if config.blocker_spawn_rate > 0:
        t = 0.0
        while True:
            t += rng.exponential(1.0 / config.blocker_spawn_rate)
            if t >= horizon:
                break
            lane = config.lanes[rng.integers(len(config.lanes))]
            speed = rng.uniform(*config.blocker_speed_range)
            length = rng.uniform(*config.blocker_size_range[0])
            width = rng.uniform(*config.blocker_size_range[1])
            start = np.asarray(lane[0], dtype=np.float64)
            end = np.asarray(lane[1], dtype=np.float64)
            lane_vec = end - start
            lane_len = float(np.hypot(*lane_vec))
            heading = float(np.arctan2(lane_vec[1], lane_vec[0]))
            blockers.append(Blocker(
                center=(float(start[0]), float(start[1])),
                heading=heading, speed=speed,
                half_length=length / 2.0, half_width=width / 2.0,
                spawn_time=t, despawn_time=t + lane_len / speed))
    static = np.asarray(config.static_objects, dtype=np.float64).reshape(-1, 4)
    return Scene(config=config, static_segments=static, blockers=blockers)


def link_status(scene: Scene, tx, rx, t: float = 0.0) -> int:
    """1 when any active blocker rectangle cuts the tx-rx segment."""
    for b in scene.active_blockers(t):
        pos = b.position(t)
        if segment_intersects_rect(tx, rx, pos, b.heading, b.half_length, b.half_width):
            return 1
    return 0


def _scan_rng(config: SceneConfig, time_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([config.seed, 2, time_index]))


def cast_scan(scene: Scene, sensor, config: SceneConfig, t: float = 0.0,
              time_index: int = 0, rng: np.random.Generator | None = None) -> Scan:
    """Cast P rays from `sensor` at time `t` and apply the noise model.

    Nominal ray angles form the fixed comb -pi + (j+1) * 2pi/P, emitted
    in rotation order from a per-scan random start offset. Per sample:
    nearest hit against static segments and active blockers; true range
    beyond max_range (or no hit) reads 0; otherwise Gaussian range noise
    is added, the reading is clamped to [0, max_range], and dropout may
    zero it. Spurious static echoes are injected last.
    """
    if rng is None:
        rng = _scan_rng(config, time_index)
    p = config.samples_per_scan
    noise = config.noise
    nominal = -np.pi + (np.arange(p, dtype=np.float64) + 1.0) * (2.0 * np.pi / p)
    start = int(rng.integers(p))
    angles = nominal[(np.arange(p) + start) % p]
    if noise.angle_jitter_sigma > 0:
        angles = wrap_angle(angles + rng.normal(0.0, noise.angle_jitter_sigma, p))

    segments = [scene.static_segments]
    for b in scene.active_blockers(t):
        segments.append(rect_segments(b.position(t), b.heading,
                                      b.half_length, b.half_width))
    true_dist = ray_cast(np.asarray(sensor, dtype=np.float64), angles,
                         np.concatenate(segments, axis=0))

    hit = true_dist <= config.max_range
    dist = np.where(hit, true_dist, 0.0)
    if noise.range_sigma > 0:
        dist = np.where(hit, dist + rng.normal(0.0, noise.range_sigma, p), 0.0)
    dist = np.clip(dist, 0.0, config.max_range)
    if noise.dropout_prob > 0:
        dist = np.where(hit & (rng.random(p) < noise.dropout_prob), 0.0, dist)
    if noise.spurious_static_points and rng.random() < noise.spurious_prob:
        angles = angles.copy()
        dist = np.asarray(dist).copy()
        for ang, d in noise.spurious_static_points:
            i = int(np.argmin(np.abs(wrap_angle(angles - ang))))
            angles[i] = ang
            dist[i] = min(max(d, 0.0), config.max_range)

    samples = np.stack([angles, dist], axis=1).astype(np.float32)
    samples[:, 1] = np.clip(samples[:, 1], 0.0, np.float32(config.max_range))
    return Scan(time_index=time_index, samples=samples)


def simulate_sequence(config: SceneConfig, duration: float,
                      scene: Scene | None = None) -> ScanSequence:
    """Simulate floor(duration * sample_rate) scans with link labels.

    The LiDAR rides with the receiver, so scans are cast from
    rx_position. Passing a prebuilt `scene` overrides scheduling, which
    lets callers script exact blocker trajectories.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    if scene is None:
        scene = build_scene(config, horizon=duration)
    n = int(np.floor(duration * config.sample_rate))
    _, scans_ss = np.random.SeedSequence(config.seed).spawn(2)
    children = scans_ss.spawn(n)
    scans = []
    status = np.zeros(n, dtype=np.uint8)
    for i in range(n):
        t = i / config.sample_rate
        scans.append(cast_scan(scene, config.rx_position, config, t=t,
                               time_index=i, rng=np.random.default_rng(children[i])))
        status[i] = link_status(scene, config.tx_position, config.rx_position, t)
    return ScanSequence(scans=scans, link_status=status,
                        sample_rate=config.sample_rate,
                        metadata={"seed": config.seed,
                                  "config_digest": config_digest(config),
                                  "max_range": config.max_range})
