"""Lane-batched forward kinematics, sphere collision checks, and limit tests.

A local path is sampled at N times, the samples are grouped into strided
batches of K lanes, and every batch is converted to the original space,
checked against sphere obstacles, and run through the limit predicates.
The per-sample decisions are identical to a scalar loop over the same N
samples; lane width only affects grouping and early exit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lqmt import LocalFlatPath
from .maps import BatchStates, FlatnessMap

RADIUS_INFLATION = 1e-6  # meters added to obstacle radii before the check

COLLISION = "collision"
SINGULARITY = "singularity"
FLAT_BOUNDS = "flat_bounds"
PSEUDO_CONTROL = "pseudo_control"
STATE_LIMITS = "state_limits"


@dataclass(frozen=True)
class SphereSet:
    """Static sphere obstacles in world coordinates."""

    centers: np.ndarray  # (O, 3)
    radii: np.ndarray  # (O,)

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=np.float64).reshape(-1, 3)
        radii = np.asarray(self.radii, dtype=np.float64).reshape(-1)
        if centers.shape[0] != radii.shape[0]:
            raise ValueError("centers and radii length mismatch")
        if centers.size and not np.all(np.isfinite(centers)):
            raise ValueError("sphere centers must be finite")
        if radii.size and np.any(radii <= 0):
            raise ValueError("sphere radii must be positive")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "radii", radii)

    @classmethod
    def empty(cls) -> "SphereSet":
        return cls(np.zeros((0, 3)), np.zeros(0))

    def __len__(self) -> int:
        return self.radii.shape[0]


def spheres_from_box(lower, upper, sphere_radius, spacing=None) -> tuple[np.ndarray, np.ndarray]:
    """Approximate an axis-aligned box by a grid of spheres (authoring aid).

    Grid spacing defaults to the sphere radius so neighboring spheres
    overlap and the box face stays closed.  Works for 2D or 3D boxes.
    """
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    if spacing is None:
        spacing = sphere_radius
    axes = []
    for lo, hi in zip(lower, upper):
        span = hi - lo
        count = max(1, int(math.ceil(span / spacing)) + 1)
        axes.append(np.linspace(lo, hi, count))
    grids = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([g.reshape(-1) for g in grids], axis=1)
    return centers, np.full(centers.shape[0], sphere_radius)


def embed_points(points: np.ndarray, plane: str) -> np.ndarray:
    """Lift planar coordinates into 3D world points."""
    points = np.atleast_2d(points)
    if plane == "xyz":
        return points
    out = np.zeros((points.shape[0], 3))
    if plane == "xy":
        out[:, 0:2] = points
    elif plane == "yz":
        out[:, 1:3] = points
    else:
        raise ValueError(f"unknown plane {plane!r}")
    return out


@dataclass(frozen=True)
class RobotGeometry:
    """Body spheres plus the map from an fk input to world sphere centers.

    Mobile robots translate fixed offsets by their position; the planar
    arm places spheres at fractional stations along each link.
    """

    kind: str  # "mobile" | "arm2"
    radii: np.ndarray  # (S,)
    plane: str = "xy"
    offsets: np.ndarray | None = None  # (S, 3), mobile only
    link_lengths: tuple[float, ...] = ()
    link_stations: tuple[tuple[float, ...], ...] = ()  # fractions per link

    def __post_init__(self):
        radii = np.asarray(self.radii, dtype=np.float64).reshape(-1)
        if radii.size == 0 or np.any(radii <= 0):
            raise ValueError("robot needs at least one sphere of positive radius")
        object.__setattr__(self, "radii", radii)
        if self.kind == "mobile":
            offs = self.offsets if self.offsets is not None else np.zeros((radii.size, 3))
            object.__setattr__(self, "offsets", np.asarray(offs, dtype=np.float64).reshape(-1, 3))

    def fk(self, fk_input: np.ndarray) -> np.ndarray:
        """World sphere centers, shape (B, S, 3)."""
        if self.kind == "mobile":
            pos = embed_points(fk_input, self.plane)  # (B, 3)
            return pos[:, None, :] + self.offsets[None, :, :]
        if self.kind == "arm2":
            q = np.atleast_2d(fk_input)  # (B, 2)
            l1, l2 = self.link_lengths
            c1, s1 = np.cos(q[:, 0]), np.sin(q[:, 0])
            c12, s12 = np.cos(q[:, 0] + q[:, 1]), np.sin(q[:, 0] + q[:, 1])
            elbow = np.stack((l1 * c1, l1 * s1), axis=1)  # (B, 2)
            pieces = []
            for f in self.link_stations[0]:
                pieces.append(f * elbow)
            for f in self.link_stations[1]:
                pieces.append(elbow + f * np.stack((l2 * c12, l2 * s12), axis=1))
            planar = np.stack(pieces, axis=1)  # (B, S, 2)
            out = np.zeros((planar.shape[0], planar.shape[1], 3))
            out[:, :, 0:2] = planar
            return out
        raise ValueError(f"unknown robot geometry kind {self.kind!r}")


def point_robot(radius: float, plane: str = "xy") -> RobotGeometry:
    return RobotGeometry(kind="mobile", radii=np.array([radius]), plane=plane)


def two_link_arm_geometry(l1, l2, radius, stations_per_link=4) -> RobotGeometry:
    fr = tuple(np.linspace(1.0 / stations_per_link, 1.0, stations_per_link))
    return RobotGeometry(
        kind="arm2",
        radii=np.full(2 * stations_per_link, radius),
        link_lengths=(l1, l2),
        link_stations=(fr, fr),
    )


def batch_fk_spheres(states: np.ndarray, robot: RobotGeometry) -> np.ndarray:
    """World-frame body sphere centers for a batch of fk inputs."""
    return robot.fk(states)


@dataclass(frozen=True)
class BatchLayout:
    """Strided grouping of N sample indices into lanes of width K.

    Batch i holds indices {i, i+stride, ..., i+(K-1)*stride} clipped to
    [0, N), with stride = ceil(N/K); the batches partition the index set.
    """

    n_samples: int
    lane_width: int

    def __post_init__(self):
        if self.n_samples < 1 or self.lane_width < 1:
            raise ValueError("need at least one sample and one lane")

    @property
    def stride(self) -> int:
        return math.ceil(self.n_samples / self.lane_width)

    @property
    def batch_count(self) -> int:
        return self.stride

    def batch_indices(self, i: int) -> np.ndarray:
        return np.arange(i, self.n_samples, self.stride)


@dataclass(frozen=True)
class Verdict:
    valid: bool
    reason: str | None = None
    t_hit: float | None = None

    def __bool__(self) -> bool:
        return self.valid


VALID = Verdict(True)


@dataclass
class ValidationConfig:
    """Sampling density, lane width, and limit boxes for path validation."""

    resolution: float = 0.05
    lane_width: int = 8
    flat_lower: np.ndarray | None = None  # (r*n,)
    flat_upper: np.ndarray | None = None
    w_lower: np.ndarray | None = None  # (n,)
    w_upper: np.ndarray | None = None

    def scaled(self, factor: float) -> "ValidationConfig":
        return ValidationConfig(
            resolution=self.resolution / factor,
            lane_width=self.lane_width,
            flat_lower=self.flat_lower,
            flat_upper=self.flat_upper,
            w_lower=self.w_lower,
            w_upper=self.w_upper,
        )


def sample_count(path: LocalFlatPath, cfg: ValidationConfig) -> int:
    """Number of samples so spatial spacing stays below the resolution.

    The output arc length is bounded on a 32-interval grid using the
    larger endpoint speed per interval.
    """
    ts = np.linspace(0.0, path.T, 33)
    vel = path.jets(ts, 1)[1]  # (n, 33)
    speeds = np.sqrt(np.sum(vel * vel, axis=0))
    seg = np.maximum(speeds[:-1], speeds[1:])
    arc = float(np.sum(seg) * (path.T / 32.0))
    return max(2, math.ceil(arc / cfg.resolution - 1e-9) + 1)


def _collision_lanes(
    centers: np.ndarray, body_radii: np.ndarray, obs_centers32, obs_thresh32
) -> np.ndarray:
    """Per-lane collision flags; distance test runs in 32-bit lanes."""
    c32 = centers.astype(np.float32)
    diff = c32[:, :, None, :] - obs_centers32[None, None, :, :]
    d2 = np.sum(diff * diff, axis=3)  # (B, S, O) float32
    return np.any(d2 < obs_thresh32[None, :, :], axis=(1, 2))


def validate_path(
    path: LocalFlatPath,
    fmap: FlatnessMap,
    robot: RobotGeometry,
    obstacles: SphereSet,
    cfg: ValidationConfig,
) -> Verdict:
    """Check a local path for collisions, limit violations, and singularities.

    Returns Invalid with the earliest offending sample time in the first
    batch that contains any invalid lane (early exit); the verdict is the
    same as a scalar sweep over all N samples.
    """
    n_samples = sample_count(path, cfg)
    layout = BatchLayout(n_samples, cfg.lane_width)
    ts_all = np.linspace(0.0, path.T, n_samples)
    have_obs = len(obstacles) > 0
    if have_obs:
        obs_centers32 = obstacles.centers.astype(np.float32)
        thresh = (obstacles.radii + RADIUS_INFLATION)[None, :] + robot.radii[:, None]
        obs_thresh32 = (thresh.astype(np.float32)) ** 2  # (S, O)
    r, n = path.dims.r, path.dims.n
    for i in range(layout.batch_count):
        idx = layout.batch_indices(i)
        ts = ts_all[idx]
        jets = path.jets(ts, fmap.jet_order)
        bs = fmap.batch_eval(jets)
        B = ts.size
        bad_reason = np.zeros(B, dtype=np.int8)  # 0 = clean
        if have_obs:
            centers = robot.fk(bs.fk_input)
            coll = _collision_lanes(centers, robot.radii, obs_centers32, obs_thresh32)
            bad_reason[coll] = 1
        if bs.singular.any():
            bad_reason[(bad_reason == 0) & bs.singular] = 2
        if cfg.flat_lower is not None:
            z = jets[:r].reshape(r * n, B)
            out = np.any((z < cfg.flat_lower[:, None]) | (z > cfg.flat_upper[:, None]), axis=0)
            bad_reason[(bad_reason == 0) & out] = 3
        if cfg.w_lower is not None:
            w = jets[r]
            out = np.any((w < cfg.w_lower[:, None]) | (w > cfg.w_upper[:, None]), axis=0)
            bad_reason[(bad_reason == 0) & out] = 4
        if fmap.limits is not None:
            ok = fmap.limits.check_batch(bs)
            bad_reason[(bad_reason == 0) & ~ok & ~bs.singular] = 5
        if np.any(bad_reason):
            lane = int(np.flatnonzero(bad_reason)[0])  # ts increase within a batch
            reason = {1: COLLISION, 2: SINGULARITY, 3: FLAT_BOUNDS, 4: PSEUDO_CONTROL, 5: STATE_LIMITS}[
                int(bad_reason[lane])
            ]
            return Verdict(False, reason, float(ts[lane]))
    return VALID


def state_verdict(
    state_data: np.ndarray,
    fmap: FlatnessMap,
    robot: RobotGeometry,
    obstacles: SphereSet,
    cfg: ValidationConfig,
    w: np.ndarray | None = None,
) -> Verdict:
    """Single-state validity check (used for start states and goal draws)."""
    r, n = fmap.dims.r, fmap.dims.n
    jets = np.zeros((fmap.jet_order + 1, n, 1))
    jets[:r, :, 0] = state_data.reshape(r, n)
    if w is not None and fmap.jet_order >= r:
        jets[r, :, 0] = w
    bs = fmap.batch_eval(jets)
    if len(obstacles) > 0:
        centers = robot.fk(bs.fk_input)
        obs32 = obstacles.centers.astype(np.float32)
        thresh = (obstacles.radii + RADIUS_INFLATION)[None, :] + robot.radii[:, None]
        if _collision_lanes(centers, robot.radii, obs32, (thresh.astype(np.float32)) ** 2)[0]:
            return Verdict(False, COLLISION, 0.0)
    if bs.singular[0]:
        return Verdict(False, SINGULARITY, 0.0)
    if cfg.flat_lower is not None:
        z = state_data.reshape(-1)
        if np.any(z < cfg.flat_lower) or np.any(z > cfg.flat_upper):
            return Verdict(False, FLAT_BOUNDS, 0.0)
    if fmap.limits is not None and not fmap.limits.check_batch(bs)[0]:
        return Verdict(False, STATE_LIMITS, 0.0)
    return VALID


def min_clearance(
    path: LocalFlatPath,
    fmap: FlatnessMap,
    robot: RobotGeometry,
    obstacles: SphereSet,
    n_samples: int = 512,
) -> float:
    """Smallest surface-to-surface distance along the path (negative inside)."""
    if len(obstacles) == 0:
        return math.inf
    ts = np.linspace(0.0, path.T, n_samples)
    jets = path.jets(ts, fmap.jet_order)
    bs = fmap.batch_eval(jets)
    centers = robot.fk(bs.fk_input)
    diff = centers[:, :, None, :] - obstacles.centers[None, None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=3))
    gap = dist - robot.radii[None, :, None] - obstacles.radii[None, None, :]
    return float(gap.min())
