"""Problem files, trajectory files, and their strict loaders.

Problem files are YAML with a fixed schema (unknown fields rejected unless
loading leniently).  Trajectory files are a line-oriented text format with
17-significant-digit floats, so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .collision import (
    SphereSet,
    point_robot,
    spheres_from_box,
    state_verdict,
    two_link_arm_geometry,
)
from .lqmt import FlatDims, FlatState, LocalFlatPath
from .maps import (
    GRAVITY,
    ManipulatorLimits,
    PlanarQuadrotorLimits,
    QuadrotorLimits,
    TwoLinkArmDynamics,
    UnicycleLimits,
    manipulator_map,
    planar_quadrotor_map,
    quadrotor_map,
    unicycle_map,
)
from .planners import PiecewiseTrajectory, PlannerConfig, Problem

FORMAT_TAG = "flatplan-trajectory 1"


class ParseError(ValueError):
    """File is syntactically malformed."""


class SemanticError(ValueError):
    """File parses but describes an inconsistent problem."""


class ValidationError(ValueError):
    """Trajectory file content fails its own consistency invariants."""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _require(cond: bool, msg: str):
    if not cond:
        raise SemanticError(msg)


def _check_keys(block: dict, allowed: set[str], where: str, lenient: bool):
    unknown = set(block) - allowed
    if unknown:
        msg = f"unknown field(s) {sorted(unknown)} in {where}"
        if lenient:
            warnings.warn(msg)
        else:
            raise SemanticError(msg)


_ROBOT_KEYS = {
    "type", "radius", "kappa", "mass", "inertia", "arm_length", "order",
    "link_lengths", "link_masses", "gravity", "sphere_radius", "spheres_per_link",
}
_SCENE_KEYS = {"obstacles", "boxes"}
_LIMIT_KEYS = {"position", "derivatives", "pseudo_control", "state"}
_PLANNER_KEYS = {
    "variant", "seed", "max_iters", "time_cap_s", "goal_bias", "time_weight",
    "neighbor_threshold", "neighbor_schedule_scale", "neighbor_prefilter",
    "prop_duration_range", "sst_witness_radius", "sst_selection_radius",
}
_VALIDATION_KEYS = {"resolution", "lane_width"}
_TOP_KEYS = {"name", "robot", "scene", "start", "goal", "limits", "planner", "validation"}


def _build_robot(block: dict, lenient: bool):
    _check_keys(block, _ROBOT_KEYS, "robot", lenient)
    kind = block.get("type")
    if kind == "unicycle":
        fmap = unicycle_map(kappa=int(block.get("kappa", 0)))
        geom = point_robot(float(block.get("radius", 0.25)), plane="xy")
        plane = "xy"
    elif kind == "planar_quadrotor":
        fmap = planar_quadrotor_map(
            mass=float(block.get("mass", 0.034)),
            inertia=float(block.get("inertia", 1e-4)),
            arm_length=float(block.get("arm_length", 0.1)),
        )
        geom = point_robot(float(block.get("radius", 0.15)), plane="yz")
        plane = "yz"
    elif kind == "quadrotor":
        fmap = quadrotor_map(
            mass=float(block.get("mass", 1.0)),
            inertia=tuple(block.get("inertia", (0.1, 0.1, 0.2))),
            order=int(block.get("order", 2)),
        )
        geom = point_robot(float(block.get("radius", 0.3)), plane="xyz")
        plane = "xyz"
    elif kind == "arm2":
        lengths = block.get("link_lengths", [0.5, 0.4])
        masses = block.get("link_masses", [1.0, 1.0])
        dyn = TwoLinkArmDynamics(
            m1=float(masses[0]), m2=float(masses[1]),
            l1=float(lengths[0]), l2=float(lengths[1]),
            gravity=float(block.get("gravity", 0.0)),
        )
        fmap = manipulator_map(dyn, joints=2)
        geom = two_link_arm_geometry(
            float(lengths[0]), float(lengths[1]),
            radius=float(block.get("sphere_radius", 0.05)),
            stations_per_link=int(block.get("spheres_per_link", 4)),
        )
        plane = "xy"
    else:
        raise SemanticError(f"unknown robot type {kind!r}")
    return fmap, geom, plane


def _attach_limits(fmap, kind: str, state_block: dict, lenient: bool):
    """Rebuild the map with original-space limit parameters from the file."""
    from dataclasses import replace

    if not state_block:
        return fmap
    if kind == "unicycle":
        lim = UnicycleLimits(
            v_max=float(state_block.get("v_max", math.inf)),
            omega_max=float(state_block.get("omega_max", math.inf)),
        )
    elif kind == "planar_quadrotor":
        lim = PlanarQuadrotorLimits(
            f_min=float(state_block.get("f_min", 0.0)),
            f_max=float(state_block.get("f_max", math.inf)),
        )
    elif kind == "quadrotor":
        lim = QuadrotorLimits(
            v_max=float(state_block.get("v_max", math.inf)),
            omega_max=float(state_block.get("omega_max", math.inf)),
            f_max=float(state_block.get("f_max", math.inf)),
            tau_max=float(state_block.get("tau_max", math.inf)),
        )
    elif kind == "arm2":
        lim = ManipulatorLimits(tau_max=float(state_block.get("tau_max", math.inf)))
    else:
        return fmap
    return replace(fmap, limits=lim)


def _build_obstacles(block: dict, plane: str, lenient: bool) -> SphereSet:
    _check_keys(block, _SCENE_KEYS, "scene", lenient)
    centers: list[np.ndarray] = []
    radii: list[float] = []

    def embed(c):
        c = np.asarray(c, dtype=np.float64)
        if c.size == 3:
            return c
        out = np.zeros(3)
        if plane == "xy":
            out[0:2] = c
        elif plane == "yz":
            out[1:3] = c
        else:
            raise SemanticError("3D robot scenes need 3D obstacle centers")
        return out

    for obs in block.get("obstacles", []) or []:
        _check_keys(obs, {"center", "radius"}, "scene.obstacles", lenient)
        r = float(obs["radius"])
        _require(r > 0, f"obstacle radius must be positive, got {r}")
        centers.append(embed(obs["center"]))
        radii.append(r)
    for box in block.get("boxes", []) or []:
        _check_keys(box, {"lower", "upper", "sphere_radius", "spacing"}, "scene.boxes", lenient)
        lo = np.asarray(box["lower"], dtype=np.float64)
        hi = np.asarray(box["upper"], dtype=np.float64)
        _require(lo.shape == hi.shape and np.all(hi >= lo), "box bounds inverted")
        r = float(box["sphere_radius"])
        _require(r > 0, "box sphere radius must be positive")
        pts, rs = spheres_from_box(lo, hi, r, box.get("spacing"))
        for p, rr in zip(pts, rs):
            centers.append(embed(p))
            radii.append(float(rr))
    if not centers:
        return SphereSet.empty()
    return SphereSet(np.array(centers), np.array(radii))


def _blocks_to_state(blocks, dims: FlatDims, what: str) -> np.ndarray:
    arr = np.asarray(blocks, dtype=np.float64)
    _require(arr.shape == (dims.r, dims.n), f"{what} needs shape ({dims.r}, {dims.n}), got {arr.shape}")
    return arr.reshape(-1)


def load_problem(path: str | Path, lenient: bool = False) -> Problem:
    """Load and fully validate a planning problem file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read problem file {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be a mapping")
    _check_keys(doc, _TOP_KEYS, "top level", lenient)
    for key in ("robot", "scene", "start", "goal", "limits"):
        _require(key in doc, f"missing required section {key!r}")

    robot_block = doc["robot"]
    fmap, geom, plane = _build_robot(robot_block, lenient)
    dims = fmap.dims

    limits_block = doc["limits"]
    _check_keys(limits_block, _LIMIT_KEYS, "limits", lenient)
    fmap = _attach_limits(fmap, robot_block["type"], limits_block.get("state", {}), lenient)

    pos = limits_block.get("position")
    _require(pos is not None, "limits.position is required")
    pos_lo = np.asarray(pos["lower"], dtype=np.float64)
    pos_hi = np.asarray(pos["upper"], dtype=np.float64)
    _require(pos_lo.size == dims.n and pos_hi.size == dims.n, "position bounds dimension mismatch")
    _require(np.all(pos_hi > pos_lo), "position bounds inverted")
    deriv = limits_block.get("derivatives", [])
    _require(
        len(deriv) == dims.r - 1,
        f"limits.derivatives needs {dims.r - 1} block(s) for this robot",
    )
    flat_lo = [pos_lo]
    flat_hi = [pos_hi]
    for bound in deriv:
        b = np.asarray(bound, dtype=np.float64)
        _require(b.size == dims.n and np.all(b > 0), "derivative bounds must be positive per dim")
        flat_lo.append(-b)
        flat_hi.append(b)
    flat_lower = np.concatenate(flat_lo)
    flat_upper = np.concatenate(flat_hi)
    w_bound = np.asarray(limits_block.get("pseudo_control", [math.inf] * dims.n), dtype=np.float64)
    _require(w_bound.size == dims.n and np.all(w_bound > 0), "pseudo-control bounds must be positive")

    obstacles = _build_obstacles(doc["scene"], plane, lenient)

    start_block = doc["start"]
    _check_keys(start_block, {"blocks"}, "start", lenient)
    start = _blocks_to_state(start_block["blocks"], dims, "start.blocks")

    goal_block = doc["goal"]
    _check_keys(goal_block, {"center_blocks", "half_width_blocks", "half_width"}, "goal", lenient)
    center = _blocks_to_state(goal_block["center_blocks"], dims, "goal.center_blocks")
    if "half_width_blocks" in goal_block:
        hw = _blocks_to_state(goal_block["half_width_blocks"], dims, "goal.half_width_blocks")
    else:
        hw = np.full(dims.size, float(goal_block.get("half_width", 0.25)))
    goal_lower = center - hw
    goal_upper = center + hw
    _require(np.all(goal_upper >= goal_lower), "goal box empty (negative half width)")
    _require(np.all(hw >= 0), "goal box empty (negative half width)")

    planner_block = doc.get("planner", {}) or {}
    _check_keys(planner_block, _PLANNER_KEYS, "planner", lenient)
    kwargs = dict(planner_block)
    if "prop_duration_range" in kwargs:
        kwargs["prop_duration_range"] = tuple(kwargs["prop_duration_range"])
    if "neighbor_threshold" in kwargs:
        kwargs["neighbor_threshold"] = float(kwargs["neighbor_threshold"])
    try:
        planner = PlannerConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise SemanticError(f"planner config: {exc}") from exc

    validation_block = doc.get("validation", {}) or {}
    _check_keys(validation_block, _VALIDATION_KEYS, "validation", lenient)

    problem = Problem(
        name=str(doc.get("name", path.stem)),
        fmap=fmap,
        robot=geom,
        obstacles=obstacles,
        start=FlatState(dims, start),
        goal_lower=goal_lower,
        goal_upper=goal_upper,
        flat_lower=flat_lower,
        flat_upper=flat_upper,
        w_lower=-w_bound,
        w_upper=w_bound,
        resolution=float(validation_block.get("resolution", 0.05)),
        lane_width=int(validation_block.get("lane_width", 8)),
        planner=planner,
    )
    verdict = state_verdict(
        start, problem.fmap, problem.robot, problem.obstacles, problem.validation_config()
    )
    if not verdict.valid:
        raise SemanticError(f"start state invalid: {verdict.reason}")
    return problem


def config_hash(cfg: PlannerConfig) -> str:
    blob = repr(sorted(vars(cfg).items())).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class TrajectoryRecord:
    """On-disk trajectory: header metadata, segments, and a sampled table."""

    robot: str
    problem: str
    seed: int
    cfg_hash: str
    valid: bool
    cost: float
    length: float
    plan_time_ms: float
    dims: FlatDims
    dt_out: float
    trajectory: PiecewiseTrajectory
    columns: tuple[str, ...]
    table: np.ndarray  # (M, len(columns)) with the singular flag as 0/1


def save_trajectory(path: str | Path, rec: TrajectoryRecord) -> None:
    lines = [FORMAT_TAG]
    lines.append(f"robot {rec.robot}")
    lines.append(f"problem {rec.problem}")
    lines.append(f"seed {rec.seed}")
    lines.append(f"config_hash {rec.cfg_hash}")
    lines.append(f"valid {1 if rec.valid else 0}")
    lines.append(f"cost {_fmt(rec.cost)}")
    lines.append(f"length {_fmt(rec.length)}")
    lines.append(f"plan_time_ms {_fmt(rec.plan_time_ms)}")
    lines.append(f"dims {rec.dims.n} {rec.dims.r}")
    lines.append(f"dt_out {_fmt(rec.dt_out)}")
    segs = rec.trajectory.segments
    lines.append(f"segments {len(segs)}")
    for i, seg in enumerate(segs):
        lines.append(f"segment {i} T {_fmt(seg.T)} cost {_fmt(seg.cost)}")
        lines.append(f"z0 {' '.join(_fmt(v) for v in seg.z0.data)}")
        lines.append(f"zf {' '.join(_fmt(v) for v in seg.zf.data)}")
        lines.append(f"y {seg.y_coeffs.shape[0]} {seg.y_coeffs.shape[1]}")
        for row in seg.y_coeffs:
            lines.append(" ".join(_fmt(v) for v in row))
        lines.append(f"w {seg.w_coeffs.shape[0]} {seg.w_coeffs.shape[1]}")
        for row in seg.w_coeffs:
            lines.append(" ".join(_fmt(v) for v in row))
    lines.append(f"samples {rec.table.shape[0]} {rec.table.shape[1]}")
    lines.append("columns " + " ".join(rec.columns))
    for row in rec.table:
        lines.append(" ".join(_fmt(v) for v in row))
    lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n")


class _LineReader:
    def __init__(self, text: str, path):
        self.lines = text.splitlines()
        self.pos = 0
        self.path = path

    def next(self) -> str:
        if self.pos >= len(self.lines):
            raise ParseError(f"{self.path}:{self.pos + 1}: unexpected end of file")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def expect(self, prefix: str) -> list[str]:
        line = self.next()
        parts = line.split()
        if not parts or parts[0] != prefix:
            raise ParseError(f"{self.path}:{self.pos}: expected {prefix!r}, got {line!r}")
        return parts[1:]


def load_trajectory(path: str | Path, fmap=None) -> TrajectoryRecord:
    """Parse a trajectory file; validates continuity and, given a flatness
    map, that the segment table reconstructs the sampled table."""
    path = Path(path)
    rd = _LineReader(path.read_text(), path)
    if rd.next() != FORMAT_TAG:
        raise ParseError(f"{path}: not a trajectory file")
    robot = rd.expect("robot")[0]
    problem = rd.expect("problem")[0]
    seed = int(rd.expect("seed")[0])
    cfg_hash = rd.expect("config_hash")[0]
    valid = rd.expect("valid")[0] == "1"
    cost = float(rd.expect("cost")[0])
    length = float(rd.expect("length")[0])
    plan_time_ms = float(rd.expect("plan_time_ms")[0])
    n, r = (int(v) for v in rd.expect("dims"))
    dims = FlatDims(n=n, r=r)
    dt_out = float(rd.expect("dt_out")[0])
    n_segs = int(rd.expect("segments")[0])
    segments = []
    for i in range(n_segs):
        head = rd.expect("segment")
        if int(head[0]) != i or head[1] != "T" or head[3] != "cost":
            raise ParseError(f"{path}:{rd.pos}: malformed segment header")
        T = float(head[2])
        seg_cost = float(head[4])
        z0 = np.array([float(v) for v in rd.expect("z0")])
        zf = np.array([float(v) for v in rd.expect("zf")])
        ny, dy = (int(v) for v in rd.expect("y"))
        y_rows = [np.array([float(v) for v in rd.next().split()]) for _ in range(ny)]
        nw, dw = (int(v) for v in rd.expect("w"))
        w_rows = [np.array([float(v) for v in rd.next().split()]) for _ in range(nw)]
        y_coeffs = np.vstack(y_rows)
        w_coeffs = np.vstack(w_rows)
        if y_coeffs.shape != (ny, dy) or w_coeffs.shape != (nw, dw):
            raise ParseError(f"{path}:{rd.pos}: coefficient table shape mismatch")
        segments.append(
            LocalFlatPath(
                z0=FlatState(dims, z0), zf=FlatState(dims, zf), T=T,
                y_coeffs=y_coeffs, w_coeffs=w_coeffs, cost=seg_cost,
            )
        )
    m, ncols = (int(v) for v in rd.expect("samples"))
    columns = tuple(rd.expect("columns"))
    if len(columns) != ncols:
        raise ParseError(f"{path}:{rd.pos}: column count mismatch")
    rows = np.array([[float(v) for v in rd.next().split()] for _ in range(m)])
    rows = rows.reshape(m, ncols) if m else np.zeros((0, ncols))
    if rd.next() != "end":
        raise ParseError(f"{path}:{rd.pos}: missing end marker")

    traj = PiecewiseTrajectory(tuple(segments))
    if segments and traj.continuity_error() > 1e-9:
        raise ValidationError(
            f"{path}: segments break continuity by {traj.continuity_error():.3e}"
        )
    rec = TrajectoryRecord(
        robot=robot, problem=problem, seed=seed, cfg_hash=cfg_hash, valid=valid,
        cost=cost, length=length, plan_time_ms=plan_time_ms, dims=dims,
        dt_out=dt_out, trajectory=traj, columns=columns, table=rows,
    )
    if fmap is not None and segments:
        from .planners import to_original_space

        table = to_original_space(traj, fmap, dt_out)
        stored_states = rows[:, 1 : 1 + table.state_rows.shape[1]]
        if table.state_rows.shape[0] != rows.shape[0] or not np.allclose(
            table.state_rows, stored_states, atol=1e-9
        ):
            raise ValidationError(f"{path}: segment table does not reconstruct samples")
    return rec


def make_record(problem: Problem, cfg: PlannerConfig, result, length: float, dt_out: float = 0.02) -> TrajectoryRecord:
    """Assemble the on-disk record for a finished planning run."""
    from .planners import to_original_space

    traj = result.trajectory if result.trajectory is not None else PiecewiseTrajectory(())
    table = to_original_space(traj, problem.fmap, dt_out)
    cols = ("t",) + problem.fmap.state_labels + problem.fmap.control_labels + ("singular",)
    data = np.column_stack(
        [table.times, table.state_rows, table.controls, table.singular.astype(np.float64)]
    ) if table.times.size else np.zeros((0, len(cols)))
    return TrajectoryRecord(
        robot=problem.fmap.name,
        problem=problem.name,
        seed=cfg.seed,
        cfg_hash=config_hash(cfg),
        valid=result.success,
        cost=traj.total_cost,
        length=length,
        plan_time_ms=result.plan_time_s * 1e3,
        dims=problem.fmap.dims,
        dt_out=dt_out,
        trajectory=traj,
        columns=cols,
        table=data,
    )
