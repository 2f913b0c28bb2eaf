"""Sampling-based kinodynamic planners on the flat state space.

Four search variants share the same edge primitives: a bidirectional
tree planner whose edges are minimum-time boundary-value connections, a
sparse propagation planner with witness-based pruning (with and without
boundary-value shortcuts to the goal), and a plain propagation tree.
All of them validate candidate edges with the lane-batched checker and
are deterministic functions of (seed, config, problem).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .collision import (
    SphereSet,
    RobotGeometry,
    ValidationConfig,
    Verdict,
    state_verdict,
    validate_path,
)
from .lqmt import (
    MIN_DURATION,
    CostWeights,
    FlatDims,
    FlatState,
    LocalFlatPath,
    _r2_cost,
    _r2_min_time,
    bvp_cost,
    min_time_general,
    propagate,
    solve_bvp_fixed_time,
)
from .maps import FlatnessMap

VARIANTS = ("rrtconnect", "sst_bvp", "sst_simd", "dp_rrt")


@dataclass
class PlannerConfig:
    variant: str = "rrtconnect"
    seed: int = 0
    max_iters: int = 1_000_000
    time_cap_s: float = 60.0
    goal_bias: float = 0.05
    goal_tolerance: float = 0.25  # half-width used when a goal is a bare state
    time_weight: float = 1.0  # rho in the effort-plus-time cost
    neighbor_threshold: float = math.inf  # fixed edge-cost gate
    neighbor_schedule_scale: float | None = None  # enables the shrinking gate
    neighbor_prefilter: int = 16
    min_duration: float = MIN_DURATION
    bracket: tuple[float, float] = (MIN_DURATION, 60.0)
    prop_duration_range: tuple[float, float] = (0.05, 0.5)
    sst_witness_radius: float = 0.2
    sst_selection_radius: float = 0.5

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown planner variant {self.variant!r}")
        if self.max_iters < 1:
            raise ValueError("need at least one iteration")
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError("goal bias must be a probability")


def neighbor_threshold(cfg: PlannerConfig, dims: FlatDims, n_nodes: int) -> float:
    """Edge-cost gate; either fixed or the shrinking (log N / N)^(1/D) schedule."""
    if cfg.neighbor_schedule_scale is None:
        return cfg.neighbor_threshold
    D = (dims.r * dims.n + dims.r**2 * dims.n) / 2.0
    m = max(n_nodes, 2)
    return cfg.neighbor_schedule_scale * (math.log(m) / m) ** (1.0 / D)


@dataclass
class Problem:
    """A planning instance: robot, scene, start, goal box, and bounds."""

    name: str
    fmap: FlatnessMap
    robot: RobotGeometry
    obstacles: SphereSet
    start: FlatState
    goal_lower: np.ndarray
    goal_upper: np.ndarray
    flat_lower: np.ndarray
    flat_upper: np.ndarray
    w_lower: np.ndarray
    w_upper: np.ndarray
    resolution: float = 0.05
    lane_width: int = 8
    planner: PlannerConfig = field(default_factory=PlannerConfig)

    def validation_config(self, resolution_scale: float = 1.0) -> ValidationConfig:
        return ValidationConfig(
            resolution=self.resolution / resolution_scale,
            lane_width=self.lane_width,
            flat_lower=self.flat_lower,
            flat_upper=self.flat_upper,
            w_lower=self.w_lower,
            w_upper=self.w_upper,
        )

    @property
    def goal_center(self) -> np.ndarray:
        return 0.5 * (self.goal_lower + self.goal_upper)

    def in_goal(self, z: np.ndarray) -> bool:
        return bool(np.all(z >= self.goal_lower) and np.all(z <= self.goal_upper))


@dataclass(frozen=True)
class PiecewiseTrajectory:
    """Chain of local flat paths with cumulative knot times."""

    segments: tuple[LocalFlatPath, ...]

    @property
    def knots(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum([s.T for s in self.segments])])

    @property
    def duration(self) -> float:
        return float(sum(s.T for s in self.segments))

    @property
    def total_cost(self) -> float:
        return float(sum(s.cost for s in self.segments))

    def continuity_error(self) -> float:
        err = 0.0
        for a, b in zip(self.segments[:-1], self.segments[1:]):
            err = max(err, float(np.max(np.abs(a.zf.data - b.z0.data))))
        return err

    def state_at(self, t: float) -> FlatState:
        if not self.segments:
            raise ValueError("empty trajectory has no states")
        knots = self.knots
        i = int(np.clip(np.searchsorted(knots, t, side="left") - 1, 0, len(self.segments) - 1))
        return self.segments[i].state_at(min(max(t - knots[i], 0.0), self.segments[i].T))


def flat_arc_length(traj: PiecewiseTrajectory, intervals_per_segment: int = 256) -> float:
    """Arc length of the flat output (position) curve."""
    total = 0.0
    for seg in traj.segments:
        ts = np.linspace(0.0, seg.T, intervals_per_segment + 1)
        vel = seg.jets(ts, 1)[1]
        speed = np.sqrt(np.sum(vel * vel, axis=0))
        total += float(np.trapezoid(speed, ts))
    return total


@dataclass
class PlanResult:
    trajectory: PiecewiseTrajectory | None
    success: bool
    iterations: int
    nodes: int
    cc_calls: int
    plan_time_s: float

    @property
    def cost(self) -> float:
        return self.trajectory.total_cost if self.trajectory else math.inf


class _Tree:
    """Append-only node store with parent links and incoming paths."""

    def __init__(self, root: np.ndarray):
        self.dim = root.size
        cap = 256
        self.states = np.empty((cap, self.dim))
        self.states[0] = root
        self.parent = [-1]
        self.paths: list[LocalFlatPath | None] = [None]
        self.cost = [0.0]
        self.alive = [True]
        self.active = [True]
        self.children = [0]
        self.count = 1

    def _grow(self):
        if self.count == self.states.shape[0]:
            bigger = np.empty((2 * self.states.shape[0], self.dim))
            bigger[: self.count] = self.states[: self.count]
            self.states = bigger

    def add(self, state: np.ndarray, parent: int, path: LocalFlatPath, cost: float) -> int:
        self._grow()
        idx = self.count
        self.states[idx] = state
        self.parent.append(parent)
        self.paths.append(path)
        self.cost.append(cost)
        self.alive.append(True)
        self.active.append(True)
        self.children.append(0)
        self.children[parent] += 1
        self.count += 1
        return idx

    def chain(self, idx: int) -> list[LocalFlatPath]:
        """Incoming paths from the root to node idx, in travel order."""
        out = []
        while idx != 0:
            out.append(self.paths[idx])
            idx = self.parent[idx]
        out.reverse()
        return out


class _Search:
    """Shared per-run machinery: RNG, validation, counters, deadlines."""

    def __init__(self, problem: Problem, cfg: PlannerConfig):
        self.problem = problem
        self.cfg = cfg
        self.rng = np.random.default_rng(np.random.PCG64(cfg.seed))
        self.vcfg = problem.validation_config()
        self.weights = CostWeights.identity(problem.fmap.dims.n, cfg.time_weight)
        self.cc_calls = 0
        self.iterations = 0
        self.nodes = 0
        self.deadline = time.perf_counter() + cfg.time_cap_s
        dims = problem.fmap.dims
        self.r2_fast = dims.r == 2 and self.weights.isotropic_scale is not None

    def validate(self, path: LocalFlatPath) -> Verdict:
        self.cc_calls += 1
        return validate_path(
            path, self.problem.fmap, self.problem.robot, self.problem.obstacles, self.vcfg
        )

    def out_of_time(self) -> bool:
        return time.perf_counter() > self.deadline

    def sample_flat(self) -> np.ndarray:
        return self.rng.uniform(self.problem.flat_lower, self.problem.flat_upper)

    def sample_goal(self) -> np.ndarray:
        return self.rng.uniform(self.problem.goal_lower, self.problem.goal_upper)

    def min_time_to(self, z0: FlatState, zf: FlatState) -> float:
        if self.r2_fast:
            from .lqmt import _r2_cost_terms

            c0, c1, c2 = _r2_cost_terms(z0, zf)
            return _r2_min_time(
                c0, c1, c2, self.weights.isotropic_scale, self.cfg.time_weight, self.cfg.min_duration
            )
        return max(min_time_general(z0, zf, self.weights, self.cfg.bracket).duration, self.cfg.min_duration)

    def select_parent(self, tree: _Tree, target: np.ndarray, selectable: np.ndarray):
        """Cheapest-connection parent: Euclidean prefilter, then exact edge cost.

        Returns (node index, optimal duration, edge cost) or None when no
        node is selectable.  Nodes above the cost gate are skipped unless
        the gate empties the candidate set, in which case the cheapest
        candidate is used anyway.
        """
        idxs = np.flatnonzero(selectable[: tree.count])
        if idxs.size == 0:
            return None
        states = tree.states[idxs]
        d2 = np.sum((states - target) ** 2, axis=1)
        k = min(self.cfg.neighbor_prefilter, idxs.size)
        if idxs.size > k:
            keep = np.argpartition(d2, k - 1)[:k]
            idxs, states = idxs[keep], states[keep]
        dims = self.problem.fmap.dims
        n = dims.n
        gate = neighbor_threshold(self.cfg, dims, tree.count)
        best = None
        fallback = None
        if self.r2_fast:
            c_eff = self.weights.isotropic_scale
            rho = self.cfg.time_weight
            dy = target[:n] - states[:, :n]
            vsum = states[:, n:] + target[n:]
            c0 = np.einsum("ij,ij->i", dy, dy)
            c1 = np.einsum("ij,ij->i", vsum, dy)
            v0, vf = states[:, n:], target[n:]
            c2 = np.einsum("ij,ij->i", v0, v0) + v0 @ vf + float(vf @ vf)
            for i in range(idxs.size):
                T = _r2_min_time(c0[i], c1[i], c2[i], c_eff, rho, self.cfg.min_duration)
                cost = _r2_cost(c0[i], c1[i], c2[i], c_eff, rho, T)
                entry = (cost, T, int(idxs[i]))
                if fallback is None or cost < fallback[0]:
                    fallback = entry
                if cost <= gate and (best is None or cost < best[0]):
                    best = entry
        else:
            zf = FlatState(dims, target)
            for i in range(idxs.size):
                z0 = FlatState(dims, states[i])
                T = self.min_time_to(z0, zf)
                cost = bvp_cost(z0, zf, T, self.weights)
                entry = (cost, T, int(idxs[i]))
                if fallback is None or cost < fallback[0]:
                    fallback = entry
                if cost <= gate and (best is None or cost < best[0]):
                    best = entry
        chosen = best if best is not None else fallback
        return (chosen[2], chosen[1], chosen[0])


def _plan_rrtconnect(search: _Search) -> PiecewiseTrajectory | None:
    problem, cfg, rng = search.problem, search.cfg, search.rng
    dims = problem.fmap.dims
    start = problem.start
    if problem.in_goal(start.data):
        return PiecewiseTrajectory(())
    # The goal tree lives in the time-reversed world: its states have odd
    # derivative blocks negated, so its forward-time edges map to valid
    # backward traversals in the final trajectory.
    goal_root = FlatState(dims, problem.goal_center).reversed()
    tree_s = _Tree(start.data.copy())
    tree_g = _Tree(goal_root.data.copy())

    def try_edge(z0: FlatState, zf: FlatState, T: float) -> LocalFlatPath | None:
        path = solve_bvp_fixed_time(z0, zf, T, search.weights)
        return path if search.validate(path).valid else None

    def finish(tree_start_idx, connect, tree_goal_idx) -> PiecewiseTrajectory:
        start_side = tree_s.chain(tree_start_idx)
        goal_side = [p.reversed() for p in reversed(tree_g.chain(tree_goal_idx))]
        segs = start_side + ([connect] if connect is not None else []) + goal_side
        search.nodes = tree_s.count + tree_g.count
        return PiecewiseTrajectory(tuple(segs))

    # Greedy first shot: one boundary-value segment start -> goal center.
    T0 = search.min_time_to(start, FlatState(dims, problem.goal_center))
    direct = try_edge(start, FlatState(dims, problem.goal_center), T0)
    if direct is not None:
        search.nodes = 2
        return PiecewiseTrajectory((direct,))

    a_is_start = True
    for it in range(cfg.max_iters):
        search.iterations = it + 1
        search.nodes = tree_s.count + tree_g.count
        if (it & 63) == 0 and search.out_of_time():
            break
        tree_a, tree_b = (tree_s, tree_g) if a_is_start else (tree_g, tree_s)
        was_start = a_is_start
        a_is_start = not a_is_start  # alternate regardless of outcome
        if rng.random() < cfg.goal_bias:
            target = search.sample_goal() if was_start else start.reversed().data
        else:
            target = search.sample_flat()
        sel = search.select_parent(tree_a, target, np.ones(tree_a.count, dtype=bool))
        if sel is None:
            continue
        idx_a, T_a, _ = sel
        z_new = FlatState(dims, target)
        path_a = try_edge(FlatState(dims, tree_a.states[idx_a]), z_new, T_a)
        if path_a is None:
            continue
        ia = tree_a.add(target, idx_a, path_a, tree_a.cost[idx_a] + path_a.cost)
        if was_start and problem.in_goal(target):
            search.nodes = tree_s.count + tree_g.count
            return PiecewiseTrajectory(tuple(tree_s.chain(ia)))
        # Connect attempt: the other tree reaches for the new node, which is
        # expressed in that tree's world by time reversal.
        target_b = z_new.reversed()
        selb = search.select_parent(tree_b, target_b.data, np.ones(tree_b.count, dtype=bool))
        if selb is None:
            continue
        idx_b, T_b, _ = selb
        path_b = try_edge(FlatState(dims, tree_b.states[idx_b]), target_b, T_b)
        if path_b is None:
            continue
        if was_start:
            # path_b runs in the goal world: node_b -> rev(z_new); forward it
            # becomes z_new -> rev(node_b), then the goal chain unwinds.
            ib = tree_b.add(target_b.data, idx_b, path_b, tree_b.cost[idx_b] + path_b.cost)
            return finish(ia, None, ib)
        ib = tree_b.add(target_b.data, idx_b, path_b, tree_b.cost[idx_b] + path_b.cost)
        return finish(ib, None, ia)
    search.nodes = tree_s.count + tree_g.count
    return None


def _plan_propagation(search: _Search) -> PiecewiseTrajectory | None:
    """Propagation-based variants: sparse-tree planner and plain tree."""
    problem, cfg, rng = search.problem, search.cfg, search.rng
    dims = problem.fmap.dims
    variant = cfg.variant
    if problem.in_goal(problem.start.data):
        return PiecewiseTrajectory(())
    tree = _Tree(problem.start.data.copy())
    use_witnesses = variant in ("sst_bvp", "sst_simd")
    wit_pos = np.empty((256, dims.size))
    wit_rep: list[int] = []
    wit_count = 0
    if use_witnesses:
        wit_pos[0] = problem.start.data
        wit_rep.append(0)
        wit_count = 1

    def witness_for(z: np.ndarray) -> int | None:
        nonlocal wit_pos, wit_count
        if wit_count == 0:
            return None
        d2 = np.sum((wit_pos[:wit_count] - z) ** 2, axis=1)
        j = int(np.argmin(d2))
        return j if d2[j] <= cfg.sst_witness_radius**2 else None

    def add_witness(z: np.ndarray, rep: int):
        nonlocal wit_pos, wit_count
        if wit_count == wit_pos.shape[0]:
            bigger = np.empty((2 * wit_pos.shape[0], dims.size))
            bigger[:wit_count] = wit_pos[:wit_count]
            wit_pos = bigger
        wit_pos[wit_count] = z
        wit_rep.append(rep)
        wit_count += 1

    def prune_from(idx: int):
        while idx != 0 and not tree.active[idx] and tree.children[idx] == 0:
            tree.alive[idx] = False
            parent = tree.parent[idx]
            tree.children[parent] -= 1
            idx = parent

    for it in range(cfg.max_iters):
        search.iterations = it + 1
        search.nodes = tree.count
        if (it & 63) == 0 and search.out_of_time():
            break
        if rng.random() < cfg.goal_bias:
            z_rand = search.sample_goal()
        else:
            z_rand = search.sample_flat()
        alive = np.array(tree.alive[: tree.count])
        if use_witnesses:
            selectable = alive & np.array(tree.active[: tree.count])
        else:
            selectable = alive
        idxs = np.flatnonzero(selectable)
        states = tree.states[idxs]
        d2 = np.sum((states - z_rand) ** 2, axis=1)
        if use_witnesses:
            near = d2 <= cfg.sst_selection_radius**2
            if near.any():
                cand = idxs[near]
                sel = int(cand[np.argmin(np.array(tree.cost)[cand])])
            else:
                sel = int(idxs[np.argmin(d2)])
        else:
            sel = int(idxs[np.argmin(d2)])
        w0 = rng.uniform(problem.w_lower, problem.w_upper)
        T = rng.uniform(*cfg.prop_duration_range)
        z_sel = FlatState(dims, tree.states[sel])
        path = propagate(z_sel, w0, T, search.weights)
        if not search.validate(path).valid:
            continue
        z_new = path.zf.data
        cost_new = tree.cost[sel] + path.cost
        if use_witnesses:
            j = witness_for(z_new)
            if j is None:
                idx = tree.add(z_new, sel, path, cost_new)
                add_witness(z_new, idx)
            else:
                rep = wit_rep[j]
                if tree.alive[rep] and tree.cost[rep] <= cost_new:
                    continue  # dominated: discard the propagation
                idx = tree.add(z_new, sel, path, cost_new)
                wit_rep[j] = idx
                if tree.alive[rep]:
                    tree.active[rep] = False
                    prune_from(rep)
        else:
            idx = tree.add(z_new, sel, path, cost_new)
        search.nodes = tree.count
        if problem.in_goal(z_new):
            return PiecewiseTrajectory(tuple(tree.chain(idx)))
        if variant == "sst_bvp":
            goal_state = FlatState(dims, problem.goal_center)
            T_g = search.min_time_to(FlatState(dims, z_new), goal_state)
            shortcut = solve_bvp_fixed_time(FlatState(dims, z_new), goal_state, T_g, search.weights)
            if search.validate(shortcut).valid:
                return PiecewiseTrajectory(tuple(tree.chain(idx) + [shortcut]))
    return None


def plan(problem: Problem, cfg: PlannerConfig | None = None) -> PlanResult:
    """Run the configured planner and return the trajectory plus run metrics."""
    cfg = cfg if cfg is not None else problem.planner
    search = _Search(problem, cfg)
    t0 = time.perf_counter()
    if cfg.variant == "rrtconnect":
        traj = _plan_rrtconnect(search)
    else:
        traj = _plan_propagation(search)
    elapsed = time.perf_counter() - t0
    return PlanResult(
        trajectory=traj,
        success=traj is not None,
        iterations=search.iterations,
        nodes=search.nodes,
        cc_calls=search.cc_calls,
        plan_time_s=elapsed,
    )


def postprocess(
    problem: Problem,
    traj: PiecewiseTrajectory,
    cfg: PlannerConfig | None = None,
    counter: list | None = None,
) -> PiecewiseTrajectory:
    """Bypass intermediate segments with direct boundary-value shortcuts.

    Scans span endpoints outside-in; a shortcut replaces the span only if
    it validates, which also guarantees it does not increase total cost.
    """
    cfg = cfg if cfg is not None else problem.planner
    search = _Search(problem, cfg)
    segs = list(traj.segments)
    i = 0
    while i < len(segs) - 1:
        replaced = False
        for j in range(len(segs) - 1, i, -1):
            z_a, z_b = segs[i].z0, segs[j].zf
            T = search.min_time_to(z_a, z_b)
            shortcut = solve_bvp_fixed_time(z_a, z_b, T, search.weights)
            span_cost = sum(s.cost for s in segs[i : j + 1])
            if shortcut.cost <= span_cost + 1e-9 and search.validate(shortcut).valid:
                segs[i : j + 1] = [shortcut]
                replaced = True
                break
        i += 1
    if counter is not None:
        counter.append(search.cc_calls)
    return PiecewiseTrajectory(tuple(segs))


@dataclass
class TrajectoryTable:
    """Uniform-in-time samples of the original-space trajectory."""

    times: np.ndarray
    state_rows: np.ndarray
    controls: np.ndarray
    singular: np.ndarray


def to_original_space(
    traj: PiecewiseTrajectory, fmap: FlatnessMap, dt_out: float
) -> TrajectoryTable:
    """Sample states and controls on a uniform grid (knots use the left segment)."""
    if dt_out <= 0:
        raise ValueError("output step must be positive")
    if not traj.segments:
        return TrajectoryTable(
            np.zeros(0),
            np.zeros((0, len(fmap.state_labels))),
            np.zeros((0, len(fmap.control_labels))),
            np.zeros(0, dtype=bool),
        )
    total = traj.duration
    times = np.arange(0.0, total + dt_out / 2, dt_out)
    if times[-1] < total - 1e-12:
        times = np.append(times, total)
    times[-1] = min(times[-1], total)
    knots = traj.knots
    seg_idx = np.clip(np.searchsorted(knots, times, side="left") - 1, 0, len(traj.segments) - 1)
    S, C = len(fmap.state_labels), len(fmap.control_labels)
    rows = np.empty((times.size, S))
    controls = np.empty((times.size, C))
    singular = np.zeros(times.size, dtype=bool)
    for i, seg in enumerate(traj.segments):
        mask = seg_idx == i
        if not mask.any():
            continue
        local = np.clip(times[mask] - knots[i], 0.0, seg.T)
        jets = seg.jets(local, fmap.jet_order)
        bs = fmap.batch_eval(jets)
        rows[mask] = bs.state_rows
        controls[mask] = bs.controls
        singular[mask] = bs.singular
    return TrajectoryTable(times, rows, controls, singular)
