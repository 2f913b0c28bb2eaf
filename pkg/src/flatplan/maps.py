"""Robot-specific conversions between flat output jets and states/controls.

Each supported robot family supplies the forward map (flat output jets to
original state), the control recovery map, and the flat-output projection,
both as scalar operations and as batched kernels used by path validation.
Gravity acts along -z for aerial robots (world frame, meters, seconds).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .lqmt import FlatDims, FlatState

GRAVITY = 9.81
V_EPS = 1e-6  # unicycle heading is undefined below this speed, m/s
CROSS_EPS = 1e-6
THRUST_EPS_FACTOR = 1e-6  # thrust singularity threshold as a fraction of m*g


class SpeedSingularity(ArithmeticError):
    """Unicycle heading undefined: planar speed below V_EPS."""


class ThrustSingularity(ArithmeticError):
    """Quadrotor attitude undefined: thrust vector magnitude near zero."""


class GimbalSingularity(ArithmeticError):
    """Quadrotor attitude undefined: yaw reference parallel to thrust."""


class SingularActuation(ArithmeticError):
    """Manipulator control gain matrix not invertible at this state."""


# ---------------------------------------------------------------------------
# Robot state containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UnicycleState:
    x: float
    y: float
    theta: float  # radians in (-pi, pi]


@dataclass(frozen=True)
class QuadrotorState:
    p: np.ndarray  # (3,) position
    Rmat: np.ndarray  # (3, 3) body-to-world rotation
    v: np.ndarray  # (3,) linear velocity
    omega: np.ndarray  # (3,) body-frame angular velocity


@dataclass(frozen=True)
class PlanarQuadrotorState:
    y: float
    z: float
    phi: float  # pitch about the world x axis
    ydot: float
    zdot: float
    phidot: float


@dataclass(frozen=True)
class ManipulatorState:
    q: np.ndarray
    qdot: np.ndarray


class DynamicsTerms(Protocol):
    """Supplies mass matrix M(q), bias vector C(q, qdot), and gain B(q)."""

    def __call__(self, q: np.ndarray, qdot: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]: ...


def identity_dynamics(q, qdot):
    d = q.size
    return np.eye(d), np.zeros(d), np.eye(d)


def diagonal_dynamics(masses):
    masses = np.asarray(masses, dtype=np.float64)

    def terms(q, qdot):
        d = q.size
        return np.diag(masses), np.zeros(d), np.eye(d)

    return terms


class TwoLinkArmDynamics:
    """Planar 2R arm with point masses at the link tips.

    Joint angles are measured from the +x axis (q1) and relative to link 1
    (q2); gravity, if any, acts along -y in the arm plane.
    """

    def __init__(self, m1=1.0, m2=1.0, l1=0.5, l2=0.4, gravity=0.0):
        self.m1, self.m2, self.l1, self.l2 = m1, m2, l1, l2
        self.gravity = gravity

    def __call__(self, q, qdot):
        m1, m2, l1, l2, g = self.m1, self.m2, self.l1, self.l2, self.gravity
        c2, s2 = math.cos(q[1]), math.sin(q[1])
        M = np.array(
            [
                [(m1 + m2) * l1**2 + m2 * l2**2 + 2 * m2 * l1 * l2 * c2,
                 m2 * l2**2 + m2 * l1 * l2 * c2],
                [m2 * l2**2 + m2 * l1 * l2 * c2, m2 * l2**2],
            ]
        )
        c1 = math.cos(q[0])
        c12 = math.cos(q[0] + q[1])
        C = np.array(
            [
                -m2 * l1 * l2 * s2 * (2 * qdot[0] * qdot[1] + qdot[1] ** 2)
                + g * ((m1 + m2) * l1 * c1 + m2 * l2 * c12),
                m2 * l1 * l2 * s2 * qdot[0] ** 2 + g * m2 * l2 * c12,
            ]
        )
        return M, C, np.eye(2)


# ---------------------------------------------------------------------------
# Scalar flatness maps
# ---------------------------------------------------------------------------


def _wrap_angle(theta):
    return np.arctan2(np.sin(theta), np.cos(theta))


def unicycle_alpha_beta(z: FlatState, w: np.ndarray, kappa: int = 0):
    """Recover (state, v, omega) from a planar flat state and acceleration."""
    xdot, ydot = z.block(1)
    speed2 = xdot * xdot + ydot * ydot
    if speed2 < V_EPS**2:
        raise SpeedSingularity(f"planar speed {math.sqrt(speed2):.3e} below {V_EPS}")
    x, y = z.block(0)
    theta = float(_wrap_angle(math.atan2(ydot, xdot) + kappa * math.pi))
    v = (-1.0) ** kappa * math.sqrt(speed2)
    omega = (xdot * w[1] - w[0] * ydot) / speed2
    return UnicycleState(float(x), float(y), theta), float(v), float(omega)


def _unit_with_derivatives(v, dv, ddv):
    """Unit vector of v with first and second time derivatives.

    Works on (3,) vectors or (3, B) batches (normalization along axis 0).
    """
    norm = np.sqrt(np.sum(v * v, axis=0))
    dn = np.sum(v * dv, axis=0) / norm
    ddn = (np.sum(dv * dv + v * ddv, axis=0) - dn * dn) / norm
    u = v / norm
    du = dv / norm - v * (dn / norm**2)
    ddu = ddv / norm - 2 * dv * (dn / norm**2) - v * (ddn / norm**2) + 2 * v * (dn**2 / norm**3)
    return u, du, ddu


def _cross(a, b):
    return np.stack(
        (
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        )
    )


def _rotation_chain(p_jets, psi_jet, mass, gravity):
    """Rotation columns (and two time derivatives) from position/yaw jets.

    Batched: p_jets has shape (5, 3, ...) levels (p, dp, ddp, d3p, d4p),
    psi_jet (3, ...).  Returns dict of column triples plus singular masks.
    """
    acc, jerk, snap = p_jets[2], p_jets[3], p_jets[4]
    ez = np.zeros_like(acc)
    ez[2] = 1.0
    thrust = mass * (acc + gravity * ez)
    dthrust = mass * jerk
    ddthrust = mass * snap
    fmag = np.sqrt(np.sum(thrust * thrust, axis=0))
    thrust_singular = fmag < THRUST_EPS_FACTOR * mass * gravity
    # Singular lanes get a placeholder axis so the chain stays finite; the
    # mask marks their outputs as meaningless.
    with np.errstate(invalid="ignore", divide="ignore"):
        rz, drz, ddrz = _unit_with_derivatives(
            np.where(thrust_singular, ez, thrust), dthrust, ddthrust
        )
    psi, dpsi, ddpsi = psi_jet[0], psi_jet[1], psi_jet[2]
    sp, cp = np.sin(psi), np.cos(psi)
    rpsi = np.stack((-sp, cp, np.zeros_like(sp)))
    drpsi = np.stack((-cp, -sp, np.zeros_like(sp))) * dpsi
    ddrpsi = np.stack((-cp, -sp, np.zeros_like(sp))) * ddpsi + np.stack(
        (sp, -cp, np.zeros_like(sp))
    ) * dpsi**2
    c = _cross(rpsi, rz)
    dc = _cross(drpsi, rz) + _cross(rpsi, drz)
    ddc = _cross(ddrpsi, rz) + 2 * _cross(drpsi, drz) + _cross(rpsi, ddrz)
    cnorm = np.sqrt(np.sum(c * c, axis=0))
    gimbal_singular = cnorm < CROSS_EPS
    with np.errstate(invalid="ignore", divide="ignore"):
        rx, drx, ddrx = _unit_with_derivatives(
            np.where(gimbal_singular, np.stack((np.ones_like(cnorm), 0 * cnorm, 0 * cnorm)), c),
            dc,
            ddc,
        )
    ry = _cross(rz, rx)
    dry = _cross(drz, rx) + _cross(rz, drx)
    ddry = _cross(ddrz, rx) + 2 * _cross(drz, drx) + _cross(rz, ddrx)
    return {
        "f": fmag,
        "rx": (rx, drx, ddrx),
        "ry": (ry, dry, ddry),
        "rz": (rz, drz, ddrz),
        "thrust_singular": thrust_singular,
        "gimbal_singular": gimbal_singular,
    }


def _body_rates(chain):
    (rx, drx, ddrx) = chain["rx"]
    (ry, dry, ddry) = chain["ry"]
    (rz, drz, ddrz) = chain["rz"]
    # omega = vee(R' dR); each component is one column dot product.
    omega = np.stack(
        (
            np.sum(rz * dry, axis=0),
            np.sum(rx * drz, axis=0),
            np.sum(ry * drx, axis=0),
        )
    )
    domega = np.stack(
        (
            np.sum(drz * dry + rz * ddry, axis=0),
            np.sum(drx * drz + rx * ddrz, axis=0),
            np.sum(dry * drx + ry * ddrx, axis=0),
        )
    )
    return omega, domega


def _as_jet_array(jets, levels, dim):
    jets = np.asarray(jets, dtype=np.float64)
    out = np.zeros((levels, dim))
    out[: jets.shape[0]] = jets
    return out


def quadrotor_alpha(p_jets, psi_jet=(0.0, 0.0), mass=1.0, gravity=GRAVITY) -> QuadrotorState:
    """Quadrotor state from position jets (p..p^(3)) and yaw jet (psi, dpsi)."""
    pj = _as_jet_array(p_jets, 5, 3)
    yj = _as_jet_array(np.asarray(psi_jet, dtype=np.float64).reshape(-1, 1), 3, 1)[:, 0]
    chain = _rotation_chain(pj, yj, mass, gravity)
    if bool(chain["thrust_singular"]):
        raise ThrustSingularity("thrust vector magnitude near zero")
    if bool(chain["gimbal_singular"]):
        raise GimbalSingularity("yaw reference parallel to thrust axis")
    R = np.column_stack((chain["rx"][0], chain["ry"][0], chain["rz"][0]))
    omega, _ = _body_rates(chain)
    return QuadrotorState(p=pj[0].copy(), Rmat=R, v=pj[1].copy(), omega=omega.reshape(3))


def quadrotor_beta(
    p_jets, psi_jet=(0.0, 0.0, 0.0), mass=1.0, inertia=(1.0, 1.0, 1.0), gravity=GRAVITY
):
    """Thrust magnitude and body torque from jets up to p^(4) and psi-ddot."""
    pj = _as_jet_array(p_jets, 5, 3)
    yj = _as_jet_array(np.asarray(psi_jet, dtype=np.float64).reshape(-1, 1), 3, 1)[:, 0]
    chain = _rotation_chain(pj, yj, mass, gravity)
    if bool(chain["thrust_singular"]):
        raise ThrustSingularity("thrust vector magnitude near zero")
    if bool(chain["gimbal_singular"]):
        raise GimbalSingularity("yaw reference parallel to thrust axis")
    omega, domega = _body_rates(chain)
    J = np.asarray(inertia, dtype=np.float64)
    tau = J * domega.reshape(3) + np.cross(omega.reshape(3), J * omega.reshape(3))
    return float(chain["f"]), tau


def planar_quadrotor_alpha_beta(y_jets, mass, inertia, arm_length, gravity=GRAVITY):
    """Planar quadrotor state and motor thrusts from output jets.

    y_jets stacks (y, z) and derivatives up to 4th order, shape (5, 2).
    """
    j = _as_jet_array(y_jets, 5, 2)
    a, b = -j[2, 0], j[2, 1] + gravity
    da, db = -j[3, 0], j[3, 1]
    dda, ddb = -j[4, 0], j[4, 1]
    s2 = a * a + b * b
    if math.sqrt(s2) < THRUST_EPS_FACTOR * gravity:
        raise ThrustSingularity("total thrust near zero")
    phi = math.atan2(a, b)
    phidot = (da * b - a * db) / s2
    phiddot = (dda * b - a * ddb) / s2 - (da * b - a * db) * 2 * (a * da + b * db) / s2**2
    f = mass * math.sqrt(s2)
    tau = inertia * phiddot
    f1 = (f + tau / arm_length) / 2.0
    f2 = (f - tau / arm_length) / 2.0
    state = PlanarQuadrotorState(
        y=float(j[0, 0]), z=float(j[0, 1]), phi=phi,
        ydot=float(j[1, 0]), zdot=float(j[1, 1]), phidot=phidot,
    )
    return state, float(f1), float(f2)


def manipulator_alpha_beta(z: FlatState, w: np.ndarray, dyn: DynamicsTerms):
    """Joint state and torques for a fully actuated arm (inverse dynamics)."""
    q, qdot = z.block(0).copy(), z.block(1).copy()
    M, C, B = dyn(q, qdot)
    try:
        u = np.linalg.solve(B, M @ np.asarray(w, dtype=np.float64) + C)
    except np.linalg.LinAlgError as exc:
        raise SingularActuation("control gain matrix not invertible") from exc
    return ManipulatorState(q=q, qdot=qdot), u


# ---------------------------------------------------------------------------
# Batched evaluation and limits
# ---------------------------------------------------------------------------


@dataclass
class BatchStates:
    """Vectorized recovery results for a batch of flat samples."""

    state_rows: np.ndarray  # (B, len(state_labels))
    controls: np.ndarray  # (B, len(control_labels))
    fk_input: np.ndarray  # (B, *) whatever the robot geometry consumes
    singular: np.ndarray  # (B,) True where the conversion is undefined


class StateLimits(Protocol):
    def check_batch(self, bs: BatchStates) -> np.ndarray: ...


@dataclass(frozen=True)
class UnicycleLimits:
    v_max: float = math.inf
    omega_max: float = math.inf

    def check_batch(self, bs: BatchStates) -> np.ndarray:
        v, omega = bs.controls[:, 0], bs.controls[:, 1]
        return (np.abs(v) <= self.v_max) & (np.abs(omega) <= self.omega_max)


@dataclass(frozen=True)
class PlanarQuadrotorLimits:
    f_min: float = 0.0
    f_max: float = math.inf

    def check_batch(self, bs: BatchStates) -> np.ndarray:
        f1, f2 = bs.controls[:, 0], bs.controls[:, 1]
        return (f1 >= self.f_min) & (f1 <= self.f_max) & (f2 >= self.f_min) & (f2 <= self.f_max)


@dataclass(frozen=True)
class QuadrotorLimits:
    v_max: float = math.inf
    omega_max: float = math.inf
    f_max: float = math.inf
    tau_max: float = math.inf

    def check_batch(self, bs: BatchStates) -> np.ndarray:
        v = bs.state_rows[:, 3:6]
        omega = bs.state_rows[:, 15:18]
        f = bs.controls[:, 0]
        tau = bs.controls[:, 1:4]
        ok = np.linalg.norm(v, axis=1) <= self.v_max
        ok &= np.linalg.norm(omega, axis=1) <= self.omega_max
        ok &= (f >= 0.0) & (f <= self.f_max)
        ok &= np.linalg.norm(tau, axis=1) <= self.tau_max
        return ok


@dataclass(frozen=True)
class ManipulatorLimits:
    tau_max: float = math.inf

    def check_batch(self, bs: BatchStates) -> np.ndarray:
        return np.max(np.abs(bs.controls), axis=1) <= self.tau_max


@dataclass(frozen=True)
class FlatnessMap:
    """Bundle of recovery maps and metadata for one robot family."""

    name: str
    dims: FlatDims
    jet_order: int
    state_labels: tuple[str, ...]
    control_labels: tuple[str, ...]
    scalar_eval: Callable  # jets (order+1, n) -> (state obj, state_row, controls)
    batched_eval: Callable  # jets (order+1, n, B) -> BatchStates
    flat_output_of: Callable  # state obj -> y array
    limits: object | None = None
    ode: Callable | None = None  # (state_row, controls) -> d/dt state_row

    def alpha(self, jets):
        """Original state object from output jets."""
        return self.scalar_eval(jets)[0]

    def beta(self, jets):
        """Control vector from output jets."""
        return self.scalar_eval(jets)[2]

    def h(self, x) -> np.ndarray:
        """Flat output of an original state."""
        return self.flat_output_of(x)

    def state_limit_check(self, state_row, controls) -> bool:
        if self.limits is None:
            return True
        bs = BatchStates(
            state_rows=np.atleast_2d(state_row),
            controls=np.atleast_2d(controls),
            fk_input=np.zeros((1, 1)),
            singular=np.zeros(1, dtype=bool),
        )
        return bool(self.limits.check_batch(bs)[0])

    def batch_eval(self, jets) -> BatchStates:
        return self.batched_eval(jets)


def unicycle_map(kappa: int = 0, limits: UnicycleLimits | None = None) -> FlatnessMap:
    def scalar_eval(jets):
        j = np.asarray(jets, dtype=np.float64)
        z = FlatState(FlatDims(n=2, r=2), j[:2].reshape(-1))
        state, v, omega = unicycle_alpha_beta(z, j[2], kappa)
        row = np.array([state.x, state.y, state.theta])
        return state, row, np.array([v, omega])

    def batched_eval(jets):
        pos, vel, acc = jets[0], jets[1], jets[2]
        speed2 = vel[0] ** 2 + vel[1] ** 2
        singular = speed2 < V_EPS**2
        safe = np.where(singular, 1.0, speed2)
        theta = _wrap_angle(np.arctan2(vel[1], vel[0]) + kappa * math.pi)
        v = (-1.0) ** kappa * np.sqrt(speed2)
        omega = (vel[0] * acc[1] - acc[0] * vel[1]) / safe
        rows = np.stack((pos[0], pos[1], theta), axis=1)
        controls = np.stack((v, omega), axis=1)
        fk_input = pos.T.copy()
        return BatchStates(rows, controls, fk_input, singular)

    return FlatnessMap(
        name="unicycle",
        dims=FlatDims(n=2, r=2),
        jet_order=2,
        state_labels=("x", "y", "theta"),
        control_labels=("v", "omega"),
        scalar_eval=scalar_eval,
        batched_eval=batched_eval,
        flat_output_of=lambda x: np.array([x.x, x.y]),
        limits=limits,
        ode=_unicycle_ode,
    )


def planar_quadrotor_map(
    mass=0.034,
    inertia=1e-4,
    arm_length=0.1,
    gravity=GRAVITY,
    limits: PlanarQuadrotorLimits | None = None,
) -> FlatnessMap:
    def scalar_eval(jets):
        j = _as_jet_array(jets, 5, 2)
        state, f1, f2 = planar_quadrotor_alpha_beta(j, mass, inertia, arm_length, gravity)
        row = np.array([state.y, state.z, state.phi, state.ydot, state.zdot, state.phidot])
        return state, row, np.array([f1, f2])

    def batched_eval(jets):
        B = jets.shape[2]
        j = np.zeros((5, 2, B))
        j[: jets.shape[0]] = jets
        a, b = -j[2, 0], j[2, 1] + gravity
        da, db = -j[3, 0], j[3, 1]
        dda, ddb = -j[4, 0], j[4, 1]
        s2 = a * a + b * b
        singular = np.sqrt(s2) < THRUST_EPS_FACTOR * gravity
        safe = np.where(singular, 1.0, s2)
        phi = np.arctan2(a, b)
        phidot = (da * b - a * db) / safe
        phiddot = (dda * b - a * ddb) / safe - (da * b - a * db) * 2 * (a * da + b * db) / safe**2
        f = mass * np.sqrt(s2)
        tau = inertia * phiddot
        f1 = (f + tau / arm_length) / 2.0
        f2 = (f - tau / arm_length) / 2.0
        rows = np.stack((j[0, 0], j[0, 1], phi, j[1, 0], j[1, 1], phidot), axis=1)
        controls = np.stack((f1, f2), axis=1)
        fk_input = j[0].T.copy()  # (B, 2) positions in the y-z plane
        return BatchStates(rows, controls, fk_input, singular)

    ode = _make_planar_quadrotor_ode(mass, inertia, arm_length, gravity)
    return FlatnessMap(
        name="planar_quadrotor",
        dims=FlatDims(n=2, r=2),
        jet_order=4,
        state_labels=("y", "z", "phi", "ydot", "zdot", "phidot"),
        control_labels=("f1", "f2"),
        scalar_eval=scalar_eval,
        batched_eval=batched_eval,
        flat_output_of=lambda x: np.array([x.y, x.z]),
        limits=limits,
        ode=ode,
    )


def quadrotor_map(
    mass=1.0,
    inertia=(0.1, 0.1, 0.2),
    gravity=GRAVITY,
    order: int = 2,
    limits: QuadrotorLimits | None = None,
) -> FlatnessMap:
    """3D quadrotor planning on position outputs with yaw held at zero.

    order is the pseudo-control derivative level used for planning (2 by
    default; 4 plans directly on snap).  Control recovery always uses jets
    up to 4th order taken from the local polynomial.
    """
    J = np.asarray(inertia, dtype=np.float64)

    def scalar_eval(jets):
        j = _as_jet_array(jets, 5, 3)
        state = quadrotor_alpha(j[:4], (0.0, 0.0), mass, gravity)
        f, tau = quadrotor_beta(j, (0.0, 0.0, 0.0), mass, J, gravity)
        row = np.concatenate((state.p, state.v, state.Rmat.reshape(-1), state.omega))
        return state, row, np.concatenate(([f], tau))

    def batched_eval(jets):
        B = jets.shape[2]
        j = np.zeros((5, 3, B))
        j[: jets.shape[0]] = jets
        psi = np.zeros((3, B))
        chain = _rotation_chain(j, psi, mass, gravity)
        singular = chain["thrust_singular"] | chain["gimbal_singular"]
        omega, domega = _body_rates(chain)
        tau = J[:, None] * domega + _cross(omega, J[:, None] * omega)
        R = np.stack((chain["rx"][0], chain["ry"][0], chain["rz"][0]), axis=1)  # (3 row, 3 col, B)
        rows = np.concatenate((j[0], j[1], R.reshape(9, B), omega)).T
        controls = np.concatenate((chain["f"][None], tau)).T
        fk_input = j[0].T.copy()
        return BatchStates(rows, controls, fk_input, singular)

    ode = _make_quadrotor_ode(mass, J, gravity)
    return FlatnessMap(
        name="quadrotor",
        dims=FlatDims(n=3, r=order),
        jet_order=4,
        state_labels=(
            "px", "py", "pz", "vx", "vy", "vz",
            "r11", "r12", "r13", "r21", "r22", "r23", "r31", "r32", "r33",
            "wx", "wy", "wz",
        ),
        control_labels=("f", "taux", "tauy", "tauz"),
        scalar_eval=scalar_eval,
        batched_eval=batched_eval,
        flat_output_of=lambda x: x.p.copy(),
        limits=limits,
        ode=ode,
    )


def manipulator_map(
    dyn: DynamicsTerms, joints: int, limits: ManipulatorLimits | None = None
) -> FlatnessMap:
    def scalar_eval(jets):
        j = np.asarray(jets, dtype=np.float64)
        z = FlatState(FlatDims(n=joints, r=2), j[:2].reshape(-1))
        state, u = manipulator_alpha_beta(z, j[2], dyn)
        return state, np.concatenate((state.q, state.qdot)), u

    def batched_eval(jets):
        B = jets.shape[2]
        rows = np.empty((B, 2 * joints))
        controls = np.empty((B, joints))
        singular = np.zeros(B, dtype=bool)
        for b in range(B):
            q, qdot, qddot = jets[0, :, b], jets[1, :, b], jets[2, :, b]
            rows[b] = np.concatenate((q, qdot))
            try:
                M, C, Bm = dyn(q, qdot)
                controls[b] = np.linalg.solve(Bm, M @ qddot + C)
            except np.linalg.LinAlgError:
                singular[b] = True
                controls[b] = 0.0
        fk_input = jets[0].T.copy()
        return BatchStates(rows, controls, fk_input, singular)

    def ode(row, u):
        q, qdot = row[:joints], row[joints:]
        M, C, Bm = dyn(q, qdot)
        qddot = np.linalg.solve(M, Bm @ u - C)
        return np.concatenate((qdot, qddot))

    return FlatnessMap(
        name="arm",
        dims=FlatDims(n=joints, r=2),
        jet_order=2,
        state_labels=tuple(f"q{i}" for i in range(joints)) + tuple(f"qdot{i}" for i in range(joints)),
        control_labels=tuple(f"tau{i}" for i in range(joints)),
        scalar_eval=scalar_eval,
        batched_eval=batched_eval,
        flat_output_of=lambda x: x.q.copy(),
        limits=limits,
        ode=ode,
    )


# ---------------------------------------------------------------------------
# Reference dynamics for round-trip validation
# ---------------------------------------------------------------------------


def _unicycle_ode(row, u):
    v, omega = u
    return np.array([v * math.cos(row[2]), v * math.sin(row[2]), omega])


def _make_planar_quadrotor_ode(mass, inertia, arm_length, gravity):
    def ode(row, u):
        f = u[0] + u[1]
        tau = arm_length * (u[0] - u[1])
        phi = row[2]
        return np.array(
            [
                row[3],
                row[4],
                row[5],
                -(f / mass) * math.sin(phi),
                (f / mass) * math.cos(phi) - gravity,
                tau / inertia,
            ]
        )

    return ode


def _make_quadrotor_ode(mass, J, gravity):
    def ode(row, u):
        v = row[3:6]
        R = row[6:15].reshape(3, 3)
        omega = row[15:18]
        f, tau = u[0], u[1:4]
        dv = (f / mass) * R[:, 2] - np.array([0.0, 0.0, gravity])
        Omega = np.array(
            [
                [0.0, -omega[2], omega[1]],
                [omega[2], 0.0, -omega[0]],
                [-omega[1], omega[0], 0.0],
            ]
        )
        dR = R @ Omega
        domega = (tau - np.cross(omega, J * omega)) / J
        return np.concatenate((v, dv, dR.reshape(-1), domega))

    return ode


def integrate_rk4(ode, row0, u_of_t, T, dt=1e-4):
    """Classic fixed-step RK4 on d/dt row = ode(row, u(t))."""
    row = np.asarray(row0, dtype=np.float64).copy()
    steps = max(1, int(math.ceil(T / dt)))
    h = T / steps
    t = 0.0
    for _ in range(steps):
        k1 = ode(row, u_of_t(t))
        k2 = ode(row + 0.5 * h * k1, u_of_t(t + 0.5 * h))
        k3 = ode(row + 0.5 * h * k2, u_of_t(t + 0.5 * h))
        k4 = ode(row + h * k3, u_of_t(t + h))
        row = row + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return row
