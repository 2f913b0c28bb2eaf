"""Closed-form local paths for the chain-of-integrators flat-state system.

The flat state stacks a flat output and its first r-1 derivatives, so it
evolves as n decoupled integrator chains driven by a pseudo-control (the
r-th output derivative).  Everything here exploits that structure: free
drift is a per-dimension Taylor shift, the controllability Gramian is a
Kronecker product of a small r x r core with the inverse effort weight,
and the minimum effort-plus-time connection between two flat states is a
polynomial whose coefficients come from one r x r solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import NamedTuple

import numpy as np

MIN_DURATION = 1e-3  # clamp for degenerate minimum-time solves, seconds


class NonPositiveDuration(ValueError):
    """Raised when an operation requires a strictly positive duration."""


class SingularGramian(ArithmeticError):
    """Gramian core is numerically singular (duration below float scale)."""


class InvalidBracket(ValueError):
    """Minimum-time search bracket is empty or inverted."""


class OutOfDomain(ValueError):
    """Evaluation time lies outside a path's time domain."""


@dataclass(frozen=True)
class FlatDims:
    """Dimensions of the flat state space: n outputs, r derivative levels."""

    n: int
    r: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"flat output dimension must be >= 1, got {self.n}")
        if self.r < 1:
            raise ValueError(f"pseudo-control order must be >= 1, got {self.r}")

    @property
    def size(self) -> int:
        return self.r * self.n


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class FlatState:
    """Point in flat state space, blocked as (y, y', ..., y^(r-1))."""

    dims: FlatDims
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64).reshape(-1)
        if data.size != self.dims.size:
            raise ValueError(
                f"flat state needs {self.dims.size} entries, got {data.size}"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("flat state entries must be finite")
        object.__setattr__(self, "data", _readonly(data))

    @classmethod
    def from_blocks(cls, blocks) -> "FlatState":
        blocks = [np.atleast_1d(np.asarray(b, dtype=np.float64)) for b in blocks]
        n = blocks[0].size
        return cls(FlatDims(n=n, r=len(blocks)), np.concatenate(blocks))

    def block(self, k: int) -> np.ndarray:
        """k-th derivative block, k in [0, r)."""
        n = self.dims.n
        return self.data[k * n : (k + 1) * n]

    def blocks(self) -> np.ndarray:
        """All blocks as an (r, n) view."""
        return self.data.reshape(self.dims.r, self.dims.n)

    def reversed(self) -> "FlatState":
        """State seen under time reversal: odd derivative blocks negated."""
        signs = np.where(np.arange(self.dims.r)[:, None] % 2 == 0, 1.0, -1.0)
        return FlatState(self.dims, (self.blocks() * signs).reshape(-1))


@dataclass(frozen=True)
class CostWeights:
    """Weights of the effort-plus-time cost: integral of w' R w dt + rho T."""

    effort_weight: np.ndarray
    time_weight: float = 1.0

    def __post_init__(self):
        R = np.atleast_2d(np.asarray(self.effort_weight, dtype=np.float64))
        if R.shape[0] != R.shape[1]:
            raise ValueError("effort weight must be square")
        if not np.allclose(R, R.T, atol=1e-12):
            raise ValueError("effort weight must be symmetric")
        np.linalg.cholesky(R)  # raises LinAlgError unless positive definite
        if self.time_weight < 0:
            raise ValueError("time weight must be nonnegative")
        object.__setattr__(self, "effort_weight", _readonly(R))

    @classmethod
    def identity(cls, n: int, time_weight: float = 1.0) -> "CostWeights":
        return cls(np.eye(n), time_weight)

    @cached_property
    def isotropic_scale(self) -> float | None:
        """Scalar c when the effort weight is exactly c * I, else None."""
        R = self.effort_weight
        c = R[0, 0]
        return c if np.array_equal(R, c * np.eye(R.shape[0])) else None


class MinTimeResult(NamedTuple):
    duration: float
    on_boundary: bool


@lru_cache(maxsize=None)
def _factorials(r: int) -> np.ndarray:
    return np.array([math.factorial(k) for k in range(r)], dtype=np.float64)


@lru_cache(maxsize=None)
def _hilbert_inverse(r: int) -> np.ndarray:
    """Exact inverse of the r x r Hilbert matrix H[p, q] = 1/(p + q + 1)."""
    inv = np.empty((r, r))
    for i in range(1, r + 1):
        for j in range(1, r + 1):
            inv[i - 1, j - 1] = (
                (-1) ** (i + j)
                * (i + j - 1)
                * math.comb(r + i - 1, r - j)
                * math.comb(r + j - 1, r - i)
                * math.comb(i + j - 2, i - 1) ** 2
            )
    return inv


def gramian_core(r: int, T: float) -> np.ndarray:
    """Scalar r x r core H with blocks H[i, j] * R^-1 forming the Gramian.

    H[i, j] = T^(2r-1-i-j) / ((r-1-i)! (r-1-j)! (2r-1-i-j)), indexed from
    the output block.
    """
    if T <= 0:
        raise NonPositiveDuration(f"duration must be positive, got {T}")
    fact = _factorials(r)
    p = np.arange(r - 1, -1, -1)  # p = r-1-i
    scale = T**p / fact[p]
    hilb = 1.0 / (p[:, None] + p[None, :] + 1.0)
    return T * scale[:, None] * hilb * scale[None, :]


def gramian_core_inverse(r: int, T: float) -> np.ndarray:
    """Inverse of the scalar core, via the exact scaled Hilbert inverse."""
    if T <= 0:
        raise NonPositiveDuration(f"duration must be positive, got {T}")
    fact = _factorials(r)
    p = np.arange(r - 1, -1, -1)
    with np.errstate(over="raise", divide="raise"):
        try:
            scale = fact[p] / T**p
            out = (scale[:, None] * _hilbert_inverse(r)[np.ix_(p, p)] * scale[None, :]) / T
        except FloatingPointError as exc:
            raise SingularGramian(f"core inversion failed at T={T}") from exc
    if not np.all(np.isfinite(out)):
        raise SingularGramian(f"core inversion failed at T={T}")
    return out


@dataclass(frozen=True)
class Gramian:
    """Controllability Gramian over horizon T, stored in factored form."""

    dims: FlatDims
    T: float
    core: np.ndarray  # (r, r) scalar grid
    effort_weight_inv: np.ndarray  # (n, n)

    def as_matrix(self) -> np.ndarray:
        """Dense (rn, rn) matrix, for tests and small-scale use."""
        return np.kron(self.core, self.effort_weight_inv)


def gramian(dims: FlatDims, weights: CostWeights, T: float) -> Gramian:
    core = gramian_core(dims.r, T)
    R_inv = np.linalg.inv(weights.effort_weight)
    return Gramian(dims, T, _readonly(core), _readonly(R_inv))


def phi(z0: FlatState, t: float) -> FlatState:
    """Free drift of the flat state: per-dimension Taylor shift by t."""
    r, n = z0.dims.r, z0.dims.n
    blocks = z0.blocks()
    out = np.zeros((r, n))
    for k in range(r):
        coeff = 1.0
        for j in range(r - k):
            out[k] += blocks[k + j] * coeff
            coeff *= t / (j + 1)
    return FlatState(z0.dims, out.reshape(-1))


def _drift_blocks(blocks: np.ndarray, t: float) -> np.ndarray:
    """phi on raw (r, n) blocks, without FlatState wrapping."""
    r, n = blocks.shape
    out = np.zeros((r, n))
    for k in range(r):
        coeff = 1.0
        for j in range(r - k):
            out[k] += blocks[k + j] * coeff
            coeff *= t / (j + 1)
    return out


def displacement(z0: FlatState, zf: FlatState, T: float) -> np.ndarray:
    """Endpoint displacement zf - drift(z0, T) as (r, n) blocks."""
    return zf.blocks() - _drift_blocks(z0.blocks(), T)


@dataclass(frozen=True)
class LocalFlatPath:
    """One closed-form polynomial segment in flat space.

    y_coeffs holds monomial coefficients per output dimension (ascending
    powers, shape (n, 2r)); w_coeffs likewise for the pseudo-control
    (shape (n, r)).  The pseudo-control is the r-th derivative of the
    output polynomial.
    """

    z0: FlatState
    zf: FlatState
    T: float
    y_coeffs: np.ndarray
    w_coeffs: np.ndarray
    cost: float

    def __post_init__(self):
        if self.T <= 0:
            raise NonPositiveDuration(f"duration must be positive, got {self.T}")
        r, n = self.z0.dims.r, self.z0.dims.n
        y = np.zeros((n, 2 * r))
        yc = np.atleast_2d(np.asarray(self.y_coeffs, dtype=np.float64))
        y[:, : yc.shape[1]] = yc
        w = np.zeros((n, r))
        wc = np.atleast_2d(np.asarray(self.w_coeffs, dtype=np.float64))
        w[:, : wc.shape[1]] = wc
        object.__setattr__(self, "y_coeffs", _readonly(y))
        object.__setattr__(self, "w_coeffs", _readonly(w))

    @property
    def dims(self) -> FlatDims:
        return self.z0.dims

    @cached_property
    def _y_derivative_coeffs(self) -> list[np.ndarray]:
        """Monomial coefficients of y and its first r-1 derivatives."""
        r = self.dims.r
        tables = [self.y_coeffs]
        for _ in range(1, r):
            prev = tables[-1]
            deg = prev.shape[1]
            tables.append(prev[:, 1:] * np.arange(1, deg))
        return tables

    def jets(self, ts: np.ndarray, order: int) -> np.ndarray:
        """Output jets y, y', ..., y^(order) at times ts, shape (order+1, n, len(ts)).

        Orders below r come from the output polynomial, order r from the
        pseudo-control polynomial, and anything higher from its derivatives
        (exact within the segment).
        """
        from numpy.polynomial import polynomial as P

        ts = np.atleast_1d(np.asarray(ts, dtype=np.float64))
        r, n = self.dims.r, self.dims.n
        out = np.empty((order + 1, n, ts.size))
        for k, table in enumerate(self._y_derivative_coeffs[: order + 1]):
            out[k] = P.polyval(ts, table.T)
        if order >= r:
            table = self.w_coeffs
            for k in range(r, order + 1):
                out[k] = P.polyval(ts, table.T)
                deg = table.shape[1]
                table = table[:, 1:] * np.arange(1, deg) if deg > 1 else np.zeros((n, 1))
        return out

    def state_at(self, t: float) -> FlatState:
        j = self.jets(np.array([t]), self.dims.r - 1)
        return FlatState(self.dims, j[:, :, 0].reshape(-1))

    def reversed(self) -> "LocalFlatPath":
        """Same geometric segment traced backward in time.

        The reversed output polynomial is y(T - t); endpoints swap and get
        their odd derivative blocks negated.  Cost is invariant.
        """
        T = self.T
        n, deg = self.y_coeffs.shape
        # Monomial coefficients of p(T - t) via binomial expansion.
        rev = np.zeros_like(self.y_coeffs)
        for k in range(deg):
            for m in range(k + 1):
                rev[:, m] += self.y_coeffs[:, k] * math.comb(k, m) * T ** (k - m) * (-1.0) ** m
        r = self.dims.r
        w_rev = rev[:, r:].copy()
        fall = np.array(
            [math.factorial(m + r) / math.factorial(m) for m in range(w_rev.shape[1])]
        )
        w_rev *= fall
        return LocalFlatPath(
            z0=self.zf.reversed(),
            zf=self.z0.reversed(),
            T=T,
            y_coeffs=rev,
            w_coeffs=w_rev,
            cost=self.cost,
        )


def eval_path(path: LocalFlatPath, t: float) -> tuple[FlatState, np.ndarray]:
    """Flat state and pseudo-control along a path; t clamped to [0, T]."""
    if t < -1e-12 or t > path.T + 1e-12:
        raise OutOfDomain(f"t={t} outside [0, {path.T}]")
    t = min(max(t, 0.0), path.T)
    j = path.jets(np.array([t]), path.dims.r)
    state = FlatState(path.dims, j[: path.dims.r, :, 0].reshape(-1))
    return state, j[path.dims.r, :, 0].copy()


def _bvp_polynomials(
    d_blocks: np.ndarray, z0_blocks: np.ndarray, T: float
) -> tuple[np.ndarray, np.ndarray]:
    """Monomial tables (y_coeffs, w_coeffs) of the optimal connection."""
    r, n = d_blocks.shape
    core_inv = gramian_core_inverse(r, T)
    E = core_inv @ d_blocks  # (r, n); effort weight cancels in the control
    # w(t) = sum_i (T-t)^(r-1-i)/(r-1-i)! E[i], expanded into monomials.
    W = np.zeros((r, r))
    for i in range(r):
        p = r - 1 - i
        for m in range(p + 1):
            W[m, i] = (-1.0) ** m * T ** (p - m) / (
                math.factorial(m) * math.factorial(p - m)
            )
    w_mono = W @ E  # (r, n), row m = coefficient of t^m
    y = np.zeros((n, 2 * r))
    for i in range(r):
        y[:, i] = z0_blocks[i] / math.factorial(i)
    for m in range(r):
        y[:, r + m] = w_mono[m] * (math.factorial(m) / math.factorial(m + r))
    return y, w_mono.T


def bvp_cost(z0: FlatState, zf: FlatState, T: float, weights: CostWeights) -> float:
    """Optimal cost of connecting z0 to zf in exactly T seconds."""
    d = displacement(z0, zf, T)
    core_inv = gramian_core_inverse(z0.dims.r, T)
    quad = float(np.sum(core_inv * (d @ weights.effort_weight @ d.T)))
    return quad + weights.time_weight * T


def solve_bvp_fixed_time(
    z0: FlatState, zf: FlatState, T: float, weights: CostWeights
) -> LocalFlatPath:
    """Minimum-effort polynomial connection from z0 to zf over [0, T]."""
    if z0.dims != zf.dims:
        raise ValueError("endpoint dimensions differ")
    if T <= 0:
        raise NonPositiveDuration(f"duration must be positive, got {T}")
    d = displacement(z0, zf, T)
    y, w = _bvp_polynomials(d, z0.blocks(), T)
    core_inv = gramian_core_inverse(z0.dims.r, T)
    quad = float(np.sum(core_inv * (d @ weights.effort_weight @ d.T)))
    return LocalFlatPath(z0, zf, T, y, w, quad + weights.time_weight * T)


def propagate(
    z0: FlatState, w0: np.ndarray, T: float, weights: CostWeights
) -> LocalFlatPath:
    """Drift z0 under a constant pseudo-control w0 for T seconds."""
    if T <= 0:
        raise NonPositiveDuration(f"duration must be positive, got {T}")
    w0 = np.atleast_1d(np.asarray(w0, dtype=np.float64))
    r, n = z0.dims.r, z0.dims.n
    if w0.size != n:
        raise ValueError(f"pseudo-control needs {n} entries, got {w0.size}")
    if not np.all(np.isfinite(w0)):
        raise ValueError("pseudo-control must be finite")
    y = np.zeros((n, 2 * r))
    for i in range(r):
        y[:, i] = z0.block(i) / math.factorial(i)
    y[:, r] = w0 / math.factorial(r)
    cost = float(w0 @ weights.effort_weight @ w0) * T + weights.time_weight * T
    path = LocalFlatPath(z0, z0, T, y, w0.reshape(n, 1), cost)
    zf = path.state_at(T)
    return LocalFlatPath(z0, zf, T, y, w0.reshape(n, 1), cost)


# ---------------------------------------------------------------------------
# Minimum-time solves
# ---------------------------------------------------------------------------


def _cubic_one_real_root(b: float, c: float, d: float) -> float:
    """One real root of x^3 + b x^2 + c x + d = 0 (Cardano / trigonometric)."""
    p = c - b * b / 3.0
    q = 2.0 * b**3 / 27.0 - b * c / 3.0 + d
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if disc >= 0:
        s = math.sqrt(disc)
        u = math.copysign(abs(-q / 2.0 + s) ** (1.0 / 3.0), -q / 2.0 + s)
        v = math.copysign(abs(-q / 2.0 - s) ** (1.0 / 3.0), -q / 2.0 - s)
        t = u + v
    else:
        rho = math.sqrt(-(p**3) / 27.0)
        theta = math.acos(max(-1.0, min(1.0, -q / (2.0 * rho))))
        t = 2.0 * (-p / 3.0) ** 0.5 * math.cos(theta / 3.0)
    return t - b / 3.0


def depressed_quartic_real_roots(p: float, q: float, s: float) -> list[float]:
    """Real roots of x^4 + p x^2 + q x + s = 0 via quadratic factorization.

    Uses a resolvent cubic to split the quartic into two quadratics; no
    companion matrix involved.
    """
    if abs(q) < 1e-14 * (1.0 + abs(p) + abs(s)):
        # Biquadratic: x^2 solves a quadratic.
        disc = p * p - 4.0 * s
        if disc < 0:
            return []
        roots = []
        for u in ((-p + math.sqrt(disc)) / 2.0, (-p - math.sqrt(disc)) / 2.0):
            if u >= 0:
                roots.extend([math.sqrt(u), -math.sqrt(u)])
        return roots
    # Resolvent: 2m is the coefficient linking the two quadratic factors.
    m = _cubic_one_real_root(p, p * p / 4.0 - s, -q * q / 8.0)
    if m <= 0:
        # The real resolvent root can come out nonpositive from rounding when
        # the quartic is near-biquadratic; retry the biquadratic branch.
        disc = p * p - 4.0 * s
        if disc < 0:
            return []
        roots = []
        for u in ((-p + math.sqrt(disc)) / 2.0, (-p - math.sqrt(disc)) / 2.0):
            if u >= 0:
                roots.extend([math.sqrt(u), -math.sqrt(u)])
        return roots
    g = math.sqrt(2.0 * m)
    h = q / (2.0 * g)
    roots = []
    for sign in (1.0, -1.0):
        # x^2 + sign*g*x + (p/2 + m) - sign*h = 0
        b = sign * g
        c = p / 2.0 + m - sign * h
        disc = b * b - 4.0 * c
        if disc >= 0:
            sd = math.sqrt(disc)
            roots.extend([(-b + sd) / 2.0, (-b - sd) / 2.0])
    return roots


def _quartic_newton_polish(x: float, c4: float, c2: float, c1: float, c0: float) -> float:
    for _ in range(6):
        f = ((c4 * x * x + c2) * x + c1) * x + c0
        df = (4.0 * c4 * x * x + 2.0 * c2) * x + c1
        if df == 0.0:
            break
        step = f / df
        x -= step
        if abs(step) <= 1e-15 * max(1.0, abs(x)):
            break
    return x


def _r2_cost_terms(z0: FlatState, zf: FlatState) -> tuple[float, float, float]:
    dy = zf.block(0) - z0.block(0)
    v0, vf = z0.block(1), zf.block(1)
    return float(dy @ dy), float((v0 + vf) @ dy), float(v0 @ v0 + v0 @ vf + vf @ vf)


def _r2_cost(c0: float, c1: float, c2: float, c_eff: float, rho: float, T: float) -> float:
    return c_eff * (12.0 * c0 / T**3 - 12.0 * c1 / T**2 + 4.0 * c2 / T) + rho * T


def _r2_min_time(
    c0: float, c1: float, c2: float, c_eff: float, rho: float, t_floor: float
) -> float:
    """Stationary duration of the r=2 cost; clamped to t_floor when degenerate.

    Solves rho T^4 - 4 c c2 T^2 + 24 c c1 T - 36 c c0 = 0 for positive roots
    and keeps the cheapest one (ties broken toward the shorter duration).
    """
    a4, a2, a1, a0 = rho, -4.0 * c_eff * c2, 24.0 * c_eff * c1, -36.0 * c_eff * c0
    scale = max(abs(a2), abs(a1), abs(a0))
    if scale < 1e-30 * max(1.0, rho):
        return t_floor  # both endpoints coincide at rest
    roots = depressed_quartic_real_roots(a2 / a4, a1 / a4, a0 / a4)
    best_t, best_c = None, math.inf
    for x in roots:
        x = _quartic_newton_polish(x, a4, a2, a1, a0)
        if x <= 0.0 or not math.isfinite(x):
            continue
        t = max(x, t_floor)
        c = _r2_cost(c0, c1, c2, c_eff, rho, t)
        if c < best_c - 1e-12 * max(1.0, abs(best_c)) or (
            abs(c - best_c) <= 1e-12 * max(1.0, abs(best_c)) and (best_t is None or t < best_t)
        ):
            best_t, best_c = t, c
    if best_t is None:
        return t_floor
    return best_t


def min_time_quartic_r2(
    z0: FlatState, zf: FlatState, weights: CostWeights, t_floor: float = MIN_DURATION
) -> float:
    """Cheapest connection duration for r=2 with an isotropic effort weight."""
    if z0.dims.r != 2:
        raise ValueError("quartic minimum-time solve requires r == 2")
    c_eff = weights.isotropic_scale
    if c_eff is None:
        raise ValueError("quartic minimum-time solve requires an isotropic effort weight")
    if weights.time_weight <= 0:
        raise ValueError("minimum-time solve requires a positive time weight")
    c0, c1, c2 = _r2_cost_terms(z0, zf)
    return _r2_min_time(c0, c1, c2, c_eff, weights.time_weight, t_floor)


def cost_derivative(z0: FlatState, zf: FlatState, T: float, weights: CostWeights) -> float:
    """Analytic d/dT of the optimal fixed-time cost.

    The quadratic cost term times T^(2r-1) is a polynomial Q(T) of degree
    2r-2, so the derivative is (T Q'(T) - (2r-1) Q(T)) / T^(2r) + rho.
    """
    r = z0.dims.r
    Q = _cost_numerator_poly(z0, zf, weights)
    dQ = Q[1:] * np.arange(1, Q.size)
    t_pows = T ** np.arange(Q.size)
    q_val = float(Q @ t_pows)
    dq_val = float(dQ @ t_pows[: dQ.size]) if dQ.size else 0.0
    return (T * dq_val - (2 * r - 1) * q_val) / T ** (2 * r) + weights.time_weight


def _cost_numerator_poly(z0: FlatState, zf: FlatState, weights: CostWeights) -> np.ndarray:
    """Coefficients of Q(T) = T^(2r-1) * (C(T) - rho T), ascending powers."""
    r, n = z0.dims.r, z0.dims.n
    unit_inv = gramian_core_inverse(r, 1.0)
    R = weights.effort_weight
    z0b, zfb = z0.blocks(), zf.blocks()
    # d_T[i] is a polynomial in T of degree r-1-i with vector coefficients.
    d_poly = np.zeros((r, r, n))  # [block i, power j, dim]
    for i in range(r):
        d_poly[i, 0] = zfb[i] - z0b[i]
        for j in range(1, r - i):
            d_poly[i, j] = -z0b[i + j] / math.factorial(j)
    Q = np.zeros(2 * r - 1)
    for i in range(r):
        for j in range(r):
            # core_inv[i, j](T) = unit_inv[i, j] * T^(i + j - 2r + 1)
            prod = np.zeros(2 * r - 1)
            for a in range(r - i):
                for b in range(r - j):
                    prod[a + b] += float(d_poly[i, a] @ R @ d_poly[j, b])
            shift = i + j  # power after multiplying by T^(2r-1) * T^(i+j-2r+1)
            Q[shift : shift + prod.size] += unit_inv[i, j] * prod[: 2 * r - 1 - shift]
    return Q


def min_time_general(
    z0: FlatState,
    zf: FlatState,
    weights: CostWeights,
    bracket: tuple[float, float] = (MIN_DURATION, 60.0),
) -> MinTimeResult:
    """Minimum-time solve for any r: log-spaced scan plus bisection on dC/dT."""
    t_lo, t_hi = bracket
    if not (0 < t_lo < t_hi):
        raise InvalidBracket(f"need 0 < T_min < T_max, got {bracket}")
    if weights.time_weight <= 0:
        raise ValueError("minimum-time solve requires a positive time weight")
    r = z0.dims.r
    Q = _cost_numerator_poly(z0, zf, weights)
    dQ = Q[1:] * np.arange(1, Q.size)
    rho = weights.time_weight

    def dcost(T: float) -> float:
        t_pows = T ** np.arange(Q.size)
        q_val = float(Q @ t_pows)
        dq_val = float(dQ @ t_pows[: dQ.size]) if dQ.size else 0.0
        return (T * dq_val - (2 * r - 1) * q_val) / T ** (2 * r) + rho

    def cost(T: float) -> float:
        t_pows = T ** np.arange(Q.size)
        return float(Q @ t_pows) / T ** (2 * r - 1) + rho * T

    grid = np.geomspace(t_lo, t_hi, 64)
    derivs = np.array([dcost(t) for t in grid])
    candidates: list[float] = []
    for a, b, da, db in zip(grid[:-1], grid[1:], derivs[:-1], derivs[1:]):
        if da < 0.0 <= db:  # derivative crosses upward: local minimum inside
            lo, hi = a, b
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if dcost(mid) < 0.0:
                    lo = mid
                else:
                    hi = mid
                if hi - lo <= 1e-14 * max(1.0, hi):
                    break
            candidates.append(0.5 * (lo + hi))
    if candidates:
        best = min(candidates, key=cost)
        return MinTimeResult(best, False)
    # No interior stationary minimum: the cheaper bracket end wins.
    return MinTimeResult(t_lo if cost(t_lo) <= cost(t_hi) else t_hi, True)
