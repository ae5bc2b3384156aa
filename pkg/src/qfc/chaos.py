"""Nonlinear qubit dynamics selected by measurement post-selection.

Running two copies of a state through a XOR gate and keeping the pair only
when the second register reads zero squares every density-matrix element.
Alternating this squaring map S with a fixed SU(2) rotation U gives the
iteration F = U o S, which on pure states reduces to a rational map of one
complex variable,

    F_p(z) = (z^2 + p) / (1 - conj(p) z^2),    p = tan(x) e^{i phi},

acting on the Riemann sphere.  The module provides both pictures plus the
tools hung off them: Bell-state purification by iteration, convergence-time
rasters whose slow set draws the Julia set of F_p, a box-counting dimension
estimate for its boundary, and Lyapunov exponents.  The orbit iteration for
Lyapunov work runs in arbitrary precision: a repelling orbit loses roughly
one bit per step, so float64 orbits fall off the Julia set after about
fifty steps no matter how accurately they start.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .states import bell_state, check_density, density, fidelity_trace, partial_trace, tensor_product

INFINITY = complex(math.inf, 0.0)

# The iteration benchmark: a slightly perturbed, deliberately non-Hermitian
# Bell-state density matrix.  Only square_elements(raw=True) accepts it.
PERTURBED_BELL = np.array(
    [
        [0.17, 0.0, 0.0, 0.0],
        [0.0, 0.30, 0.29, 0.0],
        [0.0, 0.205, 0.22, 0.0],
        [0.0, 0.0, 0.0, 0.31],
    ],
    dtype=complex,
)


def is_infinity(z):
    """True for the point at infinity (any non-finite complex works)."""
    z = complex(z)
    return not (math.isfinite(z.real) and math.isfinite(z.imag))


@dataclass(frozen=True)
class MapParams:
    """Parameter of the induced rational map."""

    p: complex

    @classmethod
    def from_rotation(cls, x, phi):
        """p = tan(x) e^{i phi} from the SU(2) rotation angles."""
        return cls(p=complex(math.tan(x) * np.exp(1j * phi)))


def su2_unitary(x, phi):
    """The rotation [[cos x, sin x e^{i phi}], [-sin x e^{-i phi}, cos x]]."""
    c, s = math.cos(x), math.sin(x)
    e = np.exp(1j * phi)
    return np.array([[c, s * e], [-s / e, c]], dtype=complex)


def square_elements(rho, raw=False):
    """Square every matrix element and renormalize.

    Returns (out, success_prob) with out_ij = rho_ij^2 / N and
    N = success_prob = sum_i rho_ii^2, the probability that the XOR
    post-selection below accepts.  The elementwise square of a Hermitian
    PSD matrix is again Hermitian PSD (Schur product with itself), so
    proper states map to proper states.  raw=True skips the Hermiticity
    and positivity checks for the PERTURBED_BELL benchmark.
    """
    rho = check_density(rho, raw=raw)
    squared = rho * rho
    norm = np.sum(np.diagonal(squared))
    if abs(norm) < 1e-15:
        raise ValueError("squared diagonal sums below 1e-15, squaring map degenerate")
    return squared / norm, float(norm.real)


def xor_postselect(rho):
    """Realize the squaring map by gate and measurement, literally.

    Takes two copies of the state, applies XOR12 |i>|j> = |i>|i xor j>
    (bitwise, so the dimension must be a power of two), projects the second
    register onto |0...0> and traces it out.  Agrees with square_elements
    including the success probability; the two are independent
    implementations of the same channel.
    """
    rho = check_density(rho)
    d = rho.shape[0]
    if d & (d - 1):
        raise ValueError(f"XOR register needs a power-of-two dimension, got {d}")
    pair = np.kron(rho, rho)
    xor = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            xor[i * d + (i ^ j), i * d + j] = 1.0
    pair = xor @ pair @ xor  # involution, so this is XOR . XOR^dag
    keep = np.zeros((d, d))
    keep[0, 0] = 1.0
    projected = np.kron(np.eye(d), keep)
    pair = projected @ pair @ projected
    success = np.trace(pair).real
    if abs(success) < 1e-15:
        raise ValueError("post-selection accepts with probability below 1e-15")
    return partial_trace(pair, (d, d), keep=0) / success, float(success)


def f_step(rho, x, phi, raw=False):
    """One squaring-then-rotation step, U (S rho) U^dag.

    Qubits get U(x, phi) directly; two-qubit states get U x U.  With
    x = pi/4, phi = pi/2 the symmetric and even Bell states form a stable
    2-cycle of this iteration.
    """
    squared, _ = square_elements(rho, raw=raw)
    u = su2_unitary(x, phi)
    if squared.shape[0] == 2:
        pass
    elif squared.shape[0] == 4:
        u = tensor_product(u, u)
    else:
        raise ValueError("f_step expects a one- or two-qubit state")
    return u @ squared @ u.conj().T


def bell_purify_iterate(rho0, n_steps, x=math.pi / 4, phi=math.pi / 2, raw=False):
    """Iterate f_step and track overlap with the symmetric Bell state.

    Returns the n_steps + 1 fidelities F_k = <psi+| rho_k |psi+> starting
    from F_0.  The input is validated once; the iterates themselves are fed
    back in raw mode so a deliberately asymmetric start (PERTURBED_BELL)
    stays asymmetric instead of being rejected mid-run.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    rho = check_density(rho0, raw=raw)
    target = density(bell_state("psi+"))
    fids = [fidelity_trace(target, rho)]
    for _ in range(n_steps):
        rho = f_step(rho, x, phi, raw=True)
        fids.append(fidelity_trace(target, rho))
    return np.array(fids)


def fp_map(z, p):
    """Evaluate F_p(z) = (z^2 + p)/(1 - conj(p) z^2) on the sphere.

    The point at infinity maps to -1/conj(p) (to infinity when p = 0), and
    a vanishing denominator yields infinity; no input raises.
    """
    p = complex(p)
    if is_infinity(z):
        return INFINITY if p == 0 else -1.0 / p.conjugate()
    z = complex(z)
    if abs(z) > 1e100:
        # z^2 would overflow; indistinguishable from infinity at this scale
        return INFINITY if p == 0 else -1.0 / p.conjugate()
    z2 = z * z
    den = 1.0 - p.conjugate() * z2
    if den == 0:
        return INFINITY
    return (z2 + p) / den


def fp_derivative_abs(z, p):
    """|F_p'(z)| = 2|z|(1 + |p|^2)/|1 - conj(p) z^2|^2, with inf at poles."""
    p = complex(p)
    if is_infinity(z):
        return 0.0 if p != 0 else math.inf
    z = complex(z)
    if abs(z) > 1e100:
        return 0.0 if p != 0 else math.inf
    den = abs(1.0 - p.conjugate() * z * z) ** 2
    num = 2.0 * abs(z) * (1.0 + abs(p) ** 2)
    if den == 0.0:
        return math.inf
    return num / den


def chordal_distance(a, b):
    """Riemann-sphere chordal distance, diameter 2, infinity regular."""
    ua, va = _to_uv(a)
    ub, vb = _to_uv(b)
    return 2.0 * abs(ua * vb - ub * va)


def _to_uv(z):
    # normalized homogeneous coordinates z = u/v
    if is_infinity(z):
        return 1.0 + 0.0j, 0.0j
    z = complex(z)
    r = math.hypot(abs(z), 1.0)
    return z / r, 1.0 / r


@dataclass(frozen=True)
class RasterJob:
    """Viewport and iteration budget for a convergence-time raster."""

    re_min: float
    re_max: float
    im_min: float
    im_max: float
    width: int
    height: int
    max_iters: int
    cycle_tol: float = 1e-9
    params: MapParams = field(default_factory=lambda: MapParams(p=0.0))

    def __post_init__(self):
        if self.re_min >= self.re_max or self.im_min >= self.im_max:
            raise ValueError("raster window is empty")
        if self.width < 1 or self.height < 1:
            raise ValueError("raster needs at least one pixel")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.cycle_tol <= 0:
            raise ValueError("cycle_tol must be positive")

    def pixel_centers(self):
        """(re, im) center coordinates; row 0 is the top, im_max edge."""
        dre = (self.re_max - self.re_min) / self.width
        dim = (self.im_max - self.im_min) / self.height
        re = self.re_min + (np.arange(self.width) + 0.5) * dre
        im = self.im_max - (np.arange(self.height) + 0.5) * dim
        return re, im


@dataclass(frozen=True)
class RasterGrid:
    """Per-pixel first-arrival step counts; -1 marks non-convergence."""

    counts: np.ndarray
    job: RasterJob


_TAIL = 10  # ring buffer length for cycle detection
_MAX_PERIOD = 8


def _iterate_uv(u, v, p, n, tail_u=None, tail_v=None):
    # vectorized projective iteration; optionally records the last _TAIL steps
    pc = np.conj(p)
    for k in range(n):
        nu = u * u + p * (v * v)
        nv = v * v - pc * (u * u)
        norm = np.sqrt(np.abs(nu) ** 2 + np.abs(nv) ** 2)
        # a zero norm cannot occur for finite p: u^2 = -p v^2 and
        # v^2 = conj(p) u^2 together force u = v = 0
        u, v = nu / norm, nv / norm
        if tail_u is not None:
            tail_u[(k + 1) % _TAIL] = u
            tail_v[(k + 1) % _TAIL] = v
    return u, v


def _raster_rows(job, row_lo, row_hi):
    p = complex(job.params.p)
    tol = job.cycle_tol
    n = job.max_iters
    re, im = job.pixel_centers()
    z0 = re[np.newaxis, :] + 1j * im[row_lo:row_hi, np.newaxis]
    r = np.hypot(np.abs(z0), 1.0)
    u0, v0 = z0 / r, 1.0 / r

    shape = u0.shape
    tail_u = np.zeros((_TAIL,) + shape, dtype=complex)
    tail_v = np.zeros((_TAIL,) + shape, dtype=complex)
    tail_u[0], tail_v[0] = u0, v0
    _iterate_uv(u0, v0, p, n, tail_u, tail_v)

    def tail_at(step):
        # step counted from the end: 0 is the final point
        return tail_u[(n - step) % _TAIL], tail_v[(n - step) % _TAIL]

    # a period-q cycle needs the two newest points to match their q-back
    # partners; the smallest q wins
    period = np.zeros(shape, dtype=np.int64)
    fu, fv = tail_at(0)
    gu, gv = tail_at(1)
    for q in range(1, _MAX_PERIOD + 1):
        if q + 1 >= min(_TAIL, n + 1):
            break
        bu, bv = tail_at(q)
        cu, cv = tail_at(q + 1)
        hit = (2.0 * np.abs(fu * bv - bu * fv) < tol) & (
            2.0 * np.abs(gu * cv - cu * gv) < tol
        )
        period = np.where((period == 0) & hit, q, period)

    # cycle slots: one period of tail points, repeated cyclically
    slot_u = np.zeros((_MAX_PERIOD,) + shape, dtype=complex)
    slot_v = np.zeros((_MAX_PERIOD,) + shape, dtype=complex)
    for m in range(_MAX_PERIOD):
        for q in range(1, _MAX_PERIOD + 1):
            sel = period == q
            if not sel.any():
                continue
            bu, bv = tail_at(m % q)
            slot_u[m][sel] = bu[sel]
            slot_v[m][sel] = bv[sel]

    counts = np.full(shape, -1, dtype=np.int64)
    has_cycle = period > 0
    u, v = u0.copy(), v0.copy()
    pc = np.conj(p)
    for step in range(n + 1):
        near = np.zeros(shape, dtype=bool)
        for m in range(_MAX_PERIOD):
            near |= 2.0 * np.abs(u * slot_v[m] - slot_u[m] * v) < tol
        arrive = has_cycle & near & (counts < 0)
        counts[arrive] = step
        if step == n:
            break
        nu = u * u + p * (v * v)
        nv = v * v - pc * (u * u)
        norm = np.sqrt(np.abs(nu) ** 2 + np.abs(nv) ** 2)
        u, v = nu / norm, nv / norm
    return counts


def julia_raster(job, threads=1):
    """Convergence-time raster of F_p over the job's viewport.

    Two passes per pixel: iterate max_iters steps in projective sphere
    coordinates and detect a stable cycle (period up to 8) on the orbit
    tail, then replay the orbit and record the first step landing within
    cycle_tol of the cycle; pixels with no detected cycle get -1.  Pixels
    are independent, so the raster is deterministic for any thread count.
    """
    threads = max(1, int(threads))
    if threads == 1 or job.height < 2 * threads:
        return RasterGrid(counts=_raster_rows(job, 0, job.height), job=job)
    bounds = np.linspace(0, job.height, threads + 1, dtype=int)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(
            pool.map(lambda b: _raster_rows(job, b[0], b[1]), zip(bounds[:-1], bounds[1:]))
        )
    return RasterGrid(counts=np.vstack(parts), job=job)


def boundary_mask(mask):
    """Cells of the set adjacent (4-neighborhood) to its complement."""
    mask = np.asarray(mask, dtype=bool)
    inner = np.ones_like(mask)
    inner[:-1] &= mask[1:]
    inner[1:] &= mask[:-1]
    inner[:, :-1] &= mask[:, 1:]
    inner[:, 1:] &= mask[:, :-1]
    return mask & ~(inner & mask)


def box_counts(mask, sizes):
    """Occupied-box counts of a mask at the given box edge lengths."""
    mask = np.asarray(mask, dtype=bool)
    out = []
    for s in sizes:
        h = (mask.shape[0] // s) * s
        w = (mask.shape[1] // s) * s
        if h == 0 or w == 0:
            raise ValueError(f"box size {s} exceeds the mask")
        pooled = mask[:h, :w].reshape(h // s, s, w // s, s).any(axis=(1, 3))
        out.append(int(pooled.sum()))
    return np.array(out)


def boundary_box_dimension(mask, sizes=(1, 2, 4, 8, 16, 32)):
    """Box-counting dimension estimate of a set's boundary.

    Fits log(count) against log(1/size) for the boundary cells of the mask.
    A smooth curve scores near 1, a space-filling boundary near 2.
    """
    edge = boundary_mask(mask)
    counts = box_counts(edge, sizes)
    if (counts == 0).any():
        raise ValueError("boundary is empty at some box size")
    slope, _ = np.polyfit(np.log(1.0 / np.asarray(sizes, float)), np.log(counts), 1)
    return float(slope)


@dataclass(frozen=True)
class LyapunovResult:
    """Chain-rule and shadow-trajectory Lyapunov estimates.

    terminated is True when the orbit fell into a supersink (a critical
    point of the map: 0 or infinity, where one step contracts by an
    unbounded factor) and the averages only cover the steps before that.
    """

    chain: float
    shadow: float
    n_used: int
    terminated: bool


def lyapunov_estimate(z0, p, n_iters, offset=1e-9, supersink_tol=1e-12):
    """Estimate the Lyapunov exponent of F_p at z0 two independent ways.

    The chain estimator averages log of the spherical derivative along the
    orbit; the shadow estimator follows a companion orbit started offset
    away, accumulating log of the chordal separation growth with
    per-step renormalization back to the fiducial orbit.  Both run in
    arbitrary-precision arithmetic with n_iters + 128 bits, enough that a
    Julia-set orbit (losing about a bit per step) stays faithful for the
    whole run.  Orbits reaching within supersink_tol (chordal) of a
    critical point stop early with terminated=True.

    z0 and p may be complex numbers, mpmath values, strings, or
    zero-argument callables evaluated at working precision.  The callable
    form matters for points on thin invariant sets: a double-rounded
    e^{0.7i} sits 1e-16 off the unit circle, and squaring doubles that
    error every step, so pass lambda: mpmath.exp(0.7j) instead.
    """
    if n_iters < 1:
        raise ValueError("n_iters must be at least 1")
    if offset <= 0:
        raise ValueError("offset must be positive")
    with mpmath.workprec(int(n_iters) + 128):
        pm = mpmath.mpc(p() if callable(p) else p)
        pc = mpmath.conj(pm)
        one_plus_p2 = 1 + abs(pm) ** 2

        def normalize(u, v):
            norm = mpmath.sqrt(abs(u) ** 2 + abs(v) ** 2)
            return u / norm, v / norm

        def advance(u, v):
            return normalize(u * u + pm * (v * v), v * v - pc * (u * u))

        def cross(u1, v1, u2, v2):
            return 2 * abs(u1 * v2 - u2 * v1)

        zraw = z0() if callable(z0) else z0
        zm = None if (isinstance(zraw, complex) and is_infinity(zraw)) else mpmath.mpc(zraw)
        if zm is not None and (mpmath.isinf(zm.real) or mpmath.isinf(zm.imag)):
            zm = None
        if zm is None:
            fu, fv = mpmath.mpc(1), mpmath.mpc(0)
            gu, gv = normalize(mpmath.mpc(1), mpmath.mpc(offset))
        else:
            fu, fv = normalize(zm, mpmath.mpc(1))
            # companion start: offset in the chart that keeps it well scaled
            if abs(zm) <= 1.0:
                gu, gv = normalize(zm + offset, mpmath.mpc(1))
            else:
                gu, gv = normalize(mpmath.mpc(1), 1 / zm + offset)
        d0 = cross(fu, fv, gu, gv)

        floor = mpmath.mpf("1e-300")
        chain_sum = mpmath.mpf(0)
        shadow_sum = mpmath.mpf(0)
        n_used = 0
        terminated = False
        for _ in range(int(n_iters)):
            if 2 * abs(fu) < supersink_tol or 2 * abs(fv) < supersink_tol:
                terminated = True
                break
            nu = fu * fu + pm * (fv * fv)
            nv = fv * fv - pc * (fu * fu)
            norm2 = abs(nu) ** 2 + abs(nv) ** 2
            fsharp = 2 * abs(fu) * abs(fv) * one_plus_p2 / norm2
            chain_sum += mpmath.log(max(fsharp, floor))
            norm = mpmath.sqrt(norm2)
            fu, fv = nu / norm, nv / norm

            gu, gv = advance(gu, gv)
            inner = mpmath.conj(fu) * gu + mpmath.conj(fv) * gv
            scale = abs(inner)
            if scale > 0:
                phase = mpmath.conj(inner) / scale
                gu, gv = gu * phase, gv * phase
            d = cross(fu, fv, gu, gv)
            shadow_sum += mpmath.log(max(d, floor) / d0)
            pull = d0 / max(d, floor)
            gu, gv = normalize(fu + (gu - fu) * pull, fv + (gv - fv) * pull)
            n_used += 1

        if n_used == 0:
            return LyapunovResult(
                chain=math.nan, shadow=math.nan, n_used=0, terminated=terminated
            )
        return LyapunovResult(
            chain=float(chain_sum / n_used),
            shadow=float(shadow_sum / n_used),
            n_used=n_used,
            terminated=terminated,
        )
