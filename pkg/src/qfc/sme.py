"""Stochastic master equation engine for small dense systems.

Convention: a channel carries an explicit rate, so the deterministic part
contributes rate * D[c] rho and a monitored channel adds
sqrt(rate * efficiency) * H[c] rho dW.  Qubit dephasing of strength k is the
channel (sigma_z, rate 2k), which decays coherences at 4k and drives the
Bloch z component with sqrt(8k) (1 - a_z^2) dW.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .states import angular_momentum_ops, check_density, dag
from .stochastic import IntegrationError, RngStream


def dissipator(c, rho):
    """D[c] rho = c rho c^dag - (c^dag c rho + rho c^dag c) / 2."""
    cd = dag(c)
    cdc = cd @ c
    return c @ rho @ cd - 0.5 * (cdc @ rho + rho @ cdc)


def meas_superop(c, rho):
    """H[c] rho = c rho + rho c^dag - <c + c^dag> rho."""
    cd = dag(c)
    e = np.trace((c + cd) @ rho).real
    return c @ rho + rho @ cd - e * rho


@dataclass
class Channel:
    """One Lindblad channel; efficiency > 0 marks it as monitored."""

    op: np.ndarray
    rate: float
    efficiency: float = 0.0

    def __post_init__(self):
        self.op = np.asarray(self.op, dtype=complex)
        if self.op.ndim != 2 or self.op.shape[0] != self.op.shape[1]:
            raise ValueError("channel operator must be square")
        if self.rate < 0:
            raise ValueError("channel rate must be non-negative")
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in [0, 1]")


@dataclass
class SmeModel:
    """H(t) = hamiltonian_base + u(t, rho) * control_channel, plus channels."""

    dim: int
    hamiltonian_base: np.ndarray | None = None
    control_channel: np.ndarray | None = None
    control_law: object = None  # callable (t, rho) -> real
    channels: list = field(default_factory=list)

    def __post_init__(self):
        self.dim = int(self.dim)
        if self.dim < 2:
            raise ValueError("dim must be at least 2")
        for name in ("hamiltonian_base", "control_channel"):
            h = getattr(self, name)
            if h is not None:
                h = np.asarray(h, dtype=complex)
                if h.shape != (self.dim, self.dim):
                    raise ValueError(f"{name} must be {self.dim}x{self.dim}")
                setattr(self, name, h)
        for ch in self.channels:
            if ch.op.shape != (self.dim, self.dim):
                raise ValueError("channel operator dimension mismatch")

    def measured(self):
        return [ch for ch in self.channels if ch.efficiency > 0.0]

    def hamiltonian(self, t, rho):
        h = None
        if self.hamiltonian_base is not None:
            h = self.hamiltonian_base
        if self.control_channel is not None and self.control_law is not None:
            u = float(self.control_law(t, rho))
            hb = u * self.control_channel
            h = hb if h is None else h + hb
        return h


def lindblad_step(model, rho, dt, t=0.0):
    """One deterministic step.

    Without channels the step is the exact unitary conjugation by
    expm(-i H dt), which keeps the spectrum (and hence the entropy) fixed to
    machine precision.  With channels it is an explicit Euler step followed
    by trace renormalization.
    """
    rho = np.asarray(rho, dtype=complex)
    h = model.hamiltonian(t, rho)
    active = [ch for ch in model.channels if ch.rate > 0.0]
    if not active:
        if h is None:
            return rho.copy()
        u = expm(-1j * dt * h)
        return u @ rho @ u.conj().T
    drho = np.zeros_like(rho)
    if h is not None:
        drho += -1j * (h @ rho - rho @ h)
    for ch in active:
        drho += ch.rate * dissipator(ch.op, rho)
    out = rho + dt * drho
    tr = np.trace(out).real
    if not np.isfinite(tr) or tr <= 0:
        raise IntegrationError("trace lost during Lindblad step")
    return out / tr


def sme_step(model, rho, dt, dws, t=0.0):
    """One conditioned Euler step; dws holds one Wiener increment per
    monitored channel, in model order.  All coefficients are evaluated at the
    left endpoint; the result is renormalized."""
    rho = np.asarray(rho, dtype=complex)
    h = model.hamiltonian(t, rho)
    drho = np.zeros_like(rho)
    if h is not None:
        drho += -1j * (h @ rho - rho @ h)
    for ch in model.channels:
        if ch.rate > 0.0:
            drho += ch.rate * dissipator(ch.op, rho)
    out = rho + dt * drho
    monitored = model.measured()
    dws = np.atleast_1d(np.asarray(dws, dtype=float))
    if dws.size != len(monitored):
        raise ValueError(
            f"got {dws.size} increments for {len(monitored)} monitored channels"
        )
    for ch, dw in zip(monitored, dws):
        out += np.sqrt(ch.rate * ch.efficiency) * meas_superop(ch.op, rho) * dw
    tr = np.trace(out).real
    if not np.isfinite(tr) or tr <= 0:
        raise IntegrationError("trace lost during SME step")
    return out / tr


def record_increments(model, rho, dt, dws):
    """Readout increments dY = 2 sqrt(rate eta) <(c + c^dag)/2> dt + dW."""
    rho = np.asarray(rho, dtype=complex)
    out = []
    for ch, dw in zip(model.measured(), np.atleast_1d(dws)):
        x = 0.5 * np.trace((ch.op + dag(ch.op)) @ rho).real
        out.append(2.0 * np.sqrt(ch.rate * ch.efficiency) * x * dt + dw)
    return np.array(out)


def innovation_increment(record_dy, x_expect, rate, efficiency, dt):
    """Recover dW = dY - 2 sqrt(rate eta) <X> dt from a readout increment."""
    return float(record_dy) - 2.0 * np.sqrt(rate * efficiency) * float(x_expect) * dt


@dataclass
class TrajectoryResult:
    times: np.ndarray
    states: list | None
    observables: np.ndarray | None
    record: np.ndarray  # cumulative readout per monitored channel
    noise: np.ndarray   # the Wiener increments actually used


def run_trajectory(model, rho0, dt, n_steps, stream, observable_ops=None,
                   store_states=False, resym_every=100):
    """Integrate one conditioned trajectory.

    The state is re-symmetrized every resym_every steps to stop Hermiticity
    drift.  observable_ops, if given, is a list of Hermitian operators whose
    expectations are sampled at every step (including t=0).
    """
    rho = check_density(rho0).copy()
    n_steps = int(n_steps)
    monitored = model.measured()
    n_mon = len(monitored)
    dWs = stream.wiener(dt, (n_steps, n_mon)) if n_mon else np.zeros((n_steps, 0))
    times = dt * np.arange(n_steps + 1)
    obs = None
    if observable_ops is not None:
        obs = np.empty((n_steps + 1, len(observable_ops)))
    states = [] if store_states else None
    record = np.zeros((n_steps + 1, n_mon))

    def sample(i):
        if obs is not None:
            for q, op in enumerate(observable_ops):
                obs[i, q] = np.trace(op @ rho).real
        if states is not None:
            states.append(rho.copy())

    sample(0)
    for i in range(n_steps):
        if n_mon:
            record[i + 1] = record[i] + record_increments(model, rho, dt, dWs[i])
        rho = sme_step(model, rho, dt, dWs[i], t=times[i])
        if (i + 1) % resym_every == 0:
            rho = 0.5 * (rho + rho.conj().T)
        sample(i + 1)
    return TrajectoryResult(times=times, states=states, observables=obs,
                            record=record, noise=dWs)


def run_dephasing_ensemble(k, dt, n_steps, n_traj, base_seed, rho0=None,
                           chunk=2000, threads=1):
    """Vectorized ensemble of qubit dephasing trajectories (sigma_z, rate 2k).

    Returns (times, mean, var) of Re rho_01 across trajectories, reduced in
    fixed trajectory order.  Trajectory i uses stream (base_seed, i).
    """
    k = float(k)
    if k <= 0:
        raise ValueError("k must be positive")
    n_steps = int(n_steps)
    n_traj = int(n_traj)
    if rho0 is None:
        rho0 = np.array([[0.5, 0.5], [0.5, 0.5]], dtype=complex)
    rho0 = check_density(rho0)
    sz = np.array([1.0, -1.0])

    def run_chunk(lo):
        hi = min(lo + chunk, n_traj)
        m = hi - lo
        dws = np.empty((m, n_steps))
        for q, i in enumerate(range(lo, hi)):
            dws[q] = RngStream(base_seed, i).wiener(dt, n_steps)
        rho = np.broadcast_to(rho0, (m, 2, 2)).copy()
        coh = np.empty((m, n_steps + 1))
        coh[:, 0] = rho[:, 0, 1].real
        amp = np.sqrt(2.0 * k)
        for s in range(n_steps):
            zr = sz[None, :, None] * rho          # sigma_z rho
            rz = rho * sz[None, None, :]          # rho sigma_z
            ez = (rho[:, 0, 0] - rho[:, 1, 1]).real
            det = 2.0 * k * (sz[None, :, None] * rz - rho)
            sto = zr + rz - 2.0 * ez[:, None, None] * rho
            rho = rho + dt * det + amp * dws[:, s, None, None] * sto
            tr = np.trace(rho, axis1=1, axis2=2).real
            rho /= tr[:, None, None]
            coh[:, s + 1] = rho[:, 0, 1].real
        return coh.sum(axis=0), (coh * coh).sum(axis=0)

    starts = list(range(0, n_traj, chunk))
    if threads and threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            parts = list(pool.map(run_chunk, starts))
    else:
        parts = [run_chunk(lo) for lo in starts]
    total = parts[0][0].copy()
    total_sq = parts[0][1].copy()
    for acc, acc_sq in parts[1:]:
        total += acc
        total_sq += acc_sq
    mean = total / n_traj
    var = np.maximum(total_sq / n_traj - mean * mean, 0.0)
    times = dt * np.arange(n_steps + 1)
    return times, mean, var


def spin_ensemble_model(two_j, u_law=None, s=0.0, strength=1.0, eta=1.0,
                        extra_channel=None):
    """Collective-spin model: H = u(t) F_y + s F_z, monitored F_z channel.

    The static s F_z term is folded into the base Hamiltonian.  extra_channel
    is an optional (operator, rate) pair for unmonitored decoherence.
    """
    fx, fy, fz = angular_momentum_ops(two_j)
    d = two_j + 1
    channels = [Channel(op=fz, rate=float(strength), efficiency=float(eta))]
    if extra_channel is not None:
        op, rate = extra_channel
        channels.append(Channel(op=op, rate=float(rate), efficiency=0.0))
    return SmeModel(
        dim=d,
        hamiltonian_base=(s * fz) if s else None,
        control_channel=fy if u_law is not None else None,
        control_law=u_law,
        channels=channels,
    )


def fidelity_bound_parameter(strength, eta, extra_rate):
    """l = gamma / (M eta), the knob controlling the long-run fidelity bound."""
    if strength <= 0 or eta <= 0:
        raise ValueError("strength and eta must be positive")
    return float(extra_rate) / (float(strength) * float(eta))


def purity_derivative_check(model, rho, dt=1e-5, t=0.0):
    """Centered-difference estimate of d Tr(rho^2)/dt under the deterministic
    generator, for models whose Hamiltonian commutes with every channel.

    Raises if a commutator norm exceeds 1e-10; the returned derivative is
    non-positive (up to discretization error) for such models.
    """
    rho = np.asarray(rho, dtype=complex)
    h = model.hamiltonian(t, rho)
    parts = [p for p in (model.hamiltonian_base, model.control_channel)
             if p is not None]
    for ch in model.channels:
        if ch.rate <= 0:
            continue
        for p in parts:
            comm = p @ ch.op - ch.op @ p
            if np.max(np.abs(comm)) > 1e-10:
                raise ValueError("Hamiltonian does not commute with a channel")

    def generator(r):
        d = np.zeros_like(r)
        if h is not None:
            d += -1j * (h @ r - r @ h)
        for ch in model.channels:
            if ch.rate > 0.0:
                d += ch.rate * dissipator(ch.op, r)
        return d

    g = generator(rho)
    plus = rho + dt * g
    minus = rho - dt * g
    p_plus = np.trace(plus @ plus).real
    p_minus = np.trace(minus @ minus).real
    return float((p_plus - p_minus) / (2.0 * dt))
