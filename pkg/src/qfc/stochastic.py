"""Seeded Wiener increments and fixed-step Ito integration.

Trajectory i of an ensemble always draws from the counter-based stream
(base_seed, stream_id=i), so results are bit-for-bit reproducible no matter
how trajectories are scheduled or batched.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np


class IntegrationError(RuntimeError):
    """A step produced a non-finite state."""


class RngStream:
    """One reproducible random stream per (seed, stream_id) pair.

    Philox keyed on the pair gives statistically independent streams, so a
    trajectory's noise depends only on its index, never on visiting order.
    """

    def __init__(self, seed, stream_id=0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        if not 0 <= self.stream_id < 2**64:
            raise ValueError("stream_id must fit in an unsigned 64-bit integer")
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self.gen = np.random.Generator(np.random.Philox(key=key))

    def wiener(self, dt, size=None):
        """Normal(0, dt) increment(s)."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        return self.gen.normal(0.0, np.sqrt(dt), size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.gen.normal(loc, scale, size)

    def uniform(self, size=None):
        return self.gen.uniform(size=size)


def wiener_increment(rng, dt):
    return float(rng.wiener(dt))


def ito_quadratic_variation(rng, t_total, n_steps):
    """Sum of squared increments of one discretized Wiener path over [0, t_total].

    Concentrates on t_total as n_steps grows (variance 2 t^2 / n).
    """
    if t_total <= 0:
        raise ValueError("t_total must be positive")
    n_steps = int(n_steps)
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    dw = rng.wiener(t_total / n_steps, n_steps)
    return float(np.dot(dw, dw))


def euler_maruyama_step(state, drift, diffusion, dt, dw):
    """state + f(state) dt + g(state) dw with both coefficients at the left endpoint."""
    state = np.asarray(state, dtype=float)
    out = state + np.asarray(drift(state), dtype=float) * dt \
        + np.asarray(diffusion(state), dtype=float) * dw
    if not np.all(np.isfinite(out)):
        raise IntegrationError("non-finite state after Euler-Maruyama step")
    return out


@dataclass
class EnsembleStats:
    """Per-sample mean and population variance across trajectories."""

    mean: np.ndarray
    var: np.ndarray
    n_traj: int

    @property
    def sem(self):
        return np.sqrt(self.var / self.n_traj)


def run_ensemble(trajectory, n_traj, base_seed, chunk=256, threads=1):
    """Reduce trajectory(RngStream(base_seed, i)) over i = 0 .. n_traj-1.

    trajectory must return a float array of fixed shape (the sampled
    observables).  Chunks are accumulated in fixed index order and combined
    in fixed chunk order, so the result is identical for any thread count.
    """
    n_traj = int(n_traj)
    if n_traj < 1:
        raise ValueError("n_traj must be at least 1")
    chunk = max(1, int(chunk))

    def run_chunk(lo):
        hi = min(lo + chunk, n_traj)
        acc = acc_sq = None
        for i in range(lo, hi):
            path = np.asarray(trajectory(RngStream(base_seed, i)), dtype=float)
            if acc is None:
                acc = path.copy()
                acc_sq = path * path
            else:
                acc += path
                acc_sq += path * path
        return acc, acc_sq

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
    return EnsembleStats(mean=mean, var=var, n_traj=n_traj)
