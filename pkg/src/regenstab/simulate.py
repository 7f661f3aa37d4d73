"""Sample paths of a regenerative switched system.

Paths are propagated exactly: inside a constant-mode segment the state at a
grid time is one matrix exponential (or matrix power) applied to the state
at the segment start, so there is no integrator truncation error. Many
paths advance together as arrays.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .linalg import expm
from .process import CONTINUOUS, draw_cycles, substream

DIVERGENCE_NORM = 1e300
PATH_CHUNK = 4096
MAX_STORED_PATHS = 64


@dataclass(frozen=True)
class TrajectoryRecord:
    times: np.ndarray
    values: np.ndarray      # |x(t)|^m on the grid, nan after divergence
    path_id: int
    seed: int
    diverged: bool


@dataclass(frozen=True)
class EnsembleSummary:
    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_paths: int
    beta_hat: float
    diverged_paths: int
    paths: np.ndarray       # first few individual paths, shape (k, len(times))
    min_entry: float        # smallest state entry seen at grid times and switches

    @property
    def all_diverged(self):
        return self.diverged_paths == self.n_paths

    @property
    def stable(self):
        return (not self.diverged_paths) and self.beta_hat > 0


def time_grid(horizon, dt):
    if not dt > 0 or not horizon > 0:
        raise ValueError(f"need dt > 0 and horizon > 0, got dt={dt}, horizon={horizon}")
    steps = int(np.floor(horizon / dt + 1e-9))
    return np.arange(steps + 1) * dt


def _propagate(system, A, idx, x, dt):
    # x <- exp(A[idx] dt) x or A[idx]^dt x, batched over paths
    if system.time_kind == CONTINUOUS:
        F = expm(A[idx] * dt[:, None, None])
    else:
        F = np.stack([np.linalg.matrix_power(A[i], int(d)) for i, d in zip(idx, dt)])
    return np.einsum("pij,pj->pi", F, x)


def _simulate_chunk(system, model, x0, times, m, seed, stream):
    """Run ``len(x0)`` paths on ``times``; returns values, diverged, min entry."""
    rng = substream(seed, stream)
    A = system.stacked()
    P = x0.shape[0]

    x_start = x0.copy()
    seg_start = np.zeros(P)
    batch = draw_cycles(model, rng, P)
    modes, durs = batch.modes.copy(), batch.durations.copy()
    seg = np.zeros(P, dtype=np.intp)
    diverged = np.zeros(P, dtype=bool)
    values = np.empty((P, len(times)))
    min_entry = float(x0.min())
    rows = np.arange(P)

    for j, t in enumerate(times):
        # move every path into the segment containing t
        while True:
            ends = seg_start + durs[rows, seg]
            move = (ends <= t) & ~diverged
            if not move.any():
                break
            p = np.nonzero(move)[0]
            d = durs[p, seg[p]]
            idx = system.mode_index(modes[p, seg[p]])
            x_start[p] = _propagate(system, A, idx, x_start[p], d)
            seg_start[p] = ends[p]
            seg[p] += 1
            if x_start[p].size:
                min_entry = min(min_entry, float(x_start[p].min()))
            done = p[seg[p] >= modes.shape[1]]
            if len(done):
                fresh = draw_cycles(model, rng, len(done))
                width = fresh.modes.shape[1]
                if width > modes.shape[1]:
                    pad = width - modes.shape[1]
                    modes = np.pad(modes, ((0, 0), (0, pad)))
                    durs = np.pad(durs, ((0, 0), (0, pad)))
                modes[done] = 0
                durs[done] = 0.0
                modes[done, :width] = fresh.modes
                durs[done, :width] = fresh.durations
                seg[done] = 0
            big = np.linalg.norm(x_start[p], axis=1) > DIVERGENCE_NORM
            diverged[p[big]] = True

        idx = system.mode_index(modes[rows, seg])
        x = _propagate(system, A, idx, x_start, t - seg_start)
        norms = np.linalg.norm(x, axis=1)
        newly = ~np.isfinite(norms) | (norms > DIVERGENCE_NORM)
        diverged |= newly
        live = ~diverged
        if live.any():
            min_entry = min(min_entry, float(x[live].min()))
        values[:, j] = np.where(diverged, np.nan, norms ** m)
    return values, diverged, min_entry


def _initial_states(x0, n_paths, n):
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        if x0.shape[0] != n:
            raise ValueError(f"x0 has length {x0.shape[0]}, system dimension is {n}")
        return np.broadcast_to(x0, (n_paths, n)).copy()
    if x0.shape[1] != n:
        raise ValueError(f"x0 rows have length {x0.shape[1]}, system dimension is {n}")
    # cycle through the supplied initial states
    return x0[np.arange(n_paths) % x0.shape[0]].copy()


def simulate_paths(system, model, x0, horizon, dt, m, n_paths, seed, workers=1):
    """Simulate ``n_paths`` paths; returns ``(times, values, diverged, min_entry)``.

    ``x0`` is one initial state shared by all paths or an ``(k, n)`` array
    assigned to paths round-robin. Paths are grouped in fixed chunks, chunk
    ``i`` drawing from ``substream(seed, i)``, so output does not depend on
    ``workers``.
    """
    if seed is None:
        raise ValueError("simulation needs an explicit seed")
    times = time_grid(horizon, dt)
    if system.time_kind != CONTINUOUS and not float(dt).is_integer():
        raise ValueError("discrete-time simulation needs an integer dt")
    states = _initial_states(x0, n_paths, system.n)
    starts = list(range(0, n_paths, PATH_CHUNK))

    def job(i):
        lo = starts[i]
        with np.errstate(over="ignore", invalid="ignore"):
            return _simulate_chunk(system, model, states[lo:lo + PATH_CHUNK],
                                   times, m, seed, i)

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, range(len(starts))))
    else:
        parts = [job(i) for i in range(len(starts))]
    values = np.concatenate([p[0] for p in parts])
    diverged = np.concatenate([p[1] for p in parts])
    min_entry = min(p[2] for p in parts)
    return times, values, diverged, min_entry


def simulate_path(system, model, x0, horizon, dt, m, seed, path_id=0):
    """One sample path of ``|x(t)|^m`` on a uniform grid."""
    times, values, diverged, _ = simulate_paths(system, model, x0, horizon, dt, m, 1, seed)
    return TrajectoryRecord(times=times, values=values[0], path_id=path_id,
                            seed=int(seed), diverged=bool(diverged[0]))


def fit_exponent(times, mean):
    """Least-squares decay rate of ``mean`` over the second half of the grid.

    Returns ``beta`` with ``mean ~ exp(-beta t)``; positive means decay.
    """
    horizon = times[-1]
    window = (times >= horizon / 2) & np.isfinite(mean) & (mean > 0)
    if window.sum() < 2:
        return float("-inf") if np.any(~np.isfinite(mean)) else float("nan")
    slope = np.polyfit(times[window], np.log(mean[window]), 1)[0]
    return float(-slope)


def ensemble_mean(system, model, x0, horizon, dt, m, n_paths, seed, workers=1):
    """Average ``|x(t)|^m`` over independent paths and fit its exponent."""
    if n_paths < 2:
        raise ValueError(f"need at least 2 paths, got {n_paths}")
    times, values, diverged, min_entry = simulate_paths(
        system, model, x0, horizon, dt, m, n_paths, seed, workers=workers)
    n_div = int(diverged.sum())
    if n_div:
        # a diverged path makes the ensemble mean infinite from then on
        filled = np.where(np.isnan(values), np.inf, values)
    else:
        filled = values
    with np.errstate(invalid="ignore"):
        mean = filled.mean(axis=0)
        stderr = filled.std(axis=0, ddof=1) / np.sqrt(n_paths)
    beta = float("-inf") if n_div == n_paths else fit_exponent(times, mean)
    return EnsembleSummary(times=times, mean=mean, stderr=stderr, n_paths=n_paths,
                           beta_hat=beta, diverged_paths=n_div,
                           paths=values[:MAX_STORED_PATHS], min_entry=min_entry)
