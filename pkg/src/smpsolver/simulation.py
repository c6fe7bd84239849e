"""Monte Carlo simulation of a semi-Markov process.

Used as an independent check on the transform-based solvers.  Paths are
generated in lockstep over blocks of trajectories; each block draws from its
own Philox stream keyed by ``(seed, block index)``, so results do not depend
on how blocks are scheduled.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import SmpModel

__all__ = ["TrajectoryRecord", "Estimate", "simulate_trajectory", "estimate", "simulate_counts", "summarise",
           "deviation_in_se"]

BLOCK_SIZE = 8192
ESTIMATE_KINDS = ("P", "G", "v", "V", "M")


@dataclass(frozen=True)
class TrajectoryRecord:
    start_state: str
    events: tuple[tuple[float, str], ...]
    horizon: float

    def state_at(self, t: float) -> str:
        """Z(t): the state occupied at time t."""
        current = self.start_state
        for when, state in self.events:
            if when > t:
                break
            current = state
        return current

    def count(self, state: str, t: float) -> int:
        """N_j(t): entries into ``state`` during (0, t]."""
        return sum(1 for when, s in self.events if s == state and when <= t)


@dataclass
class Estimate:
    kind: str
    times: np.ndarray
    labels: tuple[str, ...]
    start_state: str
    mean: np.ndarray
    stderr: np.ndarray
    n_traj: int
    k: int | None = None


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream])))


def _cumulative_rows(model: SmpModel) -> np.ndarray:
    cum = np.cumsum(model.p, axis=1)
    # Guard the last nonzero entry against round-off in the row sum.
    for i in range(model.n):
        nz = np.nonzero(model.p[i])[0]
        if nz.size:
            cum[i, nz[-1] :] = np.inf
    return cum


def simulate_trajectory(model: SmpModel, start_state, horizon: float, seed: int) -> TrajectoryRecord:
    """Simulate one path until absorption or ``horizon``."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    rng = _rng(seed, 0)
    cum = _cumulative_rows(model)
    state = model.index(start_state)
    clock = 0.0
    events = []
    while not model.absorbing[state]:
        nxt = int(np.searchsorted(cum[state], rng.random(), side="right"))
        clock += float(model.dists[state][nxt].sample(rng, 1)[0])
        if clock > horizon:
            break
        events.append((clock, model.labels[nxt]))
        state = nxt
    return TrajectoryRecord(model.labels[model.index(start_state)], tuple(events), float(horizon))


def _simulate_block(model, cum, start, times, size, rng):
    """Return (state at each time, visit counts at each time) for one block."""
    n_times = times.size
    horizon = times[-1]
    state = np.full(size, start, dtype=np.int64)
    clock = np.zeros(size)
    occupied = np.full((size, n_times), -1, dtype=np.int64)
    counts = np.zeros((size, n_times, model.n), dtype=np.int32)
    active = np.arange(size)
    absorbing = model.absorbing
    while active.size:
        cur = state[active]
        done = absorbing[cur]
        # Absorbed paths occupy their state for the rest of the grid.
        if np.any(done):
            idx = active[done]
            open_ = occupied[idx] < 0
            occupied[idx] = np.where(open_, state[idx][:, None], occupied[idx])
            active = active[~done]
            cur = cur[~done]
            if not active.size:
                break
        u = rng.random(active.size)
        nxt = (u[:, None] >= cum[cur]).sum(axis=1)
        wait = np.empty(active.size)
        pair = cur * model.n + nxt
        for code in np.unique(pair):
            sel = pair == code
            i, j = divmod(int(code), model.n)
            wait[sel] = model.dists[i][j].sample(rng, int(sel.sum()))
        leave = clock[active] + wait
        # The current state is occupied on [entry, leave).
        in_state = (times[None, :] < leave[:, None]) & (occupied[active] < 0)
        occupied[active] = np.where(in_state, cur[:, None], occupied[active])
        counted = times[None, :] >= leave[:, None]
        counts[active, :, nxt] += counted
        clock[active] = leave
        state[active] = nxt
        active = active[leave <= horizon]
    return occupied, counts


def simulate_counts(model: SmpModel, start_state, times, n_traj: int, seed: int, workers: int = 1):
    """Simulate ``n_traj`` paths and return (Z(times), N(times)) arrays.

    Shapes are (n_traj, len(times)) and (n_traj, len(times), n).
    """
    times = np.sort(np.atleast_1d(np.asarray(times, dtype=float)))
    if n_traj < 1:
        raise ValueError("n_traj must be at least 1")
    start = model.index(start_state)
    cum = _cumulative_rows(model)
    blocks = [(b, min(BLOCK_SIZE, n_traj - b * BLOCK_SIZE)) for b in range(math.ceil(n_traj / BLOCK_SIZE))]

    def run(block):
        b, size = block
        return _simulate_block(model, cum, start, times, size, _rng(seed, b + 1))

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    occupied = np.concatenate([p[0] for p in parts])
    counts = np.concatenate([p[1] for p in parts])
    return occupied, counts


def estimate(model: SmpModel, start_state, kind: str, times, n_traj: int, seed: int, k: int | None = None,
             workers: int = 1) -> Estimate:
    """Monte Carlo estimate of P, G, v(k), V(k) or M from ``start_state``.

    Standard errors are binomial for the indicator quantities and the
    sample standard error for M.
    """
    if kind not in ESTIMATE_KINDS:
        raise ValueError(f"cannot estimate {kind!r}; choose from {ESTIMATE_KINDS}")
    if kind in ("v", "V") and (k is None or k < 0):
        raise ValueError(f"{kind} needs a nonnegative visit count k")
    times = np.sort(np.atleast_1d(np.asarray(times, dtype=float)))
    occupied, counts = simulate_counts(model, start_state, times, n_traj, seed, workers)
    return summarise(model, start_state, kind, times, occupied, counts, k)


def summarise(model, start_state, kind, times, occupied, counts, k=None) -> Estimate:
    n_traj = occupied.shape[0]
    if kind == "P":
        ind = occupied[:, :, None] == np.arange(model.n)[None, None, :]
    elif kind == "G":
        ind = counts > 0
    elif kind == "v":
        ind = counts == k
    elif kind == "V":
        ind = counts <= k
    else:
        ind = None
    if ind is not None:
        # Integer sums keep the indicator estimates exact and order independent.
        hits = ind.sum(axis=0, dtype=np.int64)
        mean = hits / n_traj
        stderr = np.sqrt(mean * (1.0 - mean) / n_traj)
    else:
        total = counts.sum(axis=0, dtype=np.int64)
        sq = (counts.astype(np.int64) ** 2).sum(axis=0)
        mean = total / n_traj
        var = np.maximum(sq / n_traj - mean**2, 0.0) * n_traj / max(n_traj - 1, 1)
        stderr = np.sqrt(var / n_traj)
    return Estimate(kind, times, model.labels, model.labels[model.index(start_state)], mean, stderr, n_traj, k)


def deviation_in_se(analytic, est: Estimate) -> np.ndarray:
    """|analytic - estimate| in standard-error units.

    For indicator quantities the binomial error uses the larger of the
    analytic and empirical variances, so a cell that happens to have no
    hits is not scored against a zero error.  Errors are floored at 1/n,
    the resolution of an n-path estimator.
    """
    analytic = np.asarray(analytic, dtype=float)
    n = est.n_traj
    if est.kind == "M":
        se = est.stderr
    else:
        a = np.clip(analytic, 0.0, 1.0)
        se = np.sqrt(np.maximum(a * (1.0 - a), est.mean * (1.0 - est.mean)) / n)
    return np.abs(analytic - est.mean) / np.maximum(se, 1.0 / n)
