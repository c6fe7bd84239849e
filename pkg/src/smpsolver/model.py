"""Finite-state semi-Markov model: validation, classification, kernel transforms."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .distributions import WaitingTimeDistribution
from .errors import ModelValidationError

__all__ = [
    "SmpModel",
    "StateClassification",
    "validate",
    "classify_states",
    "kernel_lt",
    "holding_lt",
]

ROW_SUM_TOL = 1e-9

ABSORBING = "absorbing"
TRANSIENT = "transient"
RECURRENT = "recurrent"


@dataclass(frozen=True, eq=False)
class SmpModel:
    """A validated model. Build it with :func:`validate`, not directly."""

    labels: tuple[str, ...]
    p: np.ndarray
    dists: tuple[tuple[WaitingTimeDistribution | None, ...], ...]

    @property
    def n(self) -> int:
        return len(self.labels)

    def index(self, state) -> int:
        """Position of a state given by label or integer index."""
        if isinstance(state, (int, np.integer)):
            if not 0 <= state < self.n:
                raise KeyError(f"state index {state} out of range")
            return int(state)
        try:
            return self.labels.index(state)
        except ValueError:
            raise KeyError(f"unknown state {state!r}") from None

    @property
    def absorbing(self) -> np.ndarray:
        return self.p.sum(axis=1) == 0

    @property
    def is_smooth(self) -> bool:
        return all(d.smooth for row in self.dists for d in row if d is not None)

    def distinct_distributions(self) -> list[WaitingTimeDistribution]:
        out: list[WaitingTimeDistribution] = []
        for row in self.dists:
            for d in row:
                if d is not None and not any(d is e or d == e for e in out):
                    out.append(d)
        return out

    def mean_holding_times(self) -> np.ndarray:
        """Expected sojourn per state, sum_k p_jk * mean(F_jk); 0 for absorbing states."""
        out = np.zeros(self.n)
        for i, row in enumerate(self.dists):
            for j, d in enumerate(row):
                if d is not None:
                    out[i] += self.p[i, j] * d.mean()
        return out


@dataclass(frozen=True)
class StateClassification:
    labels: tuple[str, ...]
    tags: tuple[str, ...]

    def __getitem__(self, state):
        if isinstance(state, (int, np.integer)):
            return self.tags[state]
        return self.tags[self.labels.index(state)]

    def of_kind(self, kind: str) -> list[str]:
        return [lab for lab, tag in zip(self.labels, self.tags) if tag == kind]

    @property
    def absorbing(self) -> list[str]:
        return self.of_kind(ABSORBING)

    @property
    def transient(self) -> list[str]:
        return self.of_kind(TRANSIENT)

    @property
    def recurrent(self) -> list[str]:
        return self.of_kind(RECURRENT)


def validate(
    labels: Sequence[str],
    p,
    dists: Sequence[Sequence[WaitingTimeDistribution | None]] | Mapping,
    *,
    tolerance: float = ROW_SUM_TOL,
) -> SmpModel:
    """Check the model assumptions and return an immutable :class:`SmpModel`.

    ``dists`` is either an n x n nested sequence (``None`` where there is no
    transition) or a mapping ``{(from_label, to_label): dist}``.  Every
    violation is collected and reported together in a
    :class:`ModelValidationError`.
    """
    labels = tuple(str(lab) for lab in labels)
    problems: list[str] = []
    n = len(labels)
    if n == 0:
        raise ModelValidationError(["model has no states"])
    if len(set(labels)) != n:
        dupes = sorted({lab for lab in labels if labels.count(lab) > 1})
        problems.append(f"duplicate state labels: {', '.join(dupes)}")

    p = np.array(p, dtype=float)
    if p.shape != (n, n):
        raise ModelValidationError([f"transition matrix has shape {p.shape}, expected {(n, n)}"])

    if isinstance(dists, Mapping):
        grid: list[list[WaitingTimeDistribution | None]] = [[None] * n for _ in range(n)]
        for (a, b), d in dists.items():
            try:
                grid[labels.index(a)][labels.index(b)] = d
            except ValueError:
                problems.append(f"distribution given for unknown transition {a} -> {b}")
        dists = grid
    dists = [list(row) for row in dists]
    if len(dists) != n or any(len(row) != n for row in dists):
        raise ModelValidationError([f"distribution matrix must be {n} x {n}"])

    for i, a in enumerate(labels):
        row = p[i]
        if not np.all(np.isfinite(row)):
            problems.append(f"state {a}: non-finite transition probability")
            continue
        for j, b in enumerate(labels):
            if row[j] < 0:
                problems.append(f"{a} -> {b}: negative probability {row[j]:g}")
        if row[i] != 0:
            problems.append(f"{a} -> {a}: self-transition (p = {row[i]:g}) is not allowed")
        total = row.sum()
        if abs(total) > tolerance and abs(total - 1.0) > tolerance:
            problems.append(f"state {a}: outgoing probabilities sum to {total:.10g}, expected 1 or 0")
        for j, b in enumerate(labels):
            d = dists[i][j]
            if row[j] > 0 and d is None:
                problems.append(f"{a} -> {b}: missing waiting-time distribution")
            elif row[j] == 0 and d is not None:
                problems.append(f"{a} -> {b}: distribution given but probability is 0")
            elif d is not None and not isinstance(d, WaitingTimeDistribution):
                problems.append(f"{a} -> {b}: {d!r} is not a waiting-time distribution")
    if problems:
        raise ModelValidationError(problems)

    p.setflags(write=False)
    return SmpModel(labels, p, tuple(tuple(row) for row in dists))


def classify_states(model: SmpModel) -> StateClassification:
    """Tag each state absorbing, transient or recurrent.

    A non-absorbing state is recurrent when its strongly connected component
    has no edge leaving it.
    """
    adj = model.p > 0
    _, comp = connected_components(adj.astype(np.int8), directed=True, connection="strong")
    closed = np.ones(comp.max() + 1, dtype=bool)
    for i, j in zip(*np.nonzero(adj)):
        if comp[i] != comp[j]:
            closed[comp[i]] = False
    tags = []
    for i in range(model.n):
        if model.absorbing[i]:
            tags.append(ABSORBING)
        elif closed[comp[i]]:
            tags.append(RECURRENT)
        else:
            tags.append(TRANSIENT)
    return StateClassification(model.labels, tuple(tags))


def kernel_lt(model: SmpModel, s) -> np.ndarray:
    """Transform of the semi-Markov kernel, ``p_ij * LT[f_ij](s)``.

    ``s`` may be a scalar (returns n x n) or a 1-d array of nodes (returns
    len(s) x n x n).  Each distinct distribution is evaluated once for the
    whole node set.
    """
    s_arr = np.atleast_1d(np.asarray(s, dtype=complex))
    n = model.n
    out = np.zeros((s_arr.size, n, n), dtype=complex)
    values: dict[int, np.ndarray] = {}
    for i, row in enumerate(model.dists):
        for j, d in enumerate(row):
            if d is None:
                continue
            key = id(d)
            if key not in values:
                values[key] = np.atleast_1d(d.laplace_transform(s_arr))
            out[:, i, j] = model.p[i, j] * values[key]
    return out[0] if np.ndim(s) == 0 else out


def holding_lt(model: SmpModel, s) -> np.ndarray:
    """Diagonal matrix of row sums of :func:`kernel_lt`."""
    q = kernel_lt(model, s)
    return _diag_of_row_sums(q)


def _diag_of_row_sums(q: np.ndarray) -> np.ndarray:
    h = np.zeros_like(q)
    idx = np.arange(q.shape[-1])
    h[..., idx, idx] = q.sum(axis=-1)
    return h
