"""Time-dependent and limiting quantities of a semi-Markov process.

Every time-domain quantity is obtained by building its matrix transform at
the Euler nodes of a time point and inverting entrywise.  The expensive part
is the kernel transform q~(s); :class:`SmpSolver` computes it, the resolvent
``(I - q~)^-1`` and the first-passage transform g~ once per time point and
reuses them for every quantity requested at that point.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, SingularMatrixError, UndefinedQuantityError
from .model import ABSORBING, RECURRENT, SmpModel, classify_states, kernel_lt, _diag_of_row_sums
from .transform import DEFAULT_CONFIG, EulerConfig, complex_linear_solve, euler_invert, euler_nodes

__all__ = [
    "QuantityResult",
    "LimitMatrix",
    "SmpSolver",
    "state_probabilities",
    "expected_occupancy",
    "first_passage_lt",
    "first_passage",
    "conditional_hazard",
    "count_probability",
    "count_cdf",
    "expected_visits",
    "reach_probability",
    "asymptotic_probabilities",
]

PROB_SLACK = 1e-5
PROBABILITY_KINDS = {"P", "G", "v", "V"}
KINDS = {"P", "occupancy", "G", "g", "v", "V", "M", "hazard"}
# Real frequencies used to extrapolate transforms to s = 0, in units of
# 1 / (mean holding time).
LIMIT_LADDER = (1e-5, 5e-6, 2.5e-6)
LIMIT_TOL = 1e-4
HAZARD_MIN_MASS = 1e-6


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get("SMP_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class QuantityResult:
    """A matrix-valued function of time sampled on a grid.

    ``values[m, i, j]`` is the quantity for start state ``i`` and target
    ``j`` at ``times[m]``.
    """

    kind: str
    times: np.ndarray
    values: np.ndarray
    labels: tuple[str, ...]
    k: int | None = None
    start_state: str | None = None
    target: str | None = None
    accuracy_guaranteed: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown quantity kind {self.kind!r}")
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.kind in PROBABILITY_KINDS:
            lo, hi = np.nanmin(self.values), np.nanmax(self.values)
            if lo < -PROB_SLACK or hi > 1 + PROB_SLACK:
                raise NumericalError(
                    f"{self.kind} values outside [0, 1] beyond slack: range [{lo:.3g}, {hi:.3g}]"
                )

    def row(self, state=None) -> np.ndarray:
        """Values for one start state, shape (len(times), n)."""
        state = self.start_state if state is None else state
        if state is None:
            raise ValueError("no start state given")
        i = state if isinstance(state, int) else self.labels.index(state)
        return self.values[:, i, :]

    @property
    def series(self) -> np.ndarray:
        if self.start_state is None or self.target is None:
            raise ValueError("series needs both start_state and target")
        return self.values[:, self.labels.index(self.start_state), self.labels.index(self.target)]

    def presented(self) -> np.ndarray:
        """Values with round-off excursions below 0 (and above 1 for probabilities) clamped."""
        out = np.clip(self.values, 0.0, None)
        if self.kind in PROBABILITY_KINDS:
            out = np.clip(out, None, 1.0)
        return out


@dataclass
class LimitMatrix:
    """An s -> 0 limit matrix with any extrapolation warnings attached."""

    values: np.ndarray
    labels: tuple[str, ...]
    warnings: list[str] = field(default_factory=list)

    def __getitem__(self, key):
        i, j = key
        if not isinstance(i, (int, np.integer)):
            i = self.labels.index(i)
        if not isinstance(j, (int, np.integer)):
            j = self.labels.index(j)
        return self.values[i, j]


@dataclass
class _Bundle:
    t: float
    s: np.ndarray
    q: np.ndarray
    resolvent: np.ndarray
    g: np.ndarray

    @property
    def s3(self):
        return self.s[:, None, None]


def _first_passage_from(q: np.ndarray, resolvent: np.ndarray) -> np.ndarray:
    # q R [I o R]^-1: scale column j of q R by 1 / R_jj.
    diag = np.diagonal(resolvent, axis1=-2, axis2=-1)
    if np.any(diag == 0):
        raise SingularMatrixError("zero diagonal entry in (I - q~)^-1")
    return (q @ resolvent) / diag[..., None, :]


class SmpSolver:
    """Solve for quantities of one model, sharing transform work across them.

    Parameters
    ----------
    model : SmpModel
    config : EulerConfig, optional
        Inversion parameters; defaults to A=18.4, 38 + 11 terms.
    workers : int, optional
        Thread count for evaluating distinct time points.  Defaults to the
        ``SMP_THREADS`` environment variable, else 1.
    """

    def __init__(self, model: SmpModel, config: EulerConfig | None = None, workers: int | None = None):
        self.model = model
        self.config = config or DEFAULT_CONFIG
        self.workers = workers or _default_workers()
        self._bundles: dict[float, _Bundle] = {}
        self._eye = np.eye(model.n)
        self._reach: LimitMatrix | None = None
        self._ladder_cache: tuple[np.ndarray, np.ndarray] | None = None

    # -- transform-domain pieces -----------------------------------------

    def _solve_at(self, s: np.ndarray, t: float | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        q = kernel_lt(self.model, s)
        try:
            resolvent = complex_linear_solve(self._eye - q, np.broadcast_to(self._eye, q.shape))
            g = _first_passage_from(q, resolvent)
        except SingularMatrixError as exc:
            idx = getattr(exc, "batch_index", None)
            exc.t = t
            exc.node = complex(s[idx]) if idx is not None else None
            raise
        except NumericalError as exc:
            exc.t = t
            raise
        return q, resolvent, g

    def _bundle(self, t: float) -> _Bundle:
        t = float(t)
        b = self._bundles.get(t)
        if b is None:
            s = euler_nodes(t, self.config)
            try:
                q, resolvent, g = self._solve_at(s, t)
            except NumericalError as exc:
                if exc.t is None:
                    exc.t = t
                raise
            b = _Bundle(t, s, q, resolvent, g)
            self._bundles[t] = b
        return b

    def _prepare(self, times) -> np.ndarray:
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if times.ndim != 1 or times.size == 0:
            raise ValueError("times must be a nonempty 1-d grid")
        if np.any(times <= 0) or not np.all(np.isfinite(times)):
            raise ValueError("times must be positive and finite")
        missing = [t for t in dict.fromkeys(times.tolist()) if t not in self._bundles]
        if self.workers > 1 and len(missing) > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                list(pool.map(self._bundle, missing))
        else:
            for t in missing:
                self._bundle(t)
        return times

    def _invert(self, times, transform) -> np.ndarray:
        times = self._prepare(times)
        out = np.empty((times.size, self.model.n, self.model.n))
        for m, t in enumerate(times):
            out[m] = euler_invert(transform(self._bundles[float(t)]), t, self.config)
        return out

    def _result(self, kind, times, values, start=None, **kw) -> QuantityResult:
        start_label = None if start is None else self.model.labels[self.model.index(start)]
        return QuantityResult(
            kind,
            np.atleast_1d(np.asarray(times, dtype=float)),
            values,
            self.model.labels,
            start_state=start_label,
            accuracy_guaranteed=self.model.is_smooth,
            **kw,
        )

    # -- quantities ------------------------------------------------------

    def _state_prob_lt(self, b: _Bundle) -> np.ndarray:
        h = _diag_of_row_sums(b.q)
        return b.resolvent @ (self._eye - h) / b.s3

    def state_probabilities(self, times, start=None) -> QuantityResult:
        """P_ij(t) = P(Z(t) = j | Z(0) = i)."""
        return self._result("P", times, self._invert(times, self._state_prob_lt), start)

    def expected_occupancy(self, times, start=None) -> QuantityResult:
        """Expected time spent in j during [0, t], i.e. the integral of P_ij."""
        values = self._invert(times, lambda b: self._state_prob_lt(b) / b.s3)
        return self._result("occupancy", times, values, start)

    def first_passage_lt(self, s) -> np.ndarray:
        """g~(s) at arbitrary nodes with Re(s) > 0."""
        s_arr = np.atleast_1d(np.asarray(s, dtype=complex))
        if np.any(s_arr.real <= 0):
            raise ValueError("first_passage_lt requires Re(s) > 0")
        g = self._solve_at(s_arr)[2]
        return g[0] if np.ndim(s) == 0 else g

    def first_passage(self, times, start=None) -> tuple[QuantityResult, QuantityResult]:
        """First-passage CDFs G(t) and densities g(t)."""
        big = self._invert(times, lambda b: b.g / b.s3)
        small = self._invert(times, lambda b: b.g)
        return self._result("G", times, big, start), self._result("g", times, small, start)

    def hazard(self, times, start=None) -> QuantityResult:
        """Conditional first-passage hazard g / (G(inf) - G) for every pair.

        Entries are NaN where G_ij(inf) is below ``HAZARD_MIN_MASS`` (never
        reached) or where the remaining mass G_ij(inf) - G_ij(t) is below it,
        since the inversion error (about 1e-8) then swamps the denominator.
        """
        G, g = self.first_passage(times, start)
        limit = self.reach_probability().values
        remaining = limit - G.values
        defined = (limit >= HAZARD_MIN_MASS) & (remaining >= HAZARD_MIN_MASS)
        with np.errstate(divide="ignore", invalid="ignore"):
            values = np.where(defined, g.values / remaining, np.nan)
        return self._result("hazard", times, values, start)

    def conditional_hazard(self, i, j, times) -> QuantityResult:
        i_idx, j_idx = self.model.index(i), self.model.index(j)
        limit = self.reach_probability().values[i_idx, j_idx]
        if limit < HAZARD_MIN_MASS:
            raise UndefinedQuantityError(
                f"hazard {self.model.labels[i_idx]} -> {self.model.labels[j_idx]} undefined: "
                f"G(inf) = {limit:.3g}"
            )
        res = self.hazard(times, i_idx)
        res.target = self.model.labels[j_idx]
        return res

    def count_probability(self, k: int, times, start=None) -> QuantityResult:
        """v_ij(k; t) = P(N_j(t) = k | Z(0) = i); entry into the start state at 0 is not counted."""
        k = _check_k(k)

        def transform(b):
            if k == 0:
                return (1.0 - b.g) / b.s3
            gd = np.diagonal(b.g, axis1=-2, axis2=-1)[:, None, :]
            return b.g * (1.0 - gd) * gd ** (k - 1) / b.s3

        return self._result("v", times, self._invert(times, transform), start, k=k)

    def count_cdf(self, k: int, times, start=None) -> QuantityResult:
        """V_ij(k; t) = P(N_j(t) <= k | Z(0) = i)."""
        k = _check_k(k)

        def transform(b):
            gd = np.diagonal(b.g, axis1=-2, axis2=-1)[:, None, :]
            return (1.0 - b.g * gd**k) / b.s3

        return self._result("V", times, self._invert(times, transform), start, k=k)

    def expected_visits(self, times, start=None) -> QuantityResult:
        """M_ij(t) = E[N_j(t) | Z(0) = i]."""
        values = self._invert(times, lambda b: (b.resolvent - self._eye) / b.s3)
        return self._result("M", times, values, start)

    # -- limits ----------------------------------------------------------

    def _ladder(self) -> tuple[np.ndarray, np.ndarray]:
        if self._ladder_cache is None:
            holding = self.model.mean_holding_times()
            active = holding[holding > 0]
            scale = float(active.mean()) if active.size else 1.0
            s = np.array(LIMIT_LADDER) / scale
            self._ladder_cache = (s, self._solve_at(s.astype(complex))[2].real)
        return self._ladder_cache

    def reach_probability(self) -> LimitMatrix:
        """G_ij(inf), by Richardson extrapolation of g~ at small real s."""
        if self._reach is None:
            _, g = self._ladder()
            first = 2.0 * g[1] - g[0]
            second = 2.0 * g[2] - g[1]
            values = (4.0 * second - first) / 3.0
            notes = []
            gap = float(np.max(np.abs(first - second)))
            if gap > LIMIT_TOL:
                notes.append(f"G(inf) extrapolants disagree by {gap:.3g}")
                warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
            self._reach = LimitMatrix(values, self.model.labels, notes)
        return self._reach

    def mean_return_times(self) -> LimitMatrix:
        """-d g~_jj / ds at 0 for each state (infinite where G_jj(inf) < 1)."""
        s, g = self._ladder()
        diag = np.diagonal(g, axis1=-2, axis2=-1)
        d1 = (diag[0] - diag[1]) / (s[0] - s[1])
        d2 = (diag[1] - diag[2]) / (s[1] - s[2])
        # Difference quotients sit at the interval midpoints; the ladder halves each step.
        slope = 2.0 * d2 - d1
        notes = []
        reach = np.diagonal(self.reach_probability().values)
        recurrent = np.abs(reach - 1.0) < 1e-6
        values = np.where(recurrent, -slope, np.inf)
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.abs(d1 - d2) / np.abs(slope)
        for j in np.nonzero(recurrent & (rel > 1e-3))[0]:
            notes.append(f"mean return time of {self.model.labels[j]} extrapolation spread {rel[j]:.3g}")
        return LimitMatrix(np.diag(values), self.model.labels, notes)

    def asymptotic_probabilities(self) -> LimitMatrix:
        """Limiting probabilities pi_ij = lim P_ij(t).

        Absorbing targets take pi_ij = G_ij(inf), transient targets 0, and
        recurrent targets G_ij(inf) * (mean holding time) / (mean return time).
        """
        model = self.model
        for row in model.dists:
            for d in row:
                if d is not None and not np.isfinite(d.mean()):
                    raise UndefinedQuantityError(f"{d} has infinite mean; limits undefined")
        classes = classify_states(model)
        reach = self.reach_probability()
        notes = list(reach.warnings)
        pi = np.zeros((model.n, model.n))
        holding = model.mean_holding_times()
        returns = None
        for j in range(model.n):
            tag = classes.tags[j]
            if tag == ABSORBING:
                pi[:, j] = reach.values[:, j]
                pi[j, j] = 1.0
            elif tag == RECURRENT:
                if returns is None:
                    returns = self.mean_return_times()
                    notes.extend(returns.warnings)
                pi[:, j] = reach.values[:, j] * holding[j] / returns.values[j, j]
        return LimitMatrix(pi, model.labels, notes)


def _check_k(k) -> int:
    if int(k) != k or k < 0:
        raise ValueError(f"visit count k must be a nonnegative integer, got {k}")
    return int(k)


# Functional entry points.  Each builds a throwaway solver; reuse an
# SmpSolver directly to share transform work between quantities.


def state_probabilities(model, times, config=None) -> QuantityResult:
    return SmpSolver(model, config).state_probabilities(times)


def expected_occupancy(model, times, config=None) -> QuantityResult:
    return SmpSolver(model, config).expected_occupancy(times)


def first_passage_lt(model, s) -> np.ndarray:
    return SmpSolver(model).first_passage_lt(s)


def first_passage(model, times, config=None):
    return SmpSolver(model, config).first_passage(times)


def conditional_hazard(model, i, j, times, config=None) -> QuantityResult:
    return SmpSolver(model, config).conditional_hazard(i, j, times)


def count_probability(model, k, times, config=None) -> QuantityResult:
    return SmpSolver(model, config).count_probability(k, times)


def count_cdf(model, k, times, config=None) -> QuantityResult:
    return SmpSolver(model, config).count_cdf(k, times)


def expected_visits(model, times, config=None) -> QuantityResult:
    return SmpSolver(model, config).expected_visits(times)


def reach_probability(model) -> LimitMatrix:
    return SmpSolver(model).reach_probability()


def asymptotic_probabilities(model) -> LimitMatrix:
    return SmpSolver(model).asymptotic_probabilities()
