"""Waiting-time distributions and their Laplace transforms.

Weibull uses the ``exp(-x**gamma / theta)`` parameterization throughout:

.. math:: f(x) = \\frac{\\gamma}{\\theta} x^{\\gamma-1} e^{-x^\\gamma/\\theta}

so ``theta`` is *not* a scale in the conventional sense; the mean is
``theta**(1/gamma) * Gamma(1 + 1/gamma)``.  Transforms without a closed form
are computed by Gauss-Legendre quadrature of the real and imaginary parts on
panels aligned with the oscillation period of ``exp(-i*y*x)``.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import QuadratureError, UnsupportedOperationError

__all__ = [
    "WaitingTimeDistribution",
    "Weibull",
    "Exponential",
    "Empirical",
    "pdf",
    "cdf",
    "mean",
    "laplace_transform",
    "clear_lt_cache",
]

# Tail mass left out of the numeric transform.
TAIL_MASS = 1e-12
# exp(-37) ~ 1e-16: beyond this the damping factor makes contributions negligible.
DAMPING_CUTOFF = 37.0
REL_TOL = 1e-10
ABS_TOL = 1e-14
ROUNDOFF = 100 * np.finfo(float).eps
GAUSS_ORDER = 12
MAX_REFINEMENTS = 10
BASE_PANELS = 32
GRADED_LEVELS = 50
# Above this many panels on the real axis the transform is taken along a rotated ray.
MAX_PANELS = 4096


def _check_time(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ValueError("waiting time must be nonnegative")
    return x


class WaitingTimeDistribution:
    """Common interface for waiting-time laws.

    Subclasses are frozen dataclasses so that they can be shared between
    cells of a kernel matrix and used as cache keys.
    """

    kind: str = ""
    smooth = True

    def pdf(self, x):
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def laplace_transform(self, s):
        """Evaluate the transform at complex ``s`` (scalar or array), Re(s) >= 0."""
        s_arr = np.asarray(s, dtype=complex)
        if np.any(s_arr.real < 0):
            raise ValueError("laplace_transform requires Re(s) >= 0")
        out = _lt_cached(self, s_arr.ravel()).reshape(s_arr.shape)
        return out[()] if out.ndim == 0 else out

    def _lt(self, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class Weibull(WaitingTimeDistribution):
    gamma: float
    theta: float
    kind = "weibull"

    def __post_init__(self):
        if not (self.gamma > 0 and self.theta > 0) or not (
            math.isfinite(self.gamma) and math.isfinite(self.theta)
        ):
            raise ValueError(f"Weibull parameters must be positive and finite, got {self}")

    def pdf(self, x):
        x = _check_time(x)
        g, th = self.gamma, self.theta
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = (g / th) * np.power(x, g - 1.0) * np.exp(-np.power(x, g) / th)
        if g == 1.0:
            out = np.where(x == 0, 1.0 / th, out)
        elif g > 1.0:
            out = np.where(x == 0, 0.0, out)
        return out[()] if out.ndim == 0 else out

    def cdf(self, x):
        x = _check_time(x)
        out = -np.expm1(-np.power(x, self.gamma) / self.theta)
        return out[()] if out.ndim == 0 else out

    def quantile(self, prob):
        prob = np.asarray(prob, dtype=float)
        out = np.power(-self.theta * np.log1p(-prob), 1.0 / self.gamma)
        return out[()] if out.ndim == 0 else out

    def mean(self) -> float:
        return float(self.theta ** (1.0 / self.gamma) * gamma_fn(1.0 + 1.0 / self.gamma))

    def sample(self, rng, size):
        u = rng.random(size)
        return np.power(-self.theta * np.log1p(-u), 1.0 / self.gamma)

    def _lt(self, s):
        if self.gamma == 1.0:
            rate = 1.0 / self.theta
            return rate / (rate + s)
        return _numeric_lt(self, s)

    def truncation_point(self) -> float:
        """Smallest x with cdf(x) >= 1 - TAIL_MASS."""
        return float(self.quantile(1.0 - TAIL_MASS))


@dataclass(frozen=True)
class Exponential(WaitingTimeDistribution):
    rate: float
    kind = "exponential"

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ValueError(f"Exponential rate must be positive and finite, got {self.rate}")

    def pdf(self, x):
        x = _check_time(x)
        out = self.rate * np.exp(-self.rate * x)
        return out[()] if out.ndim == 0 else out

    def cdf(self, x):
        x = _check_time(x)
        out = -np.expm1(-self.rate * x)
        return out[()] if out.ndim == 0 else out

    def mean(self) -> float:
        return 1.0 / self.rate

    def sample(self, rng, size):
        return -np.log1p(-rng.random(size)) / self.rate

    def _lt(self, s):
        return self.rate / (self.rate + s)


@dataclass(frozen=True, eq=False)
class Empirical(WaitingTimeDistribution):
    """Empirical law of a waiting-time sample.

    The transform is the empirical Laplace transform ``mean(exp(-s * x_i))``.
    Equality and hashing are by identity; samples can be large.
    """

    samples: np.ndarray = field(repr=False)
    source: str | None = None
    kind = "empirical"
    smooth = False

    def __post_init__(self):
        arr = np.sort(np.asarray(self.samples, dtype=float).ravel())
        if arr.size == 0:
            raise ValueError("empirical distribution needs at least one sample")
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            raise ValueError("empirical samples must be finite and strictly positive")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @classmethod
    def from_csv(cls, path) -> "Empirical":
        """Read one positive real per line, no header."""
        path = Path(path)
        values = []
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            line = line.strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: not a number: {line!r}") from None
        return cls(np.array(values), source=str(path))

    def pdf(self, x):
        raise UnsupportedOperationError("empirical distributions have no density")

    def cdf(self, x):
        x = _check_time(x)
        out = np.searchsorted(self.samples, x, side="right") / self.samples.size
        return out[()] if np.ndim(out) == 0 else out

    def mean(self) -> float:
        return float(np.mean(self.samples))

    def sample(self, rng, size):
        return self.samples[rng.integers(0, self.samples.size, size)]

    def _lt(self, s):
        out = np.empty(s.shape, dtype=complex)
        chunk = max(1, 2_000_000 // self.samples.size)
        for lo in range(0, s.size, chunk):
            block = s[lo : lo + chunk]
            out[lo : lo + chunk] = np.exp(-np.outer(block, self.samples)).mean(axis=1)
        return out


# ---------------------------------------------------------------------------
# numeric transform

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss_legendre(order):
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


def _integration_range(dist: Weibull, s: np.ndarray) -> tuple[float, bool]:
    x_min = float(np.min(s.real))
    end = dist.truncation_point()
    if x_min > 0 and DAMPING_CUTOFF / x_min < end:
        return DAMPING_CUTOFF / x_min, False
    return end, True


def _panel_edges(dist: Weibull, s: np.ndarray, end: float) -> np.ndarray:
    y_max = float(np.max(np.abs(s.imag)))
    width = end / BASE_PANELS
    if y_max > 0:
        width = min(width, math.pi / y_max)
    count = max(1, math.ceil(end / width))
    edges = np.linspace(0.0, end, count + 1)
    if dist.gamma != round(dist.gamma):
        # Geometric grading toward 0 handles the x**(gamma-1) endpoint behaviour.
        levels = GRADED_LEVELS if dist.gamma < 1.0 else GRADED_LEVELS // 2
        graded = edges[1] * 0.5 ** np.arange(1, levels + 1)
        edges = np.unique(np.concatenate([graded, edges]))
    return edges


def _panel_sums(dist: Weibull, s: np.ndarray, lo: np.ndarray, hi: np.ndarray, order: int):
    nodes, weights = _gauss_legendre(order)
    if dist.gamma < 1.0:
        # Integrate in u = x**gamma, where f(x) dx = exp(-u/theta) du / theta is
        # bounded; the x**(gamma-1) singularity at 0 is gone.
        ulo, uhi = lo**dist.gamma, hi**dist.gamma
        half = 0.5 * (uhi - ulo)
        u = (0.5 * (uhi + ulo))[:, None] + half[:, None] * nodes[None, :]
        xi = u ** (1.0 / dist.gamma)
        w = half[:, None] * weights[None, :] * np.exp(-u / dist.theta) / dist.theta
    else:
        half = 0.5 * (hi - lo)
        xi = (0.5 * (hi + lo))[:, None] + half[:, None] * nodes[None, :]
        w = half[:, None] * weights[None, :] * dist.pdf(xi)
    return np.einsum("mpk,pk->mp", _damped_oscillation(s, xi), w)


def _damped_oscillation(s: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """exp(-s * xi) for every s, i.e. exp(-a xi) (cos(b xi) - i sin(b xi)).

    Euler nodes share a real part and are equally spaced in the imaginary
    direction; then each row is the previous one times a fixed unit-modulus
    factor, which is much cheaper than a complex exp per point.
    """
    step = np.diff(s)
    if s.size > 2 and np.all(step.real == 0) and np.allclose(step, step[0], rtol=0, atol=1e-12 * abs(step[0])):
        factors = np.empty((s.size,) + xi.shape, dtype=complex)
        factors[0] = np.exp(-s[0] * xi)
        factors[1:] = np.exp(-step[0] * xi)
        return np.cumprod(factors, axis=0)
    return np.exp(-s[:, None, None] * xi[None])


def _real_axis_panels(dist: Weibull, s: np.ndarray, end: float) -> int:
    y_max = float(np.max(np.abs(s.imag)))
    return math.ceil(end * y_max / math.pi) if y_max > 0 else BASE_PANELS


def _numeric_lt(dist: Weibull, s: np.ndarray) -> np.ndarray:
    end, truncated_tail = _integration_range(dist, s)
    if _real_axis_panels(dist, s, end) > MAX_PANELS:
        return np.array([_rotated_lt(dist, complex(z)) for z in s])
    edges = _panel_edges(dist, s, end)
    # First-order correction for the omitted tail mass beyond the quantile cut.
    tail = np.exp(-s * end) * (1.0 - dist.cdf(end)) if truncated_tail else 0.0
    return _refine(dist, s, edges, lambda lo, hi, order: _panel_sums(dist, s, lo, hi, order)) + tail


def _rotated_lt(dist: Weibull, s: complex) -> complex:
    """Transform at one weakly damped node, integrating along a rotated ray.

    With z = r exp(-i phi) and u = r**gamma the transform becomes

        int_0^inf (c/theta) exp(-c u/theta - w u**(1/gamma)) du,

    c = exp(-i gamma phi), w = s exp(-i phi).  Taking phi = arg(s) turns the
    oscillation of exp(-s z) into decay.  The density is analytic in the
    sector, so the path may be rotated while gamma * phi stays below pi/2.
    """
    if s.imag < 0:
        return _rotated_lt(dist, s.conjugate()).conjugate()
    g, theta = dist.gamma, dist.theta
    phi = min(math.atan2(s.imag, s.real), 0.45 * math.pi / max(g, 1.0))
    c = complex(math.cos(g * phi), -math.sin(g * phi))
    w = s * complex(math.cos(phi), -math.sin(phi))
    # Integrand modulus is exp(-u Re(c)/theta - Re(w) u**(1/g)) / theta.
    ends = [theta * DAMPING_CUTOFF / c.real]
    if w.real > 0:
        ends.append((DAMPING_CUTOFF / w.real) ** g)
    u_end = min(ends)
    freq = abs(c.imag) / theta + abs(w.imag) * (1.0 / g) * u_end ** (1.0 / g - 1.0)
    count = max(BASE_PANELS, math.ceil(u_end * freq / math.pi))
    if count > MAX_PANELS:
        raise QuadratureError(f"numeric Laplace transform of {dist} needs {count} panels at s = {s}", node=s)
    edges = np.linspace(0.0, u_end, count + 1)
    graded = edges[1] * 0.5 ** np.arange(1, GRADED_LEVELS + 1)
    edges = np.unique(np.concatenate([graded, edges]))

    def sums(lo, hi, order):
        nodes, weights = _gauss_legendre(order)
        half = 0.5 * (hi - lo)
        u = (0.5 * (hi + lo))[:, None] + half[:, None] * nodes[None, :]
        vals = (c / theta) * np.exp(-c * u / theta - w * u ** (1.0 / g))
        return (half[:, None] * weights[None, :] * vals).sum(axis=1)[None, :]

    return complex(_refine(dist, np.array([s]), edges, sums)[0])


def _refine(dist, s, edges, panel_sums):
    """Compare Gauss orders per panel and bisect panels until they agree."""
    lo, hi = edges[:-1], edges[1:]
    err = np.inf
    for _ in range(MAX_REFINEMENTS):
        coarse = panel_sums(lo, hi, GAUSS_ORDER)
        fine = panel_sums(lo, hi, 2 * GAUSS_ORDER)
        diff = np.abs(fine - coarse)
        total = fine.sum(axis=1)
        err_per_s = diff.sum(axis=1)
        # Cancellation between panels puts a round-off floor under the error.
        floor = ROUNDOFF * np.abs(fine).sum(axis=1)
        tol = np.maximum(np.maximum(REL_TOL * np.abs(total), ABS_TOL), floor)
        if np.all(err_per_s <= tol):
            return total
        err = float(np.max(err_per_s / tol * np.maximum(np.abs(total), ABS_TOL / REL_TOL)))
        bad = np.any(diff > (tol / lo.size)[:, None], axis=0)
        mids = 0.5 * (lo[bad] + hi[bad])
        lo = np.sort(np.concatenate([lo, mids]))
        hi = np.sort(np.concatenate([mids, hi]))
    raise QuadratureError(
        f"numeric Laplace transform of {dist} did not converge",
        node=complex(s[0]) if s.size == 1 else None,
        error_estimate=err,
    )


# ---------------------------------------------------------------------------
# memoization


class _TransformCache:
    """Thread-safe (distribution, s) -> value store with a size bound."""

    def __init__(self, maxsize=200_000):
        self.maxsize = maxsize
        self._data: dict = {}
        self._lock = threading.Lock()

    def lookup(self, dist, s):
        with self._lock:
            return [self._data.get((dist, v)) for v in s]

    def store(self, dist, s, values):
        with self._lock:
            if len(self._data) + len(s) > self.maxsize:
                self._data.clear()
            for key, val in zip(s, values):
                self._data[(dist, key)] = val

    def clear(self):
        with self._lock:
            self._data.clear()

    def __len__(self):
        return len(self._data)


_CACHE = _TransformCache()


def clear_lt_cache():
    _CACHE.clear()


def _lt_cached(dist: WaitingTimeDistribution, s: np.ndarray) -> np.ndarray:
    if not dist.smooth:
        return dist._lt(s)
    keys = [complex(v) for v in s]
    hits = _CACHE.lookup(dist, keys)
    missing = [i for i, h in enumerate(hits) if h is None]
    out = np.array([0j if h is None else h for h in hits], dtype=complex)
    if missing:
        # s = 0 is total mass; exact by definition.
        todo = np.array([keys[i] for i in missing], dtype=complex)
        vals = np.ones(todo.size, dtype=complex)
        nz = todo != 0
        if np.any(nz):
            vals[nz] = dist._lt(todo[nz])
        out[missing] = vals
        _CACHE.store(dist, [keys[i] for i in missing], vals)
    return out


# Functional spellings of the methods.


def pdf(dist: WaitingTimeDistribution, x):
    return dist.pdf(x)


def cdf(dist: WaitingTimeDistribution, x):
    return dist.cdf(x)


def mean(dist: WaitingTimeDistribution) -> float:
    return dist.mean()


def laplace_transform(dist: WaitingTimeDistribution, s):
    return dist.laplace_transform(s)
