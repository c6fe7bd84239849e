"""Numerical Laplace inversion (Abate-Whitt EULER) and complex linear solves.

The EULER approximation is

    phi(t) ~ exp(A/2)/t * sum_{j=0}^{N} (-1)^j w_j Re[phi~(A/(2t) + j*pi*i/t)]

with unit weights for the first ``n_trunc`` terms (w_0 = 1/2) and binomial
tail weights for the last ``m_euler`` terms, i.e. Euler summation of the
alternating partial sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import comb

from .errors import NumericalError, SingularMatrixError

__all__ = [
    "EulerConfig",
    "euler_nodes",
    "euler_invert",
    "invert_matrix_function",
    "complex_linear_solve",
]

PIVOT_TOL = 1e-13


@dataclass(frozen=True)
class EulerConfig:
    A: float = 18.4
    n_trunc: int = 38
    m_euler: int = 11
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.A > 0:
            raise ValueError("A must be positive")
        # exp(A/2) multiplies round-off in the transform values.
        if self.A > 40:
            raise ValueError("A above 40 amplifies round-off beyond double precision accuracy")
        if self.n_trunc < 1 or self.m_euler < 1:
            raise ValueError("n_trunc and m_euler must be positive")
        n, m = self.n_trunc, self.m_euler
        w = np.ones(n + m + 1)
        w[0] = 0.5
        binom = comb(m, np.arange(m + 1)) / 2.0**m
        tail = np.cumsum(binom[::-1])[::-1]
        w[n + 1 :] = tail[1:]
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n_terms(self) -> int:
        return self.n_trunc + self.m_euler


DEFAULT_CONFIG = EulerConfig()


def euler_nodes(t: float, config: EulerConfig = DEFAULT_CONFIG) -> np.ndarray:
    if not t > 0:
        raise ValueError(f"inversion time must be positive, got {t}")
    j = np.arange(config.n_terms + 1)
    return config.A / (2.0 * t) + 1j * math.pi * j / t


def euler_invert(lt_values, t: float, config: EulerConfig = DEFAULT_CONFIG):
    """Combine transform values at :func:`euler_nodes` into phi(t).

    ``lt_values`` has the node index on its first axis; any trailing axes
    (e.g. matrix entries) are inverted independently.
    """
    values = np.asarray(lt_values)
    if values.shape[0] != config.n_terms + 1:
        raise ValueError(
            f"expected {config.n_terms + 1} transform values, got {values.shape[0]}"
        )
    if not np.all(np.isfinite(values)):
        bad = int(np.argmax(~np.isfinite(values).reshape(values.shape[0], -1).all(axis=1)))
        raise NumericalError("non-finite transform value", t=t, node=complex(euler_nodes(t, config)[bad]))
    signed = config.weights * (-1.0) ** np.arange(values.shape[0])
    # Accumulate node by node so every entry is summed in the same order,
    # whatever the trailing shape; matrix and scalar inversions then agree exactly.
    acc = np.zeros(values.shape[1:])
    for w, v in zip(signed, values.real):
        acc += w * v
    out = math.exp(config.A / 2.0) / t * acc
    return out[()] if np.ndim(out) == 0 else out


def invert_matrix_function(
    evaluator: Callable[[complex], np.ndarray],
    t: float,
    config: EulerConfig = DEFAULT_CONFIG,
) -> np.ndarray:
    """Invert a matrix-valued transform at one time point.

    ``evaluator`` is called once per Euler node; all entries share those calls.
    """
    nodes = euler_nodes(t, config)
    values = []
    for s in nodes:
        try:
            values.append(np.asarray(evaluator(s), dtype=complex))
        except NumericalError as exc:
            if exc.node is None:
                exc.node = complex(s)
            if exc.t is None:
                exc.t = t
            raise
        except (ArithmeticError, np.linalg.LinAlgError) as exc:
            raise NumericalError(str(exc), t=t, node=complex(s)) from exc
    return np.asarray(euler_invert(np.stack(values), t, config), dtype=float)


def complex_linear_solve(a, b) -> np.ndarray:
    """Solve ``a @ x = b`` by Gaussian elimination with partial pivoting.

    ``a`` is n x n or a stack (..., n, n); ``b`` is a matching matrix or
    vector.  Pivots are compared to the row's largest entry; a relative pivot
    below ``PIVOT_TOL`` raises :class:`SingularMatrixError`.
    """
    a = np.array(a, dtype=complex)
    b = np.array(b, dtype=complex)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"coefficient matrix must be square, got shape {a.shape}")
    n = a.shape[-1]
    vector = b.ndim == a.ndim - 1
    if vector:
        b = b[..., None]
    if b.shape[-2] != n:
        raise ValueError(f"right-hand side has {b.shape[-2]} rows, expected {n}")
    batch = a.shape[:-2]
    a = a.reshape(-1, n, n)
    b = np.broadcast_to(b, batch + b.shape[-2:]).reshape(-1, n, b.shape[-1]).copy()
    scale = np.abs(a).max(axis=2)
    scale[scale == 0] = 1.0
    rows = np.arange(a.shape[0])

    for k in range(n):
        piv = k + np.argmax(np.abs(a[:, k:, k]), axis=1)
        swap = piv != k
        if np.any(swap):
            r, pk = rows[swap], piv[swap]
            a[r, k], a[r, pk] = a[r, pk].copy(), a[r, k].copy()
            b[r, k], b[r, pk] = b[r, pk].copy(), b[r, k].copy()
            scale[r, k], scale[r, pk] = scale[r, pk].copy(), scale[r, k].copy()
        pivot = a[:, k, k]
        small = np.abs(pivot) < PIVOT_TOL * scale[:, k]
        if np.any(small):
            exc = SingularMatrixError(
                f"matrix is singular to working precision (pivot {k}, "
                f"|pivot| = {np.abs(pivot[small]).min():.3g})"
            )
            exc.batch_index = int(np.nonzero(small)[0][0])
            raise exc
        if k + 1 < n:
            factors = a[:, k + 1 :, k] / pivot[:, None]
            a[:, k + 1 :, k:] -= factors[:, :, None] * a[:, None, k, k:]
            b[:, k + 1 :] -= factors[:, :, None] * b[:, None, k]

    x = np.empty_like(b)
    for k in range(n - 1, -1, -1):
        acc = b[:, k] - np.einsum("bj,bjc->bc", a[:, k, k + 1 :], x[:, k + 1 :])
        x[:, k] = acc / a[:, k, k][:, None]

    x = x.reshape(batch + (n, x.shape[-1]))
    return x[..., 0] if vector else x
