"""Complex constants, Monte Carlo accumulation, and deterministic quadrature.

Everything downstream (path sampling, propagator averages, window
integrals) is built on three primitives defined here:

* the global branch of sqrt(i), fixed once as exp(i*pi/4);
* a numerically stable complex mean/variance accumulator with an
  order-independent merge, so parallel reductions are deterministic for a
  fixed chunk layout;
* Gauss-Legendre and trapezoid rules on finite intervals, plus a composite
  (panel) Gauss-Legendre helper for oscillatory integrands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np


@lru_cache(maxsize=128)
def _leggauss(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w

__all__ = [
    "SQRT_I",
    "sqrt_i",
    "MCEstimate",
    "WelfordAccumulator",
    "mc_accumulate",
    "QuadratureRule",
    "integrate",
    "panel_gauss_legendre",
    "NumericsError",
    "InsufficientSamplesError",
    "NonFiniteValueError",
]

#: Principal square root of i.  The single scaling branch used everywhere:
#: scaled path points are z + SQRT_I * B_s, never the other root.
SQRT_I: complex = complex(math.sqrt(0.5), math.sqrt(0.5))


class NumericsError(Exception):
    """Base class for numerical-layer failures."""


class InsufficientSamplesError(NumericsError):
    """Raised when an estimate is requested from fewer than 2 samples."""


class NonFiniteValueError(NumericsError):
    """Raised when a NaN/Inf would silently enter a reduction."""


def sqrt_i() -> complex:
    """Return the principal square root of i, exp(i*pi/4)."""
    return SQRT_I


@dataclass(frozen=True)
class MCEstimate:
    """Complex Monte Carlo mean with componentwise standard errors.

    ``stderr_re``/``stderr_im`` are the sample standard deviations of the
    real/imaginary parts divided by sqrt(n_paths).
    """

    mean: complex
    stderr_re: float
    stderr_im: float
    n_paths: int
    seed: int

    def __post_init__(self) -> None:
        if self.n_paths < 1:
            raise InsufficientSamplesError("insufficient samples: n_paths < 1")
        if not (np.isfinite(self.mean.real) and np.isfinite(self.mean.imag)):
            raise NonFiniteValueError(f"non-finite MC mean {self.mean!r}")

    @property
    def stderr_max(self) -> float:
        return max(self.stderr_re, self.stderr_im)


class WelfordAccumulator:
    """One-pass mean/variance accumulator for complex samples.

    Tracks the running complex mean and the sums of squared deviations of
    the real and imaginary parts (Welford's recurrence for scalars, the
    Chan et al. combination rule for batch and cross-accumulator merges).
    Merging is exact in exact arithmetic and stable in floating point, so
    chunked parallel reductions agree with the serial pass to roundoff and
    are bit-identical for a fixed chunk layout merged in index order.
    """

    __slots__ = ("n", "mean", "m2_re", "m2_im")

    def __init__(self) -> None:
        self.n: int = 0
        self.mean: complex = 0j
        self.m2_re: float = 0.0
        self.m2_im: float = 0.0

    def add(self, value: complex) -> None:
        """Add a single sample."""
        value = complex(value)
        if not (np.isfinite(value.real) and np.isfinite(value.imag)):
            raise NonFiniteValueError(f"non-finite sample {value!r}")
        self.n += 1
        delta = value - self.mean
        self.mean += delta / self.n
        delta2 = value - self.mean
        self.m2_re += delta.real * delta2.real
        self.m2_im += delta.imag * delta2.imag

    def add_batch(self, values: np.ndarray) -> None:
        """Add a batch of samples (complex ndarray) in one stable update."""
        values = np.asarray(values)
        if values.size == 0:
            return
        if not np.all(np.isfinite(values.real)) or not np.all(np.isfinite(values.imag)):
            raise NonFiniteValueError("non-finite sample in batch")
        other = WelfordAccumulator()
        other.n = int(values.size)
        other.mean = complex(values.mean())
        other.m2_re = float(np.sum((values.real - other.mean.real) ** 2))
        other.m2_im = float(np.sum((values.imag - other.mean.imag) ** 2))
        self.merge(other)

    def merge(self, other: "WelfordAccumulator") -> None:
        """Fold another accumulator into this one (Chan combination)."""
        if other.n == 0:
            return
        if self.n == 0:
            self.n = other.n
            self.mean = other.mean
            self.m2_re = other.m2_re
            self.m2_im = other.m2_im
            return
        n = self.n + other.n
        delta = other.mean - self.mean
        self.mean += delta * (other.n / n)
        w = self.n * other.n / n
        self.m2_re += other.m2_re + delta.real**2 * w
        self.m2_im += other.m2_im + delta.imag**2 * w
        self.n = n

    def estimate(self, seed: int) -> MCEstimate:
        """Finalize into an MCEstimate; requires at least 2 samples."""
        if self.n < 2:
            raise InsufficientSamplesError(
                f"insufficient samples: need at least 2, got {self.n}"
            )
        var_re = self.m2_re / (self.n - 1)
        var_im = self.m2_im / (self.n - 1)
        return MCEstimate(
            mean=self.mean,
            stderr_re=math.sqrt(max(var_re, 0.0) / self.n),
            stderr_im=math.sqrt(max(var_im, 0.0) / self.n),
            n_paths=self.n,
            seed=seed,
        )


def mc_accumulate(samples: Iterable[complex], seed: int) -> MCEstimate:
    """Accumulate a stream of complex samples into an MCEstimate.

    The result is independent of how the stream was chunked or partitioned
    up to floating-point reduction tolerance (~1e-12 relative).
    """
    acc = WelfordAccumulator()
    for s in samples:
        acc.add(s)
    return acc.estimate(seed)


_VALID_KINDS = ("gauss-legendre", "trapezoid")


@dataclass(frozen=True)
class QuadratureRule:
    """Deterministic quadrature rule on a finite interval.

    ``order`` is the node count.  Gauss-Legendre rules integrate
    polynomials up to degree 2*order - 1 exactly; trapezoid weights sum to
    the interval length.
    """

    kind: str
    order: int
    interval: tuple[float, float]

    def __post_init__(self) -> None:
        if self.kind not in _VALID_KINDS:
            raise ValueError(f"unknown quadrature kind {self.kind!r}")
        if self.order < 2:
            raise ValueError("quadrature order must be >= 2")
        a, b = self.interval
        if not (np.isfinite(a) and np.isfinite(b) and b > a):
            raise ValueError(f"invalid interval {self.interval!r}")

    def nodes_weights(self) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.interval
        if self.kind == "gauss-legendre":
            x, w = _leggauss(self.order)
            nodes = 0.5 * (b - a) * x + 0.5 * (a + b)
            weights = 0.5 * (b - a) * w
        else:
            nodes = np.linspace(a, b, self.order)
            weights = np.full(self.order, (b - a) / (self.order - 1))
            weights[0] *= 0.5
            weights[-1] *= 0.5
        return nodes, weights


def integrate(f: Callable[[np.ndarray], np.ndarray], rule: QuadratureRule) -> complex:
    """Integrate ``f`` over the rule's interval as a weighted node sum.

    ``f`` may be vectorized over an ndarray of nodes or accept scalars.
    Raises NonFiniteValueError naming the offending node if any value is
    not finite.
    """
    nodes, weights = rule.nodes_weights()
    try:
        values = np.asarray(f(nodes), dtype=complex)
        if values.shape != nodes.shape:
            raise TypeError
    except (TypeError, ValueError):
        values = np.array([complex(f(x)) for x in nodes])
    bad = ~(np.isfinite(values.real) & np.isfinite(values.imag))
    if np.any(bad):
        k = int(np.argmax(bad))
        raise NonFiniteValueError(
            f"non-finite integrand value {values[k]!r} at node x={nodes[k]!r}"
        )
    return complex(np.sum(weights * values))


def panel_gauss_legendre(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    n_panels: int,
    order: int = 16,
) -> complex:
    """Composite Gauss-Legendre quadrature over equal panels of [a, b].

    Used for oscillatory kernels: choose ``n_panels`` so the phase change
    per panel stays below a few radians and the per-panel rule converges
    spectrally.
    """
    if n_panels < 1:
        raise ValueError("n_panels must be >= 1")
    x, w = _leggauss(order)
    edges = np.linspace(a, b, n_panels + 1)
    lo = edges[:-1]
    hi = edges[1:]
    half = 0.5 * (hi - lo)
    nodes = (half[:, None] * x[None, :] + 0.5 * (lo + hi)[:, None]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    values = np.asarray(f(nodes), dtype=complex)
    bad = ~(np.isfinite(values.real) & np.isfinite(values.imag))
    if np.any(bad):
        k = int(np.argmax(bad))
        raise NonFiniteValueError(
            f"non-finite integrand value {values[k]!r} at node x={nodes[k]!r}"
        )
    return complex(np.sum(weights * values))


def merge_in_order(accumulators: Sequence[WelfordAccumulator]) -> WelfordAccumulator:
    """Merge per-chunk accumulators in index order (deterministic reduce)."""
    total = WelfordAccumulator()
    for acc in accumulators:
        total.merge(acc)
    return total
