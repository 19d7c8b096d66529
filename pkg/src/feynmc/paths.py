"""Discretized Brownian paths on [0, T] and the sup-norm reflection bound.

Sampling is counter-based: increments for path ``p`` under ``seed`` come
from a Philox stream keyed by (seed, p // RNG_BLOCK), rows p % RNG_BLOCK.
A path is therefore a pure function of (seed, path_index, grid) — the same
bits regardless of which worker generates it or how the run is chunked.
RNG_BLOCK is a fixed engine constant recorded in run manifests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .numerics import NonFiniteValueError, QuadratureRule, integrate

__all__ = [
    "RNG_BLOCK",
    "TimeGrid",
    "BrownianPath",
    "sample_path",
    "normal_increments",
    "path_values",
    "path_potential_integral",
    "supnorm_bound_rhs",
    "bridge_corrected_supnorm",
    "mix_seed",
]

#: Paths per Philox counter block.  Part of the reproducibility contract:
#: changing it changes every sampled path.
RNG_BLOCK = 256

_MIX_MULT = np.uint64(0x9E3779B97F4A7C15)


def mix_seed(seed: int, index: int) -> int:
    """Derive a decorrelated 64-bit sub-seed from (seed, index).

    SplitMix64 finalizer over the pair; used for nested Monte Carlo inner
    streams and bridge-correction draws so they never collide with the
    primary increment streams.
    """
    with np.errstate(over="ignore"):
        x = (np.uint64(seed & 0xFFFFFFFFFFFFFFFF) * _MIX_MULT) ^ np.uint64(
            index & 0xFFFFFFFFFFFFFFFF
        )
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        x = x ^ (x >> np.uint64(31))
    return int(x)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [t_start, t_end] with n_steps increments."""

    t_start: float
    t_end: float
    n_steps: int

    def __post_init__(self) -> None:
        if self.t_start < 0:
            raise ValueError("t_start must be >= 0")
        if self.t_end <= self.t_start:
            raise ValueError("t_end must exceed t_start")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / self.n_steps

    @property
    def span(self) -> float:
        return self.t_end - self.t_start

    def nodes(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n_steps + 1)


@dataclass(frozen=True)
class BrownianPath:
    """One sampled path: values at grid nodes, values[0] = 0."""

    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    @property
    def sup_norm(self) -> float:
        """Discrete max of |B| over the grid nodes (one-sided proxy for
        the continuous sup, which it can only underestimate)."""
        return float(np.max(np.abs(self.values)))


def _block_normals(seed: int, block_index: int, n_steps: int) -> np.ndarray:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, block_index], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    return gen.standard_normal((RNG_BLOCK, n_steps))


def normal_increments(seed: int, start: int, count: int, n_steps: int) -> np.ndarray:
    """Standard-normal increment draws for paths [start, start+count).

    Returns a (count, n_steps) array.  Row i is the increment stream of
    path index start + i and depends only on (seed, start + i, n_steps).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    first_block = start // RNG_BLOCK
    last_block = (start + count - 1) // RNG_BLOCK
    blocks = [
        _block_normals(seed, b, n_steps) for b in range(first_block, last_block + 1)
    ]
    stacked = blocks[0] if len(blocks) == 1 else np.concatenate(blocks, axis=0)
    offset = start - first_block * RNG_BLOCK
    return stacked[offset : offset + count]


def path_values(increments: np.ndarray, dt: float) -> np.ndarray:
    """Brownian values from unit increments: cumulative sum of sqrt(dt)*xi
    with a leading zero column.  Shape (n_paths, n_steps + 1)."""
    n_paths, n_steps = increments.shape
    values = np.empty((n_paths, n_steps + 1))
    values[:, 0] = 0.0
    np.cumsum(increments, axis=1, out=values[:, 1:])
    values[:, 1:] *= math.sqrt(dt)
    return values


def sample_path(grid: TimeGrid, seed: int, path_index: int) -> BrownianPath:
    """Sample the Brownian path for (seed, path_index) on ``grid``."""
    xi = normal_increments(seed, path_index, 1, grid.n_steps)
    values = path_values(xi, grid.dt)[0]
    values.flags.writeable = False
    return BrownianPath(grid=grid, values=values)


def path_potential_integral(
    path: BrownianPath,
    potential: Callable[[float, complex], complex],
    z: complex,
    t: float,
    t0: float,
) -> complex:
    """Trapezoidal integral of s -> V(t - s, z + sqrt(i)*B_s) over [0, t - t0].

    The path grid must span exactly [0, t - t0].  Domain violations raised
    by ``potential`` propagate with the offending s and point attached.
    """
    from .numerics import SQRT_I
    from .potentials import DomainViolationError

    span = t - t0
    if abs(path.grid.span - span) > 1e-12 * max(1.0, span) or path.grid.t_start != 0.0:
        raise ValueError(
            f"path grid [{path.grid.t_start}, {path.grid.t_end}] does not span "
            f"[0, {span}]"
        )
    s_nodes = path.grid.nodes()
    vals = np.empty(len(s_nodes), dtype=complex)
    for k, s in enumerate(s_nodes):
        point = z + SQRT_I * path.values[k]
        try:
            vals[k] = potential(t - s, point)
        except DomainViolationError as err:
            raise DomainViolationError(
                f"domain violation at s={s!r}, point={point!r}: {err}"
            ) from err
    if not np.all(np.isfinite(vals.real) & np.isfinite(vals.imag)):
        k = int(np.argmax(~(np.isfinite(vals.real) & np.isfinite(vals.imag))))
        raise NonFiniteValueError(
            f"non-finite potential value at s={s_nodes[k]!r}"
        )
    dt = path.grid.dt
    return complex(dt * (vals.sum() - 0.5 * (vals[0] + vals[-1])))


def supnorm_bound_rhs(
    k: Callable[[np.ndarray], np.ndarray],
    T: float,
    quad: QuadratureRule | None = None,
    with_truncation: bool = False,
):
    """Reflection bound on E[k(sup |B| over [0,T])] for k >= 0 measurable:

        2 * sqrt(2 / (pi*T)) * integral_0^inf k(u) exp(-u^2 / (2T)) du

    The integral is truncated at U_max = 10*sqrt(T).  With
    ``with_truncation=True`` also returns an estimate of the discarded
    tail, computed on [U_max, 2*U_max] with the same rule.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    u_max = 10.0 * math.sqrt(T)

    def integrand(u: np.ndarray) -> np.ndarray:
        return np.asarray(k(u)) * np.exp(-(u**2) / (2.0 * T))

    rule = quad or QuadratureRule("gauss-legendre", 200, (0.0, u_max))
    prefactor = 2.0 * math.sqrt(2.0 / (math.pi * T))
    value = prefactor * integrate(integrand, rule).real
    if not with_truncation:
        return value
    tail_rule = QuadratureRule(rule.kind, rule.order, (u_max, 2.0 * u_max))
    tail = prefactor * integrate(integrand, tail_rule).real
    return value, tail


def bridge_corrected_supnorm(
    values: np.ndarray, dt: float, seed: int, start_index: int
) -> np.ndarray:
    """Sup-norm estimate with per-step Brownian-bridge extremes.

    For each step the bridge maximum above max(a, b) and minimum below
    min(a, b) are drawn marginally (exponential trick), and the sup of |B|
    is taken over those extremes.  Marginal sampling of max and min is a
    documented approximation used as a bias control for the discrete-max
    proxy — it can only enlarge the discrete sup-norm.

    ``values`` has shape (n_paths, n_steps + 1); the draws are keyed by
    (mix_seed(seed, 1), path index) so they never reuse increment streams.
    """
    n_paths, _ = values.shape
    bridge_seed = mix_seed(seed, 1)
    a = values[:, :-1]
    b = values[:, 1:]
    sup = np.max(np.abs(values), axis=1)
    n_steps = a.shape[1]
    u = normal_increments(bridge_seed, start_index, n_paths, 2 * n_steps)
    # Map normals to uniforms in (0, 1); cheap and reproducible with the
    # same block machinery as the increments.
    from scipy.special import ndtr

    u1 = ndtr(u[:, :n_steps])
    u2 = ndtr(u[:, n_steps:])
    np.clip(u1, 1e-300, 1.0 - 1e-16, out=u1)
    np.clip(u2, 1e-300, 1.0 - 1e-16, out=u2)
    d2 = (b - a) ** 2
    m_hi = 0.5 * (a + b + np.sqrt(d2 - 2.0 * dt * np.log(u1)))
    m_lo = 0.5 * (a + b - np.sqrt(d2 - 2.0 * dt * np.log(u2)))
    sup_hi = np.max(m_hi, axis=1)
    sup_lo = np.max(-m_lo, axis=1)
    return np.maximum(sup, np.maximum(sup_hi, sup_lo))
