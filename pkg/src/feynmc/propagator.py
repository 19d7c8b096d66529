"""Monte Carlo evaluation of the scaled-path evolution operator.

The propagator applied to an initial state f is estimated as the average
over Brownian paths B of

    exp(-i * int_0^(t-t0) V(t - s, z + sqrt(i) B_s) ds) * f(z + sqrt(i) B_(t-t0))

with V(u, z) = V0(z) + g'(u) z.  The time argument t - s is the default
("backward") convention, under which the estimate solves the Schrodinger
equation for the physical Hamiltonian H(u) = -1/2 Lap + V(u, .); the
"forward" convention (argument s) is exposed as a switch because both
appear in the literature (they agree when g' is constant).

All evaluations inside one request share the increment stream keyed by
(seed, path index): grid points, finite-difference stencils, and contour
probes see common random numbers, which is what makes the difference
statistics (semigroup z-scores, PDE residuals) resolvable at desk scale.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .numerics import SQRT_I, MCEstimate, WelfordAccumulator
from .paths import mix_seed, normal_increments
from .potentials import (
    PotentialSpec,
    TimeDependentPotential,
    eval_potential,
    eval_potential_array,
)
from .states import State, eval_state, eval_state_array_guarded
from .testfunctions import TestFunction, eval_g

__all__ = [
    "PropagatorRequest",
    "Diagnostics",
    "Wavefunction",
    "DomainViolationBudgetError",
    "propagate",
    "propagate_grid",
    "semigroup_check",
    "SemigroupReport",
    "schrodinger_residual",
    "ResidualReport",
    "mc_run",
    "path_samples",
    "PathBatch",
]

#: Fraction of aborted paths above which a run fails outright.
VIOLATION_BUDGET = 1e-4

_WEIGHT_THRESHOLDS = (1.0, 10.0, 100.0, 1e6)
_EXP_LIMIT = 700.0

# Mixing lanes keeping derived seed streams disjoint from each other and
# from primary increment streams.
_LANE_NESTED_OUTER = 0xA5A5
_LANE_NESTED_INNER = 0x1111


class DomainViolationBudgetError(RuntimeError):
    """Raised when more than VIOLATION_BUDGET of paths were aborted."""

    def __init__(self, message: str, diagnostics: "Diagnostics") -> None:
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass
class Diagnostics:
    """Per-run tallies: aborted paths and the weight-modulus profile."""

    total_paths: int = 0
    domain_violations: int = 0
    overflows: int = 0
    weight_abs_max: float = 0.0
    weight_abs_sum: float = 0.0
    weight_abs_count: int = 0
    weight_exceedances: dict[float, int] = field(
        default_factory=lambda: {thr: 0 for thr in _WEIGHT_THRESHOLDS}
    )

    @property
    def aborted(self) -> int:
        return self.domain_violations + self.overflows

    @property
    def weight_abs_mean(self) -> float:
        if self.weight_abs_count == 0:
            return 0.0
        return self.weight_abs_sum / self.weight_abs_count

    def record_weights(self, weight_abs: np.ndarray) -> None:
        if weight_abs.size == 0:
            return
        self.weight_abs_max = max(self.weight_abs_max, float(weight_abs.max()))
        self.weight_abs_sum += float(weight_abs.sum())
        self.weight_abs_count += int(weight_abs.size)
        for thr in _WEIGHT_THRESHOLDS:
            self.weight_exceedances[thr] += int(np.count_nonzero(weight_abs > thr))

    def merge(self, other: "Diagnostics") -> None:
        self.total_paths += other.total_paths
        self.domain_violations += other.domain_violations
        self.overflows += other.overflows
        self.weight_abs_max = max(self.weight_abs_max, other.weight_abs_max)
        self.weight_abs_sum += other.weight_abs_sum
        self.weight_abs_count += other.weight_abs_count
        for thr in _WEIGHT_THRESHOLDS:
            self.weight_exceedances[thr] += other.weight_exceedances[thr]

    def summary(self) -> dict:
        return {
            "total_paths": self.total_paths,
            "domain_violations": self.domain_violations,
            "overflows": self.overflows,
            "weight_abs_max": self.weight_abs_max,
            "weight_abs_mean": self.weight_abs_mean,
            "weight_exceedances": {str(k): v for k, v in self.weight_exceedances.items()},
        }

    def enforce_budget(self) -> None:
        if self.total_paths and self.aborted > VIOLATION_BUDGET * self.total_paths:
            raise DomainViolationBudgetError(
                f"{self.aborted} of {self.total_paths} paths aborted "
                f"({self.domain_violations} domain violations, "
                f"{self.overflows} overflows); budget is "
                f"{VIOLATION_BUDGET:.2%}",
                self,
            )


@dataclass(frozen=True)
class PropagatorRequest:
    """One propagator evaluation: potential, state, times, and MC knobs."""

    potential: TimeDependentPotential
    state: State
    t0: float
    t: float
    z: complex
    n_paths: int
    n_steps: int
    seed: int
    T: float | None = None
    chunk_size: int = 1024
    workers: int | None = None
    source_time_convention: str = "backward"

    def __post_init__(self) -> None:
        horizon = self.t if self.T is None else self.T
        if not (0 <= self.t0 <= self.t <= horizon):
            raise ValueError(
                f"times must satisfy 0 <= t0 <= t <= T, got "
                f"t0={self.t0}, t={self.t}, T={horizon}"
            )
        if self.n_paths < 2:
            raise ValueError("n_paths must be >= 2")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        if self.source_time_convention not in ("backward", "forward"):
            raise ValueError(
                f"unknown source_time_convention {self.source_time_convention!r}"
            )
        z = complex(self.z)
        base = self.potential.base
        if base.has_inverse_power and z.imag == 0.0:
            if any(z.real == b for b in base.excluded_points):
                raise ValueError(f"z={z.real} is an excluded point of the potential")

    @property
    def span(self) -> float:
        return self.t - self.t0


@dataclass(frozen=True)
class Wavefunction:
    """Propagator estimates on an x grid, one MCEstimate per point."""

    x: np.ndarray
    estimates: tuple[MCEstimate, ...]
    diagnostics: Diagnostics
    request: PropagatorRequest


@dataclass(frozen=True)
class SemigroupReport:
    """Flow identity check: one-leg vs two-leg estimates and their z-score."""

    lhs: MCEstimate
    rhs: MCEstimate
    z_score: float
    r: float


@dataclass(frozen=True)
class ResidualReport:
    """Schrodinger residual at (t, x) with common-random-number stderr."""

    residual: MCEstimate
    scale: float
    stencil: tuple[MCEstimate, ...]
    h_t: float
    h_x: float

    @property
    def relative_modulus(self) -> float:
        return abs(self.residual.mean) / self.scale

    @property
    def combined_stderr(self) -> float:
        return math.hypot(self.residual.stderr_re, self.residual.stderr_im)


@dataclass
class PathBatch:
    """Per-path integrand samples plus abort bookkeeping for one config."""

    samples: np.ndarray
    keep: np.ndarray
    domain_mask: np.ndarray
    overflow_mask: np.ndarray
    weight_abs: np.ndarray


def _default_workers(workers: int | None) -> int:
    if workers is not None:
        return max(1, workers)
    return max(1, os.cpu_count() or 1)


def mc_run(
    *,
    seed: int,
    n_paths: int,
    n_steps: int,
    kernel: Callable[[np.ndarray, int, Diagnostics], np.ndarray],
    n_outputs: int,
    chunk_size: int = 1024,
    workers: int | None = None,
) -> tuple[list[MCEstimate], Diagnostics]:
    """Chunked, deterministic Monte Carlo driver.

    ``kernel(xi, base_index, diag)`` maps a (chunk, n_steps) increment
    block to a (kept, n_outputs) complex sample array with aborted rows
    already removed and tallied into ``diag``.  Chunks are accumulated
    independently and merged in index order, so the result is
    bit-identical for a fixed (seed, chunk_size) regardless of worker
    count.
    """
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    starts = list(range(0, n_paths, chunk_size))

    def work(start: int) -> tuple[list[WelfordAccumulator], Diagnostics]:
        count = min(chunk_size, n_paths - start)
        xi = normal_increments(seed, start, count, n_steps)
        diag = Diagnostics(total_paths=count)
        samples = np.atleast_2d(kernel(xi, start, diag))
        accs = [WelfordAccumulator() for _ in range(n_outputs)]
        if samples.size:
            for j in range(n_outputs):
                accs[j].add_batch(samples[:, j])
        return accs, diag

    n_workers = _default_workers(workers)
    if n_workers == 1 or len(starts) == 1:
        results = [work(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(work, starts))

    totals = [WelfordAccumulator() for _ in range(n_outputs)]
    diagnostics = Diagnostics()
    for accs, diag in results:
        for j in range(n_outputs):
            totals[j].merge(accs[j])
        diagnostics.merge(diag)
    diagnostics.enforce_budget()
    estimates = [acc.estimate(seed) for acc in totals]
    return estimates, diagnostics


def _time_arguments(t: float, span: float, n_steps: int, convention: str) -> np.ndarray:
    s = span / n_steps * np.arange(n_steps + 1)
    return t - s if convention == "backward" else s


def path_samples(
    *,
    base: PotentialSpec,
    source: TestFunction | None,
    state: State | None,
    z: complex,
    t: float,
    t0: float,
    brownian: np.ndarray,
    convention: str = "backward",
    endpoint_phase: complex = 0j,
) -> PathBatch:
    """Per-path integrand samples for one (z, t, t0) configuration.

    ``brownian`` has shape (n, n_steps + 1) with zeros in column 0 and
    spans [0, t - t0].  Samples are weight * f(endpoint) (weight alone
    when ``state`` is None); ``endpoint_phase`` additionally multiplies by
    exp(i * endpoint_phase * Z_end).  Aborted rows (singularity hits,
    branch-cut hits, exponential overflow) are zeroed and flagged, never
    clipped: the caller decides whether the abort budget is blown.
    """
    n, cols = brownian.shape
    n_steps = cols - 1
    span = t - t0
    scaled = z + SQRT_I * brownian
    domain_mask = np.zeros(n, dtype=bool)
    overflow_mask = np.zeros(n, dtype=bool)

    has_source = source is not None and not source.is_zero
    if base.terms:
        v_vals, invalid = eval_potential_array(base, scaled)
        domain_mask |= invalid.any(axis=1)
    else:
        v_vals = None

    if has_source:
        targs = _time_arguments(t, span, n_steps, convention)
        gdot = eval_g(source, targs, derivative=1)
        source_vals = gdot[None, :] * scaled
        v_vals = source_vals if v_vals is None else v_vals + source_vals

    if v_vals is not None and span > 0:
        dt = span / n_steps
        integral = dt * (v_vals.sum(axis=1) - 0.5 * (v_vals[:, 0] + v_vals[:, -1]))
    else:
        integral = np.zeros(n, dtype=complex)

    overflow_mask |= integral.imag > _EXP_LIMIT
    keep = ~(domain_mask | overflow_mask)
    weight = np.exp(-1j * np.where(keep, integral, 0.0))

    if state is not None:
        endpoint, state_overflow = eval_state_array_guarded(state, scaled[:, -1])
        overflow_mask |= state_overflow
        keep &= ~state_overflow
        samples = weight * endpoint
    else:
        samples = weight

    if endpoint_phase != 0j:
        phase_arg = (1j * endpoint_phase) * scaled[:, -1]
        blown = phase_arg.real > _EXP_LIMIT
        overflow_mask |= blown
        keep &= ~blown
        samples = samples * np.exp(np.where(keep, phase_arg, 0.0))

    samples = np.where(keep, samples, 0.0)
    return PathBatch(
        samples=samples,
        keep=keep,
        domain_mask=domain_mask,
        overflow_mask=overflow_mask & ~domain_mask,
        weight_abs=np.abs(weight[keep]),
    )


def _tally(diag: Diagnostics, batches: Sequence[PathBatch]) -> np.ndarray:
    """Combine per-config keep masks; a row aborted anywhere is tallied
    once (domain violations take precedence over overflows)."""
    keep = batches[0].keep.copy()
    domain = batches[0].domain_mask.copy()
    overflow = batches[0].overflow_mask.copy()
    for b in batches[1:]:
        keep &= b.keep
        domain |= b.domain_mask
        overflow |= b.overflow_mask
    diag.domain_violations += int(np.count_nonzero(domain))
    diag.overflows += int(np.count_nonzero(overflow & ~domain))
    for b in batches:
        diag.record_weights(b.weight_abs)
    return keep


def _brownian_from(xi: np.ndarray, span: float) -> np.ndarray:
    n, n_steps = xi.shape
    values = np.empty((n, n_steps + 1))
    values[:, 0] = 0.0
    np.cumsum(xi, axis=1, out=values[:, 1:])
    values[:, 1:] *= math.sqrt(span / n_steps)
    return values


def _exact_estimate(value: complex, n_paths: int, seed: int) -> MCEstimate:
    return MCEstimate(mean=value, stderr_re=0.0, stderr_im=0.0, n_paths=n_paths, seed=seed)


def propagate_grid(req: PropagatorRequest, xs: Sequence[float]) -> Wavefunction:
    """Propagator estimates on an x grid with common random numbers.

    All grid points reuse the same increment stream, so differences
    between neighboring points carry far less Monte Carlo noise than the
    points themselves.  A path aborted at any grid point is dropped at
    every grid point, keeping the sampled population identical across the
    grid (exact linearity, exact CRN).
    """
    xs_arr = np.asarray(xs, dtype=float)
    base = req.potential.base
    if base.has_inverse_power:
        for x in xs_arr:
            if any(x == b for b in base.excluded_points):
                raise ValueError(f"grid point x={x} is an excluded point")

    if req.span == 0.0:
        estimates = tuple(
            _exact_estimate(eval_state(req.state, complex(x)), req.n_paths, req.seed)
            for x in xs_arr
        )
        return Wavefunction(
            x=xs_arr,
            estimates=estimates,
            diagnostics=Diagnostics(total_paths=req.n_paths),
            request=req,
        )

    def kernel(xi: np.ndarray, start: int, diag: Diagnostics) -> np.ndarray:
        brownian = _brownian_from(xi, req.span)
        batches = [
            path_samples(
                base=base,
                source=req.potential.source,
                state=req.state,
                z=complex(x),
                t=req.t,
                t0=req.t0,
                brownian=brownian,
                convention=req.source_time_convention,
            )
            for x in xs_arr
        ]
        keep = _tally(diag, batches)
        out = np.stack([b.samples for b in batches], axis=1)
        return out[keep]

    estimates, diagnostics = mc_run(
        seed=req.seed,
        n_paths=req.n_paths,
        n_steps=req.n_steps,
        kernel=kernel,
        n_outputs=len(xs_arr),
        chunk_size=req.chunk_size,
        workers=req.workers,
    )
    return Wavefunction(
        x=xs_arr,
        estimates=tuple(estimates),
        diagnostics=diagnostics,
        request=req,
    )


def propagate(req: PropagatorRequest) -> MCEstimate:
    """Monte Carlo estimate of the evolved state at req.z.

    With t == t0 the value is f(z) exactly (zero-length path, stderr 0).
    """
    z = complex(req.z)
    if req.span == 0.0:
        return _exact_estimate(eval_state(req.state, z), req.n_paths, req.seed)
    if z.imag == 0.0:
        return propagate_grid(req, [z.real]).estimates[0]

    def kernel(xi: np.ndarray, start: int, diag: Diagnostics) -> np.ndarray:
        brownian = _brownian_from(xi, req.span)
        batch = path_samples(
            base=req.potential.base,
            source=req.potential.source,
            state=req.state,
            z=z,
            t=req.t,
            t0=req.t0,
            brownian=brownian,
            convention=req.source_time_convention,
        )
        keep = _tally(diag, [batch])
        return batch.samples[keep][:, None]

    estimates, _ = mc_run(
        seed=req.seed,
        n_paths=req.n_paths,
        n_steps=req.n_steps,
        kernel=kernel,
        n_outputs=1,
        chunk_size=req.chunk_size,
        workers=req.workers,
    )
    return estimates[0]


def _steps_for(span: float, reference_span: float, reference_steps: int) -> int:
    if span <= 0:
        return 1
    return max(16, int(round(reference_steps * span / reference_span)))


def semigroup_check(
    req: PropagatorRequest,
    r: float,
    n_outer: int = 2000,
    n_inner: int = 500,
) -> SemigroupReport:
    """Flow identity: one-leg propagation vs the nested two-leg estimate.

    The right side is a nested Monte Carlo: outer paths carry the leg
    [r, t]; each outer endpoint seeds an inner average over the leg
    [t0, r] with a sub-seed mixed from (seed, outer index).  The z-score
    compares componentwise differences against the combined standard
    errors (the two estimates are independent by construction).  With
    r at either end the split is degenerate and the two-leg estimate
    collapses structurally to the one-leg one.
    """
    if not (req.t0 <= r <= req.t):
        raise ValueError(f"r={r} outside [t0, t] = [{req.t0}, {req.t}]")
    lhs = propagate(req)

    if r == req.t0 or r == req.t:
        rhs = propagate(req)
        return SemigroupReport(lhs=lhs, rhs=rhs, z_score=_z_score(lhs, rhs), r=r)

    outer_span = req.t - r
    inner_span = r - req.t0
    outer_steps = _steps_for(outer_span, req.span, req.n_steps)
    inner_steps = _steps_for(inner_span, req.span, req.n_steps)
    base = req.potential.base
    source = req.potential.source
    z = complex(req.z)
    inner_base_seed = mix_seed(req.seed, _LANE_NESTED_INNER)

    def kernel(xi: np.ndarray, start: int, diag: Diagnostics) -> np.ndarray:
        brownian = _brownian_from(xi, outer_span)
        outer = path_samples(
            base=base,
            source=source,
            state=None,
            z=z,
            t=req.t,
            t0=r,
            brownian=brownian,
            convention=req.source_time_convention,
        )
        keep = _tally(diag, [outer])
        endpoints = z + SQRT_I * brownian[:, -1]
        out = np.zeros(xi.shape[0], dtype=complex)
        inner_diag = Diagnostics()
        for j in range(xi.shape[0]):
            if not keep[j]:
                continue
            inner_seed = mix_seed(inner_base_seed, start + j)
            inner_xi = normal_increments(inner_seed, 0, n_inner, inner_steps)
            inner_b = _brownian_from(inner_xi, inner_span)
            inner = path_samples(
                base=base,
                source=source,
                state=req.state,
                z=complex(endpoints[j]),
                t=r,
                t0=req.t0,
                brownian=inner_b,
                convention=req.source_time_convention,
            )
            _tally(inner_diag, [inner])
            kept = int(np.count_nonzero(inner.keep))
            if kept < max(2, n_inner // 2):
                keep[j] = False
                continue
            out[j] = outer.samples[j] * inner.samples[inner.keep].mean()
        inner_diag.total_paths = int(np.count_nonzero(keep)) * n_inner
        diag.merge(inner_diag)
        return out[keep][:, None]

    rhs_list, _ = mc_run(
        seed=mix_seed(req.seed, _LANE_NESTED_OUTER),
        n_paths=n_outer,
        n_steps=outer_steps,
        kernel=kernel,
        n_outputs=1,
        chunk_size=min(req.chunk_size, 256),
        workers=req.workers,
    )
    rhs = rhs_list[0]
    return SemigroupReport(lhs=lhs, rhs=rhs, z_score=_z_score(lhs, rhs), r=r)


def _z_score(a: MCEstimate, b: MCEstimate) -> float:
    d = a.mean - b.mean
    se_re = math.hypot(a.stderr_re, b.stderr_re)
    se_im = math.hypot(a.stderr_im, b.stderr_im)
    z_re = abs(d.real) / se_re if se_re > 0 else (0.0 if d.real == 0 else math.inf)
    z_im = abs(d.imag) / se_im if se_im > 0 else (0.0 if d.imag == 0 else math.inf)
    return max(z_re, z_im)


def schrodinger_residual(
    req: PropagatorRequest, h_t: float, h_x: float
) -> ResidualReport:
    """Finite-difference residual of i psi_t = -1/2 psi_xx + V psi.

    Five propagator values (t +/- h_t at x; x, x +/- h_x at t) are
    computed from one shared increment stream; the residual is formed
    per path and accumulated directly, so its standard error reflects the
    common-random-number cancellation rather than a pessimistic
    independent-sum bound.
    """
    if h_t <= 0 or h_x <= 0:
        raise ValueError("h_t and h_x must be positive")
    if req.t - h_t <= req.t0:
        raise ValueError(
            f"stencil needs t - h_t > t0, got t={req.t}, h_t={h_t}, t0={req.t0}"
        )
    z = complex(req.z)
    if z.imag != 0.0:
        raise ValueError("residual stencil requires real x")
    x = z.real
    base = req.potential.base
    if base.has_inverse_power:
        for xx in (x - h_x, x, x + h_x):
            if any(xx == b for b in base.excluded_points):
                raise ValueError(f"stencil point x={xx} is an excluded point")

    configs = (
        (req.t + h_t, x),
        (req.t - h_t, x),
        (req.t, x - h_x),
        (req.t, x),
        (req.t, x + h_x),
    )
    v_center = eval_potential(base, complex(x))
    if req.potential.source is not None:
        v_center += eval_g(req.potential.source, req.t, derivative=1) * x

    def kernel(xi: np.ndarray, start: int, diag: Diagnostics) -> np.ndarray:
        cumulative = np.cumsum(xi, axis=1)
        n, n_steps = xi.shape
        batches = []
        for tj, xj in configs:
            span = tj - req.t0
            brownian = np.empty((n, n_steps + 1))
            brownian[:, 0] = 0.0
            brownian[:, 1:] = math.sqrt(span / n_steps) * cumulative
            batches.append(
                path_samples(
                    base=base,
                    source=req.potential.source,
                    state=req.state,
                    z=complex(xj),
                    t=tj,
                    t0=req.t0,
                    brownian=brownian,
                    convention=req.source_time_convention,
                )
            )
        keep = _tally(diag, batches)
        values = np.stack([b.samples for b in batches], axis=1)
        residual = (
            1j * (values[:, 0] - values[:, 1]) / (2.0 * h_t)
            + 0.5 * (values[:, 2] - 2.0 * values[:, 3] + values[:, 4]) / h_x**2
            - v_center * values[:, 3]
        )
        out = np.concatenate([values, residual[:, None]], axis=1)
        return out[keep]

    estimates, _ = mc_run(
        seed=req.seed,
        n_paths=req.n_paths,
        n_steps=req.n_steps,
        kernel=kernel,
        n_outputs=6,
        chunk_size=req.chunk_size,
        workers=req.workers,
    )
    stencil = tuple(estimates[:5])
    scale = max(abs(e.mean) for e in stencil)
    return ResidualReport(
        residual=estimates[5], scale=scale, stencil=stencil, h_t=h_t, h_x=h_x
    )
