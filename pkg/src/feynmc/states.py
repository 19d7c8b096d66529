"""Hermite initial states evaluable at complex arguments.

f_m(z) = (2^m m!)^(-1/2) pi^(-1/4) H_m(z) exp(-z^2 / 2), entire in z,
restricting to the orthonormal Hermite functions on the real axis.  The
Hermite polynomial factor is carried through the three-term recurrence
H_{m+1} = 2 z H_m - 2 m H_{m-1} with the Gaussian factored out once, so
exp(z^2/2) and exp(-z^2) are never formed separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .numerics import SQRT_I

__all__ = [
    "HERMITE_M_MAX",
    "AmplitudeOverflowError",
    "HermiteState",
    "StateCombination",
    "eval_state",
    "eval_state_array",
    "hermite_growth_probe",
    "GrowthProbeReport",
]

#: Config validation cap; the growth-probe envelope is only trusted at
#: desk scale.
HERMITE_M_MAX = 12

_EXP_ARG_LIMIT = 700.0


class AmplitudeOverflowError(Exception):
    """exp(-z^2/2) would overflow the representable range."""


@dataclass(frozen=True)
class HermiteState:
    """The m-th Hermite function as an entire initial state."""

    m: int

    def __post_init__(self) -> None:
        if not (0 <= self.m <= HERMITE_M_MAX):
            raise ValueError(f"Hermite index m must be in [0, {HERMITE_M_MAX}]")

    @property
    def norm_constant(self) -> float:
        return 1.0 / math.sqrt(2.0**self.m * math.factorial(self.m)) * math.pi ** (-0.25)


@dataclass(frozen=True)
class StateCombination:
    """Finite linear combination sum_k c_k f_{m_k}."""

    terms: tuple[tuple[complex, HermiteState], ...]

    def __post_init__(self) -> None:
        if not self.terms:
            raise ValueError("combination needs at least one term")
        object.__setattr__(
            self,
            "terms",
            tuple((complex(c), s) for c, s in self.terms),
        )

    @classmethod
    def of(cls, pairs: Iterable[tuple[complex, int]]) -> "StateCombination":
        return cls(tuple((c, HermiteState(m)) for c, m in pairs))


State = HermiteState | StateCombination


def _hermite_triple(m: int, z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """H_{m-2}, H_{m-1}, H_m by the three-term recurrence (zeros where the
    index would be negative)."""
    h_prev2 = np.zeros_like(z)
    h_prev = np.zeros_like(z)
    h = np.ones_like(z)
    for k in range(m):
        h_prev2 = h_prev
        h_prev = h
        h = 2.0 * z * h_prev - 2.0 * k * h_prev2
    return h_prev2, h_prev, h


def eval_state_array(state: State, z: np.ndarray, order: int = 0) -> np.ndarray:
    """Vectorized f_m^(order)(z) for order 0, 1 or 2.

    Derivatives come from H_m' = 2m H_{m-1} and the product rule:
        f'  = N exp(-z^2/2) (2m H_{m-1} - z H_m)
        f'' = N exp(-z^2/2) (4m(m-1) H_{m-2} - 4 m z H_{m-1} + (z^2-1) H_m)
    """
    if order not in (0, 1, 2):
        raise ValueError("derivative order must be 0, 1 or 2")
    z = np.asarray(z, dtype=complex)
    if isinstance(state, StateCombination):
        total = np.zeros_like(z)
        for coeff, s in state.terms:
            total = total + coeff * eval_state_array(s, z, order)
        return total
    exp_arg = -0.5 * z * z
    if np.any(exp_arg.real > _EXP_ARG_LIMIT):
        k = int(np.argmax(exp_arg.real > _EXP_ARG_LIMIT))
        raise AmplitudeOverflowError(
            f"amplitude overflow at z={z.ravel()[k] if z.ndim else complex(z)!r}"
        )
    gauss = np.exp(exp_arg)
    m = state.m
    h2, h1, h = _hermite_triple(m, z)
    if order == 0:
        poly = h
    elif order == 1:
        poly = 2.0 * m * h1 - z * h
    else:
        poly = 4.0 * m * (m - 1) * h2 - 4.0 * m * z * h1 + (z * z - 1.0) * h
    return state.norm_constant * poly * gauss


def eval_state(state: State, z: complex, order: int = 0) -> complex:
    """Scalar f_m^(order)(z)."""
    return complex(eval_state_array(state, np.array(z, dtype=complex), order))


def eval_state_array_guarded(
    state: State, z: np.ndarray, order: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized evaluation that flags overflow instead of raising.

    Returns (values, overflow_mask); flagged entries hold 0.  Path kernels
    use this so a single runaway path aborts and is tallied rather than
    killing the whole chunk.
    """
    z = np.asarray(z, dtype=complex)
    overflow = (-0.5 * z * z).real > _EXP_ARG_LIMIT
    if not np.any(overflow):
        return eval_state_array(state, z, order), overflow
    safe = np.where(overflow, 0.0, z)
    values = eval_state_array(state, safe, order)
    return np.where(overflow, 0.0, values), overflow


@dataclass(frozen=True)
class GrowthProbeReport:
    """Fitted envelope constants for the scaled-argument growth bound.

    ``constant`` is the minimal c with

        |f_m^(l)(z + sqrt(i) y)| <= c |y|^(m+l)
            * exp((1/2 + 1/(sqrt(2) eps)) |z|^2) * exp(eps y^2 / 2)

    over the sampled grid, skipping points where both sides vanish.
    The |y|^(m+l) factor vanishes at y = 0 while f_m^(l)(z) need not, so
    for m + l > 0 the envelope family cannot hold at y = 0 off the zero
    set of f_m^(l); such grid points are counted in ``zero_y_violations``
    and excluded from the fit.  ``floored_constant`` fits the integrable
    surrogate max(|y|, y_floor)^(m+l), which dominates the sampled values
    everywhere on the grid and is what the integrability bounds consume.
    Constants are fitted in log space (the z-factor overflows for tiny
    eps); ``constant`` may round to 0.0 or inf while its log stays exact.
    """

    constant: float
    floored_constant: float
    log_constant: float
    log_floored_constant: float
    y_floor: float
    passed: bool
    boundary_log_gap: float
    zero_y_violations: int


def hermite_growth_probe(
    state: HermiteState,
    l: int,
    z_box: tuple[complex, ...] | tuple[float, ...],
    epsilon: float,
    y_max: float = 10.0,
    n_y: int = 201,
    y_floor: float = 0.25,
) -> GrowthProbeReport:
    """Fit the minimal envelope constant on a (z, y) sample grid.

    PASS means a finite constant exists with no growth trend at the outer
    grid boundary: the log-constant over |y| <= y_max must not exceed the
    one over |y| <= y_max/2 (the envelope absorbs the tails).  The probe
    reports failures instead of raising.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if l not in (0, 1, 2):
        raise ValueError("derivative order l must be 0, 1 or 2")
    ys = np.linspace(-y_max, y_max, n_y)
    power = state.m + l
    log_best = -math.inf
    log_floor_best = -math.inf
    log_inner_best = -math.inf
    zero_violations = 0
    for z in z_box:
        z = complex(z)
        points = z + SQRT_I * ys
        vals = np.abs(eval_state_array(state, points, order=l))
        log_env = (0.5 + 1.0 / (math.sqrt(2.0) * epsilon)) * abs(z) ** 2 + (
            0.5 * epsilon * ys**2
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            log_vals = np.log(vals)
            log_ratio = log_vals - power * np.log(np.abs(ys)) - log_env
            log_ratio_floor = (
                log_vals - power * np.log(np.maximum(np.abs(ys), y_floor)) - log_env
            )
        degenerate = (np.abs(ys) == 0.0) & (power > 0)
        vacuous = degenerate & (vals < 1e-300)
        broken = degenerate & ~vacuous
        zero_violations += int(np.count_nonzero(broken))
        usable = ~degenerate & (vals > 0.0)
        if np.any(usable):
            log_best = max(log_best, float(np.max(log_ratio[usable])))
            inner = usable & (np.abs(ys) <= 0.5 * y_max)
            if np.any(inner):
                log_inner_best = max(log_inner_best, float(np.max(log_ratio[inner])))
        log_floor_best = max(log_floor_best, float(np.max(log_ratio_floor)))
    boundary_gap = log_best - log_inner_best
    passed = (
        math.isfinite(log_best)
        and boundary_gap <= 1e-9
        and zero_violations == 0
    )
    with np.errstate(over="ignore"):
        constant = float(np.exp(log_best))
        floored = float(np.exp(log_floor_best))
    return GrowthProbeReport(
        constant=constant,
        floored_constant=floored,
        log_constant=log_best,
        log_floored_constant=log_floor_best,
        y_floor=y_floor,
        passed=passed,
        boundary_log_gap=boundary_gap,
        zero_y_violations=zero_violations,
    )
