"""Analytic potential classes evaluated at complex points.

Three term families, freely combinable into a linear combination:

* ``PolynomialTerm`` — confining polynomials whose leading degree is
  4n + 2 with the sign convention leading coefficient
  (-1)^(n+1) * a_{4n+2}, a_{4n+2} > 0 real; plus the quadratic sub-class
  (leading degree <= 2, real a_2) which is only admissible inside the
  window |a_2| < 1/(2 T^2).
* ``InversePowerAbsTerm`` — a / |z - b|^n, realized off the real axis as
  a * exp(-(n/2) * Log((z - b)^2)) with the principal Log.
* ``InversePowerPlainTerm`` — a / (z - b)^n.

All branch choices are principal.  Evaluation anywhere the principal log
is defined is permitted, which is a superset of the rotated scaled domain
the inverse-power class is analytic on; callers that need the strict
domain sit above this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Union

import numpy as np

from .numerics import SQRT_I

if TYPE_CHECKING:
    from .testfunctions import TestFunction

__all__ = [
    "DomainViolationError",
    "PolynomialTerm",
    "InversePowerAbsTerm",
    "InversePowerPlainTerm",
    "PotentialSpec",
    "TimeDependentPotential",
    "eval_potential",
    "eval_potential_array",
    "doss_bound",
    "scaled_damping_check",
    "DampingReport",
    "quadratic_window_bound",
]

#: Points closer than this to an inverse-power singularity abort the path.
SINGULARITY_TOLERANCE = 1e-12


class DomainViolationError(Exception):
    """Evaluation at a forbidden point (singularity or branch cut)."""


@dataclass(frozen=True)
class PolynomialTerm:
    """Polynomial sum_j c_j z^j with coefficients indexed by degree."""

    coefficients: tuple[complex, ...]

    def __post_init__(self) -> None:
        coeffs = tuple(complex(c) for c in self.coefficients)
        object.__setattr__(self, "coefficients", coeffs)
        if not coeffs or all(c == 0 for c in coeffs):
            raise ValueError("polynomial term needs at least one nonzero coefficient")

    @property
    def degree(self) -> int:
        d = len(self.coefficients) - 1
        while d > 0 and self.coefficients[d] == 0:
            d -= 1
        return d

    @property
    def is_quadratic_class(self) -> bool:
        return self.degree <= 2

    def validate_sign_convention(self) -> None:
        """Confining polynomials (degree >= 3) must have leading degree
        4n + 2 and leading coefficient (-1)^(n+1) * a with a > 0 real."""
        d = self.degree
        if d <= 2:
            if d == 2 and self.coefficients[2].imag != 0.0:
                raise ValueError("quadratic coefficient a_2 must be real")
            return
        if (d - 2) % 4 != 0:
            raise ValueError(f"leading degree must be 4n+2, got {d}")
        n = (d - 2) // 4
        lead = self.coefficients[d]
        expected_sign = (-1.0) ** (n + 1)
        if lead.imag != 0.0 or lead.real * expected_sign <= 0.0:
            raise ValueError(
                f"leading coefficient {lead} violates the sign convention "
                f"(-1)^(n+1) * a_{d} with a_{d} > 0"
            )

    @classmethod
    def confining(cls, n: int, a_top: float, lower: tuple[complex, ...] = ()) -> "PolynomialTerm":
        """Build the degree-(4n+2) term (-1)^(n+1) a_top z^(4n+2) + lower
        with a_top > 0 and ``lower`` the coefficients of degrees 0..4n+1."""
        if n < 0:
            raise ValueError("n must be >= 0")
        if a_top <= 0:
            raise ValueError("a_top must be positive")
        degree = 4 * n + 2
        coeffs = list(lower) + [0j] * (degree + 1 - len(lower))
        if len(coeffs) != degree + 1:
            raise ValueError("too many lower-order coefficients")
        coeffs[degree] = (-1.0) ** (n + 1) * a_top
        term = cls(tuple(coeffs))
        term.validate_sign_convention()
        return term


@dataclass(frozen=True)
class InversePowerAbsTerm:
    """a / |z - b|^n via a * exp(-(n/2) Log((z-b)^2)), principal Log."""

    a: complex
    b: float
    n: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("inverse power n must be >= 1")
        object.__setattr__(self, "a", complex(self.a))
        object.__setattr__(self, "b", float(self.b))


@dataclass(frozen=True)
class InversePowerPlainTerm:
    """a / (z - b)^n."""

    a: complex
    b: float
    n: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("inverse power n must be >= 1")
        object.__setattr__(self, "a", complex(self.a))
        object.__setattr__(self, "b", float(self.b))


PotentialTerm = Union[PolynomialTerm, InversePowerAbsTerm, InversePowerPlainTerm]


@dataclass(frozen=True)
class PotentialSpec:
    """Linear combination of potential terms plus its excluded real points."""

    terms: tuple[PotentialTerm, ...]
    excluded_points: tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        excluded = set(self.excluded_points)
        for term in self.terms:
            if isinstance(term, (InversePowerAbsTerm, InversePowerPlainTerm)):
                excluded.add(term.b)
        object.__setattr__(self, "excluded_points", tuple(sorted(excluded)))

    @property
    def has_inverse_power(self) -> bool:
        return any(
            isinstance(t, (InversePowerAbsTerm, InversePowerPlainTerm))
            for t in self.terms
        )

    @property
    def polynomial_terms(self) -> tuple[PolynomialTerm, ...]:
        return tuple(t for t in self.terms if isinstance(t, PolynomialTerm))

    def validate(self, T: float | None = None) -> None:
        """Structural validation: sign conventions for confining
        polynomials and, when T is given, the quadratic window
        |a_2| < 1/(2 T^2) for quadratic-class terms."""
        for term in self.polynomial_terms:
            term.validate_sign_convention()
            if T is not None and term.is_quadratic_class and term.degree == 2:
                a2 = term.coefficients[2].real
                if abs(a2) >= quadratic_window_bound(T):
                    raise ValueError(
                        f"quadratic coefficient |a_2|={abs(a2)} outside the window "
                        f"|a_2| < 1/(2 T^2) = {quadratic_window_bound(T)} at T={T}"
                    )

    @classmethod
    def zero(cls) -> "PotentialSpec":
        return cls(terms=())


def quadratic_window_bound(T: float) -> float:
    """Admissibility bound 1/(2 T^2) for a real quadratic coefficient."""
    if T <= 0:
        raise ValueError("T must be positive")
    return 1.0 / (2.0 * T * T)


@dataclass(frozen=True)
class TimeDependentPotential:
    """V(t, z) = V0(z) + g'(t) * z for a test-function source g."""

    base: PotentialSpec
    source: "TestFunction | None" = None

    def __call__(self, t: float, z: complex) -> complex:
        value = eval_potential(self.base, z)
        if self.source is not None:
            from .testfunctions import eval_g

            value += eval_g(self.source, t, derivative=1) * z
        return value


def _poly_eval(coeffs: tuple[complex, ...], z: np.ndarray, order: int) -> np.ndarray:
    """Horner evaluation of the polynomial or its first/second derivative."""
    if order == 0:
        work = coeffs
    elif order == 1:
        work = tuple(j * coeffs[j] for j in range(1, len(coeffs)))
    elif order == 2:
        work = tuple(j * (j - 1) * coeffs[j] for j in range(2, len(coeffs)))
    else:
        raise ValueError("derivative order must be 0, 1 or 2")
    result = np.zeros_like(z)
    if not work:
        return result
    for c in reversed(work):
        result = result * z + c
    return result


def _inverse_power_core(
    term: InversePowerAbsTerm | InversePowerPlainTerm, z: np.ndarray, order: int
) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate an inverse-power term and flag invalid points.

    Returns (values, invalid_mask).  Invalid points (within
    SINGULARITY_TOLERANCE of the singularity, or on the principal branch
    cut for the |.|-form) get value 0 and mask True; the caller decides
    whether to raise or tally.
    """
    w = z - term.b
    invalid = np.abs(w) < SINGULARITY_TOLERANCE
    safe_w = np.where(invalid, 1.0, w)
    if isinstance(term, InversePowerAbsTerm):
        w2 = safe_w * safe_w
        on_cut = (w2.imag == 0.0) & (w2.real < 0.0)
        invalid = invalid | on_cut
        w2 = np.where(on_cut, 1.0, w2)
        base = term.a * np.exp(-(term.n / 2.0) * np.log(w2))
    else:
        base = term.a * safe_w ** (-term.n)
    if order == 0:
        vals = base
    elif order == 1:
        vals = -term.n * base / safe_w
    elif order == 2:
        vals = term.n * (term.n + 1) * base / (safe_w * safe_w)
    else:
        raise ValueError("derivative order must be 0, 1 or 2")
    return np.where(invalid, 0.0, vals), invalid


def eval_potential_array(
    spec: PotentialSpec, z: np.ndarray, order: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized term sum; returns (values, invalid_mask).

    ``order`` selects d^order V / dz^order (0, 1 or 2).  Invalid entries
    hold 0 and are flagged rather than raised, so path kernels can abort
    and tally individual paths.
    """
    z = np.asarray(z, dtype=complex)
    values = np.zeros_like(z)
    invalid = np.zeros(z.shape, dtype=bool)
    for term in spec.terms:
        if isinstance(term, PolynomialTerm):
            values = values + _poly_eval(term.coefficients, z, order)
        else:
            vals, bad = _inverse_power_core(term, z, order)
            values = values + vals
            invalid |= bad
    return values, invalid


def eval_potential(spec: PotentialSpec, z: complex, order: int = 0) -> complex:
    """Scalar evaluation; raises DomainViolationError at forbidden points."""
    values, invalid = eval_potential_array(spec, np.array([z], dtype=complex), order)
    if invalid[0]:
        raise DomainViolationError(f"domain violation at z={z!r}")
    return complex(values[0])


def doss_bound(term: InversePowerAbsTerm | InversePowerPlainTerm, x: float) -> float:
    """Uniform modulus bound |a| * ((x-b)^2 / 2)^(-n/2) valid at every
    scaled point x + sqrt(i) y, y real (the squared modulus of
    (x - b) + sqrt(i) y is minimized at (x-b)^2 / 2)."""
    if x == term.b:
        raise DomainViolationError(f"singular point x={x!r}")
    return abs(term.a) * ((x - term.b) ** 2 / 2.0) ** (-term.n / 2.0)


@dataclass(frozen=True)
class DampingReport:
    """Sampled supremum of the scaled exponential weight envelope."""

    sup: float
    sup_t: float
    sup_y: float
    finite: bool
    in_window: bool


def scaled_damping_check(
    term: PolynomialTerm,
    z: complex,
    t_range: tuple[float, float],
    g: "TestFunction | None",
    y_max: float,
    n_t: int = 21,
    n_y: int = 2001,
) -> DampingReport:
    """Sample sup over (t, y) of |exp(|g(t)| (|z| + |y|) - i V0(z + sqrt(i) y))|.

    For a confining polynomial the exponent's real part is dominated by
    -a_{4n+2} y^(4n+2) as |y| grows, so the sampled sup stabilizes once
    y_max passes the turnover.  Quadratic-class terms are admissible only
    inside |a_2| < 1/(2 T^2); outside, the report is flagged out-of-window
    (the weight need not be bounded there).
    """
    t0, t1 = t_range
    if t1 < t0:
        raise ValueError("empty t range")
    in_window = True
    if term.is_quadratic_class and term.degree == 2:
        a2 = term.coefficients[2].real
        in_window = abs(a2) < quadratic_window_bound(t1)
    ts = np.linspace(t0, t1, n_t)
    ys = np.linspace(-y_max, y_max, n_y)
    points = z + SQRT_I * ys
    v0 = _poly_eval(term.coefficients, points.astype(complex), 0)
    damping = np.real(-1j * v0)
    if g is not None:
        from .testfunctions import eval_g

        g_abs = np.abs(np.array([eval_g(g, float(t)) for t in ts]))
    else:
        g_abs = np.zeros(n_t)
    growth = g_abs[:, None] * (abs(z) + np.abs(ys))[None, :]
    log_weight = growth + damping[None, :]
    idx = np.unravel_index(np.argmax(log_weight), log_weight.shape)
    peak = float(log_weight[idx])
    finite = peak < 700.0
    sup = float(np.exp(min(peak, 700.0))) if finite else float("inf")
    return DampingReport(
        sup=sup,
        sup_t=float(ts[idx[0]]),
        sup_y=float(ys[idx[1]]),
        finite=finite,
        in_window=in_window,
    )


def damping_log_sup(spec: PotentialSpec, z: complex, y_max: float = 50.0, n_y: int = 20001) -> float:
    """Sampled sup over y of Re(-i V0(z + sqrt(i) y)) for the polynomial
    part of ``spec`` (inverse-power parts are bounded via doss_bound
    separately).  Used by the integrability-bound envelopes."""
    ys = np.linspace(-y_max, y_max, n_y)
    points = (z + SQRT_I * ys).astype(complex)
    total = np.zeros(n_y)
    for term in spec.polynomial_terms:
        total += np.real(-1j * _poly_eval(term.coefficients, points, 0))
    return float(np.max(total)) if spec.polynomial_terms else 0.0
