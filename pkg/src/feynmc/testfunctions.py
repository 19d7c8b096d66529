"""Test-function arguments of the T-transform.

A test function is a finite linear combination of Gaussian bumps
A exp(-(t - mu)^2 / (2 sigma^2)) and Hermite functions, with complex
coefficients.  The basis is closed under differentiation, analytic in t,
and has computable L^2 masses, which is all the probes need.  Complex
coefficients realize the ray combinations g + w h for complex w; the
real-coefficient case is the Im c = 0 subspace.

Bilinear masses use integral of g(s)^2 ds (not |g|^2): the combination
rules of the transform prefactor are bilinear, so the mass of a
complex-coefficient function is itself complex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .numerics import QuadratureRule, integrate
from .states import HermiteState, eval_state_array

__all__ = [
    "GaussianBump",
    "HermiteTerm",
    "TestFunction",
    "eval_g",
    "l2_product",
    "complement_l2",
    "ray",
    "zero_function",
]

#: Gaussian support is truncated at this many sigmas for quadrature.
TRUNCATION_SIGMAS = 12.0


@dataclass(frozen=True)
class GaussianBump:
    """A exp(-(t - mu)^2 / (2 sigma^2))."""

    amplitude: float
    center: float
    width: float

    def __post_init__(self) -> None:
        if self.width <= 0:
            raise ValueError("bump width must be positive")


@dataclass(frozen=True)
class HermiteTerm:
    """Hermite function basis element (decays like exp(-t^2/2))."""

    m: int


Basis = Union[GaussianBump, HermiteTerm]


@dataclass(frozen=True)
class TestFunction:
    """Finite combination sum_k c_k phi_k with complex coefficients."""

    terms: tuple[tuple[complex, Basis], ...]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "terms", tuple((complex(c), b) for c, b in self.terms)
        )

    @property
    def is_zero(self) -> bool:
        return all(c == 0 for c, _ in self.terms)

    @classmethod
    def bump(cls, amplitude: float = 1.0, center: float = 0.0, width: float = 1.0) -> "TestFunction":
        return cls(((1.0 + 0j, GaussianBump(amplitude, center, width)),))

    @classmethod
    def hermite(cls, m: int) -> "TestFunction":
        return cls(((1.0 + 0j, HermiteTerm(m)),))

    def scaled(self, w: complex) -> "TestFunction":
        return TestFunction(tuple((w * c, b) for c, b in self.terms))


def zero_function() -> TestFunction:
    return TestFunction(())


def _eval_basis(basis: Basis, t: np.ndarray, derivative: int) -> np.ndarray:
    if isinstance(basis, GaussianBump):
        u = (t - basis.center) / basis.width**2
        phi = basis.amplitude * np.exp(-((t - basis.center) ** 2) / (2.0 * basis.width**2))
        if derivative == 0:
            return phi
        if derivative == 1:
            return -u * phi
        return (u * u - 1.0 / basis.width**2) * phi
    return eval_state_array(HermiteState(basis.m), t.astype(complex), order=derivative)


def eval_g(g: TestFunction, t, derivative: int = 0):
    """g(t), g'(t) or g''(t); vectorized over ndarray t.

    Each basis term is differentiated analytically, so values are exact
    coefficient arithmetic (no finite differences anywhere).
    """
    if derivative not in (0, 1, 2):
        raise ValueError("derivative must be 0, 1 or 2")
    t_arr = np.asarray(t, dtype=float)
    total = np.zeros(t_arr.shape, dtype=complex)
    for coeff, basis in g.terms:
        total = total + coeff * _eval_basis(basis, t_arr, derivative)
    if np.ndim(t) == 0:
        return complex(total)
    return total


def _support_radius(g: TestFunction, h: TestFunction | None = None) -> float:
    radius = 1.0
    for fn in (g, h) if h is not None else (g,):
        for _, basis in fn.terms:
            if isinstance(basis, GaussianBump):
                radius = max(radius, abs(basis.center) + TRUNCATION_SIGMAS * basis.width)
            else:
                radius = max(radius, TRUNCATION_SIGMAS + math.sqrt(2.0 * basis.m + 1.0))
    return radius


def _min_width(g: TestFunction, h: TestFunction | None = None) -> float:
    width = math.inf
    for fn in (g, h) if h is not None else (g,):
        for _, basis in fn.terms:
            width = min(width, basis.width if isinstance(basis, GaussianBump) else 1.0)
    return 1.0 if math.isinf(width) else width


def _default_rule(g: TestFunction, h: TestFunction, a: float, b: float) -> QuadratureRule:
    width = _min_width(g, h)
    order = max(64, min(2000, int(40 * (b - a) / width)))
    return QuadratureRule("gauss-legendre", order, (a, b))


def l2_product(g: TestFunction, h: TestFunction, a: float | None = None, b: float | None = None, quad: QuadratureRule | None = None) -> complex:
    """Bilinear mass integral of g(s) h(s) ds over [a, b] (default: the
    truncated common support)."""
    if g.is_zero or h.is_zero:
        return 0j
    radius = _support_radius(g, h)
    lo = -radius if a is None else a
    hi = radius if b is None else b
    if hi <= lo:
        return 0j
    rule = quad or _default_rule(g, h, lo, hi)

    def integrand(s: np.ndarray) -> np.ndarray:
        return eval_g(g, s) * eval_g(h, s)

    return integrate(integrand, rule)


def complement_l2(g: TestFunction, t0: float, t: float, quad: QuadratureRule | None = None) -> complex:
    """Mass of g^2 outside [t0, t]: integral over R minus integral over
    [t0, t], each on the truncated support.

    Real-coefficient g gives a real value >= 0; a real part below -1e-10
    indicates quadrature inconsistency and raises.  Complex coefficients
    (ray probes) give genuinely complex values.
    """
    if t < t0:
        raise ValueError("t must be >= t0")
    total = l2_product(g, g, quad=quad)
    inside = l2_product(g, g, a=t0, b=t, quad=None) if t > t0 else 0j
    value = total - inside
    real_coeffs = all(c.imag == 0 for c, _ in g.terms)
    if real_coeffs:
        if value.real < -1e-10:
            raise ArithmeticError(
                f"complement mass {value.real} < 0 for real-coefficient g"
            )
        return complex(max(value.real, 0.0), 0.0)
    return value


def ray(g: TestFunction, h: TestFunction, w: complex) -> TestFunction:
    """Coefficient-level combination g + w h."""
    return TestFunction(g.terms + tuple((w * c, b) for c, b in h.terms))
