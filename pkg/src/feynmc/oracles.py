"""Independent reference computations used as ground truth.

Three oracles, none of which touches the path-sampling machinery:

* ``free_evolve`` — quadrature of the free kernel
  (2 pi i t)^(-1/2) exp(i (x - x0)^2 / (2t)) against the initial state,
  with the closed form pi^(-1/4) (1 + i t)^(-1/2) exp(-x^2 / (2(1+it)))
  cross-checked whenever the state is the ground Hermite function.
* ``linear_source_evolve`` — kernel built from the classical action of a
  particle driven by the time-dependent linear force, for the only
  non-free case with a closed-form kernel.
* ``cn_evolve`` — Crank-Nicolson grid solver for
  i psi_t = -1/2 psi_xx + V(t, x) psi with homogeneous Dirichlet walls.

Oscillatory kernel integrals use composite Gauss-Legendre with the panel
count scaled to the total phase, so accuracy is uniform down to small
times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .numerics import QuadratureRule, integrate, panel_gauss_legendre
from .potentials import PotentialSpec, eval_potential_array
from .states import HermiteState, State, StateCombination, eval_state_array
from .testfunctions import TestFunction, eval_g

__all__ = [
    "OracleIntegrityError",
    "free_closed_form_ground",
    "free_evolve",
    "linear_source_evolve",
    "GridSolverConfig",
    "cn_evolve",
    "CNResult",
]

_DOMAIN = 12.0


class OracleIntegrityError(Exception):
    """Two independent oracle methods disagree beyond tolerance."""


def free_closed_form_ground(t: float, x: complex) -> complex:
    """Free evolution of the ground Hermite state:
    pi^(-1/4) (1 + i t)^(-1/2) exp(-x^2 / (2 (1 + i t)))."""
    denom = 1.0 + 1j * t
    return math.pi ** (-0.25) / np.sqrt(denom) * np.exp(-(x**2) / (2.0 * denom))


def _kernel_panels(t: float, x: float, half_width: float, order: int) -> int:
    # Total phase of exp(i (x - x0)^2 / 2t) across the window, ~1 rad per
    # node after dividing by the panel order.
    max_dist = abs(x) + half_width
    phase = max_dist**2 / (2.0 * t)
    return max(25, int(math.ceil(phase / order)) + 1)


def free_evolve(state: State, t: float, x: float, order: int = 16) -> complex:
    """Free propagator applied to ``state`` at (t, x) by kernel quadrature.

    When the state is exactly the ground Hermite function the closed form
    is also evaluated and the two must agree to 1e-6, else
    OracleIntegrityError.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    panels = _kernel_panels(t, x, _DOMAIN, order)
    prefactor = 1.0 / np.sqrt(2.0j * math.pi * t)

    def integrand(x0: np.ndarray) -> np.ndarray:
        kernel = prefactor * np.exp(1j * (x - x0) ** 2 / (2.0 * t))
        return kernel * eval_state_array(state, x0.astype(complex))

    value = panel_gauss_legendre(integrand, -_DOMAIN, _DOMAIN, panels, order)
    is_ground = isinstance(state, HermiteState) and state.m == 0
    if is_ground:
        closed = free_closed_form_ground(t, x)
        if abs(value - closed) > 1e-6:
            raise OracleIntegrityError(
                f"free oracle disagreement at t={t}, x={x}: "
                f"quadrature {value}, closed form {closed}"
            )
    return value


def _source_integrals(g: TestFunction, t0: float, t: float, order: int = 200):
    """Antiderivative data for the driving force E(u) = g'(u) on [t0, t]:
    F(u) = g(u) - g(t0), G(u) = int_t0^u F, and int_t0^t F^2."""
    g_t0 = eval_g(g, t0)

    def F(u: np.ndarray) -> np.ndarray:
        return eval_g(g, u) - g_t0

    rule = QuadratureRule("gauss-legendre", order, (t0, t))
    nodes, weights = rule.nodes_weights()
    F_nodes = F(nodes)
    int_F2 = complex(np.sum(weights * F_nodes * F_nodes))
    # G(t) by iterated quadrature: int_t0^t F(u) du with F evaluated
    # exactly, then the same for the inner antiderivative at each node.
    G_t = complex(np.sum(weights * F_nodes))
    return F, G_t, int_F2


def linear_source_evolve(
    state: State,
    g: TestFunction,
    t: float,
    t0: float,
    x: float,
    order: int = 16,
    endpoint_phase: TestFunction | None = None,
) -> complex:
    """Propagator for H(u) = -1/2 d^2/dx^2 + g'(u) x applied to ``state``.

    The kernel is (2 pi i T)^(-1/2) exp(i S_cl(x, t; x0, t0)) with the
    classical action of the driven free particle:

        S_cl = v0^2 T / 2 - x0 F(t) - v0 F(t) T + F(t) G(t)
               - (1/2) int_t0^t F^2,
        v0 = (x - x0 + G(t)) / T,  F(u) = g(u) - g(t0),
        G(u) = int_t0^u F.

    ``endpoint_phase`` multiplies the initial state by
    exp(i * endpoint_phase(t) * x0) before propagation (the transform's
    endpoint factor), evaluated at the EVOLUTION endpoint time t.
    """
    T = t - t0
    if T <= 0:
        raise ValueError("t must exceed t0")
    F, G_t, int_F2 = _source_integrals(g, t0, t)
    F_t = complex(F(np.array([t]))[0])
    phase_const = F_t * G_t - 0.5 * int_F2
    panels = _kernel_panels(T, x, _DOMAIN, order)
    prefactor = 1.0 / np.sqrt(2.0j * math.pi * T)
    phase_factor = (
        complex(eval_g(endpoint_phase, t)) if endpoint_phase is not None else 0j
    )

    def integrand(x0: np.ndarray) -> np.ndarray:
        v0 = (x - x0 + G_t) / T
        action = 0.5 * v0 * v0 * T - x0 * F_t - v0 * F_t * T + phase_const
        kernel = prefactor * np.exp(1j * action)
        f0 = eval_state_array(state, x0.astype(complex))
        if phase_factor != 0j:
            f0 = f0 * np.exp(1j * phase_factor * x0)
        return kernel * f0

    return panel_gauss_legendre(integrand, -_DOMAIN, _DOMAIN, panels, order)


@dataclass(frozen=True)
class GridSolverConfig:
    """Crank-Nicolson grid: [-L, L], n_x points, implicit step dt,
    homogeneous Dirichlet walls."""

    L: float = _DOMAIN
    n_x: int = 2401
    dt: float = 1e-4

    def __post_init__(self) -> None:
        if self.L < 12.0:
            raise ValueError("L must be >= 12 for Hermite initial states")
        if self.n_x < 3:
            raise ValueError("n_x must be >= 3")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def dx(self) -> float:
        return 2.0 * self.L / (self.n_x - 1)

    def grid(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.n_x)


@dataclass(frozen=True)
class CNResult:
    """Grid solution at the final time plus conservation diagnostics."""

    x: np.ndarray
    psi: np.ndarray
    mass_drift: float
    n_steps: int

    def at(self, x_query: float) -> complex:
        re = np.interp(x_query, self.x, self.psi.real)
        im = np.interp(x_query, self.x, self.psi.imag)
        return complex(re, im)


def cn_evolve(
    config: GridSolverConfig,
    potential: PotentialSpec,
    state: State,
    t: float,
    g: TestFunction | None = None,
    t0: float = 0.0,
) -> CNResult:
    """Crank-Nicolson evolution of i psi_t = -1/2 psi_xx + V(u, x) psi
    from t0 to t, V(u, x) = V0(x) + g'(u) x.

    Each step applies the Cayley transform of H evaluated at the midpoint
    time, which is exactly unitary for real V; the reported mass drift is
    therefore a solver health number, not a physics number.
    """
    span = t - t0
    if span <= 0:
        raise ValueError("t must exceed t0")
    x = config.grid()
    interior = x[1:-1]
    v0, invalid = eval_potential_array(potential, interior.astype(complex))
    if np.any(invalid):
        bad = interior[np.argmax(invalid)]
        raise ValueError(
            f"potential singular on the grid at x={bad}; exclude a "
            f"neighborhood or shrink the domain"
        )
    n_steps = max(1, int(round(span / config.dt)))
    dt = span / n_steps
    dx = config.dx
    n = len(interior)
    psi = eval_state_array(state, interior.astype(complex)).astype(complex)
    mass0 = float(np.sum(np.abs(psi) ** 2) * dx)

    kinetic_main = np.full(n, 1.0 / dx**2)
    kinetic_off = np.full(n - 1, -0.5 / dx**2)
    half = 0.5j * dt
    time_dependent = g is not None and not g.is_zero

    def build(v_diag: np.ndarray):
        main = 1.0 + half * (kinetic_main + v_diag)
        a_plus = scipy.sparse.diags(
            [half * kinetic_off, main, half * kinetic_off], [-1, 0, 1], format="csc"
        )
        return scipy.sparse.linalg.splu(a_plus)

    if not time_dependent:
        solver = build(v0)
        main_minus = 1.0 - half * (kinetic_main + v0)
    for k in range(n_steps):
        if time_dependent:
            u_mid = t0 + (k + 0.5) * dt
            v_diag = v0 + eval_g(g, u_mid, derivative=1) * interior
            solver = build(v_diag)
            main_minus = 1.0 - half * (kinetic_main + v_diag)
        rhs = main_minus * psi
        rhs[1:] += -half * kinetic_off * psi[:-1]
        rhs[:-1] += -half * kinetic_off * psi[1:]
        psi = solver.solve(rhs)
    mass1 = float(np.sum(np.abs(psi) ** 2) * dx)
    drift = abs(mass1 - mass0) / max(mass0, 1e-300)
    full = np.zeros(config.n_x, dtype=complex)
    full[1:-1] = psi
    return CNResult(x=x, psi=full, mass_drift=drift, n_steps=n_steps)
