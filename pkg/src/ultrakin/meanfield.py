"""Mean-field and classical kinetics.

Replacing every ladder operator by a complex amplitude turns the network
Hamiltonian into a classical function ``H(alpha, conj(alpha))`` and the
dynamics into ``i d alpha_s / dt = dH / d conj(alpha_s)``.  For the concurrent
reaction ``A + A <k1> A2``, ``0 <k2> A`` this reads

    i a'  = E_A a + 2 k1 conj(a) b + k2
    i b'  = E_A2 b + k1 a^2

and after scaling ``alpha = alpha0 * alpha~``, ``t = t0 * tau`` only the two
numbers ``c1 = k1 k2 / E_A^2`` and ``c2 = E_A2 / E_A`` remain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .integrators import IntegrationError, solve
from .network import ReactionNetwork, interaction_terms

__all__ = [
    "NondimParams",
    "Trajectory",
    "ModulationPrediction",
    "meanfield_vector_field",
    "meanfield_energy",
    "nondimensionalize",
    "nondim_vector_field",
    "nondim_energy",
    "total_number",
    "as_real_field",
    "integrate",
    "classical_rate_field",
    "integrate_classical",
    "arrhenius_rate",
    "perturbative_modulation",
]

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12


def _monomials(network: ReactionNetwork):
    out = []
    for mono in interaction_terms(network):
        c = np.array([f[0] for f in mono.factors])
        d = np.array([f[1] for f in mono.factors])
        out.append((mono.rate, c, d))
    return out


def meanfield_energy(network: ReactionNetwork) -> Callable:
    """Classical energy ``H(alpha)`` of a network; ``alpha`` has shape ``(..., S)``."""
    energies = np.array(network.energies, dtype=float)
    monos = _monomials(network)

    def energy(alpha):
        alpha = np.asarray(alpha, dtype=complex)
        conj = alpha.conj()
        H = np.sum(energies * np.abs(alpha) ** 2, axis=-1)
        for k, c, d in monos:
            term = np.prod(conj ** c * alpha ** d, axis=-1)
            H = H + 2.0 * k * term.real
        return H

    return energy


def meanfield_vector_field(network: ReactionNetwork) -> Callable:
    """``f(tau, alpha) = -i dH/d conj(alpha)`` for the network's mean-field energy.

    Each monomial ``k conj(a)^c a^d + c.c.`` contributes
    ``k c_s conj(a_s)^(c_s-1) a_s^d_s ...`` from the first term and
    ``k d_s conj(a_s)^(d_s-1) a_s^c_s ...`` from its conjugate.
    """
    energies = np.array(network.energies, dtype=float)
    monos = _monomials(network)
    S = len(network.species)

    def field(tau, alpha):
        alpha = np.asarray(alpha, dtype=complex)
        conj = alpha.conj()
        grad = energies * alpha
        for k, c, d in monos:
            for s in range(S):
                for first, second in ((c, d), (d, c)):
                    # first: powers of conj(alpha), second: powers of alpha
                    if first[s] == 0:
                        continue
                    p = first.copy()
                    p[s] -= 1
                    term = first[s] * np.prod(conj ** p * alpha ** second, axis=-1)
                    grad[..., s] = grad[..., s] + k * term
        return -1j * grad

    return field


@dataclass(frozen=True)
class NondimParams:
    t0: float
    alpha0: float
    c1: float
    c2: float

    def __post_init__(self):
        if not self.t0 > 0:
            raise ValueError("t0 must be positive")
        if self.alpha0 == 0:
            raise ValueError("alpha0 must be nonzero")


def nondimensionalize(E_A: float, E_A2: float, k1: float, k2: float) -> NondimParams:
    """Scales ``t0 = 1/E_A``, ``alpha0 = k2/E_A`` and couplings ``c1``, ``c2``."""
    if E_A == 0:
        raise ValueError("E_A = 0: the scaling is undefined, integrate the dimensional system")
    if k2 == 0:
        raise ValueError("k2 = 0: the scaling is undefined, integrate the dimensional system")
    return NondimParams(t0=1.0 / E_A, alpha0=k2 / E_A, c1=k1 * k2 / E_A**2, c2=E_A2 / E_A)


def _c1c2(params):
    if isinstance(params, NondimParams):
        return params.c1, params.c2
    c1, c2 = params
    return float(c1), float(c2)


def nondim_vector_field(params, bath: bool = True) -> Callable:
    """Scaled concurrent-reaction field on ``alpha = (a, b)``, shape ``(..., 2)``.

    ``bath=False`` drops the constant drive so ``|a|^2 + 2|b|^2`` is
    conserved.  The returned callable carries a compiled twin used by the
    chaos tools (``jit_kernel``, ``jit_params``).
    """
    c1, c2 = _c1c2(params)
    drive = 1.0 if bath else 0.0

    def field(tau, alpha):
        alpha = np.asarray(alpha, dtype=complex)
        a = alpha[..., 0]
        b = alpha[..., 1]
        da = -1j * (a + drive + 2.0 * c1 * a.conj() * b)
        db = -1j * (c2 * b + c1 * a * a)
        return np.stack([da, db], axis=-1)

    field.jit_kernel = _kernels.concurrent_field
    field.jit_params = np.array([c1, c2, drive])
    field.c1, field.c2, field.bath = c1, c2, bath
    return field


def nondim_energy(state, params, bath: bool = True):
    """Scaled energy ``|a|^2 + c2|b|^2 + c1(conj(a)^2 b + c.c.) + (conj(a) + c.c.)``."""
    c1, c2 = _c1c2(params)
    state = np.asarray(state, dtype=complex)
    a = state[..., 0]
    b = state[..., 1]
    H = np.abs(a) ** 2 + c2 * np.abs(b) ** 2 + 2.0 * c1 * (a.conj() ** 2 * b).real
    if bath:
        H = H + 2.0 * a.real
    return H


def total_number(state):
    """Return ``|a|^2 + 2|b|^2`` for diatomic amplitudes."""
    state = np.asarray(state, dtype=complex)
    return np.abs(state[..., 0]) ** 2 + 2.0 * np.abs(state[..., 1]) ** 2


# --------------------------------------------------------------------------
# integration

def as_real_field(field: Callable) -> Callable:
    """Wrap a complex field ``f(t, alpha)`` as a real field on stacked (re, im) pairs."""

    def real_field(t, y):
        alpha = y.view(complex) if y.flags.c_contiguous else np.ascontiguousarray(y).view(complex)
        return np.asarray(field(t, alpha), dtype=complex).view(float)

    return real_field


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    energy: np.ndarray | None = None

    def occupations(self) -> np.ndarray:
        return np.abs(self.states) ** 2


def integrate(field: Callable, initial, tau_end: float, *, dt: float | None = None,
              times=None, rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
              energy: Callable | None = None, max_steps: int = 50_000_000) -> Trajectory:
    """Integrate a complex mean-field ODE with the adaptive 5(4) pair.

    Output is sampled on ``times`` (or on a uniform grid of spacing ``dt``);
    without either, every accepted step is returned.  Fields carrying a
    compiled twin (see :func:`nondim_vector_field`) are stepped in compiled
    code between grid points; others go through the dense interpolant of
    :func:`ultrakin.integrators.solve`.  ``energy`` maps states to energies.
    """
    y0 = np.ascontiguousarray(np.asarray(initial, dtype=complex))
    if not np.all(np.isfinite(y0)):
        raise ValueError("initial state must be finite")
    if times is None and dt is not None:
        n = int(round(tau_end / dt))
        times = np.linspace(0.0, n * dt, n + 1)
        if times[-1] > tau_end:
            times = times[times <= tau_end]
    kernel = getattr(field, "jit_kernel", None)
    if kernel is not None and times is not None and y0.ndim == 1:
        grid = np.asarray(times, dtype=float)
        if grid[0] != 0.0:
            grid = np.concatenate([[0.0], grid])
        ys, ok = _kernels.advance_grid(field.jit_params, y0.view(float), grid,
                                       1e-3, rtol, atol, max_steps)
        if not ok or not np.all(np.isfinite(ys)):
            raise IntegrationError(f"integration failed near tau = {grid[len(ys) - 1]:g}")
        if grid.size != len(times):
            ys, grid = ys[1:], grid[1:]
        states = np.ascontiguousarray(ys).view(complex)
        t = grid
    else:
        sol = solve(as_real_field(field), (0.0, tau_end), y0.view(float), t_eval=times,
                    rtol=rtol, atol=atol, max_steps=max_steps)
        states = np.ascontiguousarray(sol.y).view(complex)
        t = sol.t
    E = energy(states) if energy is not None else None
    return Trajectory(t, states, E)


# --------------------------------------------------------------------------
# classical kinetics

def classical_rate_field(network: ReactionNetwork) -> Callable:
    """Mass-action rate equations ``f(t, conc)`` for all species.

    Each reversible reaction runs at ``v = k (prod [A]^mu - prod [B]^nu)``;
    reactants change by ``-mu v`` and products by ``+nu v``.
    """
    S = np.array(network.stoichiometry(), dtype=float)
    reacts = []
    for r in network.reactions:
        reacts.append((r.rate,
                       [(s, mu) for s, mu in r.reactants],
                       [(s, nu) for s, nu in r.products]))

    def field(t, conc):
        conc = np.asarray(conc, dtype=float)
        v = np.empty(conc.shape[:-1] + (len(reacts),))
        for j, (k, lhs, rhs) in enumerate(reacts):
            fwd = np.ones(conc.shape[:-1])
            for s, mu in lhs:
                fwd = fwd * conc[..., s] ** mu
            back = np.ones(conc.shape[:-1])
            for s, nu in rhs:
                back = back * conc[..., s] ** nu
            v[..., j] = k * (fwd - back)
        return v @ S.T

    return field


def integrate_classical(network: ReactionNetwork, initial: Sequence[float], t_end: float,
                        times=None, rtol: float = DEFAULT_RTOL,
                        atol: float = DEFAULT_ATOL) -> Trajectory:
    c0 = np.asarray(initial, dtype=float)
    if np.any(c0 < 0):
        raise ValueError("concentrations must be non-negative")
    sol = solve(classical_rate_field(network), (0.0, t_end), c0, t_eval=times, rtol=rtol, atol=atol)
    return Trajectory(sol.t, sol.y)


def arrhenius_rate(prefactor: float, activation_energy: float, temperature: float,
                   kappa: float = 1.0) -> float:
    """Rate ``prefactor * exp(-E_a / (kappa T))``; ``kappa = 1`` for scaled units."""
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    return prefactor * float(np.exp(-activation_energy / (kappa * temperature)))


# --------------------------------------------------------------------------
# weak-coupling modulation

@dataclass(frozen=True)
class ModulationPrediction:
    amplitude: float
    frequency: float
    valid: bool


def perturbative_modulation(c1: float, c2: float, A0: float) -> ModulationPrediction:
    """Leading-order modulation of the atomic oscillation for weak ``c1``.

    ``A_mod = 4 (A0 + 1) A0^3 c1^2 / (c2 - 2)^2`` and ``w_mod = c2 - 1``.
    ``valid`` requires ``c1^2 A0^2 <= 0.1``, ``A0 >= 10`` and ``1 < c2 < 2``
    (a factor of ten stands in for "much less than").
    """
    if c2 == 2:
        raise ValueError("c2 = 2 is a resonance: the amplitude diverges")
    amplitude = 4.0 * (A0 + 1.0) * A0**3 * c1**2 / (c2 - 2.0) ** 2
    valid = (c1 * c1 * A0 * A0 <= 0.1) and (A0 >= 10.0) and (1.0 < c2 < 2.0)
    return ModulationPrediction(amplitude, c2 - 1.0, valid)
