"""Exact dynamics in truncated Fock space and equilibration diagnostics.

States live either on one product basis or on a list of charge sectors.  In
the sector layout each block evolves independently, so a coherent state that
spreads over a few hundred sectors costs a few hundred small dense
eigendecompositions instead of one large one.

Time is measured in units of the Hamiltonian scale: with ``H`` expressed in
units of ``k`` the variable ``tau`` equals ``t k / hbar``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import gammaln
from scipy.stats import poisson

from .fock import (
    HamiltonianBlock,
    SectorBasis,
    build_hamiltonian,
    coherent_cutoff,
    normalize_cutoff,
    number_matrix,
    product_basis,
    sector_basis,
)
from .network import ChargeVector, ReactionNetwork, conserved_charges

__all__ = [
    "TailMassError",
    "DegeneracyError",
    "QuantumState",
    "EigenSystem",
    "ObservableSeries",
    "EnsembleReport",
    "coherent_amplitudes",
    "coherent_product_state",
    "hamiltonian_blocks",
    "diagonalize",
    "evolve",
    "expectation_series",
    "number_expectation",
    "expand_to_product",
    "reduced_density",
    "von_neumann_entropy",
    "entropy_series",
    "fidelity_series",
    "diagonal_ensemble",
    "microcanonical_average",
    "time_average",
    "breakdown_time",
    "raman_rate",
]

TAIL_TOL = 1e-12
POPULATED_TOL = 1e-12
DEGENERACY_RTOL = 1e-9
MICROCANONICAL_FRACTION = 0.05


class TailMassError(ValueError):
    """Coherent amplitudes lose too much weight beyond the cutoff."""


class DegeneracyError(ValueError):
    """Near-degenerate levels inside one block; diagonal-ensemble formulas do not apply."""


# --------------------------------------------------------------------------
# states

@dataclass(eq=False)
class QuantumState:
    """Complex amplitudes, one vector per basis block."""

    bases: list[SectorBasis]
    amplitudes: list[np.ndarray]

    def __post_init__(self):
        if len(self.bases) != len(self.amplitudes):
            raise ValueError("one amplitude vector per block expected")
        for b, a in zip(self.bases, self.amplitudes):
            if a.shape != (b.dim,):
                raise ValueError("amplitude vector does not match its basis")

    @property
    def is_sectored(self) -> bool:
        return any(b.charge is not None for b in self.bases)

    def norm(self) -> float:
        return float(np.sqrt(sum(np.vdot(a, a).real for a in self.amplitudes)))

    def block_weights(self) -> np.ndarray:
        return np.array([np.vdot(a, a).real for a in self.amplitudes])

    def copy(self) -> "QuantumState":
        return QuantumState(list(self.bases), [a.copy() for a in self.amplitudes])


def _log_coherent(alpha: complex, n: np.ndarray):
    """log|c_n| and arg c_n for c_n = exp(-|a|^2/2) a^n / sqrt(n!)."""
    n = np.asarray(n, dtype=float)
    r = abs(alpha)
    if r == 0:
        logmag = np.where(n == 0, 0.0, -np.inf)
        return logmag, np.zeros_like(n)
    logmag = -0.5 * r * r + n * np.log(r) - 0.5 * gammaln(n + 1)
    return logmag, n * np.angle(alpha)


def coherent_amplitudes(alpha: complex, cutoff: int) -> np.ndarray:
    """Unnormalized coherent-state coefficients ``c_0 .. c_cutoff``."""
    logmag, phase = _log_coherent(alpha, np.arange(cutoff + 1))
    return np.exp(logmag) * np.exp(1j * phase)


def coherent_product_state(network: ReactionNetwork, amplitudes: Sequence[complex],
                           cutoff=None, layout: str = "auto",
                           tail_tol: float = TAIL_TOL) -> QuantumState:
    """Product of single-mode coherent states.

    ``cutoff`` defaults to the smallest per-mode value with tail mass below
    ``tail_tol``.  With ``layout="auto"`` the state is split over the
    sectors of the first conserved charge when one with positive weights
    exists, otherwise it is placed on the product basis.
    """
    alphas = [complex(a) for a in amplitudes]
    if len(alphas) != len(network.species):
        raise ValueError("one amplitude per species expected")
    if cutoff is None:
        cut = tuple(coherent_cutoff(abs(a) ** 2, tail_tol) for a in alphas)
    else:
        cut = normalize_cutoff(network, cutoff)
    for a, k, s in zip(alphas, cut, network.species):
        # Poisson tail computed directly; 1 - sum(|c_n|^2) loses digits
        tail = float(poisson.sf(k, abs(a) ** 2)) if a != 0 else 0.0
        if tail >= tail_tol:
            raise TailMassError(f"mode {s.name}: tail mass {tail:.3g} beyond cutoff {k}")

    charge = None
    if layout in ("auto", "sector"):
        charges = [c for c in conserved_charges(network) if all(w > 0 for w in c.weights)]
        if charges:
            charge = charges[0]
        elif layout == "sector":
            raise ValueError("network has no charge with positive weights")
    elif layout != "product":
        raise ValueError(f"unknown layout {layout!r}")

    if charge is None:
        basis = product_basis(network, cut)
        amp = np.ones(basis.dim, dtype=complex)
        for s, a in enumerate(alphas):
            amp *= coherent_amplitudes(a, cut[s])[basis.states[:, s]]
        amp /= np.linalg.norm(amp)
        return QuantumState([basis], [amp])

    w = charge.weights
    vmax = sum(wi * k for wi, k in zip(w, cut))
    sector_cut = tuple(vmax // wi for wi in w)
    bases, amps = [], []
    for v in range(vmax + 1):
        b = sector_basis(network, charge, v, sector_cut)
        logmag = np.zeros(b.dim)
        phase = np.zeros(b.dim)
        for s, a in enumerate(alphas):
            lm, ph = _log_coherent(a, b.states[:, s])
            logmag += lm
            phase += ph
        bases.append(b)
        amps.append(np.exp(logmag) * np.exp(1j * phase))
    total = np.sqrt(sum(np.vdot(x, x).real for x in amps))
    return QuantumState(bases, [x / total for x in amps])


def hamiltonian_blocks(network: ReactionNetwork, layout) -> list[HamiltonianBlock]:
    """Hamiltonian for each basis block of a state (or list of bases)."""
    bases = layout.bases if isinstance(layout, QuantumState) else list(layout)
    return [build_hamiltonian(network, b) for b in bases]


# --------------------------------------------------------------------------
# spectra and evolution

@dataclass(eq=False)
class EigenSystem:
    bases: list[SectorBasis]
    eigenvalues: list[np.ndarray]
    eigenvectors: list[np.ndarray]

    def __len__(self):
        return len(self.bases)

    def coefficients(self, state: QuantumState) -> list[np.ndarray]:
        """Overlaps with the eigenbasis, per block."""
        _check_layout(self, state)
        return [V.T @ a for V, a in zip(self.eigenvectors, state.amplitudes)]

    def energy(self, state: QuantumState) -> float:
        return float(sum(np.sum(np.abs(c) ** 2 * lam)
                         for c, lam in zip(self.coefficients(state), self.eigenvalues)))


def _check_layout(eig, state):
    if len(eig.bases) != len(state.bases) or any(
            a.dim != b.dim for a, b in zip(eig.bases, state.bases)):
        raise ValueError("state and eigensystem use different layouts")


def diagonalize(blocks) -> EigenSystem:
    """Full symmetric eigendecomposition of one block or a list of blocks."""
    if isinstance(blocks, HamiltonianBlock):
        blocks = [blocks]
    bases, vals, vecs = [], [], []
    for blk in blocks:
        try:
            lam, V = np.linalg.eigh(blk.matrix)
        except np.linalg.LinAlgError as exc:
            raise RuntimeError(f"eigensolver failed on a block of dimension {blk.dim}") from exc
        bases.append(blk.basis)
        vals.append(lam)
        vecs.append(V)
    return EigenSystem(bases, vals, vecs)


def evolve(eig: EigenSystem, state: QuantumState, times) -> list[QuantumState]:
    """``psi(tau) = V exp(-i Lambda tau) V^T psi(0)`` for each requested time."""
    coeffs = eig.coefficients(state)
    out = []
    for tau in np.atleast_1d(np.asarray(times, dtype=float)):
        amps = [V @ (np.exp(-1j * lam * tau) * c)
                for V, lam, c in zip(eig.eigenvectors, eig.eigenvalues, coeffs)]
        out.append(QuantumState(list(state.bases), amps))
    return out


def _block_series(V, lam, c, times):
    """Fock-basis amplitudes of one block at all times, shape (dim, T)."""
    return V @ (np.exp(-1j * np.outer(lam, times)) * c[:, None])


def expectation_series(eig: EigenSystem, state: QuantumState, observables: Sequence[int],
                       times, chunk: int = 512) -> np.ndarray:
    """Mean occupations of the given species over time, shape ``(len(observables), T)``.

    Never stores the full state history; blocks and time chunks are
    processed one at a time.
    """
    times = np.asarray(times, dtype=float)
    coeffs = eig.coefficients(state)
    out = np.zeros((len(observables), times.size))
    for V, lam, c, b in zip(eig.eigenvectors, eig.eigenvalues, coeffs, eig.bases):
        if not np.any(c):
            continue
        occ = b.states[:, list(observables)].T.astype(float)
        for lo in range(0, times.size, chunk):
            sl = slice(lo, lo + chunk)
            prob = np.abs(_block_series(V, lam, c, times[sl])) ** 2
            out[:, sl] += occ @ prob
    return out


def fidelity_series(eig: EigenSystem, state: QuantumState, times) -> np.ndarray:
    """Return probability ``|<psi(0)|psi(tau)>|^2``."""
    times = np.asarray(times, dtype=float)
    weights = np.concatenate([np.abs(c) ** 2 for c in eig.coefficients(state)])
    lam = np.concatenate(eig.eigenvalues)
    keep = weights > 0
    amp = np.exp(-1j * np.outer(times, lam[keep])) @ weights[keep]
    return np.abs(amp) ** 2


def number_expectation(state: QuantumState, species: int) -> float:
    return float(sum(np.sum(np.abs(a) ** 2 * b.states[:, species])
                     for b, a in zip(state.bases, state.amplitudes)))


# --------------------------------------------------------------------------
# entanglement

def expand_to_product(state: QuantumState) -> tuple[np.ndarray, tuple[int, ...]]:
    """Amplitude tensor of shape ``(K_1+1, ..., K_S+1)`` on the product space."""
    cut = state.bases[0].cutoff
    if any(b.cutoff != cut for b in state.bases):
        raise ValueError("blocks use different cutoffs")
    psi = np.zeros(tuple(k + 1 for k in cut), dtype=complex)
    for b, a in zip(state.bases, state.amplitudes):
        psi[tuple(b.states.T)] += a
    return psi, cut


def reduced_density(state: QuantumState, species: int) -> np.ndarray:
    """Reduced density matrix of one mode (partial trace over the others)."""
    psi, _ = expand_to_product(state)
    mat = np.moveaxis(psi, species, 0).reshape(psi.shape[species], -1)
    rho = mat @ mat.conj().T
    return 0.5 * (rho + rho.conj().T)


def von_neumann_entropy(rho: np.ndarray, neg_tol: float = 1e-10) -> float:
    """Entropy ``-Tr rho ln rho`` in nats."""
    lam = np.linalg.eigvalsh(rho)
    if lam.min() < -neg_tol:
        raise ValueError(f"density matrix has negative eigenvalue {lam.min():.3g}")
    lam = lam[lam > 1e-14]
    return float(-np.sum(lam * np.log(lam)))


def entropy_series(eig: EigenSystem, state: QuantumState, species: int, times) -> np.ndarray:
    """Entanglement entropy of one mode with the rest, at each time."""
    return np.array([von_neumann_entropy(reduced_density(s, species))
                     for s in evolve(eig, state, times)])


# --------------------------------------------------------------------------
# ensembles

@dataclass
class EnsembleReport:
    mean_diag: float
    fluct_sq: float
    mean_micro: float | None = None
    window: tuple[float, float] | None = None

    def to_json(self) -> str:
        d = asdict(self)
        if d["window"] is not None:
            d["window"] = list(d["window"])
        return json.dumps(d, indent=2)


def _observable_blocks(eig: EigenSystem, observable):
    if isinstance(observable, (int, np.integer)):
        return [number_matrix(b, int(observable)) for b in eig.bases]
    mats = list(observable)
    if len(mats) != len(eig.bases):
        raise ValueError("one observable matrix per block expected")
    return mats


def _check_nondegenerate(lam, rtol=DEGENERACY_RTOL):
    if lam.size < 2:
        return
    spread = lam[-1] - lam[0]
    gap = np.min(np.diff(lam))
    if spread == 0 or gap < rtol * spread:
        raise DegeneracyError(f"level spacing {gap:.3g} below {rtol:g} x spectral range")


def diagonal_ensemble(eig: EigenSystem, state: QuantumState, observable,
                      populated_tol: float = POPULATED_TOL) -> EnsembleReport:
    """Diagonal-ensemble mean and time-averaged fluctuations of an observable.

    ``mean = sum_a |c_a|^2 O_aa`` and
    ``fluct = sum_{a != b} |c_a|^2 |c_b|^2 |O_ab|^2``, both summed over all
    blocks that carry weight.
    """
    mats = _observable_blocks(eig, observable)
    mean = 0.0
    fluct = 0.0
    for V, lam, c, O in zip(eig.eigenvectors, eig.eigenvalues, eig.coefficients(state), mats):
        p = np.abs(c) ** 2
        if p.sum() <= populated_tol:
            continue
        _check_nondegenerate(lam)
        Oe = V.T @ O @ V
        mean += float(p @ np.diag(Oe))
        off = np.abs(Oe) ** 2
        np.fill_diagonal(off, 0.0)
        fluct += float(p @ off @ p)
    return EnsembleReport(mean, fluct)


def microcanonical_average(eig: EigenSystem, observable, state: QuantumState | None = None,
                           E_center: float | None = None, E_halfwidth: float | None = None,
                           populated_tol: float = POPULATED_TOL) -> tuple[float, tuple[float, float]]:
    """Unweighted mean of ``O_aa`` over eigenstates in an energy shell.

    Without a state every block is used and both ``E_center`` and
    ``E_halfwidth`` are required.  With a state, only blocks carrying weight
    enter; the centre defaults to the state's energy and the half-width to
    5% of the range spanned by eigenstates with overlap above
    ``populated_tol``.  Returns the average and the ``(centre, halfwidth)``
    window actually used.
    """
    mats = _observable_blocks(eig, observable)
    if state is None:
        if E_center is None or E_halfwidth is None:
            raise ValueError("E_center and E_halfwidth are required without a state")
        use = [True] * len(eig.bases)
    else:
        coeffs = eig.coefficients(state)
        use = [np.sum(np.abs(c) ** 2) > populated_tol for c in coeffs]
        if E_center is None:
            E_center = eig.energy(state)
        if E_halfwidth is None:
            pop = np.concatenate([lam[np.abs(c) ** 2 > populated_tol]
                                  for lam, c in zip(eig.eigenvalues, coeffs)])
            E_halfwidth = MICROCANONICAL_FRACTION * float(pop.max() - pop.min())
    total, count = 0.0, 0
    for V, lam, O, u in zip(eig.eigenvectors, eig.eigenvalues, mats, use):
        if not u:
            continue
        sel = np.abs(lam - E_center) <= E_halfwidth
        if not sel.any():
            continue
        Vs = V[:, sel]
        total += float(np.sum(Vs * (O @ Vs)))
        count += int(sel.sum())
    if count == 0:
        raise ValueError(f"no eigenstates within {E_center:g} +- {E_halfwidth:g}")
    return total / count, (float(E_center), float(E_halfwidth))


# --------------------------------------------------------------------------
# time series

@dataclass(eq=False)
class ObservableSeries:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def window(self, lo: float, hi: float) -> "ObservableSeries":
        """Restriction to ``[lo, hi]`` with linearly interpolated end points."""
        t, v = self.times, self.values
        if hi <= lo:
            raise ValueError("window must have positive length")
        if lo < t[0] - 1e-12 or hi > t[-1] + 1e-12:
            raise ValueError(f"window [{lo}, {hi}] outside series [{t[0]}, {t[-1]}]")
        inner = (t > lo) & (t < hi)
        tt = np.concatenate([[lo], t[inner], [hi]])
        return ObservableSeries(tt, np.interp(tt, t, v))


def time_average(series: ObservableSeries, window=None) -> tuple[float, float]:
    """Trapezoidal time average over a window and the variance about it."""
    s = series if window is None else series.window(*window)
    span = s.times[-1] - s.times[0]
    mean = float(trapezoid(s.values, s.times) / span)
    var = float(trapezoid((s.values - mean) ** 2, s.times) / span)
    return mean, var


def breakdown_time(quantum: ObservableSeries, meanfield: ObservableSeries,
                   rel_threshold: float = 0.05) -> float | None:
    """First time the two series differ by more than ``rel_threshold`` (relative to the start)."""
    if quantum.times.shape != meanfield.times.shape or not np.allclose(
            quantum.times, meanfield.times, rtol=0, atol=1e-12):
        raise ValueError("series use different time grids")
    scale = max(abs(quantum.values[0]), 1.0)
    dev = np.abs(quantum.values - meanfield.values) / scale
    if dev[0] > rel_threshold:
        raise ValueError("series disagree already at the first sample")
    hit = np.flatnonzero(dev > rel_threshold)
    return float(quantum.times[hit[0]]) if hit.size else None


def raman_rate(k1: float, k2: float, detuning: float) -> float:
    """Effective two-photon coupling ``k1 k2 / (2 detuning)`` of a Raman transition."""
    if detuning == 0:
        raise ValueError("detuning must be nonzero")
    return k1 * k2 / (2.0 * detuning)
