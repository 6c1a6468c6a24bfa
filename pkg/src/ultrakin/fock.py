"""Truncated bosonic Fock spaces and dense Hamiltonian blocks.

Occupation-number states are stored as integer rows ``(n_1, ..., n_S)``.
Product bases follow ``itertools.product`` order (ascending, last species
fastest), which is the ``np.kron`` order.  Sector bases list their states in
descending lexicographic order, e.g. ``(4, 0), (2, 1), (0, 2)``.

Ladder operators act as ``a|n> = sqrt(n)|n-1>`` and
``a^dag|n> = sqrt(n+1)|n+1>``; anything pushed above the cutoff is dropped.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from math import prod
from typing import Sequence

import numpy as np
from scipy.stats import poisson

from .network import ChargeVector, ReactionNetwork, interaction_terms

__all__ = [
    "ClippedSectorError",
    "DimensionError",
    "SectorBasis",
    "HamiltonianBlock",
    "DEFAULT_MAX_DIM",
    "normalize_cutoff",
    "coherent_cutoff",
    "sector_basis",
    "product_basis",
    "build_hamiltonian",
    "number_matrix",
]

DEFAULT_MAX_DIM = 2_000_000


class ClippedSectorError(ValueError):
    """A charge sector has admissible states beyond the cutoff."""


class DimensionError(ValueError):
    """Basis dimension above the configured cap."""


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """Occupation basis of a charge sector, or the full product basis.

    ``charge`` is ``None`` for a product basis.
    """

    states: np.ndarray
    cutoff: tuple[int, ...]
    charge: ChargeVector | None = None
    charge_value: int | None = None

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    @property
    def n_species(self) -> int:
        return self.states.shape[1]

    def __len__(self):
        return self.dim

    def index(self, occupation: Sequence[int]) -> int:
        hits = np.flatnonzero((self.states == np.asarray(occupation)).all(axis=1))
        if hits.size == 0:
            raise KeyError(f"{tuple(occupation)} not in basis")
        return int(hits[0])

    def codes(self) -> np.ndarray:
        """Mixed-radix integer code of each state (monotone in lexicographic order)."""
        return _encode(self.states, self.cutoff)


def _encode(states, cutoff):
    radix = np.array([k + 1 for k in cutoff], dtype=np.int64)
    place = np.ones(len(cutoff), dtype=np.int64)
    for s in range(len(cutoff) - 2, -1, -1):
        place[s] = place[s + 1] * radix[s + 1]
    return states.astype(np.int64) @ place


def normalize_cutoff(network: ReactionNetwork, cutoff) -> tuple[int, ...]:
    """Expand a scalar cutoff to one entry per species and validate it."""
    n = len(network.species)
    if np.isscalar(cutoff):
        cut = (int(cutoff),) * n
    else:
        cut = tuple(int(k) for k in cutoff)
    if len(cut) != n:
        raise ValueError(f"expected {n} cutoffs, got {len(cut)}")
    if any(k < 0 for k in cut):
        raise ValueError("cutoffs must be non-negative")
    return cut


def coherent_cutoff(mean_occupation: float, tol: float = 1e-12) -> int:
    """Smallest ``K`` with Poisson tail mass ``P(n > K) < tol``."""
    mu = float(mean_occupation)
    if mu < 0:
        raise ValueError("mean occupation must be non-negative")
    if mu == 0:
        return 0
    k = int(mu)
    step = max(1, int(np.sqrt(mu)))
    while poisson.sf(k, mu) >= tol:
        k += step
    while k > 0 and poisson.sf(k - 1, mu) < tol:
        k -= 1
    return k


def product_basis(network: ReactionNetwork, cutoff, max_dim: int = DEFAULT_MAX_DIM) -> SectorBasis:
    """Full tensor-product basis with ``n_s <= cutoff_s``."""
    cut = normalize_cutoff(network, cutoff)
    dim = prod(k + 1 for k in cut)
    if dim > max_dim:
        raise DimensionError(f"product basis dimension {dim} exceeds cap {max_dim}")
    grids = np.meshgrid(*[np.arange(k + 1) for k in cut], indexing="ij")
    states = np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)
    return SectorBasis(states, cut)


def sector_basis(network: ReactionNetwork, charge: ChargeVector, charge_value: int,
                 cutoff, max_dim: int = DEFAULT_MAX_DIM) -> SectorBasis:
    """All states with ``sum_s w_s n_s == charge_value``.

    Raises :class:`ClippedSectorError` if the cutoff removes any admissible
    state, so truncation never silently enters a sector.
    """
    cut = normalize_cutoff(network, cutoff)
    w = tuple(charge.weights)
    if len(w) != len(cut):
        raise ValueError("charge vector does not match the network")
    if charge_value < 0:
        raise ValueError("charge value must be non-negative")
    if any(x <= 0 for x in w):
        raise ClippedSectorError("charge with non-positive weights has unbounded sectors")

    states = []

    def rec(s, remaining, prefix):
        if s == len(w) - 1:
            if remaining % w[s] == 0:
                states.append(prefix + [remaining // w[s]])
            return
        for n in range(remaining // w[s], -1, -1):
            rec(s + 1, remaining - n * w[s], prefix + [n])
            if len(states) > max_dim:
                raise DimensionError(f"sector dimension exceeds cap {max_dim}")

    rec(0, int(charge_value), [])
    arr = np.array(states, dtype=np.int64).reshape(-1, len(w))
    over = (arr > np.array(cut)).any(axis=1)
    if over.any():
        bad = tuple(int(x) for x in arr[np.argmax(over)])
        raise ClippedSectorError(f"state {bad} of sector {charge_value} exceeds cutoff {cut}")
    return SectorBasis(arr, cut, charge, int(charge_value))


@dataclass(frozen=True, eq=False)
class HamiltonianBlock:
    basis: SectorBasis
    matrix: np.ndarray

    @property
    def dim(self) -> int:
        return self.basis.dim

    def to_csv(self, path, threshold: float = 0.0) -> None:
        """Dump nonzero entries as ``row,col,value`` rows."""
        rows, cols = np.nonzero(np.abs(self.matrix) > threshold)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["row", "col", "value"])
            for r, c in zip(rows, cols):
                writer.writerow([int(r), int(c), repr(float(self.matrix[r, c]))])


def _falling(n, k):
    """Column-wise ``n (n-1) ... (n-k+1)`` for integer arrays, as floats."""
    out = np.ones(n.shape[0])
    for s in range(n.shape[1]):
        for j in range(int(k[s])):
            out *= n[:, s] - j
    return out


def build_hamiltonian(network: ReactionNetwork, basis: SectorBasis) -> HamiltonianBlock:
    """Dense real symmetric ``sum_s E_s n_s + sum_m (M + M^T)``."""
    states = basis.states
    if states.shape[1] != len(network.species):
        raise ValueError("basis does not match the network")
    cut = np.array(basis.cutoff)
    dim = basis.dim
    H = np.zeros((dim, dim))
    H[np.diag_indices(dim)] = states @ np.array(network.energies, dtype=float)

    codes = basis.codes()
    order = np.argsort(codes, kind="stable")
    sorted_codes = codes[order]

    for mono in interaction_terms(network):
        if mono.rate == 0.0:
            continue
        create = np.array([c for c, _ in mono.factors])
        annihilate = np.array([d for _, d in mono.factors])
        ok = (states >= annihilate).all(axis=1)
        target = states - annihilate + create
        ok &= (target <= cut).all(axis=1)
        if not ok.any():
            continue
        src = np.flatnonzero(ok)
        m = target[src]
        amp = mono.rate * np.sqrt(_falling(states[src].astype(float), annihilate)
                                  * _falling(m.astype(float), create))
        tcodes = _encode(m, basis.cutoff)
        pos = np.searchsorted(sorted_codes, tcodes)
        pos = np.minimum(pos, dim - 1)
        inside = sorted_codes[pos] == tcodes
        rows = order[pos[inside]]
        cols = src[inside]
        M = np.zeros((dim, dim))
        np.add.at(M, (rows, cols), amp[inside])
        H += M + M.T
    return HamiltonianBlock(basis, H)


def number_matrix(basis: SectorBasis, species: int) -> np.ndarray:
    """Diagonal matrix of the occupation of one species."""
    if not 0 <= species < basis.n_species:
        raise IndexError(f"species index {species} out of range")
    return np.diag(basis.states[:, species].astype(float))
