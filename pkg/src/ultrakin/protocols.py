"""Standard runs of the diatomic reaction ``A + A <k> A2``.

The quantum runs use the interaction part of the Hamiltonian only
(``E_A = E_A2 = 0``, ``k = 1``) so time is ``tau = t k``.  The initial state
is a coherent atomic mode with mean ``N`` and an empty molecular mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .meanfield import integrate, meanfield_vector_field
from .network import ReactionNetwork, parse_network
from .quantum import (
    EigenSystem,
    ObservableSeries,
    QuantumState,
    breakdown_time,
    coherent_product_state,
    diagonal_ensemble,
    diagonalize,
    entropy_series,
    expectation_series,
    fidelity_series,
    hamiltonian_blocks,
    microcanonical_average,
    time_average,
)

__all__ = [
    "DIATOMIC",
    "DEFAULT_DTAU",
    "DEFAULT_TAU_MAX",
    "REVIVAL_FIDELITY",
    "DiatomicRun",
    "SweepRow",
    "diatomic_network",
    "run_diatomic",
    "revival_time",
    "relaxation_windows",
    "ensemble_sweep",
]

DIATOMIC = "A + A <k=1.0> A2"
DEFAULT_DTAU = 0.01
DEFAULT_TAU_MAX = 20.0
REVIVAL_FIDELITY = 0.5
# evanescent regime: from tau_MF over this many multiples of tau_MF
EVANESCENT_SPAN = 4.0


def diatomic_network(k: float = 1.0, E_A: float = 0.0, E_A2: float = 0.0) -> ReactionNetwork:
    net = parse_network(f"A + A <k={k!r}> A2")
    return net.with_energies({"A": E_A, "A2": E_A2})


@dataclass(eq=False)
class DiatomicRun:
    N: float
    network: ReactionNetwork
    state: QuantumState
    eig: EigenSystem
    atoms: ObservableSeries
    molecules: ObservableSeries
    meanfield: ObservableSeries
    tau_mf: float | None
    entropy: ObservableSeries | None = None

    @property
    def times(self) -> np.ndarray:
        return self.atoms.times


def run_diatomic(N: float, tau_max: float = DEFAULT_TAU_MAX, dtau: float = DEFAULT_DTAU, *,
                 network: ReactionNetwork | None = None, entropy: bool = False,
                 entropy_dtau: float | None = None, rel_threshold: float = 0.05) -> DiatomicRun:
    """Quantum and mean-field atom numbers from a coherent atomic state.

    ``entropy_dtau`` coarsens the grid of the (more expensive) entropy
    series; it defaults to ``dtau``.
    """
    net = network if network is not None else diatomic_network()
    if not N > 0:
        raise ValueError("N must be positive")
    n = int(round(tau_max / dtau))
    times = np.arange(n + 1) * dtau
    state = coherent_product_state(net, [np.sqrt(N), 0.0])
    eig = diagonalize(hamiltonian_blocks(net, state))
    occ = expectation_series(eig, state, [0, 1], times)
    atoms = ObservableSeries(times, occ[0])
    molecules = ObservableSeries(times, occ[1])
    traj = integrate(meanfield_vector_field(net), [np.sqrt(N), 0.0], float(times[-1]), times=times)
    mf = ObservableSeries(times, np.abs(traj.states[:, 0]) ** 2)
    tau_mf = breakdown_time(atoms, mf, rel_threshold)
    ent = None
    if entropy:
        step = max(1, int(round((entropy_dtau or dtau) / dtau)))
        et = times[::step]
        ent = ObservableSeries(et, entropy_series(eig, state, 0, et))
    return DiatomicRun(float(N), net, state, eig, atoms, molecules, mf, tau_mf, ent)


def revival_time(eig: EigenSystem, state: QuantumState, times,
                 threshold: float = REVIVAL_FIDELITY) -> float | None:
    """First time the fidelity returns above ``threshold`` after dropping below it."""
    times = np.asarray(times, dtype=float)
    fid = fidelity_series(eig, state, times)
    below = np.flatnonzero(fid < threshold)
    if below.size == 0:
        return None
    after = np.flatnonzero(fid[below[0]:] > threshold)
    return float(times[below[0] + after[0]]) if after.size else None


def relaxation_windows(run: DiatomicRun, evanescent_span: float = EVANESCENT_SPAN,
                       threshold: float = REVIVAL_FIDELITY):
    """Evanescent and asymptotic windows of a run.

    Evanescent: ``[tau_MF, (1 + span) tau_MF]``.  Asymptotic: the second half
    of the time between the end of the evanescent window and the earlier of
    the grid end and the first revival.
    """
    if run.tau_mf is None:
        raise ValueError("mean field never breaks down on this grid")
    t = run.times
    end = float(t[-1])
    rev = revival_time(run.eig, run.state, t, threshold)
    if rev is not None:
        end = min(end, rev)
    ev = (run.tau_mf, (1.0 + evanescent_span) * run.tau_mf)
    if ev[1] >= end:
        raise ValueError("grid too short to separate the evanescent and asymptotic regimes")
    asym = (0.5 * (ev[1] + end), end)
    return ev, asym


@dataclass(frozen=True)
class SweepRow:
    N: float
    mean: float
    fluct: float
    micro: float
    time_mean: float | None = None
    time_fluct: float | None = None

    @property
    def relative_fluct(self) -> float:
        return float(np.sqrt(self.fluct) / self.mean)


def ensemble_sweep(Ns, *, network: ReactionNetwork | None = None,
                   time_window: tuple[float, float] | None = None,
                   dtau: float = DEFAULT_DTAU) -> list[SweepRow]:
    """Diagonal-ensemble mean and fluctuations of ``N_A`` for each ``N``.

    ``mean`` and ``fluct`` are the diagonal-ensemble values ``N_bar`` and
    ``Delta N^2``; ``micro`` is the default microcanonical average.  With
    ``time_window`` the finite-time averages over that window are added.
    """
    net = network if network is not None else diatomic_network()
    rows = []
    for N in Ns:
        state = coherent_product_state(net, [np.sqrt(N), 0.0])
        eig = diagonalize(hamiltonian_blocks(net, state))
        rep = diagonal_ensemble(eig, state, 0)
        micro, _ = microcanonical_average(eig, 0, state)
        tm = tf = None
        if time_window is not None:
            lo, hi = time_window
            times = np.arange(int(round(lo / dtau)), int(round(hi / dtau)) + 1) * dtau
            series = ObservableSeries(times, expectation_series(eig, state, [0], times)[0])
            tm, tf = time_average(series)
        rows.append(SweepRow(float(N), rep.mean_diag, rep.fluct_sq, micro, tm, tf))
    return rows
