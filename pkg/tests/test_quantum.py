import numpy as np
import pytest

from ultrakin.fock import product_basis, sector_basis
from ultrakin.network import conserved_charges, parse_network
from ultrakin.quantum import (
    DegeneracyError,
    ObservableSeries,
    QuantumState,
    TailMassError,
    breakdown_time,
    coherent_product_state,
    diagonal_ensemble,
    diagonalize,
    entropy_series,
    evolve,
    expectation_series,
    hamiltonian_blocks,
    microcanonical_average,
    number_expectation,
    raman_rate,
    reduced_density,
    time_average,
    von_neumann_entropy,
)

DIATOMIC = parse_network("A + A <k=1.0> A2")


def _expm_taylor(M, tol=1e-16):
    """exp(M) by scaling and squaring of a truncated Taylor series."""
    norm = np.max(np.sum(np.abs(M), axis=1))
    s = max(0, int(np.ceil(np.log2(norm))) + 1) if norm > 0 else 0
    A = M / 2**s
    out = np.eye(M.shape[0], dtype=complex)
    term = np.eye(M.shape[0], dtype=complex)
    for k in range(1, 60):
        term = term @ A / k
        out = out + term
        if np.max(np.abs(term)) < tol:
            break
    for _ in range(s):
        out = out @ out
    return out


def _sector2_state(c20, c01):
    charge = conserved_charges(DIATOMIC)[0]
    b = sector_basis(DIATOMIC, charge, 2, 4)
    return QuantumState([b], [np.array([c20, c01], dtype=complex)])


# ----------------------------------------------------------------- states

def test_vacuum():
    st = coherent_product_state(DIATOMIC, [0.0, 0.0])
    assert number_expectation(st, 0) == 0.0
    assert number_expectation(st, 1) == 0.0


def test_coherent_occupations():
    st = coherent_product_state(DIATOMIC, [np.sqrt(30.0), 0.0])
    assert st.is_sectored
    assert st.norm() == pytest.approx(1.0, abs=1e-14)
    assert number_expectation(st, 0) == pytest.approx(30.0, abs=1e-9)
    assert number_expectation(st, 1) == pytest.approx(0.0, abs=1e-12)


def test_coherent_norm_before_renormalization():
    from ultrakin.quantum import coherent_amplitudes

    c = coherent_amplitudes(2.0, 32)
    assert np.sum(np.abs(c) ** 2) >= 1 - 1e-12


def test_tail_mass_guard():
    with pytest.raises(TailMassError):
        coherent_product_state(DIATOMIC, [3.0, 0.0], cutoff=(10, 10))


def test_hand_states():
    st = _sector2_state(1.0, 0.0)
    assert number_expectation(st, 0) == 2.0
    st = _sector2_state(1 / np.sqrt(2), 1 / np.sqrt(2))
    assert number_expectation(st, 0) == pytest.approx(1.0)
    rho = reduced_density(st, 0)
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)
    assert rho[0, 0].real == pytest.approx(0.5)
    assert rho[2, 2].real == pytest.approx(0.5)
    assert von_neumann_entropy(rho) == pytest.approx(np.log(2))


def test_product_state_is_pure():
    net = parse_network("A <k=1> B")
    st = coherent_product_state(net, [1.2, 0.5j], layout="product")
    rho = reduced_density(st, 0)
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)
    w = np.linalg.eigvalsh(rho)
    assert w[-1] == pytest.approx(1.0, abs=1e-10)
    assert von_neumann_entropy(rho) < 1e-8


def test_entropy_bound_random():
    rng = np.random.default_rng(3)
    for d in (2, 5, 9):
        X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        rho = X @ X.conj().T
        rho /= np.trace(rho).real
        assert 0 <= von_neumann_entropy(rho) <= np.log(d) + 1e-12


# ----------------------------------------------------------------- spectra

def test_diagonalize_small():
    charge = conserved_charges(DIATOMIC)[0]
    eig = diagonalize(hamiltonian_blocks(DIATOMIC, [sector_basis(DIATOMIC, charge, 2, 4)]))
    assert np.allclose(eig.eigenvalues[0], [-np.sqrt(2), np.sqrt(2)])


def test_diagonalize_reconstruction():
    from ultrakin.fock import HamiltonianBlock

    rng = np.random.default_rng(0)
    X = rng.normal(size=(50, 50))
    M = X + X.T
    b = product_basis(parse_network("0 <k=1> A"), 49)
    eig = diagonalize(HamiltonianBlock(b, M))
    V, lam = eig.eigenvectors[0], eig.eigenvalues[0]
    assert np.max(np.abs(V @ np.diag(lam) @ V.T - M)) < 1e-12
    assert np.max(np.abs(V.T @ V - np.eye(50))) < 1e-12


def test_diagonal_matrix_spectrum():
    net = parse_network("A + A <k=0> A2").with_energies([1.0, 2.5])
    st = coherent_product_state(net, [1.0, 0.0])
    eig = diagonalize(hamiltonian_blocks(net, st))
    for b, lam in zip(eig.bases, eig.eigenvalues):
        assert np.allclose(np.sort(b.states @ np.array([1.0, 2.5])), lam)


# ----------------------------------------------------------------- dynamics

def test_evolve_identity_at_zero():
    st = coherent_product_state(DIATOMIC, [3.0, 0.0])
    eig = diagonalize(hamiltonian_blocks(DIATOMIC, st))
    (out,) = evolve(eig, st, [0.0])
    for a, b in zip(out.amplitudes, st.amplitudes):
        assert np.max(np.abs(a - b)) < 1e-12


def test_zeroth_order_quadratic_growth():
    net = parse_network("0 <k=1> A")
    st = coherent_product_state(net, [0.0], cutoff=64)
    eig = diagonalize(hamiltonian_blocks(net, st))
    t = np.linspace(0, 2, 201)
    n = expectation_series(eig, st, [0], t)[0]
    assert np.max(np.abs(n - t**2)) < 1e-6


def test_first_order_rotation():
    net = parse_network("A <k=1> B")
    st = coherent_product_state(net, [3.0, 0.0])
    eig = diagonalize(hamiltonian_blocks(net, st))
    t = np.linspace(0, 10, 1001)
    n = expectation_series(eig, st, [0, 1], t)
    assert np.max(np.abs(n[0] - 9 * np.cos(t) ** 2)) < 1e-6
    assert np.max(np.abs(n[0] + n[1] - 9)) < 1e-9


def test_evolve_matches_matrix_exponential():
    net = parse_network("A + A <k=0.7> A2; 0 <k=0.3> A").with_energies([0.2, 0.9])
    b = product_basis(net, (13, 6))  # dimension 98
    rng = np.random.default_rng(1)
    psi = rng.normal(size=b.dim) + 1j * rng.normal(size=b.dim)
    psi /= np.linalg.norm(psi)
    st = QuantumState([b], [psi])
    blocks = hamiltonian_blocks(net, st)
    eig = diagonalize(blocks)
    H = blocks[0].matrix
    for tau, out in zip([0.3, 1.7, 4.0], evolve(eig, st, [0.3, 1.7, 4.0])):
        ref = _expm_taylor(-1j * tau * H) @ psi
        assert np.max(np.abs(out.amplitudes[0] - ref)) < 1e-8
        assert out.norm() == pytest.approx(1.0, abs=1e-10)


def test_diatomic_charge_conserved():
    st = coherent_product_state(DIATOMIC, [np.sqrt(20.0), 0.0])
    eig = diagonalize(hamiltonian_blocks(DIATOMIC, st))
    t = np.linspace(0, 5, 101)
    n = expectation_series(eig, st, [0, 1], t)
    assert np.max(np.abs(n[0] + 2 * n[1] - 20.0)) < 1e-9


def test_entropy_series_bounds():
    st = coherent_product_state(DIATOMIC, [np.sqrt(20.0), 0.0])
    eig = diagonalize(hamiltonian_blocks(DIATOMIC, st))
    t = np.linspace(0, 3, 31)
    S = entropy_series(eig, st, 0, t)
    dA = max(b.cutoff[0] for b in st.bases) + 1
    dM = max(b.cutoff[1] for b in st.bases) + 1
    assert S[0] < 1e-8
    assert np.all(S <= np.log(min(dA, dM)) + 1e-12)
    assert S.max() > 0.5


# ----------------------------------------------------------------- ensembles

def _sector2():
    st = _sector2_state(1.0, 0.0)
    return st, diagonalize(hamiltonian_blocks(DIATOMIC, st))


def test_diagonal_ensemble_sector_two():
    st, eig = _sector2()
    rep = diagonal_ensemble(eig, st, 0)
    assert rep.mean_diag == pytest.approx(1.0, abs=1e-14)
    assert rep.fluct_sq == pytest.approx(0.5, abs=1e-14)


def test_diagonal_ensemble_eigenstate():
    st, eig = _sector2()
    v = eig.eigenvectors[0][:, 1]
    rep = diagonal_ensemble(eig, _sector2_state(v[0], v[1]), 0)
    assert rep.fluct_sq == pytest.approx(0.0, abs=1e-14)


def test_degenerate_spectrum_rejected():
    net = parse_network("A <k=0> B").with_energies([1.0, 1.0])
    st = coherent_product_state(net, [1.0, 0.5])
    eig = diagonalize(hamiltonian_blocks(net, st))
    with pytest.raises(DegeneracyError):
        diagonal_ensemble(eig, st, 0)


def test_microcanonical_windows():
    st, eig = _sector2()
    avg, _ = microcanonical_average(eig, 0, E_center=0.0, E_halfwidth=2.0)
    assert avg == pytest.approx(1.0)
    avg, _ = microcanonical_average(eig, 0, E_center=np.sqrt(2), E_halfwidth=0.1)
    V = eig.eigenvectors[0][:, 1]
    assert avg == pytest.approx(2 * V[0] ** 2)


def test_time_average_sector_two():
    st, eig = _sector2()
    t = np.linspace(0, 200, 20001)
    s = ObservableSeries(t, expectation_series(eig, st, [0], t)[0])
    assert s.values.min() >= -1e-12 and s.values.max() <= 2 + 1e-12
    mean, var = time_average(s)
    assert mean == pytest.approx(1.0, rel=0.01)
    assert var == pytest.approx(0.5, rel=0.05)


def test_time_average_simple():
    t = np.linspace(0, 10, 101)
    mean, var = time_average(ObservableSeries(t, np.full_like(t, 3.0)))
    assert mean == pytest.approx(3.0, abs=1e-14)
    assert var == pytest.approx(0.0, abs=1e-14)
    t = np.linspace(0, 4 * np.pi, 4001)
    mean, _ = time_average(ObservableSeries(t, np.sin(t)))
    assert abs(mean) < 1e-8


def test_breakdown_time():
    t = np.linspace(0, 10, 1001)
    a = ObservableSeries(t, 100 + np.sin(t))
    assert breakdown_time(a, a) is None
    b = ObservableSeries(t, 100 + np.sin(t) + np.where(t > 3, 20.0, 0.0))
    tau = breakdown_time(a, b, 0.05)
    assert abs(tau - 3.0) <= 0.01 + 1e-12


# ----------------------------------------------------------------- Raman

def test_raman_rate():
    two_pi = 2 * np.pi
    k1 = two_pi * 1.17e6 * np.sqrt(4000)
    k2 = two_pi * 0.4e3 * np.sqrt(4000)
    k = raman_rate(k1, k2, two_pi * 750e6)
    assert k / two_pi == pytest.approx(1.25e3, rel=0.05)
    assert raman_rate(0.0, k2, 1.0) == 0.0
    assert raman_rate(k1, k2, 2 * two_pi * 750e6) == pytest.approx(k / 2)
