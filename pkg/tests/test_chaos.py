import numpy as np
import pytest

from ultrakin.chaos import (
    PoincareSection,
    QuadraturePoint,
    filling_fraction,
    lyapunov_max,
    poincare_section,
    regime_scan,
    sample_energy_surface,
    section_energies,
)
from ultrakin.meanfield import nondim_energy, nondim_vector_field

E, C2 = 100.0, 1.1


def _energy(p, params):
    return float(nondim_energy(p.to_state(), params))


# --------------------------------------------------------------- sampling

@pytest.mark.parametrize("c1", [0.0, 1e-3, 2e-2, 1.0])
def test_samples_on_energy_surface(c1):
    pts = sample_energy_surface(E, (c1, C2), 50, seed=3)
    assert len(pts) == 50
    for p in pts:
        assert p.X_A2 == 0.0
        assert abs(_energy(p, (c1, C2)) - E) < 1e-10


def test_samples_linear_case_explicit():
    for p in sample_energy_surface(E, (0.0, C2), 20, seed=1):
        expected = (E - p.X_A**2 - p.P_A**2 - 2 * p.X_A) / C2
        assert p.P_A2**2 == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_samples_deterministic():
    a = sample_energy_surface(E, (0.02, C2), 10, seed=11)
    b = sample_energy_surface(E, (0.02, C2), 10, seed=11)
    assert a == b
    assert a != sample_energy_surface(E, (0.02, C2), 10, seed=12)


def test_unreachable_energy():
    with pytest.raises(ValueError):
        sample_energy_surface(-5.0, (0.0, C2), 1, seed=0)


# --------------------------------------------------------------- sections

def test_linear_section_fixed_point():
    fld = nondim_vector_field((0.0, C2))
    sec = poincare_section(fld, [QuadraturePoint(2.0, 1.0, 0.0, 3.0)], 300.0)
    rec = sec.records[0]
    assert len(rec) > 10
    assert np.ptp(rec[:, 3]) < 1e-8
    assert np.allclose(np.abs(rec[:, 3]), 3.0, atol=1e-8)


def test_degenerate_trajectory_marked():
    fld = nondim_vector_field((0.0, C2))
    sec = poincare_section(fld, [QuadraturePoint(2.0, 1.0, 0.0, 0.0),
                                 QuadraturePoint(2.0, 1.0, 0.0, 1.0)], 50.0)
    assert sec.degenerate == {0: True, 1: False}
    assert len(sec.records[0]) == 0


@pytest.mark.parametrize("c1", [1e-3, 2e-2])
def test_section_points_on_energy_surface(c1):
    params = (c1, C2)
    inits = sample_energy_surface(E, params, 4, seed=0)
    sec = poincare_section(nondim_vector_field(params), inits, 1000.0)
    for tid, Es in section_energies(sec, params).items():
        assert len(Es) > 0
        assert np.max(np.abs(Es - E)) < 1e-8


def test_section_of_section():
    params = (2e-2, C2)
    fld = nondim_vector_field(params)
    (p,) = sample_energy_surface(E, params, 1, seed=5)
    rec = poincare_section(fld, [p], 400.0).records[0]
    k = 5
    start = QuadraturePoint(rec[k, 1], rec[k, 2], 0.0, rec[k, 3])
    again = poincare_section(fld, [start], 400.0 - rec[k, 0] - 1.0).records[0]
    # the restart sits on the plane, so its first crossing is the next one
    n = len(again)
    assert n > 10
    assert np.max(np.abs(again[:, 1:] - rec[k + 1:k + 1 + n, 1:])) < 1e-6
    assert np.max(np.abs(again[:, 0] + rec[k, 0] - rec[k + 1:k + 1 + n, 0])) < 1e-6


def test_compiled_and_generic_sections_agree():
    params = (2e-2, C2)
    fld = nondim_vector_field(params)
    generic = lambda t, a: fld(t, a)  # noqa: E731
    inits = sample_energy_surface(E, params, 2, seed=2)
    a = poincare_section(fld, inits, 60.0)
    b = poincare_section(generic, inits, 60.0)
    for tid in a.records:
        assert a.records[tid].shape == b.records[tid].shape
        assert np.max(np.abs(a.records[tid] - b.records[tid])) < 1e-9


def test_section_csv(tmp_path):
    sec = PoincareSection({0: np.array([[1.0, 0.1, 0.2, 0.3]]), 1: np.empty((0, 4))}, {0: False, 1: True})
    path = tmp_path / "s.csv"
    sec.to_csv(path)
    assert path.read_text().splitlines() == ["traj_id,tau,X_A,P_A,P_A2", "0,1.0,0.1,0.2,0.3"]


# --------------------------------------------------------------- filling fraction

def test_filling_single_point():
    sec = PoincareSection({0: np.tile([0.0, 1.0, 2.0, 3.0], (20, 1))})
    assert filling_fraction(sec, 32) == pytest.approx(1 / 32**2)


def test_filling_curve_is_order_one_over_g():
    th = np.linspace(0, 2 * np.pi, 20000)
    rec = np.column_stack([th, np.cos(th), np.sin(th), 0 * th])
    sec = PoincareSection({0: rec})
    for G in (32, 64, 128):
        f = filling_fraction(sec, G)
        assert 1.0 / G < f < 6.0 / G


def test_filling_area_fill():
    rng = np.random.default_rng(0)
    rec = np.column_stack([np.arange(20000.0), rng.random((20000, 2)), np.zeros(20000)])
    assert filling_fraction(PoincareSection({0: rec}), 32) > 0.99


def test_filling_guards():
    with pytest.raises(ValueError):
        filling_fraction(PoincareSection({0: np.empty((0, 4))}))
    with pytest.raises(ValueError):
        filling_fraction(PoincareSection({0: np.ones((3, 4))}), G=4)


def test_filling_contrast_chaotic_vs_integrable():
    # c1 = 2e-2 (chaotic) against the integrable end of the default grid
    fr = {}
    for c1 in (1e-4, 2e-2):
        inits = sample_energy_surface(E, (c1, C2), 5, seed=0)
        fr[c1] = filling_fraction(poincare_section(nondim_vector_field((c1, C2)), inits, 5000.0))
    assert fr[1e-4] <= 5.0 / 32
    assert fr[2e-2] >= 5 * fr[1e-4]


# --------------------------------------------------------------- Lyapunov

def test_lyapunov_linear_flow():
    (p,) = sample_energy_surface(E, (0.0, C2), 1, seed=0)
    est = lyapunov_max(nondim_vector_field((0.0, C2)), p, 500.0)
    assert abs(est.lambda_max) < 1e-3
    assert est.series.size == 250


def test_lyapunov_strong_coupling_regular():
    (p,) = sample_energy_surface(E, (1.0, C2), 1, seed=0)
    est = lyapunov_max(nondim_vector_field((1.0, C2)), p, 2000.0)
    assert est.lambda_max < 1e-3


def test_lyapunov_seed_independent_in_chaotic_regime():
    params = (0.1, C2)
    fld = nondim_vector_field(params)
    for tid in (1, 10):
        p = sample_energy_surface(E, params, 25, seed=0)[tid]
        lams = np.array([lyapunov_max(fld, p, 5000.0, seed=s).lambda_max for s in range(5)])
        assert lams.min() > 10 * 1e-3
        assert np.max(np.abs(lams - lams.mean())) <= 0.2 * lams.mean()


def test_lyapunov_generic_path_matches():
    params = (0.1, C2)
    fld = nondim_vector_field(params)
    generic = lambda t, a: fld(t, a)  # noqa: E731
    (p,) = sample_energy_surface(E, params, 1, seed=4)
    a = lyapunov_max(fld, p, 20.0, seed=1)
    b = lyapunov_max(generic, p, 20.0, seed=1)
    assert a.lambda_max == pytest.approx(b.lambda_max, rel=1e-4, abs=1e-6)


def test_lyapunov_guards():
    fld = nondim_vector_field((0.0, C2))
    with pytest.raises(ValueError):
        lyapunov_max(fld, [1.0, 1.0j], 0.0)
    with pytest.raises(ValueError):
        lyapunov_max(fld, [1.0, 1.0j], 10.0, transient=1.0)


# --------------------------------------------------------------- scan

def test_small_regime_scan_shape(tmp_path):
    scan = regime_scan(c1_grid=(1e-4, 0.1), trajectories=2, tau_max=200.0, horizon=200.0)
    assert [r.c1 for r in scan.rows] == [1e-4, 0.1]
    assert all(len(r.lambdas) == 2 for r in scan.rows)
    scan.to_csv(tmp_path / "scan.csv")
    assert (tmp_path / "scan.csv").read_text().startswith("c1,lambda_max,filling_fraction")
