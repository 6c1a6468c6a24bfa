"""Phase-space tools for the scaled concurrent reaction.

Quadratures are ``X = Re(alpha)`` and ``P = Im(alpha)``.  Poincare sections
use the plane ``X_A2 = 0`` crossed in the positive direction.

Fields produced by :func:`ultrakin.meanfield.nondim_vector_field` run on the
compiled kernels; any other complex field ``f(tau, alpha)`` falls back to the
numpy stepper (slower, same algorithm).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import least_squares

from . import _kernels
from .integrators import DormandPrince, IntegrationError, solve
from .meanfield import DEFAULT_ATOL, DEFAULT_RTOL, as_real_field, nondim_energy, nondim_vector_field

__all__ = [
    "QuadraturePoint",
    "PoincareSection",
    "LyapunovEstimate",
    "ModulationFit",
    "RegimeRow",
    "RegimeScan",
    "DEFAULT_C1_GRID",
    "sample_energy_surface",
    "poincare_section",
    "filling_fraction",
    "lyapunov_max",
    "measure_modulation",
    "regime_scan",
]

DEFAULT_C1_GRID = (1e-4, 1e-3, 5e-3, 2e-2, 1e-1, 1.0)
REJECTION_CAP = 10_000
SECTION_AXIS = 2  # X_A2 in (X_A, P_A, X_A2, P_A2)
DEGENERATE_SPEED = 1e-12
DEFAULT_GRID = 32
# sections need the energy to 1e-8 absolute over long horizons
SECTION_RTOL = 1e-13
SECTION_ATOL = 1e-14


@dataclass(frozen=True)
class QuadraturePoint:
    X_A: float
    P_A: float
    X_A2: float
    P_A2: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.X_A, self.P_A, self.X_A2, self.P_A2])):
            raise ValueError("quadratures must be finite")

    @classmethod
    def from_state(cls, state) -> "QuadraturePoint":
        a, b = complex(state[0]), complex(state[1])
        return cls(a.real, a.imag, b.real, b.imag)

    def to_state(self) -> np.ndarray:
        return np.array([complex(self.X_A, self.P_A), complex(self.X_A2, self.P_A2)])

    def as_array(self) -> np.ndarray:
        return np.array([self.X_A, self.P_A, self.X_A2, self.P_A2])


def _as_real(initial) -> np.ndarray:
    if isinstance(initial, QuadraturePoint):
        return initial.as_array()
    arr = np.asarray(initial)
    if np.iscomplexobj(arr) or arr.shape == (2,):
        return np.ascontiguousarray(arr.astype(complex)).view(float).copy()
    return np.asarray(arr, dtype=float).copy()


def sample_energy_surface(E: float, params, count: int, seed: int | None = None,
                          radius: float | None = None) -> list[QuadraturePoint]:
    """Seeded points on ``H~ = E`` inside the section ``X_A2 = 0``.

    ``(X_A, P_A)`` is drawn uniformly from a disk of radius ``sqrt(E)``
    around the origin; the energy then fixes ``P_A2`` through

        c2 P^2 + 4 c1 X_A P_A P + (X_A^2 + P_A^2 + 2 X_A - E) = 0.

    Of the two roots the one of smaller magnitude is kept: it stays on the
    sheet connected to ``c1 = 0`` and remains bounded as ``c1`` grows.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    c1, c2 = _params(params)
    if c2 == 0:
        raise ValueError("c2 = 0 leaves P_A2 undetermined")
    R = np.sqrt(max(E, 0.0)) if radius is None else float(radius)
    if not R > 0:
        raise ValueError(f"energy {E} is not reachable with a positive sampling radius")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        for _attempt in range(REJECTION_CAP):
            r = R * np.sqrt(rng.random())
            th = 2.0 * np.pi * rng.random()
            x, y = r * np.cos(th), r * np.sin(th)
            B = 4.0 * c1 * x * y
            C = x * x + y * y + 2.0 * x - E
            disc = B * B - 4.0 * c2 * C
            if disc < 0:
                continue
            sq = np.sqrt(disc)
            # stable pair of roots
            q = -0.5 * (B + np.copysign(sq, B)) if B != 0 else 0.5 * sq
            roots = [q / c2, C / q] if q != 0 else [0.0, 0.0]
            p = min(roots, key=abs)
            out.append(QuadraturePoint(float(x), float(y), 0.0, float(p)))
            break
        else:
            raise ValueError(f"energy {E} unreachable: {REJECTION_CAP} draws without a real root")
    return out


def _params(params):
    if hasattr(params, "c1"):
        return float(params.c1), float(params.c2)
    c1, c2 = params
    return float(c1), float(c2)


# --------------------------------------------------------------------------
# Poincare sections

@dataclass(eq=False)
class PoincareSection:
    """Crossing records per trajectory id.

    ``records[i]`` has columns ``(tau, X_A, P_A, P_A2)``; ``degenerate[i]``
    is True for trajectories that never leave the plane ``X_A2 = 0``.
    """

    records: dict[int, np.ndarray]
    degenerate: dict[int, bool] = dc_field(default_factory=dict)

    def points(self, traj_id: int) -> np.ndarray:
        return self.records[traj_id][:, 1:3]

    @property
    def n_points(self) -> int:
        return sum(len(r) for r in self.records.values())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["traj_id", "tau", "X_A", "P_A", "P_A2"])
            for tid in sorted(self.records):
                for row in self.records[tid]:
                    w.writerow([tid] + [repr(float(v)) for v in row])


def _is_planar(y, f) -> bool:
    # stays in the plane iff X_A2 and its velocity both vanish
    return y[SECTION_AXIS] == 0.0 and abs(f[SECTION_AXIS]) < DEGENERATE_SPEED


def _henon_numpy(real_field, y, t):
    def g(x, z):
        fy = real_field(z[4], z[:4])
        v = fy[SECTION_AXIS]
        return np.concatenate([fy / v, [1.0 / v]])

    z0 = np.concatenate([y, [t]])
    sol = solve(g, (y[SECTION_AXIS], 0.0), z0, rtol=1e-13, atol=1e-14)
    z = sol.y[-1].copy()
    z[SECTION_AXIS] = 0.0
    return z


def _section_numpy(field, y0, tau_max, rtol, atol, max_points):
    real_field = as_real_field(field)
    stepper = DormandPrince(lambda t, y: real_field(t, np.ascontiguousarray(y)), 0.0, y0,
                            rtol=rtol, atol=atol)
    pts = []
    while stepper.t < tau_max and len(pts) < max_points:
        stepper.step(tau_max)
        if stepper.y_old[SECTION_AXIS] < 0.0 <= stepper.y[SECTION_AXIS]:
            z = _henon_numpy(real_field, stepper.y_old, stepper.t_old)
            pts.append([z[4], z[0], z[1], z[3]])
    return np.array(pts, dtype=float).reshape(-1, 4)


def poincare_section(field: Callable, initials: Sequence, tau_max: float, *,
                     rtol: float = SECTION_RTOL, atol: float = SECTION_ATOL,
                     max_points: int = 100_000, max_steps: int = 50_000_000) -> PoincareSection:
    """Positive crossings of ``X_A2 = 0`` for each initial condition.

    Every crossing is refined by one Henon step: the final partial step is
    integrated with ``X_A2`` as the independent variable, landing exactly on
    the plane.
    """
    if not tau_max > 0:
        raise ValueError("tau_max must be positive")
    kernel = getattr(field, "jit_kernel", None)
    records, degenerate = {}, {}
    for tid, init in enumerate(initials):
        y0 = _as_real(init)
        f0 = as_real_field(field)(0.0, y0.copy())
        if _is_planar(y0, f0) and abs(y0[3]) < DEGENERATE_SPEED and abs(f0[3]) < DEGENERATE_SPEED:
            records[tid] = np.empty((0, 4))
            degenerate[tid] = True
            continue
        if kernel is not None:
            pts, npts, ndeg, ok = _kernels.section(field.jit_params, y0, float(tau_max), 1e-3,
                                                   rtol, atol, SECTION_AXIS, max_points, max_steps,
                                                   DEGENERATE_SPEED)
            if not ok:
                raise IntegrationError(f"trajectory {tid}: integration failed")
            rec = pts[:, [0, 1, 2, 4]].copy()
        else:
            rec = _section_numpy(field, y0, tau_max, rtol, atol, max_points)
        records[tid] = rec
        degenerate[tid] = False
    return PoincareSection(records, degenerate)


def _fraction(points: np.ndarray, G: int) -> float:
    lo = points.min(axis=0)
    span = points.max(axis=0) - lo
    idx = np.zeros(points.shape, dtype=np.int64)
    for k in range(2):
        if span[k] > 0:
            idx[:, k] = np.minimum((G * (points[:, k] - lo[k]) / span[k]).astype(np.int64), G - 1)
    return len(np.unique(idx[:, 0] * G + idx[:, 1])) / (G * G)


def filling_fraction(section: PoincareSection, G: int = DEFAULT_GRID, aggregate: str = "max") -> float:
    """Occupied fraction of a ``G x G`` grid over each trajectory's ``(X_A, P_A)`` box.

    Trajectories on invariant curves occupy ``O(G)`` cells, area-filling
    ones ``O(G^2)``.  The per-trajectory fractions are combined by ``max``
    (default: one irregular trajectory suffices), ``mean`` or ``median``.
    """
    if G < 8:
        raise ValueError("grid resolution must be at least 8")
    fracs = [_fraction(r[:, 1:3], G) for r in section.records.values() if len(r)]
    if not fracs:
        raise ValueError("empty section")
    reducer = {"max": np.max, "mean": np.mean, "median": np.median}[aggregate]
    return float(reducer(fracs))


# --------------------------------------------------------------------------
# Lyapunov exponents

@dataclass(frozen=True, eq=False)
class LyapunovEstimate:
    """Largest Lyapunov exponent from renormalised two-trajectory stretches.

    ``series[k]`` is the running estimate after ``k + 1`` renormalisations,
    counted from the start of the averaging window.
    """

    lambda_max: float
    horizon: float
    series: np.ndarray
    interval: float = 1.0
    transient: float = 0.5

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")


def _stretches_numpy(field, y0, v0, n, interval, rtol, atol):
    real_field = as_real_field(field)

    def pair(t, Y):
        Y = np.ascontiguousarray(Y)
        return np.stack([real_field(t, Y[0].copy()), real_field(t, Y[1].copy())])

    d0 = np.linalg.norm(v0)
    Y = np.stack([y0, y0 + v0])
    logs = np.empty(n)
    for k in range(n):
        sol = solve(pair, (k * interval, (k + 1) * interval), Y, rtol=rtol, atol=atol)
        Y = sol.y[-1]
        d = Y[1] - Y[0]
        nd = np.linalg.norm(d)
        logs[k] = np.log(nd / d0)
        Y[1] = Y[0] + d * (d0 / nd)
    return logs


def lyapunov_max(field: Callable, initial, horizon: float = 5000.0, interval: float = 1.0, *,
                 d0: float = 1e-8, seed: int | None = 0, transient: float = 0.5,
                 rtol: float = 1e-9, atol: float = DEFAULT_ATOL,
                 max_steps: int = 200_000_000) -> LyapunovEstimate:
    """Benettin estimate of the largest Lyapunov exponent.

    A companion trajectory starts ``d0`` away along a seeded random
    direction and is pulled back to distance ``d0`` every ``interval``.
    The exponent is the mean log stretch per unit time over the intervals
    after the leading ``transient`` fraction of the horizon; on regular
    orbits this removes the ``ln(tau)/tau`` bias of linear shear.
    """
    if not horizon > 0 or not interval > 0:
        raise ValueError("horizon and interval must be positive")
    n = int(round(horizon / interval))
    if n < 2:
        raise ValueError("horizon must span several renormalisation intervals")
    if not 0.0 <= transient < 1.0:
        raise ValueError("transient fraction must lie in [0, 1)")
    y0 = _as_real(initial)
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(y0.size)
    v0 *= d0 / np.linalg.norm(v0)
    kernel = getattr(field, "jit_kernel", None)
    if kernel is not None:
        logs, ok = _kernels.stretches(field.jit_params, y0, v0, n, float(interval),
                                      rtol, atol, max_steps)
        if not ok:
            raise IntegrationError("Lyapunov integration failed")
    else:
        logs = _stretches_numpy(field, y0, v0, n, interval, rtol, atol)
    skip = int(transient * n)
    kept = logs[skip:]
    series = np.cumsum(kept) / (interval * np.arange(1, kept.size + 1))
    return LyapunovEstimate(float(series[-1]), float(n * interval), series, interval, transient)


# --------------------------------------------------------------------------
# modulation

@dataclass(frozen=True)
class ModulationFit:
    mean: float
    amplitude: float
    frequency: float
    residual: float


def _peaks(t, x):
    i = np.flatnonzero((x[1:-1] > x[:-2]) & (x[1:-1] >= x[2:])) + 1
    y0, y1, y2 = x[i - 1], x[i], x[i + 1]
    d = y0 - 2.0 * y1 + y2
    with np.errstate(divide="ignore", invalid="ignore"):
        off = np.where(d != 0, 0.5 * (y0 - y2) / d, 0.0)
    dt = t[i + 1] - t[i]
    return t[i] + off * dt, y1 - 0.25 * (y0 - y2) * off


def _sinusoid_fit(t, y, w_lo, w_hi):
    # periodogram guess on a uniform resampling, then nonlinear least squares
    n = t.size
    u = np.linspace(t[0], t[-1], n)
    yu = np.interp(u, t, y)
    yu = yu - yu.mean()
    pad = 8 * n
    spec = np.abs(np.fft.rfft(yu, pad))
    w = 2.0 * np.pi * np.fft.rfftfreq(pad, d=u[1] - u[0])
    band = (w >= w_lo) & (w <= w_hi)
    w0 = w[band][np.argmax(spec[band])]
    M = np.column_stack([np.ones_like(t), np.cos(w0 * t), np.sin(w0 * t)])
    coef = np.linalg.lstsq(M, y, rcond=None)[0]
    fit = least_squares(lambda q: q[0] + q[1] * np.cos(q[3] * t) + q[2] * np.sin(q[3] * t) - y,
                        [coef[0], coef[1], coef[2], w0], x_scale="jac")
    return fit.x, fit.fun


def measure_modulation(series, values=None, *, envelope: bool = True,
                       min_periods: float = 5.0, flat_tol: float = 1e-12) -> ModulationFit:
    """Fit ``mean + A sin(w tau + phi)`` to the slow envelope of a signal.

    ``series`` is an :class:`ultrakin.quantum.ObservableSeries`, a
    :class:`ultrakin.meanfield.Trajectory` (``|a|^2`` is used) or a time
    array paired with ``values``.  With ``envelope=True`` the signal is
    reduced to its parabolically interpolated maxima before fitting; the
    frequency search stays below the Nyquist limit of the peak spacing so
    the slow modulation is not aliased.  Signals without interior maxima
    (or with fewer than ``8 * min_periods`` of them) are fitted directly.
    """
    t, x = _series_arrays(series, values)
    if t.size < 8:
        raise ValueError("series too short")
    if np.ptp(x) <= flat_tol * max(1.0, np.abs(x).max()):
        return ModulationFit(float(np.mean(x)), 0.0, 0.0, 0.0)
    tt, yy = (_peaks(t, x) if envelope else (t, x))
    # too few maxima to resolve a slow envelope: no fast carrier, fit the raw signal
    if tt.size < 8 * min_periods or np.ptp(np.diff(tt)) > 0.5 * np.mean(np.diff(tt)):
        tt, yy = t, x
    span = tt[-1] - tt[0]
    nyquist = np.pi / np.mean(np.diff(tt))
    w_lo = 2.0 * np.pi * min_periods / span
    if w_lo >= nyquist:
        raise ValueError("series covers fewer than the required modulation periods")
    if np.ptp(yy) <= flat_tol * max(1.0, np.abs(yy).max()):
        return ModulationFit(float(np.mean(yy)), 0.0, 0.0, 0.0)
    q, resid = _sinusoid_fit(tt, yy, w_lo, nyquist)
    amp = float(np.hypot(q[1], q[2]))
    return ModulationFit(float(q[0]), amp, float(abs(q[3])), float(np.sqrt(np.mean(resid**2))))


def _series_arrays(series, values):
    if values is not None:
        return np.asarray(series, dtype=float), np.asarray(values, dtype=float)
    if hasattr(series, "states"):
        return np.asarray(series.times, float), np.abs(np.asarray(series.states)[:, 0]) ** 2
    return np.asarray(series.times, float), np.asarray(series.values, float)


# --------------------------------------------------------------------------
# regime scan

@dataclass(frozen=True)
class RegimeRow:
    c1: float
    lambda_max: float
    filling_fraction: float
    lambdas: tuple[float, ...]
    fractions: tuple[float, ...]


@dataclass(eq=False)
class RegimeScan:
    energy: float
    c2: float
    rows: list[RegimeRow]
    sections: dict[float, PoincareSection] = dc_field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["c1", "lambda_max", "filling_fraction"])
            for r in self.rows:
                w.writerow([repr(r.c1), repr(r.lambda_max), repr(r.filling_fraction)])


def regime_scan(E: float = 100.0, c2: float = 1.1, c1_grid: Sequence[float] = DEFAULT_C1_GRID,
                trajectories: int = 25, seed: int = 0, tau_max: float = 5000.0,
                horizon: float = 5000.0, grid: int = DEFAULT_GRID,
                aggregate: str = "max", keep_sections: bool = False) -> RegimeScan:
    """Chaos indicators across ``c1`` at fixed energy.

    For each ``c1`` the same seeded sampler draws ``trajectories`` points
    on the energy surface; each gets a section (for the filling fraction)
    and a Lyapunov estimate.  Per-trajectory values are reduced with
    ``aggregate`` (``max`` by default).
    """
    reducer = {"max": np.max, "mean": np.mean, "median": np.median}[aggregate]
    rows, sections = [], {}
    for c1 in c1_grid:
        fld = nondim_vector_field((c1, c2))
        inits = sample_energy_surface(E, (c1, c2), trajectories, seed)
        sec = poincare_section(fld, inits, tau_max)
        fr = tuple(_fraction(r[:, 1:3], grid) if len(r) else 0.0 for r in sec.records.values())
        lams = tuple(lyapunov_max(fld, p, horizon, seed=seed + i).lambda_max
                     for i, p in enumerate(inits))
        rows.append(RegimeRow(float(c1), float(reducer(lams)), float(reducer(fr)), lams, fr))
        if keep_sections:
            sections[float(c1)] = sec
    return RegimeScan(float(E), float(c2), rows, sections)


def section_energies(section: PoincareSection, params) -> dict[int, np.ndarray]:
    """Energy of every recorded crossing (``X_A2 = 0``)."""
    out = {}
    for tid, r in section.records.items():
        states = r[:, 1] + 1j * r[:, 2], 1j * r[:, 3]
        out[tid] = nondim_energy(np.stack(states, axis=-1), params)
    return out
