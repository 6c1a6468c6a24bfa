"""Run orchestration and export of result tables.

:func:`run` turns a :class:`~ultrakin.config.RunConfig` into a
:class:`ResultBundle` of named tables and scalar reports; :func:`export`
writes one file per table plus ``manifest.json``.  Tables never contain
timing information, so two runs of the same config produce identical
files.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from importlib import metadata
from pathlib import Path

import numpy as np

from . import chaos, meanfield, protocols, quantum
from .config import ConfigError, RunConfig, render_config
from .fock import ClippedSectorError, DimensionError
from .integrators import IntegrationError
from .network import ParseError, ReactionNetwork, parse_network

__all__ = ["NumericFailure", "Table", "ResultBundle", "DEFAULTS", "resolve", "run", "export",
           "format_value"]

# mode defaults, taken from the owning modules
DEFAULTS = {
    "quantum": dict(n=100.0, tau_max=protocols.DEFAULT_TAU_MAX, dtau=protocols.DEFAULT_DTAU,
                    entropy_dtau=0.05),
    "meanfield": dict(n=100.0, c1=1e-3, c2=1.1, tau_max=1000.0, dtau=0.01,
                      rtol=meanfield.DEFAULT_RTOL, atol=meanfield.DEFAULT_ATOL),
    "classical": dict(tau_max=50.0, dtau=0.01, rtol=meanfield.DEFAULT_RTOL,
                      atol=meanfield.DEFAULT_ATOL),
    "poincare": dict(energy=100.0, c1=2e-2, c2=1.1, trajectories=25, tau_max=5000.0,
                     grid=chaos.DEFAULT_GRID, rtol=chaos.SECTION_RTOL, atol=chaos.SECTION_ATOL),
    "lyapunov": dict(energy=100.0, c2=1.1, trajectories=25, horizon=5000.0, tau_max=5000.0,
                     grid=chaos.DEFAULT_GRID, c1_grid=chaos.DEFAULT_C1_GRID),
    "sweep": dict(ns=(20.0, 50.0, 100.0, 200.0)),
}


class NumericFailure(RuntimeError):
    """A numerical stage failed; the message names the stage."""


@dataclass(eq=False)
class Table:
    header: tuple[str, ...]
    rows: list[tuple]

    def column(self, name: str) -> np.ndarray:
        i = self.header.index(name)
        return np.array([r[i] for r in self.rows])


@dataclass(eq=False)
class ResultBundle:
    manifest: dict
    tables: dict[str, Table] = field(default_factory=dict)
    reports: dict[str, dict] = field(default_factory=dict)


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def resolve(cfg: RunConfig) -> RunConfig:
    """Fill unset fields with mode defaults and draw a seed if none is given."""
    fill = {k: v for k, v in DEFAULTS[cfg.mode].items() if getattr(cfg, k) is None}
    if cfg.seed is None:
        fill["seed"] = int(np.random.SeedSequence().entropy % (2**31))
    return replace(cfg, **fill)


def _network(cfg: RunConfig, default: str | None) -> ReactionNetwork | None:
    text = cfg.network_text()
    if text is None:
        if default is None:
            return None
        text = default
    try:
        net = parse_network(text)
    except ParseError as exc:
        raise ConfigError(f"network: {exc}") from exc
    if cfg.energies:
        pairs = {}
        for item in cfg.energies.split(","):
            name, sep, value = item.partition(":")
            if not sep:
                raise ConfigError(f"energies: expected 'name: value', got {item.strip()!r}")
            try:
                pairs[name.strip()] = float(value)
            except ValueError as exc:
                raise ConfigError(f"energies: bad value {value!r}") from exc
        try:
            net = net.with_energies(pairs)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"energies: {exc}") from exc
    return net


def _grid(tau_max, dtau):
    n = int(round(tau_max / dtau))
    return np.arange(n + 1) * dtau


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (ConfigError, NumericFailure):
        raise
    except (IntegrationError, quantum.DegeneracyError, quantum.TailMassError, ClippedSectorError,
            DimensionError, FloatingPointError, np.linalg.LinAlgError, RuntimeError,
            ValueError) as exc:
        raise NumericFailure(f"{name}: {exc}") from exc


# --------------------------------------------------------------------------
# modes

def _run_quantum(cfg, bundle):
    net = _network(cfg, protocols.DIATOMIC)
    S = len(net.species)
    amps = [np.sqrt(cfg.n)] + [0.0] * (S - 1)
    state = _stage("initial state", quantum.coherent_product_state, net, amps, cfg.cutoff)
    eig = _stage("diagonalization", quantum.diagonalize, quantum.hamiltonian_blocks(net, state))
    times = _grid(cfg.tau_max, cfg.dtau)
    occ = _stage("evolution", quantum.expectation_series, eig, state, list(range(S)), times)
    if S == 2:
        step = max(1, int(round(cfg.entropy_dtau / cfg.dtau)))
        ent = np.full(times.size, np.nan)
        ent[::step] = _stage("entropy", quantum.entropy_series, eig, state, 0, times[::step])
        rows = [(t, a, m, s) if np.isfinite(s) else (t, a, m, "")
                for t, a, m, s in zip(times, occ[0], occ[1], ent)]
        bundle.tables["timeseries"] = Table(("tau", "n_atoms", "n_molecules", "entropy"), rows)
    else:
        header = ("tau",) + tuple(f"n_{s.name}" for s in net.species)
        bundle.tables["timeseries"] = Table(header, [tuple(r) for r in np.column_stack([times, occ.T])])

    report = {"dimension": int(sum(b.dim for b in state.bases)), "blocks": len(state.bases)}
    traj = _stage("mean field", meanfield.integrate, meanfield.meanfield_vector_field(net), amps,
                  float(times[-1]), times=times)
    mf = quantum.ObservableSeries(times, np.abs(traj.states[:, 0]) ** 2)
    q = quantum.ObservableSeries(times, occ[0])
    report["tau_mf"] = quantum.breakdown_time(q, mf)
    bundle.tables["meanfield"] = Table(("tau", "n_atoms"), list(zip(times, mf.values)))
    if state.is_sectored:
        try:
            ens = quantum.diagonal_ensemble(eig, state, 0)
            micro, win = quantum.microcanonical_average(eig, 0, state)
            ens.mean_micro, ens.window = micro, win
            report["ensemble"] = asdict(ens)
        except quantum.DegeneracyError as exc:
            report["ensemble"] = {"error": str(exc)}
    bundle.reports["quantum"] = report


def _run_meanfield(cfg, bundle):
    net = _network(cfg, None)
    times = _grid(cfg.tau_max, cfg.dtau)
    if net is None:
        params = (cfg.c1, cfg.c2)
        fld = meanfield.nondim_vector_field(params)
        init = np.array([np.sqrt(cfg.n), 0.0], dtype=complex)
        energy = lambda s: meanfield.nondim_energy(s, params)  # noqa: E731
    else:
        fld = meanfield.meanfield_vector_field(net)
        init = np.zeros(len(net.species), dtype=complex)
        if cfg.initial is not None:
            if len(cfg.initial) != len(net.species):
                raise ConfigError("initial: one amplitude per species expected")
            init[:] = cfg.initial
        else:
            init[0] = np.sqrt(cfg.n)
        energy = meanfield.meanfield_energy(net)
    traj = _stage("integration", meanfield.integrate, fld, init, float(times[-1]), times=times,
                  rtol=cfg.rtol, atol=cfg.atol, energy=energy)
    st = traj.states
    if st.shape[1] == 2:
        header = ("tau", "re_a", "im_a", "re_m", "im_m", "n_atoms", "n_molecules", "energy")
        cols = [traj.times, st[:, 0].real, st[:, 0].imag, st[:, 1].real, st[:, 1].imag,
                np.abs(st[:, 0]) ** 2, np.abs(st[:, 1]) ** 2, traj.energy]
    else:
        names = [s.name for s in net.species]
        header = ("tau",) + tuple(f"{p}_{n}" for n in names for p in ("re", "im")) + ("energy",)
        cols = [traj.times] + [c for k in range(st.shape[1]) for c in (st[:, k].real, st[:, k].imag)]
        cols.append(traj.energy)
    bundle.tables["trajectory"] = Table(header, [tuple(r) for r in np.column_stack(cols)])
    E = traj.energy
    report = {"energy_drift": float(np.max(np.abs(E - E[0])) / max(abs(E[0]), 1e-300))}
    if net is None:
        try:
            fit = chaos.measure_modulation(traj)
            pred = meanfield.perturbative_modulation(cfg.c1, cfg.c2, float(np.sqrt(cfg.n)))
            report["modulation"] = {**asdict(fit), "predicted_amplitude": pred.amplitude,
                                    "predicted_frequency": pred.frequency, "valid": pred.valid}
        except ValueError as exc:
            report["modulation"] = {"error": str(exc)}
    bundle.reports["meanfield"] = report


def _run_classical(cfg, bundle):
    net = _network(cfg, protocols.DIATOMIC)
    c0 = np.zeros(len(net.species))
    if cfg.initial is not None:
        if len(cfg.initial) != len(net.species):
            raise ConfigError("initial: one concentration per species expected")
        c0[:] = cfg.initial
    else:
        c0[0] = 1.0
    times = _grid(cfg.tau_max, cfg.dtau)
    traj = _stage("integration", meanfield.integrate_classical, net, c0, float(times[-1]),
                  times=times, rtol=cfg.rtol, atol=cfg.atol)
    header = ("t",) + tuple(f"c_{s.name}" for s in net.species)
    bundle.tables["concentrations"] = Table(header, [tuple(r) for r in np.column_stack([traj.times, traj.states])])
    bundle.reports["classical"] = {"final": dict(zip([s.name for s in net.species],
                                                     map(float, traj.states[-1])))}


def _chaos_network_check(cfg):
    if cfg.network_text() is not None:
        raise ConfigError(f"mode {cfg.mode} works on the scaled concurrent reaction; "
                          "set c1 and c2 instead of a network")


def _run_poincare(cfg, bundle):
    _chaos_network_check(cfg)
    params = (cfg.c1, cfg.c2)
    inits = _stage("sampling", chaos.sample_energy_surface, cfg.energy, params, cfg.trajectories,
                   cfg.seed)
    sec = _stage("section", chaos.poincare_section, meanfield.nondim_vector_field(params), inits,
                 cfg.tau_max, rtol=cfg.rtol, atol=cfg.atol)
    rows = [(tid,) + tuple(r) for tid in sorted(sec.records) for r in sec.records[tid]]
    bundle.tables["section"] = Table(("traj_id", "tau", "X_A", "P_A", "P_A2"), rows)
    bundle.tables["initial"] = Table(("traj_id", "X_A", "P_A", "X_A2", "P_A2"),
                                     [(i,) + tuple(p.as_array()) for i, p in enumerate(inits)])
    report = {"points": sec.n_points,
              "degenerate": [t for t, d in sorted(sec.degenerate.items()) if d]}
    if sec.n_points:
        report["filling_fraction"] = chaos.filling_fraction(sec, cfg.grid)
    bundle.reports["poincare"] = report


def _run_lyapunov(cfg, bundle):
    _chaos_network_check(cfg)
    if cfg.c1 is not None:
        params = (cfg.c1, cfg.c2)
        fld = meanfield.nondim_vector_field(params)
        inits = _stage("sampling", chaos.sample_energy_surface, cfg.energy, params,
                       cfg.trajectories, cfg.seed)
        rows = []
        for i, p in enumerate(inits):
            est = _stage(f"trajectory {i}", chaos.lyapunov_max, fld, p, cfg.horizon, seed=cfg.seed + i)
            rows.append((i, est.lambda_max))
        bundle.tables["lyapunov"] = Table(("traj_id", "lambda_max"), rows)
        bundle.reports["lyapunov"] = {"c1": cfg.c1, "lambda_max": max(r[1] for r in rows)}
        return
    scan = _stage("regime scan", chaos.regime_scan, cfg.energy, cfg.c2, cfg.c1_grid,
                  cfg.trajectories, cfg.seed, cfg.tau_max, cfg.horizon, cfg.grid)
    bundle.tables["scan"] = Table(("c1", "lambda_max", "filling_fraction"),
                                  [(r.c1, r.lambda_max, r.filling_fraction) for r in scan.rows])


def _run_sweep(cfg, bundle):
    net = _network(cfg, protocols.DIATOMIC)
    rows = _stage("ensemble sweep", protocols.ensemble_sweep, cfg.ns, network=net)
    bundle.tables["sweep"] = Table(("N", "mean", "fluct"), [(r.N, r.mean, r.fluct) for r in rows])
    bundle.reports["sweep"] = {"microcanonical": {repr(r.N): r.micro for r in rows},
                               "relative_fluct": {repr(r.N): r.relative_fluct for r in rows}}


_RUNNERS = {
    "quantum": _run_quantum,
    "meanfield": _run_meanfield,
    "classical": _run_classical,
    "poincare": _run_poincare,
    "lyapunov": _run_lyapunov,
    "sweep": _run_sweep,
}


def run(cfg: RunConfig) -> ResultBundle:
    """Execute one configured run."""
    cfg = resolve(cfg)
    start = time.perf_counter()
    bundle = ResultBundle(manifest={})
    _RUNNERS[cfg.mode](cfg, bundle)
    bundle.manifest = {
        "version": _version(),
        "config": render_config(cfg),
        "wall_time": time.perf_counter() - start,
        "tables": sorted(bundle.tables),
        "reports": bundle.reports,
    }
    return bundle


# --------------------------------------------------------------------------
# export

def format_value(v) -> str:
    """17 significant digits for floats, plain text otherwise."""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if np.isfinite(f) else None
    return obj


def export(bundle: ResultBundle, out_dir, formats=("csv",)) -> list[Path]:
    """Write tables (``<name>.csv`` / ``<name>.json``) and ``manifest.json``."""
    import csv

    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []
    for name in sorted(bundle.tables):
        tab = bundle.tables[name]
        if "csv" in formats:
            path = out / f"{name}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\r\n")
                w.writerow(tab.header)
                for row in tab.rows:
                    w.writerow([format_value(v) for v in row])
            written.append(path)
        if "json" in formats:
            path = out / f"{name}.json"
            data = {"columns": list(tab.header),
                    "rows": [[_json_safe(v) if v != "" else None for v in r] for r in tab.rows]}
            path.write_text(json.dumps(data, allow_nan=False) + "\n")
            written.append(path)
    path = out / "manifest.json"
    path.write_text(json.dumps(_json_safe(bundle.manifest), indent=2, sort_keys=True,
                               allow_nan=False) + "\n")
    written.append(path)
    return written
