"""Experiment runner: YAML configs, engine dispatch, figure presets and bit-stable output.

Every physical quantity in a config carries its unit in the key name, for
example ``j0_rad_per_s`` or ``t_end_s``. Output CSV files start with a
``# config:`` comment holding the resolved configuration as JSON, and use
the shortest round-trip decimal form for every number.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from . import dtwa
from . import ed_oracle as ed
from . import exact_collective as ec
from . import observables as ob
from .moments import CollectiveMoments, MomentTable
from .spinmodel import (
    Kind,
    ModelSpec,
    Schedule,
    gamma_from_t2,
    load_couplings,
    mean_coupling,
    power_law_couplings,
)

log = logging.getLogger(__name__)

ENGINES = ("auto", "dicke", "closed-form", "ed", "dtwa")
OBSERVABLES = ("squeezing", "total_spin", "spin_waves", "husimi", "ghz", "magnetization", "ramsey")
STATE_OBSERVABLES = ("husimi", "ghz", "magnetization")
SWEEP_AXES = ("n", "alpha", "j0", "gamma_z", "t")
T2_LAB_S = 0.068
B_LAB = 9500.0
K_UNITS = "radians per lattice site"


# --- configuration ----------------------------------------------------------------


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "PL-XX"
    n: int = 12
    alpha: float = 1.0
    j0_rad_per_s: float = 560.0
    couplings_file: str | None = None
    chi_rad_per_s: float | None = None
    b_field_rad_per_s: float = 0.0
    gamma_z_per_s: float | None = None
    t2_s: float | None = None


@dataclass(frozen=True)
class ScheduleConfig:
    t_end_s: float | None = None
    n_samples: int = 41
    times_s: tuple[float, ...] | None = None
    cat_heads: tuple[int, ...] | None = None


@dataclass(frozen=True)
class DtwaConfig:
    dt_factor: float = dtwa.DT_FACTOR
    same_site: str = "classical"
    block_size: int = dtwa.BLOCK_SIZE


@dataclass(frozen=True)
class SweepConfig:
    axis: str
    values: tuple[float, ...]
    co_values: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentSpec:
    name: str = "custom"
    model: ModelConfig = ModelConfig()
    schedule: ScheduleConfig = ScheduleConfig()
    engine: str = "auto"
    trajectories: int = 5000
    master_seed: int = 1
    observables: tuple[str, ...] = ("squeezing", "total_spin")
    probe: str = "optimum"
    frame: str = "rotating"
    ramsey_phis_rad: tuple[float, ...] = tuple(np.linspace(-0.5, 0.5, 41).tolist())
    ramsey_at: str = "optimum"
    husimi_n_theta: int = 64
    husimi_n_phi: int = 128
    compare_with: str | None = None
    dtwa: DtwaConfig = DtwaConfig()
    sweep: SweepConfig | None = None

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


def _build(cls, data: dict | None, where: str):
    data = dict(data or {})
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(names)
    if unknown:
        raise ValueError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")
    for k, v in data.items():
        if isinstance(v, list):
            data[k] = tuple(v)
    return cls(**data)


def spec_from_dict(d: dict) -> ExperimentSpec:
    d = dict(d or {})
    nested = {
        "model": ModelConfig,
        "schedule": ScheduleConfig,
        "dtwa": DtwaConfig,
    }
    for key, cls in nested.items():
        if key in d:
            d[key] = _build(cls, d[key], key)
    if d.get("sweep") is not None:
        sw = dict(d["sweep"])
        sw["co_values"] = {k: tuple(v) for k, v in (sw.get("co_values") or {}).items()}
        d["sweep"] = _build(SweepConfig, sw, "sweep")
    spec = _build(ExperimentSpec, d, "experiment")
    validate(spec)
    return spec


def load_spec(path: str | Path) -> ExperimentSpec:
    with open(path) as fh:
        return spec_from_dict(yaml.safe_load(fh))


def validate(spec: ExperimentSpec) -> None:
    if spec.engine not in ENGINES:
        raise ValueError(f"engine must be one of {ENGINES}")
    bad = set(spec.observables) - set(OBSERVABLES)
    if bad:
        raise ValueError(f"unknown observable(s): {', '.join(sorted(bad))}")
    if spec.probe not in ("optimum", "end", "all"):
        raise ValueError("probe must be 'optimum', 'end' or 'all'")
    if spec.ramsey_at not in ("optimum", "end", "start"):
        raise ValueError("ramsey_at must be 'optimum', 'end' or 'start'")
    if spec.frame not in ("rotating", "lab"):
        raise ValueError("frame must be 'rotating' or 'lab'")
    if spec.compare_with not in (None, "ed"):
        raise ValueError("compare_with must be null or 'ed'")
    if spec.trajectories < 2:
        raise ValueError("trajectories must be at least 2")
    if not 0 <= int(spec.master_seed) < 2**64:
        raise ValueError("master_seed must fit in 64 unsigned bits")
    if spec.sweep is not None:
        if spec.sweep.axis not in SWEEP_AXES:
            raise ValueError(f"sweep axis must be one of {SWEEP_AXES}")
        for k, v in spec.sweep.co_values.items():
            if k not in SWEEP_AXES or len(v) != len(spec.sweep.values):
                raise ValueError(f"co_values[{k!r}] must be a sweep axis with one entry per value")
    build_model(spec.model)
    build_schedule(spec)


def build_model(mc: ModelConfig) -> ModelSpec:
    kind = Kind.parse(mc.kind)
    if mc.gamma_z_per_s is not None and mc.t2_s is not None:
        raise ValueError("give gamma_z_per_s or t2_s, not both")
    gamma = gamma_from_t2(mc.t2_s) if mc.t2_s is not None else float(mc.gamma_z_per_s or 0.0)
    if mc.couplings_file:
        couplings = load_couplings(mc.couplings_file)
        if couplings.n != mc.n:
            raise ValueError(f"coupling file has {couplings.n} sites but n = {mc.n}")
    elif mc.n >= 2:
        couplings = power_law_couplings(mc.n, mc.j0_rad_per_s, mc.alpha)
    else:
        couplings = None
    if kind is Kind.OAT:
        chi = mc.chi_rad_per_s if mc.chi_rad_per_s is not None else mean_coupling(couplings)
        return ModelSpec(kind, None, chi=chi, gamma_z=gamma, n=mc.n)
    return ModelSpec(kind, couplings, b_field=mc.b_field_rad_per_s, gamma_z=gamma)


def jbar_of(mc: ModelConfig) -> float:
    m = build_model(mc)
    return m.chi if m.kind is Kind.OAT else mean_coupling(m.couplings)


def build_schedule(spec: ExperimentSpec) -> Schedule:
    sc = spec.schedule
    if sc.cat_heads:
        jb = jbar_of(spec.model)
        return Schedule.at(sorted(ec.cat_time(q, jb) for q in sc.cat_heads))
    if sc.times_s:
        return Schedule.at(sc.times_s)
    if sc.t_end_s is None:
        raise ValueError("schedule needs t_end_s, times_s or cat_heads")
    return Schedule.uniform(sc.t_end_s, sc.n_samples)


def resolve_engine(kind: Kind | str, n: int, gamma_z: float, observables: Sequence[str], engine: str = "auto") -> str:
    """Pick the engine for a model; a pure function of its arguments."""
    kind = Kind.parse(kind)
    if engine == "auto":
        if kind is Kind.OAT:
            engine = "dicke"
        elif kind is Kind.ISING:
            engine = "closed-form"
        elif n <= 12 and gamma_z == 0:
            engine = "ed"
        else:
            engine = "dtwa"
    allowed = {
        "dicke": (Kind.OAT,),
        "closed-form": (Kind.ISING,),
        "ed": tuple(Kind),
        "dtwa": (Kind.XX, Kind.TFI),
    }
    if engine not in allowed:
        raise ValueError(f"unknown engine {engine!r}")
    if kind not in allowed[engine]:
        raise ValueError(f"engine {engine} cannot run {kind.value}")
    if engine == "ed" and n > ed.MAX_PURE:
        raise ValueError(f"engine ed is limited to {ed.MAX_PURE} sites")
    if engine == "ed" and gamma_z > 0 and kind is Kind.TFI and n > ed.MAX_MIXED:
        raise ValueError(f"dephased PL-TFI on engine ed needs n <= {ed.MAX_MIXED}")
    state_obs = [o for o in observables if o in STATE_OBSERVABLES]
    if state_obs and engine in ("dtwa", "closed-form"):
        raise ValueError(f"{', '.join(state_obs)} need an exact state; engine {engine} does not provide one")
    if state_obs and engine == "ed" and gamma_z > 0 and n > ed.MAX_MIXED:
        raise ValueError(f"{', '.join(state_obs)} with dephasing need n <= {ed.MAX_MIXED} on engine ed")
    return engine


# --- engine execution -------------------------------------------------------------------


@dataclass
class EngineRun:
    engine: str
    times: np.ndarray
    collective: list[CollectiveMoments]
    tables: list[MomentTable] | None = None
    states: list | None = None
    dtwa_result: dtwa.DtwaResult | None = None
    info: dict = field(default_factory=dict)


def _run_engine(spec: ExperimentSpec, model: ModelSpec, sched: Schedule, engine: str, workers: int) -> EngineRun:
    times = sched.times
    want_tables = "spin_waves" in spec.observables
    if engine == "dicke":
        states = []
        for t in times:
            s = ec.evolve_oat(ec.css_dicke(model.n), model.chi, t)
            if model.gamma_z > 0:
                s = ec.dephase_dicke(s, model.gamma_z, t)
            states.append(s)
        coll = [ec.dicke_moments(s) for s in states]
        tables = [MomentTable.from_collective(c) for c in coll] if want_tables else None
        return EngineRun(engine, times, coll, tables, states)
    if engine == "closed-form":
        tables = [ec.ising_correlators(model.couplings, t) for t in times]
        if model.gamma_z > 0:
            tables = [ec.decay_replacements_table(tb, model.gamma_z, t) for tb, t in zip(tables, times)]
        return EngineRun(engine, times, [tb.collective() for tb in tables], tables)
    if engine == "ed":
        return _run_ed(spec, model, sched)
    res = dtwa.run_dtwa(
        model,
        sched,
        spec.trajectories,
        dtwa.RngPlan(spec.master_seed),
        workers=workers,
        dt_factor=spec.dtwa.dt_factor,
        block_size=spec.dtwa.block_size,
        same_site=spec.dtwa.same_site,
        frame=spec.frame,
    )
    info = {"dt_s": res.dt, "n_steps": res.n_steps, "trajectories": res.m_traj, **res.diagnostics}
    return EngineRun(engine, times, res.collective, res.tables, None, res, info)


def _run_ed(spec: ExperimentSpec, model: ModelSpec, sched: Schedule) -> EngineRun:
    n = model.n
    rotate = model.kind is Kind.TFI and spec.frame == "rotating"
    info: dict[str, Any] = {}
    if model.gamma_z > 0 and n <= ed.MAX_MIXED:
        r = ed.DensityState.from_pure(ed.css_x(n))
        states, prev = [], 0.0
        for t in sched.times:
            r = ed.evolve_lindblad(r, model, t - prev)
            prev = t
            states.append(r)
        if rotate:
            states = [_rotate_density(s, model.b_field, t) for s, t in zip(states, sched.times)]
        info["method"] = "lindblad"
        tables = [ed.measure_moments(s) for s in states]
        return EngineRun("ed", sched.times, [tb.collective() for tb in tables], tables, states, info=info)
    unitary = model.unitary()
    psi0 = ed.css_x(n)
    states = [ed.evolve_unitary(psi0, unitary, t) for t in sched.times]
    e0 = ed.energy(psi0, unitary)
    sz0 = ed.measure_moments(psi0).first[:, 2].sum() / 2
    tables = [ed.measure_moments(s) for s in states]
    info["max_energy_drift"] = max(abs(ed.energy(s, unitary) - e0) for s in states)
    info["max_sz_drift"] = max(abs(tb.first[:, 2].sum() / 2 - sz0) for tb in tables)
    if rotate:
        states = [ed.rotating_frame(s, model.b_field, t) for s, t in zip(states, sched.times)]
        tables = [ed.measure_moments(s) for s in states]
    if model.gamma_z > 0:
        tables = [ec.decay_replacements_table(tb, model.gamma_z, t) for tb, t in zip(tables, sched.times)]
        states = None
        info["method"] = "unitary+decay-replacements"
    else:
        info["method"] = "unitary"
    return EngineRun("ed", sched.times, [tb.collective() for tb in tables], tables, states, info=info)


def _rotate_density(r: ed.DensityState, b: float, t: float) -> ed.DensityState:
    z = 2 * ed.popcount(r.n) - r.n
    ph = np.exp(1j * b * t * z)
    return ed.DensityState(r.n, ph[:, None] * r.rho * ph.conj()[None, :])


# --- observables and output -------------------------------------------------------------


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence], config: dict, title: str) -> None:
    lines = [f"# squeezesim {title}", "# config: " + json.dumps(config, sort_keys=True, separators=(",", ":"))]
    lines.append(",".join(header))
    lines += [",".join(fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _optimum_index(xi_db: list[float]) -> int:
    vals = np.array([v if math.isfinite(v) else np.inf for v in xi_db])
    return int(np.argmin(vals))


def run_experiment(spec: ExperimentSpec, out: str | Path | None = None, workers: int = 1) -> dict:
    """Run one experiment; write ``timeseries.csv`` and ``summary.json`` when ``out`` is given."""
    validate(spec)
    if spec.sweep is not None:
        raise ValueError("spec carries a sweep; use sweep()")
    t_wall = time.perf_counter()
    model = build_model(spec.model)
    sched = build_schedule(spec)
    engine = resolve_engine(model.kind, model.n, model.gamma_z, spec.observables, spec.engine)
    run = _run_engine(spec, model, sched, engine, workers)
    config = spec.to_dict()
    config["resolved"] = {"engine": engine, "gamma_z_per_s": model.gamma_z, "sample_times_s": list(sched.sample_times)}
    if model.kind is Kind.OAT:
        config["resolved"]["chi_rad_per_s"] = model.chi
    else:
        config["resolved"]["jbar_rad_per_s"] = mean_coupling(model.couplings)

    header = ["t_s"]
    cols: dict[str, list] = {}
    xi_db = []
    sq_all = []
    for cm in run.collective:
        try:
            sq = ob.squeezing_wineland(cm)
        except ValueError:
            sq = None
        sq_all.append(sq)
        xi_db.append(sq.db if sq else math.nan)
    if "squeezing" in spec.observables:
        cols["sx"] = [c.mean[0] for c in run.collective]
        cols["sy"] = [c.mean[1] for c in run.collective]
        cols["sz"] = [c.mean[2] for c in run.collective]
        cols["xi2"] = [s.xi2 if s else math.nan for s in sq_all]
        cols["xi2_db"] = xi_db
        if run.dtwa_result is not None and run.dtwa_result.block_counts.size >= 3:
            res = run.dtwa_result
            errs = []
            for ti in range(len(run.times)):
                try:
                    errs.append(ob.xi2_db_jackknife(res.block_collective(ti), res.block_counts))
                except ValueError:
                    errs.append(math.nan)
            cols["xi2_db_err"] = errs
    if "total_spin" in spec.observables:
        cols["s2"] = [c.s_squared() for c in run.collective]
        cols["s2_norm"] = [ob.total_spin(c)[1] for c in run.collective]
    kgrid_rows = []
    if "spin_waves" in spec.observables:
        positions = None if model.couplings is None else model.couplings.positions
        waves = [ob.spin_wave_occupations(tb, positions) for tb in run.tables]
        cols["c_k0"] = [w.k0 for w in waves]
        cols["c_k_nonzero"] = [w.nonzero_sum for w in waves]
        cols["mean_sigma_x"] = [w.mean_sx for w in waves]
        for t, w in zip(run.times, waves):
            kgrid_rows += [(t, k, c) for k, c in zip(w.k, w.occupation)]

    compare = None
    if spec.compare_with == "ed":
        ref = _run_ed(spec, model, sched)
        ed_db = [ob.squeezing_wineland(c).db if np.linalg.norm(c.mean) > 0 else math.nan for c in ref.collective]
        cols["xi2_db_ed"] = ed_db
        i_opt = _optimum_index(ed_db)
        gaps = [abs(a - b) for a, b in zip(xi_db[: i_opt + 1], ed_db[: i_opt + 1])]
        compare = {"reference": "ed", "ed_optimum_t_s": float(run.times[i_opt]), "max_gap_db_to_optimum": max(gaps)}

    header += list(cols)
    rows = [[t] + [cols[c][i] for c in cols] for i, t in enumerate(run.times)]

    i_opt = _optimum_index(xi_db)
    summary: dict[str, Any] = {
        "name": spec.name,
        "engine": engine,
        "master_seed": int(spec.master_seed),
        "config": config,
        "engine_info": _plain(run.info),
        "min_xi2_db": xi_db[i_opt],
        "t_opt_s": float(run.times[i_opt]),
        "k_units": K_UNITS,
    }
    if "xi2_db_err" in cols:
        summary["min_xi2_db_err"] = cols["xi2_db_err"][i_opt]
    if "total_spin" in spec.observables:
        summary["s2_norm_at_opt"] = cols["s2_norm"][i_opt]
    if compare:
        summary["comparison"] = compare

    if "ramsey" in spec.observables:
        j = {"optimum": i_opt, "end": len(run.times) - 1, "start": 0}[spec.ramsey_at]
        rr = ob.ramsey_mse(run.collective[j], spec.ramsey_phis_rad)
        phis = np.asarray(spec.ramsey_phis_rad)
        zero = np.flatnonzero(phis == 0.0)
        summary["ramsey"] = {
            "t_s": float(run.times[j]),
            "a1": rr.coeffs[0],
            "a2": rr.coeffs[1],
            "a3": rr.coeffs[2],
            "spin_length": rr.spin_length,
            "gain_db": rr.gain_db,
            "gain_vs_sql_db": rr.gain_vs_sql_db,
            "mse_at_zero": float(rr.mse[zero[0]]) if zero.size else None,
            "sql": 1.0 / model.n,
        }

    qgrid_rows = []
    state_obs = [o for o in spec.observables if o in STATE_OBSERVABLES]
    if state_obs:
        if run.states is None:
            raise ValueError(f"{', '.join(state_obs)} need exact states, which this run did not produce")
        probes = {"optimum": [i_opt], "end": [len(run.times) - 1], "all": list(range(len(run.times)))}[spec.probe]
        summary["probes"] = []
        for j in probes:
            st = run.states[j]
            rec: dict[str, Any] = {"t_s": float(run.times[j])}
            if "magnetization" in spec.observables:
                rec["magnetization"] = ob.magnetization_histogram(st).tolist()
            if "ghz" in spec.observables:
                f_direct, axis = ob.cat_ghz_fidelity(st)
                fm, scan, phi1 = ob.measured_ghz_fidelity(st)
                aligned = ob.magnetization_histogram(ob.pulse(st, math.pi / 2, phi1))
                rec["ghz"] = {
                    "fidelity": f_direct,
                    "axis_theta_rad": axis[0],
                    "axis_phi_rad": axis[1],
                    "measured_fidelity": fm.fidelity,
                    "witness": fm.witness,
                    "p_top": float(aligned[-1]),
                    "p_bottom": float(aligned[0]),
                    "contrast": scan.contrast,
                    "align_phi1_rad": phi1,
                }
            if "husimi" in spec.observables:
                q = ob.husimi_q(st, ob.QGrid(spec.husimi_n_theta, spec.husimi_n_phi))
                peaks = ob.equatorial_peaks(q)
                rec["husimi"] = {"normalization": q.normalization(), "equatorial_peaks": len(peaks), "peak_phi_rad": peaks}
                qgrid_rows += [(run.times[j], *tr) for tr in q.triples()]
            summary["probes"].append(rec)

    summary["wall_time_s"] = time.perf_counter() - t_wall
    summary = _plain(summary)
    result = {"summary": summary, "header": header, "rows": rows, "run": run}
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "timeseries.csv", header, rows, config, "timeseries")
        if kgrid_rows:
            _write_csv(out / "kgrid.csv", ["t_s", "k", "c_k"], kgrid_rows, config, "kgrid")
        if qgrid_rows:
            _write_csv(out / "qgrid.csv", ["t_s", "theta_rad", "phi_rad", "q"], qgrid_rows, config, "qgrid")
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=_json_default) + "\n")
    return result


def _json_default(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


# --- sweeps --------------------------------------------------------------------------


def _with_axis(spec: ExperimentSpec, axis: str, value) -> ExperimentSpec:
    m = spec.model
    if axis == "n":
        m = dataclasses.replace(m, n=int(value))
    elif axis == "alpha":
        m = dataclasses.replace(m, alpha=float(value))
    elif axis == "j0":
        m = dataclasses.replace(m, j0_rad_per_s=float(value))
    elif axis == "gamma_z":
        m = dataclasses.replace(m, gamma_z_per_s=float(value), t2_s=None)
    elif axis == "t":
        sc = ScheduleConfig(times_s=(float(value),))
        return dataclasses.replace(spec, schedule=sc)
    return dataclasses.replace(spec, model=m)


def sweep(
    spec: ExperimentSpec, axis: str | None = None, values: Sequence[float] | None = None, out: str | Path | None = None, workers: int = 1
) -> dict:
    """One run per value along ``axis``, with an aggregate table of optimum squeezing."""
    co_values: dict = {}
    if axis is None:
        if spec.sweep is None:
            raise ValueError("sweep needs an axis and values")
        axis, values, co_values = spec.sweep.axis, spec.sweep.values, spec.sweep.co_values
    if axis not in SWEEP_AXES:
        raise ValueError(f"sweep axis must be one of {SWEEP_AXES}")
    if not values:
        raise ValueError("sweep needs at least one value")
    base = dataclasses.replace(spec, sweep=None)
    out = Path(out) if out is not None else None
    results, rows = [], []
    for i, v in enumerate(values):
        s = _with_axis(base, axis, v)
        for cax, cvals in co_values.items():
            s = _with_axis(s, cax, cvals[i])
        sub = out / f"{axis}={fmt(v)}" if out is not None else None
        r = run_experiment(s, sub, workers)
        sm = r["summary"]
        results.append(r)
        rows.append(
            [v, sm["engine"], sm["min_xi2_db"], sm.get("min_xi2_db_err", math.nan), sm["t_opt_s"], sm.get("s2_norm_at_opt", math.nan)]
        )
    header = [axis, "engine", "min_xi2_db", "min_xi2_db_err", "t_opt_s", "s2_norm_at_opt"]
    config = spec.to_dict()
    config["sweep"] = {"axis": axis, "values": list(values), "co_values": {k: list(v) for k, v in co_values.items()}}
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        lines = ["# squeezesim sweep", "# config: " + json.dumps(_plain(config), sort_keys=True, separators=(",", ":"))]
        lines.append(",".join(header))
        lines += [",".join(c if isinstance(c, str) else fmt(c) for c in row) for row in rows]
        (out / "aggregate.csv").write_text("\n".join(lines) + "\n")
    return {"axis": axis, "values": list(values), "header": header, "rows": rows, "results": results}


def loglog_slope(ns: Sequence[float], xi2_db: Sequence[float]) -> float:
    """Slope of ``log xi^2`` against ``log N``."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.asarray(xi2_db, dtype=float) / 10 * math.log(10)
    return float(np.polyfit(x, y, 1)[0])


# --- presets -------------------------------------------------------------------------


def _lab(kind="PL-XX", n=12, alpha=1.0, j0=560.0, dephased=True, **kw) -> ModelConfig:
    return ModelConfig(kind=kind, n=n, alpha=alpha, j0_rad_per_s=j0, t2_s=T2_LAB_S if dephased else None, **kw)


def _presets() -> dict[str, ExperimentSpec]:
    sizes = (12, 20, 30, 40, 51)
    j0_span = tuple(234.0 - 18.0 * (n - 12) / 39.0 for n in sizes)
    return {
        "fig1c-n12": ExperimentSpec(
            name="fig1c-n12",
            model=_lab(),
            schedule=ScheduleConfig(t_end_s=3e-3, n_samples=61),
            observables=("squeezing", "total_spin"),
        ),
        "fig1c-n51": ExperimentSpec(
            name="fig1c-n51",
            model=_lab(n=51, alpha=0.9, j0=216.0),
            schedule=ScheduleConfig(t_end_s=8e-3, n_samples=81),
            observables=("squeezing", "total_spin"),
        ),
        "fig1c-n12-tfi": ExperimentSpec(
            name="fig1c-n12-tfi",
            model=_lab(kind="PL-TFI", b_field_rad_per_s=B_LAB),
            schedule=ScheduleConfig(t_end_s=3e-3, n_samples=61),
            observables=("squeezing", "total_spin"),
        ),
        "fig1d-scaling": ExperimentSpec(
            name="fig1d-scaling",
            model=_lab(alpha=0.9, j0=234.0),
            schedule=ScheduleConfig(t_end_s=5e-3, n_samples=51),
            trajectories=2000,
            observables=("squeezing", "total_spin"),
            sweep=SweepConfig("n", tuple(float(n) for n in sizes), {"j0": j0_span}),
        ),
        "fig2-spinwaves": ExperimentSpec(
            name="fig2-spinwaves",
            model=_lab(n=51, alpha=0.9, j0=216.0),
            schedule=ScheduleConfig(t_end_s=4e-3, n_samples=41),
            trajectories=2000,
            observables=("squeezing", "total_spin", "spin_waves"),
        ),
        "fig2-spinwaves-ising": ExperimentSpec(
            name="fig2-spinwaves-ising",
            model=_lab(kind="PL-Ising", n=51, alpha=0.9, j0=216.0),
            schedule=ScheduleConfig(t_end_s=4e-3, n_samples=41),
            observables=("squeezing", "total_spin", "spin_waves"),
        ),
        "fig3-cats": ExperimentSpec(
            name="fig3-cats",
            model=_lab(kind="OAT", dephased=False),
            schedule=ScheduleConfig(cat_heads=(3, 2)),
            observables=("squeezing", "husimi", "ghz", "magnetization"),
            probe="all",
        ),
        "fig3-ghz-xx": ExperimentSpec(
            name="fig3-ghz-xx",
            model=_lab(dephased=False),
            schedule=ScheduleConfig(cat_heads=(2,)),
            engine="ed",
            observables=("squeezing", "husimi", "ghz", "magnetization"),
            probe="all",
        ),
        "fig3-ghz-tfi": ExperimentSpec(
            name="fig3-ghz-tfi",
            model=_lab(kind="PL-TFI", dephased=False, b_field_rad_per_s=B_LAB),
            schedule=ScheduleConfig(cat_heads=(2,)),
            engine="ed",
            observables=("squeezing", "husimi", "ghz", "magnetization"),
            probe="all",
        ),
        "fig3-ghz-ising": ExperimentSpec(
            name="fig3-ghz-ising",
            model=_lab(kind="PL-Ising", dephased=False),
            schedule=ScheduleConfig(cat_heads=(2,)),
            engine="ed",
            observables=("husimi", "ghz", "magnetization"),
            probe="all",
        ),
        "fig4-ramsey": ExperimentSpec(
            name="fig4-ramsey",
            model=_lab(n=51, alpha=0.9, j0=216.0),
            schedule=ScheduleConfig(t_end_s=4e-3, n_samples=41),
            observables=("squeezing", "total_spin", "ramsey"),
        ),
        "fig4c-size": ExperimentSpec(
            name="fig4c-size",
            model=_lab(alpha=0.9, j0=216.0),
            schedule=ScheduleConfig(t_end_s=5e-3, n_samples=51),
            trajectories=2000,
            observables=("squeezing",),
            sweep=SweepConfig("n", tuple(float(n) for n in sizes)),
        ),
        "sql-check": ExperimentSpec(
            name="sql-check",
            model=ModelConfig(kind="OAT", n=51, chi_rad_per_s=1.0),
            schedule=ScheduleConfig(times_s=(0.0,)),
            observables=("squeezing", "ramsey"),
            ramsey_at="start",
        ),
        "oracle-xcheck-n8": ExperimentSpec(
            name="oracle-xcheck-n8",
            model=_lab(n=8, dephased=False),
            schedule=ScheduleConfig(t_end_s=1.5e-3, n_samples=31),
            engine="dtwa",
            observables=("squeezing", "total_spin"),
            compare_with="ed",
        ),
    }


def preset_names() -> list[str]:
    return sorted(_presets())


def preset(name: str) -> ExperimentSpec:
    presets = _presets()
    if name not in presets:
        raise KeyError(f"unknown preset {name!r}; known: {', '.join(sorted(presets))}")
    spec = presets[name]
    validate(spec)
    return spec


# --- command line ----------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--workers", type=int, default=1, help="processes for DTWA trajectories")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--engine", choices=ENGINES, help="override engine selection")
    p.add_argument("--trajectories", type=int, help="override DTWA trajectory count")


def _override(spec: ExperimentSpec, args) -> ExperimentSpec:
    kw = {}
    if args.seed is not None:
        kw["master_seed"] = args.seed
    if args.engine is not None:
        kw["engine"] = args.engine
    if args.trajectories is not None:
        kw["trajectories"] = args.trajectories
    spec = dataclasses.replace(spec, **kw)
    validate(spec)
    return spec


def _report(summary: dict) -> None:
    keys = ("name", "engine", "min_xi2_db", "min_xi2_db_err", "t_opt_s", "s2_norm_at_opt", "wall_time_s")
    for k in keys:
        if k in summary:
            print(f"{k}: {summary[k]}")
    for k in ("comparison", "ramsey"):
        if k in summary:
            print(f"{k}: {json.dumps(summary[k], sort_keys=True)}")
    for rec in summary.get("probes", []):
        brief = {"t_s": rec["t_s"]}
        if "ghz" in rec:
            brief["ghz_fidelity"] = rec["ghz"]["fidelity"]
            brief["measured_fidelity"] = rec["ghz"]["measured_fidelity"]
        if "husimi" in rec:
            brief["equatorial_peaks"] = rec["husimi"]["equatorial_peaks"]
        print(f"probe: {json.dumps(brief, sort_keys=True)}")


def _execute(spec: ExperimentSpec, args) -> int:
    if spec.sweep is not None:
        res = sweep(spec, out=args.out, workers=args.workers)
        print(",".join(res["header"]))
        for row in res["rows"]:
            print(",".join(c if isinstance(c, str) else fmt(c) for c in row))
    else:
        _report(run_experiment(spec, args.out, args.workers)["summary"])
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="squeezesim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment from a YAML config")
    p_run.add_argument("--config", type=Path, required=True)
    _common(p_run)
    p_pre = sub.add_parser("preset", help="run a named figure preset")
    p_pre.add_argument("name")
    p_pre.add_argument("--show", action="store_true", help="print the preset as YAML instead of running it")
    _common(p_pre)
    p_sw = sub.add_parser("sweep", help="sweep one parameter")
    src = p_sw.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path)
    src.add_argument("--preset")
    p_sw.add_argument("--axis", choices=SWEEP_AXES)
    p_sw.add_argument("--values", help="comma-separated values")
    _common(p_sw)
    sub.add_parser("list-presets", help="list preset names")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    try:
        if args.command == "list-presets":
            for name in preset_names():
                print(name)
            return 0
        if args.command == "run":
            return _execute(_override(load_spec(args.config), args), args)
        if args.command == "preset":
            spec = _override(preset(args.name), args)
            if args.show:
                print(yaml.safe_dump(spec.to_dict(), sort_keys=False), end="")
                return 0
            return _execute(spec, args)
        spec = load_spec(args.config) if args.config else preset(args.preset)
        spec = _override(spec, args)
        if args.axis:
            if not args.values:
                parser.error("--axis needs --values")
            values = [float(v) for v in args.values.split(",")]
            res = sweep(spec, args.axis, values, args.out, args.workers)
        else:
            res = sweep(spec, out=args.out, workers=args.workers)
        print(",".join(res["header"]))
        for row in res["rows"]:
            print(",".join(c if isinstance(c, str) else fmt(c) for c in row))
        return 0
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
