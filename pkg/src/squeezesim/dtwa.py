"""Dissipative discrete truncated Wigner engine for PL-XX and PL-TFI.

Trajectories evolve under ``dS_i/dt = 2 S_i x h_i`` plus a collective
stochastic rotation about z. This flow is the mirror image (``y -> -y``) of
Heisenberg evolution under ``exp(-iHt)``, so readout flips the y component.
Results then use the same convention as the exact engines.

Reproducibility: trajectory ``k`` draws from its own Philox stream seeded by
``SeedSequence(master_seed, spawn_key=(k,))``. It takes its initial ``+-1``
values first, then one normal per integration step. Trajectories are
grouped into fixed blocks, whose partial sums are reduced in block order in
extended precision. Output therefore does not depend on the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .moments import CollectiveMoments, MomentTable
from .spinmodel import Kind, ModelSpec, Schedule

DT_FACTOR = 0.005
DT_FACTOR_MAX = 0.02
BLOCK_SIZE = 500
SAME_SITE_MODES = ("classical", "pauli")


@dataclass(frozen=True)
class RngPlan:
    master_seed: int

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")

    def generator(self, index: int) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.master_seed), spawn_key=(int(index),))
        return np.random.Generator(np.random.Philox(ss))


@dataclass(eq=False)
class TrajectoryEnsemble:
    """``spins[k, i, :]`` is the classical spin of site ``i`` in trajectory ``k``."""

    spins: np.ndarray
    indices: np.ndarray

    @property
    def m_traj(self) -> int:
        return self.spins.shape[0]

    @property
    def n(self) -> int:
        return self.spins.shape[1]


def _initial(gen: np.random.Generator, n: int) -> np.ndarray:
    s = np.ones((n, 3))
    s[:, 1:] = 2.0 * gen.integers(0, 2, size=(n, 2)) - 1.0
    return s


def sample_discrete_wigner(n: int, m_traj: int, plan: RngPlan, start: int = 0) -> TrajectoryEnsemble:
    """Sample the four-point discrete Wigner distribution of the +x CSS."""
    if n < 1 or m_traj < 1:
        raise ValueError("need n >= 1 and m_traj >= 1")
    idx = np.arange(start, start + m_traj)
    spins = np.stack([_initial(plan.generator(k), n) for k in idx])
    return TrajectoryEnsemble(spins, idx)


def max_rate(model: ModelSpec) -> float:
    rates = [model.gamma_z]
    if model.couplings is not None:
        rates.append(model.couplings.max_row_sum())
    if model.kind is Kind.TFI:
        rates.append(abs(model.b_field))
    return max(rates)


def _check_kind(model: ModelSpec) -> None:
    if model.kind not in (Kind.XX, Kind.TFI):
        raise ValueError(f"DTWA supports PL-XX and PL-TFI only, got {model.kind.value}")


def drift(model: ModelSpec, spins: np.ndarray) -> np.ndarray:
    """Deterministic part of the flow for spins of shape ``(..., n, 3)``.

    PL-XX: ``dS^x = -sum J S^z_i S^y_j``, ``dS^y = sum J S^z_i S^x_j``,
    ``dS^z = sum J (S^x_i S^y_j - S^y_i S^x_j)``.
    PL-TFI: ``dS/dt = 2 S x (sum_j J S^x_j, 0, B)``.
    """
    _check_kind(model)
    cm = np.swapaxes(np.asarray(spins, dtype=float), -1, -2)
    return np.swapaxes(_drift_cm(model, cm), -1, -2)


def _drift_cm(model: ModelSpec, s: np.ndarray) -> np.ndarray:
    # component-major layout (..., 3, n) keeps the coupling products contiguous
    j = model.couplings.j
    x, y, z = s[..., 0, :], s[..., 1, :], s[..., 2, :]
    out = np.empty_like(s)
    jx = x @ j
    if model.kind is Kind.XX:
        jy = y @ j
        out[..., 0, :] = -z * jy
        out[..., 1, :] = z * jx
        out[..., 2, :] = x * jy - y * jx
    else:
        b = model.b_field
        out[..., 0, :] = 2.0 * b * y
        out[..., 1, :] = 2.0 * (z * jx - b * x)
        out[..., 2, :] = -2.0 * y * jx
    return out


def _diffusion_cm(s: np.ndarray, sqrt_gamma: float) -> np.ndarray:
    g = np.zeros_like(s)
    g[..., 0, :] = -sqrt_gamma * s[..., 1, :]
    g[..., 1, :] = sqrt_gamma * s[..., 0, :]
    return g


def _check_dt(model: ModelSpec, dt: float) -> None:
    if not dt > 0:
        raise ValueError("dt must be positive")
    rate = max_rate(model)
    if rate > 0 and dt > DT_FACTOR_MAX / rate * (1 + 1e-12):
        raise ValueError(f"dt={dt:g} exceeds the stability bound {DT_FACTOR_MAX / rate:g}")


def _heun_cm(s: np.ndarray, model: ModelSpec, dt: float, dw) -> np.ndarray:
    f0 = _drift_cm(model, s)
    if model.gamma_z == 0:
        return s + 0.5 * (f0 + _drift_cm(model, s + f0 * dt)) * dt
    dw = np.asarray(dw, dtype=float)[..., None, None]
    sg = math.sqrt(model.gamma_z)
    g0 = _diffusion_cm(s, sg)
    pred = s + f0 * dt + g0 * dw
    return s + 0.5 * (f0 + _drift_cm(model, pred)) * dt + 0.5 * (g0 + _diffusion_cm(pred, sg)) * dw


def step(spins: np.ndarray, model: ModelSpec, dt: float, noise) -> np.ndarray:
    """One stochastic Heun step for spins of shape ``(..., n, 3)``.

    ``noise`` is the Wiener increment of each trajectory (variance ``dt``),
    shared by all of its spins. Shape ``()`` for a single trajectory or
    ``(m_traj,)`` for a batch.
    """
    _check_kind(model)
    _check_dt(model, dt)
    cm = np.swapaxes(np.asarray(spins, dtype=float), -1, -2)
    return np.swapaxes(_heun_cm(cm, model, dt, noise), -1, -2)


def step_plan(sched: Schedule, dt_max: float) -> list[tuple[int, float]]:
    """Split each gap between sample times into equal steps no longer than ``dt_max``."""
    plan = []
    prev = 0.0
    for t in sched.sample_times:
        gap = t - prev
        k = int(math.ceil(gap / dt_max - 1e-9)) if gap > 0 else 0
        plan.append((k, gap / k if k else 0.0))
        prev = t
    return plan


@dataclass(frozen=True)
class _BlockTask:
    model: ModelSpec
    plan: RngPlan
    start: int
    stop: int
    intervals: tuple[tuple[int, float], ...]
    readout: tuple[np.ndarray, ...]
    same_site: str


def _run_block(task: _BlockTask) -> dict:
    model = task.model
    n = model.n
    count = task.stop - task.start
    total_steps = sum(k for k, _ in task.intervals)
    noisy = model.gamma_z > 0
    spins = np.empty((count, 3, n))
    normals = np.empty((count, total_steps)) if noisy else None
    for r, k in enumerate(range(task.start, task.stop)):
        gen = task.plan.generator(k)
        spins[r] = _initial(gen, n).T
        if noisy:
            normals[r] = gen.standard_normal(total_steps)

    n_t = len(task.intervals)
    out = {
        "count": count,
        "sum1": np.zeros((n_t, n, 3)),
        "sq1": np.zeros((n_t, n, 3)),
        "sum2": np.zeros((n_t, 3 * n, 3 * n)),
        "sq2": np.zeros((n_t, 3 * n, 3 * n)),
        "coll1": np.zeros((n_t, 3)),
        "coll2": np.zeros((n_t, 3, 3)),
        "sz_drift": 0.0,
        "norm_dev": 0.0,
    }
    sz0 = spins[:, 2].sum(axis=1)
    s_idx = 0
    for ti, (k, dt) in enumerate(task.intervals):
        if k:
            _check_dt(model, dt)
        sq_dt = math.sqrt(dt)
        for _ in range(k):
            dw = normals[:, s_idx] * sq_dt if noisy else None
            spins = _heun_cm(spins, model, dt, dw)
            s_idx += 1
            out["norm_dev"] = max(out["norm_dev"], float(np.abs((spins * spins).sum(axis=1) - 3.0).max()))
            out["sz_drift"] = max(out["sz_drift"], float(np.abs(spins[:, 2].sum(axis=1) - sz0).max()) / n)
        _accumulate(out, ti, np.einsum("ab,kbn->kna", task.readout[ti], spins), task.same_site)
    return out


def _accumulate(out: dict, ti: int, s: np.ndarray, same_site: str) -> None:
    count, n, _ = s.shape
    flat = s.reshape(count, 3 * n)
    sq = flat * flat
    out["sum1"][ti] = s.sum(axis=0)
    out["sq1"][ti] = (s * s).sum(axis=0)
    out["sum2"][ti] = flat.T @ flat
    out["sq2"][ti] = sq.T @ sq
    big = 0.5 * s.sum(axis=1)
    out["coll1"][ti] = big.sum(axis=0)
    c2 = big.T @ big
    if same_site == "pauli":
        c2 = c2 - 0.25 * np.einsum("kia,kib->ab", s, s) + 0.25 * n * count * np.eye(3)
    out["coll2"][ti] = c2


def readout_rotation(model: ModelSpec, t: float, frame: str) -> np.ndarray:
    """Map from trajectory variables to the exact-engine convention at time ``t``."""
    flip = np.diag([1.0, -1.0, 1.0])
    if model.kind is Kind.TFI and frame == "rotating":
        a = -2.0 * model.b_field * t
        c, s = math.cos(a), math.sin(a)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]) @ flip
    return flip


@dataclass(eq=False)
class DtwaResult:
    times: np.ndarray
    tables: list[MomentTable]
    collective: list[CollectiveMoments]
    block_counts: np.ndarray
    block_coll1: np.ndarray
    block_coll2: np.ndarray
    dt: float
    n_steps: int
    m_traj: int
    diagnostics: dict = field(default_factory=dict)

    def block_collective(self, ti: int) -> list[CollectiveMoments]:
        n = self.tables[ti].n
        return [
            CollectiveMoments(n, c1 / c, c2 / c)
            for c, c1, c2 in zip(self.block_counts, self.block_coll1[:, ti], self.block_coll2[:, ti])
        ]


def run_dtwa(
    model: ModelSpec,
    sched: Schedule,
    m_traj: int,
    plan: RngPlan,
    *,
    workers: int = 1,
    dt_factor: float = DT_FACTOR,
    block_size: int = BLOCK_SIZE,
    same_site: str = "classical",
    frame: str = "rotating",
) -> DtwaResult:
    """Trajectory-averaged moment tables at every sample time.

    ``same_site="classical"`` estimates same-site products by the trajectory
    mean of ``S_i^a S_i^b``, like every other pair. ``"pauli"`` replaces those
    entries with the Pauli values ``delta_ab``. ``frame`` only matters for
    PL-TFI. ``"rotating"`` reports moments in the frame rotating with the
    transverse field, and ``"lab"`` reports them unrotated.
    """
    _check_kind(model)
    if same_site not in SAME_SITE_MODES:
        raise ValueError(f"same_site must be one of {SAME_SITE_MODES}")
    if frame not in ("rotating", "lab"):
        raise ValueError("frame must be 'rotating' or 'lab'")
    if m_traj < 2:
        raise ValueError("need at least two trajectories")
    if not 0 < dt_factor <= DT_FACTOR_MAX:
        raise ValueError(f"dt_factor must lie in (0, {DT_FACTOR_MAX}]")
    rate = max_rate(model)
    dt_max = dt_factor / rate if rate > 0 else max(sched.t_end, 1e-300)
    intervals = tuple(step_plan(sched, dt_max))
    readout = tuple(readout_rotation(model, t, frame) for t in sched.sample_times)
    tasks = [
        _BlockTask(model, plan, a, min(a + block_size, m_traj), intervals, readout, same_site)
        for a in range(0, m_traj, block_size)
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            blocks = list(pool.map(_run_block, tasks))
    else:
        blocks = [_run_block(t) for t in tasks]
    return _reduce(model, sched, blocks, m_traj, intervals, dt_max, same_site)


def _reduce(model, sched, blocks, m_traj, intervals, dt_max, same_site) -> DtwaResult:
    n = model.n
    ld = np.longdouble
    tot = {key: np.zeros_like(blocks[0][key], dtype=ld) for key in ("sum1", "sq1", "sum2", "sq2", "coll1", "coll2")}
    for b in blocks:  # fixed block order keeps the reduction bit-stable
        for key in tot:
            tot[key] += b[key].astype(ld)
    m = ld(m_traj)
    mean1 = tot["sum1"] / m
    mean2 = tot["sum2"] / m
    var1 = np.maximum(tot["sq1"] / m - mean1**2, 0)
    var2 = np.maximum(tot["sq2"] / m - mean2**2, 0)
    err1 = np.sqrt(var1 / (m - 1)).astype(float)
    err2 = np.sqrt(var2 / (m - 1)).astype(float)
    mean1 = mean1.astype(float)
    mean2 = mean2.astype(float)
    coll1 = (tot["coll1"] / m).astype(float)
    coll2 = (tot["coll2"] / m).astype(float)
    idx = np.arange(n)
    tables, collective = [], []
    for ti in range(len(sched.sample_times)):
        second = mean2[ti].reshape(n, 3, n, 3)
        second = 0.5 * (second + second.transpose(2, 3, 0, 1))
        e2 = err2[ti].reshape(n, 3, n, 3).copy()
        if same_site == "pauli":
            second[idx, :, idx, :] = np.eye(3)
            e2[idx, :, idx, :] = 0.0
        tables.append(MomentTable(mean1[ti], second, err1[ti], e2))
        collective.append(CollectiveMoments(n, coll1[ti], coll2[ti]))
    counts = np.array([b["count"] for b in blocks], dtype=float)
    diagnostics = {
        "max_norm_deviation": max(b["norm_dev"] for b in blocks),
        "max_sz_drift_per_site": max(b["sz_drift"] for b in blocks),
        "n_blocks": len(blocks),
    }
    return DtwaResult(
        times=sched.times,
        tables=tables,
        collective=collective,
        block_counts=counts,
        block_coll1=np.stack([b["coll1"] for b in blocks]),
        block_coll2=np.stack([b["coll2"] for b in blocks]),
        dt=dt_max,
        n_steps=sum(k for k, _ in intervals),
        m_traj=m_traj,
        diagnostics=diagnostics,
    )
