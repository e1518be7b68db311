"""Metrological observables computed from moment tables and exact states."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from scipy import ndimage
from scipy.optimize import minimize, minimize_scalar

from . import ed_oracle as ed
from .exact_collective import DickeState, dicke_moments, log_binomial, rotate_dicke
from .moments import CollectiveMoments, MomentTable

ExactState = Union[DickeState, ed.PureState, ed.DensityState]


def collective_moments(obj) -> CollectiveMoments:
    if isinstance(obj, CollectiveMoments):
        return obj
    if isinstance(obj, MomentTable):
        return obj.collective()
    if isinstance(obj, DickeState):
        return dicke_moments(obj)
    if isinstance(obj, (ed.PureState, ed.DensityState)):
        return ed.measure_moments(obj).collective()
    raise TypeError(f"cannot extract collective moments from {type(obj).__name__}")


# --- squeezing and total spin -------------------------------------------------


@dataclass(frozen=True)
class Squeezing:
    xi2: float
    db: float
    axis: np.ndarray
    bloch: np.ndarray


def transverse_basis(b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal pair spanning the plane perpendicular to ``b``.

    The first vector is the projection of +z onto that plane, so it has the
    smallest polar angle among in-plane directions.
    """
    u = b / np.linalg.norm(b)
    ref = np.array([0.0, 0.0, 1.0])
    e1 = ref - u * (u @ ref)
    if np.linalg.norm(e1) < 1e-12:
        ref = np.array([1.0, 0.0, 0.0])
        e1 = ref - u * (u @ ref)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(u, e1)


def squeezing_wineland(obj) -> Squeezing:
    """``xi^2 = N min Var(S_perp) / |<S>|^2`` from the closed-form 2x2 eigenproblem."""
    m = collective_moments(obj)
    b = m.mean
    nb = float(np.linalg.norm(b))
    if nb == 0:
        raise ValueError("Bloch vector vanishes; squeezing parameter undefined")
    e1, e2 = transverse_basis(b)
    cov = m.covariance
    a, c, off = e1 @ cov @ e1, e2 @ cov @ e2, e1 @ cov @ e2
    half, mid = 0.5 * (a - c), 0.5 * (a + c)
    r = math.hypot(half, off)
    lam = mid - r
    if r <= 1e-14 * max(abs(mid), 1.0):
        axis = e1
    else:
        ang = 0.5 * math.atan2(2 * off, a - c) + 0.5 * math.pi
        axis = math.cos(ang) * e1 + math.sin(ang) * e2
    if axis[2] < 0 or (axis[2] == 0 and axis[np.flatnonzero(axis)[0]] < 0):
        axis = -axis
    xi2 = m.n * lam / nb**2
    return Squeezing(float(xi2), 10 * math.log10(xi2) if xi2 > 0 else -math.inf, axis, b.copy())


def total_spin(obj) -> tuple[float, float]:
    """``<S^2>`` and its ratio to ``S(S+1)`` with ``S = N/2``."""
    m = collective_moments(obj)
    s2 = m.s_squared()
    S = m.n / 2
    return s2, s2 / (S * (S + 1))


# --- spin waves ---------------------------------------------------------------


@dataclass(frozen=True)
class KGrid:
    n: int

    @property
    def m(self) -> np.ndarray:
        return np.arange(-((self.n - 1) // 2), self.n // 2 + 1)

    @property
    def k(self) -> np.ndarray:
        return 2 * np.pi * self.m / self.n


@dataclass(frozen=True)
class SpinWaves:
    k: np.ndarray
    occupation: np.ndarray
    k0: float
    nonzero_sum: float
    mean_sx: float


def spin_wave_occupations(t: MomentTable, positions: Sequence[float] | None = None, g: KGrid | None = None) -> SpinWaves:
    """``C_k = 1/2 - sum_i <x_i>/(2N) + sum_{i<j} <y_i y_j + z_i z_j> cos(k r_ij) / (2N)``."""
    n = t.n
    g = g or KGrid(n)
    r = np.arange(n, dtype=float) if positions is None else np.asarray(positions, dtype=float)
    iu, ju = np.triu_indices(n, 1)
    pair = t.pair("y", "y")[iu, ju] + t.pair("z", "z")[iu, ju]
    k = g.k
    kern = np.cos(np.outer(k, r[iu] - r[ju]))
    base = 0.5 - t.first[:, 0].sum() / (2 * n)
    occ = base + kern @ pair / (2 * n)
    zero = int(np.flatnonzero(g.m == 0)[0])
    return SpinWaves(k, occ, float(occ[zero]), float(occ.sum() - occ[zero]), float(t.first[:, 0].mean()))


# --- Husimi Q -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QGrid:
    """Gauss-Legendre nodes in ``cos(theta)`` times a uniform azimuth grid."""

    n_theta: int = 64
    n_phi: int = 128
    values: np.ndarray | None = None
    n_spins: int | None = None

    @property
    def theta(self) -> np.ndarray:
        x, _ = np.polynomial.legendre.leggauss(self.n_theta)
        return np.arccos(x[::-1])

    @property
    def theta_weights(self) -> np.ndarray:
        _, w = np.polynomial.legendre.leggauss(self.n_theta)
        return w[::-1]

    @property
    def phi(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_phi) / self.n_phi

    def normalization(self) -> float:
        if self.values is None:
            raise ValueError("grid has no values")
        integral = (self.theta_weights @ self.values).sum() * (2 * np.pi / self.n_phi)
        return float((self.n_spins + 1) / (4 * np.pi) * integral)

    def triples(self) -> np.ndarray:
        th, ph = np.meshgrid(self.theta, self.phi, indexing="ij")
        return np.column_stack([th.ravel(), ph.ravel(), self.values.ravel()])


def _symmetric_weights(state: ExactState) -> tuple[int, np.ndarray, bool]:
    """Return ``(n, w, pure)`` where CSS overlaps are ``sum_k conj(c_k) w_k``."""
    if isinstance(state, DickeState):
        sq = np.exp(0.5 * log_binomial(state.n))
        if state.is_pure:
            return state.n, sq * state.amps, True
        return state.n, sq[:, None] * state.rho * sq[None, :], False
    if isinstance(state, ed.PureState):
        return state.n, ed.symmetric_weights(state), True
    if isinstance(state, ed.DensityState):
        return state.n, ed.symmetric_weights(state), False
    raise TypeError(
        f"Husimi and cat diagnostics need an exact state, got {type(state).__name__}; "
        "trajectory data cannot represent non-Gaussian features"
    )


def _css_components(n: int, theta, phi) -> np.ndarray:
    """``c[..., k] = cos(theta/2)^k (e^{i phi} sin(theta/2))^(n-k)``."""
    theta = np.asarray(theta, dtype=float)[..., None]
    phi = np.asarray(phi, dtype=float)[..., None]
    k = np.arange(n + 1)
    return np.cos(theta / 2) ** k * (np.exp(1j * phi) * np.sin(theta / 2)) ** (n - k)


def _css_expectation(n: int, w: np.ndarray, pure: bool, ca: np.ndarray, cb: np.ndarray | None = None) -> np.ndarray:
    """``<a|psi><psi|b>`` (or ``<a|rho|b>``) for CSS component arrays ``ca``, ``cb``."""
    cb = ca if cb is None else cb
    if pure:
        oa = ca.conj() @ w
        ob = cb.conj() @ w
        return oa * ob.conj()
    return np.einsum("...k,kl,...l->...", ca.conj(), w, cb)


def husimi_q(state: ExactState, g: QGrid | None = None) -> QGrid:
    """``Q(theta, phi) = <n|rho|n>`` for the coherent state ``|n>`` along ``(theta, phi)``."""
    g = g or QGrid()
    n, w, pure = _symmetric_weights(state)
    th, ph = np.meshgrid(g.theta, g.phi, indexing="ij")
    c = _css_components(n, th, ph)
    q = np.real(_css_expectation(n, w, pure, c))
    return QGrid(g.n_theta, g.n_phi, np.clip(q, 0.0, None), n)


def equatorial_peaks(q: QGrid, rel_threshold: float = 0.5, band: float = math.pi / 4) -> list[float]:
    """Azimuths of the high-Q patches whose centroids sit near the equator.

    Patches are connected regions above ``rel_threshold * max Q``, joined
    periodically in phi.
    """
    v = q.values
    mask = v >= rel_threshold * v.max()
    lab, count = ndimage.label(mask)
    # merge labels that touch across phi = 0
    parent = list(range(count + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in zip(lab[:, 0], lab[:, -1]):
        if a and b:
            parent[find(a)] = find(b)
    groups: dict[int, list[int]] = {}
    for a in range(1, count + 1):
        groups.setdefault(find(a), []).append(a)
    theta, phi = q.theta, q.phi
    peaks = []
    for members in groups.values():
        sel = np.isin(lab, members)
        wts = v[sel]
        ti, pj = np.nonzero(sel)
        th_c = float((theta[ti] * wts).sum() / wts.sum())
        ph_c = float(np.angle((np.exp(1j * phi[pj]) * wts).sum()) % (2 * np.pi))
        if ph_c > 2 * np.pi - 1e-9:
            ph_c = 0.0
        if abs(th_c - math.pi / 2) <= band:
            peaks.append(ph_c)
    return sorted(peaks)


def magnetization_histogram(state: ExactState) -> np.ndarray:
    """``p[k]`` for ``m_z = k - N/2``."""
    if isinstance(state, DickeState):
        p = state.probabilities()
    elif isinstance(state, (ed.PureState, ed.DensityState)):
        p = ed.magnetization_probabilities(state)
    else:
        raise TypeError(f"magnetization histogram needs an exact state, got {type(state).__name__}")
    return np.asarray(p, dtype=float)


# --- cats, parity and GHZ fidelity ----------------------------------------------


def rotate_state(state: ExactState, angle: float, axis) -> ExactState:
    """Collective rotation ``exp(-i angle n.S)``."""
    if isinstance(state, DickeState):
        return rotate_dicke(state, angle, axis)
    if isinstance(state, ed.PureState):
        return ed.rotate_collective(state, angle, axis)
    if isinstance(state, ed.DensityState):
        # columns of rho transform like kets
        n = state.n
        basis = np.eye(2**n, dtype=complex)
        u = np.column_stack([ed.rotate_collective(ed.PureState(n, col), angle, axis).psi for col in basis])
        return ed.DensityState(n, u @ state.rho @ u.conj().T)
    raise TypeError(f"cannot rotate {type(state).__name__}")


def pulse(state: ExactState, theta: float, phi: float) -> ExactState:
    """``R(theta, phi) = exp(-i theta (cos phi S_x + sin phi S_y))``."""
    return rotate_state(state, theta, (math.cos(phi), math.sin(phi), 0.0))


def parity(state: ExactState) -> float:
    p = magnetization_histogram(state)
    return float(p[0::2].sum() - p[1::2].sum())


def align_cat(state: ExactState, n_scan: int = 360) -> tuple[ExactState, float]:
    """Apply ``R(pi/2, phi1)`` with ``phi1`` maximizing ``p(N/2) + p(-N/2)``."""

    def poles(phi1):
        p = magnetization_histogram(pulse(state, math.pi / 2, phi1))
        return p[0] + p[-1]

    grid = np.linspace(0, 2 * np.pi, n_scan, endpoint=False)
    vals = [poles(p) for p in grid]
    i = int(np.argmax(vals))
    h = grid[1] - grid[0]
    res = minimize_scalar(lambda x: -poles(x), bounds=(grid[i] - h, grid[i] + h), method="bounded", options={"xatol": 1e-10})
    phi1 = float(res.x % (2 * np.pi))
    return pulse(state, math.pi / 2, phi1), phi1


@dataclass(frozen=True)
class ParityScan:
    phases: np.ndarray
    parity: np.ndarray
    contrast: float
    phase: float
    offset: float
    resolved: bool


def parity_scan(state: ExactState, phases: Sequence[float] | None = None, noise_floor: float = 1e-9) -> ParityScan:
    """Parity after ``R(pi/2, phi)`` for each phase, with a sinusoid of period ``2 pi / N`` fitted."""
    n = _state_size(state)
    phases = np.linspace(0, 2 * np.pi, 8 * n, endpoint=False) if phases is None else np.asarray(phases, dtype=float)
    par = np.array([parity(pulse(state, math.pi / 2, p)) for p in phases])
    design = np.column_stack([np.cos(n * phases), np.sin(n * phases), np.ones_like(phases)])
    if np.linalg.matrix_rank(design) < 3:
        raise ValueError("too few distinct phases to fit the parity oscillation")
    (a, b, c0), *_ = np.linalg.lstsq(design, par, rcond=None)
    amp = math.hypot(a, b)
    return ParityScan(phases, par, amp, math.atan2(-b, a), float(c0), amp > noise_floor)


@dataclass(frozen=True)
class GhzFidelity:
    fidelity: float
    witness: bool


def ghz_fidelity(p_top: float, p_bottom: float, c: float) -> GhzFidelity:
    """``F = (p(N/2) + p(-N/2) + C) / 2``; the witness flag certifies ``F > 1/2``."""
    for v in (p_top, p_bottom, c):
        if not -1e-12 <= v <= 1 + 1e-12:
            raise ValueError("probabilities and contrast must lie in [0, 1]")
    f = 0.5 * (p_top + p_bottom + c)
    return GhzFidelity(f, f > 0.5)


def measured_ghz_fidelity(state: ExactState, phases: Sequence[float] | None = None) -> tuple[GhzFidelity, ParityScan, float]:
    """Fidelity from aligned populations and parity contrast, as done on hardware."""
    aligned, phi1 = align_cat(state)
    p = magnetization_histogram(aligned)
    scan = parity_scan(aligned, phases)
    return ghz_fidelity(float(p[-1]), float(p[0]), min(scan.contrast, 1.0)), scan, phi1


def _state_size(state) -> int:
    if isinstance(state, (DickeState, ed.PureState, ed.DensityState)):
        return state.n
    raise TypeError(f"expected an exact state, got {type(state).__name__}")


def cat_ghz_fidelity(state: ExactState) -> tuple[float, tuple[float, float]]:
    """Overlap with the closest GHZ state ``(|n>^N + e^{ib}|-n>^N)/sqrt 2``.

    Maximizes over the cat axis ``n`` and relative phase ``b``. Returns the
    fidelity and the axis angles ``(theta, phi)``.
    """
    n, w, pure = _symmetric_weights(state)

    def fid(x):
        th, ph = x
        ca = _css_components(n, th, ph)
        cb = _css_components(n, math.pi - th, ph + math.pi)
        aa = np.real(_css_expectation(n, w, pure, ca))
        bb = np.real(_css_expectation(n, w, pure, cb))
        ab = abs(_css_expectation(n, w, pure, ca, cb))
        return 0.5 * (aa + bb) + ab

    grid = np.linspace(0, np.pi, 720, endpoint=False)
    vals = [fid((math.pi / 2, p)) for p in grid]
    start = (math.pi / 2, grid[int(np.argmax(vals))])
    res = minimize(lambda x: -fid(x), start, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14})
    best = max((float(-res.fun), tuple(res.x)), (float(max(vals)), start))
    return best[0], (float(best[1][0]), float(best[1][1] % (2 * np.pi)))


# --- Ramsey ---------------------------------------------------------------------


@dataclass(frozen=True)
class RamseyResult:
    phis: np.ndarray
    mse: np.ndarray
    coeffs: np.ndarray
    spin_length: float
    gain_db: float
    gain_vs_sql_db: float


def ramsey_mse(obj, phis: Sequence[float]) -> RamseyResult:
    """Phase-estimation error ``phi^2 - 2 phi <S_y>/|S| + <S_y^2>/|S|^2`` on a grid.

    The state is first oriented with its Bloch vector on +x and its
    low-noise quadrature on +y, then rotated by ``phi`` about z. ``|S|`` comes
    from a least-squares fit of the fringe ``<S_y>(phi) = |S| sin phi``. The
    curve is fitted linearly to ``phi^2 + a1 phi sin + a2 sin^2 + a3 cos^2``.
    """
    m = collective_moments(obj)
    phis = np.asarray(phis, dtype=float)
    sq = squeezing_wineland(m)
    u = sq.bloch / np.linalg.norm(sq.bloch)
    v = sq.axis - u * (u @ sq.axis)
    v /= np.linalg.norm(v)
    rot = np.stack([u, v, np.cross(u, v)])
    al = m.rotated(rot)
    e = np.column_stack([np.sin(phis), np.cos(phis), np.zeros_like(phis)])
    sy = e @ al.mean
    sy2 = np.einsum("pa,ab,pb->p", e, al.second, e)
    sinp = np.sin(phis)
    denom = sinp @ sinp
    length = float(sinp @ sy / denom) if denom > 0 else float(np.linalg.norm(m.mean))
    mse = phis**2 - 2 * phis * sy / length + sy2 / length**2
    design = np.column_stack([phis * sinp, sinp**2, np.cos(phis) ** 2])
    if np.linalg.matrix_rank(design) < 3:
        raise ValueError("need at least three distinct, non-degenerate phases to fit the MSE model")
    coeffs, *_ = np.linalg.lstsq(design, mse - phis**2, rcond=None)
    a3 = coeffs[2]
    return RamseyResult(phis, mse, coeffs, length, 10 * math.log10(a3), 10 * math.log10(a3 * m.n))


# --- errors ---------------------------------------------------------------------


def jackknife_error(samples, statistic: Callable = np.mean) -> float:
    """Leave-one-out jackknife standard error of ``statistic`` over the first axis."""
    x = np.asarray(samples)
    k = x.shape[0] if x.ndim else 0
    if k < 3:
        raise ValueError("jackknife needs at least three samples")
    loo = np.array([statistic(np.delete(x, i, axis=0)) for i in range(k)], dtype=float)
    return float(math.sqrt((k - 1) / k * ((loo - loo.mean(axis=0)) ** 2).sum()))


def jackknife_blocks(blocks: Sequence, weights: Sequence[float], statistic: Callable) -> float:
    """Jackknife over blocks of partial means, weighting each by its trajectory count."""
    w = np.asarray(weights, dtype=float)
    k = len(blocks)
    if k < 3:
        raise ValueError("jackknife needs at least three blocks")
    vals = []
    for i in range(k):
        keep = [j for j in range(k) if j != i]
        vals.append(statistic([blocks[j] for j in keep], w[keep] / w[keep].sum()))
    vals = np.asarray(vals)
    return float(math.sqrt((k - 1) / k * ((vals - vals.mean()) ** 2).sum()))


def xi2_db_jackknife(block_moments: Sequence[CollectiveMoments], weights: Sequence[float]) -> float:
    """Jackknife error of the squeezing in dB from per-block collective moments."""

    def stat(blocks, w):
        n = blocks[0].n
        mean = sum(wi * b.mean for wi, b in zip(w, blocks))
        second = sum(wi * b.second for wi, b in zip(w, blocks))
        return squeezing_wineland(CollectiveMoments(n, mean, second)).db

    return jackknife_blocks(block_moments, weights, stat)
