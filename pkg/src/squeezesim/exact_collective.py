"""Exact propagation in the symmetric (Dicke) manifold and closed-form Ising moments.

Dicke states are indexed by ``k = m + n/2``, the number of up spins, so
index 0 is ``|down...down>`` and index ``n`` is ``|up...up>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .moments import CollectiveMoments, MomentTable
from .spinmodel import CouplingMatrix, Kind

NORM_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DickeState:
    """A pure (``amps``) or mixed (``rho``) state of the symmetric manifold."""

    n: int
    amps: np.ndarray | None = None
    rho: np.ndarray | None = None

    def __post_init__(self):
        if (self.amps is None) == (self.rho is None):
            raise ValueError("give exactly one of amps or rho")
        d = self.n + 1
        if self.amps is not None:
            amps = np.asarray(self.amps, dtype=complex)
            if amps.shape != (d,):
                raise ValueError(f"expected {d} amplitudes, got {amps.shape}")
            if abs(np.vdot(amps, amps).real - 1) > NORM_TOL:
                raise ValueError("Dicke amplitudes are not normalized")
            object.__setattr__(self, "amps", amps)
        else:
            rho = np.asarray(self.rho, dtype=complex)
            if rho.shape != (d, d):
                raise ValueError(f"expected a {d}x{d} density matrix, got {rho.shape}")
            if abs(np.trace(rho).real - 1) > NORM_TOL or np.abs(rho - rho.conj().T).max() > NORM_TOL:
                raise ValueError("Dicke density matrix must be Hermitian with unit trace")
            object.__setattr__(self, "rho", rho)

    @property
    def is_pure(self) -> bool:
        return self.amps is not None

    @property
    def m_values(self) -> np.ndarray:
        return np.arange(self.n + 1) - self.n / 2

    def density(self) -> np.ndarray:
        if self.rho is not None:
            return self.rho
        return np.outer(self.amps, self.amps.conj())

    def probabilities(self) -> np.ndarray:
        if self.amps is not None:
            return np.abs(self.amps) ** 2
        return np.real(np.diag(self.rho)).copy()

    def as_mixed(self) -> "DickeState":
        return self if self.rho is not None else DickeState(self.n, rho=self.density())


def log_binomial(n: int) -> np.ndarray:
    k = np.arange(n + 1)
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def css_dicke(n: int) -> DickeState:
    """Coherent spin state along +x."""
    if n < 1:
        raise ValueError("n must be at least 1")
    amps = np.exp(0.5 * log_binomial(n) - 0.5 * n * math.log(2.0))
    return DickeState(n, amps.astype(complex) / np.linalg.norm(amps))


def dicke_coherent(n: int, theta: float, phi: float) -> DickeState:
    """Coherent state with every spin along ``(sin t cos p, sin t sin p, cos t)``."""
    k = np.arange(n + 1)
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        # zero powers of a vanishing factor contribute 1, not 0 * log 0
        lc = np.where(k > 0, k * np.log(abs(c)), 0.0)
        ls = np.where(k < n, (n - k) * np.log(abs(s)), 0.0)
    logmag = 0.5 * log_binomial(n) + lc + ls
    amps = np.exp(logmag) * np.sign(c) ** k * (np.sign(s) * np.exp(1j * phi)) ** (n - k)
    return DickeState(n, amps / np.linalg.norm(amps))


def evolve_oat(s: DickeState, chi: float, t: float) -> DickeState:
    """Apply ``exp(-i chi t S_z^2)``."""
    phase = np.exp(-1j * chi * t * s.m_values**2)
    if s.is_pure:
        return DickeState(s.n, s.amps * phase)
    return DickeState(s.n, rho=phase[:, None] * s.rho * phase.conj()[None, :])


def dephase_dicke(s: DickeState, gamma_z: float, t: float) -> DickeState:
    """Collective dephasing: ``rho[m, m'] *= exp(-gamma t (m - m')^2 / 2)``."""
    if gamma_z * t < 0:
        raise ValueError("gamma_z * t must be non-negative")
    m = s.m_values
    factor = np.exp(-0.5 * gamma_z * t * np.subtract.outer(m, m) ** 2)
    return DickeState(s.n, rho=s.density() * factor)


@lru_cache(maxsize=64)
def spin_matrices(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense ``S_x, S_y, S_z`` on the ``(n+1)``-dimensional manifold."""
    S = n / 2
    m = np.arange(n + 1) - S
    up = np.sqrt(np.maximum(S * (S + 1) - m[:-1] * (m[:-1] + 1), 0.0))
    splus = np.diag(up, -1).astype(complex)  # <m+1|S+|m> sits below the diagonal
    sx = 0.5 * (splus + splus.conj().T)
    sy = -0.5j * (splus - splus.conj().T)
    sz = np.diag(m).astype(complex)
    for a in (sx, sy, sz):
        a.setflags(write=False)
    return sx, sy, sz


def dicke_moments(s: DickeState) -> CollectiveMoments:
    ops = spin_matrices(s.n)
    if s.is_pure:
        v = np.stack([a @ s.amps for a in ops])
        mean = np.real(v @ s.amps.conj())
        second = np.real(v.conj() @ v.T)
        return CollectiveMoments(s.n, mean, second)
    rho = s.rho
    mean = np.array([np.real(np.trace(rho @ a)) for a in ops])
    second = np.array([[np.real(np.trace(rho @ a @ b)) for b in ops] for a in ops])
    return CollectiveMoments(s.n, mean, second)


def rotate_dicke(s: DickeState, angle: float, axis) -> DickeState:
    """Rotate by ``angle`` about the unit vector ``axis`` (``exp(-i angle n.S)``)."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    gen = sum(c * a for c, a in zip(axis, spin_matrices(s.n)))
    w, v = np.linalg.eigh(gen)
    u = (v * np.exp(-1j * angle * w)) @ v.conj().T
    if s.is_pure:
        return DickeState(s.n, u @ s.amps)
    return DickeState(s.n, rho=u @ s.rho @ u.conj().T)


def decay_replacements(
    m: CollectiveMoments, gamma_z: float, t: float, kind: Kind | str | None = None
) -> CollectiveMoments:
    """Map unitary collective moments to their collectively dephased values.

    Valid when the Hamiltonian commutes with ``S_z``. Ladder components of
    charge ``q`` decay as ``exp(-gamma q^2 t / 2)``.
    """
    if kind is not None and Kind.parse(kind) is Kind.TFI:
        raise ValueError("decay replacements need a Hamiltonian commuting with S_z; PL-TFI does not")
    if gamma_z < 0 or t < 0:
        raise ValueError("gamma_z and t must be non-negative")
    d1 = math.exp(-0.5 * gamma_z * t)
    d2 = math.exp(-2.0 * gamma_z * t)
    mean = m.mean.copy()
    mean[:2] *= d1
    s = m.second.copy()
    s[0, 2] *= d1
    s[2, 0] *= d1
    s[1, 2] *= d1
    s[2, 1] *= d1
    plus, minus = 0.5 * (s[0, 0] + s[1, 1]), 0.5 * (s[0, 0] - s[1, 1]) * d2
    s[0, 0], s[1, 1] = plus + minus, plus - minus
    s[0, 1] *= d2
    s[1, 0] *= d2
    return CollectiveMoments(m.n, mean, s)


def decay_replacements_table(table: MomentTable, gamma_z: float, t: float) -> MomentTable:
    """Site-resolved version of :func:`decay_replacements` (same-site blocks untouched)."""
    d1 = math.exp(-0.5 * gamma_z * t)
    d2 = math.exp(-2.0 * gamma_z * t)
    first = table.first.copy()
    first[:, :2] *= d1
    s = table.second.copy()
    n = table.n
    off = ~np.eye(n, dtype=bool)
    for a in (0, 1):
        s[:, a, :, 2][off] *= d1
        s[:, 2, :, a][off] *= d1
    xx, yy = s[:, 0, :, 0], s[:, 1, :, 1]
    xy, yx = s[:, 0, :, 1], s[:, 1, :, 0]
    p, dm = 0.5 * (xx + yy), 0.5 * (xx - yy)
    a_, c_ = 0.5 * (xy - yx), 0.5 * (xy + yx)
    dm = np.where(off, dm * d2, dm)
    c_ = np.where(off, c_ * d2, c_)
    s[:, 0, :, 0], s[:, 1, :, 1] = p + dm, p - dm
    s[:, 0, :, 1], s[:, 1, :, 0] = c_ + a_, c_ - a_
    return MomentTable(first, s)


def ising_correlators(c: CouplingMatrix, t: float) -> MomentTable:
    """All one- and two-site Pauli moments after Ising evolution of the +x CSS.

    With ``th[i, k] = J[i, k] t`` and products over the remaining sites:
    ``<x_i> = prod_k cos th_ik``,
    ``<x_i x_j> = (P+ + P-)/2`` and ``<y_i y_j> = (P- - P+)/2`` with
    ``P+- = prod_k cos(th_ik +- th_jk)``,
    ``<y_i z_j> = sin th_ij prod_{k != i,j} cos th_ik``.
    Everything else vanishes.
    """
    n = c.n
    th = c.j * t
    cos = np.cos(th)
    sin = np.sin(th)
    first = np.zeros((n, 3))
    second = np.zeros((n, 3, n, 3))
    idx = np.arange(n)
    for i in range(n):
        first[i, 0] = np.prod(np.delete(cos[i], i))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            rest = (idx != i) & (idx != j)
            pp = np.prod(np.cos(th[i, rest] + th[j, rest]))
            pm = np.prod(np.cos(th[i, rest] - th[j, rest]))
            second[i, 0, j, 0] = 0.5 * (pp + pm)
            second[i, 1, j, 1] = 0.5 * (pm - pp)
            yz = sin[i, j] * np.prod(cos[i, rest])
            second[i, 1, j, 2] = yz
            second[j, 2, i, 1] = yz
    second[idx, :, idx, :] = np.eye(3)
    return MomentTable(first, second)


def cat_time(q: int, jbar: float) -> float:
    """Time ``pi / (q jbar)`` at which a ``q``-headed cat forms."""
    if q < 2 or int(q) != q:
        raise ValueError("q must be an integer >= 2")
    if not jbar > 0:
        raise ValueError("jbar must be positive")
    return math.pi / (q * jbar)
