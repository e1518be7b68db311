"""Brute-force state-vector and density-matrix engine for every model.

Basis convention: site ``i`` is bit ``i`` of the basis index (site 0 is the
least-significant bit), bit value 1 is spin up and ``s^z = 2 b - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import expm_multiply

from .moments import MomentTable
from .spinmodel import Kind, ModelSpec

MAX_PURE = 14
MAX_MIXED = 8
MAX_DENSE_BLOCK = 2048
NORM_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class PureState:
    n: int
    psi: np.ndarray

    def __post_init__(self):
        if not 1 <= self.n <= MAX_PURE:
            raise ValueError(f"pure states are limited to 1..{MAX_PURE} sites, got {self.n}")
        psi = np.asarray(self.psi, dtype=complex)
        if psi.shape != (2**self.n,):
            raise ValueError(f"expected {2**self.n} amplitudes, got {psi.shape}")
        if abs(np.vdot(psi, psi).real - 1) > NORM_TOL:
            raise ValueError("state vector is not normalized")
        object.__setattr__(self, "psi", psi)


@dataclass(frozen=True, eq=False)
class DensityState:
    n: int
    rho: np.ndarray

    def __post_init__(self):
        if not 1 <= self.n <= MAX_MIXED:
            raise ValueError(f"density matrices are limited to 1..{MAX_MIXED} sites, got {self.n}")
        d = 2**self.n
        rho = np.asarray(self.rho, dtype=complex)
        if rho.shape != (d, d):
            raise ValueError(f"expected a {d}x{d} density matrix, got {rho.shape}")
        if abs(np.trace(rho).real - 1) > 1e-9 or np.abs(rho - rho.conj().T).max() > 1e-9:
            raise ValueError("density matrix must be Hermitian with unit trace")
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_pure(cls, s: PureState) -> "DensityState":
        return cls(s.n, np.outer(s.psi, s.psi.conj()))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.rho)[0])


@lru_cache(maxsize=32)
def _bits(n: int) -> np.ndarray:
    idx = np.arange(2**n)
    b = (idx[:, None] >> np.arange(n)[None, :]) & 1
    b.setflags(write=False)
    return b


def sz_values(n: int) -> np.ndarray:
    """Eigenvalue of ``S_z`` on each basis state."""
    return _bits(n).sum(axis=1) - n / 2


def popcount(n: int) -> np.ndarray:
    return _bits(n).sum(axis=1)


def product_state(n: int, theta: float, phi: float) -> PureState:
    """Every spin along ``(sin t cos p, sin t sin p, cos t)``."""
    b = _bits(n)
    up = math.cos(theta / 2)
    dn = complex(math.sin(theta / 2)) * np.exp(1j * phi)
    amp = np.where(b == 1, up, dn).prod(axis=1)
    return PureState(n, amp / np.linalg.norm(amp))


def css_x(n: int) -> PureState:
    return PureState(n, np.full(2**n, 2.0 ** (-n / 2), dtype=complex))


def ghz_target(n: int, phase: float = 0.0) -> PureState:
    """``(|up...up> + e^{i phase} |down...down>) / sqrt 2``."""
    if n < 2:
        raise ValueError("GHZ target needs n >= 2")
    psi = np.zeros(2**n, dtype=complex)
    psi[-1] = 1 / math.sqrt(2)
    psi[0] = np.exp(1j * phase) / math.sqrt(2)
    return PureState(n, psi)


def fidelity(target: PureState, s: PureState | DensityState) -> float:
    """``|<target|psi>|^2`` or ``<target|rho|target>``."""
    if isinstance(s, PureState):
        return float(abs(np.vdot(target.psi, s.psi)) ** 2)
    return float(np.real(target.psi.conj() @ s.rho @ target.psi))


def _pair_couplings(m: ModelSpec) -> list[tuple[int, int, float]]:
    n = m.n
    if m.kind is Kind.OAT:
        return [(i, j, m.chi) for i in range(n) for j in range(i + 1, n)]
    jm = m.couplings.j
    return [(i, j, float(jm[i, j])) for i in range(n) for j in range(i + 1, n) if jm[i, j] != 0.0]


def hamiltonian(m: ModelSpec) -> sp.csr_matrix:
    """Sparse Hamiltonian of ``m`` in the computational basis.

    OAT: ``(chi/2) sum_{i<j} z_i z_j``; PL-Ising: ``(1/2) sum J z_i z_j``;
    PL-XX: ``sum J (s_i^+ s_j^- + h.c.)``; PL-TFI: ``sum J x_i x_j + B sum z_i``.
    """
    n = m.n
    if n > MAX_PURE:
        raise ValueError(f"exact diagonalization is limited to {MAX_PURE} sites")
    dim = 2**n
    z = 2 * _bits(n) - 1
    idx = np.arange(dim)
    pairs = _pair_couplings(m)
    if m.kind in (Kind.OAT, Kind.ISING):
        diag = np.zeros(dim)
        for i, j, jij in pairs:
            diag += 0.5 * jij * z[:, i] * z[:, j]
        return sp.diags(diag).tocsr()
    rows, cols, vals = [np.zeros(0, dtype=int)], [np.zeros(0, dtype=int)], [np.zeros(0)]
    for i, j, jij in pairs:
        flip = idx ^ ((1 << i) | (1 << j))
        if m.kind is Kind.XX:
            sel = z[:, i] != z[:, j]  # the flip-flop term only connects antiparallel pairs
            rows.append(idx[sel])
            cols.append(flip[sel])
            vals.append(np.full(sel.sum(), jij))
        else:
            rows.append(idx)
            cols.append(flip)
            vals.append(np.full(dim, jij))
    h = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim))
    if m.kind is Kind.TFI and m.b_field != 0:
        h = h + sp.diags(m.b_field * z.sum(axis=1).astype(float))
    return h.tocsr()


def _sector_labels(m: ModelSpec) -> np.ndarray:
    pc = popcount(m.n)
    return pc % 2 if m.kind is Kind.TFI else pc


@lru_cache(maxsize=16)
def _spectral_blocks(m: ModelSpec):
    """Per-sector eigendecompositions, or ``None`` for sectors too large to diagonalize."""
    h = hamiltonian(m)
    labels = _sector_labels(m)
    blocks = []
    for lab in np.unique(labels):
        sel = np.flatnonzero(labels == lab)
        if len(sel) > MAX_DENSE_BLOCK:
            blocks.append((sel, None, None))
            continue
        w, v = np.linalg.eigh(h[sel][:, sel].toarray())
        blocks.append((sel, w, v))
    return h, blocks


def evolve_unitary(s: PureState, m: ModelSpec, t: float) -> PureState:
    """Apply ``exp(-i H t)`` by block diagonalization over conserved sectors."""
    if m.gamma_z != 0:
        raise ValueError("evolve_unitary needs gamma_z = 0; use evolve_lindblad")
    if s.n != m.n:
        raise ValueError("state and model sizes differ")
    if t == 0:
        return s
    h, blocks = _spectral_blocks(m)
    out = np.zeros_like(s.psi)
    for sel, w, v in blocks:
        if w is None:
            sub = h[sel][:, sel]
            out[sel] = expm_multiply(-1j * t * sub, s.psi[sel])
        else:
            out[sel] = v @ (np.exp(-1j * w * t) * (v.conj().T @ s.psi[sel]))
    return PureState(s.n, out)


def energy(s: PureState | DensityState, m: ModelSpec) -> float:
    h = hamiltonian(m)
    if isinstance(s, PureState):
        return float(np.real(np.vdot(s.psi, h @ s.psi)))
    return float(np.real((h.multiply(s.rho.T)).sum()))


def evolve_lindblad(r: DensityState, m: ModelSpec, t: float, rtol: float = 1e-12, atol: float = 1e-14) -> DensityState:
    """Integrate ``d rho/dt = -i[H, rho] + gamma (S_z rho S_z - {S_z^2, rho}/2)``."""
    n = r.n
    if n > MAX_MIXED or m.n != n:
        raise ValueError(f"Lindblad evolution needs matching sizes up to {MAX_MIXED} sites")
    if t == 0:
        return r
    h = hamiltonian(m.unitary()).toarray()
    sz = sz_values(n)
    damp = 0.5 * m.gamma_z * np.subtract.outer(sz, sz) ** 2
    d = 2**n

    def rhs(_, y):
        rho = y.view(complex).reshape(d, d)
        out = -1j * (h @ rho - rho @ h) - damp * rho
        return out.reshape(-1).view(float)

    y0 = np.ascontiguousarray(r.rho).reshape(-1).view(float).copy()
    sol = solve_ivp(rhs, (0.0, t), y0, method="DOP853", rtol=rtol, atol=atol, t_eval=[t])
    if not sol.success:
        raise RuntimeError(f"Lindblad integration failed: {sol.message}")
    rho = sol.y[:, -1].copy().view(complex).reshape(d, d)
    rho = 0.5 * (rho + rho.conj().T)
    return DensityState(n, rho)


def rotating_frame(s: PureState, b: float, t: float) -> PureState:
    """Apply ``exp(+i b t sum_i s_i^z)``."""
    z = 2 * _bits(s.n).sum(axis=1) - s.n
    return PureState(s.n, s.psi * np.exp(1j * b * t * z))


def rotate_collective(s: PureState, angle: float, axis) -> PureState:
    """Apply ``exp(-i angle/2 sum_i n.sigma_i)`` site by site."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    nx, ny, nz = axis
    c, sn = math.cos(angle / 2), math.sin(angle / 2)
    # matrix in the (down, up) ordering of bit values 0, 1
    u = np.array([[c + 1j * sn * nz, -1j * sn * (nx + 1j * ny)], [-1j * sn * (nx - 1j * ny), c - 1j * sn * nz]])
    psi = s.psi.reshape((2,) * s.n)
    for i in range(s.n):
        ax = s.n - 1 - i  # bit i is the i-th axis from the right in C order
        psi = np.moveaxis(np.tensordot(u, psi, axes=([1], [ax])), 0, ax)
    return PureState(s.n, psi.reshape(-1))


def _apply_paulis(n: int, vecs: np.ndarray) -> np.ndarray:
    """Return ``out[i, a] = sigma_i^a @ vecs`` for a stack of column vectors."""
    z = (2 * _bits(n) - 1).astype(float)
    idx = np.arange(2**n)
    out = np.empty((n, 3) + vecs.shape, dtype=complex)
    for i in range(n):
        flipped = vecs[idx ^ (1 << i)]
        zi = z[:, i].reshape((-1,) + (1,) * (vecs.ndim - 1))
        out[i, 0] = flipped
        out[i, 1] = -1j * zi * flipped  # sigma^y = i sigma^x sigma^z
        out[i, 2] = zi * vecs
    return out


def measure_moments(s: PureState | DensityState) -> MomentTable:
    """Every ``<s_i^a>`` and symmetrized ``<s_i^a s_j^b>`` of an exact state."""
    n = s.n
    if isinstance(s, PureState):
        w = s.psi[:, None]
    else:
        p, u = np.linalg.eigh(s.rho)
        keep = p > 1e-15
        w = u[:, keep] * np.sqrt(p[keep])
    v = _apply_paulis(n, w).reshape(3 * n, -1)
    wf = w.reshape(-1)
    first = np.real(v @ wf.conj()).reshape(n, 3)
    second = np.real(v.conj() @ v.T).reshape(n, 3, n, 3)
    return MomentTable(first, second)


def magnetization_probabilities(s: PureState | DensityState) -> np.ndarray:
    """``p[k]`` for ``k`` up spins, ``k = 0..n``."""
    pc = popcount(s.n)
    w = np.abs(s.psi) ** 2 if isinstance(s, PureState) else np.real(np.diag(s.rho))
    return np.bincount(pc, weights=w, minlength=s.n + 1)


def symmetric_weights(s: PureState | DensityState) -> np.ndarray:
    """Sum of amplitudes (or density entries) over each up-spin count.

    The overlap of a pure state with a product coherent state depends on the
    state only through these sums.
    """
    pc = popcount(s.n)
    if isinstance(s, PureState):
        return np.bincount(pc, weights=s.psi.real, minlength=s.n + 1) + 1j * np.bincount(
            pc, weights=s.psi.imag, minlength=s.n + 1
        )
    proj = sp.csr_matrix((np.ones(2**s.n), (pc, np.arange(2**s.n))), shape=(s.n + 1, 2**s.n))
    return proj @ (proj @ s.rho.T).T
