"""Coupling matrices, model specifications and time schedules.

Units are fixed throughout the package: couplings and fields in rad/s,
times in seconds, rates in 1/s.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

ASYMMETRY_WARN_REL = 1e-9


class Kind(str, enum.Enum):
    OAT = "OAT"
    ISING = "PL-Ising"
    XX = "PL-XX"
    TFI = "PL-TFI"

    @classmethod
    def parse(cls, value: "str | Kind") -> "Kind":
        if isinstance(value, cls):
            return value
        for k in cls:
            if value.lower() in (k.value.lower(), k.name.lower()):
                return k
        raise ValueError(f"unknown model kind {value!r}")


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    """Symmetric interaction strengths ``j[i, k]`` in rad/s and site positions."""

    j: np.ndarray
    positions: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        j = np.array(self.j, dtype=float)
        if j.ndim != 2 or j.shape[0] != j.shape[1]:
            raise ValueError(f"coupling matrix must be square, got shape {j.shape}")
        n = j.shape[0]
        if not np.all(np.isfinite(j)):
            raise ValueError("coupling matrix has non-finite entries")
        if not np.array_equal(j, j.T):
            raise ValueError("coupling matrix must be symmetric")
        if np.any(np.diag(j) != 0.0):
            raise ValueError("coupling matrix diagonal must be zero")
        pos = np.arange(n, dtype=float) if self.positions is None else np.array(self.positions, dtype=float)
        if pos.shape != (n,):
            raise ValueError(f"expected {n} positions, got {pos.shape}")
        if not np.all(np.isfinite(pos)) or np.any(np.diff(pos) <= 0):
            raise ValueError("positions must be finite and strictly increasing")
        j.setflags(write=False)
        pos.setflags(write=False)
        object.__setattr__(self, "j", j)
        object.__setattr__(self, "positions", pos)

    @property
    def n(self) -> int:
        return self.j.shape[0]

    def max_row_sum(self) -> float:
        return float(np.abs(self.j).sum(axis=1).max())

    def __eq__(self, other):
        if not isinstance(other, CouplingMatrix):
            return NotImplemented
        return np.array_equal(self.j, other.j) and np.array_equal(self.positions, other.positions)

    def __hash__(self):
        return hash((self.j.tobytes(), self.positions.tobytes()))


def power_law_couplings(n: int, j0: float, alpha: float) -> CouplingMatrix:
    """``j[i, k] = j0 * |i - k|**(-alpha)`` on lattice sites ``0..n-1``.

    ``alpha = 0`` is accepted and gives uniform all-to-all couplings.
    """
    if int(n) != n or n < 2:
        raise ValueError(f"need at least two sites, got n={n}")
    if not (math.isfinite(j0) and math.isfinite(alpha)):
        raise ValueError("j0 and alpha must be finite")
    if j0 <= 0:
        raise ValueError("j0 must be positive")
    if not 0 <= alpha < 3:
        raise ValueError("alpha must lie in [0, 3)")
    n = int(n)
    dist = np.abs(np.subtract.outer(np.arange(n), np.arange(n))).astype(float)
    off = dist > 0
    j = np.zeros((n, n))
    j[off] = j0 * np.exp(-alpha * np.log(dist[off]))
    # exp/log keeps j[i,k] == j[k,i] bit-exactly
    return CouplingMatrix(j)


def mean_coupling(c: CouplingMatrix) -> float:
    """Average pair coupling, ``sum_{i<j} J_ij / (n(n-1)/2)``."""
    iu = np.triu_indices(c.n, 1)
    return 2.0 * math.fsum(c.j[iu]) / (c.n * (c.n - 1))


def load_couplings(path: str | Path) -> CouplingMatrix:
    """Read an N x N coupling CSV, optionally preceded by ``# positions: ...``.

    The matrix is symmetrized as ``(J + J.T) / 2`` and its diagonal set to zero.
    A warning is logged when the relative asymmetry exceeds 1e-9.
    """
    text = Path(path).read_text()
    positions = None
    rows: list[list[float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.lower().startswith("positions:"):
                positions = _parse_row(body.split(":", 1)[1], lineno)
            continue
        rows.append(_parse_row(line, lineno))
    if not rows:
        raise ValueError(f"{path}: no coupling rows found")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{path}: ragged rows")
    j = np.array(rows, dtype=float)
    if j.shape[0] != j.shape[1]:
        raise ValueError(f"{path}: non-square coupling matrix {j.shape[0]}x{j.shape[1]}")
    if not np.all(np.isfinite(j)):
        raise ValueError(f"{path}: non-finite entry")
    scale = np.abs(j).max()
    asym = np.abs(j - j.T).max()
    if scale > 0 and asym > ASYMMETRY_WARN_REL * scale:
        log.warning("%s: coupling matrix asymmetric (max |J-J^T| = %.3g, relative %.3g)", path, asym, asym / scale)
    sym = 0.5 * (j + j.T)
    np.fill_diagonal(sym, 0.0)
    return CouplingMatrix(sym, positions)


def save_couplings(c: CouplingMatrix, path: str | Path) -> None:
    """Write ``c`` so that :func:`load_couplings` round-trips it bit-exactly."""
    lines = ["# positions: " + ",".join(repr(float(p)) for p in c.positions)]
    lines += [",".join(repr(float(v)) for v in row) for row in c.j]
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_row(line: str, lineno: int) -> list[float]:
    try:
        return [float(tok) for tok in line.split(",")]
    except ValueError:
        raise ValueError(f"malformed CSV on line {lineno}: {line!r}") from None


@dataclass(frozen=True)
class ModelSpec:
    """Which Hamiltonian to evolve, and with what parameters.

    ``couplings`` is required for the power-law kinds. For OAT it may be
    omitted, in which case ``n`` must be given.
    """

    kind: Kind
    couplings: CouplingMatrix | None = None
    chi: float = 0.0
    b_field: float = 0.0
    gamma_z: float = 0.0
    n: int | None = None

    def __post_init__(self):
        kind = Kind.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.couplings is not None:
            if self.n is not None and self.n != self.couplings.n:
                raise ValueError("n disagrees with coupling matrix size")
            object.__setattr__(self, "n", self.couplings.n)
        elif kind is not Kind.OAT:
            raise ValueError(f"{kind.value} needs a coupling matrix")
        if self.n is None or self.n < 1:
            raise ValueError("particle count n must be positive")
        for name in ("chi", "b_field", "gamma_z"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.gamma_z < 0:
            raise ValueError("gamma_z must be non-negative")
        if kind is Kind.OAT and not self.chi > 0:
            raise ValueError("OAT needs chi > 0")
        if kind is not Kind.TFI and self.b_field != 0:
            raise ValueError("b_field is only meaningful for PL-TFI")

    def with_gamma(self, gamma_z: float) -> "ModelSpec":
        return ModelSpec(self.kind, self.couplings, self.chi, self.b_field, gamma_z, self.n)

    def unitary(self) -> "ModelSpec":
        return self.with_gamma(0.0)

    def commutes_with_sz(self) -> bool:
        return self.kind is not Kind.TFI


def gamma_from_t2(t2: float) -> float:
    """Collective dephasing rate ``2 / T2``."""
    if not t2 > 0:
        raise ValueError("T2 must be positive")
    return 2.0 / t2


@dataclass(frozen=True)
class Schedule:
    t_end: float
    sample_times: tuple[float, ...]

    def __post_init__(self):
        ts = tuple(float(t) for t in self.sample_times)
        if not ts:
            raise ValueError("schedule needs at least one sample time")
        if ts[0] < 0 or ts[-1] > self.t_end:
            raise ValueError("sample times must lie in [0, t_end]")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("sample times must be strictly increasing")
        object.__setattr__(self, "sample_times", ts)

    @classmethod
    def uniform(cls, t_end: float, n_samples: int) -> "Schedule":
        return cls(t_end, tuple(np.linspace(0.0, t_end, n_samples)))

    @classmethod
    def at(cls, times: Sequence[float]) -> "Schedule":
        times = tuple(float(t) for t in times)
        return cls(times[-1], times)

    @property
    def times(self) -> np.ndarray:
        return np.array(self.sample_times)
