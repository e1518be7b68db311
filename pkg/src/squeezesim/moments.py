"""Site-resolved and collective moment containers shared by all engines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

AXES = "xyz"


@dataclass(frozen=True, eq=False)
class CollectiveMoments:
    """``mean[a] = <S_a>`` and symmetrized ``second[a, b] = <(S_a S_b + S_b S_a)/2>``."""

    n: int
    mean: np.ndarray
    second: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(3)
        second = np.asarray(self.second, dtype=float).reshape(3, 3)
        second = 0.5 * (second + second.T)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "second", second)

    @property
    def covariance(self) -> np.ndarray:
        return self.second - np.outer(self.mean, self.mean)

    def s_squared(self) -> float:
        return float(np.trace(self.second))

    def rotated(self, r: np.ndarray) -> "CollectiveMoments":
        """Moments of the state rotated so that vectors transform as ``r @ v``."""
        return CollectiveMoments(self.n, r @ self.mean, r @ self.second @ r.T)


@dataclass(frozen=True, eq=False)
class MomentTable:
    """Pauli moments: ``first[i, a] = <s_i^a>`` and ``second[i, a, j, b]``.

    ``second`` holds the symmetrized two-point values. Same-site blocks
    ``second[i, :, i, :]`` are part of the table, so engines decide how they
    are populated (Pauli algebra gives the identity matrix there).
    ``stderr_first`` and ``stderr_second`` are optional sampling errors.
    """

    first: np.ndarray
    second: np.ndarray
    stderr_first: np.ndarray | None = None
    stderr_second: np.ndarray | None = None

    def __post_init__(self):
        first = np.asarray(self.first, dtype=float)
        n = first.shape[0]
        if first.shape != (n, 3):
            raise ValueError(f"first moments must have shape (n, 3), got {first.shape}")
        second = np.asarray(self.second, dtype=float)
        if second.shape != (n, 3, n, 3):
            raise ValueError(f"second moments must have shape {(n, 3, n, 3)}, got {second.shape}")
        object.__setattr__(self, "first", first)
        object.__setattr__(self, "second", second)

    @property
    def n(self) -> int:
        return self.first.shape[0]

    def pair(self, a: str, b: str) -> np.ndarray:
        """The n x n matrix ``<s_i^a s_j^b>``."""
        return self.second[:, AXES.index(a), :, AXES.index(b)]

    def collective(self) -> CollectiveMoments:
        mean = 0.5 * self.first.sum(axis=0)
        second = 0.25 * self.second.sum(axis=(0, 2))
        return CollectiveMoments(self.n, mean, second)

    @classmethod
    def from_collective(cls, m: CollectiveMoments) -> "MomentTable":
        """Site table of a permutation-symmetric state with the given collective moments."""
        n = m.n
        first = np.tile(2.0 * m.mean / n, (n, 1))
        if n > 1:
            pair = (4.0 * m.second - n * np.eye(3)) / (n * (n - 1))
        else:
            pair = np.eye(3)
        second = np.broadcast_to(pair[None, :, None, :], (n, 3, n, 3)).copy()
        return cls(first, pauli_same_site(second))

    def max_asymmetry(self) -> float:
        m = self.second.reshape(3 * self.n, 3 * self.n)
        return float(np.abs(m - m.T).max())


def pauli_same_site(second: np.ndarray) -> np.ndarray:
    """Copy of ``second`` with every same-site block replaced by the identity."""
    out = np.array(second, dtype=float)
    n = out.shape[0]
    idx = np.arange(n)
    out[idx, :, idx, :] = np.eye(3)
    return out
