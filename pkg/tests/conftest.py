from __future__ import annotations

from functools import reduce

import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []

# Dense Kronecker-product oracle, independent of the bit-twiddling engine.
# Site 0 is the rightmost tensor factor so the index convention matches.
I2 = np.eye(2, dtype=complex)
# ordering (down, up) = (bit 0, bit 1)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, 1j], [-1j, 0]], dtype=complex)
SZ = np.array([[-1, 0], [0, 1]], dtype=complex)
PAULI = (SX, SY, SZ)


def site_op(op: np.ndarray, i: int, n: int) -> np.ndarray:
    factors = [op if k == i else I2 for k in reversed(range(n))]
    return reduce(np.kron, factors)


def dense_hamiltonian(kind: str, j: np.ndarray, b: float = 0.0) -> np.ndarray:
    n = j.shape[0]
    h = np.zeros((2**n, 2**n), dtype=complex)
    for i in range(n):
        for k in range(i + 1, n):
            if kind == "ising":
                h += 0.5 * j[i, k] * site_op(SZ, i, n) @ site_op(SZ, k, n)
            elif kind == "xx":
                h += 0.5 * j[i, k] * (site_op(SX, i, n) @ site_op(SX, k, n) + site_op(SY, i, n) @ site_op(SY, k, n))
            elif kind == "tfi":
                h += j[i, k] * site_op(SX, i, n) @ site_op(SX, k, n)
    if kind == "tfi":
        for i in range(n):
            h += b * site_op(SZ, i, n)
    return h


def dense_moments(psi: np.ndarray, n: int):
    ops = [[site_op(p, i, n) for p in PAULI] for i in range(n)]
    first = np.array([[np.vdot(psi, o @ psi).real for o in row] for row in ops])
    second = np.zeros((n, 3, n, 3))
    for i in range(n):
        for a in range(3):
            for k in range(n):
                for b in range(3):
                    op = 0.5 * (ops[i][a] @ ops[k][b] + ops[k][b] @ ops[i][a])
                    second[i, a, k, b] = np.vdot(psi, op @ psi).real
    return first, second


def plus_state(n: int) -> np.ndarray:
    return np.full(2**n, 2.0 ** (-n / 2), dtype=complex)


@pytest.fixture
def record_acceptance():
    def _record(line: str) -> None:
        ACCEPTANCE_LINES.append(line)
        print(line)

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
