"""Small dense-matrix helpers for two-qubit density matrices.

Tensor-factor convention used everywhere in this package: for the probe
pair (A, B), the 4-dimensional index is 2*b_A + b_B, i.e. A is the more
significant factor.  ``np.kron(m_a, m_b)`` follows the same convention.
"""

from __future__ import annotations

import numpy as np

I2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S_GATE = np.array([[1, 0], [0, 1j]], dtype=complex)


def dag(m: np.ndarray) -> np.ndarray:
    return m.conj().T


def partial_trace_b(rho4: np.ndarray) -> np.ndarray:
    """Trace out the less significant factor: 4x4 -> 2x2 on A."""
    return np.einsum("abcb->ac", rho4.reshape(2, 2, 2, 2))


def partial_trace_a(rho4: np.ndarray) -> np.ndarray:
    """Trace out the more significant factor: 4x4 -> 2x2 on B."""
    return np.einsum("abad->bd", rho4.reshape(2, 2, 2, 2))


def random_pure_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return psi / np.linalg.norm(psi)


def random_density_matrix(dim: int, rng: np.random.Generator,
                          rank: int | None = None) -> np.ndarray:
    """Random mixed state from a Ginibre factor: G G^dag normalized to trace 1."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ dag(g)
    return rho / np.trace(rho).real
