"""Random-Pauli measurements of the probe pair and classical-shadow snapshots.

A shot rotates each probe into the chosen Pauli eigenbasis, measures every
qubit in the computational basis and keeps (basis, outcome) for the probes
plus the raw environment outcomes.  The snapshot label for qubit pair (A, B)
is the tensor product of the single-qubit inverted factors 3|phi><phi| - I,
with A the more significant factor (same ordering as the oracle states).

Rotation convention: V(Z) = I, V(X) = H, V(Y) = H S^dag, so measuring Z
after V measures the chosen Pauli.  Any convention works as long as record
generation and snapshot reconstruction share it; these do.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import circuits
from .errors import NumericalFailure
from .qmath import HADAMARD, I2, S_GATE, dag, partial_trace_a, partial_trace_b

BASES = ("X", "Y", "Z")

ROTATIONS = {
    "X": HADAMARD,
    "Y": HADAMARD @ dag(S_GATE),
    "Z": I2,
}

# eigenstate |phi> = V^dag |b> and factor 3|phi><phi| - I, indexed by
# (basis index, bit) with bit b <-> outcome (-1)^b
_EIGENSTATES = np.stack(
    [np.stack([dag(ROTATIONS[p])[:, b] for b in (0, 1)]) for p in BASES]
)
_SNAP_FACTORS = np.stack(
    [
        np.stack([3 * np.outer(v, v.conj()) - I2 for v in _EIGENSTATES[i]])
        for i in range(3)
    ]
)
_RAW_FACTORS = np.stack(
    [np.stack([np.outer(v, v.conj()) for v in _EIGENSTATES[i]]) for i in range(3)]
)


@dataclass(frozen=True)
class MeasurementRecord:
    """One experimental shot: env outcomes plus probe bases and outcomes (all +-1)."""

    env_outcomes: tuple[int, ...]
    basis_a: str
    basis_b: str
    outcome_a: int
    outcome_b: int


def draw_bases(rng: np.random.Generator) -> tuple[str, str]:
    i, j = rng.integers(0, 3, size=2)
    return BASES[i], BASES[j]


def basis_rotation(basis: str) -> np.ndarray:
    return ROTATIONS[basis]


def measure_with_bases(state: np.ndarray, a: int, b: int, basis_a: str, basis_b: str,
                       rng: np.random.Generator) -> MeasurementRecord:
    """Rotate the probes into the given bases and take one full-basis shot."""
    rotated = circuits.apply_single_qubit(state, a, ROTATIONS[basis_a])
    rotated = circuits.apply_single_qubit(rotated, b, ROTATIONS[basis_b])
    bits = circuits.sample_all_qubits(rotated, rng)
    signs = 1 - 2 * bits  # bit b -> outcome (-1)^b
    env = tuple(int(signs[q]) for q in circuits.environment_qubits(len(bits), a, b))
    return MeasurementRecord(env, basis_a, basis_b, int(signs[a]), int(signs[b]))


def make_record(state: np.ndarray, a: int, b: int, rng: np.random.Generator) -> MeasurementRecord:
    """One shot with freshly drawn random probe bases (one state preparation)."""
    basis_a, basis_b = draw_bases(rng)
    return measure_with_bases(state, a, b, basis_a, basis_b, rng)


def _indices(record: MeasurementRecord) -> tuple[int, int, int, int]:
    return (
        BASES.index(record.basis_a),
        BASES.index(record.basis_b),
        (1 - record.outcome_a) // 2,
        (1 - record.outcome_b) // 2,
    )


def snapshot(record: MeasurementRecord) -> np.ndarray:
    """Shadow snapshot (3|phi_A><phi_A| - I) x (3|phi_B><phi_B| - I)."""
    ia, ib, ba, bb = _indices(record)
    return np.kron(_SNAP_FACTORS[ia, ba], _SNAP_FACTORS[ib, bb])


def raw_snapshot(record: MeasurementRecord) -> np.ndarray:
    """Un-inverted rank-1 projector |phi_A phi_B><phi_A phi_B|."""
    ia, ib, ba, bb = _indices(record)
    return np.kron(_RAW_FACTORS[ia, ba], _RAW_FACTORS[ib, bb])


def snapshot_batch(basis_a_idx, basis_b_idx, outcome_a, outcome_b) -> np.ndarray:
    """Vectorized snapshots from integer basis indices and +-1 outcomes: (N,4,4)."""
    fa = _SNAP_FACTORS[basis_a_idx, (1 - np.asarray(outcome_a)) // 2]
    fb = _SNAP_FACTORS[basis_b_idx, (1 - np.asarray(outcome_b)) // 2]
    return np.einsum("nij,nkl->nikjl", fa, fb).reshape(-1, 4, 4)


def raw_snapshot_batch(basis_a_idx, basis_b_idx, outcome_a, outcome_b) -> np.ndarray:
    fa = _RAW_FACTORS[basis_a_idx, (1 - np.asarray(outcome_a)) // 2]
    fb = _RAW_FACTORS[basis_b_idx, (1 - np.asarray(outcome_b)) // 2]
    return np.einsum("nij,nkl->nikjl", fa, fb).reshape(-1, 4, 4)


def snapshots_from_records(records) -> np.ndarray:
    ia = np.array([BASES.index(r.basis_a) for r in records])
    ib = np.array([BASES.index(r.basis_b) for r in records])
    oa = np.array([r.outcome_a for r in records])
    ob = np.array([r.outcome_b for r in records])
    return snapshot_batch(ia, ib, oa, ob)


def sample_probe(sigma_ab: np.ndarray, rng: np.random.Generator):
    """Conditional-mode draw: random bases + outcomes sampled from a fixed 4x4
    probe state.  Test-harness feature; the experimental protocol never
    post-selects on the environment outcome.
    """
    ia, ib = rng.integers(0, 3, size=2)
    v = np.kron(ROTATIONS[BASES[ia]], ROTATIONS[BASES[ib]])
    probs = np.diag(v @ sigma_ab @ dag(v)).real.clip(min=0)
    probs /= probs.sum()
    k = int(rng.choice(4, p=probs))
    return BASES[ia], BASES[ib], 1 - 2 * (k >> 1), 1 - 2 * (k & 1)


def sample_probe_batch(sigma_ab: np.ndarray, n: int, rng: np.random.Generator):
    """Vectorized conditional draws; returns (basis_a_idx, basis_b_idx, out_a, out_b)."""
    combo = rng.integers(0, 9, size=n)
    cum = np.empty((9, 4))
    for c in range(9):
        v = np.kron(ROTATIONS[BASES[c // 3]], ROTATIONS[BASES[c % 3]])
        p = np.diag(v @ sigma_ab @ dag(v)).real.clip(min=0)
        cum[c] = np.cumsum(p / p.sum())
    u = rng.random(n)
    k = (u[:, None] > cum[combo]).sum(axis=1)
    return combo // 3, combo % 3, 1 - 2 * (k >> 1), 1 - 2 * (k & 1)


def omega_operator(sigma_ab: np.ndarray) -> np.ndarray:
    """sigma + sigma_A x I + I x sigma_B + I x I for a 4x4 density matrix."""
    sa = partial_trace_b(sigma_ab)
    sb = partial_trace_a(sigma_ab)
    return sigma_ab + np.kron(sa, I2) + np.kron(I2, sb) + np.eye(4)


def omega_flatness_check(psi: np.ndarray, tol: float = 1e-10):
    """Schmidt-analyze Omega|psi> for a pure 4-component probe state.

    Returns (is_eigenvector, coefficients) where the coefficients are
    2 + 2*lambda_k for every Schmidt weight above 1e-12; the state is an
    eigenvector of its own Omega operator iff they all agree.  The direct
    matrix action is cross-checked against the Schmidt-form prediction.
    """
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    u, s, vh = np.linalg.svd(psi.reshape(2, 2))
    lam = s**2
    predicted = np.zeros(4, dtype=complex)
    for k in range(2):
        predicted += s[k] * (2 + 2 * lam[k]) * np.kron(u[:, k], vh[k, :])
    direct = omega_operator(np.outer(psi, psi.conj())) @ psi
    if np.abs(direct - predicted).max() > tol:
        raise NumericalFailure("Omega action disagrees with its Schmidt form")
    coeffs = 2 + 2 * lam[lam > 1e-12]
    return bool(np.all(np.abs(coeffs - coeffs[0]) <= tol)), coeffs
