"""Statevector simulation of random two-qubit circuits and exact
post-measurement oracles for a pair of probe qubits.

Conventions (fixed, and relied on by the tokenizer and the shadow module):

* Qubit ``k`` is the k-th least significant bit of the computational-basis
  index, so ``|q_{L-1} ... q_1 q_0>`` has index ``sum_k q_k 2^k``.
* A two-qubit unitary acting on the ordered pair ``(i, j)`` is a 4x4 matrix
  indexed by ``2*b_i + b_j`` (first qubit of the pair is the more
  significant bit of the gate index).
* Reduced objects on the probes (A, B) use index ``2*b_A + b_B``.
* ``m_env`` bit patterns list the environment qubits in ascending qubit
  index order.

Probe placement defaults: A=0, B=L-1 for the all-to-all chain; for the
periodic square lattice A is site (0, 0) and B the site at
(rows//2, cols//2), i.e. maximally separated on the torus.  Sites are
flattened row-major.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import ConfigError, SystemTooLarge, ZeroProbabilityOutcome
from .seeding import derive_rng

GEOMETRY_1D = "all-to-all-1d"
GEOMETRY_2D = "square-2d"

STATEVECTOR_QUBIT_CAP = 26
ENUMERATION_QUBIT_CAP = 16


@dataclass(frozen=True)
class CircuitSpec:
    """Random-circuit description: geometry, depth and probe placement.

    ``depth`` is a continuous knob; the circuit applies
    ``round(num_qubits * depth)`` two-qubit gates drawn one pair at a time.
    """

    num_qubits: int
    depth: float
    geometry: str = GEOMETRY_1D
    rows: int | None = None
    cols: int | None = None
    probe_a: int | None = None
    probe_b: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.num_qubits < 3:
            raise ConfigError(f"need at least 3 qubits, got {self.num_qubits}")
        if self.depth < 0:
            raise ConfigError(f"depth must be nonnegative, got {self.depth}")
        if self.geometry == GEOMETRY_2D:
            if self.rows is None or self.cols is None:
                raise ConfigError("square-2d geometry needs rows and cols")
            if self.rows * self.cols != self.num_qubits:
                raise ConfigError(
                    f"rows*cols = {self.rows * self.cols} != num_qubits = {self.num_qubits}"
                )
            if self.rows < 2 or self.cols < 2:
                raise ConfigError("square-2d needs rows >= 2 and cols >= 2 (periodic wrap)")
        elif self.geometry != GEOMETRY_1D:
            raise ConfigError(f"unknown geometry {self.geometry!r}")
        a, b = self.probes
        if not (0 <= a < self.num_qubits and 0 <= b < self.num_qubits):
            raise ConfigError(f"probes ({a}, {b}) out of range for L={self.num_qubits}")
        if a == b:
            raise ConfigError("probe qubits must be distinct")

    @property
    def probes(self) -> tuple[int, int]:
        a, b = self.probe_a, self.probe_b
        if a is None or b is None:
            da, db = default_probes(self.geometry, self.num_qubits, self.rows, self.cols)
            a = da if a is None else a
            b = db if b is None else b
        return a, b

    @property
    def gate_count(self) -> int:
        return int(round(self.num_qubits * self.depth))


def default_probes(geometry: str, num_qubits: int, rows=None, cols=None) -> tuple[int, int]:
    if geometry == GEOMETRY_2D and rows and cols:
        return 0, (rows // 2) * cols + cols // 2
    return 0, num_qubits - 1


def lattice_edges(rows: int, cols: int) -> list[tuple[int, int]]:
    """The 2*rows*cols nearest-neighbor edges of the periodic square lattice."""
    edges = []
    for r in range(rows):
        for c in range(cols):
            site = r * cols + c
            edges.append((site, ((r + 1) % rows) * cols + c))
            edges.append((site, r * cols + (c + 1) % cols))
    return edges


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary: complex Ginibre -> QR with phase-fixed R diagonal."""
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def haar_two_qubit_gate(rng: np.random.Generator) -> np.ndarray:
    return haar_unitary(4, rng)


GateSequence = list[tuple[tuple[int, int], np.ndarray]]


def build_circuit(spec: CircuitSpec, rng: np.random.Generator | None = None) -> GateSequence:
    """Draw ``round(L*depth)`` Haar gates on uniformly chosen pairs.

    All-to-all: pairs uniform over all L(L-1)/2 unordered pairs.  Square
    lattice: pairs uniform over the 2L periodic nearest-neighbor edges.
    """
    if rng is None:
        rng = derive_rng(spec.seed, "circuit")
    L = spec.num_qubits
    gates: GateSequence = []
    if spec.geometry == GEOMETRY_2D:
        edges = lattice_edges(spec.rows, spec.cols)
        for _ in range(spec.gate_count):
            i, j = edges[rng.integers(len(edges))]
            gates.append(((i, j), haar_two_qubit_gate(rng)))
    else:
        for _ in range(spec.gate_count):
            i = int(rng.integers(L))
            j = int(rng.integers(L - 1))
            if j >= i:
                j += 1
            gates.append(((i, j), haar_two_qubit_gate(rng)))
    return gates


def zero_state(num_qubits: int) -> np.ndarray:
    if num_qubits > STATEVECTOR_QUBIT_CAP:
        raise SystemTooLarge(f"L={num_qubits} exceeds statevector cap {STATEVECTOR_QUBIT_CAP}")
    state = np.zeros(2**num_qubits, dtype=complex)
    state[0] = 1.0
    return state


def num_qubits_of(state: np.ndarray) -> int:
    n = int(round(np.log2(state.size)))
    if 2**n != state.size:
        raise ValueError(f"statevector length {state.size} is not a power of two")
    return n


def apply_gate(state: np.ndarray, pair: tuple[int, int], u4: np.ndarray) -> np.ndarray:
    """Apply a 4x4 unitary to qubits ``pair = (i, j)`` (i the more significant)."""
    n = num_qubits_of(state)
    i, j = pair
    ax_i, ax_j = n - 1 - i, n - 1 - j
    psi = np.moveaxis(state.reshape([2] * n), (ax_i, ax_j), (0, 1))
    out = np.tensordot(u4.reshape(2, 2, 2, 2), psi, axes=([2, 3], [0, 1]))
    return np.moveaxis(out, (0, 1), (ax_i, ax_j)).reshape(-1)


def apply_single_qubit(state: np.ndarray, qubit: int, u2: np.ndarray) -> np.ndarray:
    n = num_qubits_of(state)
    ax = n - 1 - qubit
    psi = np.moveaxis(state.reshape([2] * n), ax, 0)
    out = np.tensordot(u2, psi, axes=([1], [0]))
    return np.moveaxis(out, 0, ax).reshape(-1)


def run_circuit(spec: CircuitSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    """|0...0> evolved through a freshly drawn gate sequence."""
    state = zero_state(spec.num_qubits)
    for pair, u4 in build_circuit(spec, rng):
        state = apply_gate(state, pair, u4)
    return state


def sample_all_qubits(state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One full computational-basis shot; returns bits in ascending qubit order."""
    n = num_qubits_of(state)
    probs = np.abs(state) ** 2
    probs /= probs.sum()
    idx = int(rng.choice(state.size, p=probs))
    return np.array([(idx >> k) & 1 for k in range(n)], dtype=np.int64)


def environment_qubits(num_qubits: int, a: int, b: int) -> list[int]:
    return [q for q in range(num_qubits) if q != a and q != b]


@dataclass
class OracleState:
    """Exact conditional state of the probes for one environment outcome."""

    sigma_ab: np.ndarray
    probability: float
    m_env: tuple[int, ...] = field(default=())


def project_environment(state: np.ndarray, m_env, a: int, b: int) -> OracleState:
    """Project the environment onto the bit pattern ``m_env`` (ascending
    qubit order, probes excluded) and return the normalized 4x4 probe state.

    Raises ZeroProbabilityOutcome when the outcome has probability < 1e-14.
    """
    n = num_qubits_of(state)
    env = environment_qubits(n, a, b)
    m_env = tuple(int(x) for x in m_env)
    if len(m_env) != len(env):
        raise ValueError(f"m_env has {len(m_env)} bits, expected {len(env)}")
    base = 0
    for bit, q in zip(m_env, env):
        if bit not in (0, 1):
            raise ValueError(f"m_env entries must be bits, got {bit}")
        base += bit << q
    offsets = np.array([0, 1 << b, 1 << a, (1 << a) + (1 << b)])
    c = state[base + offsets]  # ordered 2*b_A + b_B
    p = float(np.vdot(c, c).real)
    if p < 1e-14:
        raise ZeroProbabilityOutcome(f"outcome {m_env} has probability {p:.3e}")
    sigma = np.outer(c, c.conj()) / p
    return OracleState(sigma_ab=sigma, probability=p, m_env=m_env)


def _probe_amplitude_matrix(state: np.ndarray, a: int, b: int) -> np.ndarray:
    """Reshape to (2^(L-2), 4): row = env outcome (ascending-order bits as
    LSB-first integer), column = 2*b_A + b_B."""
    n = num_qubits_of(state)
    psi = np.moveaxis(state.reshape([2] * n), (n - 1 - a, n - 1 - b), (n - 2, n - 1))
    # Leading axes hold the env qubits in descending index order, which puts
    # the k-th env qubit (ascending) on bit k of the row index.
    return psi.reshape(-1, 4)


def enumerate_outcomes(state: np.ndarray, a: int, b: int,
                       cap: int = ENUMERATION_QUBIT_CAP) -> Iterator[OracleState]:
    """Yield every environment outcome with p > 0; probabilities sum to 1."""
    n = num_qubits_of(state)
    if n > cap:
        raise SystemTooLarge(f"L={n} exceeds enumeration cap {cap}")
    env_count = n - 2
    m = _probe_amplitude_matrix(state, a, b)
    probs = np.einsum("ri,ri->r", m, m.conj()).real
    for r in np.flatnonzero(probs > 0):
        bits = tuple((int(r) >> k) & 1 for k in range(env_count))
        c = m[r]
        yield OracleState(np.outer(c, c.conj()) / probs[r], float(probs[r]), bits)


def reduced_probe_density(state: np.ndarray, a: int, b: int) -> np.ndarray:
    """Tr_env |psi><psi| on the probe pair, index 2*b_A + b_B."""
    m = _probe_amplitude_matrix(state, a, b)
    return m.T @ m.conj()
