import numpy as np
import pytest

from mielearn import circuits as qc


@pytest.fixture(scope="session")
def ghz3():
    """(|000> + |111>)/sqrt(2)."""
    state = np.zeros(8, dtype=complex)
    state[0] = state[7] = 1 / np.sqrt(2)
    return state


@pytest.fixture(scope="session")
def bell_pair():
    psi = np.zeros(4, dtype=complex)
    psi[0] = psi[3] = 1 / np.sqrt(2)
    return psi


@pytest.fixture(scope="session")
def random_state_10():
    """Fixed random 10-qubit circuit state with its probe indices."""
    spec = qc.CircuitSpec(num_qubits=10, depth=2.0, seed=17)
    return qc.run_circuit(spec), spec.probes
