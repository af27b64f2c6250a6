import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mielearn import circuits as qc
from mielearn.errors import ConfigError, SystemTooLarge, ZeroProbabilityOutcome
from mielearn.seeding import derive_rng


class TestHaarGate:
    def test_unitarity(self):
        rng = derive_rng(0)
        for _ in range(50):
            u = qc.haar_two_qubit_gate(rng)
            assert np.abs(u @ u.conj().T - np.eye(4)).max() <= 1e-12

    def test_deterministic_given_seed(self):
        u1 = qc.haar_two_qubit_gate(derive_rng(123))
        u2 = qc.haar_two_qubit_gate(derive_rng(123))
        assert np.array_equal(u1, u2)

    def test_first_moment(self):
        # |U_00|^2 ~ Beta(1, 3) for Haar U(4): mean 1/4, var 3/80
        rng = derive_rng(42)
        vals = [abs(qc.haar_two_qubit_gate(rng)[0, 0]) ** 2 for _ in range(10_000)]
        tol = 3 * np.sqrt(3 / 80 / 10_000)
        assert abs(np.mean(vals) - 0.25) <= tol


class TestBuildCircuit:
    def test_gate_count_1d(self):
        spec = qc.CircuitSpec(num_qubits=20, depth=1.0, seed=1)
        assert len(qc.build_circuit(spec)) == 20

    def test_zero_depth(self):
        spec = qc.CircuitSpec(num_qubits=5, depth=0.0, seed=1)
        assert qc.build_circuit(spec) == []

    def test_2d_gate_count_and_adjacency(self):
        spec = qc.CircuitSpec(num_qubits=25, depth=6.4, geometry=qc.GEOMETRY_2D,
                              rows=5, cols=5, seed=3)
        gates = qc.build_circuit(spec)
        assert len(gates) == 160
        # independent adjacency oracle: neighbors on the 5x5 torus
        def site(r, c):
            return (r % 5) * 5 + (c % 5)
        edges = set()
        for r in range(5):
            for c in range(5):
                edges.add(frozenset((site(r, c), site(r + 1, c))))
                edges.add(frozenset((site(r, c), site(r, c + 1))))
        for (i, j), _ in gates:
            assert frozenset((i, j)) in edges

    def test_2d_rejects_bad_shape(self):
        with pytest.raises(ConfigError):
            qc.CircuitSpec(num_qubits=10, depth=1.0, geometry=qc.GEOMETRY_2D,
                           rows=3, cols=4, seed=0)

    def test_1d_pairs_cover_all(self):
        spec = qc.CircuitSpec(num_qubits=5, depth=40.0, seed=9)
        pairs = {frozenset(pair) for pair, _ in qc.build_circuit(spec)}
        assert len(pairs) == 10  # all 5*4/2 unordered pairs show up

    def test_probe_defaults(self):
        assert qc.CircuitSpec(num_qubits=12, depth=1.0).probes == (0, 11)
        spec = qc.CircuitSpec(num_qubits=25, depth=1.0, geometry=qc.GEOMETRY_2D,
                              rows=5, cols=5)
        assert spec.probes == (0, 2 * 5 + 2)

    def test_probes_must_differ(self):
        with pytest.raises(ConfigError):
            qc.CircuitSpec(num_qubits=4, depth=1.0, probe_a=2, probe_b=2)


class TestApplyGate:
    def test_identity(self):
        state = qc.zero_state(4)
        out = qc.apply_gate(state, (1, 3), np.eye(4, dtype=complex))
        assert np.array_equal(out, state)

    def test_swap(self):
        # |01> means qubit0=1, qubit1=0 -> index 1; SWAP sends it to |10>
        state = np.zeros(4, dtype=complex)
        state[1] = 1.0
        swap = np.eye(4)[[0, 2, 1, 3]].astype(complex)
        out = qc.apply_gate(state, (0, 1), swap)
        assert np.argmax(np.abs(out)) == 2

    def test_norm_preserved(self):
        rng = derive_rng(5)
        state = qc.run_circuit(qc.CircuitSpec(num_qubits=8, depth=3.0, seed=2))
        u = qc.haar_two_qubit_gate(rng)
        out = qc.apply_gate(state, (2, 6), u)
        assert abs(np.linalg.norm(out) - 1) <= 1e-10

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31))
    def test_disjoint_gates_commute(self, seed):
        rng = derive_rng("commute", seed)
        n = 6
        qubits = rng.permutation(n)[:4]
        u1, u2 = qc.haar_two_qubit_gate(rng), qc.haar_two_qubit_gate(rng)
        state = qc.run_circuit(qc.CircuitSpec(num_qubits=n, depth=1.0, seed=seed))
        p1, p2 = tuple(int(q) for q in qubits[:2]), tuple(int(q) for q in qubits[2:])
        ab = qc.apply_gate(qc.apply_gate(state, p1, u1), p2, u2)
        ba = qc.apply_gate(qc.apply_gate(state, p2, u2), p1, u1)
        assert np.abs(ab - ba).max() <= 1e-12


class TestSingleQubit:
    def test_hadamard(self):
        h = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
        out = qc.apply_single_qubit(qc.zero_state(1), 0, h)
        assert np.allclose(out, [1 / np.sqrt(2), 1 / np.sqrt(2)])

    def test_z_phase(self):
        state = np.array([0, 1], dtype=complex)
        z = np.diag([1, -1]).astype(complex)
        assert np.allclose(qc.apply_single_qubit(state, 0, z), [0, -1])

    def test_norm(self):
        rng = derive_rng(8)
        state = qc.run_circuit(qc.CircuitSpec(num_qubits=6, depth=2.0, seed=4))
        u = qc.haar_unitary(2, rng)
        assert abs(np.linalg.norm(qc.apply_single_qubit(state, 3, u)) - 1) <= 1e-10


class TestSampling:
    def test_zero_state_deterministic(self):
        rng = derive_rng(1)
        bits = qc.sample_all_qubits(qc.zero_state(5), rng)
        assert not bits.any()

    def test_bell_frequencies(self, bell_pair):
        rng = derive_rng(2)
        hits = sum(
            not qc.sample_all_qubits(bell_pair, rng).any() for _ in range(10_000))
        assert abs(hits / 10_000 - 0.5) <= 0.02

    def test_reproducible(self):
        state = qc.run_circuit(qc.CircuitSpec(num_qubits=6, depth=2.0, seed=6))
        a = [qc.sample_all_qubits(state, derive_rng(3, i)).tolist() for i in range(20)]
        b = [qc.sample_all_qubits(state, derive_rng(3, i)).tolist() for i in range(20)]
        assert a == b

    def test_matches_enumeration(self):
        # empirical frequencies vs exact outcome probabilities at small L
        spec = qc.CircuitSpec(num_qubits=5, depth=2.0, seed=12)
        state = qc.run_circuit(spec)
        a, b = spec.probes
        probs = {o.m_env: o.probability for o in qc.enumerate_outcomes(state, a, b)}
        env = qc.environment_qubits(5, a, b)
        n = 20_000
        counts = {}
        for i in range(n):
            bits = qc.sample_all_qubits(state, derive_rng("freq", i))
            key = tuple(int(bits[q]) for q in env)
            counts[key] = counts.get(key, 0) + 1
        for m, p in probs.items():
            if p >= 0.01:
                q = counts.get(m, 0) / n
                assert abs(q - p) <= 4 * np.sqrt(p * (1 - p) / n)


class TestProjection:
    def test_ghz(self, ghz3):
        o = qc.project_environment(ghz3, (0,), 0, 2)
        assert abs(o.probability - 0.5) <= 1e-12
        expected = np.zeros((4, 4))
        expected[0, 0] = 1.0
        assert np.abs(o.sigma_ab - expected).max() <= 1e-12

    def test_bell_maker(self):
        # (|00>|0> + |11>|0> + |01>|1> + |10>|1>)/2 on (A,B,env)=(0,1,2)
        psi = np.zeros(8, dtype=complex)
        for a_bit, b_bit, e_bit in [(0, 0, 0), (1, 1, 0), (0, 1, 1), (1, 0, 1)]:
            psi[a_bit + (b_bit << 1) + (e_bit << 2)] = 0.5
        o = qc.project_environment(psi, (0,), 0, 1)
        bell = np.zeros((4, 4), dtype=complex)
        bell[0, 0] = bell[0, 3] = bell[3, 0] = bell[3, 3] = 0.5
        assert abs(o.probability - 0.5) <= 1e-12
        assert np.abs(o.sigma_ab - bell).max() <= 1e-12

    def test_random_state_oracle_invariants(self, random_state_10):
        state, (a, b) = random_state_10
        bits = qc.sample_all_qubits(state, derive_rng(4))
        m_env = [int(bits[q]) for q in qc.environment_qubits(10, a, b)]
        o = qc.project_environment(state, m_env, a, b)
        w = np.linalg.eigvalsh(o.sigma_ab)
        assert w.min() >= -1e-10
        assert abs(np.trace(o.sigma_ab).real - 1) <= 1e-10
        assert w[-1] >= 1 - 1e-8  # pure global state -> rank 1
        assert np.abs(o.sigma_ab - o.sigma_ab.conj().T).max() <= 1e-12

    def test_zero_probability(self):
        # |000> cannot yield env outcome 1 on qubit 1
        state = qc.zero_state(3)
        with pytest.raises(ZeroProbabilityOutcome):
            qc.project_environment(state, (1,), 0, 2)


class TestEnumeration:
    def test_ghz_outcomes(self, ghz3):
        outs = list(qc.enumerate_outcomes(ghz3, 0, 2))
        assert sorted(o.m_env for o in outs) == [(0,), (1,)]
        for o in outs:
            assert abs(o.probability - 0.5) <= 1e-12

    def test_product_state(self):
        outs = list(qc.enumerate_outcomes(qc.zero_state(6), 0, 5))
        assert len(outs) == 1
        assert abs(outs[0].probability - 1) <= 1e-12

    def test_probabilities_sum_to_one(self, random_state_10):
        state, (a, b) = random_state_10
        total = sum(o.probability for o in qc.enumerate_outcomes(state, a, b))
        assert abs(total - 1) <= 1e-9

    def test_cap(self):
        state = qc.zero_state(8)
        with pytest.raises(SystemTooLarge):
            list(qc.enumerate_outcomes(state, 0, 7, cap=6))

    def test_projection_consistency(self, random_state_10):
        # sum_m p_m sigma_m must reproduce the reduced probe state
        state, (a, b) = random_state_10
        acc = np.zeros((4, 4), dtype=complex)
        for o in qc.enumerate_outcomes(state, a, b):
            acc += o.probability * o.sigma_ab
        assert np.abs(acc - qc.reduced_probe_density(state, a, b)).max() <= 1e-9


class TestRunCircuit:
    def test_norm_after_deep_circuit(self):
        state = qc.run_circuit(qc.CircuitSpec(num_qubits=10, depth=5.0, seed=21))
        assert abs(np.linalg.norm(state) - 1) <= 1e-9

    def test_deterministic(self):
        spec = qc.CircuitSpec(num_qubits=8, depth=2.0, seed=33)
        assert np.array_equal(qc.run_circuit(spec), qc.run_circuit(spec))

    def test_statevector_cap(self):
        with pytest.raises(SystemTooLarge):
            qc.zero_state(27)
