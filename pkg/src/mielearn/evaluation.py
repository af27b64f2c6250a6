"""Entropy machinery and the uncertainty metric Delta.

Delta is the average shadow-classical entropy -Tr(sigma^s log rho) over
fresh measurement shots; by snapshot unbiasedness it equals the average
quantum-classical entropy E_m[-Tr(sigma_m log rho_m)], which this module
also evaluates exactly by enumerating every environment outcome at small L.
All entropies are in nats.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import circuits, model as nn, shadows
from .errors import NotPSD, SingularEstimator
from .qmath import partial_trace_b

EVAL_CHUNK = 8192


def von_neumann_entropy(rho: np.ndarray, atol: float = 1e-8) -> float:
    """-sum(lam log lam) with 0 log 0 = 0; raises NotPSD below -atol."""
    w = np.linalg.eigvalsh(rho)
    if w.min() < -atol:
        raise NotPSD(f"eigenvalue {w.min():.3e} below -{atol:.0e}")
    w = w[w > 0]
    return float(-(w * np.log(w)).sum())


def _log_psd(rho: np.ndarray, floor: float):
    w, v = np.linalg.eigh(rho)
    if w.min() < floor:
        raise SingularEstimator(f"estimator eigenvalue {w.min():.3e} below {floor:.0e}")
    return (v * np.log(w)) @ v.conj().T


def _log_psd_batch(rho: np.ndarray, floor: float) -> np.ndarray:
    w, v = np.linalg.eigh(rho)
    if w.min() < floor:
        bad = int(np.argmin(w.min(axis=-1)))
        raise SingularEstimator(
            f"estimator eigenvalue {w.min():.3e} below {floor:.0e} at index {bad}")
    return np.einsum("nik,nk,njk->nij", v, np.log(w), v.conj())


def shadow_classical_entropy(snapshot: np.ndarray, rho: np.ndarray) -> float:
    """-Re Tr(sigma^s log rho); may be negative for a single indefinite snapshot."""
    return float(-np.einsum("ij,ji->", snapshot, _log_psd(rho, 1e-14)).real)


def qc_entropy(sigma: np.ndarray, rho: np.ndarray) -> float:
    """Quantum-classical entropy -Re Tr(sigma log rho); >= S(sigma) always."""
    return float(-np.einsum("ij,ji->", sigma, _log_psd(rho, 1e-14)).real)


@dataclass
class BoundsResult:
    s_a: float
    upper: float
    lower: float
    holds: bool


def bounds_check(sigma_ab: np.ndarray, rho_ab: np.ndarray, slack: float = 1e-9) -> BoundsResult:
    """Two-sided sandwich on the probe-A entropy:
    S^QC_A >= S(sigma_A) >= S^QC_A - S^QC_AB."""
    sigma_a = partial_trace_b(sigma_ab)
    rho_a = partial_trace_b(rho_ab)
    s_a = von_neumann_entropy(sigma_a)
    upper = qc_entropy(sigma_a, rho_a)
    lower = upper - qc_entropy(sigma_ab, rho_ab)
    holds = (upper + slack >= s_a) and (s_a >= lower - slack)
    return BoundsResult(s_a, upper, lower, holds)


@dataclass
class EvalReport:
    delta_mean: float
    delta_stderr: float
    num_eval_records: int
    mean_output_entropy: float
    mean_reduced_entropy_a: float
    metadata: dict = field(default_factory=dict)


def _model_outputs(params, config, tokens) -> np.ndarray:
    """Eval-mode forward in chunks, upcast to complex128 for entropy math."""
    outs = []
    for start in range(0, tokens.shape[0], EVAL_CHUNK):
        rho, _ = nn.forward_batch(params, config, tokens[start:start + EVAL_CHUNK])
        outs.append(rho.astype(np.complex128))
    return np.concatenate(outs, axis=0)


def estimate_delta(params: dict, config: nn.ModelConfig, records,
                   metadata: dict | None = None) -> EvalReport:
    """Sampled Delta over fresh records: tokenize, forward in eval mode, and
    average the shadow-classical entropy of each record's snapshot."""
    records = list(records)
    if not records:
        raise ValueError("no eval records")
    tokens = nn.tokenize_batch([r.env_outcomes for r in records])
    snaps = shadows.snapshots_from_records(records)
    rho = _model_outputs(params, config, tokens)
    # the construction bounds eigenvalues below by eps/4; anything under
    # eps/8 signals corrupted parameters or a broken forward pass
    logr = _log_psd_batch(rho, config.epsilon_mix / 8)
    ssc = -np.einsum("nij,nji->n", snaps, logr).real
    w = np.linalg.eigvalsh(rho)
    out_entropy = float(-(w * np.log(w)).sum(axis=1).mean())
    # min eig(rho) >= eps/8 was checked above, so rho_A >= eps/4 and the
    # logs below are finite
    rho_a = np.einsum("nabcb->nac", rho.reshape(-1, 2, 2, 2, 2))
    wa = np.linalg.eigvalsh(rho_a)
    reduced_entropy = float(-(wa * np.log(wa)).sum(axis=1).mean())
    stderr = float(ssc.std(ddof=1) / np.sqrt(len(ssc))) if len(ssc) > 1 else 0.0
    return EvalReport(
        delta_mean=float(ssc.mean()),
        delta_stderr=stderr,
        num_eval_records=len(records),
        mean_output_entropy=out_entropy,
        mean_reduced_entropy_a=reduced_entropy,
        metadata=dict(metadata or {}),
    )


def _oracle_terms(params, config, state, a, b, cap):
    outcomes = list(circuits.enumerate_outcomes(state, a, b, cap=cap))
    tokens = nn.tokenize_batch(
        [[1 - 2 * bit for bit in o.m_env] for o in outcomes])
    rho = _model_outputs(params, config, tokens)
    return outcomes, rho


def exact_delta(params: dict, config: nn.ModelConfig, state: np.ndarray,
                a: int, b: int, cap: int = circuits.ENUMERATION_QUBIT_CAP) -> float:
    """sum_m p_m * S^QC(sigma_m, rho_m) over every environment outcome."""
    outcomes, rho = _oracle_terms(params, config, state, a, b, cap)
    logr = _log_psd_batch(rho, config.epsilon_mix / 8)
    total = 0.0
    for o, lr in zip(outcomes, logr):
        total += o.probability * float(-np.einsum("ij,ji->", o.sigma_ab, lr).real)
    return total


def exact_mie(state: np.ndarray, a: int, b: int,
              cap: int = circuits.ENUMERATION_QUBIT_CAP) -> float:
    """Measurement-induced entanglement: sum_m p_m * S(Tr_B sigma_m)."""
    total = 0.0
    for o in circuits.enumerate_outcomes(state, a, b, cap=cap):
        total += o.probability * von_neumann_entropy(partial_trace_b(o.sigma_ab))
    return total


def exact_bounds_summary(params: dict, config: nn.ModelConfig, state: np.ndarray,
                         a: int, b: int,
                         cap: int = circuits.ENUMERATION_QUBIT_CAP) -> dict:
    """Outcome-averaged sandwich terms for the oracle report."""
    outcomes, rho = _oracle_terms(params, config, state, a, b, cap)
    mean_s_a = mean_upper = mean_lower = 0.0
    all_hold = True
    for o, r in zip(outcomes, rho):
        res = bounds_check(o.sigma_ab, r)
        mean_s_a += o.probability * res.s_a
        mean_upper += o.probability * res.upper
        mean_lower += o.probability * res.lower
        all_hold = all_hold and res.holds
    return {
        "mean_s_a": mean_s_a,
        "mean_upper": mean_upper,
        "mean_lower": mean_lower,
        "bounds_hold": all_hold,
    }
