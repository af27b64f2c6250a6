"""Experiment orchestration: dataset/checkpoint persistence, train/eval/oracle
runs, and resumable resource sweeps over (depth, N_m, model preset).

File formats (all versioned):

* Dataset: newline-delimited JSON.  First line is a header with the circuit
  spec, record count, generation seed and probe indices; each further line is
  one measurement record.  Headers carry a deterministic ``created`` tag
  (ISO-8601 of SOURCE_DATE_EPOCH, default epoch 0) so identical inputs give
  byte-identical files.
* Checkpoint: single JSON object with model/train configs and parameter
  blocks in ``model.param_names`` order, each base64-encoded little-endian
  float64.
* Sweep results: one CSV row per (realization, t, N_m, preset) cell plus an
  aggregate CSV with mean Delta and its standard error over realizations.
"""

from __future__ import annotations

import base64
import csv
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import circuits, evaluation, model as nn, shadows, training
from .errors import ConfigError, IncompatibleArtifacts
from .seeding import child_seed, derive_rng

FORMAT_VERSION = 1


def _created_tag() -> str:
    epoch = int(os.environ.get("SOURCE_DATE_EPOCH", "0"))
    return datetime.fromtimestamp(epoch, tz=timezone.utc).isoformat()


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def fingerprint(header: dict) -> str:
    """SHA-256 of the canonical header JSON (excluding any fingerprint field)."""
    clean = {k: v for k, v in header.items() if k != "fingerprint"}
    return hashlib.sha256(_canonical_json(clean).encode()).hexdigest()


def circuit_spec_to_dict(spec: circuits.CircuitSpec) -> dict:
    d = asdict(spec)
    d["probe_a"], d["probe_b"] = spec.probes
    return d


def circuit_spec_from_dict(d: dict) -> circuits.CircuitSpec:
    known = {f: d[f] for f in (
        "num_qubits", "depth", "geometry", "rows", "cols",
        "probe_a", "probe_b", "seed") if f in d and d[f] is not None}
    try:
        return circuits.CircuitSpec(**known)
    except TypeError as exc:
        raise ConfigError(f"bad circuit spec: {exc}") from exc


# ---------------------------------------------------------------- datasets

def write_dataset(path, spec: circuits.CircuitSpec, records, gen_seed: int) -> dict:
    records = list(records)
    a, b = spec.probes
    header = {
        "format_version": FORMAT_VERSION,
        "kind": "dataset",
        "circuit": circuit_spec_to_dict(spec),
        "n_records": len(records),
        "gen_seed": gen_seed,
        "probe_a": a,
        "probe_b": b,
        "created": _created_tag(),
    }
    with open(path, "w") as fh:
        fh.write(_canonical_json(header) + "\n")
        for r in records:
            fh.write(_canonical_json({
                "env": list(r.env_outcomes),
                "ba": r.basis_a, "bb": r.basis_b,
                "oa": r.outcome_a, "ob": r.outcome_b,
            }) + "\n")
    header["fingerprint"] = fingerprint(header)
    return header


def read_dataset(path):
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("kind") != "dataset":
            raise ConfigError(f"{path} is not a dataset file")
        if header.get("format_version") != FORMAT_VERSION:
            raise IncompatibleArtifacts(
                f"dataset format {header.get('format_version')} != {FORMAT_VERSION}")
        env_len = header["circuit"]["num_qubits"] - 2
        records = []
        for line in fh:
            d = json.loads(line)
            if len(d["env"]) != env_len:
                raise IncompatibleArtifacts(
                    f"record env length {len(d['env'])} != {env_len} from header")
            records.append(shadows.MeasurementRecord(
                tuple(d["env"]), d["ba"], d["bb"], d["oa"], d["ob"]))
    if header["n_records"] != len(records):
        raise IncompatibleArtifacts(
            f"header claims {header['n_records']} records, file has {len(records)}")
    header["fingerprint"] = fingerprint(header)
    return header, records


def cmd_gen(spec: circuits.CircuitSpec, n_records: int, seed: int, out_path) -> dict:
    """Build the circuit once, then emit independent shots (fresh basis draw
    and Born sample each, one derived substream per record)."""
    state = circuits.run_circuit(spec)
    a, b = spec.probes
    records = [
        shadows.make_record(state, a, b, derive_rng(seed, "record", i))
        for i in range(n_records)
    ]
    return write_dataset(out_path, spec, records, seed)


# -------------------------------------------------------------- checkpoints

def _encode_array(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode()


def _decode_array(data: str, shape) -> np.ndarray:
    return np.frombuffer(base64.b64decode(data), dtype="<f8").reshape(shape).copy()


def write_checkpoint(path, params: dict, model_config: nn.ModelConfig,
                     train_config: training.TrainConfig, final_loss: float,
                     dataset_fingerprint: str, dataset_summary: dict | None = None) -> dict:
    blocks = [
        {"name": name, "shape": list(params[name].shape),
         "data": _encode_array(params[name])}
        for name in nn.param_names(model_config)
    ]
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "checkpoint",
        "model_config": asdict(model_config),
        "train_config": asdict(train_config),
        "final_loss": final_loss,
        "train_seed": train_config.seed,
        "dataset_fingerprint": dataset_fingerprint,
        "dataset_summary": dataset_summary or {},
        "params": blocks,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
    return doc


def read_checkpoint(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("kind") != "checkpoint":
        raise ConfigError(f"{path} is not a checkpoint file")
    if doc.get("format_version") != FORMAT_VERSION:
        raise IncompatibleArtifacts(
            f"checkpoint format {doc.get('format_version')} != {FORMAT_VERSION}")
    model_config = nn.ModelConfig(**doc["model_config"])
    train_config = training.TrainConfig(**doc["train_config"])
    params = {
        block["name"]: _decode_array(block["data"], block["shape"])
        for block in doc["params"]
    }
    if list(params) != nn.param_names(model_config):
        raise IncompatibleArtifacts("checkpoint parameter blocks out of order")
    return params, model_config, train_config, doc


def dataset_to_arrays(records):
    tokens = nn.tokenize_batch([r.env_outcomes for r in records])
    snaps = shadows.snapshots_from_records(records)
    return tokens, snaps


def final_eval_loss(params: dict, model_config: nn.ModelConfig, loss_kind: str,
                    tokens: np.ndarray, snaps: np.ndarray) -> float:
    """Eval-mode (dropout off) loss of a parameter set over a dataset; this is
    the recomputable quantity a checkpoint records as final_loss."""
    loss_fn = training.LOSSES[loss_kind]
    total = 0.0
    for start in range(0, tokens.shape[0], evaluation.EVAL_CHUNK):
        stop = min(start + evaluation.EVAL_CHUNK, tokens.shape[0])
        rho, _ = nn.forward_batch(params, model_config, tokens[start:stop])
        part, _ = loss_fn(rho.astype(np.complex128), snaps[start:stop],
                          batch_denominator=tokens.shape[0])
        total += part
    return total


def cmd_train(dataset_path, model_preset: str, train_overrides: dict | None,
              seed: int, out_path) -> dict:
    """Train on a dataset file and write a checkpoint plus a loss-history CSV
    (columns epoch,loss,lr,grad_norm) next to it.

    The history records the per-epoch train-mode loss; the checkpoint's
    final_loss is the eval-mode loss of the final parameters on the training
    set, which a reload can reproduce exactly.
    """
    header, records = read_dataset(dataset_path)
    tokens, snaps = dataset_to_arrays(records)
    if model_preset not in nn.PRESETS:
        raise ConfigError(f"unknown model preset {model_preset!r}")
    model_config = nn.preset_config(model_preset, max_seq_len=tokens.shape[1])
    train_config = training.train_config_with(seed=seed, **(train_overrides or {}))
    report = training.train(tokens, snaps, model_config, train_config)
    params64 = {k: np.asarray(v, dtype=np.float64) for k, v in report.params.items()}
    loss = final_eval_loss(params64, model_config, train_config.loss_kind, tokens, snaps)
    summary = {
        "num_qubits": header["circuit"]["num_qubits"],
        "probe_a": header["probe_a"],
        "probe_b": header["probe_b"],
    }
    doc = write_checkpoint(out_path, params64, model_config, train_config,
                           loss, header["fingerprint"], summary)
    loss_csv = Path(out_path).with_suffix(".loss.csv")
    with open(loss_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "lr", "grad_norm"])
        for i, (loss_i, lr, gn) in enumerate(
                zip(report.loss_history, report.lr_trace, report.grad_norm_trace)):
            writer.writerow([i, repr(loss_i), repr(lr), repr(gn)])
    return doc


# ------------------------------------------------------------------- eval

def cmd_eval(checkpoint_path, eval_dataset_path, out_path=None,
             metadata: dict | None = None) -> evaluation.EvalReport:
    """Evaluate a checkpoint on an independent dataset; warns (but proceeds)
    when the eval set is the training set."""
    params, model_config, train_config, doc = read_checkpoint(checkpoint_path)
    header, records = read_dataset(eval_dataset_path)
    mismatches = []
    summary = doc.get("dataset_summary") or {}
    for key, have in (("num_qubits", header["circuit"]["num_qubits"]),
                      ("probe_a", header["probe_a"]),
                      ("probe_b", header["probe_b"])):
        if key in summary and summary[key] != have:
            mismatches.append(f"{key}: checkpoint trained with {summary[key]}, "
                              f"eval dataset has {have}")
    env_len = header["circuit"]["num_qubits"] - 2
    if env_len + 1 != model_config.max_seq_len:
        mismatches.append(
            f"dataset L={header['circuit']['num_qubits']} needs seq len {env_len + 1}, "
            f"checkpoint has max_seq_len={model_config.max_seq_len}")
    ckpt_fp = doc["dataset_fingerprint"]
    if mismatches:
        raise IncompatibleArtifacts("; ".join(mismatches))
    if header["fingerprint"] == ckpt_fp:
        print("warning: evaluating on the training dataset", file=sys.stderr)
    meta = {
        "n_e": header["n_records"],
        "t": header["circuit"]["depth"],
        "circuit_seed": header["circuit"]["seed"],
        "dataset_fingerprint": header["fingerprint"],
        "checkpoint_fingerprint": ckpt_fp,
        "format_version": FORMAT_VERSION,
    }
    meta.update(metadata or {})
    report = evaluation.estimate_delta(params, model_config, records, metadata=meta)
    if out_path is not None:
        with open(out_path, "w") as fh:
            json.dump({
                "format_version": FORMAT_VERSION,
                "kind": "eval_report",
                "delta_mean": report.delta_mean,
                "delta_stderr": report.delta_stderr,
                "num_eval_records": report.num_eval_records,
                "mean_output_entropy": report.mean_output_entropy,
                "mean_reduced_entropy_a": report.mean_reduced_entropy_a,
                "metadata": report.metadata,
            }, fh, indent=2)
    return report


# ------------------------------------------------------------------ oracle

def cmd_oracle(spec: circuits.CircuitSpec, checkpoint_path=None,
               seed: int | None = None, out_path=None) -> dict:
    """Exact enumeration report: MIE always; with a checkpoint also the exact
    Delta and the outcome-averaged entropy-bound sandwich."""
    if seed is not None:
        spec = circuits.CircuitSpec(**{**circuit_spec_to_dict(spec), "seed": seed})
    state = circuits.run_circuit(spec)
    a, b = spec.probes
    report = {
        "format_version": FORMAT_VERSION,
        "kind": "oracle_report",
        "circuit": circuit_spec_to_dict(spec),
        "mie": evaluation.exact_mie(state, a, b),
    }
    if checkpoint_path is not None:
        params, model_config, _, _ = read_checkpoint(checkpoint_path)
        report["exact_delta"] = evaluation.exact_delta(params, model_config, state, a, b)
        report.update(evaluation.exact_bounds_summary(params, model_config, state, a, b))
    if out_path is not None:
        with open(out_path, "w") as fh:
            json.dump(report, fh, indent=2)
    return report


# ------------------------------------------------------------------- sweep

@dataclass
class SweepConfig:
    geometry: str
    num_qubits: int
    depths: list[float]
    n_m_values: list[int]
    presets: list[str]
    n_e: int
    realizations: int
    master_seed: int
    out_dir: str
    rows: int | None = None
    cols: int | None = None
    train_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.depths and self.n_m_values and self.presets):
            raise ConfigError("depths, n_m_values and presets must be nonempty")
        if self.realizations < 1:
            raise ConfigError("realizations must be >= 1")

    def cells(self):
        for r in range(self.realizations):
            for t in self.depths:
                for n_m in self.n_m_values:
                    for preset in self.presets:
                        yield r, t, n_m, preset


ROW_FIELDS = ["realization", "t", "n_m", "preset", "n_p",
              "delta", "delta_stderr", "out_entropy", "final_loss"]
AGG_FIELDS = ["t", "n_m", "preset", "delta_mean", "delta_se_over_M", "M"]


def _cell_dir(cfg: SweepConfig, r, t, n_m, preset) -> Path:
    return Path(cfg.out_dir) / "cells" / f"r{r}_t{t}_nm{n_m}_{preset}"


def run_cell(cfg: SweepConfig, r: int, t: float, n_m: int, preset: str) -> dict:
    """Generate data, train and evaluate one sweep cell; resumable through the
    cell.json artifact.  Seeds hash in the axis values themselves, so adding
    sweep points never changes existing cells; the circuit and the eval shots
    are shared across (n_m, preset) at fixed (realization, t)."""
    cell = _cell_dir(cfg, r, t, n_m, preset)
    done = cell / "cell.json"
    if done.exists():
        with open(done) as fh:
            row = json.load(fh)
        if row.get("format_version") == FORMAT_VERSION:
            return row
    cell.mkdir(parents=True, exist_ok=True)
    ms = cfg.master_seed
    spec = circuits.CircuitSpec(
        num_qubits=cfg.num_qubits, depth=t, geometry=cfg.geometry,
        rows=cfg.rows, cols=cfg.cols, seed=child_seed(ms, "circuit", r, t))
    train_path = cell / "train.ndjson"
    eval_path = cell / "eval.ndjson"
    ckpt_path = cell / "model.ckpt.json"
    train_header = cmd_gen(spec, n_m, child_seed(ms, "gen", r, t, n_m), train_path)
    cmd_gen(spec, cfg.n_e, child_seed(ms, "eval", r, t), eval_path)
    cmd_train(train_path, preset, cfg.train_overrides,
              child_seed(ms, "train", r, t, n_m, preset), ckpt_path)
    report = cmd_eval(ckpt_path, eval_path, cell / "eval_report.json",
                      metadata={"realization": r, "preset": preset, "n_m": n_m})
    with open(ckpt_path) as fh:
        ckpt = json.load(fh)
    n_p = sum(int(np.prod(block["shape"])) for block in ckpt["params"])
    row = {
        "format_version": FORMAT_VERSION,
        "realization": r, "t": t, "n_m": n_m, "preset": preset,
        "n_p": n_p,
        "delta": report.delta_mean,
        "delta_stderr": report.delta_stderr,
        "out_entropy": report.mean_output_entropy,
        "final_loss": ckpt["final_loss"],
        "train_fingerprint": train_header["fingerprint"],
    }
    with open(done, "w") as fh:
        json.dump(row, fh, indent=2)
    return row


def _write_csv(path, fieldnames, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([
                repr(v) if isinstance(v, float) else v for v in row])


def aggregate_rows(cfg: SweepConfig, rows: list[dict]) -> list[list]:
    """Mean and standard error of delta over realizations per (t, n_m, preset)."""
    out = []
    for t in cfg.depths:
        for n_m in cfg.n_m_values:
            for preset in cfg.presets:
                deltas = [row["delta"] for row in rows
                          if row["t"] == t and row["n_m"] == n_m
                          and row["preset"] == preset]
                if not deltas:
                    continue
                m = len(deltas)
                mean = float(np.mean(deltas))
                se = float(np.std(deltas, ddof=1) / np.sqrt(m)) if m > 1 else 0.0
                out.append([t, n_m, preset, mean, se, m])
    return out


def cmd_sweep(cfg: SweepConfig) -> tuple[Path, Path, int]:
    """Run every cell (skipping completed ones), then assemble results.csv and
    aggregate.csv.  Returns the two paths and the number of failed cells."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, failed = [], 0
    for r, t, n_m, preset in cfg.cells():
        try:
            rows.append(run_cell(cfg, r, t, n_m, preset))
        except Exception as exc:  # cell failures are logged, not fatal
            failed += 1
            print(f"cell (r={r}, t={t}, n_m={n_m}, {preset}) failed: {exc}",
                  file=sys.stderr)
    versions = {row["format_version"] for row in rows}
    if len(versions) > 1:
        raise IncompatibleArtifacts(f"mixed cell format versions: {versions}")
    preset_order = {p: i for i, p in enumerate(cfg.presets)}
    rows.sort(key=lambda row: (row["t"], row["n_m"],
                               preset_order.get(row["preset"], 99),
                               row["realization"]))
    rows_path = out_dir / "results.csv"
    agg_path = out_dir / "aggregate.csv"
    _write_csv(rows_path, ROW_FIELDS, [[row[f] for f in ROW_FIELDS] for row in rows])
    _write_csv(agg_path, AGG_FIELDS, aggregate_rows(cfg, rows))
    return rows_path, agg_path, failed
