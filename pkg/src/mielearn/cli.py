"""Command-line front end.

Each subcommand takes a JSON config file plus a few flag overrides:

    mielearn gen    config.json [--seed S] [--out PATH]
    mielearn train  config.json [--seed S] [--out PATH] [--epochs N]
    mielearn eval   config.json [--out PATH]
    mielearn oracle config.json [--seed S] [--out PATH]
    mielearn sweep  config.json [--seed S] [--out DIR]

Exit codes: 0 success, 1 runtime/cell failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__, pipeline
from .errors import ConfigError, IncompatibleArtifacts, MielearnError


def _load_config(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"config is missing required field {key!r}")
    return cfg[key]


def _run_gen(args) -> int:
    cfg = _load_config(args.config)
    spec = pipeline.circuit_spec_from_dict(_require(cfg, "circuit"))
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    out = args.out or _require(cfg, "out")
    header = pipeline.cmd_gen(spec, int(_require(cfg, "n_records")), seed, out)
    print(f"wrote {header['n_records']} records to {out} "
          f"(fingerprint {header['fingerprint'][:12]})")
    return 0


def _run_train(args) -> int:
    cfg = _load_config(args.config)
    overrides = dict(cfg.get("train", {}))
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    out = args.out or _require(cfg, "out")
    doc = pipeline.cmd_train(_require(cfg, "dataset"), _require(cfg, "preset"),
                             overrides, seed, out)
    print(f"wrote checkpoint {out} (final loss {doc['final_loss']:.6f})")
    return 0


def _run_eval(args) -> int:
    cfg = _load_config(args.config)
    out = args.out or _require(cfg, "out")
    report = pipeline.cmd_eval(_require(cfg, "checkpoint"),
                               _require(cfg, "dataset"), out)
    print(f"delta = {report.delta_mean:.6f} +- {report.delta_stderr:.6f} "
          f"over {report.num_eval_records} records -> {out}")
    return 0


def _run_oracle(args) -> int:
    cfg = _load_config(args.config)
    spec = pipeline.circuit_spec_from_dict(_require(cfg, "circuit"))
    report = pipeline.cmd_oracle(spec, cfg.get("checkpoint"), args.seed,
                                 args.out or cfg.get("out"))
    line = f"mie = {report['mie']:.6f}"
    if "exact_delta" in report:
        line += f", exact delta = {report['exact_delta']:.6f}"
    print(line)
    return 0


def _run_sweep(args) -> int:
    cfg = _load_config(args.config)
    fields = {f: cfg[f] for f in (
        "geometry", "num_qubits", "depths", "n_m_values", "presets",
        "n_e", "realizations", "master_seed", "out_dir", "rows", "cols",
        "train_overrides") if f in cfg}
    if args.seed is not None:
        fields["master_seed"] = args.seed
    if args.out is not None:
        fields["out_dir"] = args.out
    if args.epochs is not None:
        fields.setdefault("train_overrides", {})["epochs"] = args.epochs
    try:
        sweep_cfg = pipeline.SweepConfig(**fields)
    except TypeError as exc:
        raise ConfigError(f"bad sweep config: {exc}") from exc
    rows_path, agg_path, failed = pipeline.cmd_sweep(sweep_cfg)
    print(f"results: {rows_path}\naggregate: {agg_path}")
    if failed:
        print(f"{failed} cell(s) failed", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mielearn",
        description="Learnability of measurement-induced entanglement from "
                    "measurement records")
    parser.add_argument("--version", action="version",
                        version=f"mielearn {__version__} "
                                f"(format_version {pipeline.FORMAT_VERSION})")
    sub = parser.add_subparsers(dest="command", required=True)
    runners = {"gen": _run_gen, "train": _run_train, "eval": _run_eval,
               "oracle": _run_oracle, "sweep": _run_sweep}
    for name in runners:
        p = sub.add_parser(name)
        p.add_argument("config", help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--epochs", type=int, default=None)
    args = parser.parse_args(argv)
    try:
        return runners[args.command](args)
    except (ConfigError, IncompatibleArtifacts) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MielearnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint():
    raise SystemExit(main())
