"""Command-line entry point: ``holoq {phase,crossover,verify}``.

Exit status is 0 on success, 1 on a computation error (or a failed verify
check) and 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

import numpy as np

from . import __version__
from .errors import ConfigError, HoloqError
from .experiments import (
    ExperimentConfig,
    default_config,
    merge_config,
    run_crossover,
    run_phase,
    run_verify,
    set_dotted,
)
from .svg import line_plot

PHASE_COLUMNS = ("channel", "beta", "block_id", "re_gamma", "im_gamma",
                 "re_gamma_mod_2pi", "n_grid", "cluster_tol")


def _cell(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def load_config(config_path, overrides) -> ExperimentConfig:
    raw = {}
    if config_path:
        try:
            with open(config_path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
    # file first, then overrides
    cfg = merge_config(default_config(), raw)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, text = item.split("=", 1)
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        set_dotted(cfg, key.strip(), value)
    return ExperimentConfig.from_dict(cfg)


# --- commands ---------------------------------------------------------------------

def cmd_phase(cfg: ExperimentConfig) -> int:
    rows = run_phase(cfg)
    out = cfg.out
    if "csv" in cfg.formats:
        _write(os.path.join(out, "phase.csv"),
               _csv_text(PHASE_COLUMNS, [[r[c] for c in PHASE_COLUMNS] for r in rows]))
    if "json" in cfg.formats:
        _write(os.path.join(out, "phase.json"), _json_text({"rows": rows}))
    if "svg" in cfg.formats:
        series = {}
        for ch in cfg.channels:
            sel = [r for r in rows if r["channel"] == ch and r["block_id"] == "-+"]
            series[ch] = ([r["beta"] for r in sel], [r["re_gamma_mod_2pi"] / np.pi for r in sel])
        _write(os.path.join(out, "phase.svg"),
               line_plot(series, "decoherence strength", "Re gamma / pi", "geometric phase"))
    return 0


def cmd_crossover(cfg: ExperimentConfig) -> int:
    reports = run_crossover(cfg)
    nblocks = max(r.crossover.shape[1] for r in reports)
    header = ["B", "T", "max_ratio"] + [f"tc_{i}" for i in range(nblocks)]
    rows = []
    for rep in reports:
        ratio = rep.max_ratio
        for i, T in enumerate(rep.T_grid):
            rows.append([float(rep.metadata["B"]), float(T), float(ratio[i])]
                        + [float(x) for x in rep.crossover[i]])
    out = cfg.out
    if "csv" in cfg.formats:
        _write(os.path.join(out, "crossover.csv"), _csv_text(header, rows))
    if "json" in cfg.formats:
        doc = [{
            "metadata": rep.metadata,
            "T": [float(t) for t in rep.T_grid],
            "max_ratio": [float(x) for x in rep.max_ratio],
            "crossover": rep.crossover.tolist(),
            "eigenvalues": [[float(z.real), float(z.imag)] for z in rep.eigenvalues],
        } for rep in reports]
        _write(os.path.join(out, "crossover.json"), _json_text({"reports": doc}))
    if "svg" in cfg.formats:
        series = {f"B={rep.metadata['B']:g}": (rep.T_grid, rep.max_ratio) for rep in reports}
        _write(os.path.join(out, "crossover.svg"),
               line_plot(series, "T", "max T_c / T", "crossover ratio"))
    return 0


def cmd_verify(cfg: ExperimentConfig) -> int:
    report = run_verify(cfg)
    text = _json_text(report)
    _write(os.path.join(cfg.out, "verify.json"), text)
    sys.stdout.write(text)
    return 0 if report["all_passed"] else 1


COMMANDS = {"phase": cmd_phase, "crossover": cmd_crossover, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="holoq",
        description="Geometric phases of open quantum systems under adiabatic cyclic driving.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("phase", "geometric phase versus decoherence strength"),
                            ("crossover", "crossover-time ratio versus total time"),
                            ("verify", "run the invariant checks, print a JSON report")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry (dotted key, JSON value)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--formats", help="comma-separated subset of csv,json,svg")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    overrides = list(args.set)
    if args.out is not None:
        overrides.append(f"out={json.dumps(args.out)}")
    if args.formats is not None:
        overrides.append(f"formats={json.dumps(args.formats.split(','))}")
    try:
        cfg = load_config(args.config, overrides)
        os.makedirs(cfg.out, exist_ok=True)
    except ConfigError as exc:
        print(f"holoq: config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"holoq: cannot create output directory: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"holoq: config error: {exc}", file=sys.stderr)
        return 2
    except (HoloqError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"holoq: computation failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
