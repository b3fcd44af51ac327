"""Command-line front end: manifest parsing, dispatch and report emission.

Manifest grammar (TOML, nesting depth at most 2)::

    output = "results"        # report directory
    format = ["json", "csv"]  # or the string "json,csv"
    seed = 7                  # default seed for every experiment
    jobs = 2                  # worker threads per experiment
    verbosity = 1             # 0 quiet, 1 summary, 2 progress

    [identity]                # one table per experiment; the table name is its name
    kind = "krein_identity"   # optional when the name is already a kind
    b_values = [0, 1, 10]

    [identity.tolerances]     # optional per-criterion overrides
    identity = 1e-9

Table keys are the fields of :class:`~kreinlab.experiments.ExperimentConfig`.
Unknown keys are rejected by name.  Precedence for output directory and job
count is command-line flag, then ``KREINLAB_OUTPUT`` / ``KREINLAB_JOBS``,
then the manifest.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import List, Optional, Sequence

import jsonschema
import tomli

from .experiments import (
    DEFAULT_TOLERANCES,
    EXPERIMENTS,
    ExperimentConfig,
    ExperimentReport,
    config_fields,
    run_experiment,
)

log = logging.getLogger("kreinlab")

TOP_LEVEL_KEYS = {"output", "format", "seed", "jobs", "verbosity"}
FORMATS = ("json", "csv")
_TUPLE_FIELDS = {"b_values", "t_values", "r0_values", "ladder", "bih_ladder", "oracle_ladder"}
_INT_FIELDS = {"N", "M", "p1_modes", "p1_inner_nodes", "p1_exterior_nodes", "n_random", "thresholds", "seed", "jobs"}
_STR_FIELDS = {"kind"}


class ManifestError(ValueError):
    pass


@dataclass
class RunManifest:
    experiments: List[ExperimentConfig] = field(default_factory=list)
    output: Path = Path("kreinlab-output")
    formats: tuple = FORMATS
    verbosity: int = 1


def _parse_formats(value) -> tuple:
    items = value.split(",") if isinstance(value, str) else list(value)
    items = [str(i).strip().lower() for i in items if str(i).strip()]
    bad = [i for i in items if i not in FORMATS]
    if bad:
        raise ManifestError(f"format: unknown format {bad[0]!r}; expected a subset of {list(FORMATS)}")
    return tuple(dict.fromkeys(items))


def _check_number(where: str, value, integer: bool):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ManifestError(f"{where}: expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ManifestError(f"{where}: expected an integer, got {value!r}")


def _experiment_config(name: str, table: dict, defaults: dict) -> ExperimentConfig:
    known = set(config_fields()) - {"name"}
    kw = dict(defaults)
    for key, value in table.items():
        where = f"{name}.{key}"
        if key not in known:
            raise ManifestError(f"unknown key {where!r}")
        if key == "tolerances":
            if not isinstance(value, dict):
                raise ManifestError(f"{where}: expected a table")
            for tk, tv in value.items():
                if isinstance(tv, dict):
                    raise ManifestError(f"{where}.{tk}: nesting deeper than two levels is not allowed")
                if tk not in DEFAULT_TOLERANCES:
                    raise ManifestError(f"unknown key {where + '.' + tk!r}")
                _check_number(f"{where}.{tk}", tv, integer=False)
            kw[key] = dict(value)
        elif isinstance(value, dict):
            raise ManifestError(f"{where}: only 'tolerances' may be a sub-table")
        elif key in _TUPLE_FIELDS:
            if not isinstance(value, list):
                raise ManifestError(f"{where}: expected an array")
            for v in value:
                _check_number(where, v, integer=key.endswith("ladder"))
            kw[key] = tuple(value)
        elif key in _STR_FIELDS:
            if not isinstance(value, str):
                raise ManifestError(f"{where}: expected a string")
            kw[key] = value
        else:
            _check_number(where, value, integer=key in _INT_FIELDS)
            kw[key] = int(value) if key in _INT_FIELDS else float(value)
    kind = kw.get("kind") or name
    if kind not in EXPERIMENTS:
        raise ManifestError(f"{name}: unknown experiment kind {kind!r}; set 'kind' to one of {sorted(EXPERIMENTS)}")
    try:
        return ExperimentConfig(name=name, **kw)
    except ValueError as exc:
        raise ManifestError(f"{name}: {exc}") from None


def parse_manifest(path) -> RunManifest:
    """Read and validate a TOML run manifest, filling defaults."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomli.load(fh)
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc.strerror}") from None
    except tomli.TOMLDecodeError as exc:
        raise ManifestError(f"malformed manifest {path}: {exc}") from None

    man = RunManifest()
    defaults = {}
    tables = {}
    for key, value in doc.items():
        if isinstance(value, dict):
            tables[key] = value
        elif key not in TOP_LEVEL_KEYS:
            raise ManifestError(f"unknown key {key!r}")
        elif key == "output":
            if not isinstance(value, str):
                raise ManifestError("output: expected a string")
            man.output = Path(value)
        elif key == "format":
            man.formats = _parse_formats(value)
        elif key == "verbosity":
            _check_number(key, value, integer=True)
            man.verbosity = int(value)
        else:
            _check_number(key, value, integer=True)
            if key == "jobs" and value < 1:
                raise ManifestError(f"jobs must be >= 1, got {value}")
            defaults[key] = int(value)
    man.experiments = [_experiment_config(name, table, defaults) for name, table in tables.items()]
    return man


# --- emission ---------------------------------------------------------------


def report_schema() -> dict:
    text = resources.files("kreinlab").joinpath("report.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate_report(doc: dict):
    jsonschema.validate(doc, report_schema())


def write_report(rep: ExperimentReport, outdir: Path, formats: Sequence[str]) -> List[Path]:
    """Write the JSON report and one CSV per attached series."""
    written = []
    if "json" in formats:
        doc = rep.to_json()
        validate_report(doc)
        p = outdir / f"{rep.name}.json"
        p.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(p)
    if "csv" in formats:
        for key in sorted(rep.series):
            p = outdir / f"{rep.name}_{key}.csv"
            with open(p, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["l", "value", "mode", "multiplicity"])
                for l, v, m, k in rep.series[key].rows():
                    w.writerow([l, repr(v), m, k])
            written.append(p)
    return written


def dispatch(manifest: RunManifest, stream=None) -> int:
    """Run every experiment in order and write its outputs.

    Returns 0 when every pass flag of every experiment is true, 1 otherwise.
    Output-directory and write failures raise ``OSError`` and abort the run.
    """
    stream = stream or sys.stdout
    out = manifest.output
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(13, "output directory is not writable", str(out))
    rows = []
    for cfg in manifest.experiments:
        log.info("running %s (%s)", cfg.name, cfg.kind)
        rep = run_experiment(cfg)
        if rep.error:
            log.error("%s failed: %s", cfg.name, rep.error)
        write_report(rep, out, manifest.formats)
        failed = [k for k, v in rep.passed.items() if not v]
        status = "ERROR" if rep.error else ("PASS" if rep.all_passed else "FAIL")
        rows.append((cfg.name, cfg.kind, status, rep.wall_time, ", ".join(failed) or rep.error or ""))
    if manifest.verbosity > 0:
        print(f"{'experiment':<20} {'kind':<15} {'status':<6} {'time[s]':>8}  failed", file=stream)
        for name, kind, status, t, failed in rows:
            print(f"{name:<20} {kind:<15} {status:<6} {t:8.1f}  {failed}", file=stream)
    return 0 if all(r[2] == "PASS" for r in rows) else 1


# --- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kreinlab", description="Run boundary-realization experiments from a manifest.")
    p.add_argument("--list", action="store_true", help="list the experiments and what they check, then exit")
    p.add_argument("--output", help="report directory (overrides KREINLAB_OUTPUT and the manifest)")
    p.add_argument("--format", help="comma-separated subset of json,csv")
    p.add_argument("--jobs", type=int, help="worker threads per experiment (overrides KREINLAB_JOBS)")
    p.add_argument("--seed", type=int, help="seed for randomized checks in every experiment")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging")
    sub = p.add_subparsers(dest="command")
    run = sub.add_parser("run", help="run a manifest")
    run.add_argument("manifest", help="path to a TOML manifest")
    return p


def _apply_overrides(man: RunManifest, args) -> RunManifest:
    output = args.output or os.environ.get("KREINLAB_OUTPUT")
    if output:
        man.output = Path(output)
    if args.format:
        man.formats = _parse_formats(args.format)
    jobs = args.jobs
    if jobs is None and os.environ.get("KREINLAB_JOBS"):
        try:
            jobs = int(os.environ["KREINLAB_JOBS"])
        except ValueError:
            raise ManifestError(f"KREINLAB_JOBS must be an integer, got {os.environ['KREINLAB_JOBS']!r}") from None
    if jobs is not None and jobs < 1:
        raise ManifestError(f"jobs must be >= 1, got {jobs}")
    updates = {}
    if jobs is not None:
        updates["jobs"] = jobs
    if args.seed is not None:
        updates["seed"] = args.seed
    if updates:
        man.experiments = [replace(c, **updates) for c in man.experiments]
    man.verbosity = max(man.verbosity, 0) + args.verbose
    return man


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list:
        for name, entry in EXPERIMENTS.items():
            print(f"{name:<16} {entry.anchor}")
        return 0
    if args.command != "run":
        parser.print_usage(sys.stderr)
        return 2
    try:
        man = _apply_overrides(parse_manifest(args.manifest), args)
    except ManifestError as exc:
        print(f"kreinlab: error: {exc}", file=sys.stderr)
        return 2
    level = logging.WARNING if man.verbosity <= 1 else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return dispatch(man)
    except OSError as exc:
        print(f"kreinlab: I/O error: {exc}", file=sys.stderr)
        return 2
