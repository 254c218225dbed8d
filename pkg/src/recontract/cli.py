"""Scenario files in, one result row per (seed, mechanism) out.

A scenario is a YAML mapping whose keys mirror :class:`SimulationConfig`
plus ``name``, ``seeds`` and ``output``. Unknown keys are rejected. Absent
keys take the experiment defaults.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import re
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import yaml

from .cost import CommProfile, ComputeProfile
from .simulator import ConfigError, RunResult, SimulationConfig, run, run_baseline_static

MECHANISMS = ("rctim", "static")
ROW_FIELDS = (
    "scenario",
    "mechanism",
    "seed",
    "total_dc_utility",
    "final_accuracy",
    "total_payments",
    "renegotiation_accepted_count",
    "rounds_completed",
    "error",
)

_CONFIG_FIELDS = {f.name for f in dataclasses.fields(SimulationConfig)} - {"seed", "compute", "comm"}
_NESTED = {"compute": ComputeProfile, "comm": CommProfile}
_SCENARIO_KEYS = {"name", "seeds", "output"}


class ScenarioError(ValueError):
    pass


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads YAML 1.2 floats such as ``1e9`` and ``2.0e9``."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


@dataclass(frozen=True)
class ScenarioFile:
    name: str
    config: SimulationConfig
    seeds: tuple[int, ...] = (0,)
    output: str | None = None


def parse_scenario(text: str, source: str = "<string>") -> ScenarioFile:
    try:
        doc = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" line {mark.line + 1}" if mark is not None else ""
        raise ScenarioError(f"{source}:{where} cannot parse: {exc}") from None
    doc = {} if doc is None else doc
    if not isinstance(doc, dict):
        raise ScenarioError(f"{source}: top level must be a mapping")
    unknown = sorted(set(doc) - _CONFIG_FIELDS - _SCENARIO_KEYS - set(_NESTED))
    if unknown:
        raise ScenarioError(f"{source}: unknown key(s) {', '.join(map(repr, unknown))}")

    kwargs = {k: v for k, v in doc.items() if k in _CONFIG_FIELDS}
    for key, cls in _NESTED.items():
        if key in doc:
            sub = doc[key] or {}
            if not isinstance(sub, dict):
                raise ScenarioError(f"{source}: {key!r} must be a mapping")
            allowed = {f.name for f in dataclasses.fields(cls)}
            bad = sorted(set(sub) - allowed)
            if bad:
                raise ScenarioError(f"{source}: unknown key(s) under {key!r}: {', '.join(map(repr, bad))}")
            try:
                kwargs[key] = cls(**sub)
            except (TypeError, ValueError) as exc:
                raise ScenarioError(f"{source}: invalid {key!r}: {exc}") from None
    seeds = doc.get("seeds", [0])
    if isinstance(seeds, int):
        seeds = [seeds]
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        raise ScenarioError(f"{source}: 'seeds' must be an integer or a non-empty list of integers")
    try:
        config = SimulationConfig(**kwargs)
    except ConfigError as exc:
        raise ScenarioError(f"{source}: invalid field {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{source}: {exc}") from None
    name = str(doc.get("name", Path(source).stem))
    return ScenarioFile(name, config, tuple(seeds), doc.get("output"))


def load_scenario(path) -> ScenarioFile:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc.strerror}") from None
    return parse_scenario(text, str(path))


@dataclass(frozen=True)
class ResultRow:
    scenario: str
    mechanism: str
    seed: int
    total_dc_utility: float = float("nan")
    final_accuracy: float = float("nan")
    total_payments: float = float("nan")
    renegotiation_accepted_count: int = 0
    rounds_completed: int = 0
    error: str = ""

    @classmethod
    def from_result(cls, scenario: str, result: RunResult) -> "ResultRow":
        return cls(
            scenario,
            result.mechanism,
            result.seed,
            result.total_dc_utility,
            result.final_accuracy,
            result.total_payments,
            result.renegotiation_accepted,
            result.rounds_completed,
            result.error or "",
        )


def run_suite(scenario: ScenarioFile, mechanisms: Sequence[str] = MECHANISMS) -> list[ResultRow]:
    runners = {"rctim": run, "static": run_baseline_static}
    rows = []
    for seed in scenario.seeds:
        config = dataclasses.replace(scenario.config, seed=seed)
        for mech in mechanisms:
            try:
                rows.append(ResultRow.from_result(scenario.name, runners[mech](config)))
            except Exception as exc:  # one failed run must not sink the sweep
                rows.append(ResultRow(scenario.name, mech, seed, error=f"{type(exc).__name__}: {exc}"))
    rows.sort(key=lambda r: (r.seed, r.mechanism))
    return rows


def _fmt(value):
    if isinstance(value, float):
        return float(f"{value:.6g}")
    return value


def _record(row: ResultRow) -> dict:
    return {k: _fmt(getattr(row, k)) for k in ROW_FIELDS}


def render(rows: Sequence[ResultRow], format: str = "csv") -> str:
    buf = io.StringIO()
    if format == "csv":
        w = csv.DictWriter(buf, fieldnames=ROW_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            rec = _record(row)
            w.writerow({k: f"{v:.6g}" if isinstance(v, float) else v for k, v in rec.items()})
    elif format == "jsonl":
        for row in rows:
            buf.write(json.dumps(_record(row), allow_nan=True) + "\n")
    else:
        raise ValueError(f"unknown format {format!r}")
    return buf.getvalue()


def emit(rows: Sequence[ResultRow], format: str = "csv", path=None) -> None:
    text = render(rows, format)
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="recontract", description="Contract-renegotiation simulator")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario file")
    r.add_argument("scenario", help="YAML scenario file")
    r.add_argument("--seed-override", type=int, nargs="+", metavar="SEED", help="replace the scenario's seed list")
    r.add_argument("--out", help="output path ('-' for stdout); defaults to the scenario's 'output' or stdout")
    r.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    r.add_argument("--mechanism", choices=("rctim", "static", "both"), default="both")
    r.add_argument("--partition", type=int, metavar="A", help="override the renegotiation partition a")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scenario = load_scenario(args.scenario)
        if args.seed_override:
            scenario = dataclasses.replace(scenario, seeds=tuple(args.seed_override))
        if args.partition is not None:
            try:
                config = dataclasses.replace(scenario.config, partition=args.partition)
            except ConfigError as exc:
                raise ScenarioError(f"--partition: {exc}") from None
            scenario = dataclasses.replace(scenario, config=config)
        mechs = MECHANISMS if args.mechanism == "both" else (args.mechanism,)
        rows = run_suite(scenario, mechs)
        emit(rows, args.format, args.out or scenario.output)
    except (ScenarioError, OSError) as exc:
        print(f"recontract: {exc}", file=sys.stderr)
        return 2
    return 1 if any(r.error for r in rows) else 0


if __name__ == "__main__":
    sys.exit(main())
