"""Command line runner: ``cartan-ray run | list-presets | describe``.

Exit codes: 0 when every check passes, 1 on a failed check or a numerical
error, 2 on an unreadable or invalid config.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .experiments import EXPERIMENTS, run_experiment
from .inversion import GridField, export_grid
from .manifold import spec_from_config

log = logging.getLogger("cartan_ray")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

_FIELD_SCHEMA = {
    "type": "object",
    "properties": {"name": {"type": "string"}, "params": {"type": "object"}},
    "required": ["name"],
    "additionalProperties": False,
}

_METRIC_SCHEMA = {
    "type": "object",
    "properties": {
        "profile": {"type": "string"},
        "family": {"type": "string"},
        "params": {"type": "object"},
        "base_point": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
    },
    "required": ["profile"],
    "additionalProperties": False,
}


def _type_schema(value) -> dict:
    if isinstance(value, bool):
        return {"type": "boolean"}
    if isinstance(value, int):
        return {"type": "integer"}
    if isinstance(value, float):
        return {"type": "number"}
    if isinstance(value, str):
        return {"type": "string"}
    if isinstance(value, list):
        return {"type": "array"}
    return {}


def config_schema(experiment: str | None = None) -> dict:
    """JSON schema of a run config; with ``experiment`` the params and
    tolerances blocks are restricted to that experiment's keys."""
    params = {"type": "object"}
    tols = {"type": "object", "additionalProperties": {"type": "number"}}
    if experiment in EXPERIMENTS:
        exp = EXPERIMENTS[experiment]
        params = {"type": "object", "additionalProperties": False,
                  "properties": {k: _type_schema(v) for k, v in exp.params.items()}}
        tols = {"type": "object", "additionalProperties": False,
                "properties": {k: {"type": "number"} for k in exp.tolerances}}
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "type": "object",
        "properties": {
            "experiment": {"enum": sorted(EXPERIMENTS)},
            "description": {"type": "string"},
            "metric": _METRIC_SCHEMA,
            "fields": {"type": "array", "items": _FIELD_SCHEMA},
            "params": params,
            "tolerances": tols,
            "seed": {"type": "integer", "minimum": 0},
            "output": {"type": "string"},
        },
        "required": ["experiment"],
        "additionalProperties": False,
    }


class ConfigError(Exception):
    pass


def parse_config(text: str, source: str = "<config>") -> dict:
    """Parse and validate a config document; raises :class:`ConfigError`
    with a ``source:line:col: message`` diagnostic."""
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    for schema in (config_schema(), config_schema(cfg.get("experiment") if isinstance(cfg, dict) else None)):
        try:
            jsonschema.validate(cfg, schema)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"{source}: {where}: {exc.message}") from None
    return cfg


def preset_names() -> list:
    return list(EXPERIMENTS)


def preset_text(name: str) -> str:
    return resources.files("cartan_ray").joinpath("presets", f"{name}.json").read_text()


def preset_config(name: str) -> dict:
    """Full config for a registered preset: the shipped JSON file if present,
    otherwise the registry defaults."""
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown preset {name!r}")
    try:
        return parse_config(preset_text(name), f"preset {name}")
    except FileNotFoundError:
        return default_config(name)


def default_config(name: str) -> dict:
    exp = EXPERIMENTS[name]
    return {"experiment": name, "description": exp.description, "metric": exp.metric,
            "fields": exp.fields, "params": exp.params, "tolerances": exp.tolerances,
            "seed": 0, "output": f"results/{name}"}


def _clean(obj):
    """JSON-safe copy: numpy to builtin, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, GridField):
        return {"n": obj.n, "domain": list(obj.domain)}
    return obj


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _write_tables(out: Path, tables: dict, spec, seed: int) -> None:
    for name, table in tables.items():
        if isinstance(table, GridField):
            export_grid(table, out / name, spec, seed)
            continue
        header, rows = table
        with open(out / f"{name}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def run(cfg: dict, out: Path, threads: int) -> int:
    """Execute a validated config and write its artifacts under ``out``."""
    spec = spec_from_config(cfg.get("metric", EXPERIMENTS[cfg["experiment"]].metric))
    seed = int(cfg.get("seed", 0))
    res = run_experiment(cfg["experiment"], spec, cfg.get("fields"), cfg.get("params"),
                         cfg.get("tolerances"), seed, threads)
    out.mkdir(parents=True, exist_ok=True)
    exp = EXPERIMENTS[cfg["experiment"]]
    resolved = {"experiment": cfg["experiment"], "metric": spec.to_config(),
                "fields": cfg.get("fields", exp.fields),
                "params": {**exp.params, **cfg.get("params", {})},
                "tolerances": {**exp.tolerances, **cfg.get("tolerances", {})}, "seed": seed}
    _write_json(out / "summary.json", {"config": resolved, "metrics": res.metrics,
                                       "checks": res.checks, "passed": res.passed})
    _write_json(out / "timing.json", {"threads": threads, **res.timings})
    _write_tables(out, res.tables, spec, seed)
    for c in res.checks:
        shown = c.get("value", res.timings.get(c["name"]))
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']}: {shown:.6g} {c['op']} {c['limit']:g}")
    print(f"{cfg['experiment']}: {'passed' if res.passed else 'FAILED'} -> {out}")
    return EXIT_OK if res.passed else EXIT_FAIL


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cartan-ray",
                                 description="Geodesic ray transform experiments on 2D "
                                             "Cartan-Hadamard surfaces.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a preset or a config file")
    r.add_argument("preset", nargs="?", help="preset name (see list-presets)")
    r.add_argument("--config", help="path to a JSON config")
    r.add_argument("--out", help="output directory (default: config 'output' or results/<name>)")
    r.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    r.add_argument("--seed-override", type=int, default=None)
    sub.add_parser("list-presets", help="list the preset experiments")
    d = sub.add_parser("describe", help="print a preset config")
    d.add_argument("preset")
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "list-presets":
            for name in preset_names():
                print(f"{name} → {EXPERIMENTS[name].description}")
            return EXIT_OK
        if args.command == "describe":
            cfg = preset_config(args.preset)
            print(json.dumps(cfg, indent=2, sort_keys=True))
            print(f"schema: {json.dumps(config_schema(args.preset)['properties']['params'])}")
            return EXIT_OK
        if bool(args.preset) == bool(args.config):
            raise ConfigError("give exactly one of a preset name or --config")
        if args.config:
            try:
                text = Path(args.config).read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"{args.config}: {exc.strerror}") from None
            cfg = parse_config(text, args.config)
        else:
            cfg = preset_config(args.preset)
        if args.seed_override is not None:
            if args.seed_override < 0:
                raise ConfigError("--seed-override must be >= 0")
            cfg["seed"] = args.seed_override
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        out = Path(args.out or cfg.get("output") or f"results/{cfg['experiment']}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run(cfg, out, args.threads)
    except (ArithmeticError, FloatingPointError, RuntimeError, ValueError) as exc:
        print(f"error: numerical failure in {cfg['experiment']}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
