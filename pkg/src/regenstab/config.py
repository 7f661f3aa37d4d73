"""Run configuration: JSON document -> validated `RunConfig`.

Validation has two stages. The JSON schema catches structural problems and
reports the offending path (``model.T``, ``system.modes.1.0``); the
invariant stage then builds the model objects and maps their errors back to
config paths.
"""

from dataclasses import dataclass
import json

import jsonschema
import numpy as np

from . import fixtures
from .errors import ConfigError
from .process import (
    CONTINUOUS, DISCRETE, POSITIVITY_ASSERTED, POSITIVITY_CHECK, Cycle,
    DiscreteMaintenanceModel, FiniteSupportModel, MaintenanceModel,
    PeriodicModel, SwitchedSystem,
)

TASKS = ("analyze", "sweep", "simulate", "floquet-check")
METHODS = ("auto", "analytic", "exact", "monte-carlo")

_MATRIX = {
    "type": "array", "minItems": 1,
    "items": {"type": "array", "minItems": 1, "items": {"type": "number"}},
}
_SEGMENTS = {
    "type": "array", "minItems": 1,
    "items": {
        "type": "array", "minItems": 2, "maxItems": 2,
        "prefixItems": [{"type": "integer", "minimum": 1}, {"type": "number"}],
        "items": {"type": "number"},
    },
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["system", "model"],
    "additionalProperties": False,
    "properties": {
        "system": {
            "type": "object",
            "required": ["modes"],
            "additionalProperties": False,
            "properties": {
                "time_kind": {"enum": [CONTINUOUS, DISCRETE]},
                "modes": {
                    "type": "object", "minProperties": 1,
                    "patternProperties": {"^[1-9][0-9]*$": _MATRIX},
                    "additionalProperties": False,
                },
            },
        },
        "model": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["maintenance", "finite-support", "periodic"]},
                "T": {"type": "number"},
                "delta": {"type": "number"},
                "lambda": {"type": "number"},
                "segments": _SEGMENTS,
                "cycles": {
                    "type": "array", "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["p", "segments"],
                        "additionalProperties": False,
                        "properties": {"p": {"type": "number", "minimum": 0},
                                       "segments": _SEGMENTS},
                    },
                },
            },
        },
        "m": {"type": "integer", "minimum": 1, "maximum": 8},
        "task": {"enum": list(TASKS)},
        "method": {"enum": list(METHODS)},
        "samples": {"type": "integer", "minimum": 1},
        "paths": {"type": "integer", "minimum": 1},
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "range": {"type": "string", "pattern": r"^[^:]+:[^:]+:[0-9]+$"},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "workers": {"type": "integer", "minimum": 1},
        "x0": {"type": "array", "minItems": 1, "items": {"type": "number"}},
        "assert_positive": {"type": "boolean"},
        "strict": {"type": "boolean"},
        "figures": {"type": "boolean"},
        "out": {"type": "string"},
    },
}

DEFAULTS = {
    "m": 2,
    "task": "analyze",
    "method": "auto",
    "samples": 100_000,
    "paths": 1000,
    "horizon": 30.0,
    "dt": 0.05,
    "range": "0.1:2.0:39",
    "workers": 1,
    "assert_positive": False,
    "strict": False,
    "figures": True,
    "out": "out",
}


@dataclass
class RunConfig:
    system: SwitchedSystem
    model: object
    model_spec: dict
    m: int
    task: str
    method: str
    samples: int
    paths: int
    horizon: float
    dt: float
    sweep_range: tuple
    seed: int
    workers: int
    x0: np.ndarray
    positivity: str
    strict: bool
    figures: bool
    out: str

    @property
    def randomized(self):
        # every built-in model kind has an exact engine under method "auto"
        return self.task == "simulate" or (
            self.task in ("analyze", "sweep") and self.method == "monte-carlo")


def paper_fixture():
    """Config document for the built-in failure-prone controller example."""
    return {
        "system": {
            "time_kind": CONTINUOUS,
            "modes": {"1": fixtures.closed_loop().tolist(), "2": fixtures.PLANT_A.tolist()},
        },
        "model": {"kind": "maintenance", "T": 1.25, "delta": fixtures.PAPER_DELTA,
                  "lambda": fixtures.PAPER_RATE},
        "m": fixtures.PAPER_DEGREE,
    }


def load_document(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError("", f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"config file {path} is not valid JSON: {exc}") from None


def _path(parts):
    return ".".join(str(p) for p in parts) or "<root>"


def check_schema(doc):
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(_path(err.absolute_path), err.message)


def parse_range(text):
    try:
        a, b, steps = text.split(":")
        lo, hi, steps = float(a), float(b), int(steps)
    except ValueError:
        raise ConfigError("range", f"expected A:B:STEPS, got {text!r}") from None
    if not lo < hi:
        raise ConfigError("range", f"need A < B, got {text!r}")
    if steps < 2:
        raise ConfigError("range", "need at least 2 grid points")
    return lo, hi, steps


def _build_system(spec):
    time_kind = spec.get("time_kind", CONTINUOUS)
    mats = {}
    n = None
    for label, rows in spec["modes"].items():
        where = f"system.modes.{label}"
        size = len(rows)
        for i, row in enumerate(rows):
            if len(row) != size:
                raise ConfigError(f"{where}.{i}",
                                  f"matrix is not square: row {i} has {len(row)} entries, "
                                  f"expected {size}")
        if n is None:
            n = size
        elif size != n:
            raise ConfigError(where, f"dimension {size} differs from {n} of the other modes")
        mats[int(label)] = rows
    return SwitchedSystem(mats, time_kind=time_kind)


def _cycle(segments, where):
    try:
        return Cycle(tuple((int(s), float(d)) for s, d in segments))
    except ValueError as exc:
        raise ConfigError(where, str(exc)) from None


def build_model(spec, system):
    kind = spec["kind"]
    time_kind = system.time_kind
    if kind == "maintenance":
        for key in ("T",):
            if key not in spec:
                raise ConfigError(f"model.{key}", "required for the maintenance model")
        T = spec["T"]
        delta = spec.get("delta", 0.1)
        rate = spec.get("lambda", 1.0)
        if not T > 0:
            raise ConfigError("model.T", f"must be positive, got {T}")
        if not 0 <= delta < 1:
            raise ConfigError("model.delta", f"must lie in [0, 1), got {delta}")
        if not rate > 0:
            raise ConfigError("model.lambda", f"must be positive, got {rate}")
        missing = {1, 2} - set(system.labels)
        if missing:
            raise ConfigError("system.modes", f"maintenance model needs modes 1 and 2, "
                                              f"missing {sorted(missing)}")
        if time_kind == DISCRETE:
            if float(T) != int(T):
                raise ConfigError("model.T", "must be an integer in discrete time")
            return DiscreteMaintenanceModel(T=int(T), delta=delta, rate=rate)
        return MaintenanceModel(T=float(T), delta=float(delta), rate=float(rate))

    if kind == "periodic":
        if "segments" not in spec:
            raise ConfigError("model.segments", "required for the periodic model")
        cycle = _cycle(spec["segments"], "model.segments")
        models = [cycle]
        try:
            model = PeriodicModel(cycle, time_kind=time_kind)
        except ValueError as exc:
            raise ConfigError("model.segments", str(exc)) from None
    else:
        if "cycles" not in spec:
            raise ConfigError("model.cycles", "required for the finite-support model")
        models = [_cycle(c["segments"], f"model.cycles.{i}.segments")
                  for i, c in enumerate(spec["cycles"])]
        probs = [c["p"] for c in spec["cycles"]]
        try:
            model = FiniteSupportModel(models, probs, time_kind=time_kind)
        except ValueError as exc:
            raise ConfigError("model.cycles", str(exc)) from None
    for i, c in enumerate(models):
        for mode in c.modes:
            if mode not in system.matrices:
                raise ConfigError(f"model.cycles.{i}.segments" if kind != "periodic"
                                  else "model.segments", f"unknown mode {mode}")
    return model


def build_config(doc):
    """Validate a config document (defaults filled in) and build a `RunConfig`."""
    check_schema(doc)
    merged = dict(DEFAULTS)
    merged.update(doc)
    try:
        system = _build_system(merged["system"])
    except ValueError as exc:
        raise ConfigError("system", str(exc)) from None
    model = build_model(merged["model"], system)

    task = merged["task"]
    if task in ("analyze", "sweep") and merged["method"] == "monte-carlo" and merged["samples"] < 2:
        raise ConfigError("samples", "Monte Carlo needs at least 2 samples")
    if task == "simulate" and merged["paths"] < 2:
        raise ConfigError("paths", "ensemble statistics need at least 2 paths")
    if task == "sweep" and merged["model"]["kind"] != "maintenance":
        raise ConfigError("model.kind", "sweep varies the maintenance period T; "
                                        "needs a maintenance model")
    if task == "floquet-check" and merged["model"]["kind"] != "periodic":
        raise ConfigError("model.kind", "floquet-check needs a periodic model")
    if merged["method"] == "analytic" and not isinstance(model, MaintenanceModel):
        raise ConfigError("method", "analytic engine needs a continuous-time maintenance model")
    if merged["method"] == "exact" and model.support() is None:
        raise ConfigError("method", "exact enumeration needs a finitely supported model")
    if system.time_kind == DISCRETE and task == "simulate" and float(merged["dt"]) != int(merged["dt"]):
        raise ConfigError("dt", "must be an integer in discrete time")

    x0 = merged.get("x0")
    if x0 is None:
        x0 = np.ones(system.n) / np.sqrt(system.n)
    else:
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (system.n,):
            raise ConfigError("x0", f"needs {system.n} entries, got {len(x0)}")

    cfg = RunConfig(
        system=system, model=model, model_spec=merged["model"], m=merged["m"],
        task=task, method=merged["method"], samples=merged["samples"],
        paths=merged["paths"], horizon=float(merged["horizon"]), dt=float(merged["dt"]),
        sweep_range=parse_range(merged["range"]), seed=merged.get("seed"),
        workers=merged["workers"], x0=x0,
        positivity=POSITIVITY_ASSERTED if merged["assert_positive"] else POSITIVITY_CHECK,
        strict=merged["strict"], figures=merged["figures"], out=merged["out"],
    )
    if cfg.randomized and cfg.seed is None:
        raise ConfigError("seed", f"task {task!r} is randomized and needs an explicit seed")
    return cfg
