"""Experiment configuration: JSON schema, parsing with full violation reports, and model/task construction."""

from __future__ import annotations

import inspect
import json
from dataclasses import asdict, dataclass, field, replace
from typing import Any

import jsonschema
import numpy as np

from .core import HilbertSpace, Operator, StateVector
from .lattice import (
    MODEL_PRESETS,
    CorrelationTask,
    Schedule,
    all_up,
    magnetization,
    model_hamiltonian,
    product_state,
    spin_coherent_site,
    spin_product,
)

SCHEMA_VERSION = 1
MAX_TOTAL_DIM = 2**14
PROTOCOLS = ("oracle", "nimp", "simul", "ancilla-free-im", "ancilla-free-re", "povm-check", "lambda-scan")

_AXIS = {"enum": ["x", "y", "z"]}
_HALF = {"type": "number", "minimum": 0.5, "multipleOf": 0.5}
_SITE_FACTOR = {
    "type": "object",
    "additionalProperties": False,
    "required": ["site", "axis"],
    "properties": {"site": {"type": "integer", "minimum": 0}, "axis": _AXIS},
}

SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "nimp experiment configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "task", "protocol"],
    "$defs": {
        "observable": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["spin", "product", "sum"]},
                "site": {"type": "integer", "minimum": 0},
                "axis": _AXIS,
                "factors": {"type": "array", "minItems": 1, "items": _SITE_FACTOR},
                "sites": {"type": ["array", "null"], "items": {"type": "integer", "minimum": 0}},
                "normalize": {"type": "boolean"},
            },
            "allOf": [
                {"if": {"properties": {"kind": {"const": "spin"}}}, "then": {"required": ["site", "axis"]}},
                {"if": {"properties": {"kind": {"const": "product"}}}, "then": {"required": ["factors"]}},
                {"if": {"properties": {"kind": {"const": "sum"}}}, "then": {"required": ["axis"]}},
            ],
        },
        "state": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["all_up", "basis", "coherent", "random", "amplitudes"]},
                "index": {"type": "integer", "minimum": 0},
                "theta": {"type": ["number", "array"], "items": {"type": "number"}},
                "phi": {"type": ["number", "array"], "items": {"type": "number"}},
                "seed": {"type": "integer", "minimum": 0},
                "re": {"type": "array", "items": {"type": "number"}},
                "im": {"type": "array", "items": {"type": "number"}},
            },
            "allOf": [
                {"if": {"properties": {"kind": {"const": "basis"}}}, "then": {"required": ["index"]}},
                {"if": {"properties": {"kind": {"const": "coherent"}}}, "then": {"required": ["theta"]}},
                {"if": {"properties": {"kind": {"const": "amplitudes"}}}, "then": {"required": ["re"]}},
            ],
        },
    },
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name", "N"],
            "properties": {
                "name": {"enum": sorted(MODEL_PRESETS)},
                "N": {"type": "integer", "minimum": 1, "maximum": 14},
                "s": _HALF,
                "params": {"type": "object", "additionalProperties": {"type": ["number", "boolean"]}},
            },
        },
        "task": {
            "type": "object",
            "additionalProperties": False,
            "required": ["O1", "O2", "t1", "t2"],
            "properties": {
                "O1": {"$ref": "#/$defs/observable"},
                "O2": {"$ref": "#/$defs/observable"},
                "t1": {"type": "number", "minimum": 0},
                "t2": {"type": "number", "minimum": 0},
                "initial_state": {"$ref": "#/$defs/state"},
            },
        },
        "protocol": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {
                "name": {"enum": list(PROTOCOLS)},
                "lambda": {"type": "number"},
                "lambda2": {"type": ["number", "null"]},
                "zeta": _HALF,
                "axis": _AXIS,
                "variant": {"enum": [1, 2, "both"]},
                "mode": {"enum": ["exact", "linearized"]},
                "readout": {"enum": ["deferred", "immediate"]},
                "n": {"type": ["integer", "null"], "minimum": 1},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "theta": {"type": "number"},
                "grid": {"type": "array", "minItems": 1, "items": {"type": "number"}},
                "compare_oracle": {"type": "boolean"},
                "error_method": {"enum": ["delta", "bootstrap"]},
                "trajectory": {"type": "boolean"},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "result": {"type": "string", "minLength": 1},
                "distributions": {"type": "boolean"},
                "scan_csv": {"type": "string", "minLength": 1},
            },
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "completeness": {"type": "number", "exclusiveMinimum": 0},
                "equivalence": {"type": "number", "exclusiveMinimum": 0},
                "closed_form": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
}


class ConfigError(Exception):
    """Invalid configuration; ``violations`` lists every problem found."""

    def __init__(self, kind: str, violations: list[dict]):
        self.kind = kind
        self.violations = violations
        super().__init__("; ".join(f"{v['path']}: {v['message']}" for v in violations))

    def to_json(self) -> dict:
        return {"error": {"type": f"config-{self.kind}", "message": str(self), "violations": self.violations}}


@dataclass(frozen=True)
class ModelConfig:
    name: str
    N: int
    s: float = 0.5
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TaskConfig:
    O1: dict
    O2: dict
    t1: float
    t2: float
    initial_state: dict = field(default_factory=lambda: {"kind": "all_up"})


@dataclass(frozen=True)
class ProtocolConfig:
    name: str
    # "lambda" is a keyword, hence the field name
    lam: float = 1e-3
    lambda2: float | None = None
    zeta: float = 0.5
    axis: str = "z"
    variant: Any = "both"
    mode: str = "exact"
    readout: str = "deferred"
    n: int | None = None
    seed: int = 0
    theta: float = 1.0
    grid: list = field(default_factory=lambda: [float(x) for x in np.logspace(-3, 0, 8)])
    compare_oracle: bool = True
    error_method: str = "delta"
    trajectory: bool = False


@dataclass(frozen=True)
class OutputConfig:
    result: str = "result.json"
    distributions: bool = True
    scan_csv: str = "lambda_scan.csv"


@dataclass(frozen=True)
class Tolerances:
    completeness: float = 1e-11
    equivalence: float = 1e-11
    closed_form: float = 1e-12


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig
    task: TaskConfig
    protocol: ProtocolConfig
    output: OutputConfig = field(default_factory=OutputConfig)
    tolerances: Tolerances = field(default_factory=Tolerances)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        out = asdict(self)
        out["protocol"]["lambda"] = out["protocol"].pop("lam")
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, protocol=replace(self.protocol, seed=int(seed)))


def _path(error: jsonschema.ValidationError) -> str:
    return ".".join(str(p) for p in error.absolute_path) or "<root>"


def _semantic_violations(cfg: ExperimentConfig) -> list[dict]:
    out = []
    m, t, p = cfg.model, cfg.task, cfg.protocol

    def bad(path, message):
        out.append({"path": path, "message": message})

    for name in ("O1", "O2"):
        obs = getattr(t, name)
        sites = []
        if obs["kind"] == "spin":
            sites = [("site", obs["site"])]
        elif obs["kind"] == "product":
            sites = [(f"factors.{k}.site", f["site"]) for k, f in enumerate(obs["factors"])]
            all_sites = [f["site"] for f in obs["factors"]]
            if len(set(all_sites)) != len(all_sites):
                bad(f"task.{name}.factors", "product factors must act on distinct sites")
        elif obs.get("sites") is not None:
            sites = [(f"sites.{k}", s) for k, s in enumerate(obs["sites"])]
            if not obs["sites"]:
                bad(f"task.{name}.sites", "site list is empty")
        for sub, site in sites:
            if site >= m.N:
                bad(f"task.{name}.{sub}", f"site index {site} out of range for N={m.N} lattice")

    accepted = inspect.signature(MODEL_PRESETS[m.name]).parameters
    for key in m.params:
        if key in ("n_sites", "s") or key not in accepted:
            bad(f"model.params.{key}", f"unknown parameter for model {m.name!r}")

    dim = int(round(2 * m.s + 1)) ** m.N
    state = t.initial_state
    if state["kind"] == "basis" and state["index"] >= dim:
        bad("task.initial_state.index", f"basis index {state['index']} out of range for dimension {dim}")
    if state["kind"] == "amplitudes":
        if len(state["re"]) != dim or ("im" in state and len(state["im"]) != dim):
            bad("task.initial_state", f"amplitude arrays must have length {dim}")
    if state["kind"] == "coherent":
        for key in ("theta", "phi"):
            v = state.get(key)
            if isinstance(v, list) and len(v) != m.N:
                bad(f"task.initial_state.{key}", f"needs one angle per site ({m.N})")

    n_anc = {"nimp": 1, "simul": 2, "lambda-scan": 1, "povm-check": 1}.get(p.name, 0)
    total = dim * int(round(2 * p.zeta + 1)) ** n_anc
    if total > MAX_TOTAL_DIM:
        bad("model.N", f"total dimension {total} exceeds the dense limit {MAX_TOTAL_DIM}")

    if p.name != "oracle" and t.t1 > t.t2:
        bad("task.t1", f"protocol needs t1 <= t2 (got t1={t.t1}, t2={t.t2})")
    if p.name in ("nimp", "simul", "povm-check") and p.lam == 0:
        bad("protocol.lambda", "λ must be nonzero")
    if p.name == "simul":
        if p.lambda2 == 0:
            bad("protocol.lambda2", "λ must be nonzero")
        if p.axis != "z":
            bad("protocol.axis", "simultaneous protocol reads both ancillas out along z")
    if p.name == "ancilla-free-im" and np.sin(p.theta) == 0:
        bad("protocol.theta", "θ must be nonzero")
    if p.name == "lambda-scan":
        if any(x <= 0 for x in p.grid):
            bad("protocol.grid", "λ grid must be positive")
        if list(p.grid) != sorted(p.grid):
            bad("protocol.grid", "λ grid must be sorted")
    return out


def config_from_dict(data: dict) -> ExperimentConfig:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        raise ConfigError("schema", [{"path": _path(e), "message": e.message} for e in errors])
    proto = dict(data["protocol"])
    if "lambda" in proto:
        proto["lam"] = proto.pop("lambda")
    task = dict(data["task"])
    cfg = ExperimentConfig(
        model=ModelConfig(**data["model"]),
        task=TaskConfig(**task),
        protocol=ProtocolConfig(**proto),
        output=OutputConfig(**data.get("output", {})),
        tolerances=Tolerances(**data.get("tolerances", {})),
        schema_version=data.get("schema_version", SCHEMA_VERSION),
    )
    cfg = _normalize(cfg)
    violations = _semantic_violations(cfg)
    if violations:
        dimensional = any("range" in v["message"] or "dimension" in v["message"] for v in violations)
        raise ConfigError("dimension" if dimensional else "value", violations)
    return cfg


def _normalize(cfg: ExperimentConfig) -> ExperimentConfig:
    """Numbers to canonical types so parse -> serialize -> parse is stable."""
    p = cfg.protocol
    proto = replace(
        p,
        lam=float(p.lam),
        lambda2=None if p.lambda2 is None else float(p.lambda2),
        zeta=float(p.zeta),
        theta=float(p.theta),
        grid=[float(x) for x in p.grid],
    )
    model = replace(cfg.model, s=float(cfg.model.s), params=dict(sorted(cfg.model.params.items())))
    task = replace(cfg.task, t1=float(cfg.task.t1), t2=float(cfg.task.t2))
    return replace(cfg, model=model, task=task, protocol=proto)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON configuration document."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            "syntax",
            [{"path": "<document>", "message": f"{exc.msg} at line {exc.lineno}, column {exc.colno}", "line": exc.lineno, "column": exc.colno}],
        ) from None
    if not isinstance(data, dict):
        raise ConfigError("schema", [{"path": "<root>", "message": "configuration must be a JSON object"}])
    return config_from_dict(data)


# Construction --------------------------------------------------------------


def build_space(model: ModelConfig) -> HilbertSpace:
    return HilbertSpace.spins(model.N, model.s)


def build_schedule(model: ModelConfig) -> Schedule:
    return Schedule.constant(model_hamiltonian(model.name, model.N, s=model.s, **model.params))


def build_observable(spec: dict, space: HilbertSpace) -> Operator:
    kind = spec["kind"]
    if kind == "spin":
        return spin_product(space, [(spec["site"], spec["axis"])])
    if kind == "product":
        return spin_product(space, [(f["site"], f["axis"]) for f in spec["factors"]])
    return magnetization(space, spec["axis"], spec.get("sites"), spec.get("normalize", False))


def build_state(spec: dict, space: HilbertSpace, s: float) -> StateVector:
    kind = spec["kind"]
    if kind == "all_up":
        return all_up(space)
    if kind == "basis":
        return StateVector.basis(space, spec["index"])
    if kind == "random":
        return StateVector.random(space, np.random.default_rng(spec.get("seed", 0)))
    if kind == "coherent":
        n = space.n_factors
        theta = np.broadcast_to(np.asarray(spec["theta"], dtype=float), (n,))
        phi = np.broadcast_to(np.asarray(spec.get("phi", 0.0), dtype=float), (n,))
        return product_state(space, [spin_coherent_site(s, a, b) for a, b in zip(theta, phi)])
    amps = np.asarray(spec["re"], dtype=float) + 1j * np.asarray(spec.get("im", [0.0] * len(spec["re"])), dtype=float)
    norm = np.linalg.norm(amps)
    if norm == 0:
        raise ValueError("initial state amplitudes are all zero")
    return StateVector(space, amps / norm)


def build_task(cfg: ExperimentConfig) -> CorrelationTask:
    space = build_space(cfg.model)
    return CorrelationTask(
        build_state(cfg.task.initial_state, space, cfg.model.s),
        build_observable(cfg.task.O1, space),
        cfg.task.t1,
        build_observable(cfg.task.O2, space),
        cfg.task.t2,
        build_schedule(cfg.model),
    )
