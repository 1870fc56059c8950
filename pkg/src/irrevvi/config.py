"""JSON scenario configuration: validation with full error collection and a canonical form.

A config is a JSON object::

    {
      "mesh":    {"dim": 1, "nodes": [41], "extent": [1.0],
                  "boundary": {"left": "dirichlet", "right": "neumann"}},
      "sigma":   0.5,
      "time":    {"T": 1.0, "m": 64},
      "forcing": {"preset": "moving", "params": {}}   or  {"tabulated": {"times": [...], "values": [[...]]}},
      "initial": {"preset": "equilibrium", "params": {}}   or  {"tabulated": [...]},
      "solver":  {"method": "pdas", "omega": 1.5, "tol": 1e-10, "max_iter": null},
      "study":   {...command parameters...},
      "output":  {"dir": "out", "stride": 1},
      "seed":    0
    }

``mesh``, ``time`` and ``forcing`` are required; everything else has defaults.
Tabulated values are given on every grid node (Dirichlet nodes included).
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .mesh_ops import FACES

REQUIRED = object()
U64_MAX = 2 ** 64 - 1


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("invalid config:\n  " + "\n  ".join(errors))
        self.errors = errors


def _num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _num_list(v) -> bool:
    return isinstance(v, list) and all(_num(x) for x in v)


def _str(v) -> bool:
    return isinstance(v, str)


def _dict(v) -> bool:
    return isinstance(v, dict)


def _opt_int(v) -> bool:
    return v is None or _int(v)


def _opt_num(v) -> bool:
    return v is None or _num(v)


# section -> key -> (predicate, type name, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "mesh": {
        "dim": (_int, "integer", REQUIRED),
        "nodes": (lambda v: isinstance(v, list) and all(_int(x) for x in v), "list of integers", REQUIRED),
        "extent": (_num_list, "list of numbers", None),
        "boundary": (_dict, "object", None),
    },
    "time": {
        "T": (_num, "number", REQUIRED),
        "m": (_int, "integer", REQUIRED),
    },
    "forcing": {
        "preset": (lambda v: v is None or _str(v), "string or null", None),
        "params": (_dict, "object", {}),
        "tabulated": (lambda v: v is None or _dict(v), "object or null", None),
    },
    "initial": {
        "preset": (lambda v: v is None or _str(v), "string or null", "equilibrium"),
        "params": (_dict, "object", {}),
        "tabulated": (lambda v: v is None or _num_list(v), "list of numbers or null", None),
    },
    "solver": {
        "method": (_str, "string", "pdas"),
        "omega": (_num, "number", 1.5),
        "tol": (_num, "number", 1e-10),
        "max_iter": (_opt_int, "integer or null", None),
    },
    "study": {
        "epsilons": (_num_list, "list of numbers", [1.0, 0.25, 0.0625, 0.015625]),
        "horizons": (_num_list, "list of numbers", [2.0, 4.0, 8.0, 16.0]),
        "tau": (_opt_num, "number or null", None),
        "threshold": (_num, "number", 1e-8),
        "ladder": (lambda v: isinstance(v, list) and all(_int(x) for x in v), "list of integers",
                   [16, 32, 64, 128]),
        "instances": (_int, "integer", 200),
        "max_n": (_int, "integer", 12),
        "trials": (_int, "integer", 100),
        "perturbation": (_num, "number", 0.0),
        "compare": (lambda v: v is None or _dict(v), "object or null", None),
    },
    "output": {
        "dir": (_str, "string", "out"),
        "stride": (_int, "integer", 1),
    },
}
TOP_LEVEL = {"sigma": (_num, "number", 0.5), "seed": (_int, "integer", 0)}
REQUIRED_SECTIONS = ("mesh", "time", "forcing")
METHODS = ("pdas", "psor")


@dataclass
class ScenarioConfig:
    mesh: dict
    sigma: float
    time: dict
    forcing: dict
    initial: dict
    solver: dict
    study: dict
    output: dict
    seed: int
    warnings: list[str] = field(default_factory=list, compare=False)

    def to_dict(self) -> dict[str, Any]:
        return copy.deepcopy({k: getattr(self, k) for k in
                              ("mesh", "sigma", "time", "forcing", "initial", "solver", "study",
                               "output", "seed")})

    def canonical(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def _section(raw, name, schema, errors, unknown, path=None):
    path = path or name
    out = {}
    if not isinstance(raw, dict):
        errors.append(f"{path}: expected an object, got {type(raw).__name__}")
        return out
    for key in raw:
        if key not in schema:
            unknown.append(f"{path}.{key}")
    for key, (pred, tname, default) in schema.items():
        if key in raw:
            if pred(raw[key]):
                out[key] = copy.deepcopy(raw[key])
            else:
                errors.append(f"{path}.{key}: expected {tname}, got {raw[key]!r}")
        elif default is REQUIRED:
            errors.append(f"{path}.{key}: required field missing")
        else:
            out[key] = copy.deepcopy(default)
    return out


def _check_mesh(mesh, errors):
    dim = mesh.get("dim")
    if dim not in FACES:
        if "dim" in mesh:
            errors.append(f"mesh.dim: must be 1 or 2, got {dim}")
        return
    nodes = mesh.get("nodes")
    if nodes is not None:
        if len(nodes) != dim:
            errors.append(f"mesh.nodes: need {dim} entries, got {len(nodes)}")
        elif any(n < 3 for n in nodes):
            errors.append(f"mesh.nodes: need at least 3 nodes per axis, got {nodes}")
    if mesh.get("extent") is None:
        mesh["extent"] = [1.0] * dim
    elif len(mesh["extent"]) != dim or any(e <= 0 for e in mesh["extent"]):
        errors.append(f"mesh.extent: need {dim} positive entries, got {mesh['extent']}")
    tags = mesh.get("boundary")
    if tags is None:
        mesh["boundary"] = {face: "dirichlet" for face in FACES[dim]}
    else:
        for face in tags:
            if face not in FACES[dim]:
                errors.append(f"mesh.boundary.{face}: unknown face for dim {dim}")
        for face in FACES[dim]:
            tag = tags.get(face)
            if tag is None:
                errors.append(f"mesh.boundary.{face}: required field missing")
            elif tag not in ("dirichlet", "neumann"):
                errors.append(f"mesh.boundary.{face}: must be dirichlet or neumann, got {tag!r}")


def _check_data(sec, name, presets, errors, grid_size, forcing: bool):
    has_preset = sec.get("preset") is not None
    has_tab = sec.get("tabulated") is not None
    if forcing and has_preset == has_tab:
        errors.append(f"{name}: give exactly one of 'preset' or 'tabulated'")
        return
    if not (has_preset or has_tab):
        errors.append(f"{name}: give 'preset' or 'tabulated'")
        return
    if has_tab:
        sec["preset"] = None
        sec["params"] = {}
    if has_preset and not has_tab:
        if sec["preset"] not in presets:
            errors.append(f"{name}.preset: unknown preset {sec['preset']!r}; "
                          f"choose from {sorted(presets)}")
        else:
            for k, v in sec["params"].items():
                if k not in presets[sec["preset"]]:
                    errors.append(f"{name}.params.{k}: preset {sec['preset']!r} has no such parameter")
                elif not _num(v):
                    errors.append(f"{name}.params.{k}: expected number, got {v!r}")
    if not forcing:
        sec.setdefault("tabulated", None)
        if has_tab and grid_size is not None and len(sec["tabulated"]) != grid_size:
            errors.append(f"{name}.tabulated: need {grid_size} grid values, got {len(sec['tabulated'])}")
    if forcing and has_tab:
        tab = sec["tabulated"]
        for key in tab:
            if key not in ("times", "values"):
                errors.append(f"{name}.tabulated.{key}: unknown key")
        times, values = tab.get("times"), tab.get("values")
        if not _num_list(times) or len(times) < 2:
            errors.append(f"{name}.tabulated.times: expected at least two numbers")
        elif any(b <= a for a, b in zip(times, times[1:])):
            errors.append(f"{name}.tabulated.times: must be strictly increasing")
        if not (isinstance(values, list) and all(_num_list(r) for r in values)):
            errors.append(f"{name}.tabulated.values: expected a list of number lists")
        elif _num_list(times):
            if len(values) != len(times):
                errors.append(f"{name}.tabulated.values: need one row per time ({len(times)})")
            elif grid_size is not None and any(len(r) != grid_size for r in values):
                errors.append(f"{name}.tabulated.values: every row needs {grid_size} grid values")


def validate_dict(raw: Any, strict: bool = True) -> ScenarioConfig:
    from .presets import FORCING_DEFAULTS, INITIAL_DEFAULTS

    errors: list[str] = []
    unknown: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError([f"<root>: expected an object, got {type(raw).__name__}"])
    for key in raw:
        if key not in SCHEMA and key not in TOP_LEVEL:
            unknown.append(key)
    for name in REQUIRED_SECTIONS:
        if name not in raw:
            errors.append(f"{name}: required section missing")
    secs = {name: _section(raw.get(name, {}), name, schema, errors, unknown)
            for name, schema in SCHEMA.items() if name in raw or name not in REQUIRED_SECTIONS}
    top = {}
    for key, (pred, tname, default) in TOP_LEVEL.items():
        if key in raw and not pred(raw[key]):
            errors.append(f"{key}: expected {tname}, got {raw[key]!r}")
        top[key] = raw.get(key, default)
    if _num(top["sigma"]) and top["sigma"] < 0:
        errors.append(f"sigma: must be >= 0, got {top['sigma']}")
    if _int(top["seed"]) and not 0 <= top["seed"] <= U64_MAX:
        errors.append(f"seed: must be an unsigned 64-bit integer, got {top['seed']}")

    mesh = secs.get("mesh", {})
    _check_mesh(mesh, errors)
    grid_size = None
    if mesh.get("nodes") and len(mesh["nodes"]) == mesh.get("dim"):
        grid_size = math.prod(mesh["nodes"])
    time = secs.get("time", {})
    if _num(time.get("T")) and time["T"] <= 0:
        errors.append(f"time.T: must be > 0, got {time['T']}")
    if _int(time.get("m")) and time["m"] < 1:
        errors.append(f"time.m: must be >= 1 (an empty trajectory is not allowed), got {time['m']}")
    if "forcing" in secs:
        _check_data(secs["forcing"], "forcing", FORCING_DEFAULTS, errors, grid_size, True)
    _check_data(secs["initial"], "initial", INITIAL_DEFAULTS, errors, grid_size, False)
    solver = secs["solver"]
    if solver.get("method") not in METHODS:
        errors.append(f"solver.method: must be one of {list(METHODS)}, got {solver.get('method')!r}")
    if _num(solver.get("omega")) and not 0 < solver["omega"] < 2:
        errors.append(f"solver.omega: must lie in (0, 2), got {solver['omega']}")
    if _num(solver.get("tol")) and solver["tol"] <= 0:
        errors.append(f"solver.tol: must be > 0, got {solver['tol']}")
    study = secs["study"]
    if _num_list(study.get("epsilons")) and any(e < 0 for e in study["epsilons"]):
        errors.append("study.epsilons: entries must be >= 0")
    if isinstance(study.get("ladder"), list) and any(_int(m) and m < 1 for m in study["ladder"]):
        errors.append("study.ladder: step counts must be >= 1")
    if _int(study.get("max_n")) and not 1 <= study["max_n"] <= 15:
        errors.append(f"study.max_n: must lie in [1, 15], got {study['max_n']}")
    if study.get("compare") is not None:
        cmp_ = _section(study["compare"], "compare",
                        {"forcing": (lambda v: v is None or _dict(v), "object or null", None),
                         "initial": (lambda v: v is None or _dict(v), "object or null", None)},
                        errors, unknown, "study.compare")
        for key, presets_, is_f in (("forcing", FORCING_DEFAULTS, True),
                                    ("initial", INITIAL_DEFAULTS, False)):
            if cmp_.get(key) is not None:
                sub = _section(cmp_[key], key, SCHEMA[key], errors, unknown, f"study.compare.{key}")
                _check_data(sub, f"study.compare.{key}", presets_, errors, grid_size, is_f)
                cmp_[key] = sub
        study["compare"] = cmp_
    if _int(secs["output"].get("stride")) and secs["output"]["stride"] < 1:
        errors.append("output.stride: must be >= 1")

    warnings = []
    if unknown:
        if strict:
            errors.extend(f"{u}: unknown key" for u in unknown)
        else:
            warnings = [f"{u}: unknown key ignored" for u in unknown]
    if errors:
        raise ConfigError(errors)
    return ScenarioConfig(secs["mesh"], float(top["sigma"]), secs["time"], secs["forcing"],
                          secs["initial"], secs["solver"], secs["study"], secs["output"],
                          int(top["seed"]), warnings)


def parse_config(path: str | Path, strict: bool = True) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read ({exc.strerror})"]) from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"]) from exc
    return validate_dict(raw, strict)
