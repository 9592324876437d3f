"""Case files: native JSON documents, a MATPOWER subset, and built-in benchmarks.

The native format is a UTF-8 JSON object (conventionally ``*.gridcase.json``)::

    {"schema_version": "1.0", "name": ..., "base_mva": ..., "buses": [...],
     "branches": [...], "switches": [...], "loads": [...], "generators": [...],
     "batteries": [...], "battery_budget": ..., "scenario": {...}}

``scenario`` is an optional overlay of perturbations applied on top of the
base network (load scaling, branch outages, derates, forced switch states).
"""

from __future__ import annotations

import json
import math
import re
import warnings
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from .model import (
    Battery,
    DanglingReference,
    Branch,
    Bus,
    Generator,
    Load,
    Network,
    Switch,
    build_network,
    current_base_ka,
    impedance_base,
)

SCHEMA_VERSION = "1.0"
SUPPORTED_VERSIONS = ("1.0",)
DEFAULT_V_MIN = 0.95
DEFAULT_V_MAX = 1.05
BUILTIN_CASES = ("ieee30", "cigre_mv", "ieee69")


class CaseError(ValueError):
    pass


class CaseSyntaxError(CaseError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f" (line {line}" + (f", column {column})" if column else ")") if line else ""
        super().__init__(message + where)
        self.line = line
        self.column = column


class SchemaError(CaseError):
    def __init__(self, message: str, field: str = ""):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class SemanticError(CaseError):
    def __init__(self, message: str, field: str = ""):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class UnsupportedConstruct(CaseError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message + (f" (line {line})" if line else ""))
        self.line = line


class UnknownCase(CaseError, KeyError):
    pass


# schema -------------------------------------------------------------------

_NUM = {"type": "number"}
_STR = {"type": "string"}
_BOOL = {"type": "boolean"}


def _obj(required: list[str], props: dict) -> dict:
    return {"type": "object", "required": required, "properties": props, "additionalProperties": False}


_ELEMENT_SCHEMAS = {
    "buses": _obj(["id"], {
        "id": _STR, "name": _STR, "nominal_kv": _NUM, "kind": {"enum": ["slack", "pv", "pq"]},
        "v_min_pu": _NUM, "v_max_pu": _NUM, "in_service": _BOOL}),
    "branches": _obj(["id", "from_bus", "to_bus", "r_ohm", "x_ohm"], {
        "id": _STR, "from_bus": _STR, "to_bus": _STR, "r_ohm": _NUM, "x_ohm": _NUM,
        "b_total_shunt_siemens": _NUM, "s_max_mva": _NUM, "i_max_ka": _NUM,
        "in_service": _BOOL, "switchable": _BOOL}),
    "switches": _obj(["id", "branch_id"], {"id": _STR, "branch_id": _STR, "closed": _BOOL}),
    "loads": _obj(["id", "bus_id", "p_mw"], {
        "id": _STR, "bus_id": _STR, "p_mw": _NUM, "q_mvar": _NUM, "curtailable": _BOOL,
        "gamma": _NUM, "gamma_max": _NUM}),
    "generators": _obj(["id", "bus_id"], {
        "id": _STR, "bus_id": _STR, "p_mw": _NUM, "v_set_pu": _NUM, "q_min_mvar": _NUM,
        "q_max_mvar": _NUM, "in_service": _BOOL}),
    "batteries": _obj(["id", "bus_id", "s_max_mva", "p_max_mw", "q_max_mvar"], {
        "id": _STR, "bus_id": _STR, "s_max_mva": _NUM, "p_max_mw": _NUM, "q_max_mvar": _NUM,
        "placed": _BOOL, "p_mw": _NUM, "q_mvar": _NUM}),
}

_PERTURBATION_SCHEMA = {
    "oneOf": [
        _obj(["op", "factor"], {"op": {"const": "scale_load"}, "factor": _NUM,
                                "load_ids": {"type": "array", "items": _STR}}),
        _obj(["op", "id"], {"op": {"const": "open_branch"}, "id": _STR}),
        _obj(["op", "id", "factor"], {"op": {"const": "derate_branch"}, "id": _STR, "factor": _NUM}),
        _obj(["op", "id", "closed"], {"op": {"const": "force_switch"}, "id": _STR, "closed": _BOOL}),
    ]
}

_SCENARIO_SCHEMA = _obj(["perturbations"], {
    "name": _STR,
    "base": _STR,
    "perturbations": {"type": "array", "items": _PERTURBATION_SCHEMA},
    "expected_violation_profile": {"type": ["object", "null"]},
})

CASE_SCHEMA = _obj(["schema_version", "base_mva", "buses", "branches"], {
    "schema_version": _STR,
    "name": _STR,
    "base_mva": _NUM,
    **{k: {"type": "array", "items": v} for k, v in _ELEMENT_SCHEMAS.items()},
    "battery_budget": {"type": "integer"},
    "scenario": _SCENARIO_SCHEMA,
})

_VALIDATOR = jsonschema.Draft202012Validator(CASE_SCHEMA)
_ELEMENT_CLASSES = {"buses": Bus, "branches": Branch, "switches": Switch, "loads": Load,
                    "generators": Generator, "batteries": Battery}


def _path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


@dataclass
class CaseDocument:
    """A validated, normalized case: every element carries all its fields."""

    payload: dict[str, Any]
    scenario: dict[str, Any] | None = None
    schema_version: str = SCHEMA_VERSION

    def to_json_obj(self) -> dict[str, Any]:
        out: dict[str, Any] = {"schema_version": self.schema_version}
        out.update(self.payload)
        if self.scenario and self.scenario.get("perturbations"):
            out["scenario"] = self.scenario
        return out

    @property
    def name(self) -> str:
        return self.payload.get("name", "")


def _normalize(obj: dict[str, Any]) -> dict[str, Any]:
    payload: dict[str, Any] = {"name": obj.get("name", ""), "base_mva": float(obj["base_mva"])}
    for key, cls in _ELEMENT_CLASSES.items():
        items = []
        for raw in obj.get(key, []):
            defaults = {f.name: f.default for f in fields(cls) if f.default is not f.default_factory}
            item = {}
            for f in fields(cls):
                if f.name in raw:
                    val = raw[f.name]
                    item[f.name] = float(val) if isinstance(val, int) and not isinstance(val, bool) and f.type == "float" else val
                else:
                    item[f.name] = defaults[f.name]
            items.append(item)
        payload[key] = items
    payload["battery_budget"] = int(obj.get("battery_budget", 0))
    return payload


def _check_semantics(payload: dict[str, Any]) -> None:
    def positive(value, where):
        if not (math.isfinite(value) and value > 0):
            raise SemanticError(f"must be a positive finite number, got {value!r}", where)

    def nonneg(value, where):
        if not (math.isfinite(value) and value >= 0):
            raise SemanticError(f"must be non-negative, got {value!r}", where)

    positive(payload["base_mva"], "base_mva")
    if payload["battery_budget"] < 0:
        raise SemanticError("must be non-negative", "battery_budget")
    for key in _ELEMENT_CLASSES:
        seen = set()
        for i, item in enumerate(payload[key]):
            if item["id"] in seen:
                raise SemanticError(f"duplicate id {item['id']!r}", f"{key}[{i}].id")
            seen.add(item["id"])
            for k, v in item.items():
                if isinstance(v, float) and not math.isfinite(v):
                    raise SemanticError("must be finite", f"{key}[{i}].{k}")
    for i, b in enumerate(payload["buses"]):
        where = f"buses[{i}]"
        positive(b["nominal_kv"], where + ".nominal_kv")
        if not (0 < b["v_min_pu"] < b["v_max_pu"]):
            raise SemanticError(f"need 0 < v_min_pu < v_max_pu, got [{b['v_min_pu']}, {b['v_max_pu']}]", where)
    for i, br in enumerate(payload["branches"]):
        where = f"branches[{i}]"
        nonneg(br["r_ohm"], where + ".r_ohm")
        nonneg(br["x_ohm"], where + ".x_ohm")
        if br["r_ohm"] == 0 and br["x_ohm"] == 0:
            raise SemanticError("r_ohm and x_ohm are both zero", where)
        nonneg(br["b_total_shunt_siemens"], where + ".b_total_shunt_siemens")
        if not br["s_max_mva"] > 0:
            raise SemanticError(f"rating must be positive, got {br['s_max_mva']}", where + ".s_max_mva")
        if not br["i_max_ka"] > 0:
            raise SemanticError(f"rating must be positive, got {br['i_max_ka']}", where + ".i_max_ka")
    for i, ld in enumerate(payload["loads"]):
        where = f"loads[{i}]"
        nonneg(ld["p_mw"], where + ".p_mw")
        if not 0 <= ld["gamma_max"] <= 1:
            raise SemanticError("gamma_max outside [0, 1]", where + ".gamma_max")
        if not 0 <= ld["gamma"] <= ld["gamma_max"]:
            raise SemanticError("gamma outside [0, gamma_max]", where + ".gamma")
    for i, g in enumerate(payload["generators"]):
        where = f"generators[{i}]"
        positive(g["v_set_pu"], where + ".v_set_pu")
        if g["q_min_mvar"] > g["q_max_mvar"]:
            raise SemanticError("q_min_mvar > q_max_mvar", where)
    for i, bt in enumerate(payload["batteries"]):
        where = f"batteries[{i}]"
        for k in ("s_max_mva", "p_max_mw", "q_max_mvar"):
            positive(bt[k], f"{where}.{k}")
        s = bt["s_max_mva"] if bt["placed"] else 0.0
        if bt["p_mw"] ** 2 + bt["q_mvar"] ** 2 > s * s * (1 + 1e-12):
            raise SemanticError("dispatch outside the apparent-power circle", where)


def _check_scenario(scenario: dict[str, Any]) -> None:
    for i, p in enumerate(scenario.get("perturbations", [])):
        if "factor" in p and not (math.isfinite(p["factor"]) and p["factor"] >= 0):
            raise SemanticError("factor must be non-negative", f"scenario.perturbations[{i}].factor")


def document_from_obj(obj: Any) -> CaseDocument:
    """Validate a decoded JSON object and normalize it into a CaseDocument."""
    if not isinstance(obj, dict):
        raise SchemaError("top level must be a JSON object")
    errors = sorted(_VALIDATOR.iter_errors(obj), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        where = _path(err.absolute_path)
        msg = err.message
        if err.validator == "required":
            missing = re.findall(r"'([^']+)' is a required property", msg)
            if missing:
                where = (where + "." if where else "") + missing[0]
        raise SchemaError(msg, where)
    if obj["schema_version"] not in SUPPORTED_VERSIONS:
        raise SchemaError(f"unsupported schema_version {obj['schema_version']!r}", "schema_version")
    payload = _normalize(obj)
    _check_semantics(payload)
    scenario = obj.get("scenario")
    if scenario is not None:
        _check_scenario(scenario)
        if not scenario.get("perturbations"):
            scenario = None
    return CaseDocument(payload=payload, scenario=scenario, schema_version=obj["schema_version"])


def parse_case_json(text: str | bytes) -> CaseDocument:
    """Parse and validate a native case document.

    Raises:
        CaseSyntaxError: not UTF-8 or not JSON (carries line/column).
        SchemaError: missing, extra or mistyped fields (carries the field path).
        SemanticError: well-typed but physically invalid values or duplicate ids.
    """
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CaseSyntaxError(f"not valid UTF-8: {exc.reason}") from None
    try:
        obj = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise CaseSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    except RecursionError:
        raise CaseSyntaxError("document nested too deeply") from None
    return document_from_obj(obj)


def _reject_constant(name: str):
    raise json.JSONDecodeError(f"non-standard constant {name}", name, 0)


def serialize_case(doc: CaseDocument) -> str:
    """Deterministic JSON text; an empty scenario overlay is omitted."""
    return json.dumps(doc.to_json_obj(), indent=1, allow_nan=False) + "\n"


def document_from_network(net: Network, scenario: dict | None = None) -> CaseDocument:
    return CaseDocument(payload=net.to_payload(), scenario=scenario or None)


def network_from_document(doc: CaseDocument, with_scenario: bool = True) -> Network:
    net = build_network(doc.payload)
    if with_scenario and doc.scenario:
        try:
            apply_perturbations(net, doc.scenario["perturbations"])
        except KeyError as exc:
            raise DanglingReference(f"scenario perturbation references unknown element {exc}") from None
    return net


def apply_perturbations(net: Network, perturbations) -> Network:
    """Apply scenario perturbations in order, in place."""
    for p in perturbations:
        op = p["op"]
        if op == "scale_load":
            ids = p.get("load_ids") or list(net.loads)
            for lid in ids:
                load = net.loads[lid]
                load.p_mw *= p["factor"]
                load.q_mvar *= p["factor"]
        elif op == "open_branch":
            net.branches[p["id"]].in_service = False
        elif op == "derate_branch":
            br = net.branches[p["id"]]
            br.s_max_mva *= p["factor"]
            br.i_max_ka *= p["factor"]
        elif op == "force_switch":
            net.switches[p["id"]].closed = bool(p["closed"])
        else:
            raise SchemaError(f"unknown perturbation {op!r}", "scenario.perturbations")
    return net


# MATPOWER subset ----------------------------------------------------------

_BUS_COLS = 13
_GEN_COLS = 10
_BRANCH_COLS = 11
_ASSIGN = re.compile(r"^mpc\.(\w+)\s*=\s*(.*)$")
_NUMBER = re.compile(r"^[+-]?(\d+\.?\d*([eE][+-]?\d+)?|\.\d+([eE][+-]?\d+)?|Inf|inf|NaN|nan)$")


def _strip_comment(line: str) -> str:
    out = []
    quoted = False
    for ch in line:
        if ch == "'":
            quoted = not quoted
        if ch == "%" and not quoted:
            break
        out.append(ch)
    return "".join(out).strip()


def _scan_matpower(text: str) -> tuple[str, dict[str, Any]]:
    lines = text.splitlines()
    name = ""
    blocks: dict[str, Any] = {}
    seen_function = False
    i = 0
    while i < len(lines):
        lineno = i + 1
        line = _strip_comment(lines[i])
        i += 1
        if not line:
            continue
        if line.startswith("function"):
            if seen_function:
                raise UnsupportedConstruct("nested or multiple functions", lineno)
            m = re.match(r"^function\s+mpc\s*=\s*(\w+)\s*$", line)
            if not m:
                raise UnsupportedConstruct(f"unsupported function header {line!r}", lineno)
            name = m.group(1)
            seen_function = True
            continue
        m = _ASSIGN.match(line)
        if not m:
            raise UnsupportedConstruct(f"unsupported statement {line!r}", lineno)
        key, rhs = m.group(1), m.group(2).strip()
        if rhs.startswith("["):
            body = [rhs[1:]]
            start = lineno
            while "]" not in body[-1]:
                if i >= len(lines):
                    raise CaseSyntaxError(f"unterminated matrix mpc.{key}", start)
                body.append(_strip_comment(lines[i]))
                i += 1
            last = body[-1]
            close = last.index("]")
            tail = last[close + 1:].strip()
            if tail not in ("", ";"):
                raise UnsupportedConstruct(f"expression after matrix mpc.{key}", i)
            body[-1] = last[:close]
            blocks[key] = _parse_matrix(key, body, start)
        elif rhs.startswith("{"):
            depth_line = rhs
            while "}" not in depth_line:
                if i >= len(lines):
                    raise CaseSyntaxError(f"unterminated cell array mpc.{key}", lineno)
                depth_line = _strip_comment(lines[i])
                i += 1
            warnings.warn(f"ignoring cell array mpc.{key}", stacklevel=3)
        elif rhs.startswith("'"):
            if not re.match(r"^'[^']*'\s*;?$", rhs):
                raise UnsupportedConstruct(f"unsupported string expression for mpc.{key}", lineno)
            blocks[key] = rhs.rstrip(";").strip().strip("'")
        else:
            value = rhs.rstrip(";").strip()
            if not _NUMBER.match(value):
                raise UnsupportedConstruct(f"expression in mpc.{key}", lineno)
            blocks[key] = float(value)
    return name, blocks


def _parse_matrix(key: str, body: list[str], start: int) -> list[list[float]]:
    rows: list[list[float]] = []
    row_lines: list[int] = []
    for offset, chunk in enumerate(body):
        for piece in chunk.split(";"):
            tokens = piece.replace(",", " ").split()
            if not tokens:
                continue
            row = []
            for tok in tokens:
                if not _NUMBER.match(tok):
                    raise UnsupportedConstruct(f"non-numeric entry {tok!r} in mpc.{key}", start + offset)
                row.append(float(tok))
            rows.append(row)
            row_lines.append(start + offset)
    if rows:
        width = len(rows[0])
        for r, (row, ln) in enumerate(zip(rows, row_lines)):
            if len(row) != width:
                raise CaseSyntaxError(
                    f"row {r + 1} of mpc.{key} has {len(row)} columns, expected {width}", ln)
    return rows


def _require_width(key: str, rows, need: int) -> None:
    if rows and len(rows[0]) < need:
        raise CaseSyntaxError(f"mpc.{key} rows have {len(rows[0])} columns, need at least {need}")
    if rows and key in ("bus", "branch") and len(rows[0]) > {"bus": 17, "branch": 21}[key]:
        warnings.warn(f"ignoring trailing columns of mpc.{key}", stacklevel=3)


def parse_matpower_subset(text: str | bytes) -> CaseDocument:
    """Read the bus/gen/branch blocks of a MATPOWER case file.

    Per-unit impedances are converted to ohms on the from-bus voltage base;
    line charging to siemens. Zero ratings become effectively unlimited.
    Transformer tap ratios and phase shifts are ignored with a warning.
    """
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CaseSyntaxError(f"not valid UTF-8: {exc.reason}") from None
    name, blocks = _scan_matpower(text)
    if "bus" not in blocks or not isinstance(blocks["bus"], list) or not blocks["bus"]:
        raise SchemaError("no bus block", "mpc.bus")
    if "baseMVA" not in blocks:
        raise SchemaError("no baseMVA", "mpc.baseMVA")
    base = blocks["baseMVA"]
    bus_rows = blocks["bus"]
    gen_rows = blocks.get("gen", [])
    br_rows = blocks.get("branch", [])
    if not isinstance(gen_rows, list) or not isinstance(br_rows, list):
        raise SchemaError("gen and branch must be matrices")
    _require_width("bus", bus_rows, _BUS_COLS)
    _require_width("gen", gen_rows, _GEN_COLS)
    _require_width("branch", br_rows, _BRANCH_COLS)

    kind_of = {1: "pq", 2: "pv", 3: "slack", 4: "pq"}
    buses, loads = [], []
    kv: dict[str, float] = {}
    for r, row in enumerate(bus_rows):
        bid = _int_id(row[0], "bus", r)
        btype = int(row[1])
        if btype not in kind_of:
            raise SemanticError(f"bus type {btype} unknown", f"mpc.bus row {r + 1}")
        vmax, vmin = row[11], row[12]
        if not 0 < vmin < vmax:
            vmin, vmax = DEFAULT_V_MIN, DEFAULT_V_MAX
        kv[bid] = row[9] if row[9] > 0 else 1.0
        buses.append({"id": bid, "name": f"Bus {bid}", "nominal_kv": kv[bid], "kind": kind_of[btype],
                      "v_min_pu": vmin, "v_max_pu": vmax, "in_service": btype != 4})
        if row[2] != 0 or row[3] != 0:
            loads.append({"id": f"L{bid}", "bus_id": bid, "p_mw": max(row[2], 0.0), "q_mvar": row[3]})
        if row[4] != 0 or row[5] != 0:
            warnings.warn(f"bus {bid}: shunt admittance ignored", stacklevel=2)
    gens = []
    for r, row in enumerate(gen_rows):
        bid = _int_id(row[0], "gen", r)
        if row[7] <= 0:
            continue
        gid = f"G{bid}"
        k = 2
        while any(g["id"] == gid for g in gens):
            gid = f"G{bid}_{k}"
            k += 1
        gens.append({"id": gid, "bus_id": bid, "p_mw": row[1], "v_set_pu": row[5] if row[5] > 0 else 1.0,
                     "q_min_mvar": row[4], "q_max_mvar": row[3]})
    branches = []
    for r, row in enumerate(br_rows):
        f, t = _int_id(row[0], "branch", r), _int_id(row[1], "branch", r)
        if f not in kv or t not in kv:
            raise SemanticError(f"branch {f}-{t} refers to unknown bus", f"mpc.branch row {r + 1}")
        if row[8] not in (0.0, 1.0) or row[9] != 0:
            warnings.warn(f"branch {f}-{t}: off-nominal tap / phase shift ignored", stacklevel=2)
        zb = impedance_base(kv[f], base)
        rate = row[5] if row[5] > 0 else 9999.0
        bid = f"{f}-{t}"
        k = 2
        while any(b["id"] == bid for b in branches):
            bid = f"{f}-{t}#{k}"
            k += 1
        branches.append({
            "id": bid, "from_bus": f, "to_bus": t,
            "r_ohm": row[2] * zb, "x_ohm": row[3] * zb, "b_total_shunt_siemens": row[4] / zb,
            "s_max_mva": rate, "i_max_ka": rate * current_base_ka(kv[f], base) / base,
            "in_service": row[10] > 0,
        })
    obj = {"schema_version": SCHEMA_VERSION, "name": name, "base_mva": base, "buses": buses,
           "branches": branches, "loads": loads, "generators": gens}
    return document_from_obj(obj)


def _int_id(value: float, block: str, row: int) -> str:
    if value != int(value) or value <= 0:
        raise SemanticError(f"bus number {value} is not a positive integer", f"mpc.{block} row {row + 1}")
    return str(int(value))


# built-ins ----------------------------------------------------------------

def builtin_document(name: str) -> CaseDocument:
    if name not in BUILTIN_CASES:
        raise UnknownCase(f"unknown built-in case {name!r}; choose from {', '.join(BUILTIN_CASES)}")
    text = resources.files("grid_agent.data").joinpath(f"{name}.gridcase.json").read_text("utf-8")
    return parse_case_json(text)


def builtin_network(name: str) -> Network:
    """One of the vendored benchmark networks: ieee30, cigre_mv or ieee69.

    cigre_mv has 14 buses: the 110 kV grid bus that some descriptions of the
    feeder count as a fifteenth is folded into the slack at bus 1. Branch
    ratings were raised where the base flow exceeded 80 % of the published
    value, so every base case starts violation-free.
    """
    return network_from_document(builtin_document(name))


def load_case(ref: str | Path) -> CaseDocument:
    """A built-in name, a MATPOWER ``.m`` file or a native JSON case file."""
    ref = str(ref)
    if ref in BUILTIN_CASES:
        return builtin_document(ref)
    path = Path(ref)
    data = path.read_bytes()
    if path.suffix == ".m":
        return parse_matpower_subset(data)
    return parse_case_json(data)
