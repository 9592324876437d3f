"""Chat-model planner: prompt construction, tool-call parsing and transport."""

from __future__ import annotations

import json
import math
import os
import re
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Callable

from ..actions import AddBattery, CurtailLoad, DispatchBattery, SetSwitch
from .base import Capabilities, Plan, PlannerError, PlanRequest

ENV_ENDPOINT = "GRID_AGENT_LLM_ENDPOINT"
ENV_API_KEY = "GRID_AGENT_LLM_API_KEY"
ENV_MODEL = "GRID_AGENT_LLM_MODEL"

TOOL_SCHEMAS = {
    "update_switch_status": {
        "switch_id": "string", "closed": "boolean"},
    "curtail_load": {
        "load_id": "string", "gamma": "number in [0, 1]"},
    "add_battery": {
        "bus_id": "string", "p_mw": "number (optional)", "q_mvar": "number (optional)",
        "s_max_mva": "number (optional)"},
    "dispatch_battery": {
        "battery_id": "string", "p_mw": "number", "q_mvar": "number"},
}
_REQUIRED = {
    "update_switch_status": {"switch_id", "closed"},
    "curtail_load": {"load_id", "gamma"},
    "add_battery": {"bus_id"},
    "dispatch_battery": {"battery_id", "p_mw", "q_mvar"},
}
_OPTIONAL = {"add_battery": {"p_mw", "q_mvar", "s_max_mva"}}

OUTPUT_SCHEMA = {
    "type": "object",
    "required": ["actions"],
    "properties": {
        "actions": {"type": "array", "items": {
            "type": "object", "required": ["tool", "args"],
            "properties": {"tool": {"enum": list(TOOL_SCHEMAS)}, "args": {"type": "object"}}}},
        "rationale": {"type": "string"},
    },
}


class ParseError(PlannerError):
    pass


class NoJsonFound(ParseError):
    pass


class SchemaMismatch(ParseError):
    pass


class UnknownTool(ParseError):
    pass


class InvalidArguments(ParseError):
    def __init__(self, index: int, reason: str, diagnostics: list[tuple[int, str]] | None = None):
        super().__init__(f"action {index}: {reason}")
        self.index = index
        self.reason = reason
        self.diagnostics = diagnostics or [(index, reason)]


class TransportError(PlannerError):
    pass


class UnparseableAfterRepair(PlannerError):
    pass


@dataclass(frozen=True)
class LlmClientConfig:
    endpoint: str
    model: str
    api_key_env: str = ENV_API_KEY
    timeout_s: float = 60.0
    max_retries: int = 2
    thinking_budget: int | None = None
    temperature: float | None = 0.0

    def __post_init__(self):
        if not self.timeout_s > 0:
            raise ValueError("timeout_s must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    @classmethod
    def from_env(cls, **overrides) -> "LlmClientConfig":
        kw = {"endpoint": os.environ.get(ENV_ENDPOINT, ""), "model": os.environ.get(ENV_MODEL, "")}
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)


Transport = Callable[[dict, LlmClientConfig], str]


# ---- prompt -----------------------------------------------------------------

def _action_space(caps: Capabilities) -> str:
    lines = ["Tools (call by exact name; args must match the schema):"]
    for name, schema in TOOL_SCHEMAS.items():
        lines.append(f"- {name} {json.dumps(schema)}")
    lines.append("Constraints:")
    if caps.switches:
        sw = ", ".join(f"{s} ({'closed' if c else 'open'}, {a}-{b})"
                       for (s, c), (a, b) in zip(caps.switches.items(), caps.switch_branches.values()))
        lines.append(f"- switches: {sw}")
    else:
        lines.append("- switches: none")
    if caps.curtailable_loads:
        lines.append("- curtailable loads (gamma_max): "
                     + ", ".join(f"{l} ({g:g})" for l, g in caps.curtailable_loads.items()))
    else:
        lines.append("- curtailable loads: none")
    s, p, q = caps.battery_defaults
    lines.append(f"- batteries: {caps.battery_slots} more may be placed; defaults s_max_mva={s:g}, "
                 f"p_max_mw={p:g}, q_max_mvar={q:g}; dispatch must satisfy p^2 + q^2 <= s_max^2")
    lines.append("- a new battery gets the id BAT<k> with the smallest unused k")
    for bid, b in caps.batteries.items():
        lines.append(f"- existing battery {bid} at bus {b.bus_id}, s_max_mva={b.s_max_mva:g}")
    return "\n".join(lines)


def build_prompt(req: PlanRequest) -> dict[str, str]:
    system = "\n\n".join([
        "## Role\nYou are an expert power system operator. You remove voltage, thermal and "
        "disconnection violations from a distribution or transmission network by issuing "
        "control actions.",
        f"## State context\n{req.context.text.rstrip()}",
        f"## Action space\n{_action_space(req.available_actions)}",
        f"## Priority policy\n{req.policy}",
        "## Output format\nReply with a single JSON object that validates against this schema:\n"
        f"{json.dumps(OUTPUT_SCHEMA, sort_keys=True)}\n"
        'Example: {"actions":[{"tool":"update_switch_status","args":{"switch_id":"S1","closed":true}}],'
        '"rationale":"..."}\n'
        "Output JSON only, with no prose before or after it.",
    ])
    viol = [f"- {v.describe()}" for v in req.context.focus_violations] or ["- none"]
    user = [f"Active violations ({len(req.context.focus_violations)}):", *viol,
            f"Iterations remaining: {req.t_max_remaining}"]
    if req.history:
        user += ["", "## Previous attempts", *[f"- {h}" for h in req.history]]
    user.append("Propose the next plan.")
    return {"system": system, "user": "\n".join(user)}


# ---- parsing ----------------------------------------------------------------

_FENCE = re.compile(r"```(?:json)?\s*\n?(.*?)```", re.S)


def extract_json(text: str) -> dict:
    """First JSON object in ``text``; a fenced block wins over bare JSON."""
    dec = json.JSONDecoder()
    for block in _FENCE.findall(text):
        block = block.strip()
        try:
            obj, _ = dec.raw_decode(block)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    for m in re.finditer(r"\{", text):
        try:
            obj, _ = dec.raw_decode(text, m.start())
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    raise NoJsonFound("no JSON object found in the response")


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def parse_tool_calls(text: str, caps: Capabilities, planner_id: str = "") -> Plan:
    """Turn a model response into a validated Plan. Pure: nothing is applied.

    Raises:
        NoJsonFound, SchemaMismatch, UnknownTool, InvalidArguments
    """
    obj = extract_json(text)
    acts_raw = obj.get("actions")
    if not isinstance(acts_raw, list):
        raise SchemaMismatch("'actions' must be a list")
    if "rationale" in obj and not isinstance(obj["rationale"], str):
        raise SchemaMismatch("'rationale' must be a string")
    for i, item in enumerate(acts_raw):
        if not isinstance(item, dict) or not isinstance(item.get("tool"), str) \
                or not isinstance(item.get("args", {}), dict):
            raise SchemaMismatch(f"action {i} must be an object with 'tool' and 'args'")
        if item["tool"] not in TOOL_SCHEMAS:
            raise UnknownTool(f"action {i}: unknown tool {item['tool']!r}")

    diags: list[tuple[int, str]] = []
    actions = []
    bats = dict(caps.batteries)
    slots = caps.battery_slots
    for i, item in enumerate(acts_raw):
        tool, args = item["tool"], item.get("args", {})
        missing = _REQUIRED[tool] - set(args)
        extra = set(args) - _REQUIRED[tool] - _OPTIONAL.get(tool, set())
        if missing or extra:
            diags.append((i, f"{tool} args: missing {sorted(missing)}, unexpected {sorted(extra)}"))
            continue
        reason = None
        if tool == "update_switch_status":
            if args["switch_id"] not in caps.switches:
                reason = f"unknown switch {args['switch_id']!r}"
            elif not isinstance(args["closed"], bool):
                reason = "closed must be a boolean"
            else:
                actions.append(SetSwitch(args["switch_id"], args["closed"]))
        elif tool == "curtail_load":
            lid, g = args["load_id"], args["gamma"]
            if lid not in caps.curtailable_loads:
                reason = f"{lid!r} is not a curtailable load"
            elif not _is_num(g) or not 0 <= g <= 1:
                reason = f"gamma {g!r} outside [0, 1]"
            elif g > caps.curtailable_loads[lid] + 1e-12:
                reason = f"gamma {g} exceeds gamma_max {caps.curtailable_loads[lid]}"
            else:
                actions.append(CurtailLoad(lid, float(g)))
        elif tool == "add_battery":
            reason = _parse_add_battery(args, caps, bats, slots, actions)
            if reason is None:
                slots -= 1
        else:
            bid, p, q = args["battery_id"], args["p_mw"], args["q_mvar"]
            b = bats.get(bid)
            if b is None or not b.placed:
                reason = f"unknown battery {bid!r}"
            elif not (_is_num(p) and _is_num(q)):
                reason = "p_mw and q_mvar must be numbers"
            else:
                reason = _capability_error(b.s_max_mva, b.p_max_mw, b.q_max_mvar, p, q)
                if reason is None:
                    actions.append(DispatchBattery(bid, float(p), float(q)))
        if reason is not None:
            diags.append((i, reason))
    if diags:
        raise InvalidArguments(diags[0][0], diags[0][1], diags)
    return Plan(tuple(actions), str(obj.get("rationale", "")), planner_id)


def _capability_error(s, pmax, qmax, p, q) -> str | None:
    if p * p + q * q > s * s * (1 + 1e-12):
        return f"dispatch ({p}, {q}) exceeds s_max {s}"
    if abs(p) > pmax + 1e-12 or abs(q) > qmax + 1e-12:
        return f"dispatch ({p}, {q}) exceeds p_max {pmax} / q_max {qmax}"
    return None


def _parse_add_battery(args, caps, bats, slots, actions) -> str | None:
    from .base import BatteryInfo

    bus = args["bus_id"]
    if bus not in caps.buses:
        return f"unknown bus {bus!r}"
    if slots <= 0:
        return "battery budget exhausted"
    s, pmax, qmax = caps.battery_defaults
    if "s_max_mva" in args:
        if not _is_num(args["s_max_mva"]) or args["s_max_mva"] <= 0:
            return "s_max_mva must be a positive number"
        s = pmax = qmax = float(args["s_max_mva"])
    p, q = args.get("p_mw", 0.0), args.get("q_mvar", 0.0)
    if not (_is_num(p) and _is_num(q)):
        return "p_mw and q_mvar must be numbers"
    err = _capability_error(s, pmax, qmax, p, q)
    if err:
        return err
    k = 1
    while f"BAT{k}" in bats:
        k += 1
    bid = f"BAT{k}"
    bats[bid] = BatteryInfo(bus, s, pmax, qmax)
    actions.append(AddBattery(bus, s, pmax, qmax))
    if "p_mw" in args or "q_mvar" in args:
        actions.append(DispatchBattery(bid, float(p), float(q)))
    return None


def _single_call(a) -> dict:
    if isinstance(a, SetSwitch):
        return {"tool": a.tool, "args": {"switch_id": a.switch_id, "closed": a.closed}}
    if isinstance(a, CurtailLoad):
        return {"tool": a.tool, "args": {"load_id": a.load_id, "gamma": a.gamma}}
    return {"tool": a.tool, "args": {"battery_id": a.battery_id, "p_mw": a.p_mw, "q_mvar": a.q_mvar}}


def plan_to_wire(plan: Plan, existing_batteries=()) -> dict:
    """Tool-call JSON for a plan.

    An add immediately followed by a dispatch of the battery it creates
    collapses into one add_battery call. ``existing_batteries`` are the ids
    present before the plan, needed to predict new ids.
    """
    taken = set(existing_batteries)
    out = []
    acts = list(plan.actions)
    i = 0
    while i < len(acts):
        a = acts[i]
        if isinstance(a, AddBattery):
            if not (a.s_max_mva == a.p_max_mw == a.q_max_mvar):
                raise ValueError("add_battery can only express equal s/p/q ratings")
            k = 1
            while f"BAT{k}" in taken:
                k += 1
            bid = f"BAT{k}"
            taken.add(bid)
            args = {"bus_id": a.bus_id, "s_max_mva": a.s_max_mva}
            nxt = acts[i + 1] if i + 1 < len(acts) else None
            if isinstance(nxt, DispatchBattery) and nxt.battery_id == bid:
                args["p_mw"], args["q_mvar"] = nxt.p_mw, nxt.q_mvar
                i += 1
            out.append({"tool": a.tool, "args": args})
        else:
            out.append(_single_call(a))
        i += 1
    return {"actions": out, "rationale": plan.rationale}


# ---- transport --------------------------------------------------------------

def request_body(messages: list[dict], cfg: LlmClientConfig) -> dict:
    body: dict = {"model": cfg.model, "messages": messages}
    if cfg.temperature is not None:
        body["temperature"] = cfg.temperature
    if cfg.thinking_budget is not None:
        body["thinking_budget"] = cfg.thinking_budget
    return body


def http_transport(body: dict, cfg: LlmClientConfig) -> str:
    """POST a chat-completion request and return the first choice's text."""
    if not cfg.endpoint:
        raise TransportError(f"no endpoint configured (set {ENV_ENDPOINT})")
    headers = {"Content-Type": "application/json"}
    key = os.environ.get(cfg.api_key_env)
    if key:
        headers["Authorization"] = f"Bearer {key}"
    req = urllib.request.Request(cfg.endpoint, data=json.dumps(body).encode("utf-8"),
                                 headers=headers, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=cfg.timeout_s) as resp:
            payload = json.loads(resp.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        raise TransportError(f"HTTP {exc.code} from {cfg.endpoint}") from None
    except (urllib.error.URLError, TimeoutError, OSError) as exc:
        raise TransportError(f"request to {cfg.endpoint} failed: {exc}") from None
    except json.JSONDecodeError:
        raise TransportError("response body is not JSON") from None
    try:
        return payload["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise TransportError("response has no choices[0].message.content") from None


def _call(transport: Transport, messages: list[dict], cfg: LlmClientConfig) -> str:
    body = request_body(messages, cfg)
    last: TransportError | None = None
    for _ in range(1 + cfg.max_retries):
        try:
            return transport(body, cfg)
        except TransportError as exc:
            last = exc
    raise TransportError(f"{1 + cfg.max_retries} attempts failed: {last}")


def plan_llm(req: PlanRequest, cfg: LlmClientConfig, transport: Transport = http_transport) -> Plan:
    """One prompt, and at most one repair prompt carrying the parse error.

    Raises:
        TransportError: every attempt of a call failed.
        UnparseableAfterRepair: the repaired reply still did not parse.
    """
    prompt = build_prompt(req)
    messages = [{"role": "system", "content": prompt["system"]},
                {"role": "user", "content": prompt["user"]}]
    reply = _call(transport, messages, cfg)
    try:
        return parse_tool_calls(reply, req.available_actions, cfg.model)
    except ParseError as exc:
        first = exc
    messages += [
        {"role": "assistant", "content": reply},
        {"role": "user", "content": f"Your reply could not be used: {type(first).__name__}: {first}. "
                                    "Reply again with one JSON object matching the output schema, "
                                    "and nothing else."},
    ]
    reply = _call(transport, messages, cfg)
    try:
        return parse_tool_calls(reply, req.available_actions, cfg.model)
    except ParseError as exc:
        raise UnparseableAfterRepair(f"{type(exc).__name__}: {exc}") from exc


@dataclass
class LlmPlanner:
    cfg: LlmClientConfig
    transport: Transport = field(default=http_transport)

    @property
    def planner_id(self) -> str:
        return self.cfg.model

    def propose(self, req: PlanRequest) -> Plan:
        return plan_llm(req, self.cfg, self.transport)
