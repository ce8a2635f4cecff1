"""
Scenario loader: JSON scenario files <-> Scenario models

Responsibilities
- Parse a scenario document, converting ``*_ms`` / ``*_us`` duration keys to
  nanoseconds and unit-suffixed keys (``range_m``, ``bandwidth_bps``,
  ``speed_mps``) to model field names.
- Reject syntax errors, unknown fields and type mismatches with
  position/path annotated messages.
- Serialize a Scenario back to the same format with stable key order.
- Apply command-line overrides and calibration estimates, returning copies.
"""

import json
import logging
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, List, Mapping, Optional, Tuple

from pydantic import ValidationError

from iotstage.models.scenario import (
    ALL_CHANNELS,
    NS_PER_MS,
    NS_PER_US,
    WIRELESS,
    RunMode,
    Scenario,
    parse_channel_selector,
)
from iotstage.utils.exceptions import ScenarioParseError, UnknownTargetError

if TYPE_CHECKING:
    from iotstage.services.calibration import ChannelEstimate

logger = logging.getLogger(__name__)

# Durations per object kind; in files they carry an _ms or _us suffix.
_DURATIONS = {
    "scenario": ("duration", "step"),
    "wireless": ("latency", "jitter_max"),
    "link": ("latency", "jitter_max"),
    "node": ("processing_delay",),
    "entity": (),
    "fault": ("at",),
    "probe": (),
    "external": (),
}

# File key -> model field
_RENAMES = {
    "wireless": {"range_m": "range", "bandwidth_bps": "bandwidth"},
    "link": {"bandwidth_bps": "bandwidth"},
    "entity": {"speed_mps": "speed"},
}

_UNIT_SCALE = {"_ms": NS_PER_MS, "_us": NS_PER_US}

_TOP_LEVEL_ORDER = (
    "name",
    "duration",
    "step",
    "seed",
    "mode",
    "rtf",
    "wireless",
    "links",
    "nodes",
    "mobility",
    "faults",
    "probes",
)


def parse_scenario(text: str, default_step_ms: Optional[int] = None) -> Scenario:
    """
    Parse a scenario document

    Args:
        text: UTF-8 JSON scenario document
        default_step_ms: Window length used when the document has no step

    Returns:
        Fully populated Scenario with defaults applied

    Raises:
        ScenarioParseError: syntax error, unknown field, missing field or
            type mismatch
    """
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioParseError(
            f"syntax error at line {e.lineno} column {e.colno}: {e.msg}",
            payload={"line": e.lineno, "column": e.colno},
        ) from e

    if not isinstance(document, dict):
        raise ScenarioParseError("type mismatch at <root>: expected an object")

    data = _from_file(document, "scenario", "")
    for key, kind in (("links", "link"), ("nodes", "node"), ("mobility", "entity"),
                      ("faults", "fault"), ("probes", "probe")):
        if key in data and isinstance(data[key], list):
            data[key] = [
                _from_file(item, kind, f"{key}[{i}]") if isinstance(item, dict) else item
                for i, item in enumerate(data[key])
            ]
    if isinstance(data.get("wireless"), dict):
        data["wireless"] = _from_file(data["wireless"], "wireless", "wireless")
    for i, node in enumerate(data.get("nodes") or []):
        if isinstance(node, dict) and isinstance(node.get("external"), dict):
            node["external"] = _from_file(node["external"], "external", f"nodes[{i}].external")

    if "step" not in data and default_step_ms is not None:
        data["step"] = default_step_ms * NS_PER_MS

    try:
        return Scenario.model_validate(data)
    except ValidationError as e:
        raise _translate(e) from e


def load_scenario(path, default_step_ms: Optional[int] = None) -> Scenario:
    """Read and parse a scenario file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioParseError(f"cannot read scenario {path}: {e.strerror}") from e
    scenario = parse_scenario(text, default_step_ms=default_step_ms)
    logger.debug("Scenario loaded", extra={"path": str(path), "scenario": scenario.name})
    return scenario


def serialize_scenario(scenario: Scenario) -> str:
    """Serialize a Scenario to the scenario file format."""
    dumped = scenario.model_dump(mode="json", exclude_none=True)
    out: Dict[str, Any] = {}
    for key in _TOP_LEVEL_ORDER:
        if key not in dumped:
            continue
        value = dumped[key]
        if key in _DURATIONS["scenario"]:
            out.update(_duration_to_file(key, value))
        elif key == "wireless":
            out[key] = _to_file(value, "wireless")
        elif key in ("links", "nodes", "mobility", "faults", "probes"):
            kind = {"links": "link", "nodes": "node", "mobility": "entity",
                    "faults": "fault", "probes": "probe"}[key]
            out[key] = [_to_file(item, kind) for item in value]
        else:
            out[key] = value
    return json.dumps(out, indent=2, ensure_ascii=False) + "\n"


def dump_scenario(scenario: Scenario, path) -> None:
    """Write a Scenario to a file."""
    Path(path).write_text(serialize_scenario(scenario), encoding="utf-8")


def apply_overrides(
    scenario: Scenario,
    seed: Optional[int] = None,
    mode: Optional[str] = None,
    rtf: Optional[float] = None,
) -> Tuple[Scenario, Dict[str, Any]]:
    """Return a copy with command-line overrides applied, plus the applied set."""
    update: Dict[str, Any] = {}
    if seed is not None:
        update["seed"] = seed
    if mode is not None:
        update["mode"] = RunMode(mode)
    if rtf is not None:
        update["rtf"] = float(rtf)
    if not update:
        return scenario, {}
    recorded = {k: (v.value if isinstance(v, RunMode) else v) for k, v in update.items()}
    return scenario.model_copy(update=update), recorded


def merge_calibration(
    scenario: Scenario, estimate: "ChannelEstimate", target: str
) -> Scenario:
    """
    Replace a channel's latency/jitter_max/loss with a calibration estimate

    Args:
        scenario: Scenario to copy
        estimate: Channel estimate (durations in ns)
        target: ``wireless`` or ``link:<a>:<b>``

    Returns:
        Copy of the scenario; nodes, entities, faults and probes untouched

    Raises:
        UnknownTargetError: target names no channel of the scenario
    """
    try:
        kind, key = parse_channel_selector(target)
    except ValueError as e:
        raise UnknownTargetError(str(e)) from e

    # Files carry microsecond resolution at most.
    update = {
        "latency": _round_us(estimate.latency),
        "jitter_max": _round_us(estimate.jitter_max),
        "loss": float(estimate.loss),
    }

    if kind == WIRELESS:
        if scenario.wireless is None:
            raise UnknownTargetError("scenario has no wireless channel")
        wireless = scenario.wireless.model_copy(update=update)
        return scenario.model_copy(update={"wireless": wireless})

    if kind == ALL_CHANNELS:
        raise UnknownTargetError("calibration needs a single channel, not '*'")

    links = list(scenario.links)
    for i, link in enumerate(links):
        if link.key == key:
            links[i] = link.model_copy(update=update)
            return scenario.model_copy(update={"links": tuple(links)})
    raise UnknownTargetError(f"no link {target!r} in scenario")


def _round_us(value_ns) -> int:
    return int(round(value_ns / NS_PER_US)) * NS_PER_US


def _from_file(obj: Mapping[str, Any], kind: str, path: str) -> Dict[str, Any]:
    durations = _DURATIONS[kind]
    renames = _RENAMES.get(kind, {})
    out: Dict[str, Any] = {}
    for key, value in obj.items():
        field = key
        suffix = key[-3:]
        base = key[:-3]
        if suffix in _UNIT_SCALE and base in durations:
            where = _join(path, key)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ScenarioParseError(
                    f"type mismatch at {where}: expected integer",
                    payload={"path": where},
                )
            if base in out:
                raise ScenarioParseError(
                    f"duplicate field: {_join(path, base)} given in both units",
                    payload={"path": where},
                )
            out[base] = value * _UNIT_SCALE[suffix]
            continue
        if key in durations or key in renames.values():
            # Model names are not file names: 'latency' must read latency_ms.
            raise ScenarioParseError(
                f"unknown field: {_join(path, key)}", payload={"path": _join(path, key)}
            )
        field = renames.get(key, key)
        out[field] = value
    return out


def _to_file(obj: Dict[str, Any], kind: str) -> Dict[str, Any]:
    durations = _DURATIONS[kind]
    renames = {v: k for k, v in _RENAMES.get(kind, {}).items()}
    out: Dict[str, Any] = {}
    for key, value in obj.items():
        if key in durations:
            out.update(_duration_to_file(key, value))
        elif key == "params" and not value:
            continue
        elif key == "external":
            out[key] = dict(value)
        else:
            out[renames.get(key, key)] = value
    return out


def _duration_to_file(key: str, value_ns: int) -> Dict[str, int]:
    if value_ns % NS_PER_MS == 0:
        return {f"{key}_ms": value_ns // NS_PER_MS}
    return {f"{key}_us": value_ns // NS_PER_US}


def _join(path: str, key) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else str(key)


def _file_name(field: str, kinds: List[str]) -> str:
    for kind in kinds:
        if field in _DURATIONS.get(kind, ()):
            return f"{field}_ms"
        for file_key, model_key in _RENAMES.get(kind, {}).items():
            if model_key == field:
                return file_key
    return field


_LIST_KINDS = {"links": "link", "nodes": "node", "mobility": "entity",
               "faults": "fault", "probes": "probe"}


def _format_loc(loc) -> str:
    path = ""
    kinds = ["scenario"]
    for part in loc:
        if isinstance(part, int):
            path = _join(path, part)
            continue
        if not isinstance(part, str):
            continue
        name = _file_name(part, kinds[-1:])
        path = _join(path, name)
        kinds.append(_LIST_KINDS.get(part, part))
    return path or "<root>"


def _translate(error: ValidationError) -> ScenarioParseError:
    problems = []
    for item in error.errors():
        where = _format_loc(item["loc"])
        if item["type"] == "missing":
            problems.append(f"missing required field: {where}")
        elif item["type"] == "extra_forbidden":
            problems.append(f"unknown field: {where}")
        else:
            problems.append(f"type mismatch at {where}: {item['msg']}")
    return ScenarioParseError("; ".join(problems), payload={"problems": problems})
