"""Versioned JSON schemas for CLI inputs and reports."""

from __future__ import annotations

import jsonschema

SCHEMA_VERSION = 1

_number_or_null = {"type": ["number", "null"]}
_complex = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_matrix = {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": _complex}}
_energy = {"type": ["string", "integer"], "pattern": r"^-?\d+(/\d+)?$"}
_layout = {
    "type": "array",
    "minItems": 1,
    "items": {
        "type": "object",
        "required": ["label", "energies"],
        "properties": {
            "label": {"type": "string", "minLength": 1},
            "energies": {"type": "array", "minItems": 1, "items": _energy},
        },
    },
}

STATE = {
    "type": "object",
    "required": ["layout"],
    "properties": {
        "schema": {"const": "qcat.state/1"},
        "layout": _layout,
        "matrix": _matrix,
        "vector": {"type": "array", "minItems": 1, "items": _complex},
        "support": {"type": "array", "items": {"type": "array", "items": {"type": "integer"},
                                               "minItems": 2, "maxItems": 2}},
    },
    "oneOf": [{"required": ["matrix"]}, {"required": ["vector"]}],
}

CHANNEL = {
    "type": "object",
    "required": ["input_layout", "output_layout", "kraus"],
    "properties": {
        "schema": {"const": "qcat.channel/1"},
        "input_layout": _layout,
        "output_layout": _layout,
        "kraus": {"type": "array", "minItems": 1, "items": _matrix},
    },
}

ENERGIES = {
    "type": "object",
    "required": ["energies"],
    "properties": {"energies": {"type": "array", "minItems": 1, "items": _energy}},
}

_ledger = {
    "type": "object",
    "required": ["entries", "correlation_graph", "max_residual", "n_catalysts", "passed"],
    "properties": {
        "entries": {"type": "array", "items": {"type": "object", "required": ["label", "residual", "multiplicity"]}},
        "correlation_graph": {"type": "array"},
        "max_residual": {"type": "number"},
        "n_catalysts": {"type": "integer"},
        "passed": {"type": "boolean"},
    },
}

_protocol = {
    "type": "object",
    "required": ["kind", "achieved_distance", "budget", "ledger", "details", "passed"],
    "properties": {
        "kind": {"enum": ["marginal-catalytic", "quasi-correlated", "correlated-catalytic", "free"]},
        "achieved_distance": {"type": "number"},
        "budget": {"type": ["object", "null"]},
        "ledger": _ledger,
        "passed": {"type": "boolean"},
    },
}

RESULTS = {
    "amplify": {
        "type": "object",
        "required": ["eta_sequence", "measured_etas", "catalyst_residuals", "max_step_deviation"],
        "properties": {"eta_sequence": {"type": "array", "items": {"type": "number"}, "minItems": 1}},
    },
    "counterexample": {
        "type": "object",
        "required": ["eta0", "eta1", "simulated_marginal", "polynomial_matrix", "offdiag_gap"],
    },
    "prepare": _protocol,
    "quasi-prepare": _protocol,
    "overlap": {
        "type": "object",
        "required": ["rows"],
        "properties": {"rows": {"type": "array", "items": {
            "type": "object", "required": ["L", "m", "exact_value", "lower_bound"]}}},
    },
    "index-sets": {
        "type": "object",
        "required": ["support", "I", "J", "partition"],
        "properties": {
            "partition": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}},
        },
    },
    "convert": {"type": "object", "required": ["report", "register_dimension", "channel_kraus_count"]},
    "broadcast3": {"type": "object", "required": ["report", "delta", "rho_prime_13"]},
    "reuse": {
        "type": "object",
        "required": ["K", "n", "count", "expected_count", "runs", "validation"],
        "properties": {"count": {"type": "integer"}, "runs": {"type": "array"}},
    },
    "verify": {
        "type": "object",
        "required": ["checks"],
        "properties": {"checks": {"type": "array", "items": {
            "type": "object", "required": ["module", "name", "passed"]}}},
    },
}

COMMANDS = tuple(RESULTS)


def report_schema(command: str) -> dict:
    if command not in RESULTS:
        raise KeyError(f"no schema for command {command!r}")
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "type": "object",
        "required": ["schema", "version", "timestamp", "command", "parameters", "result", "passed"],
        "properties": {
            "schema": {"const": f"qcat.report.{command}/{SCHEMA_VERSION}"},
            "version": {"type": "string"},
            "timestamp": {"type": "string"},
            "command": {"const": command},
            "parameters": {"type": "object"},
            "result": RESULTS[command],
            "passed": {"type": "boolean"},
        },
    }


def field_path(err: jsonschema.ValidationError) -> str:
    parts = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
    return "$" + parts


def validate(instance, schema: dict, what: str = "document") -> None:
    """Raise ``ValueError`` naming the first offending field path."""
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(instance), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        e = errors[0]
        raise ValueError(f"{what}: {field_path(e)}: {e.message}")


def validate_report(report: dict) -> None:
    validate(report, report_schema(report["command"]), f"{report['command']} report")
