"""Tolerances, defaults and the JSON schema for run configurations.

Every numerical threshold used by the experiments is defined here so that
a run configuration can override it under ``"tolerances"``.
"""

from __future__ import annotations

import copy
from typing import Any

import jsonschema

TOLERANCES: dict[str, float] = {
    # max-growth invariant exp(delta r^p t)|phi| <= 1 + growth
    "growth": 1e-6,
    # pointwise and operator inequalities (absolute slack)
    "inequality": 1e-12,
    # relative slack of the stability inequality
    "stability_rel": 1e-4,
    # Picard sweep distance at which iteration stops
    "picard": 1e-12,
    # accepted excess of measured contraction ratios over the theoretical factor
    "contraction_slack": 0.10,
    # minimum eigenvalue allowed in psd spot checks
    "psd": 1e-6,
    # |phi| <= 1 check
    "unit_bound": 1e-12,
    # Gaussian fixed point of the collision operator
    "gaussian": 1e-8,
    # moment identities
    "lambda_2": 1e-12,
    "gamma_2": 1e-10,
    # inversion tail bound
    "tail": 1e-8,
    # Gaussian density against its closed form
    "density_closed_form": 1e-6,
    # relative error of the stable-law L1 norm identity
    "levy_l1": 1e-8,
    # relative error of the fitted tail constant
    "tail_fit": 0.02,
    # sup of (1 - exp(-r^p t)) / r^p against t
    "norm_identity": 1e-4,
    # relative error of the non-existence slope
    "slope_rel": 0.05,
    # relative gap between lambda_alpha and the last truncated exponent
    "continuation_exponent": 0.10,
}

DEFAULT_SEED = 20240601


def tolerances(overrides: dict | None = None) -> dict[str, float]:
    tol = dict(TOLERANCES)
    if overrides:
        unknown = set(overrides) - set(tol)
        if unknown:
            raise ValueError(f"unknown tolerance keys: {sorted(unknown)}")
        tol.update({k: float(v) for k, v in overrides.items()})
    return tol


_KERNEL = {
    "type": "object",
    "properties": {
        "family": {"enum": ["constant", "maxwellian_singular", "custom"]},
        "kappa_or_c": {"type": "number", "minimum": 0},
        "singularity_exponent": {"type": ["number", "null"]},
        "truncation": {
            "type": ["object", "null"],
            "properties": {"n": {"type": "integer", "minimum": 1}, "cap": {"type": "boolean"}},
            "required": ["n"],
            "additionalProperties": False,
        },
        "table": {
            "type": "object",
            "properties": {"theta": {"type": "array", "items": {"type": "number"}},
                           "b": {"type": "array", "items": {"type": "number"}}},
            "required": ["theta", "b"],
        },
    },
    "required": ["family"],
    "additionalProperties": False,
}

_GRID = {
    "type": "object",
    "properties": {
        "r_min": {"type": "number", "exclusiveMinimum": 0},
        "r_max": {"type": "number", "exclusiveMinimum": 0},
        "n_log": {"type": "integer", "minimum": 2},
        "n_linear": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
}

_INITIAL = {
    "type": "object",
    "properties": {
        "preset": {"enum": ["w_p", "gaussian", "mixture", "unit"]},
        "p": {"type": "number", "exclusiveMinimum": 0, "maximum": 2},
        "t0": {"type": "number", "exclusiveMinimum": 0},
        "c": {"type": "number", "exclusiveMinimum": 0},
        "components": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
        },
        "file": {"type": "string"},
    },
    "additionalProperties": False,
}

_ALPHA = {"type": "number", "exclusiveMinimum": 0, "maximum": 2}
_P = {"type": "number", "exclusiveMinimum": 0, "maximum": 2}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "properties": {
        "p": _P,
        "delta_p": {"type": "number", "minimum": 0},
        "alpha": _ALPHA,
        "alphas": {"type": "array", "items": _ALPHA},
        "t": {"type": "number", "exclusiveMinimum": 0},
        "kernel": _KERNEL,
        "grid": _GRID,
        "scheme": {"enum": ["exp_euler", "exp_heun", "picard"]},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "T_final": {"type": "number", "exclusiveMinimum": 0},
        "adaptive": {"type": "boolean"},
        "n_outputs": {"type": "integer", "minimum": 1},
        "initial": _INITIAL,
        "initial_other": _INITIAL,
        "truncation_sequence": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "v_max": {"type": "number", "exclusiveMinimum": 0},
        "n_v": {"type": "integer", "minimum": 2},
        "r_samples": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "r_min_sequence": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "tolerances": {"type": "object", "additionalProperties": {"type": "number"}},
        "quadrature": {
            "type": "object",
            "properties": {
                "panels": {"type": "integer", "minimum": 4},
                "gauss_order": {"type": "integer", "minimum": 2},
                "grading": {"type": ["number", "null"], "minimum": 1},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "cancellation_mode": {"enum": ["direct", "split"]},
            },
            "additionalProperties": False,
        },
        "workers": {"type": "integer", "minimum": 1},
    },
    "additionalProperties": False,
}


class ConfigError(ValueError):
    """A run configuration failed validation; ``path`` names the offending field."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(message)
        self.path = path


def validate(cfg: dict) -> dict:
    """Validate against :data:`SCHEMA`; raises :class:`ConfigError` naming the field path."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = ".".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at '{path}': {err.message}", path)
    if "tolerances" in cfg:
        try:
            tolerances(cfg["tolerances"])
        except ValueError as exc:
            raise ConfigError(str(exc), "tolerances") from exc
    return copy.deepcopy(cfg)
