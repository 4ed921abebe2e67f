"""Run configuration: strict JSON documents with range checks.

A config is one JSON object. Example::

    {
      "domain": {"kind": "interval", "bounds": [[0, 1]]},
      "cells": 48,
      "s": 0.5,
      "p": 2,
      "alpha": 0.25,
      "solver": {"tol_lambda": 1e-9, "seed": 0}
    }

Keys not listed in ``FIELDS`` or ``SOLVER_FIELDS`` are rejected, as are
duplicated keys.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from typing import Any

from .eigensolver import SolverOptions
from .errors import ConfigurationError
from .geometry import Domain
from .kernel import QUADRATURES

FIELDS = {
    "command", "domain", "cells", "s", "s_values", "p", "alpha", "sigma", "sigma_values",
    "quadrature", "solver", "obstacle", "potential", "profile", "oracle_budget", "n", "method",
    "out", "format",
}
SOLVER_FIELDS = {f.name for f in fields(SolverOptions)}
FORMATS = ("csv", "jsonlines")
COMMANDS = (
    "solve-hard", "solve-soft", "optimize-hard", "optimize-soft", "oracle",
    "continuation", "gamma-limit", "bbm-check", "constant-k",
)


@dataclass(frozen=True)
class RunConfig:
    domain: Domain = field(default_factory=Domain.interval)
    cells: tuple[int, ...] = (48,)
    s: float | None = None
    s_values: tuple[float, ...] = ()
    p: float = 2.0
    alpha: float | None = None
    sigma: float | None = None
    sigma_values: tuple[float, ...] = ()
    quadrature: str | None = None
    solver: SolverOptions = field(default_factory=SolverOptions)
    obstacle: tuple[int, ...] | None = None
    potential: tuple[float, ...] | None = None
    profile: str = "cos"
    oracle_budget: int = 10**6
    n: int = 1
    method: str = "gamma"
    command: str | None = None
    out: str | None = None
    format: str = "csv"

    def __post_init__(self):
        validate(self)

    def with_overrides(self, **changes) -> "RunConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        seed = changes.pop("seed", None)
        if seed is not None:
            changes["solver"] = replace(self.solver, seed=seed)
        return replace(self, **changes)


def _check_s(s: float, name: str = "s") -> None:
    if not (0.0 < s < 1.0):
        raise ConfigurationError(f"{name} must satisfy 0 < s < 1, got {s}")


def validate(cfg: RunConfig) -> None:
    """Range checks; runs before any array is allocated."""
    if not all(isinstance(c, int) and c >= 2 for c in cfg.cells):
        raise ConfigurationError(f"cells must be integers >= 2, got {list(cfg.cells)}")
    if len(cfg.cells) not in (1, cfg.domain.dim):
        raise ConfigurationError(f"cells needs 1 or {cfg.domain.dim} entries, got {len(cfg.cells)}")
    if cfg.s is not None:
        _check_s(cfg.s)
    for s in cfg.s_values:
        _check_s(s, "every entry of s_values")
    if not (1.0 < cfg.p < math.inf):
        raise ConfigurationError(f"p must satisfy 1 < p < inf, got {cfg.p}")
    if cfg.alpha is not None and not (0.0 < cfg.alpha < 1.0):
        raise ConfigurationError(f"alpha must satisfy 0 < alpha < 1, got {cfg.alpha}")
    if cfg.sigma is not None and not (cfg.sigma >= 0.0 and math.isfinite(cfg.sigma)):
        raise ConfigurationError(f"sigma must satisfy sigma >= 0, got {cfg.sigma}")
    sv = cfg.sigma_values
    if any(not (x > 0 and math.isfinite(x)) for x in sv) or any(b <= a for a, b in zip(sv, sv[1:])):
        raise ConfigurationError(f"sigma_values must be positive and strictly increasing, got {list(sv)}")
    if cfg.quadrature is not None and cfg.quadrature not in QUADRATURES:
        raise ConfigurationError(f"quadrature must be one of {QUADRATURES}, got {cfg.quadrature!r}")
    if cfg.command is not None and cfg.command not in COMMANDS:
        raise ConfigurationError(f"command must be one of {COMMANDS}, got {cfg.command!r}")
    if cfg.format not in FORMATS:
        raise ConfigurationError(f"format must be one of {FORMATS}, got {cfg.format!r}")
    if not (isinstance(cfg.oracle_budget, int) and cfg.oracle_budget >= 1):
        raise ConfigurationError(f"oracle_budget must be a positive integer, got {cfg.oracle_budget!r}")
    if not (isinstance(cfg.n, int) and cfg.n >= 1):
        raise ConfigurationError(f"n must be a positive integer, got {cfg.n!r}")


def _reject_duplicates(pairs):
    out = {}
    for key, value in pairs:
        if key in out:
            raise ConfigurationError(f"duplicate key {key!r}")
        out[key] = value
    return out


def _number(obj: dict, key: str, kind=float):
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{key} must be a number, got {value!r}")
    if kind is int:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigurationError(f"{key} must be an integer, got {value!r}")
        return int(value)
    return float(value)


def _number_list(obj: dict, key: str, kind=float) -> tuple:
    value = obj[key]
    if not isinstance(value, list):
        raise ConfigurationError(f"{key} must be a list, got {value!r}")
    return tuple(_number({key: v}, key, kind) for v in value)


def _domain(value: Any) -> Domain:
    if not isinstance(value, dict) or set(value) != {"kind", "bounds"}:
        raise ConfigurationError("domain must be an object with exactly the keys 'kind' and 'bounds'")
    bounds = value["bounds"]
    if not (isinstance(bounds, list) and all(isinstance(b, list) and len(b) == 2 for b in bounds)):
        raise ConfigurationError("domain.bounds must be a list of [low, high] pairs")
    return Domain(value["kind"], tuple(tuple(b) for b in bounds))


def _solver(value: Any) -> SolverOptions:
    if not isinstance(value, dict):
        raise ConfigurationError("solver must be an object")
    unknown = sorted(set(value) - SOLVER_FIELDS)
    if unknown:
        raise ConfigurationError(f"unknown key {unknown[0]!r} in solver; allowed: {sorted(SOLVER_FIELDS)}")
    kw = {}
    for key in ("tol_lambda", "tol_residual"):
        if key in value:
            kw[key] = _number(value, key)
    for key in ("max_iterations", "seed"):
        if key in value:
            kw[key] = _number(value, key, int)
    if "p2_mode" in value:
        kw["p2_mode"] = value["p2_mode"]
    try:
        return SolverOptions(**kw)
    except ValueError as exc:
        raise ConfigurationError(f"solver: {exc}") from exc


def config_from_dict(obj: dict) -> RunConfig:
    unknown = sorted(set(obj) - FIELDS)
    if unknown:
        raise ConfigurationError(f"unknown key {unknown[0]!r}; allowed: {sorted(FIELDS)}")
    kw: dict[str, Any] = {}
    if "domain" in obj:
        kw["domain"] = _domain(obj["domain"])
    if "cells" in obj:
        cells = obj["cells"]
        kw["cells"] = _number_list(obj, "cells", int) if isinstance(cells, list) else (_number(obj, "cells", int),)
    for key in ("s", "p", "alpha", "sigma"):
        if key in obj:
            kw[key] = _number(obj, key)
    for key in ("s_values", "sigma_values", "potential"):
        if key in obj:
            kw[key] = _number_list(obj, key)
    if "obstacle" in obj:
        kw["obstacle"] = _number_list(obj, "obstacle", int)
    for key in ("oracle_budget", "n"):
        if key in obj:
            kw[key] = _number(obj, key, int)
    for key in ("command", "quadrature", "profile", "method", "out", "format"):
        if key in obj:
            if not isinstance(obj[key], str):
                raise ConfigurationError(f"{key} must be a string, got {obj[key]!r}")
            kw[key] = obj[key]
    if "solver" in obj:
        kw["solver"] = _solver(obj["solver"])
    return RunConfig(**kw)


def parse_config(document: str) -> RunConfig:
    """Parse and validate one JSON object."""
    try:
        obj = json.loads(document, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigurationError("config must be a single JSON object")
    return config_from_dict(obj)
