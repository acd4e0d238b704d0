"""Run configuration: TOML in, validated dataclasses out, and back."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import tomli
import tomli_w

from .errors import InvalidSequence, ParseError, ValidationError
from .reduced import Sampling, Truncation
from .tree import POTENTIAL_FORMS, Potential, TreeSpec

TREE_KEYS = {"kind", "b", "q", "t_prefix", "b_prefix", "tail", "r"}
POTENTIAL_KEYS = {"form", "c", "gamma", "knots", "values"}
SECTIONS = {"tree", "potential", "solver", "grid", "oracle", "params"}


@dataclass
class SolverConfig:
    tolerance: float = 1e-10
    max_generation: int = 64
    tail_tolerance: float = 0.1
    max_phase_step: float = 0.5
    bc: str = "dirichlet"


@dataclass
class GridConfig:
    lambdas: list = field(default_factory=list)


@dataclass
class OracleConfig:
    generations: int = 3
    mesh: float = 1e-3
    n: int = 10


@dataclass
class RunConfig:
    tree: dict
    potential: dict = field(default_factory=lambda: {"form": "zero"})
    solver: SolverConfig = field(default_factory=SolverConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    params: dict = field(default_factory=dict)

    def tree_spec(self) -> TreeSpec:
        return _tree_from(self.tree)

    def potential_obj(self) -> Potential:
        return _potential_from(self.potential)

    def truncation(self) -> Truncation:
        return Truncation(self.solver.max_generation, self.solver.tail_tolerance)

    def sampling(self) -> Sampling:
        return Sampling(max_phase_step=self.solver.max_phase_step)


def log_grid(lam_min: float, lam_max: float, steps: int) -> list:
    if not 0 < lam_min < lam_max or steps < 2:
        raise ValidationError("log grid needs 0 < lambda_min < lambda_max and at least 2 steps")
    return [float(x) for x in np.geomspace(lam_min, lam_max, steps)]


def _tree_from(d: dict) -> TreeSpec:
    kind = d.get("kind")
    try:
        if kind == "homogeneous":
            return TreeSpec.homogeneous(d["b"])
        if kind == "geometric":
            return TreeSpec.geometric(d["q"], d["b"])
        if kind == "explicit":
            return TreeSpec.explicit(d["t_prefix"], d["b_prefix"], d.get("tail", "repeat"), d.get("r"))
    except KeyError as e:
        raise ValidationError(f"tree.{e.args[0]} is required for kind {kind!r}") from None
    raise ValidationError(f"tree.kind must be homogeneous, geometric or explicit, got {kind!r}")


def _potential_from(d: dict) -> Potential:
    form = d.get("form", "zero")
    try:
        if form == "zero":
            return Potential.zero()
        if form == "power":
            return Potential.power(d["c"], d["gamma"])
        if form == "table":
            return Potential.table(d["knots"], d["values"])
    except KeyError as e:
        raise ValidationError(f"potential.{e.args[0]} is required for form {form!r}") from None
    except ValueError as e:
        raise ValidationError(f"potential: {e}") from None
    raise ValidationError(f"potential.form must be one of {POTENTIAL_FORMS[:3]}, got {form!r}")


def _validate_tree(d: dict) -> None:
    unknown = set(d) - TREE_KEYS
    if unknown:
        raise ValidationError(f"unknown key tree.{sorted(unknown)[0]}")
    kind = d.get("kind")
    if kind == "geometric" and "q" in d and not (isinstance(d["q"], (int, float)) and 0 < d["q"] < 1):
        raise ValidationError(f"tree.q must satisfy 0 < q < 1, got {d['q']!r}")
    if kind in ("homogeneous", "geometric") and "b" in d and not (isinstance(d["b"], int) and d["b"] >= 2):
        raise ValidationError(f"tree.b must be an integer >= 2, got {d['b']!r}")
    try:
        _tree_from(d)
    except InvalidSequence as e:
        field_name = "t_prefix" if "t_" in str(e) or "increasing" in str(e) else "b_prefix"
        raise ValidationError(f"tree.{field_name}: {e}") from None


def _section(raw: dict, name: str) -> dict:
    val = raw.get(name, {})
    if not isinstance(val, dict):
        raise ValidationError(f"[{name}] must be a table")
    return val


def _dataclass_from(cls, raw: dict, name: str):
    allowed = set(cls.__dataclass_fields__)
    unknown = set(raw) - allowed
    if unknown:
        raise ValidationError(f"unknown key {name}.{sorted(unknown)[0]}")
    defaults = cls()
    for key, value in raw.items():
        expected = type(getattr(defaults, key))
        if expected is float and isinstance(value, int) and not isinstance(value, bool):
            raw[key] = float(value)
        elif not isinstance(raw[key], expected) or isinstance(value, bool):
            raise ValidationError(f"{name}.{key} must be of type {expected.__name__}")
    return cls(**raw)


def from_dict(raw: dict) -> RunConfig:
    """Validate a decoded TOML document."""
    unknown = set(raw) - SECTIONS
    if unknown:
        raise ValidationError(f"unknown section [{sorted(unknown)[0]}]")
    if "tree" not in raw:
        raise ValidationError("missing [tree] section")
    tree = dict(_section(raw, "tree"))
    _validate_tree(tree)
    pot = dict(_section(raw, "potential")) or {"form": "zero"}
    unknown = set(pot) - POTENTIAL_KEYS
    if unknown:
        raise ValidationError(f"unknown key potential.{sorted(unknown)[0]}")
    pot.setdefault("form", "zero")
    _potential_from(pot)
    solver = _dataclass_from(SolverConfig, dict(_section(raw, "solver")), "solver")
    for key in ("tolerance", "tail_tolerance", "max_phase_step"):
        if not getattr(solver, key) > 0:
            raise ValidationError(f"solver.{key} must be positive")
    if solver.max_generation < 1:
        raise ValidationError("solver.max_generation must be >= 1")
    if solver.bc not in ("dirichlet", "neumann"):
        raise ValidationError("solver.bc must be dirichlet or neumann")
    g = dict(_section(raw, "grid"))
    if "lambdas" in g:
        lams = g.pop("lambdas")
        if g:
            raise ValidationError("grid: give either lambdas or lambda_min/lambda_max/lambda_steps")
    elif g:
        extra = set(g) - {"lambda_min", "lambda_max", "lambda_steps"}
        if extra:
            raise ValidationError(f"unknown key grid.{sorted(extra)[0]}")
        try:
            lams = log_grid(float(g["lambda_min"]), float(g["lambda_max"]), int(g["lambda_steps"]))
        except KeyError as e:
            raise ValidationError(f"grid.{e.args[0]} is required") from None
    else:
        lams = []
    if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in lams):
        raise ValidationError("grid.lambdas must be numbers")
    lams = [float(x) for x in lams]
    if any(b <= a for a, b in zip(lams, lams[1:])):
        raise ValidationError("grid.lambdas must be strictly increasing")
    oracle = _dataclass_from(OracleConfig, dict(_section(raw, "oracle")), "oracle")
    if not oracle.mesh > 0 or oracle.generations < 1 or oracle.n < 1:
        raise ValidationError("oracle.mesh must be positive; oracle.generations and oracle.n >= 1")
    return RunConfig(tree, pot, solver, GridConfig(lams), oracle, dict(_section(raw, "params")))


def parse_config(source: Union[str, Path]) -> RunConfig:
    """Parse a TOML path or TOML text into a validated ``RunConfig``."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and "=" not in source
                                     and source.endswith(".toml")):
        text = Path(source).read_text()
    else:
        text = source
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as e:
        raise ParseError(f"invalid TOML: {e}") from None
    return from_dict(raw)


def to_dict(config: RunConfig) -> dict:
    out = {"tree": dict(config.tree), "potential": dict(config.potential),
           "solver": asdict(config.solver), "grid": {"lambdas": list(config.grid.lambdas)},
           "oracle": asdict(config.oracle)}
    if config.params:
        out["params"] = dict(config.params)
    return out


def serialize(config: RunConfig) -> str:
    """TOML text that parses back to an equal ``RunConfig``."""
    for v in config.grid.lambdas:
        if not math.isfinite(v):
            raise ValidationError("grid values must be finite")
    return tomli_w.dumps(to_dict(config))
