"""Scenario configuration: JSON loading, schema validation and the built-in catalog."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema

CATALOG = ("repeller", "attractor", "saddle", "annulus", "torus")

DEFAULTS = {
    "gradient_mode": "normalized",
    "integrator": {"step": 1e-3, "t_max": 50.0, "safety_margin": False},
    "tolerances": {"grad_tol": 1e-10, "epsilon": 0.05, "T_cut": 20.0, "horizon": 20.0},
    "samples": 500,
    "seed": 0,
    "checks": ["index-pair", "lyapunov", "cohomology", "deform", "cover", "bound"],
}


class ConfigError(ValueError):
    pass


def _schema() -> dict:
    return json.loads(resources.files("conleykit").joinpath("schemas/config.schema.json")
                      .read_text())


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    dimension: int
    lo: tuple
    hi: tuple
    periodic: tuple
    resolution: tuple
    objective: str
    gradient_mode: str
    T: Optional[float]
    step: float
    t_max: float
    safety_margin: bool
    grad_tol: float
    epsilon: float
    T_cut: float
    horizon: float
    pair: dict
    deform: dict
    cover: dict
    samples: int
    seed: int
    checks: tuple
    raw: dict = field(repr=False, compare=False, default_factory=dict)
    base_dir: Optional[Path] = field(default=None, compare=False)

    def as_dict(self) -> dict:
        return copy.deepcopy(self.raw)


def _merge(raw: dict) -> dict:
    out = copy.deepcopy(raw)
    for k, v in DEFAULTS.items():
        if isinstance(v, dict):
            out[k] = {**v, **out.get(k, {})}
        else:
            out.setdefault(k, copy.deepcopy(v))
    return out


def _path(err: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def _message(err: jsonschema.ValidationError) -> str:
    where = _path(err)
    if err.validator in ("minimum", "exclusiveMinimum"):
        op = ">=" if err.validator == "minimum" else ">"
        return f"{where} must be {op} {err.validator_value}"
    if err.validator == "oneOf" and err.context:
        best = min(err.context, key=lambda e: len(list(e.absolute_path)))
        if best.validator in ("minimum", "exclusiveMinimum"):
            return f"{where} must be >= {best.validator_value}"
    return f"{where}: {err.message}"


def validate(raw: dict, base_dir: Optional[Path] = None) -> ScenarioConfig:
    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigError(_message(errors[0]))
    cfg = _merge(raw)
    n = cfg["dimension"]
    dom = cfg["domain"]
    periodic = dom.get("periodic", [False] * n)
    for key, seq in (("domain/lo", dom["lo"]), ("domain/hi", dom["hi"]),
                     ("domain/periodic", periodic)):
        if len(seq) != n:
            raise ConfigError(f"{key} must have {n} entries")
    if any(h <= l for l, h in zip(dom["lo"], dom["hi"])):
        raise ConfigError("domain/hi must exceed domain/lo on every axis")
    res = cfg["resolution"]
    res = (res,) * n if isinstance(res, int) else tuple(res)
    if len(res) != n:
        raise ConfigError(f"resolution must have {n} entries")
    pair = cfg["pair"]
    src = pair["source"]
    if src == "benci" and cfg.get("T") is None:
        raise ConfigError("T is required for a benci pair")
    if src == "explicit":
        for key in ("N", "L"):
            if key not in pair:
                raise ConfigError(f"pair/{key} is required for an explicit pair")
            p = Path(pair[key])
            if not p.is_absolute() and base_dir is not None:
                p = base_dir / p
            if not p.exists():
                raise ConfigError(f"pair/{key}: file not found: {p}")
    if src == "sublevel" and "expression" not in pair:
        raise ConfigError("pair/expression is required for a sublevel pair")
    if "box" in pair and (len(pair["box"]["lo"]) != n or len(pair["box"]["hi"]) != n):
        raise ConfigError(f"pair/box bounds must have {n} entries")
    integ, tol = cfg["integrator"], cfg["tolerances"]
    return ScenarioConfig(
        name=cfg["name"], dimension=n, lo=tuple(map(float, dom["lo"])),
        hi=tuple(map(float, dom["hi"])), periodic=tuple(periodic), resolution=res,
        objective=cfg["objective"], gradient_mode=cfg["gradient_mode"], T=cfg.get("T"),
        step=float(integ["step"]), t_max=float(integ["t_max"]),
        safety_margin=bool(integ["safety_margin"]), grad_tol=float(tol["grad_tol"]),
        epsilon=float(tol["epsilon"]), T_cut=float(tol["T_cut"]), horizon=float(tol["horizon"]),
        pair=pair, deform=cfg.get("deform", {}), cover=cfg.get("cover", {}),
        samples=int(cfg["samples"]), seed=int(cfg["seed"]), checks=tuple(cfg["checks"]),
        raw=raw, base_dir=base_dir,
    )


def load_config(path) -> ScenarioConfig:
    """Read and validate a JSON scenario file; unknown keys are errors."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return validate(raw, base_dir=path.parent)


def catalog_path(name: str):
    if name not in CATALOG:
        raise ConfigError(f"unknown scenario {name!r}; choose from {', '.join(CATALOG)}")
    return resources.files("conleykit").joinpath(f"catalog/{name}.json")


def load_scenario(name: str) -> ScenarioConfig:
    """A built-in catalog scenario."""
    return validate(json.loads(catalog_path(name).read_text()))
