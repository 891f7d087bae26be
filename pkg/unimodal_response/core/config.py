"""
Run configuration: defaults, JSON file, environment (.env) and CLI overrides.
"""
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional

import numpy as np
from dotenv import load_dotenv

from .errors import ConfigError

logger = logging.getLogger(__name__)

ENV_PREFIX = "UNIMODAL_RESPONSE_"


@dataclass
class RunConfig:
    """Everything a pipeline run depends on."""

    map: Dict[str, Any] = field(default_factory=dict)
    degree: int = 24
    degree_step: int = 8
    epsilon: float = 0.15
    chart_shape: float = 0.0
    orbit_tol: float = 1e-10
    max_iter: int = 10000
    markov_tol: float = 1e-9
    n_keep: int = 4
    n_random: int = 20
    seed: int = 0
    series_terms: int = 14
    series_radius: float = 0.45
    eigen_tol: float = 1e-8
    cycle_order: int = 10
    cycle_dps: int = 60
    collocation_checked: int = 2
    agreement_tol: float = 1e-7
    perturbations: List[Any] = field(default_factory=lambda: ["endpoint_vanishing", "constant"])
    observable: Any = "square"
    lambda_grid: Any = field(default_factory=lambda: {"circle": {"radius": 1.0, "n": 64}})
    agreement_grid: Any = field(default_factory=lambda: {
        "disk": {"radius": 0.4, "n_radial": 2, "n_angular": 4}})
    density_samples: int = 201
    output_dir: str = "results"

    def validate(self):
        if not self.map:
            raise ConfigError("configuration has no map specification")
        if self.degree < 8:
            raise ConfigError("degree must be at least 8", degree=self.degree)
        if self.degree_step < 1:
            raise ConfigError("degree_step must be positive", degree_step=self.degree_step)
        for name in ("epsilon", "orbit_tol", "markov_tol", "eigen_tol", "agreement_tol",
                     "series_radius"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive", value=getattr(self, name))
        if self.cycle_order < 3:
            raise ConfigError("cycle_order must be at least 3", cycle_order=self.cycle_order)
        if self.cycle_dps < 30:
            raise ConfigError("cycle_dps must be at least 30", cycle_dps=self.cycle_dps)
        if self.series_terms < 2:
            raise ConfigError("series_terms must be at least 2")
        if not self.perturbations:
            raise ConfigError("at least one perturbation X is required")
        lambda_grid(self.lambda_grid)
        lambda_grid(self.agreement_grid)
        return self

    def to_dict(self):
        return asdict(self)


def _coerce(value: str, template):
    if isinstance(template, bool):
        return value.lower() in ("1", "true", "yes")
    if isinstance(template, int):
        return int(value)
    if isinstance(template, float):
        return float(value)
    if isinstance(template, str):
        return value
    return json.loads(value)


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None,
                env_file: Optional[str] = None) -> RunConfig:
    """Merge defaults < JSON file < UNIMODAL_RESPONSE_* environment < overrides.

    Raises:
        ConfigError: unreadable file, unknown keys, or invalid values.
    """
    if env_file:
        load_dotenv(env_file)
    else:
        load_dotenv()
    config = RunConfig()
    known = {f.name for f in fields(RunConfig)}

    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as handle:
                data = json.load(handle)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(data, dict) or not data:
            raise ConfigError("config file is empty", path=path)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key, value in data.items():
            setattr(config, key, value)

    for f in fields(RunConfig):
        raw = os.getenv(ENV_PREFIX + f.name.upper())
        if raw is None:
            continue
        try:
            setattr(config, f.name, _coerce(raw, getattr(config, f.name)))
        except (ValueError, json.JSONDecodeError) as exc:
            raise ConfigError(f"bad value for {ENV_PREFIX + f.name.upper()}: {raw!r}") from exc
        logger.debug("Config %s taken from environment", f.name)

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in known:
            raise ConfigError(f"unknown config override {key!r}")
        setattr(config, key, value)
    return config.validate()


def lambda_grid(spec) -> np.ndarray:
    """Complex λ points from a list of [re, im] pairs or a disk/circle/annulus spec."""
    if isinstance(spec, list):
        try:
            return np.array([complex(float(re), float(im)) for re, im in spec])
        except (TypeError, ValueError) as exc:
            raise ConfigError("λ grid list must hold [re, im] pairs") from exc
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ConfigError("λ grid must be a list or one of disk/circle/annulus", spec=spec)
    kind, params = next(iter(spec.items()))
    try:
        if kind == "circle":
            n = int(params["n"])
            return float(params["radius"]) * np.exp(2j * np.pi * np.arange(n) / n)
        if kind == "disk":
            radius, n_radial, n_angular = float(params["radius"]), int(params["n_radial"]), int(params["n_angular"])
            rings = [np.array([0.0j])]
            for i in range(1, n_radial + 1):
                rings.append(radius * i / n_radial * np.exp(2j * np.pi * np.arange(n_angular) / n_angular))
            return np.concatenate(rings)
        if kind == "annulus":
            inner, outer = float(params["inner"]), float(params["outer"])
            n_radial, n_angular = int(params["n_radial"]), int(params["n_angular"])
            radii = np.linspace(inner, outer, n_radial)
            angles = np.exp(2j * np.pi * np.arange(n_angular) / n_angular)
            return (radii[:, None] * angles[None, :]).ravel()
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"incomplete {kind} grid spec", spec=spec) from exc
    raise ConfigError(f"unknown λ grid kind {kind!r}")
