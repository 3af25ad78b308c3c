"""Scenario configuration: validation, INI round trip and content hash.

An INI manifest looks like::

    [moranml]
    schema = 1

    [scenario]
    geometry = grid
    rows = 50
    cols = 50
    weights = exp
    spatial_mode = eigenvectors
    selection = bic
    model = gbm
    seed = 7

    [hp]
    max_depth = 6

    [grid]
    n_estimators = 100, 200, 400

Keys left out take the defaults of :class:`ScenarioConfig`; ``[hp]`` and
``[grid]`` replace the model's default hyperparameters and search grid when
present.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

__all__ = [
    "ScenarioConfig",
    "ConfigError",
    "SCHEMA_VERSION",
    "MODEL_DEFAULTS",
    "load_config",
    "parse_config",
    "parse_value",
    "scenario_value",
]

SCHEMA_VERSION = 1

GEOMETRIES = ("grid", "points")
WEIGHTS = ("queen", "exp")
SPATIAL_MODES = ("coords", "eigenvectors", "none")
SELECTIONS = ("none", "mse_cv", "bic")
MODELS = ("linear", "esf", "esf_svc", "forest", "gbm")
ESTIMATORS = ("exact", "sampled")

# Fixed, small hyperparameter settings used in place of automated tuning.
MODEL_DEFAULTS: dict[str, tuple[dict, dict]] = {
    "linear": ({}, {}),
    "esf": ({}, {}),
    "esf_svc": ({}, {}),
    "forest": (
        {"n_estimators": 100, "max_depth": 12, "min_samples_leaf": 3, "max_features": 1.0 / 3.0, "bootstrap": True},
        {},
    ),
    "gbm": (
        {"max_depth": 6, "learning_rate": 0.1, "min_samples_leaf": 10, "subsample": 0.8},
        {"n_estimators": [100, 200, 400]},
    ),
}


class ConfigError(ValueError):
    pass


def scenario_value(key: str, text: str):
    """Parse a ``[scenario]`` value; text-valued keys keep their literal text."""
    if _SCALAR_TYPES.get(key) == "str":
        return text.strip()
    return parse_value(text)


def parse_value(text: str):
    """INI value to Python: int, float, bool, None or str; commas make a list."""
    text = text.strip()
    if "," in text:
        return [parse_value(t) for t in text.split(",") if t.strip()]
    low = text.lower()
    if low in ("none", "null", ""):
        return None
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def _format_value(v) -> str:
    if isinstance(v, (list, tuple)):
        return ", ".join(_format_value(x) for x in v) + ("," if len(v) == 1 else "")
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass(frozen=True)
class ScenarioConfig:
    """One cell of the experiment matrix, fully specified."""

    geometry: str = "grid"
    rows: int = 50
    cols: int = 50
    spacing: float = 1.0
    points_file: str = ""
    weights: str = "exp"
    spatial_mode: str = "coords"
    selection: str = "none"
    model: str = "gbm"
    seed: int = 0
    folds: int = 5
    inner_folds: int = 3
    candidate_L: int = 200
    eigen_method: str = "auto"
    nystrom_m: int = 300
    selection_design: str = "svc"
    svc_subsets: str = "shared"
    noise: str = "variance"
    estimator: str = "exact"
    budget: int = 0
    explain: bool = True
    background: int = 100
    bandwidth: object = "cv"
    hp: dict = field(default=None)
    grid: dict = field(default=None)

    def __post_init__(self):
        defaults_hp, defaults_grid = MODEL_DEFAULTS.get(self.model, ({}, {}))
        if self.hp is None:
            object.__setattr__(self, "hp", dict(defaults_hp))
        if self.grid is None:
            object.__setattr__(self, "grid", {k: list(v) for k, v in defaults_grid.items()})
        object.__setattr__(self, "hp", dict(sorted(self.hp.items())))
        object.__setattr__(
            self, "grid", {k: list(v) if isinstance(v, (list, tuple)) else [v] for k, v in sorted(self.grid.items())}
        )
        self.validate()

    def validate(self) -> None:
        def one_of(name, options):
            value = getattr(self, name)
            if value not in options:
                raise ConfigError(f"{name} must be one of {', '.join(options)}; got {value!r}")

        one_of("geometry", GEOMETRIES)
        one_of("weights", WEIGHTS)
        one_of("spatial_mode", SPATIAL_MODES)
        one_of("selection", SELECTIONS)
        one_of("model", MODELS)
        one_of("estimator", ESTIMATORS)
        one_of("eigen_method", ("auto", "full", "nystrom"))
        one_of("selection_design", ("svc", "eigen"))
        one_of("svc_subsets", ("shared", "per_k"))
        one_of("noise", ("variance", "sd"))
        if self.geometry == "grid" and (self.rows < 1 or self.cols < 1 or self.rows * self.cols < 4):
            raise ConfigError("grid needs positive rows and cols with rows * cols >= 4")
        if self.spatial_mode != "eigenvectors" and self.selection != "none":
            raise ConfigError("selection applies to eigenvector features only; set selection = none")
        if self.model in ("esf", "esf_svc") and self.spatial_mode != "eigenvectors":
            raise ConfigError(f"model {self.model} needs spatial_mode = eigenvectors")
        if self.model == "linear" and self.spatial_mode != "none":
            raise ConfigError("the linear baseline uses no spatial features; set spatial_mode = none")
        if self.folds < 2 or self.inner_folds < 2:
            raise ConfigError("folds and inner_folds must be at least 2")
        if not 1 <= self.candidate_L:
            raise ConfigError("candidate_L must be positive")
        if self.estimator == "sampled" and self.budget < 8:
            raise ConfigError("the sampled estimator needs budget >= 2q + 2 (at least 8 for two features)")
        if self.background < 1:
            raise ConfigError("background must be at least 1")
        if not (self.bandwidth == "cv" or (isinstance(self.bandwidth, (int, float)) and self.bandwidth > 0)):
            raise ConfigError("bandwidth must be 'cv' or a positive number")

    def canonical(self) -> dict:
        d = asdict(self)
        d["schema"] = SCHEMA_VERSION
        return d

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def with_(self, **changes) -> "ScenarioConfig":
        """A copy with ``changes``; model defaults are re-derived when the model changes."""
        if "model" in changes and changes["model"] != self.model:
            changes.setdefault("hp", None)
            changes.setdefault("grid", None)
        return replace(self, **changes)

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["moranml"] = {"schema": str(SCHEMA_VERSION)}
        cp["scenario"] = {
            f.name: _format_value(getattr(self, f.name)) for f in fields(self) if f.name not in ("hp", "grid")
        }
        cp["hp"] = {k: _format_value(v) for k, v in self.hp.items()}
        cp["grid"] = {k: _format_value(v) for k, v in self.grid.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


_SCALAR_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}


def _coerce(name: str, value):
    kind = _SCALAR_TYPES[name]
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number, got {value!r}")
        return float(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be true or false, got {value!r}")
        return value
    if kind == "str":
        return "" if value is None else str(value)
    return value


def scenario_from_mapping(values: dict, hp: dict | None = None, grid: dict | None = None, base=None) -> ScenarioConfig:
    unknown = set(values) - set(_SCALAR_TYPES) - {"hp", "grid"}
    if unknown:
        raise ConfigError(f"unknown scenario keys: {', '.join(sorted(unknown))}")
    kwargs = {k: _coerce(k, v) for k, v in values.items()}
    if hp is not None:
        kwargs["hp"] = hp
    if grid is not None:
        kwargs["grid"] = grid
    try:
        if base is None:
            return ScenarioConfig(**kwargs)
        return base.with_(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def parse_config(text: str, source: str = "<string>") -> tuple[ScenarioConfig, configparser.ConfigParser]:
    """Parse an INI manifest; returns the scenario and the raw parser (for extra sections)."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    if not cp.has_section("moranml"):
        raise ConfigError(f"{source}: missing [moranml] section with schema = {SCHEMA_VERSION}")
    schema = cp["moranml"].get("schema")
    if schema != str(SCHEMA_VERSION):
        raise ConfigError(f"{source}: unsupported schema {schema!r}; this version reads schema {SCHEMA_VERSION}")
    values = {k: scenario_value(k, v) for k, v in cp["scenario"].items()} if cp.has_section("scenario") else {}
    hp = {k: parse_value(v) for k, v in cp["hp"].items()} if cp.has_section("hp") else None
    grid = None
    if cp.has_section("grid"):
        grid = {}
        for k, v in cp["grid"].items():
            val = parse_value(v)
            grid[k] = val if isinstance(val, list) else [val]
    try:
        return scenario_from_mapping(values, hp, grid), cp
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> tuple[ScenarioConfig, configparser.ConfigParser]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))
