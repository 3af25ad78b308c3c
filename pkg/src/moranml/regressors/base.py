"""Shared model contract, feature bundles and JSON model dumps."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["PredictorModel", "FeatureBundle", "dump_model", "load_model", "MODEL_FORMAT"]

MODEL_FORMAT = "moranml-model/1"


class PredictorModel:
    """Uniform fit/predict contract.

    Subclasses set ``kind`` and implement ``fit``, ``predict`` and ``params``;
    ``params`` returns every learned quantity needed to rebuild the model.
    """

    kind: str = "abstract"
    hp: dict
    seed: int

    def fit(self, X, y):  # pragma: no cover - interface
        raise NotImplementedError

    def predict(self, X) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def params(self) -> dict:  # pragma: no cover - interface
        raise NotImplementedError


@dataclass(frozen=True)
class FeatureBundle:
    """Model inputs: non-spatial features followed by spatial columns.

    ``mode`` is ``none`` (no spatial columns), ``coords`` (two coordinate
    columns) or ``eigenvectors`` (an eigenvector submatrix).
    """

    nonspatial: np.ndarray
    spatial: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    mode: str = "none"
    names: tuple[str, ...] = ()

    def __post_init__(self):
        ns = np.atleast_2d(np.asarray(self.nonspatial, dtype=float))
        if ns.shape[0] == 1 and np.ndim(self.nonspatial) == 1:
            ns = ns.T
        n = ns.shape[0]
        sp = np.asarray(self.spatial, dtype=float)
        if self.mode == "none":
            sp = np.empty((n, 0))
        elif self.mode in ("coords", "eigenvectors"):
            sp = sp.reshape(n, -1) if sp.size else np.empty((n, 0))
            if sp.shape[0] != n:
                raise ValueError("spatial and non-spatial blocks need the same row count")
            if self.mode == "coords" and sp.shape[1] != 2:
                raise ValueError(f"coords mode needs 2 spatial columns, got {sp.shape[1]}")
        else:
            raise ValueError(f"unknown spatial mode {self.mode!r}")
        object.__setattr__(self, "nonspatial", ns)
        object.__setattr__(self, "spatial", sp)
        if not self.names:
            names = [f"x{k + 1}" for k in range(ns.shape[1])]
            prefix = "coord" if self.mode == "coords" else "e"
            names += [f"{prefix}{l + 1}" for l in range(sp.shape[1])]
            object.__setattr__(self, "names", tuple(names))
        elif len(self.names) != ns.shape[1] + sp.shape[1]:
            raise ValueError("names must cover every column")

    @property
    def n(self) -> int:
        return self.nonspatial.shape[0]

    @property
    def n_nonspatial(self) -> int:
        return self.nonspatial.shape[1]

    @property
    def spatial_columns(self) -> list[int]:
        k = self.n_nonspatial
        return list(range(k, k + self.spatial.shape[1]))

    def matrix(self) -> np.ndarray:
        return np.hstack([self.nonspatial, self.spatial])

    def take(self, rows) -> "FeatureBundle":
        return FeatureBundle(self.nonspatial[rows], self.spatial[rows], self.mode, self.names)


def _encode(v):
    if isinstance(v, np.ndarray):
        return {"__array__": v.dtype.str, "shape": list(v.shape), "data": v.ravel().tolist()}
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, dict):
        return {k: _encode(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_encode(x) for x in v]
    return v


def _decode(v):
    if isinstance(v, dict):
        if "__array__" in v:
            return np.array(v["data"], dtype=np.dtype(v["__array__"])).reshape(v["shape"])
        return {k: _decode(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_decode(x) for x in v]
    return v


def dump_model(model: PredictorModel, path) -> None:
    """Write a self-describing JSON dump (floats written with round-trip precision)."""
    blob = {
        "format": MODEL_FORMAT,
        "kind": model.kind,
        "hp": _encode(dict(model.hp)),
        "seed": int(model.seed),
        "params": _encode(model.params()),
    }
    Path(path).write_text(json.dumps(blob, sort_keys=True, allow_nan=True) + "\n", encoding="utf-8", newline="\n")


def load_model(path) -> PredictorModel:
    from .linear import model_from_params as linear_from
    from .trees import TreeEnsemble

    blob = json.loads(Path(path).read_text(encoding="utf-8"))
    if blob.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: unsupported model format {blob.get('format')!r}")
    params = _decode(blob["params"])
    kind = blob["kind"]
    hp = _decode(blob["hp"])
    if kind in ("forest", "gbm"):
        m = TreeEnsemble(mode=params["mode"], hp=hp, seed=blob["seed"])
        m.init = float(params["init"])
        m.n_features = int(params["n_features"])
        for name in ("feature", "threshold", "left", "right", "value", "roots"):
            setattr(m, name, np.ascontiguousarray(params[name]))
        return m
    return linear_from(kind, hp, blob["seed"], params)
