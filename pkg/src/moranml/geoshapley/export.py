"""CSV export of explanations."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .core import GeoShapleyExplanation

__all__ = ["save_explanation", "EXPLAIN_HEADER"]


def _header(p: int) -> list[str]:
    cols = ["id", "phi0", "phi_geo"]
    cols += [f"phi_x{j + 1}" for j in range(p)]
    cols += [f"phi_geo_x{j + 1}" for j in range(p)]
    cols += [f"svc_x{j + 1}" for j in range(p)]
    return cols + ["pred"]


EXPLAIN_HEADER = ",".join(_header(2))


def save_explanation(expl: GeoShapleyExplanation, ids, path) -> None:
    """One row per explained location; ``svc_x*`` is empty when no surfaces were smoothed."""
    n, p = expl.phi_j.shape
    buf = io.StringIO()
    buf.write(",".join(_header(p)) + "\n")
    svc = expl.svc if expl.svc is not None else np.full((n, p), np.nan)
    for i in range(n):
        vals = [expl.phi0, expl.phi_geo[i], *expl.phi_j[i], *expl.phi_geo_j[i], *svc[i], expl.prediction[i]]
        buf.write(str(ids[i]) + "," + ",".join("" if np.isnan(v) else repr(float(v)) for v in vals) + "\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")
