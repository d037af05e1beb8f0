"""Report objects and their JSON and text renderings.

Exact values are rendered as ``"p/q"`` strings and floats with 12
significant digits, so identical inputs give byte-identical output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import numpy as np

from . import linalg as la
from .algebra import PhaseSpace, QuadraticObservable, SymplecticMap

SCHEMA = "framekit.report/v1"


def render(obj: Any) -> Any:
    """Convert library values to JSON-ready data."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, Fraction):
        return la.ratstr(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return f"{float(obj):.12g}"
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [render(v) for v in obj]
    if isinstance(obj, QuadraticObservable):
        return str(obj)
    if isinstance(obj, PhaseSpace):
        return list(obj.labels)
    if isinstance(obj, SymplecticMap):
        return {"source": list(obj.source.labels), "target": list(obj.target.labels), "matrix": render(obj.matrix)}
    if isinstance(obj, dict):
        return {str(k): render(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [render(v) for v in obj]
    if hasattr(obj, "to_dict"):
        return render(obj.to_dict())
    raise TypeError(f"cannot render {type(obj).__name__} into a report")


@dataclass
class AnalysisResult:
    name: str
    passed: bool
    data: dict = field(default_factory=dict)
    error: str | None = None
    elapsed: float | None = None
    # wall-clock time, always recorded; only rendered when copied into ``elapsed``
    measured: float | None = field(default=None, compare=False)

    def to_dict(self) -> dict:
        out = {"name": self.name, "verdict": "pass" if self.passed else "fail", "data": render(self.data)}
        if self.error is not None:
            out["error"] = self.error
        if self.elapsed is not None:
            out["elapsed_s"] = f"{self.elapsed:.3f}"
        return out


@dataclass
class Report:
    kind: str
    scenario: dict
    results: list[AnalysisResult] = field(default_factory=list)
    version: str = SCHEMA

    @property
    def passed(self) -> bool:
        return bool(self.results) and all(r.passed for r in self.results)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "kind": self.kind,
            "scenario": render(self.scenario),
            "verdict": "pass" if self.passed else "fail",
            "results": [r.to_dict() for r in self.results],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    def to_text(self) -> str:
        d = self.to_dict()
        lines = [f"{d['version']} {d['kind']}"]
        for k, v in d["scenario"].items():
            lines.append(f"  {k}: {v if not isinstance(v, list) else ', '.join(map(str, v))}")
        for r in d["results"]:
            tail = f" ({r['elapsed_s']} s)" if "elapsed_s" in r else ""
            lines.append(f"[{r['verdict'].upper()}] {r['name']}{tail}")
            if "error" in r:
                lines.append(f"    error: {r['error']}")
            lines.extend(_text_block(r["data"], 4))
        lines.append(f"overall: {d['verdict']}")
        return "\n".join(lines) + "\n"


def _text_block(data, indent: int) -> list[str]:
    pad = " " * indent
    out = []
    if isinstance(data, dict):
        for k, v in data.items():
            if isinstance(v, (dict, list)) and not _flat(v):
                out.append(f"{pad}{k}:")
                out.extend(_text_block(v, indent + 2))
            else:
                out.append(f"{pad}{k}: {_inline(v)}")
    elif isinstance(data, list):
        for v in data:
            if isinstance(v, (dict, list)) and not _flat(v):
                out.append(f"{pad}-")
                out.extend(_text_block(v, indent + 2))
            else:
                out.append(f"{pad}- {_inline(v)}")
    else:
        out.append(f"{pad}{data}")
    return out


def _flat(v) -> bool:
    return isinstance(v, list) and all(not isinstance(x, (dict, list)) for x in v)


def _inline(v) -> str:
    if isinstance(v, list):
        return "[" + ", ".join(str(x) for x in v) + "]"
    return str(v)
