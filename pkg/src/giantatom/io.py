"""File formats: YAML layout/problem files, CSV tables with JSON sidecars, range strings.

A layout file looks like::

    waveguide: {v: 1.0, J0: 0.0796}
    atom: {levels: [0.0, 5.0, 9.9]}
    points:
      - {x: 0.0, strengths: [1.0]}
      - {x: 1.0, strengths: [1.0]}

Several atoms go under ``atoms: [{label: a, points: [...]}, ...]`` instead of
``points``.  Design problems add ``target: [{omega: .., gamma: ..}, ...]``
and optionally ``design: {n_points: 3, mode: strengths, regularization: 0}``.
"""
from __future__ import annotations

import csv
import json
import math
import re
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .core import (
    DEFAULT_WAVEGUIDE,
    AtomSpec,
    CouplingPoint,
    Layout,
    ValidationError,
    WaveguideModel,
)

_NUMBER = re.compile(r"^\s*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)?\s*\*?\s*(pi)?\s*(?:/\s*(\d+\.?\d*))?\s*$")


def parse_number(text: str) -> float:
    """Parse numbers with an optional ``pi`` factor: ``2pi``, ``pi/2``, ``-0.5*pi``, ``3e-2``."""
    t = text.strip().lower()
    sign = 1.0
    if t.startswith("-") and "pi" in t:
        sign, t = -1.0, t[1:]
    m = _NUMBER.match(t)
    if not m or (m.group(1) is None and m.group(2) is None):
        raise ValidationError(f"cannot parse number {text!r}")
    value = float(m.group(1)) if m.group(1) is not None else 1.0
    if m.group(2):
        value *= math.pi
    if m.group(3):
        value /= float(m.group(3))
    return sign * value


def parse_range(text: str) -> np.ndarray:
    """``start:stop:count`` (inclusive, ``:log`` suffix for geometric) or a comma list."""
    text = text.strip()
    if not text:
        raise ValidationError("empty range")
    if ":" not in text:
        return np.array([parse_number(t) for t in text.split(",")])
    parts = text.split(":")
    log = parts[-1].strip().lower() == "log"
    if log:
        parts = parts[:-1]
    if len(parts) != 3:
        raise ValidationError(f"range must be start:stop:count[:log], got {text!r}")
    start, stop = parse_number(parts[0]), parse_number(parts[1])
    try:
        count = int(parts[2])
    except ValueError:
        raise ValidationError(f"range count must be an integer, got {parts[2]!r}") from None
    if count < 1:
        raise ValidationError("range count must be positive")
    if log:
        if start <= 0 or stop <= 0:
            raise ValidationError("log ranges need positive bounds")
        return np.geomspace(start, stop, count)
    return np.linspace(start, stop, count)


@dataclass(frozen=True)
class LayoutFile:
    layouts: tuple[Layout, ...]
    atom: AtomSpec | None
    waveguide: WaveguideModel
    raw: dict


def _points(entries, label: str) -> Layout:
    if not isinstance(entries, list) or not entries:
        raise ValidationError(f"atom {label!r} needs a non-empty list of points")
    pts = []
    for e in entries:
        if not isinstance(e, dict) or "x" not in e:
            raise ValidationError("each point needs an 'x' entry")
        s = e.get("strengths", e.get("strength", 1.0))
        pts.append(CouplingPoint(float(e["x"]), tuple(np.atleast_1d(s).astype(float))))
    pts.sort(key=lambda p: p.x)
    return Layout(tuple(pts), label)


def read_yaml(path: str | Path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"file not found: {path}")
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ValidationError(f"cannot parse {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: expected a mapping at the top level")
    return data


def parse_layout_data(data: dict) -> LayoutFile:
    wg = data.get("waveguide") or {}
    waveguide = WaveguideModel(v=float(wg.get("v", DEFAULT_WAVEGUIDE.v)), J0=float(wg.get("J0", DEFAULT_WAVEGUIDE.J0)))
    atom = None
    if "atom" in data:
        levels = (data["atom"] or {}).get("levels")
        if levels is None:
            raise ValidationError("atom entry needs 'levels'")
        atom = AtomSpec(tuple(float(x) for x in levels))
    if "atoms" in data:
        layouts = tuple(_points(a.get("points"), str(a.get("label", chr(ord("a") + i))))
                        for i, a in enumerate(data["atoms"]))
    elif "points" in data:
        layouts = (_points(data["points"], str(data.get("label", "a"))),)
    else:
        raise ValidationError("layout file needs 'points' or 'atoms'")
    return LayoutFile(layouts, atom, waveguide, data)


def load_layout(path: str | Path) -> LayoutFile:
    return parse_layout_data(read_yaml(path))


def layout_to_data(layouts, atom: AtomSpec | None = None, waveguide: WaveguideModel | None = None) -> dict:
    layouts = [layouts] if isinstance(layouts, Layout) else list(layouts)

    def pts(lay):
        return [{"x": float(p.x), "strengths": [float(s) for s in p.strengths]} for p in lay.points]

    data: dict = {}
    if waveguide is not None:
        data["waveguide"] = {"v": float(waveguide.v), "J0": float(waveguide.J0)}
    if atom is not None:
        data["atom"] = {"levels": [float(x) for x in atom.levels]}
    if len(layouts) == 1:
        data["label"] = layouts[0].label
        data["points"] = pts(layouts[0])
    else:
        data["atoms"] = [{"label": lay.label, "points": pts(lay)} for lay in layouts]
    return data


def dump_yaml(data: dict, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(data, sort_keys=False))


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: str | None, header, rows) -> None:
    """Write rows with full-precision floats; ``path`` of None or '-' means stdout."""
    if path in (None, "-"):
        _write_rows(sys.stdout, header, rows)
        return
    with open(path, "w", newline="") as fh:
        _write_rows(fh, header, rows)


def _write_rows(fh, header, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_value(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else repr(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_sidecar(csv_path: str | None, config: dict) -> str | None:
    """Write ``<csv_path>.json`` with the resolved configuration."""
    if csv_path in (None, "-"):
        return None
    side = f"{csv_path}.json"
    with open(side, "w") as fh:
        json.dump(_jsonable(config), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return side
