"""Experiment configuration: a flat ``key = value`` format with ``[section]`` headers.

Grammar (one item per line)::

    # comment            blank lines and '#' comments are ignored
    key = value          top-level keys until the first section header
    [z_grid]             starts a section; its keys follow
    min = -3

Values are integers, floats, bare or double-quoted strings, or
comma-separated lists (optionally wrapped in ``[...]``).  Keys are
validated strictly: unknown keys, duplicates and wrong types are errors
that name the offending line.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .models import CATALOG, CATALOG_PARAMS, build_model

PRODUCTS = ("trajectory", "measure", "ks", "residual", "hilbert_check", "cross_check")
MODES = ("direct", "lamperti")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class GridSpec:
    min: float
    max: float
    count: int
    imag: float = 0.0

    def real_points(self) -> np.ndarray:
        return np.linspace(self.min, self.max, self.count)

    def complex_points(self) -> np.ndarray:
        return self.real_points() + 1j * self.imag


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    n: int
    t_end: float
    dt: float
    seed: int
    p: int | None = None
    beta: float | None = None
    alpha_param: float | None = None
    save_every: int = 10
    replicas: int = 1
    outputs: tuple = ("ks",)
    output_dir: str = "out"
    mode: str = "direct"
    epsilon: float = 1e-4
    workers: int = 1
    z_grid: GridSpec = field(default_factory=lambda: GridSpec(-3.0, 3.0, 13, 1.0))
    x_grid: GridSpec | None = None

    def model_params(self) -> dict:
        return {k: getattr(self, k) for k in CATALOG_PARAMS[self.model]}

    def build_model(self):
        return build_model(self.model, **self.model_params())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["outputs"] = list(self.outputs)
        return d

    def to_text(self) -> str:
        """Canonical document that parses back to an equal config."""
        d = self.to_dict()
        lines = []
        for key, spec in _TOP.items():
            v = d[key]
            if v is None:
                continue
            if key == "outputs":
                lines.append(f"outputs = {', '.join(v)}")
            elif spec[0] is str:
                lines.append(f'{key} = "{v}"')
            else:
                lines.append(f"{key} = {v!r}")
        for sec in ("z_grid", "x_grid"):
            if d[sec] is not None:
                lines.append(f"[{sec}]")
                for k, v in d[sec].items():
                    lines.append(f"{k} = {v!r}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        # where and how fast a run executes does not change its numbers
        d = {k: v for k, v in self.to_dict().items() if k not in ("output_dir", "workers")}
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


# key -> (type, required)
_TOP = {
    "model": (str, True),
    "n": (int, True),
    "p": (int, False),
    "beta": (float, False),
    "alpha_param": (float, False),
    "t_end": (float, True),
    "dt": (float, True),
    "save_every": (int, False),
    "replicas": (int, False),
    "seed": (int, True),
    "outputs": (list, False),
    "output_dir": (str, False),
    "mode": (str, False),
    "epsilon": (float, False),
    "workers": (int, False),
}
_GRID = {"min": (float, True), "max": (float, True), "count": (int, True), "imag": (float, False)}
_SECTIONS = ("z_grid", "x_grid")


def _scalar(raw: str, kind, line: int, key: str):
    text = raw.strip()
    if kind is str:
        if len(text) >= 2 and text[0] == text[-1] == '"':
            return text[1:-1]
        if not text or any(c in text for c in '"=[]'):
            raise ConfigError(f"{key}: expected a string, got {raw.strip()!r}", line)
        return text
    try:
        if kind is int:
            val = int(text, 0) if text.lower().startswith("0x") else int(text)
            return val
        val = float(text)
        if not np.isfinite(val):
            raise ValueError
        return val
    except ValueError:
        raise ConfigError(f"{key}: expected {kind.__name__}, got {text!r}", line) from None


def _value(raw: str, kind, line: int, key: str):
    if kind is list:
        text = raw.strip()
        if text.startswith("[") and text.endswith("]"):
            text = text[1:-1]
        items = [_scalar(s, str, line, key) for s in text.split(",") if s.strip()]
        if not items:
            raise ConfigError(f"{key}: empty list", line)
        return items
    return _scalar(raw, kind, line, key)


def parse_config(text: str) -> ExperimentConfig:
    top: dict = {}
    sections: dict = {}
    where: dict = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in _SECTIONS:
                raise ConfigError(f"unknown section [{name}]", lineno)
            if name in sections:
                raise ConfigError(f"duplicate section [{name}]", lineno)
            sections[name] = {}
            current = name
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        table, spec = (top, _TOP) if current is None else (sections[current], _GRID)
        if key not in spec:
            scope = "top level" if current is None else f"[{current}]"
            raise ConfigError(f"unknown key {key!r} at {scope}", lineno)
        if key in table:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        table[key] = _value(value, spec[key][0], lineno, key)
        where[(current, key)] = lineno
    return _validate(top, sections, where)


def _strip_comment(raw: str) -> str:
    # drop a trailing comment that is not inside double quotes
    quoted = False
    for i, ch in enumerate(raw):
        if ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            return raw[:i].strip()
    return raw.strip()


def _grid(sec: dict, name: str, where: dict) -> GridSpec:
    for k, (_, req) in _GRID.items():
        if req and k not in sec:
            raise ConfigError(f"[{name}] missing required key {k!r}")
    if sec["count"] < 1:
        raise ConfigError(f"[{name}] count must be >= 1", where.get((name, "count")))
    if sec["count"] > 1 and not sec["min"] < sec["max"]:
        raise ConfigError(f"[{name}] needs min < max", where.get((name, "max")))
    return GridSpec(sec["min"], sec["max"], sec["count"], sec.get("imag", 0.0))


def _validate(top: dict, sections: dict, where: dict) -> ExperimentConfig:
    for k, (_, req) in _TOP.items():
        if req and k not in top:
            raise ConfigError(f"missing required key {k!r}")

    def at(key):
        return where.get((None, key))

    if top["model"] not in CATALOG:
        raise ConfigError(f"unknown model {top['model']!r}; expected one of {sorted(CATALOG)}", at("model"))
    checks = [
        ("n", lambda v: v >= 1, "n must be >= 1"),
        ("dt", lambda v: v > 0, "dt must be > 0"),
        ("t_end", lambda v: v >= 0, "t_end must be >= 0"),
        ("replicas", lambda v: v >= 1, "replicas must be >= 1"),
        ("save_every", lambda v: v >= 1, "save_every must be >= 1"),
        ("workers", lambda v: v >= 1, "workers must be >= 1"),
        ("epsilon", lambda v: v > 0, "epsilon must be > 0"),
        ("seed", lambda v: 0 <= v < 2**64, "seed must be an unsigned 64-bit integer"),
    ]
    for key, ok, msg in checks:
        if key in top and not ok(top[key]):
            raise ConfigError(msg, at(key))
    if "mode" in top and top["mode"] not in MODES:
        raise ConfigError(f"mode must be one of {MODES}", at("mode"))
    if "outputs" in top:
        bad = [o for o in top["outputs"] if o not in PRODUCTS]
        if bad:
            raise ConfigError(f"unknown outputs {bad}; expected a subset of {list(PRODUCTS)}", at("outputs"))
        top["outputs"] = tuple(dict.fromkeys(top["outputs"]))
    for key in CATALOG_PARAMS[top["model"]]:
        if key not in top:
            raise ConfigError(f"{top['model']} requires {key}", at("model"))
    extra = [k for k in ("p", "beta", "alpha_param") if k in top and k not in CATALOG_PARAMS[top["model"]]]
    if extra:
        raise ConfigError(f"{top['model']} does not take {', '.join(extra)}", at(extra[0]))
    try:
        build_model(top["model"], **{k: top[k] for k in CATALOG_PARAMS[top["model"]]})
    except ValueError as exc:
        raise ConfigError(str(exc), at("model")) from None
    grids = {name: _grid(sections[name], name, where) for name in sections}
    if "z_grid" in grids and grids["z_grid"].imag == 0.0:
        raise ConfigError("[z_grid] imag must be nonzero", where.get(("z_grid", "imag")))
    return ExperimentConfig(**top, **grids)
