"""Scenario configuration: a flat ``key = value`` file, validated into :class:`ScenarioConfig`.

Values are read as JSON literals when possible (``0.1``, ``[1, 1]``,
``"neumann"``) and as bare strings otherwise, so coefficient expressions
need no quoting::

    dim = 2
    lengths = [1, 1]
    a = -2 + x1 - abs(sin(t + x1))
    sensors_S = ngrid:3

``sensors_S`` is either a positive integer ``S``, giving ``(2S)^d`` sensors,
or ``ngrid:N``, giving ``N^d`` centred sensors.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .auxspaces import AuxKind
from .expressions import Expression, ExpressionError, parse_expression

__all__ = [
    "ConfigError",
    "SensorSpec",
    "ScenarioConfig",
    "parse_config",
    "load_config",
    "parse_sensor_spec",
    "PRESETS",
    "preset",
]


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass(frozen=True)
class SensorSpec:
    kind: str  # "standard" or "ngrid"
    value: int

    def count(self, dim: int) -> int:
        per_dim = 2 * self.value if self.kind == "standard" else self.value
        return per_dim ** dim

    def __str__(self) -> str:
        return str(self.value) if self.kind == "standard" else f"ngrid:{self.value}"


def parse_sensor_spec(value) -> SensorSpec:
    if isinstance(value, bool):
        raise ConfigError(f"sensors_S: expected an integer or 'ngrid:N', got {value!r}")
    if isinstance(value, int) or (isinstance(value, float) and value.is_integer()):
        v = int(value)
        kind = "standard"
    else:
        m = re.fullmatch(r"\s*(?:(ngrid):)?\s*(\d+)\s*", str(value))
        if m is None:
            raise ConfigError(f"sensors_S: expected an integer or 'ngrid:N', got {value!r}")
        kind = "ngrid" if m.group(1) else "standard"
        v = int(m.group(2))
    if v < 1:
        raise ConfigError(f"sensors_S must be positive, got {value!r}")
    return SensorSpec(kind, v)


@dataclass(frozen=True)
class ScenarioConfig:
    dim: int
    lengths: tuple[float, ...]
    nu: float
    sensors: SensorSpec
    lam: float
    nodes_per_dim: int
    dt: float
    t_end: float
    bc: str = "neumann"
    ell: float = 2.0
    cover_r: float = 0.25
    aux_kind: str = "sin2"
    a: Expression = field(default_factory=lambda: parse_expression("0"))
    b: tuple[Expression, ...] = ()
    a_tilde: Expression = field(default_factory=lambda: parse_expression("0"))
    b_tilde: tuple[Expression, ...] = ()
    r_exp: float = 3.0
    s_exp: float = 1.0
    f: Expression = field(default_factory=lambda: parse_expression("0"))
    z0: Expression | None = None
    y0: Expression | None = None
    yhat0: Expression | None = None
    mode: str = "error"
    output_stride: int = 100
    fit_start: float | None = None

    @property
    def S_sigma(self) -> int:
        return self.sensors.count(self.dim)

    @property
    def fit_start_value(self) -> float:
        return 0.2 * self.t_end if self.fit_start is None else self.fit_start

    def with_gains(self, sensors: SensorSpec | None = None, lam: float | None = None) -> "ScenarioConfig":
        return replace(self, sensors=sensors or self.sensors, lam=self.lam if lam is None else lam)

    def to_dict(self) -> dict:
        """Flat key/value form accepted by :func:`parse_config`."""
        out = {
            "dim": self.dim, "lengths": list(self.lengths), "bc": self.bc, "nu": self.nu,
            "ell": self.ell, "sensors_S": str(self.sensors), "lambda": self.lam,
            "cover_r": self.cover_r, "aux_kind": self.aux_kind, "nodes_per_dim": self.nodes_per_dim,
            "dt": self.dt, "t_end": self.t_end, "a": self.a.source, "a_tilde": self.a_tilde.source,
            "r_exp": self.r_exp, "s_exp": self.s_exp, "f": self.f.source, "mode": self.mode,
            "output_stride": self.output_stride,
        }
        for i, e in enumerate(self.b, 1):
            out[f"b{i}"] = e.source
        for i, e in enumerate(self.b_tilde, 1):
            out[f"b_tilde{i}"] = e.source
        for k in ("z0", "y0", "yhat0"):
            e = getattr(self, k)
            if e is not None:
                out[k] = e.source
        if self.fit_start is not None:
            out["fit_start"] = self.fit_start
        return out

    def to_text(self) -> str:
        lines = []
        for k, v in self.to_dict().items():
            lines.append(f"{k} = {json.dumps(v) if not isinstance(v, str) or k in _STRING_KEYS else v}")
        return "\n".join(lines) + "\n"


_REQUIRED = ("dim", "lengths", "nu", "sensors_S", "lambda", "nodes_per_dim", "dt", "t_end")
_OPTIONAL = ("bc", "ell", "cover_r", "aux_kind", "a", "a_tilde", "r_exp", "s_exp", "f", "z0",
             "y0", "yhat0", "mode", "output_stride", "fit_start")
_STRING_KEYS = ("bc", "aux_kind", "mode")


def _read_text(text: str) -> dict:
    raw: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            raw[key] = json.loads(value)
        except json.JSONDecodeError:
            raw[key] = value
    return raw


def _number(raw, key, *, integer=False, positive=False, nonneg=False):
    v = raw[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {v!r}")
    if integer:
        if isinstance(v, float) and not v.is_integer():
            raise ConfigError(f"{key}: expected an integer, got {v!r}")
        v = int(v)
    else:
        v = float(v)
    if not math.isfinite(v):
        raise ConfigError(f"{key}: must be finite")
    if positive and not v > 0:
        raise ConfigError(f"{key}: must be positive, got {v!r}")
    if nonneg and not v >= 0:
        raise ConfigError(f"{key}: must be nonnegative, got {v!r}")
    return v


def _expression(raw, key, dim) -> Expression:
    v = raw[key]
    if isinstance(v, bool) or v is None or isinstance(v, (list, dict)):
        raise ConfigError(f"{key}: expected an expression, got {v!r}")
    try:
        e = parse_expression(str(v))
    except ExpressionError as exc:
        raise ConfigError(f"{key}: {exc}") from exc
    if e.max_dim > dim:
        raise ConfigError(f"{key}: uses x{e.max_dim} but dim = {dim}")
    return e


def _choice(raw, key, options):
    v = raw[key]
    if v not in options:
        raise ConfigError(f"{key}: expected one of {sorted(options)}, got {v!r}")
    return v


def parse_config(raw: dict) -> ScenarioConfig:
    """Validate a flat mapping into a :class:`ScenarioConfig`."""
    missing = [k for k in _REQUIRED if k not in raw]
    if missing:
        raise ConfigError(f"missing key(s): {', '.join(missing)}")
    dim = _number(raw, "dim", integer=True, positive=True)
    allowed = set(_REQUIRED) | set(_OPTIONAL)
    allowed |= {f"b{i}" for i in range(1, dim + 1)} | {f"b_tilde{i}" for i in range(1, dim + 1)}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}")

    lengths = raw["lengths"]
    if isinstance(lengths, (int, float)) and not isinstance(lengths, bool):
        lengths = [lengths] * dim
    elif isinstance(lengths, str):
        try:
            lengths = [float(s) for s in lengths.split(",")]
        except ValueError as exc:
            raise ConfigError(f"lengths: cannot parse {lengths!r}") from exc
    if not isinstance(lengths, list) or len(lengths) != dim:
        raise ConfigError(f"lengths: expected {dim} values, got {raw['lengths']!r}")
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0 for v in lengths):
        raise ConfigError("lengths: entries must be positive numbers")

    kw: dict = dict(
        dim=dim,
        lengths=tuple(float(v) for v in lengths),
        nu=_number(raw, "nu", positive=True),
        sensors=parse_sensor_spec(raw["sensors_S"]),
        lam=_number(raw, "lambda", nonneg=True),
        nodes_per_dim=_number(raw, "nodes_per_dim", integer=True),
        dt=_number(raw, "dt", positive=True),
        t_end=_number(raw, "t_end", positive=True),
    )
    if kw["nodes_per_dim"] < 3:
        raise ConfigError("nodes_per_dim must be at least 3")
    if "bc" in raw:
        kw["bc"] = _choice(raw, "bc", {"neumann", "dirichlet"})
    if "ell" in raw:
        kw["ell"] = _number(raw, "ell", nonneg=True)
        if kw["ell"] > 2:
            raise ConfigError(f"ell must lie in [0, 2], got {kw['ell']}")
    if "cover_r" in raw:
        kw["cover_r"] = _number(raw, "cover_r", positive=True)
        if kw["cover_r"] >= 1:
            raise ConfigError(f"cover_r must lie in (0, 1), got {kw['cover_r']}")
    if "aux_kind" in raw:
        kw["aux_kind"] = _choice(raw, "aux_kind", {k.value for k in AuxKind})
    if "mode" in raw:
        kw["mode"] = _choice(raw, "mode", {"error", "coupled"})
    for key in ("a", "a_tilde", "f", "z0", "y0", "yhat0"):
        if key in raw:
            kw[key] = _expression(raw, key, dim)
    zero = parse_expression("0")
    kw["b"] = tuple(_expression(raw, f"b{i}", dim) if f"b{i}" in raw else zero for i in range(1, dim + 1))
    kw["b_tilde"] = tuple(_expression(raw, f"b_tilde{i}", dim) if f"b_tilde{i}" in raw else zero
                          for i in range(1, dim + 1))
    if "r_exp" in raw:
        kw["r_exp"] = _number(raw, "r_exp")
        if not kw["r_exp"] > 1:
            raise ConfigError(f"r_exp must exceed 1, got {kw['r_exp']}")
    if "s_exp" in raw:
        kw["s_exp"] = _number(raw, "s_exp")
        if not kw["s_exp"] >= 1:
            raise ConfigError(f"s_exp must be at least 1, got {kw['s_exp']}")
    if "output_stride" in raw:
        kw["output_stride"] = _number(raw, "output_stride", integer=True, positive=True)
    if "fit_start" in raw and raw["fit_start"] is not None:
        kw["fit_start"] = _number(raw, "fit_start", nonneg=True)
        if kw["fit_start"] >= kw["t_end"]:
            raise ConfigError("fit_start must be smaller than t_end")

    mode = kw.get("mode", "error")
    if mode == "error" and "z0" not in kw:
        raise ConfigError("missing key(s): z0")
    if mode == "coupled":
        absent = [k for k in ("y0", "yhat0") if k not in kw]
        if absent:
            raise ConfigError(f"missing key(s) for coupled mode: {', '.join(absent)}")
    if kw["dt"] > kw["t_end"]:
        raise ConfigError("dt must not exceed t_end")
    return ScenarioConfig(**kw)


def load_config(path) -> ScenarioConfig:
    """Read a config file, or a preset when ``path`` names one and no such file exists."""
    p = Path(path)
    if not p.exists() and str(path) in PRESETS:
        return preset(str(path))
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    return parse_config(_read_text(text))


_REFERENCE = {
    "dim": 2, "lengths": [1.0, 1.0], "bc": "neumann", "nu": 0.1, "ell": 2.0, "cover_r": 0.25,
    "aux_kind": "sin2", "nodes_per_dim": 33, "dt": 1e-4, "t_end": 15.0,
    "a": "-2 + x1 - abs(sin(t + x1))", "b1": "x1 + x2", "b2": "cos(t)*x1*x2",
    "a_tilde": "-1", "b_tilde1": "1", "b_tilde2": "-2", "r_exp": 4, "s_exp": 1, "f": "0",
    "z0": "2 - x1*x2", "mode": "error", "output_stride": 100, "fit_start": 3.0,
}

PRESETS: dict[str, dict] = {
    "paper-sec5-4sensors": {**_REFERENCE, "sensors_S": 1, "lambda": 0.5},
    "paper-sec5-9sensors": {**_REFERENCE, "sensors_S": "ngrid:3", "lambda": 0.02},
    "paper-sec5-16sensors": {**_REFERENCE, "sensors_S": 2, "lambda": 0.02},
    "free-dynamics": {**_REFERENCE, "sensors_S": 1, "lambda": 0.0, "t_end": 0.5, "output_stride": 10,
                      "fit_start": 0.1},
}


def preset(name: str) -> ScenarioConfig:
    try:
        raw = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return parse_config(dict(raw))
