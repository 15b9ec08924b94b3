"""Experiment configuration: flat ``key = value`` files with dotted sections.

Grammar
-------
One assignment per line, ``section.key = value``. Blank lines and lines
starting with ``#`` or ``;`` are ignored. Values are numbers, names, or
comma-separated lists of numbers; integers may be written ``2^17``.
``preset = NAME`` selects the base preset that the other keys override.

Recognised keys::

    preset
    potential.family, potential.<param>
    packet.a, packet.b
    grid.x_max, grid.n
    kgrid.k_min, kgrid.k_max, kgrid.m
    theorem.T_list, theorem.nodes_per_T0
    spectral.e_floor, spectral.unresolved_tol
    fd.dt, fd.t
    stationary.k, stationary.t_list
    lemma1.t_list
    low_energy.delta, low_energy.t_list
    output.dir
"""
from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .potential import FAMILIES


class ConfigError(ValueError):
    """Malformed configuration or a violated experiment invariant."""


@dataclass(frozen=True)
class ExperimentConfig:
    family: str = "decaying_cos"
    params: dict = field(default_factory=lambda: {"c": 0.5, "alpha": 0.75, "omega": 2.0})
    a: float = 0.8
    b: float = 1.6
    x_max: float = 1600.0
    n: int = 2 ** 17
    k_min: float = 0.01
    k_max: float = 4.0
    m: int = 2048
    T_list: tuple = (25.0, 50.0, 100.0, 200.0)
    nodes_per_T0: int = 64
    e_floor: float = 1e-3
    unresolved_tol: float = 1e-3
    fd_dt: float = 0.005
    fd_t: float = 10.0
    sp_k: float | None = None
    sp_t_list: tuple = (50.0, 100.0, 200.0, 400.0)
    lemma1_t_list: tuple = (4.0, 16.0, 64.0, 256.0)
    delta: float | None = None
    le_t_list: tuple | None = None
    out_dir: str = "results"

    @property
    def stationary_k(self) -> float:
        return 0.5 * (self.a + self.b) if self.sp_k is None else self.sp_k

    @property
    def low_energy_delta(self) -> float:
        return (0.5 * self.a) ** 2 if self.delta is None else self.delta

    @property
    def low_energy_times(self) -> tuple:
        return self.T_list if self.le_t_list is None else self.le_t_list

    def validate(self) -> "ExperimentConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.family in FAMILIES, f"unknown potential family {self.family!r}")
        unknown = set(self.params) - set(FAMILIES[self.family][1])
        need(not unknown, f"unknown parameters for {self.family}: {sorted(unknown)}")
        need(0 < self.a < self.b, f"packet needs 0 < a < b, got a={self.a}, b={self.b}")
        need(self.x_max > 0 and self.n >= 2, f"grid needs x_max > 0 and n >= 2, got {self.x_max}, {self.n}")
        need(0 < self.k_min < self.k_max and self.m >= 2,
             f"k-grid needs 0 < k_min < k_max and m >= 2, got {self.k_min}, {self.k_max}, {self.m}")
        need(len(self.T_list) > 0 and all(T > 0 for T in self.T_list)
             and list(self.T_list) == sorted(self.T_list), f"T_list must be positive and sorted, got {self.T_list}")
        T = max(self.T_list)
        need(2 * self.b * T <= self.x_max,
             f"ballistic fit violated: 2*b*max(T_list) = 2*{self.b}*{T} = {2 * self.b * T:g} > x_max = {self.x_max:g}")
        le_T = max(self.low_energy_times)
        need(2 * self.b * le_T <= self.x_max,
             f"ballistic fit violated: 2*b*max(low_energy.t_list) = {2 * self.b * le_T:g} > x_max = {self.x_max:g}")
        need(self.k_min <= 0.5 * self.a and self.k_max >= 2 * self.b,
             f"k-grid must cover [a/2, 2b] = [{0.5 * self.a:g}, {2 * self.b:g}], got [{self.k_min:g}, {self.k_max:g}]")
        dk = (self.k_max - self.k_min) / (self.m - 1)
        need(math.pi / dk >= self.x_max,
             f"k-grid too coarse: pi/dk = {math.pi / dk:.6g} < x_max = {self.x_max:g} (raise kgrid.m to at least "
             f"{math.ceil((self.k_max - self.k_min) * self.x_max / math.pi) + 1})")
        need(self.nodes_per_T0 >= 64, f"theorem.nodes_per_T0 must be >= 64, got {self.nodes_per_T0}")
        need(self.fd_dt > 0 and self.fd_t > 0, "fd.dt and fd.t must be positive")
        need(self.fd_dt * (self.k_max ** 2 + _max_abs_hint(self)) < 0.5,
             f"fd.dt too coarse: dt*(k_max^2 + max|q|) = {self.fd_dt * (self.k_max ** 2 + _max_abs_hint(self)):.3g} >= 0.5")
        need(self.a < self.stationary_k < self.b, f"stationary.k = {self.stationary_k} must lie in (a, b)")
        need(all(t > 1 for t in self.lemma1_t_list), "lemma1.t_list entries must exceed 1")
        need(self.low_energy_delta > self.k_min ** 2,
             f"low_energy.delta = {self.low_energy_delta:g} is below the resolvable energy k_min^2 = {self.k_min ** 2:g}")
        need(self.e_floor > 0 and self.unresolved_tol >= 0, "spectral.e_floor > 0 and unresolved_tol >= 0 required")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["params"] = dict(sorted(self.params.items()))
        for key in ("T_list", "sp_t_list", "lemma1_t_list", "le_t_list"):
            if d[key] is not None:
                d[key] = list(d[key])
        return d

    def hash(self) -> str:
        """Digest of everything that affects results (the output directory does not)."""
        d = self.to_dict()
        d.pop("out_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _max_abs_hint(cfg: ExperimentConfig) -> float:
    p = cfg.params
    if cfg.family in ("decaying_cos", "constant", "compact_bump", "gaussian"):
        return abs(p.get("c", 0.0))
    if cfg.family == "step_well":
        return abs(p.get("V0", 0.0))
    return 0.0


PRESETS = {
    "default": ExperimentConfig(),
    "quick": ExperimentConfig(x_max=400.0, n=2 ** 15, m=512, T_list=(12.5, 25.0, 50.0, 100.0),
                              sp_t_list=(50.0, 100.0, 200.0, 400.0)),
}

# file key -> (field, kind)
_KEYS = {
    "packet.a": ("a", float), "packet.b": ("b", float),
    "grid.x_max": ("x_max", float), "grid.n": ("n", int),
    "kgrid.k_min": ("k_min", float), "kgrid.k_max": ("k_max", float), "kgrid.m": ("m", int),
    "theorem.t_list": ("T_list", "list"), "theorem.nodes_per_t0": ("nodes_per_T0", int),
    "spectral.e_floor": ("e_floor", float), "spectral.unresolved_tol": ("unresolved_tol", float),
    "fd.dt": ("fd_dt", float), "fd.t": ("fd_t", float),
    "stationary.k": ("sp_k", float), "stationary.t_list": ("sp_t_list", "list"),
    "lemma1.t_list": ("lemma1_t_list", "list"),
    "low_energy.delta": ("delta", float), "low_energy.t_list": ("le_t_list", "list"),
    "output.dir": ("out_dir", str),
}


def _number(key: str, text: str, kind):
    try:
        if kind is int:
            if "^" in text:
                base, exp = text.split("^")
                return int(base) ** int(exp)
            return int(text)
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind.__name__}") from None


def parse_config(text: str, preset: str | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",), delimiters=("=",))
    cp.optionxform = str
    try:
        cp.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    items = dict(cp["config"])
    name = items.pop("preset", None) or preset or "default"
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; known: {sorted(PRESETS)}")
    base = PRESETS[name]
    updates: dict = {}
    family = items.pop("potential.family", None)
    if family is not None:
        if family not in FAMILIES:
            raise ConfigError(f"unknown potential family {family!r}; known: {sorted(FAMILIES)}")
        updates["family"] = family
        params = {}
    else:
        family = base.family
        params = dict(base.params)
    for key, raw in items.items():
        low = key.lower()
        if low.startswith("potential."):
            name_p = key.split(".", 1)[1]
            params[name_p] = _number(key, raw, float)
        elif low in _KEYS:
            field_name, kind = _KEYS[low]
            if kind == "list":
                updates[field_name] = tuple(_number(key, v.strip(), float) for v in raw.split(",") if v.strip())
            elif kind is str:
                updates[field_name] = raw.strip()
            else:
                updates[field_name] = _number(key, raw.strip(), kind)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    defaults = FAMILIES[family][1]
    updates["params"] = {**defaults, **params}
    return replace(base, **updates).validate()


def load_config(path: str | Path | None, preset: str | None = None) -> ExperimentConfig:
    if path is None:
        return parse_config("", preset)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, preset)
