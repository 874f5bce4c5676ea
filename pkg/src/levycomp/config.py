"""JSON job configuration: schema, parsing and construction of process specs.

A job file looks like::

    {
      "schema_version": 1,
      "name": "brownian_cx",
      "pair": [{"kind": "pii", "cov": 1.0}, {"kind": "pii", "cov": 4.0}],
      "order": "cx",
      "family": {"size": 20, "seed": 0, "beta": 0.05, "mc_extras": ["exact_hinge"]},
      "stages": ["validate", "conditions", "dominance", "mc", "spectral"],
      "seed": 20240601,
      "numerics": {"n_paths": 1000000, "t": 1.0},
      "output_dir": "out/brownian_cx"
    }

Process blocks take ``kind`` (``pii`` or ``levy_sde``), ``dim``, ``horizon``,
``cutoff``, ``drift`` and ``cov`` (a constant, or ``{"poly": [c0, c1, ...]}``
meaning ``Σ c_k s^k``), ``levy`` (atoms, an optional 1-D density and an
optional ``scale_poly`` multiplying the whole measure), ``phi`` for the
diffusion variant and ``x0``. ``cov`` is always a covariance, never a
standard deviation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

import numpy as np

from .generator import FAMILY_TAGS
from .specs import (ContinuousPart, DiffusionCoefficient, LevyMeasure, ProcessSpec,
                    TripletSchedule, CUTOFF_MODES)

SCHEMA_VERSION = 1
STAGES = ("validate", "conditions", "dominance", "mc", "spectral", "residuals", "norms")
MC_EXTRAS = ("exact_hinge", "square")


class ConfigError(ValueError):
    """Invalid job configuration; the message starts with the offending field."""

    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field = field_path


@dataclass(frozen=True)
class FamilyConfig:
    size: int = 20
    seed: int = 0
    beta: float = 0.05
    mc_extras: tuple = ()


@dataclass(frozen=True)
class Numerics:
    n_paths: int = 1_000_000
    t: float = 1.0
    s_grid: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    x_radius: float = 5.0
    x_points: int = 41
    h: float = 1e-4
    alpha: float = 0.01
    margin_tol: float = 1e-4
    dominance_tol: float = 1e-9
    spectral_tol: float = 1e-7
    steps_per_unit: int = 256
    r_nodes: int = 32
    spectral_n: int = 4096
    residual_tol: float = 1e-4
    equation_tol: float = 1e-2
    residual_members: int = 3
    symbol_paths: int = 100_000
    norm_p: float = 2.0
    norm_rho: float = 2.0
    threads: int = 1


@dataclass(frozen=True)
class JobConfig:
    name: str
    pair: tuple
    raw_pair: tuple
    order: str
    family: FamilyConfig
    stages: tuple
    seed: int
    numerics: Numerics
    output_dir: str
    schema_version: int = SCHEMA_VERSION

    @property
    def dim(self) -> int:
        return self.pair[0].dim

    @property
    def is_pii_1d(self) -> bool:
        return all(p.variant == "pii" and p.dim == 1 for p in self.pair)

    def with_overrides(self, stages=None, seed=None, output_dir=None, threads=None) -> "JobConfig":
        cfg = self
        if stages is not None:
            cfg = replace(cfg, stages=_parse_stages(stages, "--stages"))
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if output_dir is not None:
            cfg = replace(cfg, output_dir=str(output_dir))
        if threads is not None:
            cfg = replace(cfg, numerics=replace(cfg.numerics, threads=int(threads)))
        check_stage_dependencies(cfg)
        return cfg

    def canonical(self) -> dict:
        """Config content that determines the results (no output paths or thread counts)."""
        num = {k: v for k, v in self.numerics.__dict__.items() if k != "threads"}
        num["s_grid"] = list(num["s_grid"])
        return {"schema_version": self.schema_version, "name": self.name,
                "pair": list(self.raw_pair), "order": self.order,
                "family": {"size": self.family.size, "seed": self.family.seed,
                           "beta": self.family.beta, "mc_extras": list(self.family.mc_extras)},
                "stages": list(self.stages), "seed": self.seed, "numerics": num}


# ---------------------------------------------------------------------------
# primitive readers


def _get(d: dict, key: str, path: str, kind, default=None, required=False):
    if key not in d:
        if required:
            raise ConfigError(f"{path}.{key}", "missing required field")
        return default
    v = d[key]
    ok = isinstance(v, kind) and not (kind in (int, float, (int, float)) and isinstance(v, bool))
    if not ok:
        raise ConfigError(f"{path}.{key}", f"expected {getattr(kind, '__name__', kind)}, got {type(v).__name__}")
    return v


def _number(v, path: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(path, f"expected a finite number, got {v!r}")
    return float(v)


def _array(v, shape, path: str) -> np.ndarray:
    try:
        a = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(path, f"expected numbers, got {v!r}") from None
    if not np.all(np.isfinite(a)):
        raise ConfigError(path, "non-finite entry")
    if a.ndim == 0:
        return a
    if a.shape != shape:
        raise ConfigError(path, f"expected shape {shape}, got {a.shape}")
    return a


def _time_function(v, shape, path: str):
    """Constant or ``{"poly": [c0, c1, ...]}``; each coefficient is a scalar or of ``shape``."""
    if isinstance(v, dict):
        if set(v) != {"poly"} or not isinstance(v["poly"], list) or not v["poly"]:
            raise ConfigError(path, 'time dependence must be {"poly": [c0, c1, ...]}')
        coeffs = [_array(c, shape, f"{path}.poly[{i}]") for i, c in enumerate(v["poly"])]
        return lambda s: sum(c * s**k for k, c in enumerate(coeffs))
    c = _array(v, shape, path)
    return lambda s: c


def _density(v: dict, path: str) -> ContinuousPart:
    kind = _get(v, "kind", path, str, required=True)
    scale = _number(v.get("scale", 1.0), f"{path}.scale")
    inner = _number(v.get("inner", 1e-3), f"{path}.inner")
    outer = _number(v.get("outer", 20.0), f"{path}.outer")
    nodes = _get(v, "nodes", path, int, 200)
    if kind == "power":
        alpha = _number(v.get("alpha", 1.0), f"{path}.alpha")

        def dens(y):
            return scale * np.abs(y[..., 0]) ** (-1.0 - alpha)
    elif kind == "gaussian":
        width = _number(v.get("width", 1.0), f"{path}.width")

        def dens(y):
            return scale * np.exp(-0.5 * (y[..., 0] / width) ** 2)
    elif kind == "exponential":
        rate = _number(v.get("rate", 1.0), f"{path}.rate")

        def dens(y):
            return scale * np.exp(-rate * np.abs(y[..., 0])) / np.abs(y[..., 0])
    else:
        raise ConfigError(f"{path}.kind", f"unknown density kind {kind!r} (power, gaussian, exponential)")
    try:
        return ContinuousPart(dens, inner, outer, nodes, 1, kind)
    except ValueError as e:
        raise ConfigError(path, str(e)) from None


def _levy(v, dim: int, path: str):
    if v is None:
        return lambda s: LevyMeasure(dim)
    if not isinstance(v, dict):
        raise ConfigError(path, "expected an object")
    locs, masses = [], []
    for i, a in enumerate(_get(v, "atoms", path, list, [])):
        p = f"{path}.atoms[{i}]"
        if not isinstance(a, dict):
            raise ConfigError(p, "expected {\"at\": ..., \"mass\": ...}")
        at = _array(a.get("at"), (dim,), f"{p}.at")
        locs.append(np.broadcast_to(at, (dim,)))
        masses.append(_number(a.get("mass"), f"{p}.mass"))
    cont = None
    if "density" in v:
        if dim != 1:
            raise ConfigError(f"{path}.density", "continuous densities are supported in one dimension")
        cont = _density(_get(v, "density", path, dict), f"{path}.density")
    base = LevyMeasure(dim, np.array(locs).reshape(-1, dim), np.array(masses), cont)
    if "scale_poly" not in v:
        return lambda s: base
    coeffs = [_number(c, f"{path}.scale_poly[{i}]") for i, c in enumerate(_get(v, "scale_poly", path, list))]
    return lambda s: base.scaled(sum(c * s**k for k, c in enumerate(coeffs)))


def _phi(v, dim: int, horizon: float, path: str) -> DiffusionCoefficient:
    if not isinstance(v, dict) or len(v) != 1:
        raise ConfigError(path, 'expected one of {"matrix": ...}, {"poly_t": [...]}, {"tanh": {...}}')
    (kind, arg), = v.items()
    eye = np.eye(dim)
    if kind == "matrix":
        m = _array(arg, (dim, dim), f"{path}.matrix")
        return DiffusionCoefficient.constant(m, dim)
    if kind == "poly_t":
        if not isinstance(arg, list) or not arg:
            raise ConfigError(f"{path}.poly_t", "expected a non-empty list of coefficients")
        coeffs = [_number(c, f"{path}.poly_t[{i}]") for i, c in enumerate(arg)]

        def phi(x, t):
            return np.broadcast_to(sum(c * t**k for k, c in enumerate(coeffs)) * eye,
                                   x.shape[:-1] + (dim, dim))
        tmax = max(1.0, horizon)
        return DiffusionCoefficient(phi, dim, float(sum(abs(c) * tmax**k for k, c in enumerate(coeffs))))
    if kind == "tanh":
        if not isinstance(arg, dict):
            raise ConfigError(f"{path}.tanh", "expected {\"a\": ..., \"c\": ...}")
        a = _number(arg.get("a", 1.0), f"{path}.tanh.a")
        c = _number(arg.get("c", 0.0), f"{path}.tanh.c")

        def phi(x, t):
            return (c + a * np.tanh(x[..., :1]))[..., None] * eye

        return DiffusionCoefficient(phi, dim, abs(a) + abs(c))
    raise ConfigError(path, f"unknown phi kind {kind!r}")


def build_process(v: Any, path: str, horizon_default: float) -> ProcessSpec:
    if not isinstance(v, dict):
        raise ConfigError(path, "expected an object")
    kind = _get(v, "kind", path, str, "pii")
    if kind not in ("pii", "levy_sde"):
        raise ConfigError(f"{path}.kind", f"expected 'pii' or 'levy_sde', got {kind!r}")
    dim = _get(v, "dim", path, int, 1)
    if dim < 1:
        raise ConfigError(f"{path}.dim", "must be positive")
    horizon = _number(v.get("horizon", horizon_default), f"{path}.horizon")
    cut = _get(v, "cutoff", path, str, "truncation")
    if cut not in CUTOFF_MODES:
        raise ConfigError(f"{path}.cutoff", f"expected one of {CUTOFF_MODES}")
    b = _time_function(v.get("drift", 0.0), (dim,), f"{path}.drift")
    sig = _time_function(v.get("cov", 0.0), (dim, dim), f"{path}.cov")
    F = _levy(v.get("levy"), dim, f"{path}.levy")
    if kind == "levy_sde" and any(isinstance(v.get(k), dict) for k in ("drift", "cov")):
        raise ConfigError(path, "the driver of a levy_sde must be time-homogeneous")
    sched = TripletSchedule(b, sig, F, dim, horizon, cut)
    phi = None
    if kind == "levy_sde":
        if "phi" not in v:
            raise ConfigError(f"{path}.phi", "missing required field for levy_sde")
        phi = _phi(v["phi"], dim, horizon, f"{path}.phi")
    elif "phi" in v:
        raise ConfigError(f"{path}.phi", "only valid for kind 'levy_sde'")
    x0 = _array(v.get("x0", 0.0), (dim,), f"{path}.x0")
    return ProcessSpec(sched, phi, np.broadcast_to(x0, (dim,)).copy(), source=v)


def _parse_stages(v, path: str) -> tuple:
    if isinstance(v, str):
        v = [s.strip() for s in v.split(",") if s.strip()]
    if not isinstance(v, (list, tuple)) or not v:
        raise ConfigError(path, "expected a non-empty list of stages")
    for s in v:
        if s not in STAGES:
            raise ConfigError(path, f"unknown stage {s!r}; choose from {', '.join(STAGES)}")
    return tuple(s for s in STAGES if s in v)


def check_stage_dependencies(cfg: JobConfig) -> None:
    if "mc" in cfg.stages and "validate" not in cfg.stages:
        raise ConfigError("stages", "stage 'mc' requires stage 'validate'")
    for st in ("spectral", "residuals"):
        if st in cfg.stages and not cfg.is_pii_1d:
            raise ConfigError("stages", f"stage {st!r} requires a one-dimensional PII pair")


def _numerics(v: dict, path: str) -> Numerics:
    base = Numerics()
    known = set(base.__dict__)
    out = {}
    for k, val in v.items():
        if k == "x_grid":
            if not isinstance(val, dict):
                raise ConfigError(f"{path}.x_grid", "expected {\"radius\": R, \"n\": N}")
            out["x_radius"] = _number(val.get("radius", base.x_radius), f"{path}.x_grid.radius")
            out["x_points"] = _get(val, "n", f"{path}.x_grid", int, base.x_points)
            continue
        if k not in known:
            raise ConfigError(f"{path}.{k}", "unknown numeric setting")
        if k == "s_grid":
            if isinstance(val, dict):
                n = _get(val, "n", f"{path}.s_grid", int, required=True)
                out[k] = ("n", n)
            elif isinstance(val, list) and val:
                out[k] = tuple(_number(x, f"{path}.s_grid[{i}]") for i, x in enumerate(val))
            else:
                raise ConfigError(f"{path}.s_grid", "expected a list of times or {\"n\": N}")
            continue
        default = getattr(base, k)
        if isinstance(default, int):
            if isinstance(val, bool) or not isinstance(val, int) or val < 1:
                raise ConfigError(f"{path}.{k}", f"expected a positive integer, got {val!r}")
            out[k] = val
        else:
            out[k] = _number(val, f"{path}.{k}")
            if out[k] <= 0:
                raise ConfigError(f"{path}.{k}", "must be positive")
    t = out.get("t", base.t)
    sg = out.get("s_grid")
    if isinstance(sg, tuple) and sg and sg[0] == "n":
        out["s_grid"] = tuple(float(x) for x in np.linspace(0.0, t, sg[1]))
    if not 0 < out.get("alpha", base.alpha) < 0.5:
        raise ConfigError(f"{path}.alpha", "must lie in (0, 0.5)")
    n = out.get("spectral_n", base.spectral_n)
    if n & (n - 1):
        raise ConfigError(f"{path}.spectral_n", "must be a power of two")
    return replace(base, **out)


def parse_config(data: Any) -> JobConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "expected a JSON object")
    ver = data.get("schema_version")
    if ver != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"expected {SCHEMA_VERSION}, got {ver!r}")
    pair = _get(data, "pair", "<root>", list, required=True)
    if len(pair) != 2:
        raise ConfigError("pair", "expected exactly two process blocks")
    num = _numerics(_get(data, "numerics", "<root>", dict, {}), "numerics")
    specs = tuple(build_process(p, f"pair[{i}]", max(num.t, 1.0)) for i, p in enumerate(pair))
    if specs[0].dim != specs[1].dim:
        raise ConfigError("pair", "processes differ in dimension")
    if specs[0].variant != specs[1].variant:
        raise ConfigError("pair", "both processes must be of the same kind")
    order = _get(data, "order", "<root>", str, required=True)
    if order not in FAMILY_TAGS:
        raise ConfigError("order", f"expected one of {FAMILY_TAGS}, got {order!r}")
    fam = _get(data, "family", "<root>", dict, {})
    extras = tuple(_get(fam, "mc_extras", "family", list, []))
    for e in extras:
        if e not in MC_EXTRAS:
            raise ConfigError("family.mc_extras", f"unknown member {e!r}; choose from {MC_EXTRAS}")
    family = FamilyConfig(_get(fam, "size", "family", int, 20), _get(fam, "seed", "family", int, 0),
                          _number(fam.get("beta", 0.05), "family.beta"), extras)
    if family.size < 1 or family.beta <= 0:
        raise ConfigError("family", "size and beta must be positive")
    seed = _get(data, "seed", "<root>", int, 0)
    if seed < 0:
        raise ConfigError("seed", "must be nonnegative")
    pii_1d = all(p.variant == "pii" and p.dim == 1 for p in specs)
    default_stages = list(STAGES[:5]) if pii_1d else list(STAGES[:4])
    cfg = JobConfig(_get(data, "name", "<root>", str, "job"), specs, tuple(pair), order, family,
                    _parse_stages(data.get("stages", default_stages), "stages"), seed, num,
                    _get(data, "output_dir", "<root>", str, "out"))
    check_stage_dependencies(cfg)
    return cfg


def load_config(path) -> JobConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError("<file>", f"cannot read {path}: {e.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError("<file>", f"invalid JSON at line {e.lineno}: {e.msg}") from None
    return parse_config(data)
