"""Experiment configuration: TOML (or a JSON mirror) into validated objects.

Layout::

    task = "simulate"        # simulate | rate | exit-rate | callprice | impliedvol | explode | verify

    [model]
    kernel = "RIEMANN_LIOUVILLE"   # FBM | RIEMANN_LIOUVILLE | FRACTIONAL_OU | CUSTOM
    H = 0.75                       # kernel Hurst index (not for CUSTOM)
    a = 1.0                        # FRACTIONAL_OU mean reversion, 1/time
    matrix = [[...], ...]          # CUSTOM kernel values, (n+1) x (n+1)
    T = 1.0                        # horizon, time units
    rho = -0.5
    s0 = 1.0
    sigma = "BOUNDED_SMOOTH"       # CONSTANT | AFFINE | EXP | POLY_PLUS | BOUNDED_SMOOTH
    sigma_params = [0.2, 0.5]

    [scaling]
    H = 0.75
    beta = 0.375
    alpha = 0.0
    eps = [0.8, 0.4, 0.2, 0.1]     # strictly decreasing, in (0, 1]

    [grid]
    n = 64

    [mc]
    count = 100000
    seed = 7
    backend = "kernel"             # kernel | exact | covariance
    tilt = "none"                  # none | mdp | rate

    [params]                       # task parameters
    x = [0.1]
    interval = [-0.3, 0.3]
    t = 1.0
    gamma = 0.1                    # exponential-moment order of int sigma^2
    moment = 2.0                   # optional price-moment order for diagnostics
    M = [1e3, 1e6]
    truncations = [1e2, 1e4]
    levels = [16, 32, 64]
    restarts = 8

    [output]
    dir = "out"
    format = "json"                # json | csv | both

Physics keys (kernel family and H, rho, sigma, scaling H / beta / alpha) have
no defaults. Unknown keys are rejected.
"""
from dataclasses import dataclass, field
import json
import math
from pathlib import Path

import tomli

from .errors import ConfigInvalid
from .kernels import BACKENDS, CUSTOM as K_CUSTOM, FAMILIES, FRACTIONAL_OU, KernelSpec, PathGrid
from .model import CUSTOM as S_CUSTOM, VOL_FAMILIES, ModelSpec, ScalingParams, VolFunction

TASKS = ("simulate", "rate", "exit-rate", "callprice", "impliedvol", "explode", "verify")
FORMATS = ("json", "csv", "both")
TILTS = ("none", "mdp", "rate")

# key -> (type, required, default)
SCHEMA = {
    "model": {
        "kernel": (str, True, None),
        "H": (float, False, None),
        "a": (float, False, None),
        "matrix": (list, False, None),
        "T": (float, False, 1.0),
        "rho": (float, True, None),
        "s0": (float, False, 1.0),
        "sigma": (str, True, None),
        "sigma_params": (list, True, None),
    },
    "scaling": {
        "H": (float, True, None),
        "beta": (float, True, None),
        "alpha": (float, True, None),
        "eps": (list, False, None),
    },
    "grid": {"n": (int, False, 64)},
    "mc": {
        "count": (int, False, 10000),
        "seed": (int, False, 0),
        "backend": (str, False, "kernel"),
        "tilt": (str, False, "none"),
    },
    "params": {
        "x": (list, False, None),
        "interval": (list, False, None),
        "t": (float, False, None),
        "gamma": (float, False, None),
        "moment": (float, False, None),
        "M": (list, False, None),
        "truncations": (list, False, None),
        "levels": (list, False, None),
        "restarts": (int, False, 8),
    },
    "output": {"dir": (str, False, "out"), "format": (str, False, "json")},
}

# task -> params that must be present
TASK_NEEDS = {
    "simulate": ("x", "eps"),
    "rate": ("x",),
    "exit-rate": ("interval", "t"),
    "callprice": ("x", "eps"),
    "impliedvol": ("x", "eps"),
    "explode": ("gamma", "t", "M"),
    "verify": ("x",),
}


def _coerce(path, value, typ):
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigInvalid(path, "expected a number")
        value = float(value)
        if not math.isfinite(value):
            raise ConfigInvalid(path, "must be finite")
        return value
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigInvalid(path, "expected an integer")
        return value
    if typ is list:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return [float(value)]
        if not isinstance(value, list):
            raise ConfigInvalid(path, "expected a list")
        return value
    if not isinstance(value, str):
        raise ConfigInvalid(path, "expected a string")
    return value


def _floats(path, seq):
    out = []
    for v in seq:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigInvalid(path, "expected a list of finite numbers")
        out.append(float(v))
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    task: str
    model: dict
    scaling: dict
    grid: dict
    mc: dict
    params: dict
    output: dict
    source: str | None = field(default=None, compare=False)

    # ---- parsing

    @classmethod
    def from_dict(cls, raw, source=None, task=None):
        if not isinstance(raw, dict):
            raise ConfigInvalid("<root>", "configuration must be a table")
        if task is not None:
            if raw.get("task", task) != task:
                raise ConfigInvalid("task", f"config says {raw['task']!r}, command line says {task!r}")
            raw = {**raw, "task": task}
        extra = set(raw) - set(SCHEMA) - {"task"}
        if extra:
            key = sorted(extra)[0]
            raise ConfigInvalid(key, "unknown key")
        task = raw.get("task")
        if task not in TASKS:
            raise ConfigInvalid("task", f"must be one of {', '.join(TASKS)}")
        sections = {}
        for name, keys in SCHEMA.items():
            given = raw.get(name, {})
            if not isinstance(given, dict):
                raise ConfigInvalid(name, "expected a table")
            unknown = set(given) - set(keys)
            if unknown:
                raise ConfigInvalid(f"{name}.{sorted(unknown)[0]}", "unknown key")
            sec = {}
            for key, (typ, required, default) in keys.items():
                path = f"{name}.{key}"
                if key in given:
                    sec[key] = _coerce(path, given[key], typ)
                elif required:
                    raise ConfigInvalid(path, "required")
                else:
                    sec[key] = default
            sections[name] = sec
        cfg = cls(task=task, source=source, **sections)
        cfg._validate()
        return cfg

    @classmethod
    def load(cls, path, task=None):
        path = Path(path)
        text = path.read_text()
        try:
            raw = json.loads(text) if path.suffix == ".json" else tomli.loads(text)
        except (ValueError, tomli.TOMLDecodeError) as exc:
            raise ConfigInvalid("<file>", f"cannot parse {path.name}: {exc}") from None
        return cls.from_dict(raw, source=str(path), task=task)

    def _validate(self):
        m, s, p = self.model, self.scaling, self.params
        if m["kernel"] not in FAMILIES:
            raise ConfigInvalid("model.kernel", f"must be one of {', '.join(FAMILIES)}")
        if m["kernel"] == K_CUSTOM:
            if m["matrix"] is None:
                raise ConfigInvalid("model.matrix", "required for a CUSTOM kernel")
        elif m["H"] is None:
            raise ConfigInvalid("model.H", "required")
        elif not 0 < m["H"] < 1:
            raise ConfigInvalid("model.H", "must lie in (0, 1)")
        if m["kernel"] == FRACTIONAL_OU and (m["a"] is None or not m["a"] > 0):
            raise ConfigInvalid("model.a", "FRACTIONAL_OU needs a > 0")
        if not m["T"] > 0:
            raise ConfigInvalid("model.T", "must be positive")
        if not -1 <= m["rho"] <= 1:
            raise ConfigInvalid("model.rho", "must lie in [-1, 1]")
        if not m["s0"] > 0:
            raise ConfigInvalid("model.s0", "must be positive")
        if m["sigma"] not in VOL_FAMILIES or m["sigma"] == S_CUSTOM:
            raise ConfigInvalid("model.sigma", "must be a parametric family (CUSTOM needs the library API)")
        m["sigma_params"] = _floats("model.sigma_params", m["sigma_params"])

        H, beta, alpha = s["H"], s["beta"], s["alpha"]
        if not H > 0:
            raise ConfigInvalid("scaling.H", "must be positive")
        if not 0 <= beta <= H:
            raise ConfigInvalid("scaling.beta", "must lie in [0, H]")
        if not alpha >= 0:
            raise ConfigInvalid("scaling.alpha", "must be non-negative")
        if alpha + beta > H + 1e-12:
            raise ConfigInvalid("scaling.alpha", "alpha + beta must not exceed H")
        if s["eps"] is not None:
            eps = _floats("scaling.eps", s["eps"])
            if not eps or any(not 0 < e <= 1 for e in eps) or any(a <= b for a, b in zip(eps, eps[1:])):
                raise ConfigInvalid("scaling.eps", "must be a strictly decreasing list in (0, 1]")
            s["eps"] = eps

        if self.grid["n"] < 1:
            raise ConfigInvalid("grid.n", "must be >= 1")
        mc = self.mc
        if mc["count"] < 2:
            raise ConfigInvalid("mc.count", "must be >= 2")
        if mc["seed"] < 0:
            raise ConfigInvalid("mc.seed", "must be non-negative")
        if mc["backend"] not in BACKENDS:
            raise ConfigInvalid("mc.backend", f"must be one of {', '.join(BACKENDS)}")
        if mc["tilt"] not in TILTS:
            raise ConfigInvalid("mc.tilt", f"must be one of {', '.join(TILTS)}")

        for key in ("x", "M", "truncations"):
            if p[key] is not None:
                p[key] = _floats(f"params.{key}", p[key])
        if p["x"] is not None and not p["x"]:
            raise ConfigInvalid("params.x", "must not be empty")
        if p["interval"] is not None:
            iv = _floats("params.interval", p["interval"])
            if len(iv) != 2 or not iv[0] < 0 < iv[1]:
                raise ConfigInvalid("params.interval", "must be [a, b] with a < 0 < b")
            p["interval"] = iv
        if p["t"] is not None and not 0 < p["t"] <= m["T"]:
            raise ConfigInvalid("params.t", "must lie in (0, T]")
        if p["levels"] is not None:
            lv = p["levels"]
            if not all(isinstance(v, int) and v > 0 for v in lv) or lv != sorted(set(lv)):
                raise ConfigInvalid("params.levels", "must be strictly increasing positive integers")
        if p["restarts"] < 1:
            raise ConfigInvalid("params.restarts", "must be >= 1")
        for key in TASK_NEEDS[self.task]:
            if (s if key == "eps" else p)[key] is None:
                where = "scaling" if key == "eps" else "params"
                raise ConfigInvalid(f"{where}.{key}", f"required by task {self.task}")
        if self.output["format"] not in FORMATS:
            raise ConfigInvalid("output.format", f"must be one of {', '.join(FORMATS)}")
        # finally let the library types check their own invariants
        try:
            self.model_spec()
            self.path_grid()
        except ConfigInvalid:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigInvalid("model", str(exc)) from None

    # ---- library objects

    def kernel_spec(self):
        m = self.model
        if m["kernel"] == K_CUSTOM:
            return KernelSpec.custom(m["matrix"], T=m["T"])
        return KernelSpec(m["kernel"], T=m["T"], H=m["H"], a=m["a"])

    def model_spec(self):
        m = self.model
        try:
            sigma = VolFunction(m["sigma"], tuple(m["sigma_params"]))
        except ValueError as exc:
            raise ConfigInvalid("model.sigma_params", str(exc)) from None
        return ModelSpec(self.kernel_spec(), sigma, rho=m["rho"], T=m["T"], s0=m["s0"])

    def scaling_params(self, eps=1.0):
        s = self.scaling
        return ScalingParams(eps=eps, H=s["H"], beta=s["beta"], alpha=s["alpha"])

    def path_grid(self):
        return PathGrid(self.grid["n"], self.model["T"])

    def with_overrides(self, seed=None, out=None, fmt=None):
        mc, output = dict(self.mc), dict(self.output)
        if seed is not None:
            if seed < 0:
                raise ConfigInvalid("mc.seed", "must be non-negative")
            mc["seed"] = seed
        if out is not None:
            output["dir"] = out
        if fmt is not None:
            if fmt not in FORMATS:
                raise ConfigInvalid("output.format", f"must be one of {', '.join(FORMATS)}")
            output["format"] = fmt
        return ExperimentConfig(self.task, self.model, self.scaling, self.grid, mc, self.params, output, self.source)

    def to_dict(self):
        """Plain mapping that :meth:`from_dict` accepts; ``None`` entries are dropped."""
        out = {"task": self.task}
        for name in SCHEMA:
            out[name] = {k: v for k, v in getattr(self, name).items() if v is not None}
        return out
