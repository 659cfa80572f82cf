"""JSON run configuration: parsing, defaults and validation."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Any

from .model import DAMPING_FAMILIES, FORCING_PRESETS, SOURCE_FAMILIES

EXPERIMENTS = ("simulate", "audit-energy", "linear-decay", "smoothing", "compare", "equilibria",
               "omega-limit", "basins", "split", "validate-model")
FORMATS = ("csv", "json", "snapshots")
SCHEMES = ("etd2", "etd1")

_INITIAL = {"kind": "random", "radius": 1.0, "norm": "h", "mode": None, "amplitude": 1.0,
            "w": None, "v": None, "decay": 1.0}

PARAM_DEFAULTS = {"a": 0.0, "b": 1.0, "c": 0.0, "coeffs": []}

# experiment options and their defaults; None means "derived at run time"
EXPERIMENT_OPTIONS: dict[str, dict[str, Any]] = {
    "simulate": {"initial": _INITIAL, "mu": 0.1},
    "audit-energy": {"initial": _INITIAL, "halvings": 2, "sample_every": 0.1, "min_ratio": 3.5},
    "linear-decay": {"probes": 20, "horizon": None, "samples": 2001, "tolerance": 0.02,
                     "max_prefactor": 3.0},
    "smoothing": {"t_min": 1e-4, "t_max": 1.0, "samples": 400, "tolerance": 0.05},
    "compare": {"initial": _INITIAL, "T": 2.0, "ladder": 7, "delta0": 1e-2, "max_spread": 10.0,
                "duhamel_t": 1.0, "halvings": 2, "min_ratio": 3.5},
    "equilibria": {"starts": 8, "tol": 1e-10},
    "omega-limit": {"initial": _INITIAL, "starts": 8, "threshold": 1e-8, "dwell": 1.0,
                    "match_tol": 1e-5},
    "basins": {"ensemble": 20, "radius": 1.0, "starts": 8, "threshold": 1e-8, "dwell": 1.0,
               "match_tol": 1e-5},
    "split": {"initial": _INITIAL, "k_list": None, "burn_in": 20.0, "threshold": 1e-6,
              "bound_factor": 10.0},
    "validate-model": {"samples": 1000, "s_max": 10.0, "margin": 0.0},
}

DEFAULTS: dict[str, Any] = {
    "model": {
        "dimension": 1,
        "modes_per_dim": 16,
        "oversampling": "3/2",
        "source": {"family": "cubic", "params": {"a": 0.0}},
        "damping": {"family": "quartic", "params": {"b": 1.0}},
        "forcing": {"preset": "constant", "amplitude": 2.0, "coefficients": None},
    },
    "solver": {"dt": 1e-3, "horizon": 1.0, "scheme": "etd2", "stride": 1},
    "experiment": {"name": "simulate"},
    "output": {"directory": "out", "formats": ["csv", "json"]},
    "seed": 0,
}


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass(frozen=True)
class RunConfig:
    """A fully resolved configuration (every default made explicit)."""

    data: dict

    @property
    def model(self) -> dict:
        return self.data["model"]

    @property
    def solver(self) -> dict:
        return self.data["solver"]

    @property
    def experiment(self) -> dict:
        return self.data["experiment"]

    @property
    def output(self) -> dict:
        return self.data["output"]

    @property
    def seed(self) -> int:
        return self.data["seed"]

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def replace(self, **changes) -> "RunConfig":
        d = self.to_dict()
        for key, value in changes.items():
            node = d
            *head, last = key.split(".")
            for h in head:
                node = node[h]
            node[last] = value
        return validate(d)


def _merge(defaults: dict, given: dict, path: str) -> dict:
    if not isinstance(given, dict):
        raise ConfigError("expected an object", path)
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        sub = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(defaults))})", sub)
        if isinstance(defaults[key], dict) and key not in ("params", "source", "damping"):
            out[key] = _merge(defaults[key], value, sub)
        else:
            out[key] = value
    return out


def _number(x, path: str, positive: bool = False, integer: bool = False, minimum=None):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError("expected a number", path)
    if integer and int(x) != x:
        raise ConfigError("expected an integer", path)
    if positive and not x > 0:
        raise ConfigError("must be > 0", path)
    if minimum is not None and x < minimum:
        raise ConfigError(f"must be >= {minimum}", path)
    return int(x) if integer else float(x)


def _fraction(x, path: str) -> str:
    try:
        q = Fraction(str(x)).limit_denominator(1000)
    except (ValueError, ZeroDivisionError):
        raise ConfigError("expected a rational such as \"3/2\" or 1.5", path) from None
    if q < 1:
        raise ConfigError("must be >= 1", path)
    return f"{q.numerator}/{q.denominator}"


def _family(block: dict, table: dict, path: str) -> dict:
    fam = block.get("family")
    if fam not in table:
        raise ConfigError(f"unknown family {fam!r}; available: {', '.join(sorted(table))}", path + ".family")
    params = block.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("expected an object", path + ".params")
    extra = set(block) - {"family", "params"}
    if extra:
        raise ConfigError("unknown key (allowed: family, params)", f"{path}.{sorted(extra)[0]}")
    allowed = table[fam]
    for k in params:
        if k not in allowed:
            raise ConfigError(f"unknown parameter for {fam} (allowed: {', '.join(allowed) or 'none'})",
                              f"{path}.params.{k}")
    full = {k: PARAM_DEFAULTS[k] for k in allowed}
    full.update(params)
    for k, v in full.items():
        if k == "coeffs":
            if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
                raise ConfigError("expected a list of numbers", f"{path}.params.coeffs")
            full[k] = [float(x) for x in v]
        else:
            full[k] = _number(v, f"{path}.params.{k}", minimum=0)
    return {"family": fam, "params": full}


def _model(m: dict) -> dict:
    d = _number(m["dimension"], "model.dimension", integer=True)
    if d not in (1, 2, 3):
        raise ConfigError("must be 1, 2 or 3", "model.dimension")
    n = _number(m["modes_per_dim"], "model.modes_per_dim", integer=True, minimum=1)
    out = {"dimension": d, "modes_per_dim": n, "oversampling": _fraction(m["oversampling"], "model.oversampling"),
           "source": _family(m["source"], SOURCE_FAMILIES, "model.source"),
           "damping": _family(m["damping"], DAMPING_FAMILIES, "model.damping")}
    f = m["forcing"]
    if not isinstance(f, dict):
        raise ConfigError("expected an object", "model.forcing")
    if "coefficients" in f and f["coefficients"] is not None:
        c = f["coefficients"]
        if not isinstance(c, list) or len(c) != n**d or not all(isinstance(x, (int, float)) for x in c):
            raise ConfigError(f"expected a list of {n**d} numbers", "model.forcing.coefficients")
        out["forcing"] = {"preset": None, "amplitude": None, "coefficients": [float(x) for x in c]}
    else:
        preset = f.get("preset", "zero")
        if preset not in FORCING_PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; available: {', '.join(FORCING_PRESETS)}",
                              "model.forcing.preset")
        out["forcing"] = {"preset": preset, "amplitude": _number(f["amplitude"], "model.forcing.amplitude"),
                          "coefficients": None}
    return out


def _solver(s: dict) -> dict:
    dt = _number(s["dt"], "solver.dt", positive=True)
    horizon = _number(s["horizon"], "solver.horizon", positive=True)
    if s["scheme"] not in SCHEMES:
        raise ConfigError(f"unknown scheme; available: {', '.join(SCHEMES)}", "solver.scheme")
    stride = _number(s["stride"], "solver.stride", integer=True, minimum=1)
    n = horizon / dt
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise ConfigError("horizon must be an integer multiple of dt", "solver.horizon")
    return {"dt": dt, "horizon": horizon, "scheme": s["scheme"], "stride": stride}


def _experiment(e: dict) -> dict:
    if not isinstance(e, dict):
        raise ConfigError("expected an object", "experiment")
    name = e.get("name")
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; available: {', '.join(EXPERIMENTS)}", "experiment.name")
    opts = {k: v for k, v in e.items() if k != "name"}
    out = _merge(EXPERIMENT_OPTIONS[name], opts, "experiment")
    if "initial" in out:
        init = out["initial"]
        if init["kind"] not in ("zero", "random", "mode", "coefficients"):
            raise ConfigError("must be one of zero, random, mode, coefficients", "experiment.initial.kind")
        if init["norm"] not in ("h", "h1"):
            raise ConfigError("must be h or h1", "experiment.initial.norm")
        _number(init["radius"], "experiment.initial.radius", minimum=0)
    for key in ("probes", "samples", "starts", "ensemble", "ladder", "halvings"):
        if key in out:
            _number(out[key], f"experiment.{key}", integer=True, minimum=1)
    if name == "linear-decay" and out["probes"] < 10:
        raise ConfigError("must be >= 10", "experiment.probes")
    if name == "compare" and out["ladder"] < 4:
        raise ConfigError("must be >= 4", "experiment.ladder")
    if name == "smoothing" and not 0 < out["t_min"] < out["t_max"]:
        raise ConfigError("need 0 < t_min < t_max", "experiment.t_min")
    if out.get("k_list") is not None:
        ks = out["k_list"]
        if not isinstance(ks, list) or not ks or not all(isinstance(k, int) and k >= 1 for k in ks):
            raise ConfigError("expected a non-empty list of positive integers", "experiment.k_list")
    return {"name": name, **out}


def _output(o: dict) -> dict:
    if not isinstance(o["directory"], str) or not o["directory"]:
        raise ConfigError("expected a path", "output.directory")
    fm = o["formats"]
    if not isinstance(fm, list) or any(f not in FORMATS for f in fm):
        raise ConfigError(f"expected a list drawn from {', '.join(FORMATS)}", "output.formats")
    return {"directory": o["directory"], "formats": [f for f in FORMATS if f in fm]}


def validate(doc: dict) -> RunConfig:
    """Fill defaults and check every field of a decoded document."""
    if not isinstance(doc, dict):
        raise ConfigError("top level must be an object")
    for key in doc:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(DEFAULTS))})", key)
    rest = {k: v for k, v in doc.items() if k != "experiment"}
    merged = _merge({k: v for k, v in DEFAULTS.items() if k != "experiment"}, rest, "")
    seed = merged["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("expected an unsigned 64-bit integer", "seed")
    exp = doc.get("experiment", DEFAULTS["experiment"])
    return RunConfig({
        "model": _model(merged["model"]),
        "solver": _solver(merged["solver"]),
        "experiment": _experiment(exp),
        "output": _output(merged["output"]),
        "seed": seed,
    })


def parse_config(text: str) -> RunConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return validate(doc)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
