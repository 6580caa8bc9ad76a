"""Run configuration: strict TOML parsing and model construction."""
from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .integrator import StepConfig
from .attractor import random_state
from .models import (DampingLaw, KarmanPlate, KBSource, KirchhoffBoussinesq, KirchhoffWave,
                     PlateLoad, State, Wave, WaveSource, validate)
from .spectral import DomainSpec, ValidationError, build_basis

# section -> key -> (type, default)
SCHEMA = {
    "": {"seed": (int, 0), "out": (str, "")},
    "domain": {"dimension": (int, 1), "Lx": (float, math.pi), "Ly": (float, math.pi),
               "Nx": (int, 16), "Ny": (int, 1), "grid_factor": (float, 4.0)},
    "model": {"type": (str, "wave"), "kappa": (float, 1.0), "p": (float, 3.0), "c": (float, 0.0),
              "mu": (float, 0.0), "alpha": (float, 0.0), "F0_amplitude": (float, 0.0),
              "F0_j": (int, 1), "F0_l": (int, 1), "load_amplitude": (float, 0.0),
              "load_j": (int, 1), "load_l": (int, 1), "sigma": (float, 0.0), "rho": (float, 0.0),
              "l": (float, 3.0), "phi0": (float, 1.0), "phi1": (float, 1.0), "sigma0": (float, 1.0),
              "sigma1": (float, 0.0), "h_amplitude": (float, 0.0)},
    "damping": {"g1": (float, 0.0), "m": (float, 1.0), "power": (float, 1.0), "a": (float, 1.0),
                "a_bump": (float, 0.0), "rotational": (bool, False)},
    "integrator": {"scheme": (str, "midpoint"), "dt": (float, 1e-3), "tol": (float, 1e-12),
                   "max_iter": (int, 50), "blowup_threshold": (float, 1e6), "T": (float, 1.0),
                   "stride": (int, 10)},
    "initial": {"kind": (str, "mode"), "amplitude": (float, 1.0), "j": (int, 1), "l": (int, 1),
                "velocity": (float, 0.0), "radius": (float, 1.0)},
    "experiment": {"starts": (int, 64), "tol": (float, 1e-10), "converge_tol": (float, 1e-3),
                   "burn_in": (float, 0.1), "energy_level": (bool, True), "pairs": (int, 4),
                   "K": (int, 16), "eps": (float, 0.25), "ensemble": (int, 8),
                   "sample_burn_in": (float, 10.0), "sample_T": (float, 10.0), "d": (int, 6),
                   "rungs": (int, 12), "points_file": (str, ""), "window": (float, 1.0)},
}


@dataclass
class RunConfig:
    sections: dict
    source: str = ""
    seed: int = 0

    def get(self, section: str, key: str):
        return self.sections[section][key]

    @property
    def hash(self) -> str:
        blob = json.dumps(self.sections, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _coerce(section, key, value, typ):
    where = f"[{section}] {key}" if section else key
    if typ is bool:
        if not isinstance(value, bool):
            raise ValidationError(f"{where} must be a boolean")
        return value
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationError(f"{where} must be an integer")
        return value
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"{where} must be a number")
        return float(value)
    if not isinstance(value, str):
        raise ValidationError(f"{where} must be a string")
    return value


def parse_config(data: dict, source: str = "") -> RunConfig:
    """Fill defaults and reject unknown sections/keys."""
    out = {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}
    for key, value in data.items():
        if isinstance(value, dict):
            if key not in SCHEMA or key == "":
                raise ValidationError(f"unknown config section [{key}]")
            for k, v in value.items():
                if k not in SCHEMA[key]:
                    raise ValidationError(f"unknown key {k!r} in section [{key}]")
                out[key][k] = _coerce(key, k, v, SCHEMA[key][k][0])
        else:
            if key not in SCHEMA[""]:
                raise ValidationError(f"unknown top-level key {key!r}")
            out[""][key] = _coerce("", key, value, SCHEMA[""][key][0])
    return RunConfig(out, source, out[""]["seed"])


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"cannot parse {path}: {exc}") from exc
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    return parse_config(data, str(path))


# -- builders ---------------------------------------------------------------

def build_domain(cfg: RunConfig) -> DomainSpec:
    d = cfg.sections["domain"]
    return DomainSpec(d["dimension"], d["Lx"], d["Ly"], d["Nx"], d["Ny"] if d["dimension"] == 2 else 1,
                      d["grid_factor"])


def _a_field(dom: DomainSpec, a: float, bump: float):
    if bump == 0.0:
        return a
    if dom.dimension == 1:
        return lambda x: a * (1.0 + bump * np.sin(np.pi * x / dom.Lx))
    return lambda x, y: a * (1.0 + bump * np.sin(np.pi * x / dom.Lx) * np.sin(np.pi * y / dom.Ly))


def build_model(cfg: RunConfig):
    dom = build_domain(cfg)
    m, dmp = cfg.sections["model"], cfg.sections["damping"]
    damping = DampingLaw(dmp["g1"], dmp["m"], dmp["power"], _a_field(dom, dmp["a"], dmp["a_bump"]))
    kind = m["type"]
    if kind == "wave":
        spec = Wave(dom, damping, WaveSource(m["kappa"], m["p"], m["c"], m["mu"]))
    elif kind in ("karman", "kirchhoff_boussinesq"):
        rot = DampingLaw(dmp["g1"], dmp["m"], dmp["power"]) if dmp["rotational"] else None
        if kind == "karman":
            basis = build_basis(dom)
            F0 = p_load = None
            if m["F0_amplitude"]:
                F0 = m["F0_amplitude"] * basis.mode(m["F0_j"], m["F0_l"])
            if m["load_amplitude"]:
                p_load = m["load_amplitude"] * basis.mode(m["load_j"], m["load_l"])
            spec = KarmanPlate(dom, damping, PlateLoad(F0, p_load), m["alpha"], rot)
        else:
            spec = KirchhoffBoussinesq(dom, damping, KBSource(m["sigma"], m["rho"], m["l"]), m["alpha"], rot)
    elif kind == "kirchhoff_wave":
        h = m["h_amplitude"] * build_basis(dom).mode(1, 1) if m["h_amplitude"] else None
        spec = KirchhoffWave.linear_coefficients(dom, m["phi0"], m["phi1"], m["sigma0"], m["sigma1"],
                                                 source=WaveSource(m["kappa"], m["p"], m["c"], m["mu"]), h=h)
    else:
        raise ValidationError(f"unknown model type {kind!r}")
    report = validate(spec)
    return spec, report


def build_step(cfg: RunConfig) -> StepConfig:
    i = cfg.sections["integrator"]
    return StepConfig(i["scheme"], i["dt"], i["tol"], i["max_iter"], i["blowup_threshold"])


def build_initial(cfg: RunConfig, spec, rng=None) -> State:
    ini = cfg.sections["initial"]
    if ini["kind"] == "mode":
        e = spec.basis.mode(ini["j"], ini["l"] if spec.basis.dimension == 2 else 1)
        return State(ini["amplitude"] * e, ini["velocity"] * e)
    if ini["kind"] == "random":
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        return random_state(spec, rng, ini["radius"])
    if ini["kind"] == "zero":
        return spec.zero_state()
    raise ValidationError(f"unknown initial kind {ini['kind']!r}")
