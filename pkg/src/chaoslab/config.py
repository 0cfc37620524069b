"""Experiment configuration: TOML parsing, validation and round trips.

A config is a handful of TOML tables. Every key has a default, so a file
only needs what it changes. :func:`parse_config` collects every problem
(unknown keys, wrong types, violated preconditions) before raising, each
tagged with its dotted path such as ``dynamics.dt``.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import tomli
import tomli_w

from .errors import ConfigError
from .kernels import SMOOTH_TABLES, ConfinementSpec, KernelSpec

SCHEMA_VERSION = 1

DEFAULTS: dict = {
    "kernel": {"family": "log", "s": 0.0, "d": 1, "table": "gaussian", "amplitude": 1.0, "scale": 1.0},
    "confinement": {"form": "quadratic", "kappa": 2.0, "a": 0.0, "b": 0.0},
    "beta": 1.0,
    "grid": {"lo": -6.0, "hi": 6.0, "n_cells": 256},
    "dynamics": {"kind": "implicit", "dt": 0.01, "t_end": 1.0, "snapshot_dt": 0.1},
    "initial": {"kind": "perturbed_equilibrium", "amplitude": 0.1, "mean": 0.0, "std": 1.0, "width": 0.0},
    "ensemble": {"N": 2, "M": 1, "master_seed": 0, "sampler": "sde", "target": "gibbs", "mala_dt": 0.05,
                 "burn_in": 200, "thin": 1},
    "constants": {"c_riesz": 1.0, "c_re": 0.0, "c_me": 1.0, "c_beta_assm": 0.0},
    "tolerances": {"equilibrium": 1e-10, "tol_disc_c": 1e-12, "tol_abs": 1e-12, "gronwall": 1e-8,
                   "lsi": 1e-12, "rate_factor": 0.9},
    "output_dir": "out",
}

INITIAL_KINDS = ("perturbed_equilibrium", "equilibrium", "gaussian", "uniform", "split_mixture", "product")
STEP_KINDS = ("implicit", "explicit")
SAMPLERS = ("sde", "mala")
TARGETS = ("gibbs", "modulated")
FAMILIES = ("log", "riesz", "smooth")
FORMS = ("quadratic", "quartic", "zero")


@dataclass
class ExperimentConfig:
    """A validated configuration; ``data`` mirrors the TOML tables."""

    data: dict

    def __getitem__(self, key):
        return self.data[key]

    @property
    def beta(self) -> float:
        return float(self.data["beta"])

    @property
    def kernel(self) -> KernelSpec:
        k = self.data["kernel"]
        if k["family"] == "log":
            return KernelSpec.log(k["d"])
        if k["family"] == "riesz":
            return KernelSpec.riesz(k["s"], k["d"])
        return KernelSpec.smooth(k["table"], k["amplitude"], k["scale"], k["d"])

    @property
    def confinement(self) -> ConfinementSpec:
        c = self.data["confinement"]
        if c["form"] == "quadratic":
            return ConfinementSpec.quadratic(c["kappa"])
        if c["form"] == "quartic":
            return ConfinementSpec("quartic", a=c["a"], b=c["b"])
        return ConfinementSpec("zero")

    @property
    def grid(self):
        from .grid import Grid1D

        g = self.data["grid"]
        return Grid1D(g["lo"], g["hi"], g["n_cells"])

    def constants(self):
        from .diagnostics import TheoryConstants

        return TheoryConstants(**self.data["constants"])

    def with_seed(self, seed: int | None) -> "ExperimentConfig":
        if seed is None:
            return self
        data = copy.deepcopy(self.data)
        data["ensemble"]["master_seed"] = int(seed)
        return ExperimentConfig(data)

    def to_toml(self) -> str:
        return dump_config(self)


def _merge(defaults, given, path, errors):
    out = {}
    for key, value in given.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            errors.append(f"{where}: unknown key")
            continue
        ref = defaults[key]
        if isinstance(ref, dict):
            if not isinstance(value, dict):
                errors.append(f"{where}: expected a table")
                continue
            out[key] = _merge(ref, value, where, errors)
        else:
            out[key] = _coerce(ref, value, where, errors)
    for key, ref in defaults.items():
        if key not in out:
            out[key] = copy.deepcopy(ref)
    return out


def _coerce(ref, value, where, errors):
    if isinstance(ref, bool):
        ok = isinstance(value, bool)
    elif isinstance(ref, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(ref, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    else:
        ok = isinstance(value, type(ref))
    if not ok:
        errors.append(f"{where}: expected {type(ref).__name__}, got {type(value).__name__}")
        return ref
    return value


def _check(data, errors):
    def need(cond, where, msg):
        if not cond:
            errors.append(f"{where}: {msg}")

    k = data["kernel"]
    need(k["family"] in FAMILIES, "kernel.family", f"must be one of {FAMILIES}")
    need(k["d"] in (1, 2, 3), "kernel.d", "must be 1, 2 or 3")
    if k["family"] == "riesz":
        need(0.0 < k["s"] < k["d"], "kernel.s", "riesz exponent must satisfy 0 < s < d")
        if k["d"] == 1:
            need(k["s"] < 1.0, "kernel.s", "s < 1 is required in d = 1")
    if k["family"] == "smooth":
        need(k["table"] in SMOOTH_TABLES, "kernel.table", f"must be one of {SMOOTH_TABLES}")
        need(k["scale"] > 0, "kernel.scale", "must be positive")
    c = data["confinement"]
    need(c["form"] in FORMS, "confinement.form", f"must be one of {FORMS}")
    if c["form"] == "quadratic":
        need(c["kappa"] > 0, "confinement.kappa", "must be positive")
    need(math.isfinite(data["beta"]) and data["beta"] > 0, "beta", "must be a positive finite number")
    g = data["grid"]
    need(g["hi"] > g["lo"], "grid.hi", "must exceed grid.lo")
    need(g["n_cells"] >= 8, "grid.n_cells", "must be at least 8")
    dyn = data["dynamics"]
    need(dyn["kind"] in STEP_KINDS, "dynamics.kind", f"must be one of {STEP_KINDS}")
    need(dyn["dt"] > 0, "dynamics.dt", "must be positive")
    need(dyn["t_end"] >= 0, "dynamics.t_end", "must be nonnegative")
    need(dyn["snapshot_dt"] > 0, "dynamics.snapshot_dt", "must be positive")
    if dyn["dt"] > 0 and dyn["snapshot_dt"] > 0:
        ratio = dyn["snapshot_dt"] / dyn["dt"]
        need(abs(ratio - round(ratio)) < 1e-9 and round(ratio) >= 1, "dynamics.snapshot_dt",
             "must be a positive multiple of dynamics.dt")
    ini = data["initial"]
    need(ini["kind"] in INITIAL_KINDS, "initial.kind", f"must be one of {INITIAL_KINDS}")
    need(ini["std"] > 0, "initial.std", "must be positive")
    e = data["ensemble"]
    need(1 <= e["N"] <= 4096, "ensemble.N", "must lie in [1, 4096]")
    need(e["M"] >= 1, "ensemble.M", "must be >= 1")
    need(e["master_seed"] >= 0, "ensemble.master_seed", "must be a nonnegative integer")
    need(e["sampler"] in SAMPLERS, "ensemble.sampler", f"must be one of {SAMPLERS}")
    need(e["target"] in TARGETS, "ensemble.target", f"must be one of {TARGETS}")
    need(e["mala_dt"] > 0, "ensemble.mala_dt", "must be positive")
    need(e["thin"] >= 1, "ensemble.thin", "must be >= 1")
    const = data["constants"]
    need(const["c_riesz"] > 0, "constants.c_riesz", "must be positive")
    need(const["c_re"] >= 0, "constants.c_re", "must be nonnegative")
    need(const["c_me"] >= 0, "constants.c_me", "must be nonnegative")
    need(0 <= const["c_beta_assm"] and const["c_beta_assm"] * data["beta"] < 1, "constants.c_beta_assm",
         "must lie in [0, 1/beta)")
    for key, val in data["tolerances"].items():
        need(val >= 0, f"tolerances.{key}", "must be nonnegative")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate TOML text; raises :class:`ConfigError` listing every problem."""
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError([f"<toml>: {exc}"]) from exc
    errors: list = []
    data = _merge(DEFAULTS, raw, "", errors)
    # values that failed to parse were replaced by defaults; do not report them twice
    bad = {e.split(":", 1)[0] for e in errors}
    checks: list = []
    _check(data, checks)
    errors += [e for e in checks if e.split(":", 1)[0] not in bad]
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(data)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            text = fh.read().decode("utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError([f"<file>: cannot read {path}: {exc}"]) from exc
    return parse_config(text)


def dump_config(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(cfg.data)
