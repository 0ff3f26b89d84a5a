"""
INI run configuration.

Sections ``[scenario]``, ``[cost]``, ``[output]`` and ``[verify]``; every key
is optional and falls back to :data:`DEFAULTS`.  Field specs (initial data,
first control, targets) use a small call syntax::

    2.5                          constant
    constant(2.5)
    gaussian(center=0.3 0.6, width=0.1, amp=2, base=0.5)
    file(path/to/snapshot.txt)   snapshot in the grid text format
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import forward as fw
from . import grid as gr
from .cost import AdmissibleBox, CostParams, PGDOptions, Scenario

DEFAULTS: dict[str, dict[str, str]] = {
    "scenario": {
        "p": "2.0",
        "r": "0.0",
        "mu": "0.0",
        "eps": "0.0",
        "logistic": "false",
        "drift_scheme": "upwind",
        "solver": "cg",
        "T": "0.1",
        "N": "20",
        "dim": "1",
        "lengths": "1.0",
        "cells": "16",
        "control_box": "all",
        "u0_spec": "gaussian(center=0.5, width=0.2, amp=1.0, base=0.5)",
        "v0_spec": "constant(1.0)",
        "eps_sweep": "",
    },
    "cost": {
        "gamma_u": "1.0",
        "gamma_v": "1.0",
        "gamma_f": "0.01",
        "delta": "0.0",
        "f_min": "-inf",
        "f_max": "inf",
        "f0_spec": "constant(0.0)",
        "max_iters": "200",
        "tol_J": "0.0",
        "tol_opt": "1e-6",
        "s_init": "1.0",
        "target_spec": "perturbed(0.1)",
    },
    "output": {"stride": "1"},
    "verify": {
        "seed": "0",
        "transpose_tol": "1e-10",
        "gradient_tol": "1e-5",
        "duality_tol": "1e-9",
        "mass_tol": "1e-10",
        "mass_drift_tol": "1e-10",
        "K0_slack": "1e-8",
        "energy_rate": "0.9",
        "positivity_scenarios": "50",
        "gradient_directions": "10",
        "duality_directions": "20",
        "transpose_pairs": "100",
    },
}


class ConfigError(ValueError):
    pass


def _read(path: str | Path | None) -> tuple[configparser.ConfigParser, Path | None]:
    """Defaults overlaid with the file at ``path``; also returns the file's directory."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.read_dict(DEFAULTS)
    if path is None:
        return cp, None
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    loaded = configparser.ConfigParser()
    loaded.optionxform = str
    try:
        loaded.read(path)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    for section in loaded.sections():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown section [{section}]")
        for key, value in loaded.items(section):
            if key not in DEFAULTS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            cp.set(section, key, value)
    return cp, path.parent


def _floats(text: str) -> list[float]:
    return [float(t) for t in re.split(r"[,\s]+", text.strip()) if t]


def parse_box(text: str, dim: int):
    """``all`` | ``none`` | ``lo:hi[, lo:hi ...]`` (one interval per axis)."""
    text = text.strip().lower()
    if text in ("all", "none"):
        return text if text == "all" else None
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != dim:
        raise ConfigError(f"control_box needs {dim} intervals, got {text!r}")
    box = []
    for part in parts:
        lo, hi = part.split(":")
        box.append((float(lo), float(hi)))
    return box


_CALL = re.compile(r"^\s*(\w+)\s*\((.*)\)\s*$")


def parse_spec(text: str) -> tuple[str, dict]:
    """``'gaussian(center=0.3 0.6, width=0.1)'`` -> ``('gaussian', {...})``."""
    text = text.strip()
    try:
        return "constant", {"value": [float(text)]}
    except ValueError:
        pass
    m = _CALL.match(text)
    if not m:
        return text, {}
    name, body = m.group(1), m.group(2).strip()
    if name == "file":
        return name, {"path": body}
    args: dict = {}
    for i, item in enumerate(a for a in body.split(",") if a.strip()):
        if "=" in item:
            key, val = item.split("=", 1)
            args[key.strip()] = _floats(val)
        else:
            args["value" if i == 0 else f"arg{i}"] = _floats(item)
    return name, args


def _scalar(args, key, default=None):
    if key in args:
        return args[key][0]
    if default is None:
        raise ConfigError(f"missing argument {key!r}")
    return default


def field_from_spec(text: str, grid: gr.Grid, base: Path | None = None) -> np.ndarray:
    name, args = parse_spec(text)
    if name == "constant":
        return np.full(grid.size, _scalar(args, "value"))
    if name == "gaussian":
        center = args.get("center", [0.5] * grid.dim)
        if len(center) == 1:
            center = center * grid.dim
        width = _scalar(args, "width", 0.1)
        amp = _scalar(args, "amp", 1.0)
        offset = _scalar(args, "base", 0.0)
        r2 = sum((x - c) ** 2 for x, c in zip(grid.centers(), center))
        return offset + amp * np.exp(-r2 / (2.0 * width**2))
    if name == "file":
        path = Path(args["path"])
        if base is not None and not path.is_absolute():
            path = base / path
        if not path.exists():
            raise ConfigError(f"field file {path} not found")
        other, values = gr.read_field(path)
        if other.cells != grid.cells:
            raise ConfigError(f"field file {path} has cells {other.cells}, expected {grid.cells}")
        return values
    raise ConfigError(f"unknown field spec {text!r}")


@dataclass
class RunConfig:
    scenario: Scenario
    cost_section: dict
    output_stride: int
    eps_sweep: list[float]
    verify: dict
    base: Path | None

    @property
    def params(self) -> fw.ModelParams:
        return self.scenario.params


def load(path: str | Path | None) -> RunConfig:
    cp, base = _read(path)
    s = cp["scenario"]
    try:
        dim = int(s["dim"])
        lengths = _floats(s["lengths"])
        cells = [int(c) for c in _floats(s["cells"])]
        if len(lengths) == 1:
            lengths = lengths * dim
        if len(cells) == 1:
            cells = cells * dim
        grid = gr.build_grid(dim, lengths, cells, parse_box(s["control_box"], dim))
        timegrid = gr.TimeGrid(float(s["T"]), int(s["N"]))
        params = fw.ModelParams(
            p=float(s["p"]),
            r=float(s["r"]),
            mu=float(s["mu"]),
            eps=float(s["eps"]),
            logistic=cp.getboolean("scenario", "logistic"),
            drift_scheme=s["drift_scheme"].strip(),
            solver=s["solver"].strip(),
        )
        u0 = field_from_spec(s["u0_spec"], grid, base)
        v0 = field_from_spec(s["v0_spec"], grid, base)
        sweep = _floats(s["eps_sweep"])
        stride = int(cp["output"]["stride"])
        verify = {k: float(v) for k, v in cp["verify"].items()}
    except (KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    return RunConfig(
        Scenario(grid, timegrid, u0, v0, params),
        dict(cp["cost"]),
        stride,
        sweep,
        verify,
        base,
    )


# ------------------------------------------------------------------- cost


def cost_setup(cfg: RunConfig):
    """``(CostParams, AdmissibleBox, PGDOptions, f0)`` from the ``[cost]`` section."""
    c = cfg.cost_section
    sc = cfg.scenario
    g, tg = sc.grid, sc.timegrid
    u_d, v_d = targets_from_spec(c["target_spec"], sc, cfg.base)
    cost = CostParams(
        gamma_u=float(c["gamma_u"]),
        gamma_v=float(c["gamma_v"]),
        gamma_f=float(c["gamma_f"]),
        delta=float(c["delta"]),
        u_d=u_d,
        v_d=v_d,
    )
    box = AdmissibleBox(float(c["f_min"]), float(c["f_max"]))
    opts = PGDOptions(
        max_iters=int(c["max_iters"]),
        tol_J=float(c["tol_J"]),
        tol_opt=float(c["tol_opt"]),
        s_init=float(c["s_init"]),
    )
    name, args = parse_spec(c["f0_spec"])
    if name == "seed":
        f0, _ = fw.seed_admissible(g, sc.u0, sc.v0, sc.params, tg)
    else:
        f0 = np.broadcast_to(field_from_spec(c["f0_spec"], g, cfg.base), (tg.N, g.size)).copy()
    return cost, box, opts, f0 * g.mask_float


def perturbed_targets(scenario: Scenario, amp: float):
    """Uncontrolled run with a smooth multiplicative perturbation."""
    base = scenario.solve(None)
    x = scenario.grid.centers()[0] / scenario.grid.lengths[0]
    return base.u * (1.0 + amp * np.sin(3.0 * np.pi * x)), base.v * (1.0 - amp * np.cos(np.pi * x))


def targets_from_spec(text: str, scenario: Scenario, base: Path | None = None):
    """``uncontrolled`` | ``perturbed(amp)`` | ``constant(c)`` | ``file(path.npz)`` with arrays ``u_d``, ``v_d``."""
    name, args = parse_spec(text)
    if name == "uncontrolled":
        run = scenario.solve(None)
        return run.u, run.v
    if name == "perturbed":
        return perturbed_targets(scenario, _scalar(args, "value", 0.1))
    if name == "constant":
        value = _scalar(args, "value")
        return value, value
    if name == "file":
        path = Path(args["path"])
        if base is not None and not path.is_absolute():
            path = base / path
        if not path.exists():
            raise ConfigError(f"target file {path} not found")
        data = np.load(path)
        return data["u_d"], data["v_d"]
    raise ConfigError(f"unknown target spec {text!r}")


def reference_page() -> str:
    """Markdown table of every key with its default."""
    lines = ["| section | key | default |", "|---|---|---|"]
    for section, keys in DEFAULTS.items():
        for key, value in keys.items():
            lines.append(f"| {section} | {key} | `{value}` |")
    return "\n".join(lines)
