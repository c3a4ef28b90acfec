"""Experiment configuration files (YAML) and the shipped presets."""

from __future__ import annotations

import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import yaml

from .baselines import GreedyMaxAgePolicy, StationaryPolicy
from .dpp import DppPolicy
from .model import UserParams
from .sim import ConfigError, SimConfig, SweepAxis

OUTPUT_ENV = "AOI_DPP_OUTPUT_DIR"
PRESETS = ("fig1", "fig2", "fig3")
FORMATS = ("trace", "sweep", "summary")

DEFAULTS = {
    "horizon": 1_000_000,
    "seed": 0,
    "replications": 20,
    "metrics_stride": 100,
    "c_sample": 1.0,
    "c_transmit": 1.0,
    "tolerance": 0.05,
    "oracle_cap_factor": 10,
}


class ConfigNotFoundError(ConfigError, FileNotFoundError):
    pass


class ConfigParseError(ConfigError):
    pass


class ConfigValidationError(ConfigError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.field = path


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    sim: SimConfig
    sweep: Optional[SweepAxis]
    out_dir: Path
    formats: tuple[str, ...] = FORMATS
    tolerance: float = DEFAULTS["tolerance"]
    oracle_cap_factor: int = DEFAULTS["oracle_cap_factor"]


def default_output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "out"))


def preset_path(name: str) -> Path:
    if name not in PRESETS:
        raise ConfigNotFoundError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return Path(str(resources.files("aoi_dpp") / "presets" / f"{name}.yaml"))


def load_config(path, overrides: Optional[dict] = None) -> ExperimentSpec:
    """Read an experiment file (or a preset name) and validate it.

    ``overrides`` replaces top-level keys after parsing, e.g. the CLI's
    ``--seed`` or ``--horizon``.
    """
    if isinstance(path, str) and path in PRESETS:
        path = preset_path(path)
    path = Path(path)
    if not path.is_file():
        raise ConfigNotFoundError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigParseError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigParseError(f"{path}: top level must be a mapping")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return parse_spec(raw)


def _num(raw: dict, key: str, path: str, default: Any = None, *, integer: bool = False,
         lo: Optional[float] = None, hi: Optional[float] = None, lo_open: bool = False):
    val = raw.get(key, default)
    where = f"{path}{key}"
    if val is None:
        raise ConfigValidationError(where, "is required")
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigValidationError(where, f"must be a number, got {val!r}")
    if integer:
        if float(val) != int(val):
            raise ConfigValidationError(where, f"must be an integer, got {val!r}")
        val = int(val)
    else:
        val = float(val)
    if lo is not None and (val <= lo if lo_open else val < lo):
        raise ConfigValidationError(where, f"must be {'>' if lo_open else '>='} {lo}, got {val}")
    if hi is not None and val > hi:
        raise ConfigValidationError(where, f"must be <= {hi}, got {val}")
    return val


def _users(raw: dict) -> tuple[UserParams, ...]:
    users = raw.get("users")
    if not isinstance(users, list) or not users:
        raise ConfigValidationError("users", "must be a nonempty list")
    defaults = raw.get("defaults") or {}
    c_s = _num(defaults, "c_sample", "defaults.", DEFAULTS["c_sample"], lo=0)
    c_tr = _num(defaults, "c_transmit", "defaults.", DEFAULTS["c_transmit"], lo=0)
    out = []
    for k, u in enumerate(users):
        path = f"users[{k}]."
        if not isinstance(u, dict):
            raise ConfigValidationError(f"users[{k}]", "must be a mapping")
        out.append(UserParams(
            p=_num(u, "p", path, lo=0, hi=1),
            a_max=_num(u, "a_max", path, lo=0, lo_open=True),
            c_sample=_num(u, "c_sample", path, c_s, lo=0),
            c_transmit=_num(u, "c_transmit", path, c_tr, lo=0),
        ))
    return tuple(out)


def _policy(raw: dict, n: int):
    pol = raw.get("policy")
    if not isinstance(pol, dict):
        raise ConfigValidationError("policy", "must be a mapping with a 'kind' (dpp, greedy, stationary)")
    kind = pol.get("kind", "dpp")
    if kind == "dpp":
        return DppPolicy.with_v(_num(pol, "v", "policy.", lo=0))
    if kind == "greedy":
        return GreedyMaxAgePolicy()
    if kind == "stationary":
        qs = [pol.get("q_sample"), pol.get("q_retx", [0.0] * n)]
        for name, q in zip(("q_sample", "q_retx"), qs):
            if not isinstance(q, list) or len(q) != n:
                raise ConfigValidationError(f"policy.{name}", f"must be a list of {n} probabilities")
            for k, x in enumerate(q):
                if isinstance(x, bool) or not isinstance(x, (int, float)) or not 0 <= x <= 1:
                    raise ConfigValidationError(f"policy.{name}[{k}]", f"must be a probability, got {x!r}")
        if sum(qs[0]) + sum(qs[1]) > 1 + 1e-12:
            raise ConfigValidationError("policy", "q_sample and q_retx must sum to at most 1")
        return StationaryPolicy(tuple(qs[0]), tuple(qs[1]))
    raise ConfigValidationError("policy.kind", f"unknown policy {kind!r}")


def _sweep(raw: dict, n: int, policy) -> Optional[SweepAxis]:
    sw = raw.get("sweep")
    if sw is None:
        return None
    if not isinstance(sw, dict):
        raise ConfigValidationError("sweep", "must be a mapping with 'axis' and 'values'")
    axis, values = sw.get("axis"), sw.get("values")
    if axis not in ("v", "p"):
        raise ConfigValidationError("sweep.axis", f"must be 'v' or 'p', got {axis!r}")
    if not isinstance(values, list) or not values:
        raise ConfigValidationError("sweep.values", "must be a nonempty list")
    if axis == "v" and not isinstance(policy, DppPolicy):
        raise ConfigValidationError("sweep.axis", "a v sweep requires the dpp policy")
    for k, val in enumerate(values):
        items = val if isinstance(val, list) else [val]
        if axis == "p" and isinstance(val, list) and len(val) != n:
            raise ConfigValidationError(f"sweep.values[{k}]", f"needs {n} probabilities")
        for x in items:
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                raise ConfigValidationError(f"sweep.values[{k}]", f"must be numeric, got {x!r}")
            if axis == "p" and not 0 <= x <= 1:
                raise ConfigValidationError(f"sweep.values[{k}]", f"must be in [0, 1], got {x}")
            if axis == "v" and x < 0:
                raise ConfigValidationError(f"sweep.values[{k}]", f"must be >= 0, got {x}")
    return SweepAxis(axis, tuple(tuple(v) if isinstance(v, list) else v for v in values))


def parse_spec(raw: dict) -> ExperimentSpec:
    name = raw.get("name")
    if not isinstance(name, str) or not name.strip():
        raise ConfigValidationError("name", "must be a nonempty string")
    users = _users(raw)
    policy = _policy(raw, len(users))
    sim = SimConfig(
        users=users,
        policy=policy,
        horizon=_num(raw, "horizon", "", DEFAULTS["horizon"], integer=True, lo=1),
        seed=_num(raw, "seed", "", DEFAULTS["seed"], integer=True, lo=0, hi=2 ** 64 - 1),
        replications=_num(raw, "replications", "", DEFAULTS["replications"], integer=True, lo=1),
        metrics_stride=_num(raw, "metrics_stride", "", DEFAULTS["metrics_stride"], integer=True, lo=1),
    )
    output = raw.get("output") or {}
    if not isinstance(output, dict):
        raise ConfigValidationError("output", "must be a mapping")
    formats = output.get("formats", list(FORMATS))
    if not isinstance(formats, list) or any(f not in FORMATS for f in formats):
        raise ConfigValidationError("output.formats", f"must be a list drawn from {', '.join(FORMATS)}")
    out_dir = Path(output["dir"]) if output.get("dir") else default_output_root() / name
    return ExperimentSpec(
        name=name,
        sim=sim,
        sweep=_sweep(raw, len(users), policy),
        out_dir=out_dir,
        formats=tuple(formats),
        tolerance=_num(raw, "tolerance", "", DEFAULTS["tolerance"], lo=0),
        oracle_cap_factor=_num(raw, "oracle_cap_factor", "", DEFAULTS["oracle_cap_factor"],
                               integer=True, lo=3),
    )
