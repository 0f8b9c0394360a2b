"""Strict TOML experiment configuration.

A config file names one experiment and may override its parameters::

    experiment = "sdm-recall"
    seed = 0
    trials = 50
    output_dir = "results/sdm"
    workers = 1

    [params]
    corruption = [0.1, 0.2]

Every key is checked: unknown top-level keys and unknown parameters are
rejected, and each value must have the type of its default. Missing keys
take the registry default, and the fully resolved config is echoed into
every output.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..errors import ConfigError, UsageError

TOP_LEVEL_KEYS = ("experiment", "seed", "trials", "output_dir", "workers", "params")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int = 0
    trials: int = 1
    params: dict = field(default_factory=dict)
    output_dir: str = "results"
    workers: int = 1

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "seed": self.seed, "trials": self.trials,
                "output_dir": self.output_dir, "workers": self.workers, "params": dict(self.params)}

    def data_echo(self) -> dict:
        """The part of the config that determines data file contents.

        Worker count and output location do not change results, so they are
        left out; this keeps reruns elsewhere byte-identical.
        """
        return {"experiment": self.experiment, "seed": self.seed, "trials": self.trials,
                "params": dict(self.params)}


def _type_name(v) -> str:
    if isinstance(v, bool):
        return "boolean"
    if isinstance(v, int):
        return "integer"
    if isinstance(v, float):
        return "number"
    if isinstance(v, str):
        return "string"
    if isinstance(v, list):
        return "array"
    return type(v).__name__


def _coerce(value, default, path: str):
    """Check ``value`` against the type of ``default``; ints widen to floats."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected boolean, got {_type_name(value)}", path)
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected integer, got {_type_name(value)}", path)
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected number, got {_type_name(value)}", path)
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"expected string, got {_type_name(value)}", path)
        return value
    if isinstance(default, list):
        if not isinstance(value, list) or not value:
            raise ConfigError("expected a non-empty array", path)
        return [_coerce(v, default[0], f"{path}[{i}]") for i, v in enumerate(value)]
    raise TypeError(f"unsupported default type at {path}")


def resolve_config(raw: dict, registry) -> ExperimentConfig:
    """Validate a parsed config table against the experiment registry."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a table")
    for key in raw:
        if key not in TOP_LEVEL_KEYS:
            raise ConfigError("unknown key", key)
    if "experiment" not in raw:
        raise ConfigError("missing required key", "experiment")
    name = raw["experiment"]
    if not isinstance(name, str):
        raise ConfigError("expected string", "experiment")
    if name not in registry:
        raise UsageError(f"unknown experiment {name!r}; known: {', '.join(sorted(registry))}")
    exp = registry[name]
    seed = _coerce(raw.get("seed", 0), 0, "seed")
    if seed < 0:
        raise ConfigError("must be non-negative", "seed")
    trials = _coerce(raw.get("trials", exp.trials), 0, "trials")
    if trials < 1:
        raise ConfigError("must be at least 1", "trials")
    workers = _coerce(raw.get("workers", 1), 0, "workers")
    if workers < 1:
        raise ConfigError("must be at least 1", "workers")
    output_dir = _coerce(raw.get("output_dir", f"results/{name}"), "", "output_dir")
    given = raw.get("params", {})
    if not isinstance(given, dict):
        raise ConfigError("expected a table", "params")
    params = {}
    for key, default in exp.defaults.items():
        params[key] = _coerce(given[key], default, f"params.{key}") if key in given else default
    for key in given:
        if key not in exp.defaults:
            raise ConfigError("unknown parameter", f"params.{key}")
    if exp.validate is not None:
        exp.validate(params)
    return ExperimentConfig(name, seed, trials, params, output_dir, workers)


def load_config(path, registry) -> ExperimentConfig:
    """Parse and validate a TOML config file.

    A relative ``output_dir`` is taken relative to the config file.
    """
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    cfg = resolve_config(raw, registry)
    out = Path(cfg.output_dir)
    if not out.is_absolute():
        out = (path.resolve().parent / out).resolve()
    return ExperimentConfig(cfg.experiment, cfg.seed, cfg.trials, cfg.params, str(out), cfg.workers)
