"""Experiment configuration: one strict JSON document.

Every section is optional and falls back to the defaults below; unknown
keys anywhere are rejected.  Example::

    {
      "scenario": {"T": 8, "drift_amplitude": 3.0},
      "constants": {"c_heat": 2, "c_id": 1, "c_s": 0.1, "c_b": 0.1},
      "alpha": 0.5,
      "prior": {"kind": "heat", "insulated": true},
      "schedule": {"n_iters": 10, "dtau": 0.1},
      "metrics": {"gamma_r": 0.1, "gamma_d": 0.1, "p": 4},
      "denoiser": {"eta": 0.2},
      "L": 50,
      "alphas": [0, 0.25, 0.5, 0.75, 1],
      "seeds": [0, 1, 2],
      "out": "runs"
    }
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .core import BaseConstants, OperatorSchedule, PhysAttnError, derive_params
from .harness import DenoiserConfig, StoryScenario
from .metrics import MetricConfig
from .priors import PriorSpec


class ConfigError(PhysAttnError, ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: StoryScenario = field(default_factory=StoryScenario)
    constants: BaseConstants = field(default_factory=BaseConstants)
    alpha: float = 0.5
    prior: PriorSpec = field(default_factory=PriorSpec)
    schedule: OperatorSchedule = field(default_factory=OperatorSchedule)
    metrics: MetricConfig = field(default_factory=MetricConfig)
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    L: int = 50
    alphas: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    seeds: tuple = tuple(range(20))
    out: str = "runs"

    @property
    def params(self):
        return derive_params(self.alpha, self.constants)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return dataclasses.replace(self, seeds=(int(seed),))


_SECTIONS = {
    "scenario": StoryScenario,
    "constants": BaseConstants,
    "prior": PriorSpec,
    "schedule": OperatorSchedule,
    "metrics": MetricConfig,
    "denoiser": DenoiserConfig,
}
_EXCLUDED = {"scenario": {"seed"}}


def _tupled(value):
    if isinstance(value, list):
        return tuple(_tupled(v) for v in value)
    return value


def _section(name: str, cls, raw) -> object:
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be a JSON object")
    allowed = {f.name for f in dataclasses.fields(cls)} - _EXCLUDED.get(name, set())
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name!r}: {', '.join(unknown)}")
    try:
        return cls(**{k: _tupled(v) for k, v in raw.items()})
    except (PhysAttnError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid {name!r} section: {exc}") from None


def parse_config(payload: dict) -> ExperimentConfig:
    if not isinstance(payload, dict):
        raise ConfigError("configuration must be a JSON object")
    allowed = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(payload) - allowed)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    kwargs = {}
    for key, value in payload.items():
        if key in _SECTIONS:
            kwargs[key] = _section(key, _SECTIONS[key], value)
        elif key in ("alphas", "seeds"):
            if not isinstance(value, list):
                raise ConfigError(f"{key!r} must be a list")
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    cfg = ExperimentConfig(**kwargs)
    _validate(cfg)
    return cfg


def _is_real(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _validate(cfg: ExperimentConfig) -> None:
    if not _is_real(cfg.alpha) or not 0.0 <= cfg.alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {cfg.alpha!r}")
    for a in cfg.alphas:
        if not _is_real(a) or not 0.0 <= a <= 1.0:
            raise ConfigError(f"alphas must lie in [0, 1], got {a!r}")
    for s in cfg.seeds:
        if not isinstance(s, int) or isinstance(s, bool) or not 0 <= s < 2**64:
            raise ConfigError(f"seeds must be unsigned 64-bit integers, got {s!r}")
    if not isinstance(cfg.L, int) or isinstance(cfg.L, bool) or cfg.L < 1:
        raise ConfigError(f"L must be a positive integer, got {cfg.L!r}")
    if not isinstance(cfg.out, str):
        raise ConfigError("out must be a string path")


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc.msg} (line {exc.lineno}, column {exc.colno})") from None
    return parse_config(payload)
