"""JSON run configuration with documented defaults and dotted-key overrides.

A config file holds up to five sections; every key is optional::

    {
      "run":         {"reward_threshold": 0.9999, "max_episodes": 200, ...},
      "search":      {"c_puct": 1.0, "n_evaluate": 50, "policy_mode": "power"},
      "objective":   {"lam": 0.1, "max_iterations": 200, "restarts": 4, ...},
      "constraints": {"max_length": 30, "forbid_nested_trig": true, ...},
      "model":       {"embed_dim": 64, "layers": 2, "entropy_term_enabled": true, ...}
    }

Unknown keys are rejected so typos cannot silently fall back to defaults.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import fields, replace
from pathlib import Path

from .constraints import ConstraintConfig
from .network import ModelConfig
from .objective import ConstOptOptions
from .selfsearch import RunConfig

DEFAULTS = {
    "run": {
        "reward_threshold": 0.9999,
        "max_episodes": 200,
        "max_wall_seconds": None,  # null means no wall-clock budget
        "tau_early": 1.0,
        "tau_late": 1.0,
        "switch_move": 4,
        "batch_size": 64,
        "buffer_capacity": 1000,
        "episodes_per_generation": 1,
        "tree_scope": "run",
        "restart_patience": 0,
        "stop_on_simulation_hit": True,
    },
    "search": {"c_puct": 1.0, "n_evaluate": 50, "policy_mode": "power", "prior_mix": 0.0},
    "objective": {
        "lam": 0.1,
        "max_iterations": 200,
        "restarts": 4,
        "init_range": [-2.0, 2.0],
        "gradient_step": 1e-6,
        "convergence_tol": 1e-10,
    },
    "constraints": {
        "max_length": 30,
        "forbid_inverse_chain": True,
        "forbid_nested_trig": True,
        "forbid_negative_into_log_sqrt": True,
        "trig_scope": "ancestor",
    },
    "model": {
        "embed_dim": 64,
        "layers": 2,
        "heads": 4,
        "xi": 1e-4,
        "learning_rate": 1e-3,
        "entropy_term_enabled": True,
        "optimizer": "sgd",
    },
}


# Tuned for recovery at desk scale: stronger exploration, uniform prior mass
# mixed in so a sharpened policy cannot starve siblings, adaptive steps so the
# value head tracks episode rewards within a few hundred episodes.  The
# narrower network and 20-token cap roughly double simulations per second;
# targets longer than 20 tokens are out of reach under this preset.
PRESETS = {
    "defaults": {},
    "recovery": {
        "search": {"c_puct": 3.0, "prior_mix": 0.25},
        "model": {"optimizer": "adam", "learning_rate": 1e-3, "embed_dim": 32},
        "constraints": {"max_length": 20},
        "run": {"max_episodes": 100000},
    },
}


class ConfigError(ValueError):
    pass


def _merge(base, extra, where=""):
    for k, v in extra.items():
        path = f"{where}.{k}" if where else k
        if k not in base:
            raise ConfigError(f"unknown config key {path!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"config key {path!r} must be an object")
            _merge(base[k], v, path)
        else:
            base[k] = v


def load_config(path=None, overrides=None, preset=None) -> dict:
    """Defaults, then ``preset``, then the JSON file at ``path``, then ``overrides``.

    ``overrides`` maps dotted keys (``"search.c_puct"``) or section names to values.
    """
    cfg = copy.deepcopy(DEFAULTS)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; available: {', '.join(PRESETS)}")
        _merge(cfg, copy.deepcopy(PRESETS[preset]))
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        _merge(cfg, data)
    for key, value in (overrides or {}).items():
        section, _, name = key.partition(".")
        _merge(cfg, {section: {name: value}} if name else {section: value})
    return cfg


def _pick(cls, section):
    names = {f.name for f in fields(cls)}
    return {k: v for k, v in section.items() if k in names}


def build(cfg: dict, seed: int, vocab_size: int):
    """Typed ``(RunConfig, ModelConfig)`` from a merged config dict."""
    obj = dict(cfg["objective"])
    lam = obj.pop("lam")
    obj["init_range"] = tuple(obj["init_range"])
    try:
        const_opts = ConstOptOptions(**obj)
        constraints = ConstraintConfig(**cfg["constraints"])
        run = dict(cfg["run"])
        if run["max_wall_seconds"] is None:
            run["max_wall_seconds"] = math.inf
        run_cfg = RunConfig(**_pick(RunConfig, run), **_pick(RunConfig, cfg["search"]), lam=lam,
                            seed=seed, const_opts=const_opts, constraints=constraints)
        model_cfg = ModelConfig(vocab_size=vocab_size, max_seq_len=constraints.max_length + 1,
                                **cfg["model"])
    except TypeError as e:
        raise ConfigError(str(e)) from None
    return run_cfg, model_cfg


def with_vocab(model_cfg: ModelConfig, vocab_size: int) -> ModelConfig:
    return replace(model_cfg, vocab_size=vocab_size)
