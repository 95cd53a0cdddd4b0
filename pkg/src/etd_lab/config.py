"""Experiment/model configuration files.

The format is YAML restricted to scalars and flat lists. An MDP is either
a built-in (``mdp: kolter2`` or ``mdp: leftright``) or given inline::

    n_states: 2
    n_actions: 2
    kernel: [...]      # S*A*S numbers, row-major over (s, a, s')
    reward: [...]      # S*A numbers, row-major over (s, a)
    gamma: 0.9
    behavior: [...]    # S*A action probabilities
    target: [...]      # S*A action probabilities
    n_features: 1      # optional; features default to the identity
    features: [...]    # S*n_features numbers, row-major over (s, j)

Experiment keys are listed in ``EXPERIMENT_KEYS``.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import yaml

from .builtins import Problem, infinite_variance_example, kolter2, tightness_example
from .errors import ConfigError, EtdLabError
from .mdp import Policy, TabularMdp

MODEL_KEYS = {
    "mdp", "leftright_case", "n_states", "n_actions", "kernel", "reward", "gamma",
    "behavior", "target", "n_features", "features", "epsilon", "p",
}
EXPERIMENT_KEYS = {
    "seed", "alpha", "steps", "runs", "beta", "beta_grid", "lambda", "lambda_grid",
    "p_grid", "checkpoints",
}


class Config:
    """Parsed mapping that remembers the source line of every top-level key."""

    def __init__(self, values, lines=None, source=None):
        self.values = dict(values)
        self.lines = dict(lines or {})
        self.source = source

    def __contains__(self, key):
        return key in self.values

    def error(self, key, message):
        return ConfigError(f"{key}: {message}", self.lines.get(key), self.source)

    def get(self, key, default=None, kind=float):
        if key not in self.values:
            return default
        value = self.values[key]
        try:
            if kind is list:
                if not isinstance(value, list):
                    raise TypeError
                return [float(x) for x in value]
            if kind is int and (isinstance(value, bool) or float(value) != int(value)):
                raise TypeError
            return kind(value)
        except (TypeError, ValueError):
            expected = "a list of numbers" if kind is list else kind.__name__
            raise self.error(key, f"expected {expected}, got {value!r}") from None

    def merged(self, **overrides):
        values = dict(self.values)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return Config(values, self.lines, self.source)


def parse_config(text, source=None):
    try:
        root = yaml.compose(text)
        values = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}", line, source) from None
    if values is None:
        return Config({}, {}, source)
    if not isinstance(values, dict):
        raise ConfigError("top level must be a mapping", 1, source)
    lines = {}
    for key_node, _ in root.value:
        lines[key_node.value] = key_node.start_mark.line + 1
    unknown = set(values) - MODEL_KEYS - EXPERIMENT_KEYS
    if unknown:
        key = sorted(unknown, key=lambda k: lines.get(k, 0))[0]
        raise ConfigError(f"unknown key {key!r}", lines.get(key), source)
    return Config(values, lines, source)


def load_config(path):
    path = Path(path)
    if not path.exists() or path.is_dir():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), str(path))


def _array(cfg, key, size):
    if key not in cfg:
        raise ConfigError(f"missing required key {key!r}", None, cfg.source)
    flat = cfg.get(key, kind=list)
    if len(flat) != size:
        raise cfg.error(key, f"expected {size} numbers, got {len(flat)}")
    return np.array(flat)


def problem_from_config(cfg: Config, default="kolter2") -> Problem:
    """Build a problem from a built-in name or inline arrays."""
    name = cfg.values.get("mdp", default if "n_states" not in cfg else None)
    try:
        if name == "kolter2":
            return kolter2(cfg.get("gamma", 0.99), cfg.get("epsilon", 0.001), cfg.get("p", 0.5))
        if name == "leftright":
            case = cfg.values.get("leftright_case", "example1")
            if case == "example1":
                return tightness_example(cfg.get("epsilon", 0.01), cfg.get("gamma", 0.9))
            if case == "example2":
                return infinite_variance_example(cfg.get("gamma", 0.9))
            raise cfg.error("leftright_case", f"expected example1 or example2, got {case!r}")
        if name is not None:
            raise cfg.error("mdp", f"unknown built-in MDP {name!r}")
        S = cfg.get("n_states", kind=int)
        A = cfg.get("n_actions", kind=int)
        if S is None or A is None or S < 1 or A < 1:
            raise ConfigError("n_states and n_actions must be positive integers", None, cfg.source)
        kernel = _array(cfg, "kernel", S * A * S).reshape(S, A, S)
        reward = _array(cfg, "reward", S * A).reshape(S, A)
        gamma = cfg.get("gamma")
        if gamma is None:
            raise ConfigError("missing required key 'gamma'", None, cfg.source)
        behavior = _array(cfg, "behavior", S * A).reshape(S, A)
        target = _array(cfg, "target", S * A).reshape(S, A)
        n = cfg.get("n_features", S, kind=int)
        features = _array(cfg, "features", S * n).reshape(S, n) if "features" in cfg else np.eye(S)
        mdp = _build(cfg, "kernel", lambda: TabularMdp(kernel, reward, gamma),
                     {"discount": "gamma", "reward": "reward"})
        return Problem(
            "custom",
            mdp,
            _build(cfg, "behavior", lambda: Policy(behavior)),
            _build(cfg, "target", lambda: Policy(target)),
            features,
        )
    except ConfigError:
        raise
    except (EtdLabError, ValueError) as exc:
        raise ConfigError(str(exc), None, cfg.source) from None


def _build(cfg, key, make, hints=None):
    try:
        return make()
    except (EtdLabError, ValueError) as exc:
        message = str(exc)
        for word, hinted in (hints or {}).items():
            if message.startswith(word):
                key = hinted
        raise cfg.error(key, message) from None
