"""Synthetic trajectories from a linear-Gaussian autoregressive environment.

Actions follow a logistic behavioral policy and the per-step reward is
``-s[1] * a`` (second state coordinate, zero-based index 1).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.special import expit

from .data import TrajectoryDataset
from .errors import ConfigError


def reward(s_t, a_t, s_next=None) -> float:
    """Per-step reward ``R(s_t, a_t, s_{t+1}) = -s_{t,2} * a_t``.

    ``s_next`` is accepted for signature fidelity; the reward ignores it.
    """
    return -float(s_t[1]) * a_t


def _tuple(x):
    return tuple(float(v) for v in x)


@dataclass(frozen=True)
class SimConfig:
    n: int = 1000
    T: int = 3
    K: int = 2
    b_true: tuple = (0.0, 0.5)
    init_mean: float = 0.0
    init_sd: float = 1.0
    trans_autoreg: tuple = (0.5, 0.5)
    trans_action_effect: tuple = (0.0, -0.5)
    trans_noise_sd: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("b_true", "trans_autoreg", "trans_action_effect"):
            object.__setattr__(self, name, _tuple(getattr(self, name)))
        self.validate()

    def validate(self):
        if int(self.K) != self.K or self.K < 2:
            raise ConfigError(f"K must be an integer >= 2 (reward reads s_2), got {self.K}")
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError(f"n must be a positive integer, got {self.n}")
        if int(self.T) != self.T or self.T < 1:
            raise ConfigError(f"T must be an integer >= 1, got {self.T}")
        for name in ("b_true", "trans_autoreg", "trans_action_effect"):
            v = getattr(self, name)
            if len(v) != self.K:
                raise ConfigError(f"{name} has length {len(v)}, expected K={self.K}")
            if not np.all(np.isfinite(v)):
                raise ConfigError(f"{name} must be finite")
        if not (self.trans_noise_sd > 0 and np.isfinite(self.trans_noise_sd)):
            raise ConfigError(f"trans_noise_sd must be positive, got {self.trans_noise_sd}")
        if not (self.init_sd >= 0 and np.isfinite(self.init_sd)):
            raise ConfigError(f"init_sd must be nonnegative, got {self.init_sd}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError(f"seed must be an unsigned integer, got {self.seed}")

    def replace(self, **changes) -> "SimConfig":
        d = asdict(self)
        d.update(changes)
        return SimConfig(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown simulation parameter(s): {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def load_sim_config(path) -> SimConfig:
    """Read a SimConfig from JSON or YAML.

    A top-level ``simulation`` mapping is used when present, so the same file
    can carry other sections.
    """
    from .config import read_config_file

    doc = read_config_file(path)
    if "simulation" in doc:
        doc = doc["simulation"]
    return SimConfig.from_dict(doc)


def simulate(config: SimConfig) -> TrajectoryDataset:
    """Draw ``config.n`` trajectories of ``T + 1`` steps.

    ``S_0 ~ N(init_mean, init_sd^2 I)``, ``A_t ~ Bernoulli(expit(b_true . S_t))``
    and ``S_{t+1} = autoreg * S_t + action_effect * A_t + noise``. The reward at
    the final step uses one extra simulated transition so every trajectory
    carries exactly ``T + 1`` triples.
    """
    config.validate()
    rng = np.random.Generator(np.random.PCG64(config.seed))
    n, t1, k = config.n, config.T + 1, config.K
    b = np.asarray(config.b_true)
    rho = np.asarray(config.trans_autoreg)
    eff = np.asarray(config.trans_action_effect)

    states = np.empty((n, t1, k))
    actions = np.empty((n, t1), dtype=np.int64)
    rewards = np.empty((n, t1))
    s = rng.normal(config.init_mean, config.init_sd, size=(n, k))
    for t in range(t1):
        a = (rng.random(n) < expit(s @ b)).astype(np.int64)
        s_next = rho * s + eff * a[:, None] + rng.normal(0.0, config.trans_noise_sd, size=(n, k))
        states[:, t] = s
        actions[:, t] = a
        rewards[:, t] = -s[:, 1] * a
        s = s_next
    return TrajectoryDataset(states, actions, rewards)
