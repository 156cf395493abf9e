"""Trajectory data model, long-format CSV ingestion and state standardization."""

from __future__ import annotations

import csv
import hashlib
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, DegenerateCovariateError, SchemaError, ShapeError

STATE_COLUMN = re.compile(r"^s_(\d+)$")


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TrajectoryDataset:
    """``n`` trajectories of ``T + 1`` (state, action, reward) triples.

    ``states`` has shape ``(n, T + 1, K)``; ``actions`` and ``rewards`` have
    shape ``(n, T + 1)``. Arrays are copied and made read-only on
    construction.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    traj_ids: tuple = field(default=None)

    def __post_init__(self):
        states = _frozen(self.states, np.float64)
        actions = np.asarray(self.actions)
        rewards = _frozen(self.rewards, np.float64)
        if states.ndim != 3:
            raise ShapeError(f"states must be (n, T+1, K), got shape {states.shape}")
        n, t1, k = states.shape
        if n < 1 or t1 < 1 or k < 1:
            raise ShapeError(f"need n >= 1, T+1 >= 1, K >= 1, got {states.shape}")
        if actions.shape != (n, t1) or rewards.shape != (n, t1):
            raise ShapeError(
                f"actions {actions.shape} and rewards {rewards.shape} must be {(n, t1)}"
            )
        if not np.all(np.isfinite(states)):
            i, t = np.argwhere(~np.isfinite(states))[0][:2]
            raise DataError(f"non-finite state in trajectory {i} at step {t}")
        if not np.all(np.isfinite(rewards)):
            i, t = np.argwhere(~np.isfinite(rewards))[0]
            raise DataError(f"non-finite reward in trajectory {i} at step {t}")
        bad = (actions != 0) & (actions != 1)
        if np.any(bad):
            i, t = np.argwhere(bad)[0]
            raise DataError(f"action must be 0 or 1 (trajectory {i}, step {t})")
        ids = tuple(range(n)) if self.traj_ids is None else tuple(self.traj_ids)
        if len(ids) != n:
            raise ShapeError(f"{len(ids)} trajectory ids for {n} trajectories")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", _frozen(actions, np.int64))
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "traj_ids", ids)

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def T_plus_1(self) -> int:
        return self.states.shape[1]

    @property
    def K(self) -> int:
        return self.states.shape[2]

    def returns(self) -> np.ndarray:
        """Per-trajectory summed reward ``G_i``."""
        return self.rewards.sum(axis=1)

    def __eq__(self, other):
        if not isinstance(other, TrajectoryDataset):
            return NotImplemented
        return (
            self.traj_ids == other.traj_ids
            and np.array_equal(self.states, other.states)
            and np.array_equal(self.actions, other.actions)
            and np.array_equal(self.rewards, other.rewards)
        )

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for a in (self.states, self.actions, self.rewards):
            h.update(str(a.shape).encode())
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()[:16]

    def take(self, index) -> "TrajectoryDataset":
        index = np.asarray(index)
        return TrajectoryDataset(
            self.states[index],
            self.actions[index],
            self.rewards[index],
            tuple(self.traj_ids[i] for i in index),
        )


DEFAULT_SCHEMA = {"traj_id": "traj_id", "t": "t", "action": "action", "reward": "reward"}


def _parse_float(text, row, column):
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise DataError(f"row {row}: column {column!r} is not a number: {text!r}", row=row)
    if not math.isfinite(value):
        raise DataError(f"row {row}: non-finite value in column {column!r}", row=row)
    return value


def load_trajectories(path, schema: Mapping | None = None) -> TrajectoryDataset:
    """Read a long-format CSV (one row per trajectory step).

    ``schema`` maps the canonical names ``traj_id``, ``t``, ``action``,
    ``reward`` to the file's column names; an optional ``states`` entry lists
    the state columns in order. Without it, columns named ``s_1 .. s_K`` are
    used. Rows are numbered from 1, excluding the header, in error messages.
    """
    names = dict(DEFAULT_SCHEMA)
    state_cols = None
    if schema:
        schema = dict(schema)
        state_cols = schema.pop("states", None)
        names.update(schema)

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file")
        header = [h.strip() for h in header]
        col = {h: j for j, h in enumerate(header)}
        missing = [v for v in names.values() if v not in col]
        if state_cols is None:
            found = sorted(
                (int(m.group(1)), h) for h in header if (m := STATE_COLUMN.match(h))
            )
            if [i for i, _ in found] != list(range(1, len(found) + 1)):
                raise SchemaError(f"{path}: state columns must be s_1..s_K, found {[h for _, h in found]}")
            state_cols = [h for _, h in found]
        missing += [s for s in state_cols if s not in col]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {missing}")
        if not state_cols:
            raise SchemaError(f"{path}: no state columns")

        j_id, j_t = col[names["traj_id"]], col[names["t"]]
        j_a, j_r = col[names["action"]], col[names["reward"]]
        j_s = [col[s] for s in state_cols]
        records = []
        for row, fields in enumerate(reader, start=1):
            if not fields:
                continue
            if len(fields) != len(header):
                raise DataError(f"row {row}: expected {len(header)} fields, got {len(fields)}", row=row)
            try:
                t = int(fields[j_t])
            except ValueError:
                raise DataError(f"row {row}: step index {fields[j_t]!r} is not an integer", row=row)
            a = _parse_float(fields[j_a], row, names["action"])
            if a not in (0.0, 1.0):
                raise DataError(f"row {row}: action must be 0 or 1, got {fields[j_a]!r}", row=row)
            r = _parse_float(fields[j_r], row, names["reward"])
            s = [_parse_float(fields[j], row, header[j]) for j in j_s]
            records.append((fields[j_id].strip(), t, s, int(a), r, row))

    if not records:
        raise ShapeError(f"{path}: no data rows")

    ids = [rec[0] for rec in records]
    try:
        keys = {i: int(i) for i in ids}
    except ValueError:
        keys = {i: i for i in ids}
    records.sort(key=lambda rec: (keys[rec[0]], rec[1]))

    groups: dict = {}
    for rec in records:
        groups.setdefault(keys[rec[0]], []).append(rec)
    lengths = {len(g) for g in groups.values()}
    if len(lengths) != 1:
        raise ShapeError(f"{path}: ragged trajectories, lengths {sorted(lengths)}")
    for g in groups.values():
        ts = [rec[1] for rec in g]
        if len(set(ts)) != len(ts):
            dup = next(rec for rec in g if ts.count(rec[1]) > 1)
            raise DataError(f"row {dup[5]}: duplicate step {dup[1]} in trajectory {dup[0]}", row=dup[5])

    n, t1, k = len(groups), lengths.pop(), len(state_cols)
    states = np.array([rec[2] for rec in records], dtype=np.float64).reshape(n, t1, k)
    actions = np.array([rec[3] for rec in records], dtype=np.int64).reshape(n, t1)
    rewards = np.array([rec[4] for rec in records], dtype=np.float64).reshape(n, t1)
    return TrajectoryDataset(states, actions, rewards, tuple(groups))


def write_trajectories(dataset: TrajectoryDataset, path) -> Path:
    """Write ``traj_id,t,s_1..s_K,action,reward`` rows sorted by (traj_id, t).

    Floats are written with ``repr`` so a reload is bit-exact.
    """
    path = Path(path)
    header = ["traj_id", "t"] + [f"s_{k + 1}" for k in range(dataset.K)] + ["action", "reward"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, tid in enumerate(dataset.traj_ids):
            for t in range(dataset.T_plus_1):
                w.writerow(
                    [tid, t]
                    + [repr(float(x)) for x in dataset.states[i, t]]
                    + [int(dataset.actions[i, t]), repr(float(dataset.rewards[i, t]))]
                )
    return path


def standardize_states(dataset: TrajectoryDataset):
    """Center and scale each state dimension using moments pooled over all (i, t).

    Returns ``(standardized, mean, scale)``; ``scale`` is the population
    standard deviation. Invert with :func:`unstandardize_states`.
    """
    flat = dataset.states.reshape(-1, dataset.K)
    mean = flat.mean(axis=0)
    scale = flat.std(axis=0)
    for k, sd in enumerate(scale):
        if not sd > 0:
            raise DegenerateCovariateError(f"state dimension s_{k + 1} has zero variance", dimension=k + 1)
    out = TrajectoryDataset((dataset.states - mean) / scale, dataset.actions, dataset.rewards, dataset.traj_ids)
    return out, mean, scale


def unstandardize_states(dataset: TrajectoryDataset, mean: Sequence[float], scale: Sequence[float]):
    states = dataset.states * np.asarray(scale) + np.asarray(mean)
    return TrajectoryDataset(states, dataset.actions, dataset.rewards, dataset.traj_ids)
