"""Plans of calibration experiments and measurement sets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass(frozen=True, eq=False)
class Plan:
    """Distinct joint configurations with integer multiplicities."""

    configs: np.ndarray
    multiplicities: np.ndarray

    def __post_init__(self):
        configs = np.atleast_2d(np.asarray(self.configs, dtype=float))
        mult = np.asarray(self.multiplicities)
        if mult.ndim != 1 or len(mult) != len(configs):
            raise InputError("one multiplicity per configuration is required")
        if len(configs) == 0:
            raise InputError("a plan needs at least one configuration")
        if not np.all(np.isfinite(configs)):
            raise InputError("plan configurations must be finite")
        if not np.issubdtype(mult.dtype, np.integer):
            if not np.all(mult == np.round(mult)):
                raise InputError("multiplicities must be integers")
        mult = mult.astype(np.int64)
        if np.any(mult < 1):
            raise InputError("multiplicities must be positive")
        configs.setflags(write=False)
        mult.setflags(write=False)
        object.__setattr__(self, "configs", configs)
        object.__setattr__(self, "multiplicities", mult)

    @classmethod
    def from_configs(cls, configs) -> "Plan":
        configs = np.atleast_2d(np.asarray(configs, dtype=float))
        return cls(configs, np.ones(len(configs), dtype=np.int64))

    @property
    def m(self) -> int:
        """Total number of measurements."""
        return int(self.multiplicities.sum())

    @property
    def n_distinct(self) -> int:
        return len(self.configs)

    @property
    def n_joints(self) -> int:
        return self.configs.shape[1]

    def expanded(self) -> np.ndarray:
        """One row per measurement, in entry order."""
        return np.repeat(self.configs, self.multiplicities, axis=0)

    def permuted(self, order) -> "Plan":
        order = np.asarray(order)
        return Plan(self.configs[order], self.multiplicities[order])

    def __eq__(self, other):
        if not isinstance(other, Plan):
            return NotImplemented
        return np.array_equal(self.configs, other.configs) and np.array_equal(
            self.multiplicities, other.multiplicities
        )

    def __repr__(self):
        return f"Plan(n_distinct={self.n_distinct}, m={self.m})"


def replicate_plan(plan: Plan, k: int) -> Plan:
    """Repeat every configuration ``k`` times (a "n x k" plan)."""
    if int(k) != k or k < 1:
        raise InputError(f"replication factor must be a positive integer, got {k!r}")
    return Plan(plan.configs, plan.multiplicities * int(k))


def check_plan(model, plan: Plan, atol: float = 1e-12) -> None:
    if plan.n_joints != model.n_joints:
        raise InputError(
            f"plan has {plan.n_joints} joints per configuration, model has {model.n_joints}"
        )
    inside = model.within_limits(plan.configs, atol=atol)
    if not inside.all():
        bad = int(np.flatnonzero(~inside)[0])
        raise InputError(f"plan configuration {bad + 1} violates the joint limits")


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Records ``(q_i, p_i)`` of joint readings and measured positions."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.atleast_2d(np.asarray(self.q, dtype=float))
        p = np.atleast_2d(np.asarray(self.p, dtype=float))
        if len(q) == 0:
            raise InputError("a measurement set needs at least one record")
        if p.shape != (len(q), 3):
            raise InputError(f"positions must have shape ({len(q)}, 3), got {p.shape}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise InputError("measurement records must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    def __len__(self):
        return len(self.q)

    def __eq__(self, other):
        if not isinstance(other, MeasurementSet):
            return NotImplemented
        return np.array_equal(self.q, other.q) and np.array_equal(self.p, other.p)
