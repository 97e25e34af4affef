"""Serial-chain kinematics: forward position and identification Jacobians.

A manipulator is a flat, ordered list of elementary transforms (a
translation or a rotation about one frame axis). Each transform is driven
by a constant, a joint variable (optionally shifted by an offset
parameter) or a geometric parameter. DH chains are a special case.

All evaluators broadcast: ``params`` may have shape ``(..., P)`` and ``q``
shape ``(..., n_joints)``; leading dimensions broadcast against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import InputError, NumericalError

AXES = {"x": 0, "y": 1, "z": 2}
KINDS = ("trans", "rot")
DRIVERS = ("const", "joint", "param")
UNITS = {"trans": "m", "rot": "rad"}

# Central-difference step policy: h = max(FD_ABS_STEP, FD_REL_STEP * |nominal|).
FD_ABS_STEP = 1e-7
FD_REL_STEP = 1e-7


@dataclass(frozen=True)
class ElementaryTransform:
    """One multiplier of the chain product.

    ``joint`` is 0-based. ``param`` names the driving parameter for
    ``driver == "param"`` or the additive joint offset for ``driver == "joint"``.
    """

    kind: str
    axis: str
    driver: str
    value: float = 0.0
    joint: int | None = None
    param: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown transform kind {self.kind!r}")
        if self.axis not in AXES:
            raise InputError(f"unknown axis {self.axis!r}")
        if self.driver not in DRIVERS:
            raise InputError(f"unknown driver {self.driver!r}")
        if self.driver == "const" and not math.isfinite(self.value):
            raise InputError("constant transform value must be finite")
        if self.driver == "joint" and (self.joint is None or self.joint < 0):
            raise InputError("joint driver needs a non-negative joint index")
        if self.driver == "param" and not self.param:
            raise InputError("param driver needs a parameter name")


@dataclass(frozen=True)
class Parameter:
    name: str
    nominal: float
    unit: str
    identifiable: bool = True


@dataclass(frozen=True)
class KinematicModel:
    """Immutable manipulator description.

    ``joint_limits`` is a tuple of ``(min, max)`` pairs in radians (meters
    for prismatic joints); it defaults to ``[-pi, pi]`` for every joint.
    ``workspace`` is an optional axis-aligned box ``((xmin, xmax), (ymin,
    ymax), (zmin, zmax))`` on the end-effector position.
    """

    chain: tuple[ElementaryTransform, ...]
    parameters: tuple[Parameter, ...]
    joint_limits: tuple[tuple[float, float], ...] | None = None
    workspace: tuple[tuple[float, float], ...] | None = None
    name: str = ""
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "chain", tuple(self.chain))
        object.__setattr__(self, "parameters", tuple(self.parameters))
        names = [p.name for p in self.parameters]
        if len(set(names)) != len(names):
            raise InputError("duplicate parameter names")
        for p in self.parameters:
            if not math.isfinite(p.nominal):
                raise InputError(f"parameter {p.name!r} nominal must be finite")

        joints = [t.joint for t in self.chain if t.driver == "joint"]
        n = len(joints)
        if sorted(joints) != list(range(n)):
            raise InputError(
                "every joint index 0..n_joints-1 must be driven by exactly one transform"
            )

        usage: dict[str, int] = {}
        index = {name: k for k, name in enumerate(names)}
        for e, t in enumerate(self.chain):
            if t.param is None:
                continue
            if t.param not in index:
                raise InputError(f"transform {e} references unknown parameter {t.param!r}")
            if t.param in usage:
                raise InputError(f"parameter {t.param!r} is used by more than one transform")
            usage[t.param] = e
            unit = self.parameters[index[t.param]].unit
            if unit != UNITS[t.kind]:
                raise InputError(
                    f"parameter {t.param!r} has unit {unit!r} but drives a {t.kind} "
                    f"transform (expects {UNITS[t.kind]!r})"
                )
        unused = [nm for nm in names if nm not in usage]
        if unused:
            raise InputError(f"parameters not referenced by the chain: {unused}")

        if self.joint_limits is None:
            limits = tuple((-math.pi, math.pi) for _ in range(n))
        else:
            limits = tuple((float(lo), float(hi)) for lo, hi in self.joint_limits)
        if len(limits) != n:
            raise InputError(f"expected {n} joint limit pairs, got {len(limits)}")
        for j, (lo, hi) in enumerate(limits):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise InputError(f"joint {j + 1} limits must be finite with min < max")
        object.__setattr__(self, "joint_limits", limits)

        if self.workspace is not None:
            box = tuple((float(lo), float(hi)) for lo, hi in self.workspace)
            if len(box) != 3 or any(not lo < hi for lo, hi in box):
                raise InputError("workspace must be three (min, max) pairs with min < max")
            object.__setattr__(self, "workspace", box)

        self._cache["param_element"] = np.array([usage[nm] for nm in names], dtype=int)
        self._cache["element_param"] = tuple(
            index[t.param] if t.param is not None else -1 for t in self.chain
        )

    # ------------------------------------------------------------------ info

    @property
    def n_joints(self) -> int:
        return len(self.joint_limits)

    @property
    def n_parameters(self) -> int:
        return len(self.parameters)

    @cached_property
    def parameter_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.parameters)

    @cached_property
    def nominal(self) -> np.ndarray:
        arr = np.array([p.nominal for p in self.parameters], dtype=float)
        arr.setflags(write=False)
        return arr

    @cached_property
    def identifiable_mask(self) -> np.ndarray:
        arr = np.array([p.identifiable for p in self.parameters], dtype=bool)
        arr.setflags(write=False)
        return arr

    @cached_property
    def identifiable_indices(self) -> np.ndarray:
        return np.flatnonzero(self.identifiable_mask)

    @property
    def n_identifiable(self) -> int:
        return int(self.identifiable_mask.sum())

    @cached_property
    def identifiable_names(self) -> tuple[str, ...]:
        return tuple(self.parameter_names[k] for k in self.identifiable_indices)

    @cached_property
    def limits_array(self) -> np.ndarray:
        return np.array(self.joint_limits, dtype=float)

    def parameter_index(self, name: str) -> int:
        try:
            return self.parameter_names.index(name)
        except ValueError:
            raise InputError(f"unknown parameter {name!r}") from None

    def with_identifiable(self, mask) -> "KinematicModel":
        """Return a copy whose identifiability flags follow ``mask``.

        ``mask`` is either a boolean sequence over all parameters or an
        iterable of parameter names to mark identifiable.
        """
        if isinstance(mask, (list, tuple, np.ndarray)) and len(mask) == self.n_parameters and all(
            isinstance(v, (bool, np.bool_)) for v in mask
        ):
            flags = [bool(v) for v in mask]
        else:
            wanted = set(mask)
            unknown = wanted - set(self.parameter_names)
            if unknown:
                raise InputError(f"unknown parameters {sorted(unknown)}")
            flags = [p.name in wanted for p in self.parameters]
        params = tuple(
            Parameter(p.name, p.nominal, p.unit, flag) for p, flag in zip(self.parameters, flags)
        )
        return KinematicModel(self.chain, params, self.joint_limits, self.workspace, self.name)

    def with_nominal(self, values) -> "KinematicModel":
        values = self.check_params(values)
        params = tuple(
            Parameter(p.name, float(v), p.unit, p.identifiable)
            for p, v in zip(self.parameters, values)
        )
        return KinematicModel(self.chain, params, self.joint_limits, self.workspace, self.name)

    # ------------------------------------------------------------ validation

    def check_params(self, params) -> np.ndarray:
        params = np.asarray(params, dtype=float)
        if params.ndim == 0 or params.shape[-1] != self.n_parameters:
            raise InputError(
                f"parameter vector must have length {self.n_parameters}, got shape {params.shape}"
            )
        return params

    def check_q(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.ndim == 0 or q.shape[-1] != self.n_joints:
            raise InputError(f"configuration must have {self.n_joints} joints, got shape {q.shape}")
        if not np.all(np.isfinite(q)):
            raise InputError("configuration entries must be finite")
        return q

    def within_limits(self, q, atol: float = 0.0) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        lim = self.limits_array
        return np.all((q >= lim[:, 0] - atol) & (q <= lim[:, 1] + atol), axis=-1)

    def within_workspace(self, positions) -> np.ndarray:
        positions = np.asarray(positions, dtype=float)
        if self.workspace is None:
            return np.ones(positions.shape[:-1], dtype=bool)
        box = np.array(self.workspace)
        return np.all((positions >= box[:, 0]) & (positions <= box[:, 1]), axis=-1)


# ---------------------------------------------------------------- kernels


def _element_value(t: ElementaryTransform, k: int, params, q):
    if t.driver == "const":
        return np.float64(t.value)
    if t.driver == "param":
        return params[..., k]
    v = q[..., t.joint]
    if k >= 0:
        v = v + params[..., k]
    return v


def chain_kinematics(model: KinematicModel, params, q, columns: Sequence[int] | None = None):
    """Evaluate position and, optionally, analytic parameter derivatives.

    Walks the chain keeping the frame as three column vectors plus an
    origin. The derivative of the end point with respect to the value of a
    translation is the world direction of its axis; for a rotation it is
    ``axis x (p - origin)``. Returns ``(p, J)`` with ``J`` of shape
    ``(..., 3, len(columns))`` or ``None`` when ``columns`` is ``None``.
    """
    params = np.asarray(params, dtype=float)
    q = np.asarray(q, dtype=float)
    batch = np.broadcast_shapes(params.shape[:-1], q.shape[:-1])
    eye = np.eye(3)
    cols = [np.broadcast_to(eye[i], batch + (3,)) for i in range(3)]
    origin = np.zeros(batch + (3,))

    wanted: dict[int, list[int]] = {}
    if columns is not None:
        elem_of = model._cache["param_element"]
        for slot, k in enumerate(columns):
            wanted.setdefault(int(elem_of[k]), []).append(slot)
    records: dict[int, tuple] = {}

    elem_param = model._cache["element_param"]
    for e, t in enumerate(model.chain):
        v = _element_value(t, elem_param[e], params, q)
        a = AXES[t.axis]
        if e in wanted:
            records[e] = (t.kind, cols[a], origin)
        if t.kind == "trans":
            origin = origin + cols[a] * np.asarray(v)[..., None]
        else:
            c = np.cos(v)[..., None]
            s = np.sin(v)[..., None]
            b, d = (a + 1) % 3, (a + 2) % 3
            cols[b], cols[d] = c * cols[b] + s * cols[d], c * cols[d] - s * cols[b]

    p = np.broadcast_to(origin, batch + (3,))
    if columns is None:
        return p, None

    jac = np.empty(batch + (3, len(columns)))
    for e, slots in wanted.items():
        kind, axis_vec, org = records[e]
        if kind == "trans":
            col = axis_vec
        else:
            col = np.cross(axis_vec, p - org)
        for slot in slots:
            jac[..., :, slot] = col
    return p, jac


def forward_position(model: KinematicModel, params, q) -> np.ndarray:
    """End-effector position ``g(q, params)`` in meters."""
    params = model.check_params(params)
    q = model.check_q(q)
    p, _ = chain_kinematics(model, params, q)
    return np.array(p)


def _check_finite_jacobian(model: KinematicModel, jac, columns):
    bad = ~np.isfinite(jac)
    if bad.any():
        slot = int(np.flatnonzero(bad.reshape(-1, jac.shape[-1]).any(axis=0))[0])
        name = model.parameter_names[columns[slot]]
        raise NumericalError(f"non-finite Jacobian column for parameter {name!r}", parameter=name)


def identification_jacobian(
    model: KinematicModel, params, q, method: str = "analytic", columns=None
) -> np.ndarray:
    """Derivative of position w.r.t. the identifiable parameters.

    Shape ``(..., 3, n_identifiable)``. ``method="analytic"`` differentiates
    the chain exactly; ``method="fd"`` uses central differences with the
    module step policy. ``columns`` overrides the identifiable mask with an
    explicit list of parameter indices.
    """
    params = model.check_params(params)
    q = model.check_q(q)
    cols = model.identifiable_indices if columns is None else np.asarray(columns, dtype=int)
    if method == "analytic":
        _, jac = chain_kinematics(model, params, q, cols)
    elif method == "fd":
        jac = finite_difference_jacobian(model, params, q, cols)
    else:
        raise InputError(f"unknown Jacobian method {method!r}")
    _check_finite_jacobian(model, jac, cols)
    return np.array(jac)


def fd_steps(model: KinematicModel, columns=None) -> np.ndarray:
    cols = model.identifiable_indices if columns is None else np.asarray(columns, dtype=int)
    return np.maximum(FD_ABS_STEP, FD_REL_STEP * np.abs(model.nominal[cols]))


def finite_difference_jacobian(model: KinematicModel, params, q, columns=None) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    q = np.asarray(q, dtype=float)
    cols = model.identifiable_indices if columns is None else np.asarray(columns, dtype=int)
    h = fd_steps(model, cols)
    k = len(cols)
    bump = np.zeros((2 * k, model.n_parameters))
    bump[np.arange(k), cols] = h
    bump[k + np.arange(k), cols] = -h
    shifted = params[..., None, :] + bump
    p, _ = chain_kinematics(model, shifted, q[..., None, :])
    diff = (p[..., :k, :] - p[..., k:, :]) / (2.0 * h[:, None])
    return np.swapaxes(diff, -1, -2)


def apply_parameter_update(model: KinematicModel, params, q_list, delta):
    """Add ``delta`` to the identifiable parameters.

    Joint offsets are parameters of the model, so the correction of the
    generalized coordinates is carried by ``params``; the measured joint
    readings in ``q_list`` are returned untouched.
    """
    params = model.check_params(params)
    delta = np.asarray(delta, dtype=float)
    if delta.shape[-1:] != (model.n_identifiable,):
        raise InputError(
            f"delta must have length {model.n_identifiable}, got shape {delta.shape}"
        )
    updated = np.array(params, dtype=float, copy=True)
    updated[..., model.identifiable_indices] += delta
    return updated, np.array(q_list, dtype=float, copy=True)
