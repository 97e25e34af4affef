"""Closed-form results for the planar two-link arm.

With link-length parameters the information matrix depends on the plan
only through ``S = sum_i cos(q2_i)``::

    M = [[m, S], [S, m]]
    rho0^2 = 2 sigma^2 (m - cos(q20) S) / (m^2 - S^2)

which is minimized by ``S* = m (1 - |sin q20|) / cos q20`` with value
``(sigma^2 / m) cos^2 q20 / (1 - |sin q20|) = (sigma^2 / m)(1 + |sin q20|)``.
The joint-offset parameterization has the same rho0 (its Jacobian is the
link-length one times a constant invertible matrix, rotated by 90 degrees).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import IdentifiabilityError, InputError

# Reference rows of the accuracy-comparison table (rho0^2/sigma^2 and the
# gain rho_D/rho_0 - 1 in percent, m = 2), keyed by |q20| in degrees.
COMPARISON_REFERENCE = {
    0: (0.5, 41),
    30: (0.75, 15),
    60: (0.83, 10),
    90: (1.0, 0),
    120: (0.83, 10),
    150: (0.75, 15),
    180: (0.5, 41),
}


@dataclass(frozen=True)
class TwoLinkCase:
    l1: float = 1.0
    l2: float = 0.8
    parameter_set: str = "link-lengths"
    sigma: float = 1.0
    m: int = 2
    q20: float = 0.0

    def __post_init__(self):
        if not (self.l1 > 0 and self.l2 > 0):
            raise InputError("link lengths must be positive")
        if self.parameter_set not in ("link-lengths", "joint-offsets", "both"):
            raise InputError(f"unknown parameter set {self.parameter_set!r}")
        floor = 3 if self.parameter_set == "both" else 2
        if int(self.m) != self.m or self.m < floor:
            raise InputError(f"m must be an integer >= {floor} for {self.parameter_set}")
        if self.sigma < 0:
            raise InputError("sigma must be non-negative")


def _sum_cos(q2s) -> tuple[float, int]:
    q2s = np.atleast_1d(np.asarray(q2s, dtype=float))
    return float(np.sum(np.cos(q2s))), len(q2s)


def _check_regular(S: float, m: int):
    if m * m - S * S <= 1e-12 * m * m:
        raise IdentifiabilityError(
            f"singular plan: |sum cos q2| = {abs(S):.6g} equals m = {m} "
            "(all second-joint angles coincide at 0 or 180 degrees)"
        )


def cov_2r(case: TwoLinkCase, q2s) -> np.ndarray:
    """Link-length covariance; depends on the plan only through ``sum cos q2``."""
    S, m = _sum_cos(q2s)
    _check_regular(S, m)
    return case.sigma**2 / (m * m - S * S) * np.array([[m, -S], [-S, m]])


def rho0_2r(case: TwoLinkCase, q2s) -> float:
    S, m = _sum_cos(q2s)
    _check_regular(S, m)
    return rho0_of_sum(S, m, case.q20, case.sigma)


def rho0_of_sum(S, m, q20: float, sigma: float = 1.0):
    """rho0^2 as a function of ``S = sum cos q2`` (vectorized over ``S``)."""
    S = np.asarray(S, dtype=float)
    value = 2.0 * sigma**2 * (m - math.cos(q20) * S) / (m * m - S * S)
    return float(value) if value.ndim == 0 else value


def _reduced_angle(q20: float) -> float:
    """Angle ``x`` in ``[0, pi/2]`` with ``sin x = |sin q20|``."""
    r = math.fmod(abs(q20), math.pi)
    return min(r, math.pi - r)


def optimal_S(case: TwoLinkCase) -> float:
    c = math.cos(case.q20)
    if abs(c) < 1e-9:
        return 0.0
    x = _reduced_angle(case.q20)
    # 1 - sin x = 2 sin^2(pi/4 - x/2), free of cancellation near 90 degrees
    one_minus_sin = 2.0 * math.sin(math.pi / 4 - x / 2) ** 2
    return case.m * one_minus_sin / c


def rho0_min(case: TwoLinkCase) -> float:
    c = math.cos(case.q20)
    x = _reduced_angle(case.q20)
    scale = case.sigma**2 / case.m
    if abs(c) < 1e-9:
        return scale * (1.0 + math.sin(x))
    one_minus_sin = 2.0 * math.sin(math.pi / 4 - x / 2) ** 2
    return scale * c * c / one_minus_sin


def rho_d_squared(case: TwoLinkCase) -> float:
    """Test-pose accuracy of any plan with ``sum cos q2 = 0``."""
    return 2.0 * case.sigma**2 / case.m


def _acos(x: float) -> float:
    """arccos that treats values within 1e-12 of +-1 as exactly +-1."""
    if abs(abs(x) - 1.0) < 1e-12 or abs(x) > 1.0:
        x = math.copysign(1.0, x)
    return math.acos(x)


def decompose_plan(case: TwoLinkCase, S_target: float | None = None) -> np.ndarray:
    """Second-joint angles (radians) with ``sum cos = S_target`` using at most 3 values.

    Even ``m``: ``m/2`` symmetric pairs at ``+-arccos(S/m)``. Odd ``m``: one
    configuration at 0 plus pairs at ``+-arccos((S-1)/(m-1))``; when that is
    infeasible (``S < 2 - m``) the single configuration moves to 180 degrees
    and the pairs use ``+-arccos((S+1)/(m-1))``.
    """
    m = int(case.m)
    S = optimal_S(case) if S_target is None else float(S_target)
    if abs(S) > m * (1 + 1e-12):
        raise InputError(f"|S_target| = {abs(S):.6g} exceeds m = {m}")
    S = max(-m, min(m, S))
    if m % 2 == 0:
        a = _acos(S / m)
        return np.array([-a] * (m // 2) + [a] * (m // 2))
    if m == 1:
        return np.array([_acos(S)])
    ratio = (S - 1) / (m - 1)
    single = 0.0
    if ratio < -1.0:
        single = math.pi
        ratio = (S + 1) / (m - 1)
    a = _acos(ratio)
    half = (m - 1) // 2
    return np.array([-a] * half + [single] + [a] * half)


def accuracy_gain(rho_a: float, rho_b: float) -> float:
    """``100 (rho_a / rho_b - 1)``: how much larger error ``a`` has than ``b``."""
    return 100.0 * (rho_a / rho_b - 1.0)


def error_reduction(rho_ref: float, rho_new: float) -> float:
    """``100 (1 - rho_new / rho_ref)``: error removed by switching from ``ref`` to ``new``."""
    return 100.0 * (1.0 - rho_new / rho_ref)


@dataclass(frozen=True)
class ComparisonRow:
    q20_deg: float
    m: int
    S_opt: float
    plan_deg: tuple
    rho0_sq: float
    rho_d_sq: float
    gain: float
    reference_rho0_sq: float | None
    reference_gain: float | None
    sigma_sq: float = 1.0

    @property
    def discrepancy(self) -> bool:
        if self.reference_rho0_sq is None:
            return False
        return abs(self.rho0_sq / self.sigma_sq - self.reference_rho0_sq) > 0.005 or (
            abs(self.gain - self.reference_gain) > 0.5
        )


def comparison_row(q20: float, m: int = 2, sigma: float = 1.0, l1: float = 1.0, l2: float = 0.8) -> ComparisonRow:
    """One row of the D-optimal vs test-pose-optimal comparison (angles in radians)."""
    case = TwoLinkCase(l1, l2, "link-lengths", sigma, m, q20)
    r0 = rho0_min(case)
    rd = rho_d_squared(case)
    deg = abs(math.degrees(q20))
    ref = COMPARISON_REFERENCE.get(int(round(deg))) if m == 2 and abs(deg - round(deg)) < 1e-9 else None
    return ComparisonRow(
        q20_deg=math.degrees(q20),
        m=m,
        S_opt=optimal_S(case),
        plan_deg=tuple(float(v) for v in np.degrees(decompose_plan(case))),
        rho0_sq=r0,
        rho_d_sq=rd,
        gain=accuracy_gain(math.sqrt(rd), math.sqrt(r0)),
        reference_rho0_sq=None if ref is None else ref[0],
        reference_gain=None if ref is None else float(ref[1]),
        sigma_sq=sigma**2,
    )
