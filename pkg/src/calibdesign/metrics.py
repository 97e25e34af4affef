"""Plan quality measures: test-pose accuracy, D/A criteria, parameter screening.

Every score is computed from the singular value decomposition of the
(multiplicity-weighted) stacked identification Jacobian ``A``, for which
``M = A^T A``. With ``A = U S V^T``::

    trace(J0 M^-1 J0^T) = sum_k |J0 v_k|^2 / s_k^2

Plans whose smallest singular value falls below ``RANK_TOL`` times the
largest score ``+inf``; callers inside optimization loops compare against
that sentinel instead of catching exceptions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .identification import RANK_TOL, plan_jacobians
from .kinematics import KinematicModel, chain_kinematics
from .plan import Plan, check_plan


def _stack(jac, multiplicities=None):
    """``(..., k, 3, n)`` per-configuration Jacobians -> ``(..., 3k, n)``."""
    if multiplicities is not None:
        w = np.sqrt(np.asarray(multiplicities, dtype=float))
        jac = jac * w[..., :, None, None]
    shape = jac.shape
    return jac.reshape(shape[:-3] + (shape[-3] * shape[-2], shape[-1]))


def stacked_svd(stacked, rank_tol: float = RANK_TOL):
    """Batched SVD returning ``(s, vt, regular)``."""
    _, s, vt = np.linalg.svd(stacked, full_matrices=False)
    n = stacked.shape[-1]
    if s.shape[-1] < n:
        regular = np.zeros(s.shape[:-1], dtype=bool)
    else:
        regular = (s[..., 0] > 0) & (s[..., -1] > rank_tol * s[..., 0])
    return s, vt, regular


def rho0_from_stacked(stacked, jac0, sigma: float = 1.0, rank_tol: float = RANK_TOL):
    """``sigma^2 trace(J0 M^-1 J0^T)`` for a batch of stacked Jacobians."""
    s, vt, regular = stacked_svd(stacked, rank_tol)
    s_safe = np.where(regular[..., None], s, 1.0)
    # rows of vt are v_k; J0 v_k for every k
    proj = np.einsum("...ri,...ki->...rk", jac0, vt)
    value = sigma**2 * np.sum(np.sum(proj**2, axis=-2) / s_safe**2, axis=-1)
    return np.where(regular, value, np.inf)


def _plan_stack(model, params, plan):
    check_plan(model, plan, atol=np.inf)
    jac = plan_jacobians(model, params, plan.configs)
    return _stack(jac, plan.multiplicities)


def pose_jacobian(model: KinematicModel, params, test_pose) -> np.ndarray:
    return plan_jacobians(model, params, np.asarray(test_pose, dtype=float))


def rho0_squared(model: KinematicModel, params, plan: Plan, test_pose, sigma: float = 1.0,
                 rank_tol: float = RANK_TOL) -> float:
    """Expected squared position error at ``test_pose`` after compensation (m^2).

    Returns ``inf`` for plans with a singular information matrix.
    """
    stacked = _plan_stack(model, params, plan)
    jac0 = pose_jacobian(model, params, test_pose)
    return float(rho0_from_stacked(stacked, jac0, sigma, rank_tol))


def rho0(model: KinematicModel, params, plan: Plan, test_pose, sigma: float = 1.0) -> float:
    return float(np.sqrt(rho0_squared(model, params, plan, test_pose, sigma)))


def d_criterion(model: KinematicModel, params, plan: Plan, rank_tol: float = RANK_TOL) -> float:
    """``1 / det(M)``: the covariance determinant without its ``sigma^(2n)`` factor.

    Unit-bearing (mixes meters and radians); only meaningful for ranking
    plans of the same model.
    """
    s, _, regular = stacked_svd(_plan_stack(model, params, plan), rank_tol)
    if not regular:
        return float("inf")
    return float(np.exp(-2.0 * np.sum(np.log(s))))


def information_determinant(model: KinematicModel, params, plan: Plan) -> float:
    s, _, _ = stacked_svd(_plan_stack(model, params, plan))
    if s.shape[-1] < model.n_identifiable:
        return 0.0
    return float(np.prod(s**2))


def a_criterion(model: KinematicModel, params, plan: Plan, sigma: float = 1.0,
                rank_tol: float = RANK_TOL) -> float:
    """``sigma^2 trace(M^-1)``, the summed parameter variances."""
    s, _, regular = stacked_svd(_plan_stack(model, params, plan), rank_tol)
    if not regular:
        return float("inf")
    return float(sigma**2 * np.sum(1.0 / s**2))


def d_star_criterion(model: KinematicModel, params, plan: Plan, rank_tol: float = RANK_TOL):
    """``(off-diagonal penalty, 1/det M)``.

    The penalty is the Frobenius norm of the off-diagonal part of the
    parameter correlation matrix, zero when the estimates are uncorrelated.
    """
    s, vt, regular = stacked_svd(_plan_stack(model, params, plan), rank_tol)
    if not regular:
        return float("inf"), float("inf")
    cov = (vt.T / s**2) @ vt
    d = np.sqrt(np.diag(cov))
    corr = cov / np.outer(d, d)
    off = corr - np.diag(np.diag(corr))
    return float(np.linalg.norm(off)), float(np.exp(-2.0 * np.sum(np.log(s))))


@dataclass
class ScreeningReport:
    """Outcome of :func:`screen_parameters`.

    ``null_space`` lists near-dependent combinations among the influential
    parameters as ``{name: coefficient}`` dictionaries (coefficients of the
    column-equilibrated problem).
    """

    column_norms: dict
    non_influential: list
    null_space: list
    suggested: tuple

    def summary(self) -> str:
        lines = []
        for name in self.non_influential:
            lines.append(f"non-influential: {name} (max column norm {self.column_norms[name]:.3e})")
        for combo in self.null_space:
            terms = " ".join(f"{c:+.3f}*{n}" for n, c in combo.items())
            lines.append(f"null-space: {terms}")
        lines.append("suggested identifiable set: " + ", ".join(self.suggested))
        return "\n".join(lines)


def screen_parameters(model: KinematicModel, params, probe_configs, tol: float = 1e-9,
                      rank_tol: float = RANK_TOL) -> ScreeningReport:
    """Find parameters that do not affect position, and dependent groups.

    Screens *all* model parameters regardless of their identifiable flag.
    A parameter whose Jacobian column norm stays below ``tol`` at every
    probe is non-influential. The remaining columns are equilibrated to
    unit norm and stacked; right singular vectors with singular value below
    ``rank_tol`` times the largest are reported as null-space combinations.
    The suggested set drops non-influential parameters and, per null
    direction, the parameter with the largest coefficient.
    """
    probes = model.check_q(np.atleast_2d(probe_configs))
    names = model.parameter_names
    everything = np.arange(model.n_parameters)
    _, jac = chain_kinematics(model, model.check_params(params), probes, everything)
    norms = np.linalg.norm(jac, axis=-2).max(axis=0)
    column_norms = {names[k]: float(norms[k]) for k in everything}
    influential = [k for k in everything if norms[k] >= tol]
    non_influential = [names[k] for k in everything if norms[k] < tol]

    null_space = []
    keep = list(influential)
    while keep:
        a = jac[..., keep].reshape(-1, len(keep))
        scale = np.linalg.norm(a, axis=0)
        a = a / scale
        _, s, vt = np.linalg.svd(a, full_matrices=False)
        if len(s) == len(keep) and s[-1] > rank_tol * s[0]:
            break
        v = vt[-1] if len(s) == len(keep) else np.linalg.svd(a)[2][-1]
        v = v / np.max(np.abs(v)) * np.sign(v[np.argmax(np.abs(v))])
        combo = {names[keep[i]]: float(v[i]) for i in np.argsort(-np.abs(v)) if abs(v[i]) > 1e-6}
        null_space.append(combo)
        # drop the latest-declared among the dominant members
        dominant = [i for i in range(len(keep)) if abs(v[i]) > 1 - 1e-6]
        keep.pop(max(dominant))
    suggested = tuple(names[k] for k in keep)
    return ScreeningReport(column_norms, non_influential, null_space, suggested)
