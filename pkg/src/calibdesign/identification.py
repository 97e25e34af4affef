"""Least-squares identification of geometric parameters and its covariance."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, IdentifiabilityError, InputError
from .kinematics import KinematicModel, apply_parameter_update, chain_kinematics
from .plan import MeasurementSet, Plan, check_plan

# Relative singular-value threshold of the stacked Jacobian.
RANK_TOL = 1e-10
DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 20


def _describe_null(vt_rows, names):
    parts = []
    for row in vt_rows:
        order = np.argsort(-np.abs(row))
        terms = [f"{row[k]:+.3f}*{names[k] if names else f'p{k}'}" for k in order if abs(row[k]) > 1e-3]
        parts.append(" ".join(terms))
    return "; ".join(parts)


def solve_least_squares(jacobians, residuals, rank_tol: float = RANK_TOL, names=None) -> np.ndarray:
    """Minimize ``sum |J_i d - r_i|^2`` over ``d`` using an SVD of the stacked system."""
    jac = np.asarray(jacobians, dtype=float)
    res = np.asarray(residuals, dtype=float)
    if jac.ndim != 3 or res.ndim != 2 or len(jac) != len(res) or jac.shape[1] != res.shape[1]:
        raise InputError(
            f"need matching lists of 3xn Jacobians and 3-vectors, got {jac.shape} and {res.shape}"
        )
    a = jac.reshape(-1, jac.shape[-1])
    b = res.reshape(-1)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if len(s) < a.shape[1] or s[-1] <= rank_tol * s[0] or s[0] == 0.0:
        thresh = rank_tol * (s[0] if len(s) else 0.0)
        null = vt[s <= thresh] if len(s) == a.shape[1] else None
        if len(s) < a.shape[1]:
            full_vt = np.linalg.svd(a, full_matrices=True)[2]
            null = full_vt[len(s):] if null is None else np.vstack([null, full_vt[len(s):]])
        raise IdentifiabilityError(
            f"stacked Jacobian is rank deficient; null-space direction(s): {_describe_null(null, names)}",
            null_space=null,
            names=names,
        )
    return vt.T @ ((u.T @ b) / s)


def plan_jacobians(model: KinematicModel, params, configs) -> np.ndarray:
    _, jac = chain_kinematics(model, model.check_params(params), model.check_q(configs), model.identifiable_indices)
    return np.array(jac)


def information_matrix(model: KinematicModel, params, plan: Plan) -> np.ndarray:
    """``M = sum_i k_i J_i^T J_i`` summed in plan order."""
    check_plan(model, plan, atol=np.inf)
    jac = plan_jacobians(model, params, plan.configs)
    terms = plan.multiplicities[:, None, None] * np.einsum("kri,krj->kij", jac, jac)
    m = np.sum(terms, axis=0)
    return 0.5 * (m + m.T)


def _plan_svd(model, params, plan, rank_tol):
    jac = plan_jacobians(model, params, plan.configs)
    w = np.sqrt(plan.multiplicities.astype(float))
    a = (w[:, None, None] * jac).reshape(-1, model.n_identifiable)
    _, s, vt = np.linalg.svd(a, full_matrices=False)
    if len(s) < model.n_identifiable or s[0] == 0.0 or s[-1] <= rank_tol * s[0]:
        thresh = rank_tol * (s[0] if len(s) else 0.0)
        null = vt[s <= thresh] if len(s) == model.n_identifiable else np.linalg.svd(a)[2][len(s):]
        raise IdentifiabilityError(
            "information matrix is singular for this plan; null-space direction(s): "
            + _describe_null(null, model.identifiable_names),
            null_space=null,
            names=model.identifiable_names,
        )
    return s, vt


def covariance(model: KinematicModel, params, plan: Plan, sigma: float, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Covariance ``sigma^2 M^-1`` of the identified parameters."""
    check_plan(model, plan, atol=np.inf)
    s, vt = _plan_svd(model, params, plan, rank_tol)
    cov = (vt.T / s**2) @ vt * sigma**2
    return 0.5 * (cov + cov.T)


@dataclass
class IdentificationResult:
    params: np.ndarray
    iterations: int
    residual_norm: float
    history: list = field(default_factory=list)

    def __iter__(self):
        yield self.params
        yield self.iterations
        yield self.residual_norm


def identify(
    model: KinematicModel,
    nominal_params,
    data: MeasurementSet,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    rank_tol: float = RANK_TOL,
) -> IdentificationResult:
    """Iterated linearized least squares starting from ``nominal_params``.

    Each pass recomputes the modeled positions, solves for the parameter
    increment and folds it into the model. Stops once the largest position
    change predicted by the increment, ``max_i |J_i dP|``, drops below
    ``tol`` (meters). ``history`` records that quantity per pass.
    """
    params = np.array(model.check_params(nominal_params), dtype=float)
    q = model.check_q(data.q)
    cols = model.identifiable_indices
    history = []
    for it in range(1, max_iter + 1):
        p_model, jac = chain_kinematics(model, params, q, cols)
        delta = solve_least_squares(jac, data.p - p_model, rank_tol, model.identifiable_names)
        params, _ = apply_parameter_update(model, params, q, delta)
        step = float(np.max(np.linalg.norm(jac @ delta, axis=-1)))
        history.append(step)
        if step < tol:
            p_final, _ = chain_kinematics(model, params, q)
            return IdentificationResult(params, it, float(np.linalg.norm(data.p - p_final)), history)
    raise ConvergenceError(
        f"identification did not converge in {max_iter} iterations "
        f"(last correction {history[-1]:.3e} m, tol {tol:.1e} m)",
        history=history,
    )


def identify_batch(
    model: KinematicModel,
    start_params,
    q,
    p_measured,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    rank_tol: float = RANK_TOL,
):
    """Vectorized :func:`identify` over independent data sets sharing ``q``.

    ``p_measured`` has shape ``(T, R, 3)``. Returns ``(params, iterations,
    converged, identifiable)`` with per-trial arrays; trials that fail are
    flagged instead of raising.
    """
    q = model.check_q(q)
    p_measured = np.asarray(p_measured, dtype=float)
    n_trials = p_measured.shape[0]
    params = np.repeat(np.asarray(model.check_params(start_params), dtype=float)[None], n_trials, axis=0)
    iterations = np.zeros(n_trials, dtype=int)
    converged = np.zeros(n_trials, dtype=bool)
    identifiable = np.ones(n_trials, dtype=bool)
    cols = model.identifiable_indices
    active = np.arange(n_trials)
    for _ in range(max_iter):
        if active.size == 0:
            break
        p_model, jac = chain_kinematics(model, params[active][:, None, :], q, cols)
        a = jac.reshape(active.size, -1, len(cols))
        b = (p_measured[active] - p_model).reshape(active.size, -1)
        u, s, vt = np.linalg.svd(a, full_matrices=False)
        ok = (s[:, 0] > 0) & (s[:, -1] > rank_tol * s[:, 0])
        s_safe = np.where(ok[:, None], s, 1.0)
        coef = np.einsum("tri,tr->ti", u, b) / s_safe
        delta = np.einsum("tij,ti->tj", vt, coef)
        delta[~ok] = 0.0
        params[np.ix_(active, cols)] += delta
        iterations[active] += 1
        step = np.max(np.linalg.norm(np.einsum("trki,ti->trk", jac, delta), axis=-1), axis=-1)
        done = ok & (step < tol)
        converged[active[done]] = True
        identifiable[active[~ok]] = False
        active = active[ok & ~done]
    return params, iterations, converged, identifiable
