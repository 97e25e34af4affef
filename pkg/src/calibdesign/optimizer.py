"""Multi-start design of calibration plans minimizing test-pose error.

Random starts are drawn inside the joint limits (rejecting configurations
whose end point leaves the workspace box), the worst starts are filtered
out, and every survivor is refined by a coordinate pattern search over the
``m * n_joints`` design variables. All survivors are polled together in
one vectorized evaluation per iteration.

RNG contract: start ``i`` is drawn from
``np.random.default_rng(np.random.SeedSequence(rng_seed).spawn(n_starts)[i])``,
so a start depends only on the master seed and its index.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleError, InputError
from .identification import RANK_TOL
from .kinematics import KinematicModel, chain_kinematics
from .metrics import _stack, a_criterion, d_criterion, rho0_from_stacked
from .plan import Plan, replicate_plan  # noqa: F401  (re-exported)

_MAX_REJECTION_ROUNDS = 200


@dataclass(frozen=True, eq=False)
class DesignProblem:
    model: KinematicModel
    test_pose: np.ndarray
    m: int
    sigma: float = 1.0
    joint_limits: np.ndarray | None = None
    workspace_limits: np.ndarray | None = None
    params: np.ndarray | None = None

    def __post_init__(self):
        model = self.model
        q0 = model.check_q(self.test_pose)
        if q0.shape != (model.n_joints,):
            raise InputError("test pose must be a single configuration")
        object.__setattr__(self, "test_pose", q0)
        if int(self.m) != self.m or self.m < 1:
            raise InputError(f"m must be a positive integer, got {self.m!r}")
        floor = math.ceil(model.n_identifiable / 3)
        if self.m < floor:
            raise InputError(
                f"m = {self.m} measurements give {3 * self.m} equations for "
                f"{model.n_identifiable} identifiable parameters; need m >= {floor}"
            )
        if self.sigma < 0:
            raise InputError("sigma must be non-negative")
        lim = model.limits_array if self.joint_limits is None else np.asarray(self.joint_limits, dtype=float)
        if lim.shape != (model.n_joints, 2) or not np.all(lim[:, 0] < lim[:, 1]):
            raise InputError("joint limits must be one (min, max) pair per joint with min < max")
        object.__setattr__(self, "joint_limits", lim)
        box = self.workspace_limits
        if box is None and model.workspace is not None:
            box = np.array(model.workspace)
        if box is not None:
            box = np.asarray(box, dtype=float)
            if box.shape != (3, 2) or not np.all(box[:, 0] < box[:, 1]):
                raise InputError("workspace limits must be three (min, max) pairs")
        object.__setattr__(self, "workspace_limits", box)
        params = model.nominal if self.params is None else model.check_params(self.params)
        object.__setattr__(self, "params", np.asarray(params, dtype=float))

    def in_workspace(self, positions) -> np.ndarray:
        if self.workspace_limits is None:
            return np.ones(np.shape(positions)[:-1], dtype=bool)
        box = self.workspace_limits
        return np.all((positions >= box[:, 0]) & (positions <= box[:, 1]), axis=-1)


@dataclass(frozen=True)
class OptimizerSettings:
    n_starts: int = 512
    filter_quantile: float = 0.1
    local_tol: float = 1e-9
    max_local_iters: int = 5000
    rng_seed: int = 0
    initial_step: float = math.pi / 8

    def __post_init__(self):
        if self.n_starts < 1:
            raise InputError("n_starts must be >= 1")
        if not 0 < self.filter_quantile <= 1:
            raise InputError("filter_quantile must lie in (0, 1]")
        if self.local_tol <= 0 or self.initial_step <= 0:
            raise InputError("step sizes must be positive")


@dataclass(eq=False)
class DesignReport:
    plan: Plan
    rho0_squared: float
    d_criterion: float
    a_criterion: float
    sigma: float
    seed: int
    n_starts: int
    n_singular_starts: int
    n_survivors: int
    best_start_rho0: float
    median_start_rho0: float
    local_iterations: int
    evaluations: int
    best_start_index: int
    wall_time: float = field(default=0.0)

    @property
    def rho0(self) -> float:
        return math.sqrt(self.rho0_squared)


class PlanScorer:
    """Vectorized rho0^2 evaluation for a fixed model, test pose and sigma."""

    def __init__(self, problem: DesignProblem, rank_tol: float = RANK_TOL):
        self.problem = problem
        self.model = problem.model
        self.params = problem.params
        self.cols = self.model.identifiable_indices
        self.rank_tol = rank_tol
        _, self.jac0 = chain_kinematics(self.model, self.params, problem.test_pose, self.cols)
        self.evaluations = 0

    def configs(self, q):
        """Positions, workspace flags and Jacobians for configurations ``(..., n)``."""
        p, jac = chain_kinematics(self.model, self.params, q, self.cols)
        return p, self.problem.in_workspace(p), jac

    def score(self, jac, multiplicities=None):
        """rho0^2 for per-configuration Jacobians ``(..., k, 3, n_id)``."""
        self.evaluations += int(np.prod(jac.shape[:-3]))
        return rho0_from_stacked(_stack(jac, multiplicities), self.jac0, self.problem.sigma, self.rank_tol)

    def fast_score(self, info):
        """Approximate rho0^2 from information matrices ``(..., n, n)``.

        Used only to rank poll points: a relative ridge of 1e-13 keeps the
        batched solve defined on singular matrices, which then score huge.
        """
        n = info.shape[-1]
        self.evaluations += int(np.prod(info.shape[:-2]))
        ridge = 1e-13 * np.trace(info, axis1=-2, axis2=-1)[..., None, None] * np.eye(n)
        g0 = self.jac0.T
        sol = np.linalg.solve(info + ridge, np.broadcast_to(g0, info.shape[:-2] + g0.shape))
        value = self.problem.sigma**2 * np.einsum("ir,...ir->...", g0, sol)
        return np.where(np.isfinite(value) & (value > 0), value, np.inf)

    def score_configs(self, configs):
        _, inside, jac = self.configs(configs)
        f = self.score(jac)
        return np.where(inside.all(axis=-1), f, np.inf)


def sample_configurations(problem: DesignProblem, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` configurations uniform in the joint limits and inside the workspace."""
    lim = problem.joint_limits
    n = lim.shape[0]
    out = np.empty((0, n))
    batch = max(8, 2 * count)
    for _ in range(_MAX_REJECTION_ROUNDS):
        cand = rng.uniform(lim[:, 0], lim[:, 1], size=(batch, n))
        if problem.workspace_limits is not None:
            p, _ = chain_kinematics(problem.model, problem.params, cand)
            cand = cand[problem.in_workspace(p)]
        out = np.vstack([out, cand])
        if len(out) >= count:
            return out[:count]
    raise InfeasibleError(
        "could not sample configurations inside the workspace limits; "
        "the workspace box may not intersect the reachable set"
    )


def draw_starts(problem: DesignProblem, n_starts: int, seed: int) -> np.ndarray:
    children = np.random.SeedSequence(seed).spawn(n_starts)
    return np.stack([sample_configurations(problem, problem.m, np.random.default_rng(c)) for c in children])


def _pattern_search(scorer: PlanScorer, X, f, J, lim, settings: OptimizerSettings):
    """Batched coordinate search with complete polling and step halving.

    Every poll point of every survivor is ranked by a cheap normal-equation
    estimate of rho0^2. Two candidates per survivor are then scored exactly
    (SVD path): the best single coordinate move and the composite of all
    improving coordinate moves. The better one is accepted if it improves
    on the current exact value; otherwise the step is halved.
    """
    S, m, n = X.shape
    ii = np.repeat(np.arange(m), 2 * n)
    jj = np.tile(np.repeat(np.arange(n), 2), m)
    sg = np.tile([1.0, -1.0], m * n)
    D = len(ii)
    dcol = np.arange(D)
    step = np.full(S, settings.initial_step)
    iters = np.zeros(S, dtype=int)
    active = np.isfinite(f)
    while active.any():
        a = np.flatnonzero(active)
        A = len(a)
        rows = np.arange(A)
        base = X[a][:, ii, :]
        moved = base.copy()
        moved[:, dcol, jj] += sg * step[a][:, None]
        np.clip(moved, lim[:, 0], lim[:, 1], out=moved)
        changed = np.any(moved != base, axis=-1)
        _, inside, j_new = scorer.configs(moved)

        contrib = np.einsum("akri,akrj->akij", J[a], J[a])
        full = contrib.sum(axis=1)
        others = full[:, None] - contrib
        trial_m = others[:, ii] + np.einsum("adri,adrj->adij", j_new, j_new)
        ft = scorer.fast_score(trial_m)
        f_here = scorer.fast_score(full)
        ft[~(inside & changed)] = np.inf

        k = np.argmin(ft, axis=1)
        single = X[a].copy()
        single[rows, ii[k]] = moved[rows, k]
        j_single = J[a].copy()
        j_single[rows, ii[k]] = j_new[rows, k]

        # composite: per coordinate the better improving sign, all at once
        paired = ft.reshape(A, m * n, 2)
        pick = np.argmin(paired, axis=2)
        best_pair = np.take_along_axis(paired, pick[..., None], axis=2)[..., 0]
        use = best_pair < f_here[:, None]
        delta = np.where(use, np.where(pick == 0, 1.0, -1.0), 0.0) * step[a][:, None]
        comp = np.clip(X[a] + delta.reshape(A, m, n), lim[:, 0], lim[:, 1])
        _, comp_inside, j_comp = scorer.configs(comp)

        cand_j = np.stack([j_single, j_comp], axis=1)
        exact = scorer.score(cand_j)
        exact[~np.isfinite(ft[rows, k]), 0] = np.inf
        exact[~comp_inside.all(axis=-1) | (use.sum(axis=1) < 2), 1] = np.inf
        choice = np.argmin(exact, axis=1)
        fbest = exact[rows, choice]
        better = fbest < f[a] - 1e-15 * np.abs(f[a])

        new_x = np.where((choice == 0)[:, None, None], single, comp)
        new_j = np.where((choice == 0)[:, None, None, None], j_single, j_comp)
        win = a[better]
        X[win] = new_x[better]
        J[win] = new_j[better]
        f[win] = fbest[better]
        step[a[~better]] *= 0.5
        iters[a] += 1
        active[a] = (step[a] >= settings.local_tol) & (iters[a] < settings.max_local_iters)
    return X, f, int(iters.sum())


def optimize_from_starts(problem: DesignProblem, settings: OptimizerSettings, starts) -> DesignReport:
    """Filter and refine an explicit start set ``(n_starts, m, n_joints)``."""
    t0 = time.perf_counter()
    starts = np.asarray(starts, dtype=float)
    if starts.ndim != 3 or starts.shape[1:] != (problem.m, problem.model.n_joints):
        raise InputError(f"starts must have shape (n, {problem.m}, {problem.model.n_joints})")
    scorer = PlanScorer(problem)
    _, inside, jac = scorer.configs(starts)
    f0 = np.where(inside.all(axis=-1), scorer.score(jac), np.inf)
    finite = np.isfinite(f0)
    if not finite.any():
        raise InfeasibleError(
            f"all {len(starts)} random plans have a singular information matrix; "
            "some parameters are probably not identifiable from position data "
            "(run screen_parameters / `calibdesign screen` and update the identifiable flags)"
        )
    idx = np.flatnonzero(finite)
    order = idx[np.lexsort((idx, f0[idx]))]
    n_keep = max(1, math.ceil(settings.filter_quantile * len(idx)))
    keep = order[:n_keep]

    X, f, n_iter = _pattern_search(
        scorer, starts[keep].copy(), f0[keep].copy(), jac[keep].copy(), problem.joint_limits, settings
    )
    best = np.lexsort((keep, f))[0]
    plan = Plan.from_configs(X[best])
    rho0_start = np.sqrt(f0[finite])
    return DesignReport(
        plan=plan,
        rho0_squared=float(f[best]),
        d_criterion=d_criterion(problem.model, problem.params, plan),
        a_criterion=a_criterion(problem.model, problem.params, plan, problem.sigma),
        sigma=problem.sigma,
        seed=settings.rng_seed,
        n_starts=len(starts),
        n_singular_starts=int((~finite).sum()),
        n_survivors=n_keep,
        best_start_rho0=float(rho0_start.min()),
        median_start_rho0=float(np.median(rho0_start)),
        local_iterations=n_iter,
        evaluations=scorer.evaluations,
        best_start_index=int(keep[best]),
        wall_time=time.perf_counter() - t0,
    )


def optimize_plan(problem: DesignProblem, settings: OptimizerSettings | None = None) -> DesignReport:
    settings = settings or OptimizerSettings()
    t0 = time.perf_counter()
    starts = draw_starts(problem, settings.n_starts, settings.rng_seed)
    report = optimize_from_starts(problem, settings, starts)
    report.wall_time = time.perf_counter() - t0
    return report


@dataclass
class ComparisonTable:
    names: list
    rho0_squared: np.ndarray
    d: np.ndarray
    a: np.ndarray
    gain: np.ndarray
    reduction: np.ndarray

    @property
    def rho0(self) -> np.ndarray:
        return np.sqrt(self.rho0_squared)

    def format(self) -> str:
        lines = [f"{'plan':<16}{'rho0':>16}{'rho0^2':>16}{'D':>16}{'A':>16}"]
        for k, name in enumerate(self.names):
            lines.append(
                f"{name:<16}{self.rho0[k]:>16.6e}{self.rho0_squared[k]:>16.6e}"
                f"{self.d[k]:>16.6e}{self.a[k]:>16.6e}"
            )
        lines.append("")
        lines.append("gain % = 100 (rho_row / rho_col - 1)")
        lines.append(f"{'':<16}" + "".join(f"{n:>16}" for n in self.names))
        for k, name in enumerate(self.names):
            lines.append(f"{name:<16}" + "".join(f"{v:>16.2f}" for v in self.gain[k]))
        lines.append("")
        lines.append("reduction % = 100 (1 - rho_col / rho_row)")
        lines.append(f"{'':<16}" + "".join(f"{n:>16}" for n in self.names))
        for k, name in enumerate(self.names):
            lines.append(f"{name:<16}" + "".join(f"{v:>16.2f}" for v in self.reduction[k]))
        return "\n".join(lines) + "\n"


def compare_plans(model: KinematicModel, params, plans: dict, test_pose, sigma: float = 1.0) -> ComparisonTable:
    """Score named plans; ``gain[a, b] = 100 (rho_a / rho_b - 1)``."""
    from .metrics import rho0_squared

    names = list(plans)
    r2 = np.array([rho0_squared(model, params, plans[n], test_pose, sigma) for n in names])
    d = np.array([d_criterion(model, params, plans[n]) for n in names])
    a = np.array([a_criterion(model, params, plans[n], sigma) for n in names])
    rho = np.sqrt(r2)
    with np.errstate(invalid="ignore", divide="ignore"):
        gain = 100.0 * (rho[:, None] / rho[None, :] - 1.0)
        reduction = 100.0 * (1.0 - rho[None, :] / rho[:, None])
    return ComparisonTable(names, r2, d, a, gain, reduction)
