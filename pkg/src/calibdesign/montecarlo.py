"""Monte Carlo simulation of calibration campaigns and random-plan baselines.

A campaign repeats the whole pipeline many times: noisy measurements are
synthesized from a "true" robot, the parameters are identified starting
from the nominal model, and the remaining position error at the test pose
``|g(q0, P_hat) - g(q0, P_true)|`` is recorded.

RNG contract: ``run_campaign`` draws all measurement noise as one block
``default_rng(seed).standard_normal((n_trials, m, 3))``; trial ``i`` always
uses row ``i``, so results do not depend on how trials are chunked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CampaignError, InputError
from .identification import DEFAULT_MAX_ITER, DEFAULT_TOL, identify_batch
from .kinematics import KinematicModel, chain_kinematics, forward_position
from .optimizer import DesignProblem, PlanScorer, sample_configurations
from .plan import MeasurementSet, Plan, check_plan

MAX_FAILURE_RATE = 0.01
_CHUNK = 10_000


def simulate_measurements(model: KinematicModel, true_params, plan: Plan, sigma: float,
                          rng: np.random.Generator) -> MeasurementSet:
    """One record per unit of multiplicity: ``p_i = g(q_i, true) + N(0, sigma^2 I)``."""
    if sigma < 0:
        raise InputError("sigma must be non-negative")
    check_plan(model, plan, atol=np.inf)
    q = plan.expanded()
    p = forward_position(model, true_params, q)
    return MeasurementSet(q, p + sigma * rng.standard_normal(p.shape))


def perturb_parameters(model: KinematicModel, params, rng: np.random.Generator,
                       length_fraction: float = 0.01, angle: float = math.radians(1.0)) -> np.ndarray:
    """Draw "true" parameters around ``params``.

    Identifiable lengths move uniformly within ``+-length_fraction`` of their
    magnitude and identifiable angles within ``+-angle`` radians.
    Non-identifiable parameters are left unchanged, since no plan could
    compensate them.
    """
    params = np.array(model.check_params(params), dtype=float)
    out = params.copy()
    for k in model.identifiable_indices:
        u = rng.uniform(-1.0, 1.0)
        if model.parameters[k].unit == "m":
            out[k] += u * length_fraction * abs(params[k])
        else:
            out[k] += u * angle
    return out


@dataclass(frozen=True)
class TrialResult:
    params_hat: np.ndarray
    test_pose_error: float
    converged: bool


@dataclass(frozen=True)
class CampaignStats:
    n_trials: int
    mean_error: float
    std_error: float
    rms_error: float
    percentiles: dict
    n_failed: int = 0

    @property
    def failure_rate(self) -> float:
        total = self.n_trials + self.n_failed
        return self.n_failed / total if total else 0.0

    @classmethod
    def from_errors(cls, errors, n_failed: int = 0) -> "CampaignStats":
        e = np.asarray(errors, dtype=float)
        if e.size == 0:
            raise CampaignError("no successful trials to summarize")
        pct = np.percentile(e, [5, 50, 95])
        return cls(
            n_trials=int(e.size),
            mean_error=float(np.mean(e)),
            std_error=float(np.std(e)),
            rms_error=float(np.sqrt(np.mean(e * e))),
            percentiles={5: float(pct[0]), 50: float(pct[1]), 95: float(pct[2])},
            n_failed=int(n_failed),
        )

    def format(self) -> str:
        return (
            f"n_trials: {self.n_trials}\n"
            f"n_failed: {self.n_failed}\n"
            f"failure_rate: {self.failure_rate:.6g}\n"
            f"mean_error: {self.mean_error:.9e}\n"
            f"std_error: {self.std_error:.9e}\n"
            f"rms_error: {self.rms_error:.9e}\n"
            f"p5_error: {self.percentiles[5]:.9e}\n"
            f"p50_error: {self.percentiles[50]:.9e}\n"
            f"p95_error: {self.percentiles[95]:.9e}\n"
        )


@dataclass(eq=False)
class CampaignResult:
    """Per-trial arrays (all trials, failed ones included) and the summary.

    ``errors`` and ``error_vectors`` are NaN for failed trials; ``stats``
    summarizes the converged ones only.
    """

    stats: CampaignStats
    true_params: np.ndarray
    params_hat: np.ndarray
    errors: np.ndarray
    error_vectors: np.ndarray
    converged: np.ndarray

    def trial(self, i: int) -> TrialResult:
        return TrialResult(self.params_hat[i], float(self.errors[i]), bool(self.converged[i]))


def run_campaign(
    model: KinematicModel,
    nominal_params,
    true_params,
    plan: Plan,
    test_pose,
    sigma: float,
    n_trials: int = 10_000,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> CampaignResult:
    """Simulate ``n_trials`` independent calibrations of the same robot."""
    if int(n_trials) != n_trials or n_trials < 1:
        raise InputError(f"n_trials must be a positive integer, got {n_trials!r}")
    if sigma < 0:
        raise InputError("sigma must be non-negative")
    check_plan(model, plan, atol=np.inf)
    nominal = np.asarray(model.check_params(nominal_params), dtype=float)
    true = np.asarray(model.check_params(true_params), dtype=float)
    q0 = model.check_q(test_pose)
    if q0.shape != (model.n_joints,):
        raise InputError("test pose must be a single configuration")

    q = plan.expanded()
    p_true = forward_position(model, true, q)
    noise = np.random.default_rng(seed).standard_normal((int(n_trials),) + p_true.shape)

    params_hat = np.empty((int(n_trials), model.n_parameters))
    converged = np.zeros(int(n_trials), dtype=bool)
    for lo in range(0, int(n_trials), _CHUNK):
        hi = min(lo + _CHUNK, int(n_trials))
        est, _, ok, _ = identify_batch(model, nominal, q, p_true + sigma * noise[lo:hi], tol, max_iter)
        params_hat[lo:hi] = est
        converged[lo:hi] = ok

    g_true, _ = chain_kinematics(model, true, q0)
    g_hat, _ = chain_kinematics(model, params_hat, q0)
    vectors = g_hat - g_true
    vectors[~converged] = np.nan
    errors = np.linalg.norm(vectors, axis=-1)

    n_failed = int((~converged).sum())
    if n_failed > MAX_FAILURE_RATE * n_trials:
        raise CampaignError(
            f"{n_failed} of {n_trials} trials failed to identify "
            f"({100.0 * n_failed / n_trials:.2f}% > {100 * MAX_FAILURE_RATE:.0f}%); "
            "the plan may be near-singular or the noise too large for the linearization"
        )
    stats = CampaignStats.from_errors(errors[converged], n_failed)
    return CampaignResult(stats, true, params_hat, errors, vectors, converged)


@dataclass(frozen=True)
class BaselineSummary:
    """Distribution of rho0 over random plans; singular plans counted apart."""

    n_plans: int
    n_singular: int
    min: float
    max: float
    mean: float
    seed: int

    def format(self) -> str:
        return (
            f"n_plans: {self.n_plans}\n"
            f"n_singular: {self.n_singular}\n"
            f"seed: {self.seed}\n"
            f"rho0_min: {self.min:.9e}\n"
            f"rho0_mean: {self.mean:.9e}\n"
            f"rho0_max: {self.max:.9e}\n"
        )


def random_plan_rho0(problem: DesignProblem, n_plans: int, seed: int = 0) -> np.ndarray:
    """rho0 of ``n_plans`` random plans (``inf`` for singular ones).

    All ``n_plans * m`` configurations come from one stream
    ``default_rng(seed)``, uniform in the joint limits and rejected outside
    the workspace box; plan ``j`` takes rows ``j*m .. j*m + m - 1``.
    """
    if int(n_plans) != n_plans or n_plans < 1:
        raise InputError(f"n_plans must be a positive integer, got {n_plans!r}")
    rng = np.random.default_rng(seed)
    configs = sample_configurations(problem, int(n_plans) * problem.m, rng)
    configs = configs.reshape(int(n_plans), problem.m, -1)
    scorer = PlanScorer(problem)
    out = np.empty(int(n_plans))
    for lo in range(0, int(n_plans), _CHUNK):
        _, _, jac = scorer.configs(configs[lo:lo + _CHUNK])
        out[lo:lo + _CHUNK] = np.sqrt(scorer.score(jac))
    return out


def random_plan_baseline(problem: DesignProblem, n_plans: int = 20_000, seed: int = 0) -> BaselineSummary:
    rho = random_plan_rho0(problem, n_plans, seed)
    finite = rho[np.isfinite(rho)]
    if finite.size == 0:
        nan = float("nan")
        return BaselineSummary(int(n_plans), int(n_plans), nan, nan, nan, seed)
    return BaselineSummary(
        n_plans=int(n_plans),
        n_singular=int(rho.size - finite.size),
        min=float(finite.min()),
        max=float(finite.max()),
        mean=float(finite.mean()),
        seed=seed,
    )
