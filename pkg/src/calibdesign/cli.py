"""Command-line interface: ``calibdesign <command> ...``.

Commands: design, evaluate, simulate, baseline, compare, analytic-2r,
identify, screen. Every command is a pure function of its input files,
flags and seed; reports are ``key: value`` lines written with fixed
formatting so repeated runs are byte-identical. Wall-clock times are never
written.

Angles on the command line are radians unless suffixed with ``deg``
(``--test-pose=-45deg,20deg``). Models and plans are file paths, or
``shipped:NAME`` for the bundled examples (``shipped:six_r``,
``shipped:lengths_optimal``).

Exit codes: 0 success, 2 input error, 3 infeasible / not identifiable /
not converged.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import analytic2r
from .errors import CalibError, InputError
from .identification import identify
from .io import (
    format_campaign,
    format_plan,
    load_model,
    parse_angle,
    parse_angles,
    parse_model,
    parse_plan,
    read_measurements,
    read_plan,
)
from .kinematics import KinematicModel
from .metrics import a_criterion, d_criterion, d_star_criterion, rho0_squared, screen_parameters
from .models import SHIPPED, shipped_model_text, shipped_path
from .montecarlo import perturb_parameters, random_plan_baseline, run_campaign
from .optimizer import DesignProblem, OptimizerSettings, compare_plans, optimize_plan, sample_configurations
from .plan import Plan, check_plan

SHIPPED_PREFIX = "shipped:"
TABLE_ANGLES_DEG = (0, 30, 60, 90, 120, 150, 180)


# ------------------------------------------------------------------ helpers


def _load_model(ref: str) -> KinematicModel:
    if ref.startswith(SHIPPED_PREFIX):
        name = ref[len(SHIPPED_PREFIX):]
        if name not in SHIPPED:
            raise InputError(f"unknown shipped model {name!r}; choose from {', '.join(SHIPPED)}")
        return parse_model(shipped_model_text(name))
    return load_model(ref)


def _load_plan(ref: str) -> Plan:
    if ref.startswith(SHIPPED_PREFIX):
        name = ref[len(SHIPPED_PREFIX):]
        res = shipped_path(f"plans/{name}.csv")
        if not res.is_file():
            raise InputError(f"unknown shipped plan {name!r}")
        return parse_plan(res.read_text(), ref)
    return read_plan(ref)


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "yes" if value else "no"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value) + 0.0:.12g}"
    if isinstance(value, (list, tuple, np.ndarray)):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def _report(pairs) -> str:
    return "".join(f"{key}: {_fmt(value)}\n" for key, value in pairs)


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _test_pose(model: KinematicModel, text: str) -> np.ndarray:
    q0 = parse_angles(text)
    if q0.shape != (model.n_joints,):
        raise InputError(f"test pose has {q0.size} angles, model has {model.n_joints} joints")
    return q0


def _sigma(value: float) -> float:
    if not math.isfinite(value) or value < 0:
        raise InputError("sigma must be a non-negative number")
    return value


def _plan_rows(plan: Plan):
    rows = []
    for k, (q, mult) in enumerate(zip(plan.configs, plan.multiplicities), start=1):
        rows.append((f"config_{k}_deg", np.degrees(q)))
        if mult != 1:
            rows.append((f"config_{k}_multiplicity", int(mult)))
    return rows


# ------------------------------------------------------------------ commands


def cmd_design(args) -> int:
    model = _load_model(args.model)
    q0 = _test_pose(model, args.test_pose)
    limits = None
    if args.joint_limits:
        flat = parse_angles(args.joint_limits)
        if flat.size != 2 * model.n_joints:
            raise InputError(f"--joint-limits needs {2 * model.n_joints} angles (min,max per joint)")
        limits = flat.reshape(model.n_joints, 2)
    problem = DesignProblem(model, q0, args.m, _sigma(args.sigma), joint_limits=limits)
    settings = OptimizerSettings(n_starts=args.starts, filter_quantile=args.filter_quantile, rng_seed=args.seed)
    report = optimize_plan(problem, settings)
    pairs = [
        ("command", "design"),
        ("model", model.name),
        ("seed", args.seed),
        ("m", args.m),
        ("sigma", problem.sigma),
        ("test_pose_rad", q0),
        ("n_starts", report.n_starts),
        ("n_singular_starts", report.n_singular_starts),
        ("n_survivors", report.n_survivors),
        ("best_start_index", report.best_start_index),
        ("local_iterations", report.local_iterations),
        ("rho0", report.rho0),
        ("rho0_squared", report.rho0_squared),
        ("d_criterion", report.d_criterion),
        ("a_criterion", report.a_criterion),
        ("best_start_rho0", report.best_start_rho0),
        ("median_start_rho0", report.median_start_rho0),
    ]
    if args.baseline_plans > 0:
        base = random_plan_baseline(problem, args.baseline_plans, args.seed)
        pairs += [
            ("baseline_plans", base.n_plans),
            ("baseline_singular", base.n_singular),
            ("baseline_rho0_min", base.min),
            ("baseline_rho0_mean", base.mean),
            ("baseline_rho0_max", base.max),
            ("reduction_vs_baseline_mean_pct", 100.0 * (1.0 - report.rho0 / base.mean)),
            ("reduction_vs_baseline_min_pct", 100.0 * (1.0 - report.rho0 / base.min)),
        ]
    pairs += _plan_rows(report.plan)
    if args.out:
        Path(args.out).write_text(
            format_plan(report.plan, {"model": model.name, "seed": args.seed, "rho0": _fmt(report.rho0)})
        )
        pairs.append(("plan_file", args.out))
    _emit(_report(pairs), args.report)
    return 0


def cmd_evaluate(args) -> int:
    model = _load_model(args.model)
    plan = _load_plan(args.plan)
    check_plan(model, plan)
    q0 = _test_pose(model, args.test_pose)
    sigma = _sigma(args.sigma)
    params = model.nominal
    r2 = rho0_squared(model, params, plan, q0, sigma)
    penalty, _ = d_star_criterion(model, params, plan)
    pairs = [
        ("command", "evaluate"),
        ("model", model.name),
        ("plan", args.plan),
        ("m", plan.m),
        ("sigma", sigma),
        ("test_pose_rad", q0),
        ("rho0", math.sqrt(r2)),
        ("rho0_squared", r2),
        ("d_criterion", d_criterion(model, params, plan)),
        ("a_criterion", a_criterion(model, params, plan, sigma)),
        ("correlation_penalty", penalty),
        ("singular", not math.isfinite(r2)),
    ]
    _emit(_report(pairs), args.report)
    return 0


def cmd_simulate(args) -> int:
    model = _load_model(args.model)
    plan = _load_plan(args.plan)
    check_plan(model, plan)
    q0 = _test_pose(model, args.test_pose)
    sigma = _sigma(args.sigma)
    if args.trials < 1:
        raise InputError("--trials must be at least 1")
    nominal = model.nominal
    if args.no_perturb:
        true = nominal
    else:
        # separate stream from the measurement noise, which uses ``seed`` itself
        rng = np.random.default_rng(np.random.SeedSequence([args.seed, 1]))
        true = perturb_parameters(model, nominal, rng)
    result = run_campaign(model, nominal, true, plan, q0, sigma, args.trials, args.seed)
    theory = math.sqrt(rho0_squared(model, nominal, plan, q0, sigma))
    s = result.stats
    pairs = [
        ("command", "simulate"),
        ("model", model.name),
        ("plan", args.plan),
        ("seed", args.seed),
        ("sigma", sigma),
        ("test_pose_rad", q0),
        ("true_params", true),
        ("n_trials", s.n_trials),
        ("n_failed", s.n_failed),
        ("failure_rate", s.failure_rate),
        ("mean_error", s.mean_error),
        ("std_error", s.std_error),
        ("rms_error", s.rms_error),
        ("p5_error", s.percentiles[5]),
        ("p50_error", s.percentiles[50]),
        ("p95_error", s.percentiles[95]),
        ("predicted_rho0", theory),
    ]
    if theory > 0:
        pairs.append(("rms_relative_deviation", s.rms_error / theory - 1.0))
    if args.out:
        Path(args.out).write_text(format_campaign(result, {"seed": args.seed, "plan": args.plan}))
        pairs.append(("campaign_file", args.out))
    if args.plot:
        _plot_campaign(result, theory, args.plot, title=f"{model.name} / {args.plan}")
        pairs.append(("plot_file", args.plot))
    _emit(_report(pairs), args.report)
    return 0


def _plot_campaign(result, theory: float, path: str, title: str = "") -> None:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        raise InputError("--plot needs matplotlib (pip install 'artifact[plot]')") from None
    ok = result.converged
    dp = result.error_vectors[ok] * 1e3
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4.5))
    ax1.scatter(dp[:, 0], dp[:, 1], s=2, alpha=0.4)
    circle = plt.Circle((0, 0), theory * 1e3, fill=False, color="r", label="predicted rho0")
    ax1.add_patch(circle)
    ax1.set_aspect("equal")
    ax1.set_xlabel("dp_x [mm]")
    ax1.set_ylabel("dp_y [mm]")
    ax1.legend(loc="upper right")
    ax2.hist(result.errors[ok] * 1e3, bins=60)
    ax2.axvline(result.stats.rms_error * 1e3, color="k", label="rms")
    ax2.axvline(theory * 1e3, color="r", linestyle="--", label="predicted rho0")
    ax2.set_xlabel("test-pose error [mm]")
    ax2.legend()
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def cmd_baseline(args) -> int:
    model = _load_model(args.model)
    q0 = _test_pose(model, args.test_pose)
    problem = DesignProblem(model, q0, args.m, _sigma(args.sigma))
    base = random_plan_baseline(problem, args.plans, args.seed)
    pairs = [
        ("command", "baseline"),
        ("model", model.name),
        ("m", args.m),
        ("sigma", problem.sigma),
        ("test_pose_rad", q0),
    ]
    _emit(_report(pairs) + base.format(), args.report)
    return 0


def cmd_compare(args) -> int:
    model = _load_model(args.model)
    q0 = _test_pose(model, args.test_pose)
    plans = {}
    for item in args.plan:
        name, sep, ref = item.partition("=")
        if not sep:
            name, ref = item, item
        plan = _load_plan(ref)
        check_plan(model, plan)
        plans[name] = plan
    table = compare_plans(model, model.nominal, plans, q0, _sigma(args.sigma))
    head = _report([("command", "compare"), ("model", model.name), ("sigma", args.sigma), ("test_pose_rad", q0)])
    _emit(head + "\n" + table.format(), args.report)
    return 0


def _analytic_row_text(row) -> str:
    pairs = [
        ("q20_deg", row.q20_deg),
        ("m", row.m),
        ("S_opt", row.S_opt),
        ("plan_q2_deg", row.plan_deg),
        ("rho0_squared", row.rho0_sq),
        ("rho0_squared_over_sigma2", row.rho0_sq / row.sigma_sq if row.sigma_sq > 0 else float("nan")),
        ("rho_d_squared", row.rho_d_sq),
        ("gain_pct", row.gain),
    ]
    if row.reference_rho0_sq is not None:
        pairs += [
            ("reference_rho0_squared_over_sigma2", row.reference_rho0_sq),
            ("reference_gain_pct", row.reference_gain),
            ("reference_discrepancy", row.discrepancy),
        ]
    return _report(pairs)


def cmd_analytic_2r(args) -> int:
    sigma = _sigma(args.sigma)
    if args.table:
        angles = [math.radians(a) for a in TABLE_ANGLES_DEG]
    elif args.q20 is not None:
        angles = [parse_angle(args.q20)]
    else:
        raise InputError("give --q20 or --table")
    blocks = [_report([("command", "analytic-2r"), ("l1", args.l1), ("l2", args.l2), ("sigma", sigma)])]
    for q20 in angles:
        row = analytic2r.comparison_row(q20, args.m, sigma, args.l1, args.l2)
        blocks.append(_analytic_row_text(row))
    _emit("\n".join(blocks), args.report)
    return 0


def cmd_identify(args) -> int:
    model = _load_model(args.model)
    data = read_measurements(args.measurements)
    result = identify(model, model.nominal, data)
    pairs = [
        ("command", "identify"),
        ("model", model.name),
        ("n_records", len(data.q)),
        ("iterations", result.iterations),
        ("residual_norm", result.residual_norm),
    ]
    for k, name in enumerate(model.parameter_names):
        pairs.append((f"param_{name}", result.params[k]))
    _emit(_report(pairs), args.report)
    return 0


def cmd_screen(args) -> int:
    model = _load_model(args.model)
    if args.probes < 1:
        raise InputError("--probes must be at least 1")
    problem = DesignProblem(model, np.zeros(model.n_joints), max(1, math.ceil(model.n_identifiable / 3)))
    probes = sample_configurations(problem, args.probes, np.random.default_rng(args.seed))
    rep = screen_parameters(model, model.nominal, probes)
    head = _report([("command", "screen"), ("model", model.name), ("seed", args.seed), ("probes", args.probes)])
    norms = _report((f"column_norm_{k}", v) for k, v in rep.column_norms.items())
    _emit(head + norms + rep.summary() + "\n", args.report)
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="calibdesign", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, pose=True, sigma=True):
        p.add_argument("--model", required=True, help="model file or shipped:NAME")
        if pose:
            p.add_argument("--test-pose", required=True, help="comma-separated joint angles, e.g. =-45deg,20deg")
        if sigma:
            p.add_argument("--sigma", type=float, default=1.0, help="measurement noise s.t.d. per axis [m]")
        p.add_argument("--report", help="write the report here instead of stdout")

    p = sub.add_parser("design", help="optimize a calibration plan for a test pose")
    common(p)
    p.add_argument("--m", type=int, required=True, help="number of measurement configurations")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--starts", type=int, default=512)
    p.add_argument("--filter-quantile", type=float, default=0.1)
    p.add_argument("--joint-limits", help="override limits: min1,max1,min2,max2,...")
    p.add_argument("--baseline-plans", type=int, default=2000, help="random plans for comparison (0 = skip)")
    p.add_argument("--out", help="plan CSV to write")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("evaluate", help="score a plan")
    common(p)
    p.add_argument("--plan", required=True, help="plan CSV or shipped:NAME")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="Monte Carlo calibration campaign")
    common(p)
    p.add_argument("--plan", required=True)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-perturb", action="store_true", help="true robot equals the nominal model")
    p.add_argument("--out", help="per-trial campaign CSV")
    p.add_argument("--plot", help="summary image (PNG) path; needs matplotlib")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("baseline", help="rho0 distribution of random plans")
    common(p)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--plans", type=int, default=20_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("compare", help="side-by-side comparison of plans")
    common(p)
    p.add_argument("--plan", action="append", required=True, help="NAME=PATH (repeatable)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("analytic-2r", help="closed-form planar two-link results")
    p.add_argument("--q20", help="test-pose second joint angle")
    p.add_argument("--table", action="store_true", help="rows at 0, 30, ..., 180 deg")
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--l1", type=float, default=1.0)
    p.add_argument("--l2", type=float, default=0.8)
    p.add_argument("--report")
    p.set_defaults(func=cmd_analytic_2r)

    p = sub.add_parser("identify", help="identify parameters from a measurement CSV")
    common(p, pose=False, sigma=False)
    p.add_argument("--measurements", required=True)
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("screen", help="find non-influential and dependent parameters")
    common(p, pose=False, sigma=False)
    p.add_argument("--probes", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_screen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CalibError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
