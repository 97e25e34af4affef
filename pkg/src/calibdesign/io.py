"""Text formats: model definitions, plan/measurement/campaign CSV files.

Model definition file
---------------------
Line oriented; ``#`` starts a comment, blank lines are ignored::

    name = two-link
    joints = 2

    [parameters]
    # name  nominal  unit  identifiable
    l1      1.0      m     yes

    [chain]
    # kind  axis  driver  ref  [offset-parameter]
    rot     z     joint   1    dq1
    trans   x     param   l1
    trans   z     const   0.675

    [limits]
    # joint  min  max        (radians, optional section)
    1        -3.14  3.14

    [workspace]
    # axis  min  max         (meters, optional section)
    z       0.2  4.0

``kind`` is ``trans`` or ``rot``; ``driver`` is ``const`` (ref is the
value), ``param`` (ref is a parameter name) or ``joint`` (ref is the
1-based joint number, optionally followed by an offset parameter name).
Parameter units are ``m`` for translations and ``rad`` for rotations.

CSV files carry ``#`` comment lines before the header (used to record the
seed); numbers are written with ``repr`` so a write/read cycle is exact.
"""

from __future__ import annotations

import csv
import io as _io
from pathlib import Path

import numpy as np

from .errors import InputError, ModelFormatError
from .kinematics import AXES, DRIVERS, KINDS, ElementaryTransform, KinematicModel, Parameter
from .plan import MeasurementSet, Plan

_TRUE = {"yes", "true", "1", "y"}
_FALSE = {"no", "false", "0", "n"}
SECTIONS = ("parameters", "chain", "limits", "workspace")


def _float(token: str, line: int, field: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ModelFormatError(f"expected a number, got {token!r}", line, field) from None
    if not np.isfinite(value):
        raise ModelFormatError(f"value must be finite, got {token!r}", line, field)
    return value


def parse_model(text: str) -> KinematicModel:
    header: dict[str, str] = {}
    params: list[Parameter] = []
    chain: list[ElementaryTransform] = []
    limits: dict[int, tuple[float, float]] = {}
    workspace: dict[int, tuple[float, float]] = {}
    section = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ModelFormatError("unterminated section header", lineno)
            section = line[1:-1].strip().lower()
            if section not in SECTIONS:
                raise ModelFormatError(f"unknown section [{section}]", lineno)
            continue
        if section is None:
            if "=" not in line:
                raise ModelFormatError("expected 'key = value' before the first section", lineno)
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in ("name", "joints"):
                raise ModelFormatError(f"unknown header key {key!r}", lineno, key)
            header[key] = value
            continue

        tok = line.split()
        if section == "parameters":
            if len(tok) != 4:
                raise ModelFormatError(
                    "parameter rows need: name nominal unit identifiable", lineno
                )
            name, nominal, unit, flag = tok
            if unit not in ("m", "rad"):
                raise ModelFormatError(f"unit must be 'm' or 'rad', got {unit!r}", lineno, "unit")
            if flag.lower() in _TRUE:
                ident = True
            elif flag.lower() in _FALSE:
                ident = False
            else:
                raise ModelFormatError(
                    f"identifiable flag must be yes/no, got {flag!r}", lineno, "identifiable"
                )
            params.append(Parameter(name, _float(nominal, lineno, "nominal"), unit, ident))
        elif section == "chain":
            if len(tok) < 4:
                raise ModelFormatError("chain rows need: kind axis driver ref", lineno)
            kind, axis, driver, ref, *rest = tok
            if kind not in KINDS:
                raise ModelFormatError(f"kind must be one of {KINDS}", lineno, "kind")
            if axis not in AXES:
                raise ModelFormatError("axis must be x, y or z", lineno, "axis")
            if driver not in DRIVERS:
                raise ModelFormatError(f"driver must be one of {DRIVERS}", lineno, "driver")
            if rest and driver != "joint":
                raise ModelFormatError("only joint drivers take an offset parameter", lineno)
            if len(rest) > 1:
                raise ModelFormatError("too many fields", lineno)
            if driver == "const":
                chain.append(ElementaryTransform(kind, axis, "const", _float(ref, lineno, "ref")))
            elif driver == "param":
                chain.append(ElementaryTransform(kind, axis, "param", param=ref))
            else:
                try:
                    joint = int(ref)
                except ValueError:
                    raise ModelFormatError(f"joint number expected, got {ref!r}", lineno, "ref") from None
                if joint < 1:
                    raise ModelFormatError("joint numbers start at 1", lineno, "ref")
                offset = rest[0] if rest else None
                chain.append(ElementaryTransform(kind, axis, "joint", joint=joint - 1, param=offset))
        elif section == "limits":
            if len(tok) != 3:
                raise ModelFormatError("limit rows need: joint min max", lineno)
            try:
                joint = int(tok[0])
            except ValueError:
                raise ModelFormatError("joint number expected", lineno, "joint") from None
            limits[joint - 1] = (_float(tok[1], lineno, "min"), _float(tok[2], lineno, "max"))
        elif section == "workspace":
            if len(tok) != 3 or tok[0] not in AXES:
                raise ModelFormatError("workspace rows need: axis min max", lineno)
            workspace[AXES[tok[0]]] = (_float(tok[1], lineno, "min"), _float(tok[2], lineno, "max"))

    n_decl = None
    if "joints" in header:
        try:
            n_decl = int(header["joints"])
        except ValueError:
            raise ModelFormatError("joints must be an integer", field="joints") from None
    n = sum(1 for t in chain if t.driver == "joint")
    if n_decl is not None and n_decl != n:
        raise ModelFormatError(f"header declares {n_decl} joints but the chain drives {n}", field="joints")

    joint_limits = None
    if limits:
        if sorted(limits) != list(range(n)):
            raise ModelFormatError("the [limits] section must list every joint exactly once")
        joint_limits = tuple(limits[j] for j in range(n))
    box = None
    if workspace:
        box = tuple(workspace.get(a, (-np.inf, np.inf)) for a in range(3))
        box = tuple((lo if np.isfinite(lo) else -1e9, hi if np.isfinite(hi) else 1e9) for lo, hi in box)
    try:
        return KinematicModel(tuple(chain), tuple(params), joint_limits, box, header.get("name", ""))
    except ModelFormatError:
        raise
    except InputError as exc:
        raise ModelFormatError(str(exc)) from None


def format_model(model: KinematicModel) -> str:
    out = []
    if model.name:
        out.append(f"name = {model.name}")
    out.append(f"joints = {model.n_joints}")
    out.append("")
    out.append("[parameters]")
    out.append("# name nominal unit identifiable")
    for p in model.parameters:
        out.append(f"{p.name} {p.nominal!r} {p.unit} {'yes' if p.identifiable else 'no'}")
    out.append("")
    out.append("[chain]")
    out.append("# kind axis driver ref [offset]")
    for t in model.chain:
        if t.driver == "const":
            out.append(f"{t.kind} {t.axis} const {t.value!r}")
        elif t.driver == "param":
            out.append(f"{t.kind} {t.axis} param {t.param}")
        else:
            row = f"{t.kind} {t.axis} joint {t.joint + 1}"
            if t.param is not None:
                row += f" {t.param}"
            out.append(row)
    out.append("")
    out.append("[limits]")
    out.append("# joint min max")
    for j, (lo, hi) in enumerate(model.joint_limits):
        out.append(f"{j + 1} {lo!r} {hi!r}")
    if model.workspace is not None:
        out.append("")
        out.append("[workspace]")
        out.append("# axis min max")
        for axis, (lo, hi) in zip("xyz", model.workspace):
            out.append(f"{axis} {lo!r} {hi!r}")
    return "\n".join(out) + "\n"


def load_model(path) -> KinematicModel:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read model file {path}: {exc}") from None
    try:
        return parse_model(text)
    except ModelFormatError as exc:
        raise ModelFormatError(f"{path}: {exc}") from None


def save_model(model: KinematicModel, path) -> None:
    Path(path).write_text(format_model(model))


# ------------------------------------------------------------------ CSV


def _comment_block(comments: dict | None) -> str:
    if not comments:
        return ""
    return "".join(f"# {k}: {v}\n" for k, v in comments.items())


def _write_rows(header, rows, comments=None) -> str:
    buf = _io.StringIO()
    buf.write(_comment_block(comments))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _read_rows(text: str, source: str):
    lines = [(i, ln) for i, ln in enumerate(text.splitlines(), start=1)]
    body = [(i, ln) for i, ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    if not body:
        raise ModelFormatError(f"{source}: no header row")
    reader = csv.reader([ln for _, ln in body])
    rows = list(reader)
    header = [h.strip() for h in rows[0]]
    return header, [(body[k][0], r) for k, r in enumerate(rows[1:], start=1)]


def _joint_columns(header, source: str, trailing: list[str]) -> int:
    n = len(header) - len(trailing)
    expected = [f"q_{j}" for j in range(1, n + 1)] + trailing
    if n < 1 or header != expected:
        raise ModelFormatError(f"{source}: header must be {','.join(expected) if n >= 1 else 'q_1..q_n,' + ','.join(trailing)}", 1)
    return n


def format_plan(plan: Plan, comments: dict | None = None) -> str:
    header = [f"q_{j}" for j in range(1, plan.n_joints + 1)] + ["multiplicity"]
    rows = [list(map(float, q)) + [int(k)] for q, k in zip(plan.configs, plan.multiplicities)]
    return _write_rows(header, rows, comments)


def parse_plan(text: str, source: str = "plan") -> Plan:
    header, rows = _read_rows(text, source)
    n = _joint_columns(header, source, ["multiplicity"])
    configs, mult = [], []
    for lineno, row in rows:
        if len(row) != n + 1:
            raise ModelFormatError(f"{source}: expected {n + 1} fields", lineno)
        configs.append([_float(v, lineno, header[j]) for j, v in enumerate(row[:n])])
        try:
            mult.append(int(row[n]))
        except ValueError:
            raise ModelFormatError(f"{source}: multiplicity must be an integer", lineno, "multiplicity") from None
    if not configs:
        raise ModelFormatError(f"{source}: plan has no rows")
    try:
        return Plan(np.array(configs), np.array(mult, dtype=np.int64))
    except InputError as exc:
        raise ModelFormatError(f"{source}: {exc}") from None


def write_plan(plan: Plan, path, comments: dict | None = None) -> None:
    Path(path).write_text(format_plan(plan, comments))


def read_plan(path) -> Plan:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read plan file {path}: {exc}") from None
    return parse_plan(text, str(path))


def format_measurements(data: MeasurementSet, comments: dict | None = None) -> str:
    n = data.q.shape[1]
    header = [f"q_{j}" for j in range(1, n + 1)] + ["p_x", "p_y", "p_z"]
    rows = [list(map(float, q)) + list(map(float, p)) for q, p in zip(data.q, data.p)]
    return _write_rows(header, rows, comments)


def parse_measurements(text: str, source: str = "measurements") -> MeasurementSet:
    header, rows = _read_rows(text, source)
    n = _joint_columns(header, source, ["p_x", "p_y", "p_z"])
    q, p = [], []
    for lineno, row in rows:
        if len(row) != n + 3:
            raise ModelFormatError(f"{source}: expected {n + 3} fields", lineno)
        values = [_float(v, lineno, header[j]) for j, v in enumerate(row)]
        q.append(values[:n])
        p.append(values[n:])
    if not q:
        raise ModelFormatError(f"{source}: no measurement records")
    return MeasurementSet(np.array(q), np.array(p))


def write_measurements(data: MeasurementSet, path, comments: dict | None = None) -> None:
    Path(path).write_text(format_measurements(data, comments))


def read_measurements(path) -> MeasurementSet:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read measurement file {path}: {exc}") from None
    return parse_measurements(text, str(path))


def format_campaign(result, comments: dict | None = None) -> str:
    header = ["trial", "error", "dp_x", "dp_y", "dp_z", "converged"]
    rows = []
    for i in range(len(result.errors)):
        dp = result.error_vectors[i]
        rows.append([i, float(result.errors[i]), float(dp[0]), float(dp[1]), float(dp[2]),
                     int(result.converged[i])])
    return _write_rows(header, rows, comments)


def parse_angle(token: str) -> float:
    """Parse an angle; plain numbers and ``rad`` suffix are radians, ``deg`` is degrees."""
    token = token.strip()
    try:
        if token.endswith("deg"):
            return float(np.radians(float(token[:-3])))
        if token.endswith("rad"):
            return float(token[:-3])
        return float(token)
    except ValueError:
        raise InputError(f"cannot parse angle {token!r}") from None


def parse_angles(text: str) -> np.ndarray:
    parts = [p for p in text.replace(";", ",").split(",") if p.strip()]
    if not parts:
        raise InputError("empty angle list")
    return np.array([parse_angle(p) for p in parts])
