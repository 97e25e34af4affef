"""Shipped example manipulators."""

from __future__ import annotations

from importlib import resources

from .errors import InputError
from .io import parse_model
from .kinematics import ElementaryTransform, KinematicModel, Parameter

PARAMETER_SETS = {
    "link-lengths": ("l1", "l2"),
    "joint-offsets": ("dq1", "dq2"),
    "both": ("l1", "l2", "dq1", "dq2"),
}

SHIPPED = ("two_link", "two_link_offsets", "two_link_full", "six_r")


def two_link_model(l1: float = 1.0, l2: float = 0.8, parameter_set: str = "link-lengths") -> KinematicModel:
    """Planar 2R arm in the xy-plane.

    All four geometric parameters exist in the chain; ``parameter_set``
    selects which are identifiable. Note the parameters are the full link
    lengths, so a deviation enters additively on top of the nominal value.
    """
    if parameter_set not in PARAMETER_SETS:
        raise InputError(f"parameter_set must be one of {sorted(PARAMETER_SETS)}")
    ident = set(PARAMETER_SETS[parameter_set])
    chain = (
        ElementaryTransform("rot", "z", "joint", joint=0, param="dq1"),
        ElementaryTransform("trans", "x", "param", param="l1"),
        ElementaryTransform("rot", "z", "joint", joint=1, param="dq2"),
        ElementaryTransform("trans", "x", "param", param="l2"),
    )
    params = (
        Parameter("l1", float(l1), "m", "l1" in ident),
        Parameter("l2", float(l2), "m", "l2" in ident),
        Parameter("dq1", 0.0, "rad", "dq1" in ident),
        Parameter("dq2", 0.0, "rad", "dq2" in ident),
    )
    return KinematicModel(chain, params, name=f"two-link ({parameter_set})")


def shipped_model_text(name: str) -> str:
    if name not in SHIPPED:
        raise InputError(f"unknown shipped model {name!r}; choose from {SHIPPED}")
    return resources.files("calibdesign.data").joinpath(f"{name}.model").read_text()


def load_shipped_model(name: str) -> KinematicModel:
    return parse_model(shipped_model_text(name))


def shipped_path(relative: str):
    """Filesystem path of a shipped data file (models and plan fixtures)."""
    return resources.files("calibdesign.data").joinpath(relative)
