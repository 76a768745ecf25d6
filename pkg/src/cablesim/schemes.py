"""Scheme roster shared by the integrators, kernels and reports."""

from __future__ import annotations

from enum import Enum

from .errors import UnsupportedScheme


class SchemeKind(Enum):
    """The seven membrane-voltage integration schemes."""

    FTCS = "ftcs"
    BTCS = "btcs"
    EXPONENTIAL_EULER = "exp_euler"
    HCN = "hcn"
    RK21 = "rk21"
    RK41 = "rk41"
    TAYLOR2 = "taylor2"

    @property
    def code(self) -> int:
        return _CODES[self]

    @property
    def appendix_only(self) -> bool:
        """Taylor2 is reported as appendix-only."""
        return self is SchemeKind.TAYLOR2

    @property
    def implicit(self) -> bool:
        return self in (SchemeKind.BTCS, SchemeKind.HCN)

    @property
    def unconditionally_stable(self) -> bool:
        return self in (SchemeKind.BTCS, SchemeKind.HCN,
                        SchemeKind.EXPONENTIAL_EULER)


_CODES = {
    SchemeKind.FTCS: 0,
    SchemeKind.BTCS: 1,
    SchemeKind.EXPONENTIAL_EULER: 2,
    SchemeKind.HCN: 3,
    SchemeKind.RK21: 4,
    SchemeKind.RK41: 5,
    SchemeKind.TAYLOR2: 6,
}

# Gate-update rule codes shared with the kernels.
GR_FORWARD_EULER = 0
GR_BACKWARD_EULER = 1
GR_TRAPEZOIDAL = 2
GR_EXACT_EXPONENTIAL = 3
GR_HEUN = 4
GR_RK4 = 5


def parse_scheme(name) -> SchemeKind:
    """Accept a SchemeKind or its string name (case-insensitive)."""
    if isinstance(name, SchemeKind):
        return name
    try:
        return SchemeKind(str(name).lower())
    except ValueError:
        raise UnsupportedScheme(f"unknown scheme {name!r}; expected one of "
                                f"{[s.value for s in SchemeKind]}") from None


def gate_rule_for(scheme: SchemeKind, rk_gate_multistage: bool = True) -> int:
    """Gate integrator paired with each voltage scheme.

    Explicit PDE schemes advance gates with forward Euler, BTCS with backward
    Euler, exponential Euler exactly, HCN with the staggered trapezoidal
    closed form, and the RK schemes with a matching multistage step unless
    the model disables that.
    """
    if scheme is SchemeKind.FTCS or scheme is SchemeKind.TAYLOR2:
        return GR_FORWARD_EULER
    if scheme is SchemeKind.BTCS:
        return GR_BACKWARD_EULER
    if scheme is SchemeKind.EXPONENTIAL_EULER:
        return GR_EXACT_EXPONENTIAL
    if scheme is SchemeKind.HCN:
        return GR_TRAPEZOIDAL
    if scheme is SchemeKind.RK21:
        return GR_HEUN if rk_gate_multistage else GR_FORWARD_EULER
    if scheme is SchemeKind.RK41:
        return GR_RK4 if rk_gate_multistage else GR_FORWARD_EULER
    raise UnsupportedScheme(str(scheme))
