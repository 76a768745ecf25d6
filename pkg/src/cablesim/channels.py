"""Ion channel kinetics, gate updates, and the calcium pool.

Gate state y obeys dy/dt = (y_inf(V) - y) / tau(V). Single steps of that ODE
are available in closed form for the forward-Euler, backward-Euler,
trapezoidal and exact-exponential rules; the implicit and exact rules keep
y inside [0, 1] unconditionally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import StepRejected

#: Window around a removable 0/0 point inside which rate functions switch
#: to their series limit, volts.
SINGULARITY_WINDOW = 1e-9

RATE_KINDS = ("constant", "exp", "sigmoid", "linoid")


@dataclass(frozen=True)
class RateTerm:
    """One parametric voltage-dependent factor of a rate expression.

    kind "constant": rate
    kind "exp":      rate * exp((x - v_half) / scale)
    kind "sigmoid":  rate / (1 + exp(-(x - v_half) / scale))
    kind "linoid":   rate * (x - v_half) / (1 - exp(-(x - v_half) / scale)),
                     with the removable singularity at x = v_half replaced by
                     its series limit rate * (scale + (x - v_half)/2).
    """

    kind: str
    rate: float
    v_half: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in RATE_KINDS:
            raise ValueError(f"unknown rate kind {self.kind!r}")
        if self.kind != "constant" and self.scale == 0.0:
            raise ValueError("scale must be nonzero")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.full_like(x, self.rate)
        u = x - self.v_half
        if self.kind == "exp":
            return self.rate * np.exp(u / self.scale)
        if self.kind == "sigmoid":
            return self.rate / (1.0 + np.exp(-u / self.scale))
        # linoid
        near = np.abs(u) < SINGULARITY_WINDOW
        safe = np.where(near, self.scale, u)
        val = self.rate * safe / (1.0 - np.exp(-safe / self.scale))
        lim = self.rate * (self.scale + 0.5 * u)
        return np.where(near, lim, val)


@dataclass(frozen=True)
class TableCurve:
    """Sampled curve with linear interpolation, clamped at the ends."""

    x: tuple
    y: tuple

    def __call__(self, v):
        return np.interp(np.asarray(v, dtype=float), self.x, self.y)


@dataclass(frozen=True)
class GateKinetics:
    """Gate steady state y_inf(V) in [0,1] and time constant tau(V) > 0.

    Defined either from alpha/beta rate terms (y_inf = a/(a+b), tau = 1/(a+b))
    or directly from y_inf and tau curves. `driver` selects the evaluation
    variable: membrane voltage or the calcium pool concentration.
    """

    alpha: Optional[RateTerm] = None
    beta: Optional[RateTerm] = None
    yinf_curve: object = None
    tau_curve: object = None
    driver: str = "v"

    def __post_init__(self):
        from_rates = self.alpha is not None and self.beta is not None
        direct = self.yinf_curve is not None and self.tau_curve is not None
        if from_rates == direct:
            raise ValueError("define kinetics by alpha/beta or by yinf/tau, "
                             "not both")
        if self.driver not in ("v", "ca"):
            raise ValueError("driver must be 'v' or 'ca'")

    @property
    def from_rates(self) -> bool:
        return self.alpha is not None

    def yinf(self, x):
        if self.from_rates:
            a = self.alpha(x)
            b = self.beta(x)
            return a / (a + b)
        return np.asarray(self.yinf_curve(x), dtype=float)

    def tau(self, x):
        if self.from_rates:
            return 1.0 / (self.alpha(x) + self.beta(x))
        return np.asarray(self.tau_curve(x), dtype=float)


@dataclass(frozen=True)
class ChannelSpec:
    """One membrane channel: gbar * m^p * (h) with reversal E."""

    name: str
    gbar: float                 # specific conductance, S/m^2
    reversal: float             # E_i, volts
    exponent: int               # p >= 1
    activation: GateKinetics
    inactivation: Optional[GateKinetics] = None
    calcium_source: bool = False   # channel current feeds the calcium pool
    calcium_dependent: bool = False

    def __post_init__(self):
        if self.gbar < 0.0:
            raise ValueError(f"channel {self.name}: gbar must be >= 0")
        if self.exponent < 1:
            raise ValueError(f"channel {self.name}: exponent must be >= 1")

    @property
    def has_inactivation(self) -> bool:
        return self.inactivation is not None

    def state_function(self, m, h=None):
        """f(m, h) = m^p * h (or m^p without inactivation)."""
        f = m ** self.exponent
        if self.has_inactivation:
            if h is None:
                raise ValueError(f"channel {self.name} needs an h gate value")
            f = f * h
        return f


@dataclass(frozen=True)
class ChannelState:
    """Per-channel gate values for one compartment: name -> (m, h or None)."""

    gates: dict

    def m(self, name):
        return self.gates[name][0]

    def h(self, name):
        return self.gates[name][1]


@dataclass(frozen=True)
class CalciumPool:
    """Dimensionless calcium pool with linear influx and exponential decay."""

    concentration: float = 0.0
    influx_scale: float = 0.0   # pool units per ampere-second
    decay_time: float = 1.0     # seconds

    def __post_init__(self):
        if self.decay_time <= 0.0:
            raise ValueError("decay_time must be > 0")
        if self.concentration < 0.0:
            raise ValueError("concentration must be >= 0")


def gate_steady_init(kinetics: GateKinetics, v: float) -> float:
    """Steady-state gate value y_inf(v)."""
    if not math.isfinite(v):
        raise ValueError("V must be finite")
    return float(kinetics.yinf(v))


def channel_conductance(spec: ChannelSpec, state: ChannelState) -> float:
    """g_i = gbar_i * f_i(m_i, h_i), S/m^2."""
    m, h = state.gates[spec.name]
    return spec.gbar * float(spec.state_function(m, h))


GATE_RULES = ("forward_euler", "backward_euler", "trapezoidal",
              "exact_exponential")


def gate_step(kinetics: GateKinetics, y: float, v_eval: float, k: float,
              rule: str) -> float:
    """Advance y one step of dy/dt = (y_inf - y)/tau with V frozen at v_eval.

    The backward-Euler, trapezoidal and exact rules are closed forms of the
    frozen-V linear ODE and never reject. forward_euler raises StepRejected
    for k > 2*tau, where the update could leave [0, 1].
    """
    if k <= 0.0:
        raise ValueError("k must be > 0")
    if rule not in GATE_RULES:
        raise ValueError(f"unknown gate rule {rule!r}")
    yinf = float(kinetics.yinf(v_eval))
    tau = float(kinetics.tau(v_eval))
    if rule == "forward_euler":
        if k > 2.0 * tau:
            raise StepRejected(f"forward Euler gate step k={k!r} exceeds "
                               f"2*tau={2.0 * tau!r}")
        return y + k * (yinf - y) / tau
    if rule == "backward_euler":
        return (y + (k / tau) * yinf) / (1.0 + k / tau)
    if rule == "trapezoidal":
        r = k / (2.0 * tau)
        out = (y * (1.0 - r) + 2.0 * r * yinf) / (1.0 + r)
        # the closed form is A-stable but not positivity-preserving for
        # k > 2*tau; the clamp keeps the gate contract unconditional
        return min(max(out, 0.0), 1.0)
    return yinf + (y - yinf) * math.exp(-k / tau)


def calcium_step(pool: CalciumPool, i_ca: float, k: float) -> CalciumPool:
    """Exact exponential update of d[Ca]/dt = -B_Ca*I_Ca - [Ca]/tau.

    I_Ca is frozen over the step; inward (negative) current raises the pool.
    The result is clamped at zero.
    """
    if k <= 0.0:
        raise ValueError("k must be > 0")
    tau = pool.decay_time
    steady = -pool.influx_scale * i_ca * tau
    decay = math.exp(-k / tau)
    conc = steady + (pool.concentration - steady) * decay
    return CalciumPool(concentration=max(conc, 0.0),
                       influx_scale=pool.influx_scale,
                       decay_time=pool.decay_time)
