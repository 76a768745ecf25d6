"""Built-in desk-scale models.

The default spiking model is a small branched tree carrying a classic
squid-type channel pair (fast Na+ m^3 h, delayed-rectifier K+ n^4) with the
kinetics slowed and the leak reversal raised so the cell fires tonically
without injected current. Every structural property under test (order,
stability limits, oscillation behavior) lives in this surrogate; exact
published cortical-cell parameters are deliberately not reproduced.
"""

from __future__ import annotations

import math

from .channels import ChannelSpec, GateKinetics, RateTerm
from .model import CalciumParams, CompiledModel, compile_model
from .morphology import Compartment, MorphologyTree, build_tree

# Surrogate electrical constants (SI).
SURROGATE_CM = 0.01          # F/m^2
SURROGATE_RM = 1.0 / 20.0    # ohm*m^2
SURROGATE_RL = 1.0           # ohm*m
SURROGATE_EL_SOMA = -0.022   # V; raised above rest to drive tonic firing
SURROGATE_EL_AXON = -0.015   # V
SURROGATE_EL_DEND = -0.045   # V
SURROGATE_GNA = 6000.0       # S/m^2
SURROGATE_GK = 10000.0       # S/m^2
SURROGATE_ENA = 0.05         # V
SURROGATE_EK = -0.077        # V
SURROGATE_TAU_SCALE = 6.0    # kinetics slowdown (wider spikes)
SURROGATE_N_SHIFT = 0.015    # V; rectifier activation shifted off rest
#: The shunted dendritic tip: a large constant leak makes this compartment
#: the stiffest point of the model at every instant, so the explicit
#: schemes lose stability exactly where the frozen analysis predicts.
SURROGATE_SHUNT_RM = 2.5e-4  # ohm*m^2 (alpha = 4e5 1/s at the tip)

#: gbar multiplier for the smooth no-spike regime used by order studies.
SUBTHRESHOLD_GBAR_SCALE = 1e-3


def squid_channels(gbar_na: float = SURROGATE_GNA,
                   gbar_k: float = SURROGATE_GK,
                   gbar_scale: float = 1.0,
                   tau_scale: float = SURROGATE_TAU_SCALE,
                   n_shift: float = SURROGATE_N_SHIFT) -> list:
    """Fast Na+ (m^3 h) and delayed-rectifier K+ (n^4) channel pair.

    Rates are squid-type alpha/beta forms in SI units; tau_scale > 1 slows
    every gate by that factor, and n_shift moves the rectifier's activation
    range so it is closed at rest and lingers after each spike.
    """
    s = 1.0 / tau_scale

    def rt(kind, rate, v_half, scale):
        return RateTerm(kind=kind, rate=rate * s, v_half=v_half, scale=scale)

    m_kin = GateKinetics(alpha=rt("linoid", 1.0e5, -0.040, 0.010),
                         beta=rt("exp", 4.0e3, -0.065, -0.018))
    h_kin = GateKinetics(alpha=rt("exp", 70.0, -0.065, -0.020),
                         beta=rt("sigmoid", 1.0e3, -0.035, 0.010))
    n_kin = GateKinetics(alpha=rt("linoid", 1.0e4, -0.055 + n_shift, 0.010),
                         beta=rt("exp", 125.0, -0.065 + n_shift, -0.080))
    return [
        ChannelSpec(name="na", gbar=gbar_na * gbar_scale,
                    reversal=SURROGATE_ENA, exponent=3,
                    activation=m_kin, inactivation=h_kin),
        ChannelSpec(name="kdr", gbar=gbar_k * gbar_scale,
                    reversal=SURROGATE_EK, exponent=4,
                    activation=n_kin),
    ]


def surrogate_tree() -> MorphologyTree:
    """16 compartments: soma, two main chains, three side branches.

    The tip-to-tip path through the soma is 13 compartments long. The leak
    reversal runs from depolarizing at the axon tip to hyperpolarizing in
    the dendrites, so a genuine spatial voltage profile develops, and the
    deepest dendritic side-branch tip carries the shunt override.
    """
    els = SURROGATE_EL_SOMA

    def comp(cid, parent, radius, length, el, r_m=SURROGATE_RM):
        return Compartment(id=cid, parent=parent, radius=radius,
                           length=length, c_m=SURROGATE_CM, r_m=r_m,
                           r_L=SURROGATE_RL, E_L=el)

    comps = [comp(0, None, 6e-6, 300e-6, els)]
    for i in range(1, 7):                      # dendrite chain
        el = SURROGATE_EL_DEND + (els - SURROGATE_EL_DEND) * (7 - i) / 7.0
        comps.append(comp(i, i - 1 if i > 1 else 0, 2.5e-6, 300e-6, el))
    for i in range(7, 13):                     # axon chain
        el = SURROGATE_EL_AXON + (els - SURROGATE_EL_AXON) * (i - 7) / 6.0
        comps.append(comp(i, i - 1 if i > 7 else 0, 2.0e-6, 300e-6, el))
    comps.append(comp(13, 3, 1.5e-6, 250e-6, SURROGATE_EL_DEND))
    comps.append(comp(14, 9, 1.5e-6, 250e-6, SURROGATE_EL_AXON))
    comps.append(comp(15, 13, 1.2e-6, 250e-6, SURROGATE_EL_DEND,
                      r_m=SURROGATE_SHUNT_RM))
    return build_tree(comps)


def surrogate_model(gbar_scale: float = 1.0,
                    rk_gate_multistage: bool = True) -> CompiledModel:
    """The default spiking surrogate; gbar_scale < 1 tames it."""
    return compile_model(surrogate_tree(),
                         squid_channels(gbar_scale=gbar_scale),
                         rk_gate_multistage=rk_gate_multistage)


def subthreshold_model() -> CompiledModel:
    """Smooth no-spike variant used by the convergence-order study."""
    return surrogate_model(gbar_scale=SUBTHRESHOLD_GBAR_SCALE)


def constant_kinetics(value: float, tau: float = 1.0) -> GateKinetics:
    """Voltage-independent kinetics; a gate initialized at steady state
    never moves, freezing the channel conductance for stability studies."""
    return GateKinetics(yinf_curve=RateTerm(kind="constant", rate=value),
                        tau_curve=RateTerm(kind="constant", rate=tau))


def uniform_chain_model(n: int, radius: float = 2e-6, length: float = 3e-4,
                        r_m: float = SURROGATE_RM, e_l: float = -0.06,
                        gbar: float = 0.0, gate_value: float = 0.5,
                        reversal: float = 0.0) -> CompiledModel:
    """Unbranched chain of identical compartments (c1 = c2 everywhere).

    Cosine plane waves cos(theta (j + 1/2)) are exact eigenmodes of its
    diffusion operator. An optional frozen-gate channel adds a constant
    conductance contribution to K.
    """
    comps = [Compartment(id=i, parent=None if i == 0 else i - 1,
                         radius=radius, length=length, c_m=SURROGATE_CM,
                         r_m=r_m, r_L=SURROGATE_RL, E_L=e_l)
             for i in range(n)]
    chans = []
    if gbar > 0.0:
        chans.append(ChannelSpec(name="frozen", gbar=gbar, reversal=reversal,
                                 exponent=1,
                                 activation=constant_kinetics(gate_value)))
    return compile_model(build_tree(comps), chans)


def passive_single_compartment(r_m: float = SURROGATE_RM,
                               e_l: float = -0.04) -> CompiledModel:
    """One passive compartment: dV/dt = alpha (E_L - V)."""
    comp = Compartment(id=0, parent=None, radius=2e-6, length=3e-4,
                       c_m=SURROGATE_CM, r_m=r_m, r_L=SURROGATE_RL, E_L=e_l)
    return compile_model(build_tree([comp]), [])


def passive_chain_model(n: int = 50, comps_per_lambda: int = 10,
                        radius: float = 2e-6, e_l: float = -0.07,
                        clamp_v: float = None) -> CompiledModel:
    """Uniform passive chain sized in units of the length constant.

    lambda = sqrt(r_m a / (2 r_L)); compartment length is lambda divided by
    comps_per_lambda. clamp_v holds compartment 0 at a fixed voltage.
    """
    lam = math.sqrt(SURROGATE_RM * radius / (2.0 * SURROGATE_RL))
    h = lam / comps_per_lambda
    comps = [Compartment(id=i, parent=None if i == 0 else i - 1,
                         radius=radius, length=h, c_m=SURROGATE_CM,
                         r_m=SURROGATE_RM, r_L=SURROGATE_RL, E_L=e_l)
             for i in range(n)]
    clamps = None if clamp_v is None else {0: clamp_v}
    return compile_model(build_tree(comps), [], clamps=clamps)


def length_constant(radius: float = 2e-6, r_m: float = SURROGATE_RM,
                    r_l: float = SURROGATE_RL) -> float:
    """Cable length constant lambda = sqrt(r_m a / (2 r_L)), meters."""
    return math.sqrt(r_m * radius / (2.0 * r_l))


def calcium_demo_channel(gbar: float = 10.0) -> ChannelSpec:
    """Calcium-source channel wired to a pool-driven gate, for tests."""
    act = GateKinetics(alpha=RateTerm("sigmoid", 500.0, -0.03, 0.005),
                       beta=RateTerm("exp", 100.0, -0.06, -0.02))
    return ChannelSpec(name="ca_demo", gbar=gbar, reversal=0.12, exponent=2,
                       activation=act, calcium_source=True)


def calcium_params(influx_scale: float = 5e7,
                   decay_time: float = 0.02) -> CalciumParams:
    return CalciumParams(influx_scale=influx_scale, decay_time=decay_time,
                         enabled=True)
