import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cablesim.channels import (CalciumPool, ChannelSpec, ChannelState,
                               GateKinetics, RateTerm, TableCurve,
                               calcium_step, channel_conductance,
                               gate_steady_init, gate_step)
from cablesim.errors import StepRejected
from cablesim.models import squid_channels


def const_kinetics(yinf=0.5, tau=2e-3):
    return GateKinetics(yinf_curve=RateTerm("constant", yinf),
                        tau_curve=RateTerm("constant", tau))


@pytest.fixture(scope="module")
def classic():
    """Unshifted, unslowed squid channels for rate-formula oracles."""
    return squid_channels(tau_scale=1.0, n_shift=0.0)


def test_gate_steady_init_constant():
    assert gate_steady_init(const_kinetics(0.5), -0.07) == 0.5


def test_gate_steady_init_at_rest_table2(classic):
    for spec in classic:
        y = gate_steady_init(spec.activation, -0.07)
        assert 0.0 <= y <= 1.0


def test_n_gate_rest_matches_rate_formula_oracle(classic):
    # independent evaluation of the alpha/beta forms at V = -65 mV
    v = -0.065
    alpha = 1.0e4 * (v + 0.055) / (1.0 - math.exp(-(v + 0.055) / 0.010))
    beta = 125.0 * math.exp((v + 0.065) / -0.080)
    expected = alpha / (alpha + beta)
    n_kin = classic[1].activation
    assert gate_steady_init(n_kin, v) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.3177, abs=2e-4)  # classic squid value


def test_m_gate_rate_oracle(classic):
    v = -0.055
    alpha = 1.0e5 * (v + 0.040) / (1.0 - math.exp(-(v + 0.040) / 0.010))
    beta = 4.0e3 * math.exp((v + 0.065) / -0.018)
    m_kin = classic[0].activation
    assert float(m_kin.yinf(v)) == pytest.approx(alpha / (alpha + beta),
                                                 rel=1e-12)
    assert float(m_kin.tau(v)) == pytest.approx(1.0 / (alpha + beta),
                                                rel=1e-12)


def test_linoid_singularity_guard():
    term = RateTerm("linoid", rate=1.0e5, v_half=-0.040, scale=0.010)
    at = float(term(-0.040))
    near = float(term(-0.040 + 5e-10))
    off = float(term(-0.040 + 1e-7))
    assert at == pytest.approx(1.0e5 * 0.010, rel=1e-9)
    assert near == pytest.approx(at, rel=1e-6)
    assert off == pytest.approx(at, rel=1e-4)


def test_yinf_bounded_tau_positive_over_range(classic):
    vs = np.linspace(-0.15, 0.1, 501)
    for spec in classic:
        for kin in filter(None, (spec.activation, spec.inactivation)):
            yi = kin.yinf(vs)
            ta = kin.tau(vs)
            assert np.all((yi >= 0.0) & (yi <= 1.0))
            assert np.all(ta > 0.0)


def test_channel_conductance_fully_open():
    spec = ChannelSpec(name="x", gbar=120.0, reversal=0.05, exponent=3,
                       activation=const_kinetics(),
                       inactivation=const_kinetics())
    state = ChannelState(gates={"x": (1.0, 1.0)})
    assert channel_conductance(spec, state) == 120.0


def test_channel_conductance_hand_arithmetic():
    spec = ChannelSpec(name="x", gbar=120.0, reversal=0.05, exponent=3,
                       activation=const_kinetics(),
                       inactivation=const_kinetics())
    state = ChannelState(gates={"x": (0.5, 0.2)})
    assert channel_conductance(spec, state) == pytest.approx(3.0, rel=1e-15)


def test_channel_conductance_zero_gbar():
    spec = ChannelSpec(name="x", gbar=0.0, reversal=0.05, exponent=2,
                       activation=const_kinetics())
    assert channel_conductance(spec, ChannelState(gates={"x": (0.7, None)})
                               ) == 0.0


@given(m1=st.floats(0, 1), m2=st.floats(0, 1), h=st.floats(0, 1))
@settings(max_examples=50, deadline=None)
def test_conductance_monotone_in_gates(m1, m2, h):
    spec = ChannelSpec(name="x", gbar=50.0, reversal=0.0, exponent=3,
                       activation=const_kinetics(),
                       inactivation=const_kinetics())
    lo, hi = sorted((m1, m2))
    g_lo = channel_conductance(spec, ChannelState(gates={"x": (lo, h)}))
    g_hi = channel_conductance(spec, ChannelState(gates={"x": (hi, h)}))
    assert g_lo <= g_hi


RULES = ("forward_euler", "backward_euler", "trapezoidal",
         "exact_exponential")


@pytest.mark.parametrize("rule", RULES)
def test_gate_step_fixed_point(rule, classic):
    kin = classic[0].activation
    v = -0.05
    y = gate_steady_init(kin, v)
    tau = float(kin.tau(v))
    ks = (1e-6, 1e-4, 1.9 * tau) if rule == "forward_euler" else \
        (1e-6, 1e-4, 1e-2)
    for k in ks:
        assert gate_step(kin, y, v, k, rule) == pytest.approx(y, abs=1e-15)


def test_gate_step_exact_exponential_closed_form(classic):
    kin = classic[0].activation
    v, y0 = -0.03, 0.1
    yinf = float(kin.yinf(v))
    tau = float(kin.tau(v))
    for k in (1e-5, 1e-3, 0.05):
        expected = yinf + (y0 - yinf) * math.exp(-k / tau)
        assert gate_step(kin, y0, v, k, "exact_exponential") == \
            pytest.approx(expected, rel=1e-15)


def test_trapezoidal_third_order_per_step(classic):
    # |trap - exact| should shrink ~8x when k halves
    kin = classic[0].activation
    v, y0 = -0.03, 0.1

    def err(k):
        exact = gate_step(kin, y0, v, k, "exact_exponential")
        return abs(gate_step(kin, y0, v, k, "trapezoidal") - exact)

    tau = float(kin.tau(v))
    k = tau / 4.0
    ratio = err(k) / err(k / 2.0)
    assert 6.5 < ratio < 9.5


def test_forward_euler_step_rejected_beyond_two_tau():
    kin = const_kinetics(yinf=0.0, tau=1e-3)
    with pytest.raises(StepRejected):
        gate_step(kin, 1.0, -0.07, 2.1e-3, "forward_euler")
    # at k <= 2 tau the step is accepted
    gate_step(kin, 1.0, -0.07, 1.9e-3, "forward_euler")


@pytest.mark.parametrize("rule", ["backward_euler", "trapezoidal",
                                  "exact_exponential"])
@given(y=st.floats(0, 1), logk=st.floats(-6, 1), v=st.floats(-0.15, 0.1))
@settings(max_examples=80, deadline=None)
def test_implicit_rules_keep_gates_in_unit_interval(rule, y, logk, v):
    kin = squid_channels(tau_scale=1.0, n_shift=0.0)[0].activation
    k = 10.0 ** logk
    out = gate_step(kin, y, v, k, rule)
    assert -1e-12 <= out <= 1.0 + 1e-12


def test_trapezoidal_two_half_steps_third_order(classic):
    kin = classic[0].activation
    v, y0 = -0.04, 0.2
    tau = float(kin.tau(v))
    k = tau / 3.0

    def twostep(k):
        mid = gate_step(kin, y0, v, k / 2, "trapezoidal")
        return gate_step(kin, mid, v, k / 2, "trapezoidal")

    exact = gate_step(kin, y0, v, k, "exact_exponential")
    one = abs(gate_step(kin, y0, v, k, "trapezoidal") - exact)
    two = abs(twostep(k) - exact)
    # two half steps agree with one step to O(k^3): error drops ~4x
    assert two < one
    assert one / two == pytest.approx(4.0, rel=0.35)


def test_calcium_step_empty_pool():
    pool = CalciumPool(concentration=0.0, influx_scale=1e6, decay_time=0.02)
    out = calcium_step(pool, 0.0, 1e-4)
    assert out.concentration == 0.0


def test_calcium_pure_decay_closed_form():
    pool = CalciumPool(concentration=0.7, influx_scale=1e6, decay_time=0.02)
    out = calcium_step(pool, 0.0, 5e-3)
    assert out.concentration == pytest.approx(0.7 * math.exp(-5e-3 / 0.02),
                                              rel=1e-14)


def test_calcium_steady_state_oracle():
    # constant inward current -> steady state B_Ca * |I| * tau
    pool = CalciumPool(concentration=0.0, influx_scale=2e6, decay_time=0.01)
    i_ca = -3e-9
    for _ in range(5000):
        pool = calcium_step(pool, i_ca, 1e-4)
    assert pool.concentration == pytest.approx(2e6 * 3e-9 * 0.01, rel=1e-6)


def test_calcium_never_negative():
    pool = CalciumPool(concentration=0.1, influx_scale=1e6, decay_time=0.01)
    out = calcium_step(pool, +1e-6, 1.0)  # strong outward current
    assert out.concentration == 0.0


def test_table_kinetics_match_closed_form(classic):
    kin = classic[0].activation
    grid = tuple(np.linspace(-0.15, 0.1, 2001))
    table = GateKinetics(
        yinf_curve=TableCurve(x=grid, y=tuple(float(x)
                                              for x in kin.yinf(grid))),
        tau_curve=TableCurve(x=grid, y=tuple(float(x)
                                             for x in kin.tau(grid))))
    vs = np.linspace(-0.12, 0.08, 37)
    assert np.allclose(table.yinf(vs), kin.yinf(vs), atol=2e-6)
    assert np.allclose(table.tau(vs), kin.tau(vs), rtol=2e-4)


def test_state_function_product_form():
    spec = ChannelSpec(name="x", gbar=1.0, reversal=0.0, exponent=4,
                       activation=const_kinetics())
    assert spec.state_function(0.5) == 0.5 ** 4
    spec2 = ChannelSpec(name="y", gbar=1.0, reversal=0.0, exponent=2,
                        activation=const_kinetics(),
                        inactivation=const_kinetics())
    assert spec2.state_function(0.5, 0.25) == 0.5 ** 2 * 0.25
