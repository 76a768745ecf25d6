"""Acceptance suite.

Proves, one test per criterion (run with -s to see the PASS lines):
  1.  Growth-factor oracle equivalence: per-scheme one-step amplification
      on a frozen cosine eigenmode matches the closed formulas to 1e-10
      across k in {0.1, 0.5, 1.0, 1.5, 2.5}/(K+2L), in under a second.
  2.  Stability-limit prediction on the spiking surrogate: the FTCS
      empirical blow-up (1 us grid) lies within 1 us of
      min_over_cycle_limit; RK21/RK41 empirical limits lie within 1 us of
      2/B and 2.7853/B; BTCS, exponential Euler and HCN complete every
      sweep cell 1..99 us without divergence.
  3.  Convergence orders on the smooth subthreshold regime: HCN slope in
      [1.7, 2.3]; FTCS, BTCS, exponential Euler, RK21, RK41 in [0.6, 1.4]
      (the RK order reduction).
  4.  Exponential Euler exactness: constant-coefficient scalar step error
      below 1e-14 for k up to 10 ms.
  5.  HCN oscillation onset at k = 3/(K+2L): deviations alternate and decay
      at ratio |g| < 1; detect_oscillations fires; quarter-rule amplitudes
      follow the |g|-geometric decay within 5%.
  6.  Taylor2 cubic stability frontier: max root magnitude 1 at P = 0.5
      (1e-6), inside the unit disk at 0.49, outside at 0.51.
  7.  Hines solver equals dense solves on 200 random trees (n <= 50) to
      1e-12, in under 10 s.
  8.  Analysis suite: quarter-rule reproduces constructed amplitudes
      exactly; the 3-spike/1-ADP cycle classifies as "3-1"; welch_psd puts
      a 15 Hz tone in the 15 Hz bin; empirical_order recovers exponents
      {0.5, 1, 2} to 1e-6.
  9.  Determinism: reruns are byte-identical, including sweep report trees
      at different worker counts.
  10. Passive-cable sanity: the clamped-chain steady profile matches
      exp(-x/lambda), lambda = sqrt(r_m a / (2 r_L)), within 1% at 10
      compartments per lambda.
"""

import math
import time

import numpy as np
import pytest

from cablesim import models
from cablesim.analysis import (classify_cycle, detect_oscillations,
                               detect_spikes, empirical_order,
                               second_undivided_differences, segment_cycles,
                               welch_psd)
from cablesim.configio import ExperimentConfig
from cablesim.integrators import (make_initial_state, run_simulation,
                                  step_btcs, step_exp_euler, step_ftcs,
                                  step_hcn, step_rk21, step_rk41,
                                  step_taylor2)
from cablesim.hines import hines_solve
from cablesim.reports import run_order_study, run_sweep
from cablesim.stability import (SchemeCoefficients, growth_factor,
                                min_over_cycle_limit, taylor2_growth_roots)
from conftest import eigenmode_state
from synth import alternating, spike_train
from test_hines import random_tree_system

pytestmark = pytest.mark.acceptance

GRID_US = 1e-6


@pytest.fixture(scope="module")
def reference_run(surrogate):
    """HCN at the 1 us reference step over 0.5 s with coefficient capture."""
    tr = run_simulation(surrogate, "hcn", 1e-6, 0.5, coeff_every=10)
    assert tr.stable
    return tr


def _first_unstable_us(model, scheme, lo, hi, duration=0.5):
    for k_us in range(lo, hi + 1):
        tr = run_simulation(model, scheme, k_us * 1e-6, duration)
        if not tr.stable:
            return k_us
    return None


def test_criterion_1_growth_factor_oracle_equivalence(uniform_chain):
    model = uniform_chain
    theta = 3 * math.pi / model.n
    c = float(model.c1[1])
    k_const = float(model.alpha[0] + model.ch_gbar[0] * 0.5 *
                    model.invcm[0])
    sc = SchemeCoefficients.from_components(k_const, c, c, theta)
    mu = sc.K + 2.0 * sc.L
    steps = {"ftcs": step_ftcs, "btcs": step_btcs,
             "exp_euler": step_exp_euler, "hcn": step_hcn,
             "rk21": step_rk21, "rk41": step_rk41}
    state0, veq, mode = eigenmode_state(model, theta)
    start = time.perf_counter()
    worst = 0.0
    for kf in (0.1, 0.5, 1.0, 1.5, 2.5):
        k = kf / mu
        for name, fn in steps.items():
            out = fn(model, state0.copy(), k)
            g_emp = (out.v[3] - veq) / (state0.v[3] - veq)
            g_ref = growth_factor(name, sc, k).cosine_basis_value
            worst = max(worst, abs(g_emp - g_ref))
            assert abs(g_emp - g_ref) < 1e-10, (name, kf)
        # Taylor2: seed the recurrence history with a real root of its
        # growth cubic and check one production step reproduces it
        p = 0.25 * k * mu
        real_roots = [r.real for r in taylor2_growth_roots(p)
                      if abs(r.imag) < 1e-12 and abs(r.real) > 1e-3]
        g = max(real_roots, key=abs)
        st = state0.copy()
        eps_mode = st.v - veq
        st.fhist[0] = -mu * eps_mode / g ** 2
        st.fhist[1] = -mu * eps_mode / g
        st.hist_count = 2
        out = step_taylor2(model, st, k)
        g_emp = (out.v[3] - veq) / eps_mode[3]
        worst = max(worst, abs(g_emp - g))
        assert abs(g_emp - g) < 1e-10, ("taylor2", kf)
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    print(f"\n[PASS] criterion 1: 7 schemes x 5 step sizes, max "
          f"|g_emp - g_formula| = {worst:.2e} in {elapsed:.2f} s")


def test_criterion_2_stability_limit_prediction(surrogate, reference_run):
    coeffs = reference_run.coeffs
    results = {}
    for scheme, formula in (("ftcs", None), ("rk21", None), ("rk41", None)):
        pred = min_over_cycle_limit(coeffs, scheme, reference_run).limit
        lo = max(1, int(pred * 1e6) - 3)
        hi = int(pred * 1e6) + 6
        emp_us = _first_unstable_us(surrogate, scheme, lo, hi)
        assert emp_us is not None, f"{scheme} never went unstable in scan"
        # the grid cell below the first unstable one must be stable
        assert run_simulation(surrogate, scheme, (emp_us - 1) * 1e-6,
                              0.5).stable
        diff_us = abs(emp_us * 1e-6 - pred) / 1e-6
        assert diff_us <= 1.0 + 1e-9, (scheme, pred, emp_us)
        results[scheme] = (pred * 1e6, emp_us, diff_us)
    unconditional = {}
    for scheme in ("btcs", "exp_euler", "hcn"):
        for k_us in range(1, 100):
            tr = run_simulation(surrogate, scheme, k_us * 1e-6, 0.5)
            assert tr.stable, (scheme, k_us)
        unconditional[scheme] = 99
    lines = ", ".join(f"{s}: pred {p:.2f} us emp {e} us" for
                      s, (p, e, _) in results.items())
    print(f"\n[PASS] criterion 2: {lines}; btcs/exp_euler/hcn completed "
          f"all 99 sweep cells")


def test_criterion_3_convergence_orders(packaged_configs, tmp_path):
    config = ExperimentConfig(
        morphology_path=packaged_configs / "surrogate_morphology.toml",
        channels_path=packaged_configs / "surrogate_channels.toml",
        schemes=["hcn"], dt_list=[1e-6], duration=0.05, record=[],
        out_dir=tmp_path, order_dt=4e-6, order_refinements=3,
        order_reference_factor=16, order_duration=0.02,
        order_gbar_scale=1e-3)
    report = run_order_study(config, out_dir=tmp_path)
    slopes = {name: entry["slope"]
              for name, entry in report["schemes"].items()}
    assert 1.7 <= slopes["hcn"] <= 2.3
    for name in ("ftcs", "btcs", "exp_euler", "rk21", "rk41"):
        assert 0.6 <= slopes[name] <= 1.4, (name, slopes[name])
    txt = ", ".join(f"{n} {s:+.2f}" for n, s in sorted(slopes.items()))
    print(f"\n[PASS] criterion 3: slopes {txt}")


def test_criterion_4_exponential_euler_exactness():
    model = models.passive_single_compartment(r_m=0.1, e_l=-0.04)
    alpha = float(model.alpha[0])
    worst = 0.0
    for k in (1e-5, 1e-4, 1e-3, 5e-3, 1e-2):
        state = make_initial_state(model, v_init=-0.07)
        out = step_exp_euler(model, state, k)
        exact = -0.04 + (-0.07 + 0.04) * math.exp(-alpha * k)
        worst = max(worst, abs(out.v[0] - exact))
        assert abs(out.v[0] - exact) < 1e-14
    print(f"\n[PASS] criterion 4: exponential Euler step error "
          f"{worst:.2e} < 1e-14 for k up to 10 ms")


def test_criterion_5_hcn_oscillation_onset():
    model = models.passive_single_compartment(e_l=-0.04)
    alpha = float(model.alpha[0])  # K + 2L reduces to alpha here
    k = 3.0 / alpha
    g = (1.0 - 0.5 * alpha * k) / (1.0 + 0.5 * alpha * k)
    assert g == pytest.approx(-0.2, rel=1e-12)
    tr = run_simulation(model, "hcn", k, 30 * k, v_init=-0.07)
    dev = tr.voltages[:, 0] - -0.04
    ratios = dev[1:10] / dev[:9]
    assert np.all(np.abs(ratios - g) < 1e-9)      # alternate sign, decay
    assert np.all(np.abs(ratios) < 1.0)
    events = detect_oscillations(tr.voltages[:, 0])
    assert events, "detect_oscillations must fire on the trajectory"
    amps = events[0].amplitudes
    amp_ratios = amps[1:8] / amps[:7]
    assert np.all(np.abs(amp_ratios - abs(g)) < 0.05 * abs(g))
    print(f"\n[PASS] criterion 5: g = {g}, step ratio matched to 1e-9, "
          f"oscillation run length {events[0].run_length}, quarter-rule "
          f"decay within {float(np.abs(amp_ratios - abs(g)).max() / abs(g)):.2%}")


def test_criterion_6_taylor2_stability_frontier():
    at_half = float(np.abs(taylor2_growth_roots(0.5)).max())
    below = float(np.abs(taylor2_growth_roots(0.49)).max())
    above = float(np.abs(taylor2_growth_roots(0.51)).max())
    assert abs(at_half - 1.0) < 1e-6
    assert below < 1.0
    assert above > 1.0
    print(f"\n[PASS] criterion 6: max |root| = {at_half:.9f} at P=0.5, "
          f"{below:.6f} at 0.49, {above:.6f} at 0.51")


def test_criterion_7_hines_matches_dense_on_200_trees():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 51))
        system, parent = random_tree_system(rng, n)
        x = hines_solve(system, parent)
        dense = np.linalg.solve(system.dense(parent), system.rhs)
        worst = max(worst, float(np.abs(x - dense).max()))
    elapsed = time.perf_counter() - start
    assert worst < 1e-12
    assert elapsed < 10.0
    print(f"\n[PASS] criterion 7: 200 trees, max |hines - dense| = "
          f"{worst:.2e} in {elapsed:.2f} s")


def test_criterion_8_analysis_suite():
    # quarter rule reproduces the constructed amplitude exactly; the
    # construction uses binary-exact values so no arithmetic rounds
    amp = 2.0 ** -9            # 1.953125 mV
    base = -(2.0 ** -4)        # -62.5 mV
    events = detect_oscillations(alternating(10, amp, base=base))
    assert len(events) == 1
    assert np.all(events[0].amplitudes == amp)
    d = second_undivided_differences(alternating(10, amp, base=base))
    assert np.all(np.abs(d) / 4.0 == amp)
    # and to 1e-12 relative on a non-dyadic amplitude
    ev2 = detect_oscillations(alternating(10, 2.5e-3, base=-0.06))[0]
    assert np.allclose(ev2.amplitudes, 2.5e-3, rtol=1e-12)
    # constructed 3-spike/1-ADP cycle classifies as 3-1
    cycles = segment_cycles(spike_train(4))
    label = classify_cycle(cycles[0]).label
    assert label == "3-1"
    # welch places a 15 Hz tone in the 15 Hz bin
    fs = 1000.0
    t = np.arange(0.0, 10.0, 1.0 / fs)
    psd = welch_psd(np.sin(2 * math.pi * 15.0 * t), fs)
    assert psd.frequencies[int(np.argmax(psd.power))] == 15.0
    # empirical_order recovers synthetic exponents
    ks = [1e-5, 2e-5, 4e-5, 8e-5, 1.6e-4]
    worst = 0.0
    for p in (0.5, 1.0, 2.0):
        slope = empirical_order([(k, 2.2 * k ** p) for k in ks])
        worst = max(worst, abs(slope - p))
        assert abs(slope - p) < 1e-6
    print(f"\n[PASS] criterion 8: quarter-rule exact, class {label!r}, "
          f"15 Hz bin hit, order exponents recovered to {worst:.1e}")


def test_criterion_9_determinism(surrogate, packaged_configs, tmp_path):
    a = run_simulation(surrogate, "rk41", 3e-6, 0.01)
    b = run_simulation(surrogate, "rk41", 3e-6, 0.01)
    assert a.to_csv() == b.to_csv()
    config = ExperimentConfig(
        morphology_path=packaged_configs / "surrogate_morphology.toml",
        channels_path=packaged_configs / "surrogate_channels.toml",
        schemes=["hcn", "ftcs"], dt_list=[2e-6, 4e-6], duration=0.01,
        record=[], out_dir=tmp_path / "unused")
    run_sweep(config, jobs=1, out_dir=tmp_path / "j1")
    run_sweep(config, jobs=3, out_dir=tmp_path / "j3")
    from test_cli import tree_digest
    d1 = tree_digest(tmp_path / "j1")
    d3 = tree_digest(tmp_path / "j3")
    assert d1 == d3 and d1
    print(f"\n[PASS] criterion 9: rerun byte-identical; sweep trees match "
          f"across worker counts ({len(d1)} files)")


def test_criterion_10_passive_cable_length_constant():
    lam = models.length_constant()
    model = models.passive_chain_model(n=50, comps_per_lambda=10,
                                       e_l=-0.07, clamp_v=-0.02)
    tr = run_simulation(model, "btcs", 5e-5, 0.2, v_init=-0.07,
                        record=list(range(50)))
    prof = tr.voltages[-1] - -0.07
    xs = np.arange(50) * (lam / 10.0)
    expected = prof[0] * np.exp(-xs / lam)
    span = xs <= 2.0 * lam
    rel = np.abs(prof[span] / expected[span] - 1.0)
    assert float(rel.max()) < 0.01
    print(f"\n[PASS] criterion 10: max profile deviation "
          f"{float(rel.max()):.2%} < 1% over two length constants "
          f"(lambda = {lam * 1e6:.1f} um)")
