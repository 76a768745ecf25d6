"""Time stepping: state containers, the seven schemes, and run_simulation.

The functions here are the reference (numpy) implementation of the step
semantics; kernels.py compiles the same arithmetic with numba. Explicit
schemes advance gates first, then the voltage with the frozen-neighbor
coefficients A and B; BTCS and HCN solve the tree-sparse implicit system
with the Hines elimination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .backend import resolve_backend
from .errors import DivergenceDetected, InsufficientHistory, SingularSystem
from .hines import HinesSystem, hines_solve
from .model import MODE_TABLE, CompiledModel
from .schemes import (GR_BACKWARD_EULER, GR_EXACT_EXPONENTIAL,
                      GR_FORWARD_EULER, GR_HEUN, GR_RK4, GR_TRAPEZOIDAL,
                      SchemeKind, gate_rule_for, parse_scheme)
from .trace import CoefficientRecord, SimTrace

DIVERGENCE_VOLTS = 10.0
DEFAULT_V_INIT = -0.07  # volts


@dataclass
class SimState:
    """Mutable per-simulation state; never shared between steppers."""

    t: float
    v: np.ndarray
    gates: np.ndarray          # (n, ngate)
    calcium: np.ndarray        # (n,)
    fhist: np.ndarray          # (2, n), A - B*V at the last two steps
    hist_count: int = 0
    step_count: int = 0
    gates_staggered: bool = False
    history: list = field(default_factory=list)  # last two voltage vectors

    def copy(self) -> "SimState":
        return SimState(t=self.t, v=self.v.copy(), gates=self.gates.copy(),
                        calcium=self.calcium.copy(), fhist=self.fhist.copy(),
                        hist_count=self.hist_count,
                        step_count=self.step_count,
                        gates_staggered=self.gates_staggered,
                        history=[h.copy() for h in self.history])


def make_initial_state(model: CompiledModel,
                       v_init: float = DEFAULT_V_INIT) -> SimState:
    """Rest state: V = v_init, [Ca] = 0, gates at y_inf of their driver."""
    n = model.n
    v = np.full(n, float(v_init))
    if model.clamp_idx.size:
        v[model.clamp_idx] = model.clamp_val
    ca = np.zeros(n)
    gates = np.empty((n, model.n_gates))
    for g in range(model.n_gates):
        x = v if model.g_driver[g] == 0 else ca
        yi, _ = _gate_curves_np(model, g, x)
        gates[:, g] = yi
    return SimState(t=0.0, v=v, gates=gates, calcium=ca,
                    fhist=np.zeros((2, n)))


# --- vectorized kinetics -------------------------------------------------

def _term_np(kind, rate, vh, sc, x):
    if kind == 0:
        return np.full_like(x, rate)
    u = x - vh
    if kind == 1:
        return rate * np.exp(u / sc)
    if kind == 2:
        return rate / (1.0 + np.exp(-u / sc))
    near = np.abs(u) < 1e-9
    safe = np.where(near, sc, u)
    val = rate * safe / (1.0 - np.exp(-safe / sc))
    return np.where(near, rate * (sc + 0.5 * u), val)


def _gate_curves_np(model, g, x):
    x = np.asarray(x, dtype=float)
    if model.g_mode[g] == MODE_TABLE:
        lo, hi = model.tb_ptr[g], model.tb_ptr[g + 1]
        yi = np.interp(x, model.tb_x[lo:hi], model.tb_ya[lo:hi])
        ta = np.interp(x, model.tb_x[lo:hi], model.tb_yb[lo:hi])
        return yi, ta
    t0 = _term_np(model.g_kind[g, 0], model.g_rate[g, 0], model.g_vh[g, 0],
                  model.g_sc[g, 0], x)
    t1 = _term_np(model.g_kind[g, 1], model.g_rate[g, 1], model.g_vh[g, 1],
                  model.g_sc[g, 1], x)
    if model.g_mode[g] == 0:
        s = t0 + t1
        return t0 / s, 1.0 / s
    return t0, t1


def _advance_gates_np(model, rule, dt, v, ca, gates):
    for g in range(model.n_gates):
        x = v if model.g_driver[g] == 0 else ca
        yi, ta = _gate_curves_np(model, g, x)
        y = gates[:, g]
        if rule == GR_FORWARD_EULER:
            y = y + dt * (yi - y) / ta
        elif rule == GR_BACKWARD_EULER:
            y = (y + (dt / ta) * yi) / (1.0 + dt / ta)
        elif rule == GR_TRAPEZOIDAL:
            r = dt / (2.0 * ta)
            y = np.clip((y * (1.0 - r) + 2.0 * r * yi) / (1.0 + r), 0.0, 1.0)
        elif rule == GR_EXACT_EXPONENTIAL:
            y = yi + (y - yi) * np.exp(-dt / ta)
        elif rule == GR_HEUN:
            s1 = (yi - y) / ta
            s2 = (yi - (y + dt * s1)) / ta
            y = y + 0.5 * dt * (s1 + s2)
        elif rule == GR_RK4:
            s1 = (yi - y) / ta
            s2 = (yi - (y + 0.5 * dt * s1)) / ta
            s3 = (yi - (y + 0.5 * dt * s2)) / ta
            s4 = (yi - (y + dt * s3)) / ta
            y = y + dt / 6.0 * (s1 + 2.0 * s2 + 2.0 * s3 + s4)
        else:
            raise ValueError(f"unknown gate rule {rule}")
        gates[:, g] = y


def _conductance_np(model, gates, v):
    """Per-compartment K = alpha + sum(beta), constant part of A, and I_Ca."""
    n = model.n
    sum_beta = np.zeros(n)
    sum_beta_e = np.zeros(n)
    ica = np.zeros(n)
    for c in range(model.ch_gbar.size):
        m = gates[:, model.ch_act[c]]
        f = m ** int(model.ch_p[c])
        if model.ch_inact[c] >= 0:
            f = f * gates[:, model.ch_inact[c]]
        g = model.ch_gbar[c] * f
        sum_beta += g * model.invcm
        sum_beta_e += g * model.ch_e[c] * model.invcm
        if model.ca_enabled and model.ch_casrc[c]:
            ica += g * (v - model.ch_e[c]) * model.area
    return model.alpha + sum_beta, model.a_el + sum_beta_e, ica


def _neighbor_fold(model, v, a_const):
    """A with the frozen neighbor voltages folded in."""
    a = a_const.copy()
    psafe = np.where(model.parent >= 0, model.parent, 0)
    a += model.c1 * v[psafe]
    nonroot = np.nonzero(model.parent >= 0)[0]
    np.add.at(a, model.parent[nonroot], model.ce[nonroot] * v[nonroot])
    return a


def coefficients_AB(model: CompiledModel, state: SimState, compartment=None):
    """Frozen-neighbor linear-ODE coefficients: dV/dt = A - B*V.

    Returns full arrays, or the (A, B) pair of one compartment id.
    """
    k_vals, a_const, _ = _conductance_np(model, state.gates, state.v)
    a = _neighbor_fold(model, state.v, a_const)
    b = k_vals + model.csum
    if compartment is None:
        return a, b
    j = model.index_of(compartment)
    return float(a[j]), float(b[j])


def _assemble_implicit(model, kk, k_vals, a_const, v):
    hd = 1.0 + kk * (k_vals + model.csum)
    hl = -kk * model.c1
    hu = -kk * model.ce
    hr = v + kk * a_const
    for ci in range(model.clamp_idx.size):
        q = model.clamp_idx[ci]
        val = model.clamp_val[ci]
        hd[q] = 1.0
        hr[q] = val
        p = model.parent[q]
        if p >= 0:
            hl[q] = 0.0
            hr[p] -= hu[q] * val
            hu[q] = 0.0
        for j in np.nonzero(model.parent == q)[0]:
            hr[j] -= hl[j] * val
            hl[j] = 0.0
    return HinesSystem(diagonal=hd, lower=hl, upper=hu, rhs=hr)


def _check_divergence(model, state, k):
    bad = ~np.isfinite(state.v) | (np.abs(state.v) > DIVERGENCE_VOLTS)
    if bad.any():
        j = int(np.nonzero(bad)[0][0])
        raise DivergenceDetected(time=state.t + k,
                                 compartment_id=int(model.ids[j]))


def _step_inplace(model: CompiledModel, state: SimState, scheme: SchemeKind,
                  k: float) -> None:
    """One step of `scheme`; mirrors kernels.run_loop arithmetic exactly."""
    boot = scheme is SchemeKind.TAYLOR2 and state.hist_count < 2
    if boot:
        rule = gate_rule_for(SchemeKind.RK21, model.rk_gate_multistage)
    else:
        rule = gate_rule_for(scheme, model.rk_gate_multistage)
    gdt = k
    if scheme is SchemeKind.HCN and not state.gates_staggered:
        gdt = 0.5 * k
        state.gates_staggered = True
    _advance_gates_np(model, rule, gdt, state.v, state.calcium, state.gates)

    k_vals, a_const, ica = _conductance_np(model, state.gates, state.v)
    if model.ca_enabled:
        steady = -model.ca_scale * ica * model.ca_tau
        ca_new = steady + (state.calcium - steady) * math.exp(-k / model.ca_tau)
        state.calcium = np.maximum(ca_new, 0.0)

    state.history.append(state.v.copy())
    del state.history[:-2]

    v = state.v
    if scheme in (SchemeKind.BTCS, SchemeKind.HCN):
        kk = k if scheme is SchemeKind.BTCS else 0.5 * k
        system = _assemble_implicit(model, kk, k_vals, a_const, v)
        sol = hines_solve(system, model.parent)
        state.v = sol if scheme is SchemeKind.BTCS else 2.0 * sol - v
    else:
        a = _neighbor_fold(model, v, a_const)
        b = k_vals + model.csum
        if scheme is SchemeKind.FTCS:
            state.v = v + k * (a - b * v)
        elif scheme is SchemeKind.EXPONENTIAL_EULER:
            f0 = a / b
            state.v = f0 + (v - f0) * np.exp(-b * k)
        elif scheme is SchemeKind.RK21:
            s1 = a - b * v
            s2 = a - b * (v + k * s1)
            state.v = v + 0.5 * k * (s1 + s2)
        elif scheme is SchemeKind.RK41:
            s1 = a - b * v
            s2 = a - b * (v + 0.5 * k * s1)
            s3 = a - b * (v + 0.5 * k * s2)
            s4 = a - b * (v + k * s3)
            state.v = v + k / 6.0 * (s1 + 2.0 * s2 + 2.0 * s3 + s4)
        elif boot:
            s1 = a - b * v
            state.fhist[0] = state.fhist[1]
            state.fhist[1] = s1
            s2 = a - b * (v + k * s1)
            state.v = v + 0.5 * k * (s1 + s2)
            state.hist_count += 1
        else:  # Taylor2 lagging stencil
            fn = a - b * v
            fold = state.fhist[0].copy()
            state.fhist[0] = state.fhist[1]
            state.fhist[1] = fn
            state.v = v + k * fn + 0.25 * k * (fn - fold)
            state.hist_count += 1

    if model.clamp_idx.size:
        state.v[model.clamp_idx] = model.clamp_val
    _check_divergence(model, state, k)
    state.t += k
    state.step_count += 1


def _public_step(model, state, scheme, k):
    if k <= 0.0:
        raise ValueError("k must be > 0")
    out = state.copy()
    _step_inplace(model, out, scheme, k)
    return out


def step_ftcs(model, state, k):
    """Forward-time central-space explicit step."""
    return _public_step(model, state, SchemeKind.FTCS, k)


def step_btcs(model, state, k):
    """Backward-time central-space implicit step (Hines solve)."""
    return _public_step(model, state, SchemeKind.BTCS, k)


def step_exp_euler(model, state, k):
    """Exponential Euler step, exact for frozen A and B."""
    return _public_step(model, state, SchemeKind.EXPONENTIAL_EULER, k)


def step_hcn(model, state, k):
    """Half-step implicit solve followed by explicit extrapolation."""
    return _public_step(model, state, SchemeKind.HCN, k)


def step_rk21(model, state, k):
    """Two-stage Heun step with frozen A, B."""
    return _public_step(model, state, SchemeKind.RK21, k)


def step_rk41(model, state, k):
    """Classic four-stage step with frozen A, B per stage."""
    return _public_step(model, state, SchemeKind.RK41, k)


def step_taylor2(model, state, k):
    """Second-order Taylor step with the lagging F^n, F^(n-2) stencil.

    Needs two completed steps of history; run_simulation bootstraps fresh
    states with two RK21 steps.
    """
    if state.hist_count < 2:
        raise InsufficientHistory("Taylor2 needs the two bootstrap steps "
                                  "before its lagging stencil applies")
    return _public_step(model, state, SchemeKind.TAYLOR2, k)


def assemble_implicit_system(model, state, scheme, k) -> HinesSystem:
    """The tree system one BTCS (or HCN half-) step would solve; for tests."""
    scheme = parse_scheme(scheme)
    kk = k if scheme is SchemeKind.BTCS else 0.5 * k
    k_vals, a_const, _ = _conductance_np(model, state.gates, state.v)
    return _assemble_implicit(model, kk, k_vals, a_const, state.v)


def save_state(state: SimState, path) -> None:
    """Write a final-state snapshot usable as a later run's initial state."""
    import json
    obj = {
        "format": "cablesim-state",
        "t": state.t,
        "v": [float(x) for x in state.v],
        "gates": [[float(x) for x in row] for row in state.gates],
        "calcium": [float(x) for x in state.calcium],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1)
        fh.write("\n")


def load_state(path, model: CompiledModel) -> SimState:
    """Load a snapshot; shapes must match the model.

    Runs started from a snapshot restart the HCN gate stagger and the
    Taylor2 bootstrap.
    """
    import json
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("format") != "cablesim-state":
        raise ValueError(f"{path} is not a cablesim state file")
    v = np.array(obj["v"], dtype=float)
    ca = np.array(obj["calcium"], dtype=float)
    if v.size != model.n or ca.size != model.n:
        raise ValueError("state shape does not match the model")
    if model.n_gates == 0:
        gates = np.zeros((model.n, 0))
    else:
        gates = np.array(obj["gates"], dtype=float).reshape(v.size, -1)
        if gates.shape[1] != model.n_gates:
            raise ValueError("state gate count does not match the model")
    return SimState(t=float(obj.get("t", 0.0)), v=v, gates=gates, calcium=ca,
                    fhist=np.zeros((2, model.n)))


# --- whole-run driver ----------------------------------------------------

def run_simulation(model: CompiledModel, scheme, k: float, duration: float,
                   record=None, backend: Optional[str] = None,
                   v_init: float = DEFAULT_V_INIT, coeff_every: int = 0,
                   initial_state: Optional[SimState] = None) -> SimTrace:
    """Integrate the model and record the requested compartments every step.

    Divergence (non-finite V or |V| > 10 V) truncates the trace and flags it
    unstable with the failure time instead of raising. When coeff_every > 0
    a CoefficientRecord (per-compartment K plus the plane-wave path voltage
    profile, sampled every coeff_every steps) is attached to the trace.
    """
    scheme = parse_scheme(scheme)
    backend = resolve_backend(backend)
    if k <= 0.0:
        raise ValueError("k must be > 0")
    if duration < k:
        raise ValueError("duration must be >= k")
    n_steps = int(math.floor(duration / k + 1e-9))

    if record is None:
        record = [int(model.tree.root.id)]
    record = list(dict.fromkeys(int(c) for c in record))
    rec_idx = np.array([model.index_of(cid) for cid in record],
                       dtype=np.int64)

    state = initial_state.copy() if initial_state is not None \
        else make_initial_state(model, v_init)
    # Runs always restart the HCN gate stagger and the Taylor2 bootstrap so
    # both backends share one semantics for loaded initial states.
    state.gates_staggered = False
    state.hist_count = 0
    out_v = np.empty((n_steps + 1, rec_idx.size))
    out_v[0] = state.v[rec_idx]

    if coeff_every > 0:
        n_cap = (n_steps + coeff_every - 1) // coeff_every
        out_k = np.zeros((n_cap, model.n))
        out_vall = np.zeros((n_cap, model.n))
    else:
        out_k = np.zeros((0, model.n))
        out_vall = np.zeros((0, model.n))

    status, at_step = _drive(model, scheme, k, n_steps, state, rec_idx,
                             out_v, coeff_every, out_k, out_vall, backend)

    stable = status == 0
    failure_time = None
    n_keep = n_steps + 1
    note = ""
    if not stable:
        failure_time = (at_step + 1) * k
        n_keep = at_step + 1
        if status == 2:
            note = "singular implicit system"
    times = np.arange(n_keep, dtype=float) * k
    coeffs = None
    if coeff_every > 0:
        rows = min(out_k.shape[0], (n_keep - 1) // coeff_every + 1) \
            if n_keep > 1 else 0
        cap_times = np.arange(rows, dtype=float) * (coeff_every * k)
        coeffs = CoefficientRecord(times=cap_times, k_values=out_k[:rows],
                                   csum=model.csum.copy(),
                                   path_indices=model.theta_path.copy(),
                                   path_voltages=out_vall[:rows,
                                                          model.theta_path],
                                   ids=model.ids.copy())
    trace = SimTrace(scheme=scheme.value, dt=k, duration=duration,
                     rec_ids=[int(model.ids[i]) for i in rec_idx],
                     times=times, voltages=out_v[:n_keep].copy(),
                     model_hash=model.hash, backend=backend, stable=stable,
                     failure_time=failure_time, note=note, coeffs=coeffs)
    trace.final_state = state
    return trace


def _drive(model, scheme, k, n_steps, state, rec_idx, out_v, coeff_every,
           out_k, out_vall, backend):
    if backend == "numba":
        from . import kernels
        boot_rule = gate_rule_for(SchemeKind.RK21, model.rk_gate_multistage)
        status, at_step = kernels.run_loop(
            scheme.code, gate_rule_for(scheme, model.rk_gate_multistage),
            boot_rule, k, n_steps,
            state.v, state.gates, state.calcium, state.fhist,
            model.parent, model.c1, model.ce, model.csum, model.alpha,
            model.a_el, model.invcm, model.area,
            model.ch_gbar, model.ch_e, model.ch_p, model.ch_act,
            model.ch_inact, model.ch_casrc,
            model.g_driver, model.g_mode, model.g_kind, model.g_rate,
            model.g_vh, model.g_sc,
            model.tb_ptr, model.tb_x, model.tb_ya, model.tb_yb,
            model.ca_enabled, model.ca_scale, model.ca_tau,
            model.clamp_idx, model.clamp_val,
            rec_idx, out_v, coeff_every, out_k, out_vall)
        done = at_step if status != 0 else n_steps
        state.t = done * k
        state.step_count = done
        if scheme is SchemeKind.HCN:
            state.gates_staggered = True
        return status, at_step

    row = 0
    for step in range(n_steps):
        captured = coeff_every > 0 and step % coeff_every == 0
        if captured:
            row = step // coeff_every
            out_vall[row] = state.v
        try:
            _step_inplace(model, state, scheme, k)
        except (DivergenceDetected, SingularSystem) as exc:
            if captured:
                out_k[row], _, _ = _conductance_np(model, state.gates,
                                                   state.v)
            return (2 if isinstance(exc, SingularSystem) else 1), step
        if captured:
            out_k[row], _, _ = _conductance_np(model, state.gates, state.v)
        out_v[step + 1] = state.v[rec_idx]
    return 0, n_steps
