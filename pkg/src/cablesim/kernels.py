"""Numba-compiled fused time-stepping loop.

One call integrates a whole run: gate updates, calcium, coefficient
assembly, the per-scheme voltage update (tree solves for the implicit
schemes) and recording all live inside a single @njit function, so the
per-step cost is a few hundred nanoseconds per compartment. The numpy
backend re-implements the identical arithmetic in vectorized form.
"""

import math

import numpy as np
from numba import njit

# Scheme codes, kept in sync with schemes.SchemeKind.code.
FTCS, BTCS, EXP_EULER, HCN, RK21, RK41, TAYLOR2 = 0, 1, 2, 3, 4, 5, 6
# Gate rules, kept in sync with schemes.GR_*.
GR_FE, GR_BE, GR_TRAP, GR_EXP, GR_HEUN, GR_RK4 = 0, 1, 2, 3, 4, 5

STATUS_OK, STATUS_DIVERGED, STATUS_SINGULAR = 0, 1, 2

DIVERGENCE_VOLTS = 10.0


@njit(cache=True)
def _term(kind, rate, vh, sc, x):
    if kind == 0:
        return rate
    u = x - vh
    if kind == 1:
        return rate * math.exp(u / sc)
    if kind == 2:
        return rate / (1.0 + math.exp(-u / sc))
    # linoid with removable singularity at u = 0
    if abs(u) < 1e-9:
        return rate * (sc + 0.5 * u)
    return rate * u / (1.0 - math.exp(-u / sc))


@njit(cache=True)
def _interp(xs, ys, x):
    n = xs.size
    if x <= xs[0]:
        return ys[0]
    if x >= xs[n - 1]:
        return ys[n - 1]
    lo = 0
    hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if xs[mid] <= x:
            lo = mid
        else:
            hi = mid
    slope = (ys[lo + 1] - ys[lo]) / (xs[lo + 1] - xs[lo])
    return ys[lo] + slope * (x - xs[lo])


@njit(cache=True)
def _gate_curves(g, x, g_mode, g_kind, g_rate, g_vh, g_sc,
                 tb_ptr, tb_x, tb_ya, tb_yb):
    mode = g_mode[g]
    if mode == 2:  # table
        lo = tb_ptr[g]
        hi = tb_ptr[g + 1]
        yi = _interp(tb_x[lo:hi], tb_ya[lo:hi], x)
        ta = _interp(tb_x[lo:hi], tb_yb[lo:hi], x)
        return yi, ta
    t0 = _term(g_kind[g, 0], g_rate[g, 0], g_vh[g, 0], g_sc[g, 0], x)
    t1 = _term(g_kind[g, 1], g_rate[g, 1], g_vh[g, 1], g_sc[g, 1], x)
    if mode == 0:  # alpha/beta rates
        s = t0 + t1
        return t0 / s, 1.0 / s
    return t0, t1  # direct yinf/tau


@njit(cache=True)
def _advance_gates(rule, dt, v, ca, gates, g_driver, g_mode, g_kind, g_rate,
                   g_vh, g_sc, tb_ptr, tb_x, tb_ya, tb_yb):
    n = v.size
    ngate = g_driver.size
    for j in range(n):
        for g in range(ngate):
            x = v[j] if g_driver[g] == 0 else ca[j]
            yi, ta = _gate_curves(g, x, g_mode, g_kind, g_rate, g_vh, g_sc,
                                  tb_ptr, tb_x, tb_ya, tb_yb)
            y = gates[j, g]
            if rule == GR_FE:
                y = y + dt * (yi - y) / ta
            elif rule == GR_BE:
                y = (y + (dt / ta) * yi) / (1.0 + dt / ta)
            elif rule == GR_TRAP:
                r = dt / (2.0 * ta)
                y = (y * (1.0 - r) + 2.0 * r * yi) / (1.0 + r)
                if y < 0.0:
                    y = 0.0
                elif y > 1.0:
                    y = 1.0
            elif rule == GR_EXP:
                y = yi + (y - yi) * math.exp(-dt / ta)
            elif rule == GR_HEUN:
                s1 = (yi - y) / ta
                s2 = (yi - (y + dt * s1)) / ta
                y = y + 0.5 * dt * (s1 + s2)
            else:
                s1 = (yi - y) / ta
                s2 = (yi - (y + 0.5 * dt * s1)) / ta
                s3 = (yi - (y + 0.5 * dt * s2)) / ta
                s4 = (yi - (y + dt * s3)) / ta
                y = y + dt / 6.0 * (s1 + 2.0 * s2 + 2.0 * s3 + s4)
            gates[j, g] = y


@njit(cache=True)
def _hines_inplace(parent, hd, hl, hu, hr, out):
    """Two-pass tree elimination; children first by decreasing index."""
    n = hd.size
    for j in range(n - 1, 0, -1):
        if abs(hd[j]) < 1e-300:
            return STATUS_SINGULAR
        p = parent[j]
        f = hu[j] / hd[j]
        hd[p] -= f * hl[j]
        hr[p] -= f * hr[j]
    if abs(hd[0]) < 1e-300:
        return STATUS_SINGULAR
    out[0] = hr[0] / hd[0]
    for j in range(1, n):
        out[j] = (hr[j] - hl[j] * out[parent[j]]) / hd[j]
    return STATUS_OK


@njit(cache=True)
def run_loop(scheme, gate_rule, boot_gate_rule, k, n_steps,
             v, gates, ca, fhist,
             parent, c1, ce, csum, alpha, a_el, invcm, area,
             ch_gbar, ch_e, ch_p, ch_act, ch_inact, ch_casrc,
             g_driver, g_mode, g_kind, g_rate, g_vh, g_sc,
             tb_ptr, tb_x, tb_ya, tb_yb,
             ca_enabled, ca_scale, ca_tau,
             clamp_idx, clamp_val,
             rec_idx, out_v,
             coeff_every, out_k, out_vall):
    n = v.size
    nch = ch_gbar.size
    a_s = np.empty(n)
    k_s = np.empty(n)
    b_s = np.empty(n)
    hd = np.empty(n)
    hl = np.empty(n)
    hu = np.empty(n)
    hr = np.empty(n)
    hv = np.empty(n)
    hist_count = 0
    row = 0
    for step in range(n_steps):
        cap = coeff_every > 0 and step % coeff_every == 0
        if cap:
            row = step // coeff_every
            for j in range(n):
                out_vall[row, j] = v[j]

        boot = scheme == TAYLOR2 and hist_count < 2
        rule = boot_gate_rule if boot else gate_rule
        gdt = k
        if scheme == HCN and step == 0:
            gdt = 0.5 * k  # staggering: gates live at half-integer steps
        _advance_gates(rule, gdt, v, ca, gates, g_driver, g_mode, g_kind,
                       g_rate, g_vh, g_sc, tb_ptr, tb_x, tb_ya, tb_yb)

        for j in range(n):
            sb = 0.0
            sbe = 0.0
            ica = 0.0
            for c in range(nch):
                m = gates[j, ch_act[c]]
                f = m ** ch_p[c]
                hi2 = ch_inact[c]
                if hi2 >= 0:
                    f *= gates[j, hi2]
                g = ch_gbar[c] * f
                sb += g * invcm[j]
                sbe += g * ch_e[c] * invcm[j]
                if ca_enabled and ch_casrc[c] == 1:
                    ica += g * (v[j] - ch_e[c]) * area[j]
            k_s[j] = alpha[j] + sb
            a_s[j] = a_el[j] + sbe
            if ca_enabled:
                steady = -ca_scale * ica * ca_tau
                cnew = steady + (ca[j] - steady) * math.exp(-k / ca_tau)
                ca[j] = cnew if cnew > 0.0 else 0.0
            if cap:
                out_k[row, j] = k_s[j]

        if scheme == BTCS or scheme == HCN:
            kk = k if scheme == BTCS else 0.5 * k
            for j in range(n):
                hd[j] = 1.0 + kk * (k_s[j] + csum[j])
                hl[j] = -kk * c1[j]
                hu[j] = -kk * ce[j]
                hr[j] = v[j] + kk * a_s[j]
            for ci in range(clamp_idx.size):
                q = clamp_idx[ci]
                val = clamp_val[ci]
                hd[q] = 1.0
                hr[q] = val
                p = parent[q]
                if p >= 0:
                    hl[q] = 0.0
                    hr[p] -= hu[q] * val
                    hu[q] = 0.0
                for j in range(n):
                    if parent[j] == q:
                        hr[j] -= hl[j] * val
                        hl[j] = 0.0
            status = _hines_inplace(parent, hd, hl, hu, hr, hv)
            if status != STATUS_OK:
                return status, step
            if scheme == BTCS:
                for j in range(n):
                    v[j] = hv[j]
            else:
                for j in range(n):
                    v[j] = 2.0 * hv[j] - v[j]
        else:
            # explicit schemes fold the frozen neighbor voltages into A
            for j in range(n):
                b_s[j] = k_s[j] + csum[j]
            for j in range(n):
                p = parent[j]
                if p >= 0:
                    a_s[j] += c1[j] * v[p]
                    a_s[p] += ce[j] * v[j]
            if scheme == FTCS:
                for j in range(n):
                    v[j] = v[j] + k * (a_s[j] - b_s[j] * v[j])
            elif scheme == EXP_EULER:
                for j in range(n):
                    f0 = a_s[j] / b_s[j]
                    v[j] = f0 + (v[j] - f0) * math.exp(-b_s[j] * k)
            elif scheme == RK21:
                for j in range(n):
                    s1 = a_s[j] - b_s[j] * v[j]
                    s2 = a_s[j] - b_s[j] * (v[j] + k * s1)
                    v[j] = v[j] + 0.5 * k * (s1 + s2)
            elif scheme == RK41:
                for j in range(n):
                    a = a_s[j]
                    b = b_s[j]
                    w = v[j]
                    s1 = a - b * w
                    s2 = a - b * (w + 0.5 * k * s1)
                    s3 = a - b * (w + 0.5 * k * s2)
                    s4 = a - b * (w + k * s3)
                    v[j] = w + k / 6.0 * (s1 + 2.0 * s2 + 2.0 * s3 + s4)
            elif boot:
                # Taylor2 bootstrap: RK21 steps seed the F = A - B*V history
                for j in range(n):
                    s1 = a_s[j] - b_s[j] * v[j]
                    fhist[0, j] = fhist[1, j]
                    fhist[1, j] = s1
                    s2 = a_s[j] - b_s[j] * (v[j] + k * s1)
                    v[j] = v[j] + 0.5 * k * (s1 + s2)
                hist_count += 1
            else:
                # lagging stencil over F^n and F^(n-2)
                for j in range(n):
                    fn = a_s[j] - b_s[j] * v[j]
                    fold = fhist[0, j]
                    fhist[0, j] = fhist[1, j]
                    fhist[1, j] = fn
                    v[j] = v[j] + k * fn + 0.25 * k * (fn - fold)
                hist_count += 1

        for ci in range(clamp_idx.size):
            v[clamp_idx[ci]] = clamp_val[ci]
        for j in range(n):
            if not math.isfinite(v[j]) or abs(v[j]) > DIVERGENCE_VOLTS:
                return STATUS_DIVERGED, step
        for r in range(rec_idx.size):
            out_v[step + 1, r] = v[rec_idx[r]]
    return STATUS_OK, n_steps
