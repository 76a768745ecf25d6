"""Sweep, stability, convergence-order and re-analysis report builders.

Every emitted file is deterministic: cells are computed independently
(optionally in a process pool), merged in (scheme, dt) order, and floats
are serialized with repr. Re-running a config reproduces byte-identical
outputs at any worker count.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis
from .configio import ExperimentConfig
from .errors import (CableSimError, InsufficientCycles, NoSpikes,
                     RegimeViolation, SignalTooShort)
from .integrators import load_state, run_simulation, save_state
from .schemes import SchemeKind, parse_scheme
from .stability import (butcher_limit, min_over_cycle_limit,
                        spectral_centroid)
from .trace import SimTrace


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path: Path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1) + "\n", encoding="utf-8")


def dt_label(dt: float) -> str:
    return f"{dt * 1e6:g}us"


def trace_filename(scheme, dt: float) -> str:
    return f"{parse_scheme(scheme).value}_dt{dt_label(dt)}"


# --- single cells ----------------------------------------------------------


def run_cell(config: ExperimentConfig, scheme, dt: float, backend=None,
             coeff_every: int = 0, duration=None) -> SimTrace:
    """One (scheme, dt) simulation under a config's protocol."""
    model = config.build_model()
    init = None
    if config.initial_state is not None:
        init = load_state(config.initial_state, model)
    trace = run_simulation(model, scheme, dt,
                           duration if duration is not None
                           else config.duration,
                           record=config.record or None, backend=backend,
                           v_init=config.v_init, coeff_every=coeff_every,
                           initial_state=init)
    if config.save_final_state is not None:
        save_state(trace.final_state, config.save_final_state)
    return trace


def _cell_worker(args):
    (config, scheme_value, dt, backend) = args
    trace = run_cell(config, scheme_value, dt, backend=backend)
    trace.final_state = None  # keep worker results lean
    return (scheme_value, dt, trace)


def analyze_trace(trace: SimTrace, reference: SimTrace) -> dict:
    """Per-cell analysis record: histogram, stats, accuracy, oscillation,
    PSD. Sub-analyses that cannot run record their reason instead."""
    cell = {
        "scheme": trace.scheme,
        "dt": trace.dt,
        "stable": trace.stable,
        "failure_time": trace.failure_time,
        "n_samples": int(trace.n_samples),
        "errors": {},
    }
    try:
        cycles = analysis.segment_cycles(trace)
    except (InsufficientCycles, ValueError) as exc:
        cell["errors"]["cycles"] = str(exc)
        return cell
    classes = [analysis.classify_cycle(c) for c in cycles]
    hist = {}
    for cls in classes:
        hist[cls.display] = hist.get(cls.display, 0) + 1
    cell["n_cycles"] = len(cycles)
    cell["class_histogram"] = dict(sorted(hist.items()))
    cell["classes"] = [cls.display for cls in classes]
    try:
        st = analysis.cycle_stats(cycles)
        cell["cycle_stats"] = {
            "n_used": st.n_used,
            "min_mean": st.min_mean, "min_std": st.min_std,
            "max_mean": st.max_mean, "max_std": st.max_std,
            "period_mean": st.period_mean, "period_std": st.period_std,
        }
    except InsufficientCycles as exc:
        cell["errors"]["cycle_stats"] = str(exc)
    try:
        acc = analysis.accuracy_rms(trace, reference)
        cell["accuracy"] = {"rms": acc.rms, "shift": acc.alignment_shift}
    except (InsufficientCycles, NoSpikes, ValueError) as exc:
        cell["errors"]["accuracy"] = str(exc)
    osc = analysis.oscillation_rms_per_cycle(trace, cycles)
    cell["oscillation_rms_per_cycle"] = [float(x) for x in osc]
    try:
        psd = analysis.welch_psd(trace.voltages[:, 0], 1.0 / trace.dt)
        cell["psd"] = {"frequencies_hz": [float(f) for f in psd.frequencies],
                       "power": [float(p) for p in psd.power]}
    except (SignalTooShort, ValueError) as exc:
        cell["errors"]["psd"] = str(exc)
    return cell


# --- sweep ------------------------------------------------------------------


@dataclass
class SweepResult:
    out_dir: Path
    cells: dict = field(default_factory=dict)       # (scheme, dt) -> record
    traces: dict = field(default_factory=dict)      # (scheme, dt) -> SimTrace
    references: dict = field(default_factory=dict)  # scheme -> SimTrace


def run_sweep(config: ExperimentConfig, jobs: int = 1, backend=None,
              emit_traces: bool = True, out_dir=None) -> SweepResult:
    """Run all (scheme, dt) cells, then emit the full report tree.

    Partial failures (unstable cells, analyses missing their
    preconditions) are recorded per cell; the sweep always completes.
    """
    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = SweepResult(out_dir=out)

    schemes = [parse_scheme(s) for s in config.schemes]
    for scheme in schemes:
        result.references[scheme.value] = run_cell(
            config, scheme, config.reference_dt, backend=backend,
            coeff_every=config.coeff_every)

    todo = [(config, s.value, dt, backend) for s in schemes
            for dt in config.dt_list]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_cell_worker, todo))
    else:
        done = [_cell_worker(args) for args in todo]
    for scheme_value, dt, trace in sorted(done, key=lambda r: (r[0], r[1])):
        result.traces[(scheme_value, dt)] = trace
        result.cells[(scheme_value, dt)] = analyze_trace(
            trace, result.references[scheme_value])

    _emit_sweep_files(config, result, schemes, emit_traces)
    return result


def _emit_sweep_files(config, result, schemes, emit_traces):
    out = result.out_dir
    if emit_traces:
        tdir = out / "traces"
        tdir.mkdir(exist_ok=True)
        for (scheme_value, dt), trace in sorted(result.traces.items()):
            (tdir / (trace_filename(scheme_value, dt) + ".csv")).write_text(
                trace.to_csv(), encoding="utf-8")

    order = [(s.value, dt) for s in schemes for dt in config.dt_list]

    write_csv(out / "stability_intervals.csv",
              ["scheme", "dt_s", "stable", "failure_time_s"],
              [(sv, dt, result.cells[(sv, dt)]["stable"],
                result.cells[(sv, dt)]["failure_time"])
               for sv, dt in order])

    rows = []
    for sv, dt in order:
        cell = result.cells[(sv, dt)]
        acc = cell.get("accuracy")
        rows.append((sv, dt, acc["rms"] if acc else None,
                     acc["shift"] if acc else None,
                     cell["errors"].get("accuracy", "")))
    write_csv(out / "accuracy_vs_dt.csv",
              ["scheme", "dt_s", "rms_volts", "align_shift_s", "error"],
              rows)

    rows = []
    for sv, dt in order:
        st = result.cells[(sv, dt)].get("cycle_stats")
        if st:
            rows.append((sv, dt, st["n_used"], st["min_mean"], st["min_std"],
                         st["max_mean"], st["max_std"], st["period_mean"],
                         st["period_std"]))
    write_csv(out / "cycle_stats.csv",
              ["scheme", "dt_s", "n_cycles_used", "min_mean_v", "min_std_v",
               "max_mean_v", "max_std_v", "period_mean_s", "period_std_s"],
              rows)

    rows = []
    for sv, dt in order:
        for i, label in enumerate(result.cells[(sv, dt)].get("classes", [])):
            rows.append((sv, dt, i, label))
    write_csv(out / "class_map.csv",
              ["scheme", "dt_s", "cycle_index", "class"], rows)

    rows = []
    for sv, dt in order:
        osc = result.cells[(sv, dt)].get("oscillation_rms_per_cycle", [])
        for i, val in enumerate(osc):
            rows.append((sv, dt, i, val))
    write_csv(out / "oscillation_rms.csv",
              ["scheme", "dt_s", "cycle_index", "rms_volts"], rows)

    psd_dir = out / "psd"
    psd_dir.mkdir(exist_ok=True)
    for scheme in schemes:
        cols, freqs = [], None
        for dt in config.dt_list:
            cell = result.cells[(scheme.value, dt)]
            if "psd" in cell:
                freqs = cell["psd"]["frequencies_hz"]
                cols.append((dt, cell["psd"]["power"]))
        if freqs is None:
            continue
        header = ["frequency_hz"] + [f"psd_{dt_label(dt)}" for dt, _ in cols]
        rows = [[freqs[i]] + [col[i] for _, col in cols]
                for i in range(len(freqs))]
        write_csv(psd_dir / f"{scheme.value}.csv", header, rows)

    hcn_ref = result.references.get(SchemeKind.HCN.value)
    if hcn_ref is not None and hcn_ref.coeffs is not None:
        rows = []
        for dt in config.dt_list:
            lo, hi = _hcn_growth_span(hcn_ref.coeffs, dt)
            rows.append((dt, lo, hi))
        write_csv(out / "hcn_growth_span.csv",
                  ["dt_s", "g_min", "g_max"], rows)

    summary = {
        "duration_s": config.duration,
        "reference_dt_s": config.reference_dt,
        "schemes": [s.value for s in schemes],
        "appendix_only_schemes": [s.value for s in schemes
                                  if s.appendix_only],
        "dt_list_s": list(config.dt_list),
        "cells": [result.cells[(sv, dt)] for sv, dt in order],
    }
    write_json(out / "summary.json", summary)


def _hcn_growth_span(coeffs, dt):
    """min/max cosine-basis HCN growth factor over instants and
    compartments of a coefficient record."""
    lo, hi = math.inf, -math.inf
    for t_idx in range(coeffs.k_values.shape[0]):
        theta = spectral_centroid(coeffs.path_voltages[t_idx]).centroid
        s2 = math.sin(theta / 2.0) ** 2
        p = coeffs.k_values[t_idx] + 2.0 * coeffs.csum * s2
        g = (1.0 - 0.5 * p * dt) / (1.0 + 0.5 * p * dt)
        lo = min(lo, float(g.min()))
        hi = max(hi, float(g.max()))
    return lo, hi


# --- stability report --------------------------------------------------------


def run_stability_report(config: ExperimentConfig, backend=None,
                         out_dir=None, reference: SimTrace = None) -> dict:
    """Per-scheme Von Neumann limits from a 1 us HCN reference run."""
    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if reference is None:
        reference = run_cell(config, SchemeKind.HCN, config.reference_dt,
                             backend=backend, coeff_every=config.coeff_every)
    coeffs = reference.coeffs
    report = {"reference_dt_s": reference.dt,
              "reference_stable": reference.stable, "schemes": {}}
    for scheme in SchemeKind:
        res = min_over_cycle_limit(coeffs, scheme, reference)
        entry = {
            "limit_seconds": None if math.isinf(res.limit) else res.limit,
            "unbounded": math.isinf(res.limit),
            "butcher_limit_seconds": None,
            "oscillation_onset_seconds": res.oscillation_onset,
            "theta_used": res.theta,
            "K_min": res.k_at_min,
            "L_at_theta": res.l_at_min,
            "limit_compartment": res.compartment_id,
            "limit_time_s": res.time,
            "appendix_only": scheme.appendix_only,
        }
        if scheme in (SchemeKind.RK21, SchemeKind.RK41):
            b_max = float((coeffs.k_values + coeffs.csum).max())
            entry["butcher_limit_seconds"] = butcher_limit(scheme, b_max)
        report["schemes"][scheme.value] = entry
    write_json(out / "stability_report.json", report)

    thetas = [spectral_centroid(coeffs.path_voltages[i]).centroid
              for i in range(coeffs.times.size)]
    write_csv(out / "theta_series.csv", ["time_s", "theta_rad"],
              list(zip((float(t) for t in coeffs.times), thetas)))

    ks = [i * 1e-6 for i in range(1, 100)]
    header = ["k_s"] + [s.value for s in SchemeKind]
    rows = []
    worst = np.unravel_index(int(coeffs.k_values.argmax()),
                             coeffs.k_values.shape)
    t_idx, j = worst
    theta = spectral_centroid(coeffs.path_voltages[t_idx]).centroid
    from .stability import SchemeCoefficients, growth_factor
    kv = float(coeffs.k_values[t_idx, j])
    csum = float(coeffs.csum[j])
    sc = SchemeCoefficients(K=kv, L=csum * math.sin(theta / 2.0) ** 2,
                            M=0.0, B=kv + csum, theta=theta)
    for k in ks:
        row = [k]
        for s in SchemeKind:
            row.append(growth_factor(s, sc, k).cosine_basis_value)
        rows.append(row)
    write_csv(out / "growth_curves.csv", header, rows)
    return report


# --- convergence order -------------------------------------------------------


def run_order_study(config: ExperimentConfig, backend=None,
                    out_dir=None) -> dict:
    """k-halving ladder per scheme against a k/16 same-scheme reference.

    The config's [order] section selects the smooth subthreshold regime
    (reduced gbar); spikes anywhere in the ladder violate the regime.
    """
    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = config.build_model(gbar_scale=config.order_gbar_scale)
    k0 = config.order_dt
    if config.order_reference_factor < 2 ** (config.order_refinements - 1):
        from .errors import ConfigError
        raise ConfigError("order.reference_factor must be at least "
                          "2^(refinements-1) so every ladder rung lands on "
                          "the reference grid")
    ks = [k0 / 2 ** i for i in range(config.order_refinements)]
    kref = k0 / config.order_reference_factor
    duration = config.order_duration
    report = {"dt_ladder_s": ks, "reference_dt_s": kref,
              "duration_s": duration, "schemes": {}}
    rows = []
    for scheme in SchemeKind:
        ref = run_simulation(model, scheme, kref, duration,
                             record=config.record or None, backend=backend,
                             v_init=config.v_init)
        if not ref.stable:
            raise RegimeViolation(f"{scheme.value} reference run unstable in "
                                  "the subthreshold regime")
        if analysis.detect_spikes(ref):
            raise RegimeViolation(f"spikes detected in the {scheme.value} "
                                  "reference ladder trace")
        pts = []
        for k in ks:
            tr = run_simulation(model, scheme, k, duration,
                                record=config.record or None,
                                backend=backend, v_init=config.v_init)
            if not tr.stable:
                raise RegimeViolation(f"{scheme.value} ladder run at "
                                      f"k={k!r} unstable")
            if analysis.detect_spikes(tr):
                raise RegimeViolation(f"spikes detected in the "
                                      f"{scheme.value} ladder trace")
            stride = int(round(k / kref))
            ref_v = ref.voltages[::stride, 0][:tr.voltages.shape[0]]
            nsamp = min(ref_v.size, tr.voltages.shape[0])
            err = float(np.sqrt(np.mean(
                (tr.voltages[:nsamp, 0] - ref_v[:nsamp]) ** 2)))
            pts.append((k, err))
        slope = analysis.empirical_order(pts)
        report["schemes"][scheme.value] = {
            "slope": slope,
            "points": [{"dt_s": k, "rms_volts": e} for k, e in pts],
            "appendix_only": scheme.appendix_only,
        }
        for k, e in pts:
            rows.append((scheme.value, k, e, slope))
    write_csv(out / "order_table.csv",
              ["scheme", "dt_s", "rms_volts", "slope"], rows)
    write_json(out / "order_report.json", report)
    return report


# --- re-analysis of existing traces ------------------------------------------


def analyze_existing(traces_dir, out_dir) -> dict:
    """Re-run the analysis suite over trace CSVs on disk.

    Traces are grouped by scheme; each scheme's smallest-dt trace serves as
    its accuracy reference.
    """
    tdir = Path(traces_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traces = []
    for path in sorted(tdir.glob("*.csv")):
        try:
            traces.append(SimTrace.from_csv(path.read_text(encoding="utf-8")))
        except (ValueError, KeyError):
            continue
    if not traces:
        raise CableSimError(f"no readable traces in {tdir}")
    by_scheme = {}
    for tr in traces:
        by_scheme.setdefault(tr.scheme, []).append(tr)
    cells = []
    for scheme in sorted(by_scheme):
        group = sorted(by_scheme[scheme], key=lambda t: t.dt)
        reference = group[0]
        for tr in group:
            cells.append(analyze_trace(tr, reference))
    report = {"n_traces": len(traces), "cells": cells}
    write_json(out / "analysis_report.json", report)
    return report
