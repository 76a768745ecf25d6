"""Command-line driver: run, sweep, stability, order, analyze, bench.

Exit codes: 0 success, 2 config error, 3 instability flagged,
4 analysis precondition unmet.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .backend import resolve_backend
from .errors import (CableSimError, ConfigError, InsufficientCycles, NoSpikes,
                     NonpositiveError, RegimeViolation, SignalTooShort)
from .configio import load_experiment
from .reports import (analyze_existing, run_cell, run_order_study,
                      run_stability_report, run_sweep, trace_filename,
                      write_json)
from .schemes import parse_scheme

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNSTABLE = 3
EXIT_PRECONDITION = 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cablesim",
        description="Compartmental cable-equation simulator comparing seven "
                    "time integrators.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_config=True):
        if needs_config:
            sp.add_argument("--config", required=True, type=Path,
                            help="experiment TOML")
        sp.add_argument("--out", type=Path, default=None,
                        help="output directory (default from config)")
        sp.add_argument("--backend", choices=["numba", "numpy"], default=None,
                        help="kernel backend (default: CABLESIM_BACKEND or "
                             "numba when available)")

    sp = sub.add_parser("run", help="one simulation, trace CSV + JSON out")
    common(sp)
    sp.add_argument("--scheme", required=True)
    sp.add_argument("--dt", required=True, type=float, help="step size, s")
    sp.add_argument("--duration", type=float, default=None)

    sp = sub.add_parser("sweep", help="all (scheme, dt) cells plus reports")
    common(sp)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--seedless", action="store_true",
                    help="assert determinism by re-running the first cell "
                         "and byte-comparing its serialized trace")
    sp.add_argument("--no-traces", action="store_true",
                    help="skip writing per-cell trace CSVs")

    sp = sub.add_parser("stability", help="Von Neumann limit report")
    common(sp)

    sp = sub.add_parser("order", help="empirical convergence-order table")
    common(sp)

    sp = sub.add_parser("analyze", help="re-analyze existing trace CSVs")
    common(sp, needs_config=False)
    sp.add_argument("--traces", required=True, type=Path,
                    help="directory of trace CSVs")

    sp = sub.add_parser("bench",
                        help="compare the numba and numpy backends")
    sp.add_argument("--dt", type=float, default=2e-6)
    sp.add_argument("--duration", type=float, default=0.02)
    return p


def _cmd_run(args) -> int:
    config = load_experiment(args.config)
    scheme = parse_scheme(args.scheme)
    out = Path(args.out or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace = run_cell(config, scheme, args.dt, backend=args.backend,
                     duration=args.duration)
    stem = trace_filename(scheme, args.dt)
    (out / f"{stem}.csv").write_text(trace.to_csv(), encoding="utf-8")
    write_json(out / f"{stem}.meta.json", {
        "scheme": trace.scheme, "dt_s": trace.dt,
        "duration_s": trace.duration, "stable": trace.stable,
        "failure_time_s": trace.failure_time, "model": trace.model_hash,
        "backend": trace.backend, "n_samples": trace.n_samples,
        "recorded_compartments": trace.rec_ids, "note": trace.note,
    })
    (out / f"{stem}.json").write_text(trace.to_json(), encoding="utf-8")
    if not trace.stable:
        print(f"unstable: trace truncated at t={trace.failure_time!r} s")
        return EXIT_UNSTABLE
    print(f"wrote {out / (stem + '.csv')} ({trace.n_samples} samples)")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config = load_experiment(args.config)
    result = run_sweep(config, jobs=args.jobs, backend=args.backend,
                       emit_traces=not args.no_traces, out_dir=args.out)
    if args.seedless:
        scheme, dt = next(iter(sorted(result.traces)))
        again = run_cell(config, scheme, dt, backend=args.backend)
        if again.to_csv() != result.traces[(scheme, dt)].to_csv():
            print("determinism check FAILED", file=sys.stderr)
            return 1
        print("determinism check passed")
    n_unstable = sum(1 for c in result.cells.values() if not c["stable"])
    print(f"sweep complete: {len(result.cells)} cells, "
          f"{n_unstable} flagged unstable -> {result.out_dir}")
    return EXIT_OK


def _cmd_stability(args) -> int:
    config = load_experiment(args.config)
    report = run_stability_report(config, backend=args.backend,
                                  out_dir=args.out)
    for name, entry in report["schemes"].items():
        lim = entry["limit_seconds"]
        lim_txt = "Unbounded" if entry["unbounded"] else f"{lim:.3e} s"
        print(f"{name:10s} limit: {lim_txt}")
    return EXIT_OK


def _cmd_order(args) -> int:
    config = load_experiment(args.config)
    report = run_order_study(config, backend=args.backend, out_dir=args.out)
    for name, entry in report["schemes"].items():
        print(f"{name:10s} slope: {entry['slope']:+.3f}")
    return EXIT_OK


def _cmd_analyze(args) -> int:
    out = args.out or (args.traces.parent / "analysis")
    report = analyze_existing(args.traces, out)
    print(f"analyzed {report['n_traces']} traces -> {out}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    from .benchmark import run_benchmark
    run_benchmark(dt=args.dt, duration=args.duration)
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if getattr(args, "backend", None) is not None:
            resolve_backend(args.backend)
        handler = {
            "run": _cmd_run, "sweep": _cmd_sweep, "stability": _cmd_stability,
            "order": _cmd_order, "analyze": _cmd_analyze, "bench": _cmd_bench,
        }[args.command]
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InsufficientCycles, NoSpikes, RegimeViolation, SignalTooShort,
            NonpositiveError) as exc:
        print(f"analysis precondition unmet: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except ValueError as exc:
        print(f"bad argument: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CableSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
