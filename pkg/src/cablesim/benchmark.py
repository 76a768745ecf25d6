"""Backend benchmark: numba kernels against the pure-numpy path.

Runs the default surrogate under a few schemes on both backends, reports
steps/second and the maximum voltage deviation between the two (they share
arithmetic but not libm implementations, so agreement is ~1e-12 V, not
bitwise).
"""

from __future__ import annotations

import time

import numpy as np

from .backend import HAS_NUMBA
from .integrators import run_simulation
from .models import surrogate_model

BENCH_SCHEMES = ("hcn", "ftcs", "rk41")


def _time_run(model, scheme, dt, duration, backend):
    start = time.perf_counter()
    trace = run_simulation(model, scheme, dt, duration, backend=backend)
    elapsed = time.perf_counter() - start
    return trace, elapsed


def run_benchmark(dt: float = 2e-6, duration: float = 0.02) -> list:
    """Print a per-scheme comparison table; returns the measured rows."""
    model = surrogate_model()
    n_steps = int(round(duration / dt))
    rows = []
    print(f"surrogate model: {model.n} compartments, "
          f"{n_steps} steps at dt={dt:g} s")
    if HAS_NUMBA:
        # trigger compilation outside the timed region
        run_simulation(model, "hcn", dt, 10 * dt, backend="numba")
    header = f"{'scheme':10s} {'numpy steps/s':>14s} {'numba steps/s':>14s} " \
             f"{'speedup':>8s} {'max |dV|':>10s}"
    print(header)
    for scheme in BENCH_SCHEMES:
        tr_np, t_np = _time_run(model, scheme, dt, duration, "numpy")
        if HAS_NUMBA:
            run_simulation(model, scheme, dt, 10 * dt, backend="numba")
            tr_nb, t_nb = _time_run(model, scheme, dt, duration, "numba")
            n = min(tr_np.voltages.shape[0], tr_nb.voltages.shape[0])
            dev = float(np.abs(tr_np.voltages[:n] - tr_nb.voltages[:n]).max())
            row = (scheme, n_steps / t_np, n_steps / t_nb, t_np / t_nb, dev)
            print(f"{scheme:10s} {row[1]:14.3g} {row[2]:14.3g} "
                  f"{row[3]:8.1f} {row[4]:10.2e}")
        else:
            row = (scheme, n_steps / t_np, None, None, None)
            print(f"{scheme:10s} {row[1]:14.3g} {'n/a':>14s} {'n/a':>8s} "
                  f"{'n/a':>10s}")
        rows.append(row)
    return rows
