"""AP-cycle segmentation, waveform classification, accuracy and oscillation
measurements, Welch periodograms, and empirical convergence order.

Spikes rise monotonically from below -0.04 V to peaks above -0.01 V; ADPs
are modest post-spike maxima below -0.04 V. Oscillations are runs of more
than two consecutive nonzero second undivided differences with alternating
polarity, each contributing an amplitude of one quarter of |d|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (InsufficientCycles, NonpositiveError, NoSpikes,
                     SignalTooShort)
from .trace import SimTrace

SPIKE_PEAK_THRESHOLD = -0.01   # volts; spikes peak above this
SPIKE_BASE_THRESHOLD = -0.04   # volts; the rise must start below this
ADP_CEILING = -0.04            # volts; ADP peaks stay below this
MONOTONE_TOL = 1e-12           # volts of allowed jitter on the rising limb
ZERO_CONCAVITY_TOL = 1e-12     # volts; |d| at or below this counts as zero
STATS_SKIP_CYCLES = 19         # statistics use cycles after the 19th (0-based)
WELCH_RATE = 250.0             # Hz
WELCH_SEGMENT = 250            # samples
WELCH_HOP = 100                # samples (250 window, 150 overlap)


def _series(trace, compartment=None):
    """Normalize a SimTrace / (times, v) pair / bare voltage vector."""
    if isinstance(trace, SimTrace):
        col = 0 if compartment is None else trace.rec_ids.index(compartment)
        return np.asarray(trace.times, float), trace.voltages[:, col]
    if isinstance(trace, tuple) and len(trace) == 2:
        t, v = trace
        return np.asarray(t, dtype=float), np.asarray(v, dtype=float)
    v = np.asarray(trace, dtype=float)
    return np.arange(v.size, dtype=float), v


@dataclass(frozen=True)
class Spike:
    index: int
    time: float
    value: float


@dataclass(frozen=True)
class Adp:
    index: int
    time: float
    value: float
    oscillation_suspect: bool = False


@dataclass
class ApCycle:
    """One segmented AP cycle: [start, end] sample indices inclusive."""

    start: int
    end: int
    spike_times: list
    spike_values: list
    adp_times: list = field(default_factory=list)
    adp_values: list = field(default_factory=list)
    adp_suspect: list = field(default_factory=list)
    adp_indices: list = field(default_factory=list)  # absolute sample indices
    period: float = 0.0
    v_min: float = 0.0
    v_max: float = 0.0

    @property
    def n_spikes(self) -> int:
        return len(self.spike_times)

    @property
    def n_adp(self) -> int:
        return len(self.adp_times)


@dataclass(frozen=True)
class WaveformClass:
    """Spike/ADP counts in the paper's "<spikes>-<adp>" classification."""

    n_spikes: int
    n_adp: int
    suspect: bool = False

    @property
    def label(self) -> str:
        return f"{self.n_spikes}-{self.n_adp}"

    @property
    def display(self) -> str:
        return self.label + (" (suspect)" if self.suspect else "")


@dataclass(frozen=True)
class OscillationEvent:
    """Run of >2 alternating-sign concavities; amplitudes are |d|/4."""

    start: int                # center index (into v) of the first concavity
    run_length: int
    amplitudes: np.ndarray    # volts, one per concavity in the run
    rms: float


@dataclass(frozen=True)
class AccuracyReport:
    scheme: str
    dt: float
    rms: float                # volts, over the synchronized cycle
    alignment_shift: float    # seconds the test cycle was shifted


@dataclass(frozen=True)
class SpectralDensity:
    frequencies: np.ndarray   # Hz, 0..125 on a 1 Hz grid
    power: np.ndarray         # V^2/Hz
    sample_rate: float = WELCH_RATE


def _local_max_indices(v):
    idx = []
    for i in range(1, v.size - 1):
        if v[i - 1] < v[i] and v[i] >= v[i + 1]:
            idx.append(i)
    return idx


def detect_spikes(trace, compartment=None) -> list:
    """Local maxima above -0.01 V with a monotone rise from below -0.04 V.

    Walking back from the peak, samples must descend (within 1e-12 V
    jitter) below -0.04 V before any earlier local maximum intervenes.
    """
    times, v = _series(trace, compartment)
    spikes = []
    for i in _local_max_indices(v):
        if v[i] <= SPIKE_PEAK_THRESHOLD:
            continue
        j = i
        rose_from_base = False
        while j > 0 and v[j - 1] <= v[j] + MONOTONE_TOL:
            j -= 1
            if v[j] < SPIKE_BASE_THRESHOLD:
                rose_from_base = True
                break
        if rose_from_base:
            spikes.append(Spike(index=i, time=float(times[i]),
                                value=float(v[i])))
    return spikes


def detect_adp(trace, compartment=None, oscillations=None) -> list:
    """Post-spike local maxima below -0.04 V, after the first local minimum.

    The segment starts just after a cycle's last spike. ADPs whose peak sits
    inside a detected oscillation run are flagged oscillation-suspect but
    still reported.
    """
    times, v = _series(trace, compartment)
    if v.size < 3:
        return []
    first_min = None
    for i in range(1, v.size - 1):
        if v[i - 1] > v[i] and v[i] <= v[i + 1]:
            first_min = i
            break
    if first_min is None:
        return []
    sus_ranges = []
    for ev in oscillations or ():
        sus_ranges.append((ev.start, ev.start + ev.run_length - 1))
    out = []
    for i in _local_max_indices(v):
        if i <= first_min or v[i] >= ADP_CEILING:
            continue
        suspect = any(lo <= i <= hi for lo, hi in sus_ranges)
        out.append(Adp(index=i, time=float(times[i]), value=float(v[i]),
                       oscillation_suspect=suspect))
    return out


#: A spike gap is a cycle boundary when its minimum sits within this
#: fraction of the trace's deepest value, measured against the -0.04 V
#: spike base. Shallower dips separate spikes of one burst.
BOUNDARY_DEPTH_FRACTION = 0.25


def segment_cycles(trace, compartment=None) -> list:
    """Split a trace into complete AP cycles.

    Boundaries sit at the absolute minimum between consecutive spike
    groups; a gap between spikes counts as a cycle boundary only when its
    minimum approaches the trace's deepest polarization (intra-burst dips
    stay well above it). Only cycles bounded on both sides are returned;
    raises InsufficientCycles when fewer than one complete cycle exists.
    """
    times, v = _series(trace, compartment)
    spikes = detect_spikes((times, v))
    if len(spikes) < 2:
        raise InsufficientCycles(f"{len(spikes)} spikes cannot bound a "
                                 "complete cycle")
    deepest = float(v.min())
    depth_scale = max(SPIKE_BASE_THRESHOLD - deepest, 1e-9)
    bounds = []
    for sa, sb in zip(spikes[:-1], spikes[1:]):
        lo, hi = sa.index, sb.index
        rel = int(np.argmin(v[lo:hi + 1]))
        if v[lo + rel] - deepest <= BOUNDARY_DEPTH_FRACTION * depth_scale:
            bounds.append(lo + rel)
    if len(bounds) < 2:
        raise InsufficientCycles(
            f"{len(bounds)} cycle boundaries cannot bound a complete cycle")
    cycles = []
    for b0, b1 in zip(bounds[:-1], bounds[1:]):
        seg = v[b0:b1 + 1]
        cyc_spikes = [s for s in spikes if b0 <= s.index <= b1]
        last_spike = cyc_spikes[-1].index if cyc_spikes else b0
        tail = v[last_spike:b1 + 1]
        osc = detect_oscillations(tail) if tail.size >= 5 else []
        adps = detect_adp((times[last_spike:b1 + 1], tail),
                          oscillations=osc)
        cycles.append(ApCycle(
            start=b0, end=b1,
            spike_times=[s.time for s in cyc_spikes],
            spike_values=[s.value for s in cyc_spikes],
            adp_times=[a.time for a in adps],
            adp_values=[a.value for a in adps],
            adp_suspect=[a.oscillation_suspect for a in adps],
            adp_indices=[last_spike + a.index for a in adps],
            period=float(times[b1] - times[b0]),
            v_min=float(seg.min()), v_max=float(seg.max())))
    return cycles


@dataclass(frozen=True)
class CycleStats:
    n_used: int
    min_mean: float
    min_std: float
    max_mean: float
    max_std: float
    period_mean: float
    period_std: float


def cycle_stats(cycles, skip: int = STATS_SKIP_CYCLES) -> CycleStats:
    """Mean/std of cycle minima, maxima and periods after the skip count."""
    used = cycles[skip:]
    if not used:
        raise InsufficientCycles(
            f"{len(cycles)} cycles, need more than {skip}")
    mins = np.array([c.v_min for c in used])
    maxs = np.array([c.v_max for c in used])
    periods = np.array([c.period for c in used])
    return CycleStats(n_used=len(used),
                      min_mean=float(mins.mean()), min_std=float(mins.std()),
                      max_mean=float(maxs.mean()), max_std=float(maxs.std()),
                      period_mean=float(periods.mean()),
                      period_std=float(periods.std()))


def accuracy_rms(trace, reference, cycle_index: int = STATS_SKIP_CYCLES,
                 compartment=None) -> AccuracyReport:
    """RMS voltage difference of the synchronized cycle against a reference.

    Extracts cycle `cycle_index` (0-based; 19 selects the twentieth) from
    both traces, shifts the test cycle so the first spike peaks coincide,
    resamples it onto the reference grid by linear interpolation, and
    returns the RMS difference over the overlapping span.
    """
    if isinstance(trace, SimTrace) and isinstance(reference, SimTrace):
        if trace.scheme != reference.scheme:
            raise ValueError("accuracy is measured against the same scheme's "
                             "1 us reference")
    t_test, v_test = _series(trace, compartment)
    t_ref, v_ref = _series(reference, compartment)
    cyc_test = segment_cycles((t_test, v_test))
    cyc_ref = segment_cycles((t_ref, v_ref))
    if len(cyc_test) <= cycle_index or len(cyc_ref) <= cycle_index:
        raise InsufficientCycles(
            f"cycle {cycle_index + 1} not present in both traces")
    ct = cyc_test[cycle_index]
    cr = cyc_ref[cycle_index]
    if not ct.spike_times or not cr.spike_times:
        raise NoSpikes("cycle lacks an alignable spike peak")
    shift = ct.spike_times[0] - cr.spike_times[0]
    ref_times = t_ref[cr.start:cr.end + 1]
    ref_vals = v_ref[cr.start:cr.end + 1]
    query = ref_times + shift
    valid = (query >= t_test[0]) & (query <= t_test[-1])
    if valid.sum() < 2:
        raise InsufficientCycles("aligned cycles do not overlap")
    interp = np.interp(query[valid], t_test, v_test)
    diff = interp - ref_vals[valid]
    dt = float(trace.dt) if isinstance(trace, SimTrace) else float(
        t_test[1] - t_test[0])
    scheme = trace.scheme if isinstance(trace, SimTrace) else ""
    return AccuracyReport(scheme=scheme, dt=dt,
                          rms=float(np.sqrt(np.mean(diff ** 2))),
                          alignment_shift=float(shift))


def second_undivided_differences(voltages) -> np.ndarray:
    """d_n = v_{n+1} - 2 v_n + v_{n-1}, no division by k^2."""
    v = np.asarray(voltages, dtype=float)
    if v.size < 3:
        raise ValueError("need at least 3 samples")
    return v[2:] - 2.0 * v[1:-1] + v[:-2]


def detect_oscillations(voltages) -> list:
    """Maximal runs of >= 3 consecutive alternating-sign concavities.

    Concavities with |d| <= 1e-12 V count as zero and break runs. Each
    sample in a run contributes an amplitude of |d|/4.
    """
    v = np.asarray(voltages, dtype=float)
    if v.size < 5:
        raise ValueError("need at least 5 samples")
    d = second_undivided_differences(v)
    events = []
    run_start = None
    prev_sign = 0

    def close(run_start, i_end):
        length = i_end - run_start
        if length >= 3:
            amps = np.abs(d[run_start:i_end]) / 4.0
            events.append(OscillationEvent(
                start=run_start + 1, run_length=length, amplitudes=amps,
                rms=float(np.sqrt(np.mean(amps ** 2)))))

    for i in range(d.size):
        s = 0 if abs(d[i]) <= ZERO_CONCAVITY_TOL else (1 if d[i] > 0 else -1)
        if s != 0 and s == -prev_sign:
            prev_sign = s
            continue
        if run_start is not None:
            close(run_start, i)
        run_start = i if s != 0 else None
        prev_sign = s
    if run_start is not None:
        close(run_start, d.size)
    return events


def oscillation_rms_per_cycle(trace, cycles, compartment=None) -> np.ndarray:
    """RMS of oscillation amplitudes falling inside each cycle; 0 if none."""
    _, v = _series(trace, compartment)
    events = detect_oscillations(v) if v.size >= 5 else []
    out = np.zeros(len(cycles))
    for c_i, cyc in enumerate(cycles):
        pooled = []
        for ev in events:
            centers = np.arange(ev.start, ev.start + ev.run_length)
            inside = (centers >= cyc.start) & (centers <= cyc.end)
            if inside.any():
                pooled.append(ev.amplitudes[inside])
        if pooled:
            amps = np.concatenate(pooled)
            out[c_i] = math.sqrt(float(np.mean(amps ** 2)))
    return out


def welch_psd(voltages, native_rate: float) -> SpectralDensity:
    """Welch periodogram on a 250 Hz grid up to 125 Hz.

    The signal is brought to 250 Hz (block averaging when native_rate/250
    is an integer, linear resampling otherwise), mean-removed, and averaged
    over Hamming-windowed 250-sample segments with hop 100 (150 overlap).
    One-sided density scaling: a unit sine integrates to power 0.5.
    """
    x = np.asarray(voltages, dtype=float)
    if native_rate < WELCH_RATE:
        raise ValueError(f"native rate must be >= {WELCH_RATE} Hz")
    factor = native_rate / WELCH_RATE
    if abs(factor - round(factor)) < 1e-9:
        f = int(round(factor))
        if f > 1:
            n_blocks = x.size // f
            x = x[:n_blocks * f].reshape(n_blocks, f).mean(axis=1)
    else:
        t_old = np.arange(x.size) / native_rate
        t_new = np.arange(0.0, t_old[-1] + 0.5 / WELCH_RATE, 1.0 / WELCH_RATE)
        t_new = t_new[t_new <= t_old[-1]]
        x = np.interp(t_new, t_old, x)
    if x.size < WELCH_SEGMENT:
        raise SignalTooShort(
            f"{x.size} samples at 250 Hz, need >= {WELCH_SEGMENT}")
    x = x - x.mean()
    window = np.hamming(WELCH_SEGMENT)
    norm = WELCH_RATE * float(np.sum(window ** 2))
    n_seg = (x.size - WELCH_SEGMENT) // WELCH_HOP + 1
    acc = np.zeros(WELCH_SEGMENT // 2 + 1)
    for s in range(n_seg):
        seg = x[s * WELCH_HOP:s * WELCH_HOP + WELCH_SEGMENT]
        spec = np.fft.rfft(window * seg)
        acc += (spec.real ** 2 + spec.imag ** 2)
    pxx = acc / (n_seg * norm)
    pxx[1:-1] *= 2.0
    freqs = np.fft.rfftfreq(WELCH_SEGMENT, 1.0 / WELCH_RATE)
    return SpectralDensity(frequencies=freqs, power=pxx)


def empirical_order(errors) -> float:
    """Least-squares slope of log(rms) against log(k)."""
    pts = [(float(k), float(r)) for k, r in errors]
    if len(pts) < 3:
        raise ValueError("need at least 3 (k, rms) points")
    if any(r <= 0.0 for _, r in pts):
        raise NonpositiveError("rms values must be > 0 for a log-log fit")
    ks = np.log([k for k, _ in pts])
    rs = np.log([r for _, r in pts])
    return float(np.polyfit(ks, rs, 1)[0])


def classify_cycle(cycle: ApCycle, oscillations=None) -> WaveformClass:
    """"<spikes>-<adp>" label; ADPs inside oscillation runs mark it suspect.

    Suspect ADPs are still counted, avoiding the misleading "<n>-0" reading
    an oscillation-masked ADP would otherwise produce. `oscillations` may
    add whole-trace events (absolute indices) on top of the flags recorded
    during segmentation.
    """
    suspect = any(cycle.adp_suspect)
    for ev in oscillations or ():
        hi = ev.start + ev.run_length - 1
        if any(ev.start <= idx <= hi for idx in cycle.adp_indices):
            suspect = True
    return WaveformClass(n_spikes=cycle.n_spikes, n_adp=cycle.n_adp,
                         suspect=suspect)
