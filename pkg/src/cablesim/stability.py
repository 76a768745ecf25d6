"""Von Neumann growth factors, step-size limits, and the spectral centroid.

Growth factors follow the per-scheme Fourier-mode formulas with
K = alpha + sum(beta), L = (c1 + c2) sin^2(theta/2), M = (c1 - c2) sin(theta)
and B = K + c1 + c2. Floating boundaries admit only cosine modes, so the
cosine-basis value (imaginary part dropped) is the stability-relevant one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InsufficientCycle, UnsupportedScheme
from .schemes import SchemeKind, parse_scheme

#: Real-axis extent of the classic four-stage stability region, |R(z)| = 1.
RK41_STABILITY_CONSTANT = 2.7853
#: Roots within this distance of |g| = 1 count as on the unit circle.
UNIT_CIRCLE_TOL = 1e-9


@dataclass(frozen=True)
class SchemeCoefficients:
    """Frozen-instant inputs to the growth-factor formulas."""

    K: float      # alpha + sum(beta), 1/s
    L: float      # (c1 + c2) sin^2(theta/2), 1/s
    M: float      # (c1 - c2) sin(theta), 1/s
    B: float      # K + c1 + c2, 1/s
    theta: float  # radians in [0, pi]

    def __post_init__(self):
        if not self.K > 0.0:
            raise ValueError("K must be > 0")
        if self.L < 0.0:
            raise ValueError("L must be >= 0")
        if self.B < self.K:
            raise ValueError("B must be >= K")

    @classmethod
    def from_components(cls, K: float, c1: float, c2: float,
                        theta: float) -> "SchemeCoefficients":
        return cls(K=K, L=(c1 + c2) * math.sin(theta / 2.0) ** 2,
                   M=(c1 - c2) * math.sin(theta), B=K + c1 + c2, theta=theta)


@dataclass(frozen=True)
class GrowthFactor:
    """Complex per-step amplification and its cosine-basis (M = 0) value."""

    value: complex
    cosine_basis_value: float

    @property
    def magnitude(self) -> float:
        return abs(self.value)


def taylor2_growth_roots(p: float) -> np.ndarray:
    """Roots of g^3 + (5P - 1) g^2 - P = 0, via the companion matrix."""
    return np.roots([1.0, 5.0 * p - 1.0, 0.0, -p])


def taylor2_max_root(p: float) -> complex:
    roots = taylor2_growth_roots(p)
    mags = np.abs(roots)
    best = np.nonzero(mags >= mags.max() - 0.0)[0]
    # deterministic tie-break among a conjugate pair
    pick = max(best, key=lambda i: (roots[i].real, roots[i].imag))
    return complex(roots[pick])


def taylor2_stable(p: float) -> bool:
    """Whether every root lies within the unit circle (tolerance 1e-9)."""
    return float(np.abs(taylor2_growth_roots(p)).max()) <= 1.0 + UNIT_CIRCLE_TOL


def growth_factor(scheme, coeffs: SchemeCoefficients, k: float) -> GrowthFactor:
    """Per-step Fourier amplification g(k, theta) for one scheme.

    Taylor2 returns the maximum-magnitude root of its growth cubic; its
    cosine-basis value is that root's real part.
    """
    scheme = parse_scheme(scheme)
    if k <= 0.0:
        raise ValueError("k must be > 0")
    K, L, M, B = coeffs.K, coeffs.L, coeffs.M, coeffs.B
    p_real = K + 2.0 * L
    if scheme is SchemeKind.FTCS:
        value = (1.0 - p_real * k) - 1j * M * k
        cosine = 1.0 - p_real * k
    elif scheme is SchemeKind.BTCS:
        value = 1.0 / (1.0 + (p_real + 1j * M) * k)
        cosine = 1.0 / (1.0 + p_real * k)
    elif scheme is SchemeKind.EXPONENTIAL_EULER:
        decay = math.exp(-B * k)
        cos_term = (B - K) - 2.0 * L   # (c1 + c2) cos(theta)
        value = decay + ((cos_term - 1j * M) / B) * (1.0 - decay)
        cosine = decay + (cos_term / B) * (1.0 - decay)
    elif scheme is SchemeKind.HCN:
        z = (p_real + 1j * M) * k
        value = (2.0 - z) / (2.0 + z)
        cosine = (1.0 - 0.5 * p_real * k) / (1.0 + 0.5 * p_real * k)
    elif scheme is SchemeKind.RK21:
        z = p_real + 1j * M
        value = 1.0 - k * z + 0.5 * k * k * B * z
        cosine = 1.0 - k * p_real + 0.5 * k * k * B * p_real
    elif scheme is SchemeKind.RK41:
        z = p_real + 1j * M
        value = (1.0 - k * z + (k ** 2 / 2.0) * B * z
                 - (k ** 3 / 6.0) * B ** 2 * z + (k ** 4 / 24.0) * B ** 3 * z)
        cosine = (1.0 - k * p_real + (k ** 2 / 2.0) * B * p_real
                  - (k ** 3 / 6.0) * B ** 2 * p_real
                  + (k ** 4 / 24.0) * B ** 3 * p_real)
    elif scheme is SchemeKind.TAYLOR2:
        root = taylor2_max_root(0.25 * k * p_real)
        value = root
        cosine = root.real
    else:  # pragma: no cover
        raise UnsupportedScheme(str(scheme))
    return GrowthFactor(value=complex(value), cosine_basis_value=float(cosine))


def butcher_stability_polynomial(scheme, z: complex) -> complex:
    """R(z) for the RK schemes on the frozen model ODE y' = lambda y."""
    scheme = parse_scheme(scheme)
    if scheme is SchemeKind.RK21:
        return 1.0 + z + z ** 2 / 2.0
    if scheme is SchemeKind.RK41:
        return 1.0 + z + z ** 2 / 2.0 + z ** 3 / 6.0 + z ** 4 / 24.0
    raise UnsupportedScheme(f"Butcher analysis applies to the RK schemes, "
                            f"not {scheme.value}")


@dataclass(frozen=True)
class StepLimit:
    """Largest stable step size; math.inf means unconditionally stable.

    HCN carries the oscillation-onset threshold 2/(K+2L): beyond it the
    growth factor is negative and the solution alternates with shrinking
    amplitude.
    """

    scheme: SchemeKind
    limit: float
    oscillation_onset: Optional[float] = None

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.limit)


def step_limit(scheme, coeffs: SchemeCoefficients) -> StepLimit:
    """Von Neumann step-size limit at one frozen instant."""
    scheme = parse_scheme(scheme)
    p_real = coeffs.K + 2.0 * coeffs.L
    if scheme in (SchemeKind.FTCS, SchemeKind.TAYLOR2):
        return StepLimit(scheme, 2.0 / p_real)
    if scheme is SchemeKind.RK21:
        return StepLimit(scheme, 2.0 / coeffs.B)
    if scheme is SchemeKind.RK41:
        return StepLimit(scheme, RK41_STABILITY_CONSTANT / coeffs.B)
    if scheme is SchemeKind.HCN:
        return StepLimit(scheme, math.inf, oscillation_onset=2.0 / p_real)
    if scheme in (SchemeKind.BTCS, SchemeKind.EXPONENTIAL_EULER):
        return StepLimit(scheme, math.inf)
    raise UnsupportedScheme(str(scheme))  # pragma: no cover


def butcher_limit(scheme, b: float) -> float:
    """Step limit from the RK stability region with eigenvalue -B."""
    scheme = parse_scheme(scheme)
    if scheme not in (SchemeKind.RK21, SchemeKind.RK41):
        raise UnsupportedScheme("butcher_limit applies to RK21 and RK41")
    if b < 0.0:
        raise ValueError("B must be >= 0")
    if b == 0.0:
        return math.inf
    c = 2.0 if scheme is SchemeKind.RK21 else RK41_STABILITY_CONSTANT
    return c / b


# --- spectral centroid ----------------------------------------------------

DFT_SIZE = 32
OMEGAS = np.arange(DFT_SIZE // 2 + 1) * (math.pi / (DFT_SIZE // 2))


@dataclass(frozen=True)
class PlaneWaveSpectrum:
    """One-sided plane-wave magnitudes on omega_i = i*pi/16 plus centroid."""

    magnitudes: np.ndarray
    centroid: float
    all_zero: bool

    @property
    def omegas(self) -> np.ndarray:
        return OMEGAS.copy()


def spectral_centroid(path_voltages, remove_mean: bool = True
                      ) -> PlaneWaveSpectrum:
    """Magnitude-weighted mean spatial frequency of a compartment profile.

    The vector (13 samples on the default tip-to-tip path) is mean-removed,
    zero-padded to 32 samples and transformed; the centroid weights
    omega_i = i*pi/16 by |H(omega_i)|. A spectrum with no content is flagged
    all_zero and reports centroid 0.
    """
    x = np.asarray(path_voltages, dtype=float)
    if x.size == 0:
        raise ValueError("path voltage vector must be non-empty")
    if x.size > DFT_SIZE:
        raise ValueError(f"path longer than the {DFT_SIZE}-point transform")
    y = x - x.mean() if remove_mean else x
    padded = np.zeros(DFT_SIZE)
    padded[:y.size] = y
    mags = np.abs(np.fft.rfft(padded))
    total = float(mags.sum())
    tol = 1e-13 * max(1.0, float(np.abs(x).max()))
    if total <= tol:
        return PlaneWaveSpectrum(magnitudes=mags, centroid=0.0, all_zero=True)
    centroid = float((OMEGAS * mags).sum() / total)
    return PlaneWaveSpectrum(magnitudes=mags, centroid=centroid,
                             all_zero=False)


# --- limits over a recorded run --------------------------------------------


@dataclass(frozen=True)
class CycleLimitResult:
    """min over instants and compartments of the per-scheme step limit."""

    scheme: SchemeKind
    limit: float
    oscillation_onset: Optional[float]
    time: float                 # instant attaining the minimum
    compartment_id: int
    theta: float
    k_at_min: float
    l_at_min: float


def _has_complete_cycle(trace) -> bool:
    from .analysis import segment_cycles
    from .errors import InsufficientCycles
    try:
        return len(segment_cycles(trace)) >= 1
    except InsufficientCycles:
        return False


def min_over_cycle_limit(coeffs, scheme, ref_trace=None) -> CycleLimitResult:
    """Minimum step limit over every recorded instant and compartment.

    `coeffs` is a CoefficientRecord from a reference run; theta comes from
    the spectral centroid of the path profile at each instant. The record
    must span a complete AP cycle (checked on ref_trace when given) unless
    the coefficients are time-constant.
    """
    scheme = parse_scheme(scheme)
    kv = coeffs.k_values
    if kv.shape[0] == 0:
        raise InsufficientCycle("empty coefficient record")
    span = float(np.abs(kv - kv[0]).max())
    constant = span <= 1e-9 * max(1.0, float(np.abs(kv).max()))
    if not constant:
        if ref_trace is None or not _has_complete_cycle(ref_trace):
            raise InsufficientCycle(
                "coefficient record does not span a complete AP cycle")

    best = None
    onset_best = math.inf
    for t_idx in range(kv.shape[0]):
        theta = spectral_centroid(coeffs.path_voltages[t_idx]).centroid
        s2 = math.sin(theta / 2.0) ** 2
        for j in range(kv.shape[1]):
            K = float(kv[t_idx, j])
            csum = float(coeffs.csum[j])
            L = csum * s2
            p_real = K + 2.0 * L
            if scheme in (SchemeKind.FTCS, SchemeKind.TAYLOR2):
                lim = 2.0 / p_real
            elif scheme is SchemeKind.RK21:
                lim = 2.0 / (K + csum)
            elif scheme is SchemeKind.RK41:
                lim = RK41_STABILITY_CONSTANT / (K + csum)
            else:
                lim = math.inf
            onset_best = min(onset_best, 2.0 / p_real)
            if best is None or lim < best[0]:
                best = (lim, float(coeffs.times[t_idx]),
                        int(coeffs.ids[j]), theta, K, L)
    lim, t_at, cid, theta, K, L = best
    onset = onset_best if scheme is SchemeKind.HCN else None
    return CycleLimitResult(scheme=scheme, limit=lim,
                            oscillation_onset=onset, time=t_at,
                            compartment_id=cid, theta=theta, k_at_min=K,
                            l_at_min=L)
