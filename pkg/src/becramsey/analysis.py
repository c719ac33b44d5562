"""Fringe-signal statistics, power-law fits, and series comparison.

Frequencies come from linearly interpolated zero crossings of the imaginary
part of the mode overlap: for few-period signals with slowly decaying
visibility this is more robust than a spectral fit, and the crossing-spacing
scatter gives the uncertainty directly.  Visibility is |overlap| itself,
since the simulation provides the overlap rather than a detected signal.
All functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import FringeSeries


@dataclass(frozen=True)
class FringeStats:
    """Fringe frequency and envelope extracted from one overlap series.

    frequency and its uncertainty are in trap units (per 1/omega_T); the
    _si fields are rad/s and are NaN when no omega_T was supplied.
    """

    frequency: float
    frequency_uncertainty: float
    frequency_si: float
    frequency_uncertainty_si: float
    zero_crossings: np.ndarray
    visibility: np.ndarray


@dataclass(frozen=True)
class PowerLawFit:
    """Least-squares line in log-log space over a window of N."""

    exponent: float
    prefactor: float
    window: tuple
    residual_rms: float


@dataclass(frozen=True)
class ComparisonMetrics:
    """Pointwise p1 deviation between two series over a common window."""

    max_p1: float
    rms_p1: float
    frequency_ratio: float
    window: tuple
    n_samples: int


def _zero_crossings(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Linearly interpolated zeros of a sampled signal, ascending in time."""
    crossings = []
    n = len(values)
    for i in range(n - 1):
        y0, y1 = values[i], values[i + 1]
        if y0 == 0.0:
            # a sampled exact zero counts when the signal actually moves
            # through it (or starts on it and leaves)
            before = values[i - 1] if i > 0 else -y1
            if before * y1 < 0.0:
                crossings.append(times[i])
        elif y0 * y1 < 0.0:
            crossings.append(times[i] - y0 * (times[i + 1] - times[i]) / (y1 - y0))
    if n > 1 and values[-1] == 0.0 and values[-2] != 0.0:
        crossings.append(times[-1])
    return np.asarray(crossings)


def extract_fringe(series: FringeSeries, omega_t: Optional[float] = None) -> FringeStats:
    """Fringe statistics from the overlap of one Ramsey evolution.

    The frequency is pi over the mean spacing of the zero crossings of
    Im<psi2|psi1>; its uncertainty is propagated from the standard error of
    the spacings (NaN with fewer than three crossings).  omega_t, if given,
    fills in the rad/s fields.
    """
    times = np.asarray(series.times, dtype=float)
    im = np.ascontiguousarray(np.imag(np.asarray(series.overlap)))
    crossings = _zero_crossings(times, im)
    if len(crossings) < 2:
        raise ValueError(
            f"need at least 2 zero crossings of Im(overlap) to estimate a frequency, "
            f"found {len(crossings)}; series too short"
        )
    spacings = np.diff(crossings)
    mean = float(np.mean(spacings))
    frequency = math.pi / mean
    if len(spacings) > 1:
        stderr = float(np.std(spacings, ddof=1)) / math.sqrt(len(spacings))
        uncertainty = math.pi * stderr / mean**2
    else:
        uncertainty = math.nan
    scale = omega_t if omega_t is not None else math.nan
    return FringeStats(
        frequency=frequency,
        frequency_uncertainty=uncertainty,
        frequency_si=frequency * scale,
        frequency_uncertainty_si=uncertainty * scale,
        zero_crossings=crossings,
        visibility=np.abs(np.asarray(series.overlap)),
    )


def phase_slope_frequency(series: FringeSeries, t_max: Optional[float] = None):
    """Frequency from a linear fit to the unwrapped overlap phase.

    Complements the crossing estimator for windows shorter than half a
    fringe period.  Returns (frequency, stderr) in trap units; the overlap
    rotates as exp(-i phi), so the frequency is minus the phase slope.
    """
    times = np.asarray(series.times, dtype=float)
    keep = np.ones(len(times), dtype=bool) if t_max is None else times <= t_max
    if np.count_nonzero(keep) < 3:
        raise ValueError("need at least 3 samples to fit a phase slope")
    t = times[keep]
    phase = np.unwrap(np.angle(np.asarray(series.overlap)[keep]))
    coeffs, cov = np.polyfit(t, phase, 1, cov=True)
    return -float(coeffs[0]), float(math.sqrt(cov[0, 0]))


def fit_power_law(n_values, eta_values, window: Optional[tuple] = None) -> PowerLawFit:
    """Least-squares power law eta = prefactor * N^exponent over a window.

    Only points with finite positive eta inside the window enter the fit;
    at least three are required.  The reported window is the realized
    (min, max) of the N actually used, and the residual is the RMS misfit
    in log space, so rescaling eta by a constant changes the prefactor
    only.
    """
    n_arr = np.asarray(n_values, dtype=float)
    eta_arr = np.asarray(eta_values, dtype=float)
    if n_arr.shape != eta_arr.shape:
        raise ValueError("N and eta arrays must have matching shapes")
    if np.any(n_arr <= 0):
        raise ValueError("atom numbers must be positive for a log-log fit")
    keep = np.isfinite(eta_arr)
    if window is not None:
        lo, hi = window
        if not (lo < hi):
            raise ValueError(f"degenerate fit window ({lo}, {hi})")
        keep &= (n_arr >= lo) & (n_arr <= hi)
    if np.any(eta_arr[keep] <= 0):
        raise ValueError("eta must be positive for a log-log fit")
    if np.count_nonzero(keep) < 3:
        raise ValueError(
            f"need at least 3 points in the fit window, found {np.count_nonzero(keep)}"
        )
    log_n = np.log(n_arr[keep])
    log_eta = np.log(eta_arr[keep])
    slope, intercept = np.polyfit(log_n, log_eta, 1)
    resid = log_eta - (slope * log_n + intercept)
    return PowerLawFit(
        exponent=float(slope),
        prefactor=float(math.exp(intercept)),
        window=(float(np.min(n_arr[keep])), float(np.max(n_arr[keep]))),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
    )


def compare_series(
    a: FringeSeries, b: FringeSeries, horizon: Optional[float] = None
) -> ComparisonMetrics:
    """Deviation of two fringe signals over their common time window.

    b is resampled onto a's sample times by linear interpolation; the
    metrics are the max and RMS of |p1_a - p1_b| over [start, horizon] and
    the ratio of crossing-estimated frequencies (NaN when either signal has
    too few crossings in the window).
    """
    ta = np.asarray(a.times, dtype=float)
    tb = np.asarray(b.times, dtype=float)
    lo = max(ta[0], tb[0])
    hi = min(ta[-1], tb[-1])
    if horizon is not None:
        hi = min(hi, horizon)
    if hi <= lo:
        raise ValueError(f"series do not overlap on [{lo}, {hi}]")
    keep = (ta >= lo) & (ta <= hi)
    t = ta[keep]
    p1_a = np.asarray(a.p1, dtype=float)[keep]
    p1_b = np.interp(t, tb, np.asarray(b.p1, dtype=float))
    dev = np.abs(p1_a - p1_b)

    def crossing_frequency(times, overlap):
        crossings = _zero_crossings(times, np.imag(np.asarray(overlap)))
        if len(crossings) < 2:
            return math.nan
        return math.pi / float(np.mean(np.diff(crossings)))

    f_a = crossing_frequency(t, np.asarray(a.overlap)[keep])
    keep_b = (tb >= lo) & (tb <= hi)
    f_b = crossing_frequency(tb[keep_b], np.asarray(b.overlap)[keep_b])
    return ComparisonMetrics(
        max_p1=float(np.max(dev)),
        rms_p1=float(np.sqrt(np.mean(dev**2))),
        frequency_ratio=f_a / f_b,
        window=(float(lo), float(hi)),
        n_samples=int(len(t)),
    )


def fringe_stats_lines(stats: FringeStats) -> list:
    """Key-value text block for logs and analyze output."""
    return [
        f"frequency_trap = {stats.frequency:.12g}",
        f"frequency_uncertainty_trap = {stats.frequency_uncertainty:.12g}",
        f"frequency_rad_per_s = {stats.frequency_si:.12g}",
        f"frequency_uncertainty_rad_per_s = {stats.frequency_uncertainty_si:.12g}",
        f"zero_crossings = {len(stats.zero_crossings)}",
        f"visibility_min = {float(np.min(stats.visibility)):.12g}",
        f"visibility_max = {float(np.max(stats.visibility)):.12g}",
    ]


def power_law_lines(fit: PowerLawFit) -> list:
    return [
        f"exponent = {fit.exponent:.12g}",
        f"prefactor = {fit.prefactor:.12g}",
        f"window_n = {fit.window[0]:.12g} {fit.window[1]:.12g}",
        f"residual_rms_log = {fit.residual_rms:.12g}",
    ]
