"""
Resonance peak location on the controlled compliance.

Peaks are maxima of ``|h(w)|^2``. From each starting guess the search
climbs along the sign of ``d|h|^2/dw = 2 Re(conj(h) dh/dw)`` with a
monotone-ascent line search until the slope changes sign, then polishes
the stationary point with Brent's method inside that bracket. Points that
fail a second-difference maximum test fall back to a golden-section search
on ``|h|^2`` over the bracket.
"""

from dataclasses import dataclass
import logging
import warnings

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .coupling import compliance_and_derivative, compliance_sweep, controlled_compliance
from .errors import EqualPeakError, NoPeaksError

log = logging.getLogger(__name__)

MAX_ITER = 200
MAX_STEP = 0.1       # relative to current omega
MERGE_TOL = 1e-6     # relative
STATIONARITY_TOL = 1e-8
CLASSIFY_STEP = 1e-5


@dataclass(frozen=True)
class Peak:
    omega: float
    h: complex
    amplitude: float  # |h| / normalization
    guess: float


@dataclass(frozen=True)
class PeakSet:
    """Maxima of the compliance magnitude, sorted by frequency."""

    peaks: tuple
    normalization: float = 1.0

    def __len__(self):
        return len(self.peaks)

    def __iter__(self):
        return iter(self.peaks)

    @property
    def omegas(self):
        return np.array([p.omega for p in self.peaks])

    @property
    def values(self):
        return np.array([p.h for p in self.peaks], dtype=complex)

    @property
    def amplitudes(self):
        """Normalized amplitudes ``|h|_i``."""
        return np.array([p.amplitude for p in self.peaks])

    def spread(self):
        """``(max - min) / max`` of the amplitudes."""
        a = self.amplitudes
        return float((a.max() - a.min()) / a.max())


def _slope(model, absorbers, channel, omega, mass_floor):
    h, dh = compliance_and_derivative(model, absorbers, channel, omega, mass_floor)
    return abs(h) ** 2, 2.0 * (np.conj(h) * dh).real, h


def classify_stationary_point(model, absorbers, channel, omega, mass_floor=0.0,
                              step=CLASSIFY_STEP):
    """Label a stationary point ``"maximum"``, ``"minimum"`` or ``"saddle"``."""
    dw = step * omega

    def f(w):
        return abs(controlled_compliance(model, absorbers, channel, w, mass_floor=mass_floor)) ** 2

    f0 = f(omega)
    second = f(omega + dw) - 2.0 * f0 + f(omega - dw)
    if abs(second) <= 1e-13 * max(f0, np.finfo(float).tiny):
        return "saddle"
    return "maximum" if second < 0 else "minimum"


def stationarity_residual(model, absorbers, channel, omega, mass_floor=0.0):
    """Dimensionless slope ``|Re(conj(h) dh/dw)| * w / |h|^2``."""
    h, dh = compliance_and_derivative(model, absorbers, channel, omega, mass_floor)
    return float(abs((np.conj(h) * dh).real) * omega / abs(h) ** 2)


def is_stationary(model, absorbers, channel, omega, mass_floor=0.0, tol=STATIONARITY_TOL):
    """
    Whether ``omega`` is a stationary point of ``|h|^2``.

    Passes when the residual is within ``tol`` or, on very sharp peaks where
    rounding dominates the residual, when the slope changes sign within
    ``1e-14`` relative of ``omega``.
    """
    if stationarity_residual(model, absorbers, channel, omega, mass_floor) <= tol:
        return True
    d = 1e-14 * omega
    lo = _slope(model, absorbers, channel, omega - d, mass_floor)[1]
    hi = _slope(model, absorbers, channel, omega + d, mass_floor)[1]
    return lo >= 0 >= hi


def _climb(model, absorbers, channel, guess, mass_floor, omega_cap):
    """Ascend from ``guess`` until the slope of |h|^2 changes sign.

    Returns a bracket ``(lo, hi)`` with positive slope at ``lo`` and negative
    at ``hi``, or ``None`` if the search ran away.
    """
    w = float(guess)
    f, g, _ = _slope(model, absorbers, channel, w, mass_floor)
    if g == 0.0:
        return w, w
    direction = 1.0 if g > 0 else -1.0
    step = 1e-4 * w
    for _ in range(MAX_ITER):
        step = min(step, MAX_STEP * w)
        w_new = w + direction * step
        if not 0.0 < w_new <= omega_cap:
            return None
        f_new, g_new, _ = _slope(model, absorbers, channel, w_new, mass_floor)
        if f_new < f and np.sign(g_new) == np.sign(g):
            # overshot a peak and landed on another ascent; shrink
            step *= 0.25
            if step < 1e-15 * w:
                return None
            continue
        if np.sign(g_new) != np.sign(g) or g_new == 0.0:
            lo, hi = (w, w_new) if direction > 0 else (w_new, w)
            return lo, hi
        w, f, g = w_new, f_new, g_new
        step *= 2.0
    return None


def _polish(model, absorbers, channel, lo, hi, mass_floor):
    if lo == hi:
        return lo

    def slope(w):
        return _slope(model, absorbers, channel, w, mass_floor)[1]

    try:
        w = brentq(slope, lo, hi, xtol=1e-15 * hi, rtol=4 * np.finfo(float).eps, maxiter=MAX_ITER)
    except (ValueError, RuntimeError):
        w = None
    if w is not None and classify_stationary_point(model, absorbers, channel, w, mass_floor) == "maximum":
        return w
    # golden-section fallback on the bracket, then re-polish locally
    res = minimize_scalar(
        lambda x: -abs(controlled_compliance(model, absorbers, channel, x, mass_floor=mass_floor)) ** 2,
        bounds=(lo, hi), method="bounded", options={"xatol": 1e-12 * hi},
    )
    w = float(res.x)
    span = 1e-6 * w
    a, b = max(lo, w - span), min(hi, w + span)
    if slope(a) > 0 > slope(b):
        w = brentq(slope, a, b, xtol=1e-15 * hi, rtol=4 * np.finfo(float).eps)
    return w


def locate_peak(model, absorbers, channel, guess, mass_floor=0.0, omega_cap=None, quiet=False):
    """
    Climb from one guess to a compliance maximum.

    Returns a :class:`Peak`, or ``None`` when the search runs away or ends
    on a point that is not a maximum.
    """
    guess = float(guess)
    if omega_cap is None:
        omega_cap = 10.0 * guess
    try:
        bracket = _climb(model, absorbers, channel, guess, mass_floor, omega_cap)
        if bracket is None:
            if quiet:
                return None
            warnings.warn(f"peak search from {guess:.6g} rad/s ran away; guess dropped",
                          RuntimeWarning, stacklevel=3)
            return None
        w = _polish(model, absorbers, channel, *bracket, mass_floor)
        if classify_stationary_point(model, absorbers, channel, w, mass_floor) != "maximum":
            log.debug("stationary point at %g is not a maximum", w)
            return None
        h = controlled_compliance(model, absorbers, channel, w, mass_floor=mass_floor)
    except EqualPeakError as exc:
        log.debug("peak search from %g failed: %s", guess, exc)
        return None
    return Peak(float(w), complex(h), abs(h) / channel.normalization, guess)


def merge_peaks(found, normalization=1.0, merge_tol=MERGE_TOL):
    """Sort peaks and merge those closer than ``merge_tol`` (relative)."""
    found = sorted((p for p in found if p is not None), key=lambda p: p.omega)
    merged = []
    for p in found:
        if merged and abs(p.omega - merged[-1].omega) <= merge_tol * p.omega:
            if p.amplitude > merged[-1].amplitude:
                merged[-1] = p
            continue
        merged.append(p)
    return PeakSet(tuple(merged), normalization)


def find_peaks(model, absorbers, channel, guesses, mass_floor=0.0, omega_cap=None,
               merge_tol=MERGE_TOL, strict=True):
    """
    Locate the compliance maxima reachable from ``guesses``.

    Parameters
    ----------
    model, absorbers, channel
        Controlled structure and transfer function.
    guesses : sequence of float
        Starting frequencies (rad/s), all positive.
    mass_floor : float
        Forwarded to the compliance evaluation.
    omega_cap : float, optional
        Searches leaving ``(0, omega_cap]`` are dropped with a warning.
        Defaults to ten times the largest guess.
    merge_tol : float
        Relative distance below which two maxima are the same peak.
    strict : bool
        Raise :class:`NoPeaksError` when nothing survives.

    Returns
    -------
    PeakSet
    """
    guesses = np.asarray(guesses, dtype=float).reshape(-1)
    if guesses.size == 0 or np.any(guesses <= 0):
        raise ValueError("guesses must be a nonempty list of positive frequencies")
    if omega_cap is None:
        omega_cap = 10.0 * guesses.max()
    found = [locate_peak(model, absorbers, channel, g, mass_floor, omega_cap) for g in guesses]
    peaks = merge_peaks(found, channel.normalization, merge_tol)
    if not len(peaks) and strict:
        raise NoPeaksError("no compliance maximum found from the given guesses")
    return peaks


def find_all_peaks(model, absorbers, channel, band, guesses=(), scan_points=2000,
                   mass_floor=0.0, merge_tol=MERGE_TOL):
    """
    Compliance maxima inside a frequency band.

    Searches start from the local maxima of a log-spaced scan of ``band``,
    from the host natural frequencies inside it and from ``guesses``; only
    maxima landing inside the band are kept.

    Parameters
    ----------
    band : (float, float)
        Lower and upper frequency (rad/s), ``0 < lo < hi``.
    guesses : sequence of float, optional
        Extra starting frequencies, e.g. expected absorber peaks.
    scan_points : int
        Size of the seeding scan; 0 disables it.

    Returns
    -------
    PeakSet
    """
    lo, hi = float(band[0]), float(band[1])
    if not 0 < lo < hi:
        raise ValueError("band must satisfy 0 < lo < hi")
    seeds = [np.asarray(guesses, dtype=float).reshape(-1)]
    if scan_points > 2:
        grid = np.geomspace(lo, hi, int(scan_points))
        vals = compliance_sweep(model, absorbers, channel, grid, mass_floor=mass_floor)
        seeds.append(sweep_maxima(grid, vals)[0])
    seeds.append(model.frequencies)
    seeds = np.concatenate(seeds)
    seeds = seeds[(seeds >= lo) & (seeds <= hi)]
    found = [locate_peak(model, absorbers, channel, g, mass_floor=mass_floor,
                         omega_cap=2.0 * hi, quiet=True) for g in seeds]
    found = [pk for pk in found if pk is not None and lo <= pk.omega <= hi]
    return merge_peaks(found, channel.normalization, merge_tol)


def sweep(model, absorbers, channel, omegas, mass_floor=0.0):
    """Compliance on a frequency grid (unnormalized, complex)."""
    return compliance_sweep(model, absorbers, channel, omegas, mass_floor=mass_floor)


def sweep_maxima(omegas, values):
    """Interior local maxima of ``|values|`` on a grid: ``(omega, |value|)`` pairs."""
    a = np.abs(values)
    idx = np.flatnonzero((a[1:-1] > a[:-2]) & (a[1:-1] >= a[2:])) + 1
    return np.asarray(omegas)[idx], a[idx]
