"""Inverse pipeline: MLE coherence, decay-model fits, and drift tracking.

Contrast is reported as C = 2|rho_12| in [0, 1] for balanced
populations.  The estimator inverts the readout convention defined in
:mod:`zeemansim.sequence`:

    p_x = (1 + C cos(phi))/2,   p_y = (1 + C sin(phi))/2.

All optimizations are deterministic: interior maximum-likelihood
solutions are closed form, and everything else is a bracketed scan
followed by bounded one-dimensional refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import j0, xlogy

from .measurement import MeasurementRecord

TWO_PI = 2.0 * math.pi
INV_SQRT_E = 1.0 / math.sqrt(math.e)

# 68.27% (one sigma) likelihood-ratio interval: delta log L = 0.5
_PROFILE_DROP = 0.5


# ---------------------------------------------------------------------------
# Maximum-likelihood coherence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoherenceEstimate:
    contrast: float
    phase: float  # radians in (-pi, pi]
    confidence: float  # half-width of the 68% profile-likelihood interval on C
    loglik: float
    phase_defined: bool = True

    def __post_init__(self):
        if not 0.0 <= self.contrast <= 1.0:
            raise ValueError(f"contrast {self.contrast} outside [0, 1]")
        if self.confidence < 0.0:
            raise ValueError("confidence must be >= 0")


def log_likelihood(record: MeasurementRecord, contrast: float, phase: float) -> float:
    """Joint binomial log likelihood of the record under (C, phi)."""
    px = 0.5 * (1.0 + contrast * math.cos(phase))
    py = 0.5 * (1.0 + contrast * math.sin(phase))
    return float(
        xlogy(record.bright_x, px)
        + xlogy(record.shots_x - record.bright_x, 1.0 - px)
        + xlogy(record.bright_y, py)
        + xlogy(record.shots_y - record.bright_y, 1.0 - py)
    )


def _boundary_phase_loglik(record, phase):
    return log_likelihood(record, 1.0, phase)


def _refine_scalar(f, lo, hi, xatol=1e-12):
    res = minimize_scalar(lambda x: -f(x), bounds=(lo, hi), method="bounded",
                          options={"xatol": xatol})
    return float(res.x), float(-res.fun)


def _loglik_phases(record, contrast, phis):
    px = 0.5 * (1.0 + contrast * np.cos(phis))
    py = 0.5 * (1.0 + contrast * np.sin(phis))
    return (
        xlogy(record.bright_x, px) + xlogy(record.shots_x - record.bright_x, 1.0 - px)
        + xlogy(record.bright_y, py) + xlogy(record.shots_y - record.bright_y, 1.0 - py)
    )


def _max_over_phase(record, contrast, n_grid=64):
    """max_phi logL(contrast, phi) by coarse scan plus bounded refinement."""
    phis = np.linspace(-math.pi, math.pi, n_grid, endpoint=False)
    values = _loglik_phases(record, contrast, phis)
    k = int(np.argmax(values))
    step = TWO_PI / n_grid
    phi, value = _refine_scalar(
        lambda p: log_likelihood(record, contrast, p),
        phis[k] - step, phis[k] + step,
    )
    return phi, value


def mle_coherence(record: MeasurementRecord, with_confidence: bool = True) -> CoherenceEstimate:
    """Maximum-likelihood contrast and phase from one record.

    When the empirical frequencies invert to a point inside the unit
    disk the MLE equals that inversion exactly; otherwise the maximum is
    searched on the C = 1 boundary.  The confidence field is the 68%
    profile-likelihood half width on C, which stays meaningful at the
    constraint boundary where the Fisher approximation does not
    (``with_confidence=False`` skips it when only the point estimate is
    needed, e.g. in bulk oracle comparisons).
    """
    x_hat = 2.0 * record.bright_x / record.shots_x - 1.0
    y_hat = 2.0 * record.bright_y / record.shots_y - 1.0
    c_free = math.hypot(x_hat, y_hat)

    if c_free == 0.0:
        c_mle, phi_mle = 0.0, 0.0
        phase_defined = False
    elif c_free <= 1.0:
        c_mle, phi_mle = c_free, math.atan2(y_hat, x_hat)
        phase_defined = True
    else:
        phi_mle, _ = _max_over_phase(record, 1.0)
        c_mle = 1.0
        phase_defined = True
    loglik = log_likelihood(record, c_mle, phi_mle)

    confidence = _profile_confidence(record, c_mle, loglik) if with_confidence else 0.0
    return CoherenceEstimate(
        contrast=c_mle,
        phase=_wrap_phase(phi_mle),
        confidence=confidence,
        loglik=loglik,
        phase_defined=phase_defined,
    )


def _profile_confidence(record, c_mle, loglik_max):
    target = loglik_max - _PROFILE_DROP

    def profile(c):
        return _max_over_phase(record, c)[1]

    def crossing(lo, hi, f_lo_above):
        # bisect for profile(c) = target; f_lo_above says profile(lo) >= target
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            if (profile(mid) >= target) == f_lo_above:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    c_lo = 0.0 if profile(0.0) >= target else crossing(c_mle, 0.0, True)
    c_hi = 1.0 if profile(1.0) >= target else crossing(c_mle, 1.0, True)
    return 0.5 * (c_hi - c_lo)


def _wrap_phase(phi):
    wrapped = math.remainder(phi, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


# ---------------------------------------------------------------------------
# Grid-search oracle for the MLE
# ---------------------------------------------------------------------------

_GRID_CACHE = {}


def _coarse_grid(resolution):
    key = round(resolution, 12)
    if key not in _GRID_CACHE:
        c_grid = np.arange(0.0, 1.0 + resolution / 2, resolution)
        phi_grid = np.arange(-math.pi, math.pi, resolution)
        px = 0.5 * (1.0 + np.outer(c_grid, np.cos(phi_grid)))
        py = 0.5 * (1.0 + np.outer(c_grid, np.sin(phi_grid)))
        tiny = 1e-300
        tables = tuple(
            np.log(np.clip(m, tiny, None)).astype(np.float32)
            for m in (px, 1.0 - px, py, 1.0 - py)
        )
        _GRID_CACHE[key] = (c_grid, phi_grid, tables)
    return _GRID_CACHE[key]


def grid_search_mle(
    record: MeasurementRecord,
    resolution: float = 1e-3,
    refine_rounds: int = 0,
) -> tuple:
    """Exhaustive (C, phi) grid maximization of the record likelihood.

    The independent oracle the optimizer is checked against.  With
    ``refine_rounds`` > 0 the winning cell is re-gridded locally (20x
    finer per round) to sharpen the location.  Returns (C, phi, logL).
    """
    c_grid, phi_grid, (la, lb, lc, ld) = _coarse_grid(resolution)
    kx, nx = record.bright_x, record.shots_x
    ky, ny = record.bright_y, record.shots_y
    total = kx * la + (nx - kx) * lb + ky * lc + (ny - ky) * ld
    flat = int(np.argmax(total))
    i, j = divmod(flat, total.shape[1])
    c_best, phi_best = float(c_grid[i]), float(phi_grid[j])

    # zoom rounds halve the window while keeping 41 points, so each
    # round's argmax may drift up to 10 spacings along the likelihood
    # ridge and still stays covered by the next window
    span_c = span_phi = resolution
    for _ in range(refine_rounds):
        cs = np.clip(np.linspace(c_best - span_c, c_best + span_c, 41), 0.0, 1.0)
        ps = np.linspace(phi_best - span_phi, phi_best + span_phi, 41)
        px = 0.5 * (1.0 + np.outer(cs, np.cos(ps)))
        py = 0.5 * (1.0 + np.outer(cs, np.sin(ps)))
        values = (
            xlogy(kx, px) + xlogy(nx - kx, 1.0 - px)
            + xlogy(ky, py) + xlogy(ny - ky, 1.0 - py)
        )
        ii, jj = np.unravel_index(int(np.argmax(values)), values.shape)
        c_best, phi_best = float(cs[ii]), float(ps[jj])
        span_c /= 2.0
        span_phi /= 2.0

    return c_best, _wrap_phase(phi_best), log_likelihood(record, c_best, phi_best)


# ---------------------------------------------------------------------------
# Special functions and the ac-line contrast model
# ---------------------------------------------------------------------------

def hypergeom_0f1_regularized(b: float, z: float, max_terms: int = 500) -> float:
    """Regularized confluent hypergeometric limit function.

    Series sum_k z^k / (Gamma(b+k) k!) by term-ratio recursion.  For
    positive integer b the terms are summed in exact rational
    arithmetic, which keeps the heavy cancellation at large negative z
    (the Bessel regime, 0F1(1, -x^2/4) = J0(x)) at full double
    precision.
    """
    if b <= 0 and b == int(b):
        raise ValueError(f"lower parameter b={b} is a non-positive integer pole")
    if float(b).is_integer() and b > 0:
        return _hyp0f1_exact_int(int(b), z, max_terms)

    term = 1.0 / math.gamma(b)
    terms = [term]
    for k in range(max_terms):
        term = term * z / ((b + k) * (k + 1))
        terms.append(term)
        if abs(term) <= 1e-30 * max(1.0, abs(terms[0])):
            return math.fsum(terms)
    raise ArithmeticError(
        f"0F1 series did not converge within {max_terms} terms (b={b}, z={z})"
    )


def _hyp0f1_exact_int(b: int, z: float, max_terms: int) -> float:
    z_exact = Fraction(z)
    # 1/Gamma(b) = 1/(b-1)!
    term = Fraction(1, math.factorial(b - 1))
    total = Fraction(0)
    bound = Fraction(1, 10**40)
    for k in range(max_terms):
        total += term
        term = term * z_exact / ((b + k) * (k + 1))
        if abs(term) <= bound * max(abs(total), Fraction(1)):
            return float(total + term)
    raise ArithmeticError(
        f"0F1 series did not converge within {max_terms} terms (b={b}, z={z})"
    )


def echo_phase_amplitude(delta_ac: float, omega_ac: float, tau: float) -> float:
    """Amplitude of the single-echo phase over one ac-line cycle."""
    return (4.0 * delta_ac / omega_ac) * math.sin(omega_ac * tau / 4.0) ** 2


def ac_line_contrast_model(tau: float, delta_ac: float, omega_ac: float = TWO_PI * 50.0) -> float:
    """Line-phase-averaged echo contrast J0(4 delta/omega * sin^2(omega tau/4)).

    This is the analytic average of exp(i phi) over a uniform line
    phase, with phi the closed-form single-echo phase; it vanishes
    nowhere the phase amplitude does and revives at tau = k * 4pi/omega.
    """
    if delta_ac < 0:
        raise ValueError("delta_ac must be >= 0")
    if omega_ac <= 0:
        raise ValueError("omega_ac must be > 0")
    return float(j0(echo_phase_amplitude(delta_ac, omega_ac, tau)))


def chi_average_contrast(
    tau: float, delta_ac: float, omega_ac: float = TWO_PI * 50.0, n_points: int = 16384
) -> float:
    """Direct numeric line-phase average of exp(i phi) (oracle path).

    Trapezoid rule over the periodic integrand converges spectrally, so
    the default grid reaches ~1e-13 even at large phase amplitudes.
    """
    chis = np.linspace(0.0, TWO_PI, n_points, endpoint=False)
    amp = echo_phase_amplitude(delta_ac, omega_ac, tau)
    phases = -amp * np.cos(omega_ac * tau / 2.0 + chis)
    return float(np.mean(np.cos(phases)))


# ---------------------------------------------------------------------------
# Decay fits
# ---------------------------------------------------------------------------

class FitError(RuntimeError):
    """A decay fit failed; carries residual diagnostics."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class DecayFit:
    model: str  # "gaussian" or "ac_line"
    parameter: float  # tau_d in seconds, or delta_ac in rad/s
    stderr: float
    residual_norm: float
    n_points: int
    diverged: bool = False

    def __post_init__(self):
        if not self.diverged and self.parameter <= 0:
            raise ValueError("fitted timescale/depth must be strictly positive")


def _weights(estimates, floor=1e-3):
    conf = np.array([max(e.confidence, floor) for e in estimates])
    return 1.0 / conf**2


def _prepare_points(points, minimum):
    points = sorted(points, key=lambda p: p[0])
    taus = np.array([t for t, _ in points])
    if len(points) < minimum:
        raise ValueError(f"need at least {minimum} points, got {len(points)}")
    if len(set(taus.tolist())) != len(taus):
        raise ValueError("wait times must be distinct")
    cs = np.array([e.contrast for _, e in points])
    w = _weights([e for _, e in points])
    return taus, cs, w


def _stderr_from_profile(chi2, best, chi2_min, lo, hi):
    """Half width of the delta-chi2 = 1 interval around the minimum."""
    target = chi2_min + 1.0

    def crossing(a, b):
        fa = chi2(a) - target
        if fa < 0:
            return None
        for _ in range(60):
            mid = 0.5 * (a + b)
            if chi2(mid) - target >= 0:
                a = mid
            else:
                b = mid
        return 0.5 * (a + b)

    left = crossing(lo, best)
    right = crossing(hi, best)
    sides = [abs(best - c) for c in (left, right) if c is not None]
    return max(sides) if sides else math.inf


def fit_gaussian_decay(points) -> DecayFit:
    """Weighted least-squares Gaussian decay exp(-tau^2 / (2 tau_d^2)).

    Fitted in u = 1/tau_d^2, whose u -> 0 limit cleanly represents the
    no-decay case: data consistent with constant contrast come back
    flagged as diverged instead of crashing.
    """
    taus, cs, w = _prepare_points(points, minimum=3)

    def chi2_u(u):
        return float(np.sum(w * (cs - np.exp(-0.5 * taus**2 * u)) ** 2))

    def dchi2_du(u):
        model = np.exp(-0.5 * taus**2 * u)
        return float(np.sum(w * (cs - model) * model * taus**2))

    u_max = 1e4 / np.min(taus) ** 2
    scan = np.concatenate(([0.0], np.geomspace(1e-6 / np.max(taus) ** 2, u_max, 400)))
    values = [chi2_u(u) for u in scan]
    k = int(np.argmin(values))
    lo = scan[max(k - 1, 0)]
    hi = scan[min(k + 1, len(scan) - 1)]
    # the stationarity condition brackets inside the scan cell; bisect it
    # to machine precision (parabolic minimizers stall near 1e-9 here)
    if dchi2_du(lo) < 0.0 < dchi2_du(hi):
        a, b = lo, hi
        for _ in range(200):
            mid = 0.5 * (a + b)
            if mid == a or mid == b:
                break
            if dchi2_du(mid) < 0.0:
                a = mid
            else:
                b = mid
        u_best = 0.5 * (a + b)
    else:
        u_best, _ = _refine_scalar(lambda u: -chi2_u(u), lo, hi, xatol=1e-16 * u_max)

    if u_best <= 1e-3 / np.max(taus) ** 2 and chi2_u(0.0) <= chi2_u(u_best) + 1e-12:
        return DecayFit("gaussian", math.inf, math.inf, math.sqrt(chi2_u(0.0)),
                        len(taus), diverged=True)

    tau_d = 1.0 / math.sqrt(u_best)
    chi2_min = chi2_u(u_best)

    def chi2_tau(t):
        return chi2_u(1.0 / t**2)

    stderr = _stderr_from_profile(chi2_tau, tau_d, chi2_min, tau_d / 10, tau_d * 10)
    return DecayFit("gaussian", tau_d, stderr, math.sqrt(chi2_min), len(taus))


def fit_ac_line_model(points, omega_ac: float = TWO_PI * 50.0, delta_max: float | None = None) -> DecayFit:
    """One-parameter fit of |J0| ac-line contrast versus wait time.

    The measured contrast is nonnegative, so the model is compared
    through its magnitude (a sign flip of J0 appears in the estimated
    phase, not the contrast).  The chi-squared landscape oscillates in
    delta_ac, so a dense linear scan brackets the global minimum before
    refinement.
    """
    taus, cs, w = _prepare_points(points, minimum=5)
    span = np.max(taus) - np.min(taus)
    if span < TWO_PI / omega_ac:
        raise ValueError("wait times must span at least one ac-line revival period")
    if delta_max is None:
        delta_max = 100.0 * omega_ac

    def chi2(delta):
        model = np.abs(j0((4.0 * delta / omega_ac) * np.sin(omega_ac * taus / 4.0) ** 2))
        return float(np.sum(w * (cs - model) ** 2))

    # step keeps the phase amplitude change under ~0.4 rad between scan points
    step = 0.1 * omega_ac
    scan = np.arange(0.0, delta_max + step, step)
    values = [chi2(d) for d in scan]
    k = int(np.argmin(values))
    if k == len(scan) - 1:
        raise FitError(
            "ac-line fit ran into the delta_ac scan ceiling",
            {"delta_max": delta_max, "chi2_at_ceiling": values[-1]},
        )
    lo, hi = scan[max(k - 1, 0)], scan[k + 1]
    delta_best, _ = _refine_scalar(lambda d: -chi2(d), lo, hi, xatol=1e-10 * omega_ac)
    chi2_min = chi2(delta_best)

    stderr = _stderr_from_profile(
        chi2, delta_best, chi2_min, max(delta_best - step, 0.0), delta_best + step
    )
    return DecayFit("ac_line", delta_best, stderr, math.sqrt(chi2_min), len(taus))


def threshold_crossing_time(points, level: float = INV_SQRT_E) -> float:
    """First wait time where the contrast drops below the level.

    Linear interpolation between the bracketing points; infinity if the
    contrast never crosses (reported alongside Gaussian fits for decays
    that are not Gaussian).
    """
    pts = sorted(points, key=lambda p: p[0])
    prev_tau, prev_c = 0.0, 1.0
    for tau, est in pts:
        c = est.contrast
        if c < level:
            frac = (prev_c - level) / (prev_c - c)
            return prev_tau + frac * (tau - prev_tau)
        prev_tau, prev_c = tau, c
    return math.inf


# ---------------------------------------------------------------------------
# Short-Ramsey line-deviation measurement
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShortRamseyResult:
    delta_ac: float  # rad/s
    stderr: float
    offset_phase: float  # static phase component, radians
    residual_rms: float
    phases: tuple  # per-chi MLE phases as measured


def short_ramsey_deviation(chi_records, omega_ac: float = TWO_PI * 50.0) -> ShortRamseyResult:
    """Line modulation depth from short triggered Ramseys at fixed phases.

    Extracts the MLE phase of each record and fits the line-phase
    sinusoid; see :func:`fit_line_phase_sinusoid`.
    """
    if len(chi_records) < 4:
        raise ValueError("need at least 4 line phases")
    chis = np.array([c for c, _ in chi_records])
    if len(set(np.round(chis, 12).tolist())) < 4:
        raise ValueError("need at least 4 distinct line phases")
    taus = {r.wait_time for _, r in chi_records}
    if len(taus) != 1:
        raise ValueError("all records must share the same wait time")
    tau = taus.pop()
    phases = np.array([mle_coherence(r).phase for _, r in chi_records])
    return fit_line_phase_sinusoid(chis, phases, tau, omega_ac)


def fit_line_phase_sinusoid(
    chis, phases, tau: float, omega_ac: float = TWO_PI * 50.0
) -> ShortRamseyResult:
    """Fit measured Ramsey phases versus line phase to the ac model.

    A short Ramsey started at line phase chi accumulates exactly
    phi(chi) = a sin(chi + omega tau/2) + c with
    a = delta_ac * (2/omega) sin(omega tau/2); the trigger geometry
    fixes the sinusoid's phase so only the amplitude a and a static
    offset c are free.  Phases wrap for strong modulation, so the fit
    minimizes the circular residual sum(1 - cos(phi - model)).
    """
    chis = np.asarray(chis, float)
    phases = np.asarray(phases, float)
    kernel = (2.0 / omega_ac) * math.sin(omega_ac * tau / 2.0)
    geometry = np.sin(chis + omega_ac * tau / 2.0)

    def cost(a, c):
        return float(np.sum(1.0 - np.cos(phases - a * geometry - c)))

    a_guess_max = max(4.0 * math.pi, 2.0 * np.max(np.abs(phases)) / max(np.max(np.abs(geometry)), 1e-9))
    a_scan = np.linspace(0.0, a_guess_max, 400)
    c_scan = np.linspace(-math.pi, math.pi, 64, endpoint=False)
    grid = np.array([[cost(a, c) for c in c_scan] for a in a_scan])
    i, jj = np.unravel_index(int(np.argmin(grid)), grid.shape)
    a_best, c_best = float(a_scan[i]), float(c_scan[jj])

    for _ in range(4):  # coordinate refinement, bounded and deterministic
        da = a_scan[1] - a_scan[0]
        a_best, _ = _refine_scalar(lambda a: -cost(a, c_best),
                                   max(a_best - da, 0.0), a_best + da, xatol=1e-12)
        c_best, _ = _refine_scalar(lambda c: -cost(a_best, c),
                                   c_best - 0.5, c_best + 0.5, xatol=1e-12)

    residuals = phases - a_best * geometry - c_best
    circ = np.arctan2(np.sin(residuals), np.cos(residuals))
    residual_rms = float(np.sqrt(np.mean(circ**2)))

    # curvature-based 1-sigma on the amplitude, with the phase scatter
    # estimated from the residuals themselves
    d2 = float(np.sum(np.cos(circ) * geometry**2))
    sigma_phi2 = max(residual_rms**2, 1e-12)
    var_a = sigma_phi2 / max(d2, 1e-12)
    delta_ac = a_best / kernel
    return ShortRamseyResult(
        delta_ac=delta_ac,
        stderr=math.sqrt(var_a) / abs(kernel),
        offset_phase=_wrap_phase(c_best),
        residual_rms=residual_rms,
        phases=tuple(phases.tolist()),
    )


# ---------------------------------------------------------------------------
# Drift tracking
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DriftTrack:
    wall_times: tuple  # seconds
    offsets: tuple  # rad/s qubit-frequency offsets
    max_drift_rate: float  # rad/s per second
    total_shift: float  # rad/s
    unwrap_failures: tuple = ()

    def __post_init__(self):
        times = self.wall_times
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ValueError("wall times must be increasing")


def track_drift(records, rate_window: int = 1) -> DriftTrack:
    """Qubit-frequency drift from fixed-wait Ramsey phases over wall time.

    The 2pi ambiguity is resolved by continuity (consecutive true phase
    steps must stay below pi; steps that land on the boundary are
    flagged, not guessed).  ``rate_window`` > 1 computes the drift rate
    by local straight-line slopes over that many samples, which tames
    shot noise on dense tracks; the default is the raw finite
    difference.
    """
    if len(records) < 2:
        raise ValueError("need at least 2 records to track drift")
    records = sorted(records, key=lambda r: r.wall_time)
    taus = {r.wait_time for r in records}
    if len(taus) != 1:
        raise ValueError("drift tracking needs a common wait time")
    tau = taus.pop()

    phases = np.array([mle_coherence(r).phase for r in records])
    steps = np.arctan2(np.sin(np.diff(phases)), np.cos(np.diff(phases)))
    failures = tuple(int(i) for i in np.nonzero(np.abs(steps) >= math.pi * (1 - 1e-9))[0])
    unwrapped = np.concatenate(([phases[0]], phases[0] + np.cumsum(steps)))

    offsets = unwrapped / tau
    times = np.array([r.wall_time for r in records])

    window = max(int(rate_window), 1)
    if window <= 1 or len(records) < window + 1:
        rates = np.diff(offsets) / np.diff(times)
    else:
        rates = []
        for start in range(len(records) - window + 1):
            t = times[start:start + window]
            y = offsets[start:start + window]
            slope = np.polyfit(t, y, 1)[0]
            rates.append(slope)
        rates = np.array(rates)

    return DriftTrack(
        wall_times=tuple(times.tolist()),
        offsets=tuple(offsets.tolist()),
        max_drift_rate=float(np.max(np.abs(rates))),
        total_shift=float(offsets[-1] - offsets[0]),
        unwrap_failures=failures,
    )
