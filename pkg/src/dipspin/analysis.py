"""Observables derived from trajectories: spectra, half-life, moments, fits."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import minimize

from .dynamics import Mode, Trajectory

log = logging.getLogger(__name__)

PROTON_GAMMA = 2.675e4  # rad s^-1 G^-1
PEAK_THRESHOLD = 0.05


class FitError(ValueError):
    pass


@dataclass
class Spectrum:
    """One-sided DFT magnitude of ``e^x``.

    Lab-frame spectra use ``freqs`` in units of the Larmor frequency (the
    Larmor line sits at 1); rotating-frame spectra use angular offset in
    units of ``omega_d``. ``peaks`` holds ``(freq, height, width)`` tuples.
    """

    freqs: NDArray[np.float64]
    amps: NDArray[np.float64]
    peaks: list[tuple[float, float, float]] = field(default_factory=list)
    n_fft: int = 0
    frame: Mode = Mode.LAB_FULL

    def __post_init__(self) -> None:
        if np.any(np.diff(self.freqs) <= 0):
            raise ValueError("spectrum frequencies must be strictly increasing")
        if np.any(self.amps < 0):
            raise ValueError("spectrum amplitudes must be non-negative")


def _uniform_step(times: NDArray[np.float64]) -> float:
    steps = np.diff(times)
    if len(steps) == 0:
        raise ValueError("need at least two samples")
    if np.max(np.abs(steps - steps[0])) > 1e-9 * max(1.0, abs(steps[0])):
        raise ValueError("trajectory is not uniformly sampled")
    return float(steps[0])


def find_peaks(
    freqs: NDArray[np.float64], amps: NDArray[np.float64], threshold: float = PEAK_THRESHOLD
) -> list[tuple[float, float, float]]:
    """Local maxima above ``threshold * max``, refined by a parabola through three bins."""
    if len(amps) < 3 or amps.max() <= 0:
        return []
    floor = threshold * amps.max()
    peaks = []
    inner = np.flatnonzero(
        (amps[1:-1] > amps[:-2]) & (amps[1:-1] >= amps[2:]) & (amps[1:-1] > floor)
    ) + 1
    df = freqs[1] - freqs[0]
    for i in inner:
        y0, y1, y2 = amps[i - 1], amps[i], amps[i + 1]
        denom = y0 - 2 * y1 + y2
        shift = 0.0 if denom == 0 else 0.5 * (y0 - y2) / denom
        shift = float(np.clip(shift, -0.5, 0.5))
        height = y1 - 0.25 * (y0 - y2) * shift
        peaks.append((float(freqs[i] + shift * df), float(height), _fwhm(freqs, amps, i)))
    return peaks


def _fwhm(freqs, amps, i) -> float:
    half = amps[i] / 2
    lo = i
    while lo > 0 and amps[lo] > half:
        lo -= 1
    hi = i
    while hi < len(amps) - 1 and amps[hi] > half:
        hi += 1
    left = np.interp(half, [amps[lo], amps[lo + 1]], [freqs[lo], freqs[lo + 1]]) if amps[lo] <= half else freqs[lo]
    right = np.interp(half, [amps[hi], amps[hi - 1]], [freqs[hi], freqs[hi - 1]]) if amps[hi] <= half else freqs[hi]
    return float(right - left)


def rotating_frame_signal(traj: Trajectory) -> NDArray[np.float64]:
    """``e^x`` as seen in the frame rotating at the Larmor frequency."""
    if traj.mode is Mode.ROTATING_SECULAR:
        return traj.mean_moment[:, 0].copy()
    phase = traj.times / traj.p_d * traj.gamma_sign
    ex, ey = traj.mean_moment[:, 0], traj.mean_moment[:, 1]
    return ex * np.cos(phase) - ey * np.sin(phase)


def spectrum(
    traj: Trajectory,
    window: Optional[str] = None,
    zero_pad: int = 4,
    threshold: float = PEAK_THRESHOLD,
) -> Spectrum:
    """Fourier magnitude of the mean ``e^x`` on the non-negative frequency half."""
    dt = _uniform_step(traj.times)
    x = np.asarray(traj.mean_moment[:, 0], dtype=float)
    if window in (None, "none"):
        w = 1.0
    elif window == "hann":
        w = np.hanning(len(x))
    else:
        raise ValueError(f"unknown window {window!r}")
    if zero_pad < 1:
        raise ValueError("zero_pad must be >= 1")
    n_fft = int(zero_pad) * len(x)
    amps = np.abs(np.fft.rfft(x * w, n_fft))
    omega = 2 * np.pi * np.fft.rfftfreq(n_fft, dt)  # angular, per unit t~
    freqs = omega * traj.p_d if traj.mode is Mode.LAB_FULL else omega
    return Spectrum(
        freqs=freqs,
        amps=amps,
        peaks=find_peaks(freqs, amps, threshold),
        n_fft=n_fft,
        frame=traj.mode,
    )


def parseval_energy(spec: Spectrum) -> float:
    """Time-domain energy reconstructed from a one-sided, windowless spectrum."""
    weights = np.full(len(spec.amps), 2.0)
    weights[0] = 1.0
    if spec.n_fft % 2 == 0:
        weights[-1] = 1.0
    return float(np.sum(weights * spec.amps**2) / spec.n_fft)


def envelope(traj: Trajectory, method: str = "transverse") -> NDArray[np.float64]:
    """Signal envelope.

    ``transverse`` is the magnitude of the mean transverse moment, which is
    the same in the lab and rotating frames. ``peaks`` rebuilds the envelope
    of a rectified lab-frame ``e^x`` by interpolating between its local maxima.
    """
    if method == "transverse":
        return traj.transverse
    if method == "peaks":
        y = np.abs(traj.mean_moment[:, 0])
        idx = np.flatnonzero((y[1:-1] >= y[:-2]) & (y[1:-1] >= y[2:])) + 1
        idx = np.unique(np.concatenate([[0], idx, [len(y) - 1]]))
        return np.interp(traj.times, traj.times[idx], y[idx])
    raise ValueError(f"unknown envelope method {method!r}")


def half_life(
    traj: Trajectory, hold: float = 2 * np.pi, method: str = "transverse"
) -> Optional[float]:
    """First time the envelope drops below half its initial value for good.

    "For good" means it stays below for ``hold`` (one ``omega_d`` period by
    default) or until the end of the record, whichever comes first.
    """
    env = envelope(traj, method)
    return _half_life(traj.times, env, hold)


def _half_life(times, env, hold) -> Optional[float]:
    if env[0] == 0:
        raise ValueError("initial signal is zero")
    half = env[0] / 2
    below = env < half
    i = 1
    while i < len(env):
        if below[i] and not below[i - 1]:
            t_cross = float(np.interp(half, [env[i], env[i - 1]], [times[i], times[i - 1]]))
            horizon = times <= t_cross + hold
            seg = slice(i, int(np.count_nonzero(horizon)))
            if np.all(below[seg]):
                return t_cross
        i += 1
    return None


def spectral_moments(
    spec: Spectrum, center: float, half_width: Optional[float] = None
) -> tuple[float, float]:
    """Second and fourth moments of the amplitude distribution about ``center``.

    ``half_width`` restricts the sums to ``|freq - center| <= half_width``,
    which keeps the far-off noise floor from dominating the fourth moment.
    """
    d = spec.freqs - center
    amps = spec.amps
    if half_width is not None:
        keep = np.abs(d) <= half_width
        d, amps = d[keep], amps[keep]
    total = float(np.sum(amps))
    if total == 0:
        raise ValueError("spectrum is identically zero")
    m2 = float(np.sum(d**2 * amps) / total)
    m4 = float(np.sum(d**4 * amps) / total)
    return m2, m4


@dataclass
class AbragamFit:
    """Parameters of ``A exp(-a^2 t^2 / 2) sin(bt) / (bt)``."""

    a_param: float
    b_param: float
    residual: float
    amplitude: float
    converged: bool = True

    @property
    def ratio(self) -> float:
        return self.b_param / self.a_param


def abragam(t: ArrayLike, a: float, b: float, amplitude: float = 0.7) -> NDArray[np.float64]:
    t = np.asarray(t, dtype=float)
    # np.sinc(x) = sin(pi x)/(pi x), with the removable singularity handled
    return amplitude * np.exp(-0.5 * (a * t) ** 2) * np.sinc(b * t / np.pi)


def fit_abragam(
    traj: Trajectory,
    t_max: Optional[float] = None,
    max_iter: int = 4000,
) -> AbragamFit:
    """Least-squares fit of Abragam's trial function to the rotating-frame FID.

    The prefactor is pinned to the initial signal. A coarse log-spaced grid
    seeds a Nelder-Mead search in ``(log a, log b)``.
    """
    t = traj.times
    y = rotating_frame_signal(traj)
    if t_max is not None:
        keep = t <= t_max
        t, y = t[keep], y[keep]
    return fit_abragam_arrays(t, y, max_iter=max_iter)


def fit_abragam_arrays(t, y, max_iter: int = 4000) -> AbragamFit:
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    amp = float(y[0])
    if amp == 0:
        raise FitError("initial signal is zero")
    if np.min(np.abs(y)) > 0.5 * abs(amp):
        raise FitError("signal never decays below half its initial value; nothing to fit")

    def rms(logp):
        a, b = np.exp(logp)
        return float(np.sqrt(np.mean((abragam(t, a, b, amp) - y) ** 2)))

    span = t[-1] - t[0]
    grid = np.log(np.logspace(np.log10(0.05 / span), np.log10(200 / span), 41))
    best = min(((rms((la, lb)), la, lb) for la in grid for lb in grid))
    res = minimize(
        rms,
        x0=np.array(best[1:]),
        method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": max_iter, "maxfev": 2 * max_iter},
    )
    if not res.success:
        log.warning("Abragam fit did not converge: %s", res.message)
    a, b = np.exp(res.x)
    return AbragamFit(
        a_param=float(a), b_param=float(b), residual=float(res.fun),
        amplitude=amp, converged=bool(res.success),
    )


def peak_split(
    spec: Spectrum, window: tuple[float, float] = (0.5, 1.5)
) -> Optional[float]:
    """Distance between the two tallest peaks inside ``window``; None for a single line."""
    lo, hi = window
    if not np.any((spec.freqs > lo) & (spec.freqs < hi)):
        raise ValueError(f"no spectrum points inside window {window}")
    inside = [p for p in spec.peaks if lo < p[0] < hi]
    if len(inside) < 2:
        return None
    top = sorted(inside, key=lambda p: p[1], reverse=True)[:2]
    return abs(top[0][0] - top[1][0])


def to_physical_time(t_dimless, H_d: float, gamma: float = PROTON_GAMMA):
    """Seconds corresponding to ``t~ = gamma H_d t``."""
    if H_d <= 0 or gamma <= 0:
        raise ValueError("H_d and gamma must be positive")
    return np.asarray(t_dimless, dtype=float) / (gamma * H_d) if np.ndim(t_dimless) else float(t_dimless) / (gamma * H_d)


def dipolar_linewidth_hz(H_d: float, gamma: float = PROTON_GAMMA) -> float:
    """Line broadening ``gamma H_d / 2 pi`` in Hz."""
    if H_d <= 0 or gamma <= 0:
        raise ValueError("H_d and gamma must be positive")
    return gamma * H_d / (2 * np.pi)


def value_at(traj: Trajectory, t: float, signal: Optional[NDArray] = None) -> float:
    sig = traj.transverse if signal is None else signal
    return float(np.interp(t, traj.times, sig))


def recovery(traj: Trajectory, t: float) -> float:
    """Envelope at ``t`` relative to its initial value."""
    env = traj.transverse
    return value_at(traj, t, env) / float(env[0])


def echo_width(traj: Trajectory, t_peak: float, search: float = 2.0) -> float:
    """Full width at half maximum of the envelope peak nearest ``t_peak``."""
    env = traj.transverse
    t = traj.times
    near = np.flatnonzero(np.abs(t - t_peak) <= search)
    if near.size == 0:
        raise ValueError(f"no samples within {search} of t={t_peak}")
    i = int(near[np.argmax(env[near])])
    half = env[i] / 2
    lo = i
    while lo > 0 and env[lo] > half:
        lo -= 1
    hi = i
    while hi < len(env) - 1 and env[hi] > half:
        hi += 1
    if env[lo] > half or env[hi] > half:
        raise ValueError("echo does not fall to half maximum inside the record")
    left = np.interp(half, [env[lo], env[lo + 1]], [t[lo], t[lo + 1]])
    right = np.interp(half, [env[hi], env[hi - 1]], [t[hi], t[hi - 1]])
    return float(right - left)


def envelope_period(traj: Trajectory, t_min: float = 0.0) -> Optional[float]:
    """Dominant period of the envelope from its autocorrelation; None if aperiodic."""
    env = traj.transverse[traj.times >= t_min]
    dt = _uniform_step(traj.times)
    x = env - env.mean()
    if not np.any(x):
        return None
    n = len(x)
    spec = np.fft.rfft(x, 2 * n)
    ac = np.fft.irfft(np.abs(spec) ** 2)[:n]
    ac /= np.arange(n, 0, -1)  # unbiased
    ac /= ac[0]
    limit = n // 2
    neg = np.flatnonzero(ac[:limit] < 0)
    if neg.size == 0:
        return None
    start = neg[0]
    seg = ac[start:limit]
    if seg.size < 3:
        return None
    top = seg.max()
    if top < 0.3:
        return None
    for j in range(1, len(seg) - 1):
        if seg[j] >= seg[j - 1] and seg[j] >= seg[j + 1] and seg[j] >= 0.8 * top:
            y0, y1, y2 = seg[j - 1], seg[j], seg[j + 1]
            denom = y0 - 2 * y1 + y2
            shift = 0.0 if denom == 0 else 0.5 * (y0 - y2) / denom
            return float((start + j + shift) * dt)
    return None


def tail_rms_difference(a: Trajectory, b: Trajectory, t_min: float) -> float:
    """RMS difference of two envelopes over their common samples with ``t >= t_min``."""
    n = min(len(a.times), len(b.times))
    if not np.allclose(a.times[:n], b.times[:n]):
        raise ValueError("trajectories are sampled on different grids")
    keep = a.times[:n] >= t_min
    d = a.transverse[:n][keep] - b.transverse[:n][keep]
    return float(np.sqrt(np.mean(d**2)))
