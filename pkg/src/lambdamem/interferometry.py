"""Spectral interferometry: forward model, phase reconstruction and visibility.

Two pulses separated by a known delay dtau give the spectral interferogram

    S(w) = |A1|^2 + |A2|^2 + 2 V |A1| |A2| sin(w dtau + phi2 - phi1)

where V <= 1 is the time-averaged fringe visibility.  Phase diffusion with a
Gaussian spread sigma(t) = f1 t^f2 over an integration time t reduces V to
exp(-2 sigma^2).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import quad

from .core import SPEED_OF_LIGHT, SpectralField, TemporalField, TimeGrid, read_csv_table, to_time
from .fitting import FitResult, levenberg_marquardt, sorted_xy

SUPPORT_FLOOR = 0.05
MIN_SUPPORT = 10
LOW_CONFIDENCE_CLAMP = 0.05
MIN_SAMPLES_PER_FRINGE = 4.0


class UnresolvableFringesError(ValueError):
    """Fringe period is sampled by fewer than four points."""

    def __init__(self, samples_per_fringe):
        super().__init__(
            f"fringe period spans {samples_per_fringe:.3g} samples; need >= {MIN_SAMPLES_PER_FRINGE:g}")
        self.samples_per_fringe = samples_per_fringe


class InsufficientSupportError(ValueError):
    """Too few samples where both arm spectra are above the floor."""


def samples_per_fringe(omega, delta_tau) -> float:
    if delta_tau == 0:
        return math.inf
    step = float(np.max(np.diff(omega)))
    return 2.0 * math.pi / (abs(delta_tau) * step)


@dataclass(frozen=True, eq=False)
class Interferogram:
    omega: np.ndarray
    s: np.ndarray
    delta_tau: float

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        s = np.asarray(self.s, dtype=float)
        if omega.shape != s.shape or omega.ndim != 1 or omega.size < 2:
            raise ValueError("omega and s must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(omega) <= 0):
            raise ValueError("omega must be strictly increasing")
        if np.any(s < 0):
            raise ValueError("spectral intensity must be non-negative")
        spf = samples_per_fringe(omega, self.delta_tau)
        if spf < MIN_SAMPLES_PER_FRINGE:
            raise UnresolvableFringesError(spf)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "s", s)


def forward_interferogram(a1: SpectralField, a2: SpectralField, delta_tau: float,
                          visibility: float = 1.0) -> Interferogram:
    if a1.omega.shape != a2.omega.shape or not np.allclose(a1.omega, a2.omega, rtol=1e-12, atol=0):
        raise ValueError("a1 and a2 must share a frequency grid")
    if not 0 <= visibility <= 1:
        raise ValueError(f"visibility must lie in [0, 1], got {visibility}")
    m1, m2 = a1.amplitude, a2.amplitude
    fringe = np.sin(a1.omega * delta_tau + a2.phase - a1.phase)
    s = m1**2 + m2**2 + 2.0 * visibility * m1 * m2 * fringe
    return Interferogram(a1.omega, np.clip(s, 0.0, None), delta_tau)


@dataclass(frozen=True, eq=False)
class PhaseReconstruction:
    omega: np.ndarray
    magnitude: np.ndarray
    phase: np.ndarray  # NaN outside the support
    phi_dif: np.ndarray  # NaN outside the support
    support: np.ndarray
    excess: np.ndarray  # max(|sin term| - 1, 0) per sample
    clamp_fraction: float
    low_confidence: bool

    def spectral_field(self) -> SpectralField:
        """A2 restricted to the support samples."""
        m = self.support
        return SpectralField(self.omega[m], self.magnitude[m], self.phase[m])


def _track_branches(omega, delta_tau, sin_term, start_branch):
    base = np.arcsin(sin_term)
    carrier = omega * delta_tau
    cand = np.stack([base - carrier, math.pi - base - carrier])
    out = np.empty(sin_term.size)
    first = cand[start_branch, 0]
    out[0] = (first + math.pi) % (2 * math.pi) - math.pi
    for i in range(1, sin_term.size):
        c = cand[:, i]
        c = c + 2 * math.pi * np.round((out[i - 1] - c) / (2 * math.pi))
        out[i] = c[np.argmin(np.abs(c - out[i - 1]))]
    return out


def reconstruct_phase(ig: Interferogram, a1_mag, a2_mag, phi1, visibility: float = 1.0,
                      floor: float = SUPPORT_FLOOR) -> PhaseReconstruction:
    """Recover the phase of A2 from an interferogram and both arm magnitudes.

    The carrier w*dtau is removed before choosing between the two arcsine
    branches; each sample takes the candidate closest to its predecessor and
    the path with the smaller total variation over both starting branches
    wins.  Phases are reported only where both magnitudes exceed ``floor``
    times their peaks.
    """
    a1_mag = np.asarray(a1_mag, dtype=float)
    a2_mag = np.asarray(a2_mag, dtype=float)
    phi1 = np.broadcast_to(np.asarray(phi1, dtype=float), ig.omega.shape)
    if a1_mag.shape != ig.omega.shape or a2_mag.shape != ig.omega.shape:
        raise ValueError("arm magnitudes must be sampled on the interferogram grid")
    if not 0 < visibility <= 1:
        raise ValueError(f"visibility must lie in (0, 1], got {visibility}")
    peak1, peak2 = float(np.max(a1_mag)), float(np.max(a2_mag))
    if peak1 <= 0 or peak2 <= 0:
        raise InsufficientSupportError("an arm spectrum is identically zero")
    support = (a1_mag > floor * peak1) & (a2_mag > floor * peak2)
    n_sup = int(support.sum())
    if n_sup < MIN_SUPPORT:
        raise InsufficientSupportError(f"support has {n_sup} samples; need >= {MIN_SUPPORT}")

    w = ig.omega[support]
    m1, m2 = a1_mag[support], a2_mag[support]
    raw = (ig.s[support] - m1**2 - m2**2) / (2.0 * visibility * m1 * m2)
    excess_sup = np.clip(np.abs(raw) - 1.0, 0.0, None)
    clamped = np.clip(raw, -1.0, 1.0)
    paths = [_track_branches(w, ig.delta_tau, clamped, b) for b in (0, 1)]
    tv = [np.sum(np.abs(np.diff(p))) for p in paths]
    phi_dif_sup = paths[int(np.argmin(tv))]

    phi_dif = np.full(ig.omega.shape, np.nan)
    phi_dif[support] = phi_dif_sup
    excess = np.zeros(ig.omega.shape)
    excess[support] = excess_sup
    clamp_fraction = float(np.mean(np.abs(raw) > 1.0))
    return PhaseReconstruction(
        omega=ig.omega,
        magnitude=a2_mag,
        phase=phi_dif + phi1,
        phi_dif=phi_dif,
        support=support,
        excess=excess,
        clamp_fraction=clamp_fraction,
        low_confidence=clamp_fraction > LOW_CONFIDENCE_CLAMP,
    )


@dataclass(frozen=True, eq=False)
class TimeReconstruction:
    field: TemporalField
    t_ref: float  # phase polynomial is expanded about this time
    c0: float
    c1: float
    c2: float


def _half_max_window(intensity):
    k = int(np.argmax(intensity))
    half = 0.5 * intensity[k]
    lo = k
    while lo > 0 and intensity[lo - 1] >= half:
        lo -= 1
    hi = k
    while hi < intensity.size - 1 and intensity[hi + 1] >= half:
        hi += 1
    return lo, hi


def reconstruct_time_domain(a2: SpectralField, grid: TimeGrid) -> TimeReconstruction:
    """Inverse transform of A2 and a quadratic fit of its temporal phase.

    The phase is fitted as c0 + c1 (t - t_ref) + c2 (t - t_ref)^2 over the
    intensity FWHM window, with t_ref the intensity centroid in that window.
    """
    field = to_time(a2, grid)
    intensity = field.intensity
    if not np.any(intensity > 0):
        raise ValueError("reconstructed pulse is identically zero")
    lo, hi = _half_max_window(intensity)
    if hi - lo + 1 < 3:
        raise ValueError(f"FWHM window holds {hi - lo + 1} samples; need >= 3 for a quadratic fit")
    t = field.times[lo:hi + 1]
    w = intensity[lo:hi + 1]
    t_ref = float(np.dot(t, w) / w.sum())
    phase = np.unwrap(np.angle(field.samples[lo:hi + 1]))
    x = t - t_ref
    design = np.column_stack([np.ones_like(x), x, x * x])
    coef, _, rank, _ = np.linalg.lstsq(design, phase, rcond=None)
    if rank < 3:
        raise ValueError("degenerate FWHM window for the phase fit")
    return TimeReconstruction(field, t_ref, float(coef[0]), float(coef[1]), float(coef[2]))


@dataclass(frozen=True)
class VisibilityModel:
    f1: float
    f2: float

    def __post_init__(self):
        if not self.f1 >= 0:
            raise ValueError(f"f1 must be >= 0, got {self.f1}")

    def sigma(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return self.f1 * np.where(t > 0, t, 0.0) ** self.f2 if self.f1 else np.zeros_like(t)


def visibility_closed_form(model: VisibilityModel, t):
    """exp(-2 (f1 t^f2)^2)."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("integration time must be >= 0")
    out = np.exp(-2.0 * model.sigma(t) ** 2)
    return float(out) if np.ndim(out) == 0 else out


def visibility_quadrature(sigma: float) -> float:
    """Fringe visibility of a Gaussian phase distribution by numerical averaging.

    I_max and I_min average sin^2(phi + pi/2) and sin^2(phi) over a zero-mean
    Gaussian of width ``sigma``.
    """
    if not sigma >= 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return 1.0
    if math.isinf(sigma):
        return 0.0
    span = 12.0 * sigma

    def density(phi):
        return math.exp(-0.5 * (phi / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))

    norm = quad(density, -span, span, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
    # cos^2 phi = (1 + cos 2 phi)/2 and sin^2 phi = (1 - cos 2 phi)/2
    c2 = quad(density, -span, span, weight="cos", wvar=2.0, epsabs=1e-14, limit=200)[0]
    i_max = 0.5 * (norm + c2)
    i_min = 0.5 * (norm - c2)
    return (i_max - i_min) / (i_max + i_min)


def _visibility(t, f1, f2):
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        return np.exp(-2.0 * (f1 * np.where(t > 0, t, 0.0) ** f2) ** 2)


def fit_visibility(times, visibilities) -> FitResult:
    """Least-squares fit of V(t) = exp(-2 (f1 t^f2)^2).

    Data showing no decay (all V = 1) gives f1 = 0 with a ``no_decay`` flag.
    """
    t, v = sorted_xy(times, visibilities, 3)
    if np.any(t < 0):
        raise ValueError("integration times must be >= 0")
    if np.any(v <= 0) or np.any(v > 1):
        raise ValueError("visibilities must lie in (0, 1]")
    names = ("f1", "f2")
    if np.all(v == 1.0):
        return FitResult("visibility", {"f1": 0.0, "f2": 0.0}, {"f1": 0.0, "f2": math.nan},
                         0.0, True, ("no_decay",))
    use = (t > 0) & (v < 1)
    f1g, f2g = 0.1, 0.5
    if use.sum() >= 2 and np.ptp(np.log(t[use])) > 0:
        y = 0.5 * np.log(-0.5 * np.log(v[use]))
        f2g, lnf1 = np.polyfit(np.log(t[use]), y, 1)
        f1g = math.exp(lnf1)
    starts = [(f1g, f2g), (0.5 * f1g, f2g), (2 * f1g, f2g), (f1g, 0.5 * f2g), (f1g, 2 * f2g)]
    result = levenberg_marquardt("visibility", names, _visibility, t, v, starts)
    params = dict(result.params)
    params["f1"] = abs(params["f1"])
    return FitResult(result.model, params, result.std_errs, result.residual_norm, result.converged)


def read_interferogram_csv(path, delta_tau: float, omega_scale: float = 1.0) -> Interferogram:
    """Read ``(wavelength_nm | omega, counts)``.

    Wavelengths convert to angular frequency in rad/s; every frequency is then
    divided by ``omega_scale`` so it matches the units of ``delta_tau``.
    """
    rows, header = read_csv_table(path)
    if len(header) != 2:
        raise ValueError(f"{path}: interferogram CSV needs columns (wavelength_nm|omega, counts)")
    data = np.asarray(rows, dtype=float)
    if data.size == 0:
        raise ValueError(f"{path}: no data rows")
    x, counts = data[:, 0], data[:, 1]
    if "nm" in header[0].lower():
        x = 2.0 * math.pi * SPEED_OF_LIGHT / (x * 1e-9)
    order = np.argsort(x)
    return Interferogram(x[order] / omega_scale, counts[order], delta_tau)


def write_interferogram_csv(path, ig: Interferogram) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["omega", "counts"])
        for w, s in zip(ig.omega, ig.s):
            writer.writerow([repr(float(w)), repr(float(s))])


def write_reconstruction_csv(path, rec: PhaseReconstruction) -> int:
    """Write the support samples as (omega, magnitude, phase_rad, in_support); returns row count."""
    idx = np.flatnonzero(rec.support)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["omega", "magnitude", "phase_rad", "in_support"])
        for i in idx:
            writer.writerow([repr(float(rec.omega[i])), repr(float(rec.magnitude[i])),
                             repr(float(rec.phase[i])), 1])
    return idx.size
