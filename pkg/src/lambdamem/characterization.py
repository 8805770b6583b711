"""Fit models and physical estimates for memory characterisation data.

Lifetimes are 1/e times for both decay models.  Doppler dephasing uses the
1-D rms thermal velocity sqrt(k_B T / m) as its velocity scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.constants import atomic_mass, k as K_B

from .core import LN2
from .fitting import (FitResult, RankDeficiencyError, levenberg_marquardt, linear_least_squares,
                      sorted_xy)

GAUSSIAN_CUTOFF_MBAR = 25.0
POOR_FIT_THRESHOLD = 0.1
_FLAT_RTOL = 1e-12
_SCALES = (1.0, 0.5, 2.0, 0.2, 5.0)


@dataclass(frozen=True)
class PhysicalConstantsConfig:
    """Species and beam constants (SI units), defaulting to barium in argon."""

    mass_atom: float = 137.327 * atomic_mass
    mass_buffer: float = 39.948 * atomic_mass
    radius_atom: float = 268e-12
    radius_buffer: float = 188e-12
    lambda_signal: float = 553.5e-9
    lambda_control: float = 1500e-9
    gamma_nat: float = 120e6

    def __post_init__(self):
        for name, value in vars(self).items():
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be strictly positive, got {value}")


@dataclass(frozen=True, eq=False)
class DecayScan:
    storage_time: np.ndarray  # ns
    efficiency: np.ndarray  # percent
    pressure: float  # mbar
    temperature: float  # deg C

    def __post_init__(self):
        t = np.asarray(self.storage_time, dtype=float)
        e = np.asarray(self.efficiency, dtype=float)
        if t.shape != e.shape or t.ndim != 1:
            raise ValueError("storage_time and efficiency must be 1-D and equal length")
        if np.any(t < 0) or np.any(np.diff(t) <= 0):
            raise ValueError("storage times must be non-negative and strictly increasing")
        if np.any(e < 0):
            raise ValueError("efficiencies must be non-negative")
        object.__setattr__(self, "storage_time", t)
        object.__setattr__(self, "efficiency", e)


def _is_flat(y) -> bool:
    return np.ptp(y) <= _FLAT_RTOL * max(np.max(np.abs(y)), np.finfo(float).tiny)


def _exp_decay(t, eta0, T):
    return eta0 * np.exp(-t / T)


def _gauss_decay(t, eta0, T):
    return eta0 * np.exp(-((t / T) ** 2))


def _initial_lifetime(t, y, power):
    pos = y > 0
    span = max(t[-1] - t[0], np.finfo(float).eps)
    if pos.sum() >= 2 and np.ptp(t[pos]) > 0:
        slope = np.polyfit(t[pos] ** power, np.log(y[pos]), 1)[0]
        if slope < 0:
            return (-1.0 / slope) ** (1.0 / power)
    return span


def fit_lifetime(scan: DecayScan, model: str = "auto") -> FitResult:
    """Fit eta0 exp(-t/T) or eta0 exp(-(t/T)^2); T is the 1/e time in ns.

    ``auto`` picks the Gaussian model below 25 mbar and the exponential model
    otherwise.  Constant data returns T = inf with an ``infinite_lifetime`` flag.
    """
    if model == "auto":
        model = "gaussian" if scan.pressure < GAUSSIAN_CUTOFF_MBAR else "exponential"
    if model not in ("exponential", "gaussian"):
        raise ValueError(f"unknown lifetime model {model!r}")
    t, y = sorted_xy(scan.storage_time, scan.efficiency, 4)
    name = f"lifetime_{model}"
    if _is_flat(y):
        return FitResult(name, {"eta0": float(y[0]), "T": math.inf},
                         {"eta0": 0.0, "T": math.nan}, 0.0, True, ("infinite_lifetime",))
    power = 1 if model == "exponential" else 2
    func = _exp_decay if model == "exponential" else _gauss_decay
    T0 = _initial_lifetime(t, y, power)
    starts = [(float(np.max(y)), T0 * s) for s in _SCALES]
    result = levenberg_marquardt(name, ("eta0", "T"), func, t, y, starts)
    params = dict(result.params)
    params["T"] = abs(params["T"])
    return FitResult(result.model, params, result.std_errs, result.residual_norm, result.converged)


def _inverse(p, a):
    return a / p


def _inverse_offset(p, a, b):
    return a / (p + b)


def fit_lifetime_vs_pressure(pressures, lifetimes, offset: bool = False,
                             poor_fit_threshold: float = POOR_FIT_THRESHOLD) -> FitResult:
    """Fit T(P) = a/P, or a/(P + b) with ``offset``.

    A relative residual ||r||/||T|| above ``poor_fit_threshold`` adds a
    ``poor_fit`` flag (e.g. a low-pressure plateau the model cannot follow).
    """
    p, y = sorted_xy(pressures, lifetimes, 3)
    if np.any(p <= 0):
        raise ValueError("pressures must be positive")
    distinct = np.unique(p).size
    if distinct < (3 if offset else 2):
        raise RankDeficiencyError(f"need >= {3 if offset else 2} distinct pressures, got {distinct}")
    a0 = float(np.dot(y, 1.0 / p) / np.dot(1.0 / p, 1.0 / p))
    if offset:
        starts = [(a0 * s, b) for s in (1.0, 2.0, 0.5) for b in (0.0, float(np.min(p)))][:5]
        result = levenberg_marquardt("inverse_offset", ("a", "b"), _inverse_offset, p, y, starts)
    else:
        starts = [(a0 * s,) for s in _SCALES]
        result = levenberg_marquardt("inverse", ("a",), _inverse, p, y, starts)
    rel = result.residual_norm / max(float(np.linalg.norm(y)), np.finfo(float).tiny)
    flags = ("poor_fit",) if rel > poor_fit_threshold else ()
    return FitResult(result.model, result.params, result.std_errs, result.residual_norm,
                     result.converged, flags, {"relative_residual": rel})


def doppler_lifetime(temp: float, mass: float, lambda_s: float, lambda_c: float) -> float:
    """1/e time of the Gaussian Doppler dephasing exp(-(dk u t)^2 / 2), in seconds.

    dk = 2 pi |1/lambda_s - 1/lambda_c| and u = sqrt(k_B T / m).  Equal
    wavelengths leave no phase grating and give ``inf``.
    """
    for name, v in (("temp", temp), ("mass", mass), ("lambda_s", lambda_s), ("lambda_c", lambda_c)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")
    dk = 2.0 * math.pi * abs(1.0 / lambda_s - 1.0 / lambda_c)
    if dk == 0:
        return math.inf
    u = math.sqrt(K_B * temp / mass)
    return math.sqrt(2.0) / (dk * u)


def fit_linewidth_vs_pressure(pressures, linewidths) -> FitResult:
    """Straight line Gamma = gamma0 + slope * P (units as supplied)."""
    p, g = sorted_xy(pressures, linewidths, 2)
    return linear_least_squares("linewidth_linear", ("gamma0", "slope"),
                                np.column_stack([np.ones_like(p), p]), g)


class CollisionKinetics(NamedTuple):
    mean_free_path: float  # m
    collision_time: float  # s
    diffusion_coefficient: float  # m^2/s


def collision_kinetics(pressure: float, temp: float, radii, masses) -> CollisionKinetics:
    """Hard-sphere kinetic-theory estimates for an atom in a buffer gas.

    ``pressure`` in Pa, ``temp`` in K, ``radii`` (m) and ``masses`` (kg) for
    the (atom, buffer) pair.  The collision diameter is the sum of radii.
    """
    r1, r2 = radii
    m1, m2 = masses
    for name, v in (("pressure", pressure), ("temp", temp), ("radius", r1), ("radius", r2),
                    ("mass", m1), ("mass", m2)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")
    diameter = r1 + r2
    mu = m1 * m2 / (m1 + m2)
    kt = K_B * temp
    cross = math.pi * diameter**2
    mfp = kt / (math.sqrt(2.0) * cross * pressure)
    v_rel = math.sqrt(8.0 * kt / (math.pi * mu))
    density = pressure / kt
    diffusion = 3.0 / 16.0 * math.sqrt(2.0 * math.pi * kt / mu) / (density * cross)
    return CollisionKinetics(mfp, mfp / v_rel, diffusion)


def snr_to_fidelity(snr: float) -> float:
    """F = 1 - 1/(SNR + 1)."""
    if not snr >= 0:
        raise ValueError(f"snr must be >= 0, got {snr}")
    if math.isinf(snr):
        return 1.0
    return 1.0 - 1.0 / (snr + 1.0)


def fit_snr_linear(photon_numbers, snr) -> FitResult:
    """Line through (mean photon number, SNR); ``extra['snr_at_1']`` is its value at n = 1."""
    n, s = sorted_xy(photon_numbers, snr, 2)
    if np.any(n < 0) or np.any(s < 0):
        raise ValueError("photon numbers and SNR must be non-negative")
    result = linear_least_squares("snr_linear", ("intercept", "slope"),
                                  np.column_stack([np.ones_like(n), n]), s)
    at_one = result.params["intercept"] + result.params["slope"]
    return FitResult(result.model, result.params, result.std_errs, result.residual_norm,
                     result.converged, extra={"snr_at_1": at_one})


class FiguresOfMerit(NamedTuple):
    tbp: float
    trp: float
    cold_od: float


def figures_of_merit(T: float, bandwidth: float, clock_rate: float, d: float,
                     linewidth: float, linewidth_nat: float) -> FiguresOfMerit:
    """Time-bandwidth product, time-clock-rate product and cold optical depth."""
    for name, v in (("T", T), ("bandwidth", bandwidth), ("clock_rate", clock_rate), ("d", d),
                    ("linewidth", linewidth), ("linewidth_nat", linewidth_nat)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")
    return FiguresOfMerit(T * bandwidth, T * clock_rate, d * linewidth / linewidth_nat)


def _gaussian(x, center, fwhm, amplitude):
    return amplitude * np.exp(-4.0 * LN2 * (x - center) ** 2 / fwhm**2)


def fit_frequency_response(detunings, efficiencies) -> FitResult:
    """Gaussian fit returning center, FWHM and amplitude.

    Flat data has no defined peak: the result carries a ``zero_amplitude``
    flag and ``converged=False``.
    """
    x, y = sorted_xy(detunings, efficiencies, 4)
    if _is_flat(y):
        nan = math.nan
        return FitResult("gaussian", {"center": nan, "fwhm": nan, "amplitude": 0.0},
                         {"center": nan, "fwhm": nan, "amplitude": nan}, 0.0, False,
                         ("zero_amplitude",))
    k = int(np.argmax(y))
    w = np.clip(y, 0.0, None)
    mean = float(np.dot(x, w) / w.sum()) if w.sum() > 0 else float(x[k])
    sigma = math.sqrt(max(float(np.dot((x - mean) ** 2, w) / w.sum()), 0.0)) if w.sum() > 0 else 0.0
    width0 = 2.0 * math.sqrt(2.0 * LN2) * sigma or float(np.ptp(x)) / 4
    starts = [
        (float(x[k]), width0, float(y[k])),
        (mean, width0, float(y[k])),
        (float(x[k]), 0.5 * width0, float(y[k])),
        (float(x[k]), 2.0 * width0, float(y[k])),
        (mean, 0.25 * float(np.ptp(x)), float(y[k])),
    ]
    result = levenberg_marquardt("gaussian", ("center", "fwhm", "amplitude"), _gaussian, x, y, starts)
    params = dict(result.params)
    params["fwhm"] = abs(params["fwhm"])
    flags = ("zero_amplitude",) if params["amplitude"] == 0 else ()
    return FitResult(result.model, params, result.std_errs, result.residual_norm,
                     result.converged, flags)
