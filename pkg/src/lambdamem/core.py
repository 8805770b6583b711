"""Dimensionless field containers, pulse constructors and the Fourier pair.

Time is measured in units of 1/gamma (the excited-state coherence decay rate)
and angular frequency in units of gamma.  All pulse durations are intensity
FWHM values; the Rabi-frequency (amplitude) FWHM of a Gaussian control is
sqrt(2) times larger.

The Fourier convention is

    A(tau) = 1/sqrt(2 pi) * integral dw |A(w)| exp(i [w tau + phi(w)])

which fixes the sign of every spectral phase used by the interferometry code.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

LN2 = math.log(2.0)
SQRT_2PI = math.sqrt(2.0 * math.pi)
SPEED_OF_LIGHT = 299_792_458.0


class GridError(ValueError):
    """Invalid or non-uniform sampling grid."""


class WindowingError(ValueError):
    """A pulse does not fit inside the sampling window."""


class EmptySpectrumError(ValueError):
    """A spectrum carries no energy."""


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    n_samples: int

    def __post_init__(self):
        if not (math.isfinite(self.t_start) and math.isfinite(self.t_end)):
            raise GridError("grid bounds must be finite")
        if self.t_end <= self.t_start:
            raise GridError(f"t_end ({self.t_end}) must exceed t_start ({self.t_start})")
        if int(self.n_samples) != self.n_samples or self.n_samples < 16:
            raise GridError(f"n_samples must be an integer >= 16, got {self.n_samples}")
        object.__setattr__(self, "n_samples", int(self.n_samples))

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / (self.n_samples - 1)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, self.n_samples)

    @property
    def omega(self) -> np.ndarray:
        """Angular frequencies of the discrete transform, increasing order."""
        return np.fft.fftshift(2.0 * np.pi * np.fft.fftfreq(self.n_samples, self.dt))

    def covers(self, lo: float, hi: float) -> bool:
        return self.t_start <= lo and hi <= self.t_end

    @classmethod
    def from_times(cls, times, rtol: float = 1e-9) -> "TimeGrid":
        """Build a grid from explicit sample times, rejecting uneven spacing."""
        times = np.asarray(times, dtype=float)
        if times.ndim != 1 or times.size < 16:
            raise GridError("need a 1-D array of at least 16 sample times")
        steps = np.diff(times)
        span = times[-1] - times[0]
        if np.any(steps <= 0):
            raise GridError("sample times must be strictly increasing")
        if np.max(np.abs(steps - span / (times.size - 1))) > rtol * span:
            raise GridError("sample times are not uniformly spaced")
        return cls(float(times[0]), float(times[-1]), times.size)


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TemporalField:
    """Complex envelope sampled on a uniform time grid."""

    grid: TimeGrid
    samples: np.ndarray

    def __post_init__(self):
        samples = _frozen_array(self.samples, np.complex128)
        if samples.shape != (self.grid.n_samples,):
            raise GridError(
                f"expected {self.grid.n_samples} samples, got shape {samples.shape}"
            )
        if not np.all(np.isfinite(samples)):
            raise ValueError("field samples must be finite")
        object.__setattr__(self, "samples", samples)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.samples) ** 2

    def energy(self) -> float:
        return float(np.trapezoid(self.intensity, dx=self.grid.dt))

    def centroid(self) -> float:
        weights = self.intensity
        total = weights.sum()
        if total == 0:
            raise ValueError("centroid of an all-zero field is undefined")
        return float(np.dot(self.times, weights) / total)

    def intensity_fwhm(self) -> float:
        return fwhm(self.times, self.intensity)

    def scaled(self, factor: complex) -> "TemporalField":
        return TemporalField(self.grid, self.samples * factor)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Amplitude and phase on an increasing angular-frequency axis."""

    omega: np.ndarray
    amplitude: np.ndarray
    phase: np.ndarray

    def __post_init__(self):
        omega = _frozen_array(self.omega, float)
        amplitude = _frozen_array(self.amplitude, float)
        phase = _frozen_array(self.phase, float)
        if not (omega.shape == amplitude.shape == phase.shape) or omega.ndim != 1:
            raise ValueError("omega, amplitude and phase must be 1-D and equal length")
        if omega.size > 1 and np.any(np.diff(omega) <= 0):
            raise ValueError("omega must be strictly increasing")
        if np.any(amplitude < 0):
            raise ValueError("spectral amplitude must be non-negative")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "amplitude", amplitude)
        object.__setattr__(self, "phase", phase)

    @property
    def complex(self) -> np.ndarray:
        return self.amplitude * np.exp(1j * self.phase)

    def energy(self) -> float:
        return float(np.trapezoid(self.amplitude**2, self.omega))

    def intensity_fwhm(self) -> float:
        return fwhm(self.omega, self.amplitude**2)


@dataclass(frozen=True)
class ControlPulse:
    """Gaussian control field.

    ``area`` is the pulse area in units of pi, ``delay`` the offset of the
    control centre from the signal centre and ``duration`` its intensity FWHM,
    both in units of the signal duration.
    """

    area: float
    delay: float = 0.0
    duration: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.area) or self.area < 0:
            raise ValueError(f"pulse area must be >= 0, got {self.area}")
        if not math.isfinite(self.duration) or self.duration <= 0:
            raise ValueError(f"pulse duration must be > 0, got {self.duration}")
        if not math.isfinite(self.delay):
            raise ValueError("pulse delay must be finite")

    def with_area(self, area: float) -> "ControlPulse":
        return ControlPulse(area, self.delay, self.duration)

    def center(self, signal_tau_gamma: float, signal_center: float = 0.0) -> float:
        return signal_center + self.delay * signal_tau_gamma

    def intensity_fwhm(self, signal_tau_gamma: float) -> float:
        return self.duration * signal_tau_gamma

    def rabi_fwhm(self, signal_tau_gamma: float) -> float:
        return math.sqrt(2.0) * self.duration * signal_tau_gamma

    def peak_rabi(self, signal_tau_gamma: float) -> float:
        """Analytic peak Rabi frequency of the untruncated Gaussian."""
        width = self.rabi_fwhm(signal_tau_gamma)
        return self.area * math.pi * math.sqrt(4.0 * LN2 / math.pi) / width

    def profile(self, times, signal_tau_gamma: float, signal_center: float = 0.0):
        """Unit-peak Gaussian amplitude profile at ``times``."""
        width = self.rabi_fwhm(signal_tau_gamma)
        x = np.asarray(times, dtype=float) - self.center(signal_tau_gamma, signal_center)
        return np.exp(-4.0 * LN2 * x**2 / width**2)


@dataclass(frozen=True)
class MemoryParams:
    """Dimensionless memory configuration (d, tau_FWHM*gamma, Delta/gamma, gamma_B/gamma)."""

    d: float
    tau_gamma: float
    detuning: float = 0.0
    gamma_b: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.d) or self.d <= 0:
            raise ValueError(f"optical depth must be > 0, got {self.d}")
        if not math.isfinite(self.tau_gamma) or self.tau_gamma <= 0:
            raise ValueError(f"tau_gamma must be > 0, got {self.tau_gamma}")
        if not math.isfinite(self.detuning):
            raise ValueError("detuning must be finite")
        if not math.isfinite(self.gamma_b) or self.gamma_b < 0:
            raise ValueError(f"gamma_b must be >= 0, got {self.gamma_b}")

    @property
    def gamma_bar(self) -> complex:
        return complex(1.0, -self.detuning)

    def with_detuning(self, detuning: float) -> "MemoryParams":
        return MemoryParams(self.d, self.tau_gamma, detuning, self.gamma_b)


def fwhm(x, y) -> float:
    """Full width at half maximum of a single-peaked sampled curve.

    Crossings are located by linear interpolation between samples.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k = int(np.argmax(y))
    half = 0.5 * y[k]
    if half <= 0:
        raise ValueError("curve has no positive maximum")
    above = y >= half
    lo = k
    while lo > 0 and above[lo - 1]:
        lo -= 1
    hi = k
    while hi < y.size - 1 and above[hi + 1]:
        hi += 1
    if lo == 0 or hi == y.size - 1:
        raise WindowingError("curve does not fall below half maximum inside the window")
    left = x[lo - 1] + (half - y[lo - 1]) * (x[lo] - x[lo - 1]) / (y[lo] - y[lo - 1])
    right = x[hi] + (half - y[hi]) * (x[hi + 1] - x[hi]) / (y[hi + 1] - y[hi])
    return float(right - left)


def _default_center(grid: TimeGrid) -> float:
    return grid.t_start + 0.25 * (grid.t_end - grid.t_start)


def gaussian_signal(tau_gamma: float, grid: TimeGrid, center: float | None = None) -> TemporalField:
    """Transform-limited Gaussian signal with unit trapezoidal energy.

    ``center`` defaults to 25% of the way into the grid.
    """
    if tau_gamma <= 0:
        raise ValueError(f"tau_gamma must be > 0, got {tau_gamma}")
    if center is None:
        center = _default_center(grid)
    if not grid.covers(center - 4 * tau_gamma, center + 4 * tau_gamma):
        raise WindowingError(
            f"grid [{grid.t_start}, {grid.t_end}] does not span +-4 durations "
            f"around the signal centre {center}"
        )
    t = grid.times
    amp = np.exp(-2.0 * LN2 * (t - center) ** 2 / tau_gamma**2)
    amp /= math.sqrt(np.trapezoid(amp**2, dx=grid.dt))
    return TemporalField(grid, amp.astype(np.complex128))


def control_envelope(
    pulse: ControlPulse,
    signal_tau_gamma: float,
    grid: TimeGrid,
    signal_center: float = 0.0,
) -> TemporalField:
    """Real Gaussian Rabi frequency whose trapezoidal area on ``grid`` is area*pi."""
    omega = rabi_samples(pulse, signal_tau_gamma, grid, grid.times, signal_center)
    return TemporalField(grid, omega.astype(np.complex128))


def rabi_samples(pulse, signal_tau_gamma, grid, times, signal_center=0.0) -> np.ndarray:
    """Evaluate the control Rabi frequency at arbitrary ``times``.

    The normalisation always comes from the trapezoidal integral over ``grid``,
    so sub-step evaluations inside the integrator share the same pulse area.
    """
    if pulse.area == 0:
        return np.zeros(np.shape(times))
    center = pulse.center(signal_tau_gamma, signal_center)
    half_width = 2.0 * pulse.intensity_fwhm(signal_tau_gamma)
    if not grid.covers(center - half_width, center + half_width):
        raise WindowingError(
            f"control pulse centred at {center:.6g} with duration "
            f"{pulse.intensity_fwhm(signal_tau_gamma):.6g} does not fit in the grid"
        )
    norm = np.trapezoid(pulse.profile(grid.times, signal_tau_gamma, signal_center), dx=grid.dt)
    return pulse.area * math.pi * pulse.profile(times, signal_tau_gamma, signal_center) / norm


def to_spectrum(field: TemporalField) -> SpectralField:
    """Discrete Fourier transform under the module's (1/sqrt(2pi), e^{+iwt}) convention."""
    grid = field.grid
    omega = 2.0 * np.pi * np.fft.fftfreq(grid.n_samples, grid.dt)
    spec = grid.dt / SQRT_2PI * np.fft.fft(field.samples) * np.exp(-1j * omega * grid.t_start)
    spec = np.fft.fftshift(spec)
    amplitude = np.abs(spec)
    phase = np.where(amplitude > 0, np.angle(spec), 0.0)
    return SpectralField(np.fft.fftshift(omega), amplitude, phase)


def _spectrum_on_grid(spec: SpectralField, grid: TimeGrid, phase=None) -> np.ndarray:
    """Complex spectrum sampled on the grid's transform frequencies (shifted order)."""
    target = grid.omega
    phase = spec.phase if phase is None else phase
    if spec.omega.shape == target.shape and np.allclose(
        spec.omega, target, rtol=1e-9, atol=1e-12 * max(1.0, abs(target).max())
    ):
        return spec.amplitude * np.exp(1j * phase)
    amp = np.interp(target, spec.omega, spec.amplitude, left=0.0, right=0.0)
    ph = np.interp(target, spec.omega, np.unwrap(phase))
    return amp * np.exp(1j * ph)


def to_time(spec: SpectralField, grid: TimeGrid) -> TemporalField:
    """Inverse of :func:`to_spectrum`; off-grid spectra are linearly interpolated."""
    shifted = _spectrum_on_grid(spec, grid)
    return TemporalField(grid, _synthesize(shifted, grid))


def _synthesize(shifted_spec: np.ndarray, grid: TimeGrid) -> np.ndarray:
    omega = 2.0 * np.pi * np.fft.fftfreq(grid.n_samples, grid.dt)
    spec = np.fft.ifftshift(shifted_spec)
    return np.fft.ifft(spec * np.exp(1j * omega * grid.t_start)) * SQRT_2PI / grid.dt


def signal_from_spectrum(
    spec: SpectralField,
    flat_phase: bool,
    grid: TimeGrid,
    center: float | None = None,
) -> TemporalField:
    """Synthesize a unit-energy pulse from a (measured) spectrum.

    With ``flat_phase`` the spectral phase is discarded, giving the
    transform-limited pulse.  The pulse is centred at ``center`` (default 25%
    into the grid) by a linear spectral phase.
    """
    if spec.energy() <= 0 or not np.any(spec.amplitude > 0):
        raise EmptySpectrumError("spectrum has zero energy")
    if center is None:
        center = _default_center(grid)
    phase = np.zeros_like(spec.phase) if flat_phase else spec.phase
    shifted = _spectrum_on_grid(spec, grid, phase)
    shifted = shifted * np.exp(-1j * grid.omega * center)
    samples = _synthesize(shifted, grid)
    energy = np.trapezoid(np.abs(samples) ** 2, dx=grid.dt)
    if energy <= 0:
        raise EmptySpectrumError("spectrum has no support on the grid's frequency axis")
    return TemporalField(grid, samples / math.sqrt(energy))


def _parse_unit(header: str) -> str:
    h = header.lower().replace(" ", "")
    if "rad/s" in h:
        return "rad/s"
    if "ghz" in h:
        return "GHz"
    if "nm" in h:
        return "nm"
    raise ValueError(f"cannot read units from header column {header!r}; expected rad/s, GHz or nm")


def read_spectrum_csv(path, gamma: float = 1.0, remove_carrier: bool = True) -> SpectralField:
    """Read a ``frequency, amplitude[, phase]`` CSV into a :class:`SpectralField`.

    The first header column declares its unit (``rad/s``, ``GHz`` or ``nm``).
    A second column named ``intensity`` or ``counts`` is square-rooted.
    Frequencies are converted to angular frequency and divided by ``gamma``
    (rad/s); with ``remove_carrier`` the intensity-weighted centre is
    subtracted so the result describes a baseband envelope.
    """
    rows, header = read_csv_table(path)
    if len(header) not in (2, 3):
        raise ValueError(f"spectrum CSV needs 2 or 3 columns, got {len(header)}")
    unit = _parse_unit(header[0])
    data = np.asarray(rows, dtype=float)
    x, value = data[:, 0], data[:, 1]
    phase = data[:, 2] if data.shape[1] == 3 else np.zeros_like(x)
    if any(k in header[1].lower() for k in ("intensity", "counts")):
        value = np.sqrt(np.clip(value, 0.0, None))
    if unit == "GHz":
        omega = 2.0 * np.pi * 1e9 * x
    elif unit == "rad/s":
        omega = x.copy()
    else:
        wavelength = x * 1e-9
        omega = 2.0 * np.pi * SPEED_OF_LIGHT / wavelength
        # amplitude density per unit angular frequency
        value = value * wavelength / np.sqrt(2.0 * np.pi * SPEED_OF_LIGHT)
    order = np.argsort(omega)
    omega, value, phase = omega[order], np.abs(value[order]), phase[order]
    omega = omega / gamma
    if remove_carrier:
        weights = value**2
        if weights.sum() == 0:
            raise EmptySpectrumError(f"{path}: spectrum is identically zero")
        omega = omega - np.dot(omega, weights) / weights.sum()
    return SpectralField(omega, value, phase)


def read_csv_table(path) -> tuple[list[list[float]], list[str]]:
    """Read a headed numeric CSV, skipping blank lines and ``#`` comments."""
    header = None
    rows = []
    with Path(path).open(newline="") as fh:
        for record in csv.reader(fh):
            if not record or not "".join(record).strip():
                continue
            if record[0].lstrip().startswith("#"):
                continue
            if header is None:
                header = [c.strip() for c in record]
                continue
            if len(record) != len(header):
                raise ValueError(
                    f"{path}: row has {len(record)} columns, header has {len(header)}"
                )
            rows.append([float(c) for c in record])
    if header is None:
        raise ValueError(f"{path}: missing header row")
    return rows, header
