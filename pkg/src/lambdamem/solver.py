"""Maxwell-Bloch integration for storage, retrieval and transmission.

Solves, in the comoving frame and normalised units,

    dA/dz   = -sqrt(d) P
    dP/dtau = -gbar P + sqrt(d) A - i (Omega/2) B,     gbar = 1 - i Delta/gamma
    dB/dtau = -gamma_B B - i (Omega*/2) P

for z in [0, 1] with A(0, tau) equal to the input signal and P = B = 0 at the
first time sample.  Time stepping is classical RK4 on (P, B); at every stage
A(z) is re-marched from the boundary with a fourth-order cumulative
quadrature (``z_order=2`` selects plain trapezoidal marching).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_trapezoid, simpson

from . import _kernel
from .core import ControlPulse, MemoryParams, TemporalField, TimeGrid, gaussian_signal, rabi_samples

log = logging.getLogger(__name__)

DEFAULT_NZ = 201
DEFAULT_GAP = 5.0
DEFAULT_TAIL = 5.0
PULSE_HALF_EXTENT = 2.0
MARGIN_DURATIONS = 4.0
DIVERGENCE_FACTOR = 10.0


class GridMarginError(ValueError):
    """The time window does not hold the pulses with the required margin."""


class IntegrationError(RuntimeError):
    """The integration produced non-finite values."""

    def __init__(self, message, step, z_index, tau):
        super().__init__(message)
        self.step = step
        self.z_index = z_index
        self.tau = tau


@dataclass(frozen=True)
class GridConfig:
    n_z: int
    t_span: TimeGrid
    z_order: int = 4

    def __post_init__(self):
        if self.n_z < 32:
            raise ValueError(f"n_z must be >= 32, got {self.n_z}")
        if self.t_span.n_samples < 512:
            raise ValueError(f"n_t must be >= 512, got {self.t_span.n_samples}")
        if self.z_order not in (2, 4):
            raise ValueError("z_order must be 2 (trapezoid) or 4")

    @property
    def n_t(self) -> int:
        return self.t_span.n_samples

    @property
    def z(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_z)

    def refined(self, factor: int = 2) -> "GridConfig":
        """Same window with ``factor`` times as many intervals in z and tau."""
        span = self.t_span
        fine = TimeGrid(span.t_start, span.t_end, factor * (span.n_samples - 1) + 1)
        return GridConfig(factor * (self.n_z - 1) + 1, fine, self.z_order)


@dataclass(frozen=True)
class EnergyLedger:
    e_in: float
    e_out: float
    e_pol_final: float
    e_spin_final: float
    e_pol_decay: float
    e_spin_decay: float

    @property
    def closure(self) -> float:
        accounted = (self.e_out + self.e_pol_final + self.e_spin_final
                     + self.e_pol_decay + self.e_spin_decay)
        return abs(self.e_in - accounted) / self.e_in

    def to_dict(self) -> dict:
        out = asdict(self)
        out["closure"] = self.closure
        return out


@dataclass(frozen=True, eq=False)
class AtomicState:
    """Polarisation and spin wave on a (tau, z) grid; rows are time samples."""

    times: np.ndarray
    z: np.ndarray
    P: np.ndarray
    B: np.ndarray


@dataclass(frozen=True, eq=False)
class FieldDump:
    times: np.ndarray
    z: np.ndarray
    A: np.ndarray
    state: AtomicState


@dataclass(frozen=True, eq=False)
class SolveResult:
    memory: MemoryParams
    transmitted: TemporalField
    z: np.ndarray
    spin_wave: np.ndarray
    stored_spin_wave: np.ndarray
    eta_store: float
    eta_ret: float
    eta_tot: float
    ledger: EnergyLedger
    tau_mid: float
    storage_window: tuple
    retrieval_window: tuple | None
    pol_energy: np.ndarray | None = None  # z-integral of |P|^2 at every time step
    spin_energy: np.ndarray | None = None  # z-integral of |B|^2 at every time step
    dump: FieldDump | None = None

    def to_dict(self) -> dict:
        return {
            "eta_store": self.eta_store,
            "eta_ret": self.eta_ret,
            "eta_tot": self.eta_tot,
            "ledger": self.ledger.to_dict(),
        }


def pulse_window(memory: MemoryParams, pulse: ControlPulse, signal_center=0.0, offset=0.0):
    center = pulse.center(memory.tau_gamma, signal_center) + offset
    half = PULSE_HALF_EXTENT * pulse.intensity_fwhm(memory.tau_gamma)
    return center - half, center + half


def _storage_end(memory, pulse, signal_center):
    signal_end = signal_center + PULSE_HALF_EXTENT * memory.tau_gamma
    return max(signal_end, pulse_window(memory, pulse, signal_center)[1])


def default_retrieval_delay(memory: MemoryParams, control: ControlPulse, gap: float = DEFAULT_GAP) -> float:
    """Delay placing the retrieval pulse ``gap`` (units of 1/gamma) after storage ends.

    The gap lets the optical polarisation decay before read-out, so the
    retrieved energy is not contaminated by the transmitted tail.
    """
    tau = memory.tau_gamma
    center = control.center(tau)
    start = _storage_end(memory, control, 0.0) + gap
    return start + PULSE_HALF_EXTENT * control.intensity_fwhm(tau) - center


def default_grid(
    memory: MemoryParams,
    storage_pulse: ControlPulse,
    retrieval_delay: float = 0.0,
    retrieval_pulse: ControlPulse | None = None,
    n_z: int = DEFAULT_NZ,
    tail: float = DEFAULT_TAIL,
    points_per_duration: int = 256,
    max_step_phase: float = 0.2,
    max_detuning: float | None = None,
    min_samples: int = 4096,
    signal_center: float = 0.0,
) -> GridConfig:
    """Window and step sized for a signal centred at ``signal_center``.

    The window spans 8 signal durations before and after the signal, 6
    control durations around every control pulse and ``tail`` (1/gamma) after
    the last pulse.  The step resolves the shortest pulse with
    ``points_per_duration`` samples and keeps dt times the fastest rate
    (|gbar|, peak Omega/2 or d) below ``max_step_phase``.
    """
    tau = memory.tau_gamma
    pulses = [(storage_pulse, 0.0)]
    if retrieval_delay and retrieval_delay > 0:
        pulses.append((retrieval_pulse or storage_pulse, retrieval_delay))
    lo = signal_center - 8 * tau
    hi = signal_center + 8 * tau
    shortest = tau
    fastest = max(abs(complex(1.0, -(max_detuning if max_detuning is not None else memory.detuning))),
                  memory.d)
    for pulse, offset in pulses:
        c = pulse.center(tau, signal_center) + offset
        cd = pulse.intensity_fwhm(tau)
        lo = min(lo, c - 6 * cd)
        hi = max(hi, c + 6 * cd, c + 8 * tau)
        shortest = min(shortest, cd)
        fastest = max(fastest, 0.5 * pulse.peak_rabi(tau))
    hi += tail
    dt = min(shortest / points_per_duration, max_step_phase / fastest)
    n_t = max(min_samples, int(math.ceil((hi - lo) / dt)) + 1)
    return GridConfig(n_z, TimeGrid(lo, hi, n_t))


def _half_step_signal(field: TemporalField) -> np.ndarray:
    """Signal at whole and half steps via band-limited (Fourier) interpolation."""
    x = field.samples
    n = x.size
    omega = 2.0 * np.pi * np.fft.fftfreq(n)
    shift = np.exp(0.5j * omega)
    if n % 2 == 0:
        shift[n // 2] = math.cos(0.5 * omega[n // 2])
    mid = np.fft.ifft(np.fft.fft(x) * shift)[:-1]
    out = np.empty(2 * n - 1, np.complex128)
    out[0::2] = x
    out[1::2] = mid
    return out


def _z_weights(n_z: int) -> np.ndarray:
    return simpson(np.eye(n_z), dx=1.0 / (n_z - 1), axis=1)


def _check_margins(memory, grid: TimeGrid, signal_center, pulses):
    tau = memory.tau_gamma
    need = [(signal_center - MARGIN_DURATIONS * tau, signal_center + MARGIN_DURATIONS * tau, "signal")]
    for name, pulse, offset in pulses:
        c = pulse.center(tau, signal_center) + offset
        m = MARGIN_DURATIONS * pulse.intensity_fwhm(tau)
        need.append((c - m, c + m, name))
    for lo, hi, name in need:
        if not grid.covers(lo, hi):
            raise GridMarginError(
                f"{name} needs the window to cover [{lo:.6g}, {hi:.6g}] "
                f"but the grid spans [{grid.t_start:.6g}, {grid.t_end:.6g}]"
            )


def solve(
    memory: MemoryParams,
    signal: TemporalField,
    storage_pulse: ControlPulse,
    retrieval_pulse: ControlPulse | None = None,
    retrieval_delay: float = 0.0,
    grid: GridConfig | None = None,
    signal_center: float | None = None,
    dump_stride: int = 0,
) -> SolveResult:
    """Integrate the memory for one input signal.

    A retrieval pulse (``retrieval_pulse`` or a copy of the storage pulse)
    is applied when ``retrieval_delay > 0``; its centre sits
    ``retrieval_delay`` after the storage pulse centre.  The storage
    efficiency is read from B(z) midway between the end of storage and the
    start of retrieval (the final sample for storage-only runs); the total
    efficiency counts output energy after that instant.
    """
    if grid is None:
        grid = GridConfig(DEFAULT_NZ, signal.grid)
    if signal.grid != grid.t_span:
        raise ValueError("signal must be sampled on grid.t_span")
    if retrieval_delay < 0:
        raise ValueError(f"retrieval_delay must be >= 0, got {retrieval_delay}")
    e_in = signal.energy()
    if not e_in > 0:
        raise ValueError("signal carries no energy")
    tspan = grid.t_span
    tau = memory.tau_gamma
    if signal_center is None:
        signal_center = signal.centroid()

    retrieve = retrieval_delay > 0
    pulses = [("storage pulse", storage_pulse, 0.0)]
    if retrieve:
        retrieval_pulse = retrieval_pulse or storage_pulse
        pulses.append(("retrieval pulse", retrieval_pulse, retrieval_delay))
    _check_margins(memory, tspan, signal_center, pulses)

    storage_end = _storage_end(memory, storage_pulse, signal_center)
    storage_window = (min(signal_center - PULSE_HALF_EXTENT * tau,
                          pulse_window(memory, storage_pulse, signal_center)[0]), storage_end)
    retrieval_window = None
    if retrieve:
        retrieval_window = pulse_window(memory, retrieval_pulse, signal_center, retrieval_delay)
        if retrieval_window[0] <= storage_end:
            raise GridMarginError(
                f"retrieval pulse starts at {retrieval_window[0]:.6g}, before storage "
                f"ends at {storage_end:.6g}; increase retrieval_delay"
            )
        tau_mid = 0.5 * (storage_end + retrieval_window[0])
    else:
        tau_mid = tspan.t_end

    times = tspan.times
    half_times = np.linspace(tspan.t_start, tspan.t_end, 2 * tspan.n_samples - 1)
    omega = np.zeros(half_times.size)
    for _, pulse, offset in pulses:
        omega += rabi_samples(pulse, tau, tspan, half_times, signal_center + offset)
    a0 = _half_step_signal(signal)

    i_snap = min(int(np.searchsorted(times, tau_mid)), tspan.n_samples - 1)
    wz = _z_weights(grid.n_z)
    (a_out, p_norm, b_norm, P_snap, B_snap, P_end, B_end,
     A_dump, P_dump, B_dump, status) = _kernel.integrate(
        a0, omega, tspan.dt, grid.n_z, memory.d, memory.gamma_bar, memory.gamma_b,
        grid.z_order, wz, i_snap, int(dump_stride), DIVERGENCE_FACTOR * e_in)

    if status[0] != _kernel.OK:
        step, zi = int(status[1]), int(status[2])
        what = "non-finite field" if status[0] == _kernel.NON_FINITE else "diverging atomic energy"
        raise IntegrationError(
            f"{what} at time step {step} (tau={times[step]:.6g}), z index {zi}; "
            f"dt={tspan.dt:.3g}, n_z={grid.n_z}",
            step, zi, float(times[step]))

    dt = tspan.dt
    out_intensity = np.abs(a_out) ** 2
    e_out = float(np.trapezoid(out_intensity, dx=dt))
    ledger = EnergyLedger(
        e_in=e_in,
        e_out=e_out,
        e_pol_final=float(p_norm[-1]),
        e_spin_final=float(b_norm[-1]),
        e_pol_decay=float(2.0 * np.trapezoid(p_norm, dx=dt)),
        e_spin_decay=float(2.0 * memory.gamma_b * np.trapezoid(b_norm, dx=dt)),
    )
    if ledger.closure > 1e-3:
        log.warning("energy ledger closes only to %.2e (d=%g, n_z=%d, n_t=%d)",
                    ledger.closure, memory.d, grid.n_z, grid.n_t)

    eta_store = float(b_norm[i_snap] / e_in)
    if retrieve:
        cumulative = cumulative_trapezoid(out_intensity, times, initial=0.0)
        eta_tot = float((cumulative[-1] - np.interp(tau_mid, times, cumulative)) / e_in)
    else:
        eta_tot = 0.0
    eta_ret = eta_tot / eta_store if eta_store > 0 else 0.0

    dump = None
    if dump_stride > 0:
        dump_times = times[::dump_stride]
        z = grid.z
        dump = FieldDump(dump_times, z, A_dump, AtomicState(dump_times, z, P_dump, B_dump))

    return SolveResult(
        memory=memory,
        transmitted=TemporalField(tspan, a_out),
        z=grid.z,
        spin_wave=B_end,
        stored_spin_wave=B_snap,
        eta_store=eta_store,
        eta_ret=eta_ret,
        eta_tot=eta_tot,
        ledger=ledger,
        tau_mid=float(tau_mid),
        storage_window=storage_window,
        retrieval_window=retrieval_window,
        pol_energy=p_norm,
        spin_energy=b_norm,
        dump=dump,
    )


def run_memory(
    memory: MemoryParams,
    control: ControlPulse,
    retrieve: bool = True,
    retrieval_delay: float | None = None,
    grid: GridConfig | None = None,
    n_z: int = DEFAULT_NZ,
    dump_stride: int = 0,
) -> SolveResult:
    """Solve for a Gaussian signal centred at tau = 0 on the default grid."""
    if retrieve and retrieval_delay is None:
        retrieval_delay = default_retrieval_delay(memory, control)
    if not retrieve:
        retrieval_delay = 0.0
    if grid is None:
        grid = default_grid(memory, control, retrieval_delay, n_z=n_z)
    signal = gaussian_signal(memory.tau_gamma, grid.t_span, center=0.0)
    return solve(memory, signal, control, retrieval_delay=retrieval_delay, grid=grid,
                 signal_center=0.0, dump_stride=dump_stride)


def transmission_spectrum_linear(memory: MemoryParams, omega) -> np.ndarray:
    """Linear-response transfer function exp(-d / (1 + i (omega - Delta/gamma)))."""
    omega = np.asarray(omega, dtype=float)
    return np.exp(-memory.d / (1.0 + 1j * (omega - memory.detuning)))


def photon_counting_efficiency(result: SolveResult, storage_window_end: float):
    """Storage and total efficiency inferred from output photon counts alone.

    Returns ``(1 - E_before / E_in, E_after / E_in)`` where the output energy
    is split at ``storage_window_end``.
    """
    field = result.transmitted
    times = field.times
    if not (times[0] <= storage_window_end <= times[-1]):
        raise ValueError(f"window end {storage_window_end} lies outside the grid")
    if storage_window_end < result.storage_window[1]:
        raise ValueError("window end falls inside the storage operation")
    if result.retrieval_window is not None and storage_window_end > result.retrieval_window[0]:
        raise ValueError("window end falls after the retrieval pulse begins")
    cumulative = cumulative_trapezoid(field.intensity, times, initial=0.0)
    before = float(np.interp(storage_window_end, times, cumulative))
    e_in = result.ledger.e_in
    return 1.0 - before / e_in, float(cumulative[-1] - before) / e_in


def write_field_dump(result: SolveResult, path) -> None:
    """CSV of (z, tau, Re A, Im A, Re P, Im P, Re B, Im B) for a dumped solve."""
    if result.dump is None:
        raise ValueError("result carries no field dump; solve with dump_stride > 0")
    dump = result.dump
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["z", "tau", "re_A", "im_A", "re_P", "im_P", "re_B", "im_B"])
        for i, t in enumerate(dump.times):
            for j, z in enumerate(dump.z):
                a, p, b = dump.A[i, j], dump.state.P[i, j], dump.state.B[i, j]
                writer.writerow([repr(float(z)), repr(float(t)), repr(a.real), repr(a.imag),
                                 repr(p.real), repr(p.imag), repr(b.real), repr(b.imag)])
