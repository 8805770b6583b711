import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from lambdamem.core import (LN2, ControlPulse, EmptySpectrumError, GridError, MemoryParams, SpectralField,
                            TemporalField, TimeGrid, WindowingError, control_envelope, fwhm,
                            gaussian_signal, read_spectrum_csv, signal_from_spectrum, to_spectrum,
                            to_time)

DATA = __import__("pathlib").Path(__file__).resolve().parents[1] / "src" / "lambdamem" / "data"


def test_time_grid_validation():
    with pytest.raises(GridError):
        TimeGrid(1.0, 0.0, 100)
    with pytest.raises(GridError):
        TimeGrid(0.0, 1.0, 15)
    g = TimeGrid(-1.0, 1.0, 2001)
    assert g.dt == pytest.approx(1e-3)
    assert np.allclose(np.diff(g.times), g.dt)


def test_from_times_rejects_uneven_spacing():
    t = np.linspace(0, 1, 64)
    assert TimeGrid.from_times(t).n_samples == 64
    t[10] += 1e-3
    with pytest.raises(GridError):
        TimeGrid.from_times(t)


def test_gaussian_signal_normalised_and_fwhm():
    g = TimeGrid(-1.0, 1.0, 2001)
    s = gaussian_signal(0.1, g, center=0.0)
    assert s.energy() == pytest.approx(1.0, abs=1e-9)
    assert abs(s.intensity_fwhm() - 0.1) <= g.dt
    amp = lambda t: np.interp(t, g.times, np.abs(s.samples))  # noqa: E731
    assert (amp(0.05) / amp(0.0)) ** 2 == pytest.approx(0.5, abs=1e-6)


def test_gaussian_signal_default_center_and_window():
    g = TimeGrid(0.0, 4.0, 4001)
    s = gaussian_signal(0.1, g)
    assert s.centroid() == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(WindowingError):
        gaussian_signal(0.1, TimeGrid(-0.3, 0.3, 601), center=0.0)
    with pytest.raises(ValueError):
        gaussian_signal(0.0, g)


def test_temporal_field_is_immutable():
    g = TimeGrid(0, 1, 16)
    f = TemporalField(g, np.ones(16))
    with pytest.raises(ValueError):
        f.samples[0] = 2
    with pytest.raises(GridError):
        TemporalField(g, np.ones(15))


def test_control_envelope_area_and_shape():
    g = TimeGrid(-1.0, 1.0, 4001)
    tau = 0.1
    pulse = ControlPulse(1.0789, 0.76176, 0.52137)
    om = control_envelope(pulse, tau, g).samples.real
    assert np.trapezoid(om, dx=g.dt) == pytest.approx(1.0789 * math.pi, abs=1e-6)
    assert np.all(om >= 0)
    assert fwhm(g.times, om) == pytest.approx(math.sqrt(2) * 0.52137 * tau, rel=1e-3)
    assert g.times[np.argmax(om)] == pytest.approx(0.76176 * tau, abs=g.dt)
    # intensity FWHM is the stated duration
    assert fwhm(g.times, om**2) == pytest.approx(0.52137 * tau, rel=1e-3)


def test_control_envelope_zero_area():
    g = TimeGrid(-1.0, 1.0, 512)
    assert np.all(control_envelope(ControlPulse(0.0), 0.1, g).samples == 0)


def test_peak_rabi_matches_quadrature():
    pulse = ControlPulse(2.5, 0.0, 0.8)
    tau = 0.3
    width = math.sqrt(2) * 0.8 * tau
    integral = quad(lambda t: math.exp(-4 * LN2 * t**2 / width**2), -np.inf, np.inf)[0]
    assert pulse.peak_rabi(tau) == pytest.approx(2.5 * math.pi / integral, rel=1e-6)


def test_control_area_is_linear():
    g = TimeGrid(-1.0, 1.0, 1024)
    a = np.trapezoid(control_envelope(ControlPulse(1.3), 0.1, g).samples.real, dx=g.dt)
    b = np.trapezoid(control_envelope(ControlPulse(2.6), 0.1, g).samples.real, dx=g.dt)
    assert b == pytest.approx(2 * a, rel=1e-14)


def test_control_pulse_and_memory_validation():
    with pytest.raises(ValueError):
        ControlPulse(-1.0)
    with pytest.raises(ValueError):
        ControlPulse(1.0, duration=0.0)
    with pytest.raises(ValueError):
        MemoryParams(0.0, 0.1)
    with pytest.raises(ValueError):
        MemoryParams(1.0, 0.1, gamma_b=-1)
    assert MemoryParams(5, 0.1, 3.0).gamma_bar == complex(1, -3)


def test_control_out_of_window():
    with pytest.raises(WindowingError):
        control_envelope(ControlPulse(1.0, 9.5), 0.1, TimeGrid(-1.0, 1.0, 512))


def test_round_trip_transform():
    g = TimeGrid(-3.0, 5.0, 1024)
    rng = np.random.default_rng(0)
    x = TemporalField(g, rng.standard_normal(1024) + 1j * rng.standard_normal(1024))
    y = to_time(to_spectrum(x), g)
    assert np.linalg.norm(y.samples - x.samples) / np.linalg.norm(x.samples) < 1e-10


def test_gaussian_time_bandwidth():
    g = TimeGrid(-20.0, 20.0, 8192)
    s = gaussian_signal(0.7, g, center=1.3)
    spec = to_spectrum(s)
    assert spec.intensity_fwhm() == pytest.approx(4 * LN2 / 0.7, rel=1e-2)


def test_fourier_sign_convention():
    # a pulse carrying exp(+i w0 t) must sit at +w0
    g = TimeGrid(-20.0, 20.0, 4096)
    s = gaussian_signal(1.0, g, center=0.0)
    shifted = TemporalField(g, s.samples * np.exp(2.5j * g.times))
    spec = to_spectrum(shifted)
    assert spec.omega[np.argmax(spec.amplitude)] == pytest.approx(2.5, abs=2 * np.pi / 40)


def test_delta_has_flat_spectrum():
    g = TimeGrid(0.0, 1.0, 256)
    x = np.zeros(256)
    x[100] = 1.0
    amp = to_spectrum(TemporalField(g, x)).amplitude
    assert np.ptp(amp) < 1e-12 * amp.max()


@settings(max_examples=30, deadline=None)
@given(st.integers(16, 600), st.floats(0.01, 10), st.integers(0, 2**31 - 1))
def test_parseval(n, span, seed):
    rng = np.random.default_rng(seed)
    g = TimeGrid(-span / 3, span, n)
    x = TemporalField(g, rng.standard_normal(n) + 1j * rng.standard_normal(n))
    e_t = float(np.sum(x.intensity) * g.dt)
    spec = to_spectrum(x)
    e_w = float(np.sum(spec.amplitude**2) * (spec.omega[1] - spec.omega[0]))
    assert e_w == pytest.approx(e_t, rel=1e-8)


def test_spectral_field_invariants():
    with pytest.raises(ValueError):
        SpectralField([0, 0, 1], [1, 1, 1], [0, 0, 0])
    with pytest.raises(ValueError):
        SpectralField([0, 1, 2], [1, -1, 1], [0, 0, 0])


def _gauss_spectrum(g, phase):
    w = g.omega
    return SpectralField(w, np.exp(-(w**2) / 8), phase(w))


def test_signal_from_spectrum_flat_phase():
    g = TimeGrid(-20.0, 20.0, 2048)
    zero = signal_from_spectrum(_gauss_spectrum(g, np.zeros_like), True, g, center=0.0)
    chirp = signal_from_spectrum(_gauss_spectrum(g, lambda w: 0.5 * w**2), True, g, center=0.0)
    assert np.array_equal(zero.samples, chirp.samples)
    assert zero.energy() == pytest.approx(1.0, rel=1e-12)
    kept = signal_from_spectrum(_gauss_spectrum(g, lambda w: 0.5 * w**2), False, g, center=0.0)
    # the transform-limited pulse is the shortest
    assert zero.intensity_fwhm() < kept.intensity_fwhm()


def test_signal_from_spectrum_rejects_empty():
    g = TimeGrid(-1, 1, 64)
    with pytest.raises(EmptySpectrumError):
        signal_from_spectrum(SpectralField(g.omega, np.zeros(64), np.zeros(64)), True, g)


def test_bundled_spectrum_gives_transform_limited_duration():
    spec = read_spectrum_csv(DATA / "signal_spectrum.csv")
    assert spec.intensity_fwhm() / (2 * np.pi) == pytest.approx(880e9, rel=1e-3)
    g = TimeGrid(-5e-12, 5e-12, 4096)
    pulse = signal_from_spectrum(spec, True, g, center=0.0)
    expected = 4 * LN2 / (2 * np.pi * 880e9)
    assert pulse.intensity_fwhm() == pytest.approx(expected, rel=1e-2)


def test_read_spectrum_units(tmp_path):
    lam = np.linspace(540, 570, 301)
    intensity = np.exp(-((lam - 553.5) ** 2) / 4)
    path = tmp_path / "s.csv"
    path.write_text("wavelength_nm,intensity\n" + "".join(f"{a},{b}\n" for a, b in zip(lam, intensity)))
    spec = read_spectrum_csv(path)
    assert np.all(np.diff(spec.omega) > 0)
    assert abs(np.dot(spec.omega, spec.amplitude**2)) < 1e-3 * np.ptp(spec.omega) * np.sum(spec.amplitude**2)
    bad = tmp_path / "bad.csv"
    bad.write_text("freq_parsecs,amplitude\n1,2\n")
    with pytest.raises(ValueError, match="units"):
        read_spectrum_csv(bad)


def test_constructors_are_deterministic():
    g = TimeGrid(-1, 1, 777)
    a = gaussian_signal(0.13, g, center=0.1).samples
    b = gaussian_signal(0.13, g, center=0.1).samples
    assert a.tobytes() == b.tobytes()
