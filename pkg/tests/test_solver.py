import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lambdamem.core import ControlPulse, MemoryParams, TimeGrid, gaussian_signal
from lambdamem.protocols import eta_opt, optimal_storage_efficiency, preset
from lambdamem.solver import (GridConfig, GridMarginError, IntegrationError, default_grid,
                              default_retrieval_delay, photon_counting_efficiency, run_memory, solve,
                              transmission_spectrum_linear, write_field_dump)

from oracles import linear_transmission

ORACLE_GRID = GridConfig(201, TimeGrid(-2.0, 14.0, 8192))


def _no_control(d, detuning=0.0, tau=0.1, grid=ORACLE_GRID):
    memory = MemoryParams(d, tau, detuning)
    signal = gaussian_signal(tau, grid.t_span, center=0.0)
    return signal, solve(memory, signal, ControlPulse(0.0), grid=grid, signal_center=0.0)


@pytest.mark.parametrize("d,detuning", [(5, 0.0), (25, 5.0)])
def test_no_control_matches_linear_oracle(d, detuning):
    signal, r = _no_control(d, detuning)
    ref = linear_transmission(signal.samples, ORACLE_GRID.t_span.dt, d, detuning)
    err = np.linalg.norm(r.transmitted.samples - ref) / np.linalg.norm(ref)
    assert err < 1e-3
    assert r.eta_store < 1e-6
    assert r.ledger.closure < 1e-3


def test_trapezoid_marching_also_converges():
    grid = GridConfig(201, ORACLE_GRID.t_span, z_order=2)
    signal, r = _no_control(5, 0.0, grid=grid)
    ref = linear_transmission(signal.samples, grid.t_span.dt, 5, 0.0)
    assert np.linalg.norm(r.transmitted.samples - ref) / np.linalg.norm(ref) < 1e-3


def test_transmission_spectrum_linear_examples():
    m = MemoryParams(5, 0.1, 2.0)
    assert abs(transmission_spectrum_linear(m, [2.0])[0]) ** 2 == pytest.approx(math.exp(-10), abs=1e-12)
    tiny = MemoryParams(1e-12, 0.1)
    assert np.allclose(transmission_spectrum_linear(tiny, np.linspace(-5, 5, 11)), 1.0, atol=1e-11)
    x = np.linspace(0, 7, 50)
    h = transmission_spectrum_linear(m, 2.0 + np.concatenate([x, -x]))
    assert np.allclose(np.abs(h[:50]) ** 2, np.abs(h[50:]) ** 2, rtol=1e-12)


def test_grid_config_validation():
    span = TimeGrid(0, 1, 512)
    with pytest.raises(ValueError):
        GridConfig(31, span)
    with pytest.raises(ValueError):
        GridConfig(64, TimeGrid(0, 1, 511))
    with pytest.raises(ValueError):
        GridConfig(64, span, z_order=3)
    assert GridConfig(64, span).refined(2).n_t == 1023


def test_margin_and_argument_checks():
    m = MemoryParams(5, 0.1)
    grid = GridConfig(64, TimeGrid(-0.45, 2.0, 1024))
    sig = gaussian_signal(0.1, TimeGrid(-1.0, 2.0, 1024), center=0.0)
    with pytest.raises(ValueError, match="grid.t_span"):
        solve(m, sig, ControlPulse(1.0), grid=grid)
    sig = gaussian_signal(0.1, grid.t_span, center=0.0)
    with pytest.raises(GridMarginError, match="storage pulse"):
        solve(m, sig, ControlPulse(1.0, delay=-3.0), grid=grid, signal_center=0.0)
    wide = GridConfig(64, TimeGrid(-1.0, 2.0, 1024))
    sig = gaussian_signal(0.1, wide.t_span, center=0.0)
    with pytest.raises(ValueError, match="retrieval_delay"):
        solve(m, sig, ControlPulse(1.0), retrieval_delay=-1.0, grid=wide, signal_center=0.0)
    with pytest.raises(GridMarginError, match="before storage"):
        solve(m, sig, ControlPulse(1.0), retrieval_delay=0.1, grid=wide, signal_center=0.0)
    with pytest.raises(GridMarginError):
        solve(m, sig, ControlPulse(1.0), retrieval_delay=1.8, grid=wide, signal_center=0.0)


def test_non_finite_fields_are_reported():
    memory = MemoryParams(2000.0, 1.0)
    grid = GridConfig(64, TimeGrid(-10.0, 30.0, 512))
    sig = gaussian_signal(1.0, grid.t_span, center=0.0)
    with pytest.raises(IntegrationError) as info:
        solve(memory, sig, ControlPulse(0.0), grid=grid, signal_center=0.0)
    assert 0 < info.value.step < 512
    assert 0 <= info.value.z_index < 64
    assert "tau=" in str(info.value)


@pytest.fixture(scope="module")
def att_run():
    att = preset("ATT")
    return run_memory(att.memory, att.control, dump_stride=64)


def test_att_preset_efficiencies(att_run):
    r = att_run
    assert 0 <= r.eta_tot <= r.eta_store <= 1
    assert r.eta_ret == pytest.approx(r.eta_tot / r.eta_store)
    # frozen from a run on a twice-refined grid (n_z=401, n_t=116905)
    assert r.eta_store == pytest.approx(0.50305627, abs=1e-6)
    assert r.eta_tot == pytest.approx(0.30451091, abs=1e-6)
    assert r.ledger.closure < 1e-3


def test_att_preset_under_exact_storage_bound(att_run):
    assert att_run.eta_store <= optimal_storage_efficiency(5.0) + 0.01


@pytest.mark.xfail(strict=True, reason="the 1 - 2.9/d estimate is a large-d asymptote; at d=5 the "
                                       "exact optimum is 0.70 and the preset reaches 0.50")
def test_att_preset_under_asymptotic_estimate(att_run):
    assert att_run.eta_store <= eta_opt(5.0) + 0.01


def test_atomic_state_starts_in_ground_state(att_run):
    dump = att_run.dump
    assert np.all(dump.state.P[0] == 0) and np.all(dump.state.B[0] == 0)
    assert dump.A.shape == dump.state.P.shape == (dump.times.size, dump.z.size)


def test_field_dump_csv(att_run, tmp_path):
    path = tmp_path / "fields.csv"
    write_field_dump(att_run, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "z,tau,re_A,im_A,re_P,im_P,re_B,im_B"
    assert len(lines) - 1 == att_run.dump.times.size * att_run.dump.z.size
    with pytest.raises(ValueError):
        write_field_dump(run_memory(MemoryParams(1, 0.5), ControlPulse(0.5), retrieve=False), path)


@pytest.mark.parametrize("name", ["ATT", "ATS", "EIT"])
def test_self_convergence(name):
    p = preset(name)
    delay = default_retrieval_delay(p.memory, p.control)
    grid = default_grid(p.memory, p.control, delay)
    coarse = run_memory(p.memory, p.control, retrieval_delay=delay, grid=grid)
    fine = run_memory(p.memory, p.control, retrieval_delay=delay, grid=grid.refined(2))
    for attr in ("eta_store", "eta_tot", "eta_ret"):
        assert abs(getattr(coarse, attr) - getattr(fine, attr)) < 1e-3


def test_spin_wave_is_dark_after_storage():
    m = MemoryParams(10.0, 0.5)
    c = ControlPulse(1.2, 0.5, 0.6)
    r = run_memory(m, c, retrieve=False)
    times = r.transmitted.times
    quiet = times >= c.center(0.5) + 6 * c.intensity_fwhm(0.5) + 3.0
    tail = r.spin_energy[quiet]
    assert tail.size > 100
    assert np.ptp(tail) / tail.mean() < 1e-6


def test_linear_in_signal():
    p = preset("ATS")
    grid = default_grid(p.memory, p.control, default_retrieval_delay(p.memory, p.control))
    sig = gaussian_signal(p.memory.tau_gamma, grid.t_span, center=0.0)
    delay = default_retrieval_delay(p.memory, p.control)
    a = solve(p.memory, sig, p.control, retrieval_delay=delay, grid=grid, signal_center=0.0)
    c = 0.37 - 1.2j
    b = solve(p.memory, sig.scaled(c), p.control, retrieval_delay=delay, grid=grid, signal_center=0.0)
    err = np.linalg.norm(b.transmitted.samples - c * a.transmitted.samples)
    assert err / np.linalg.norm(c * a.transmitted.samples) < 1e-10
    assert np.linalg.norm(b.spin_wave - c * a.spin_wave) <= 1e-10 * np.linalg.norm(c * a.spin_wave)
    for attr in ("eta_store", "eta_tot"):
        assert getattr(b, attr) == pytest.approx(getattr(a, attr), rel=1e-10)


def test_detuning_symmetry():
    p = preset("ATT")
    plus = run_memory(p.memory.with_detuning(3.0), p.control)
    minus = run_memory(p.memory.with_detuning(-3.0), p.control)
    assert plus.eta_store == pytest.approx(minus.eta_store, rel=1e-9)
    assert plus.eta_tot == pytest.approx(minus.eta_tot, rel=1e-9)


def test_parallel_solves_are_bitwise_identical():
    p = preset("ATT")
    jobs = [p.memory.with_detuning(x) for x in (-2.0, 0.0, 1.0, 4.0)]
    serial = [run_memory(m, p.control).transmitted.samples.tobytes() for m in jobs]
    with ThreadPoolExecutor(4) as pool:
        parallel = list(pool.map(lambda m: run_memory(m, p.control).transmitted.samples.tobytes(), jobs))
    assert serial == parallel


def test_photon_counting_matches_in_short_pulse_limit():
    att = preset("ATT")
    m = MemoryParams(5.0, 0.03)
    r = run_memory(m, att.control)
    pc_store, pc_tot = photon_counting_efficiency(r, r.tau_mid)
    assert abs(pc_store - r.eta_store) < 0.03
    assert pc_tot == pytest.approx(r.eta_tot, rel=1e-9)


def test_photon_counting_without_control():
    signal, r = _no_control(5.0, 0.0)
    ref = linear_transmission(signal.samples, ORACLE_GRID.t_span.dt, 5.0, 0.0)
    # everything that leaves is transmitted before the window end at the grid edge
    end = r.transmitted.times[-1]
    pc_store, pc_tot = photon_counting_efficiency(r, end)
    assert pc_store == pytest.approx(1 - np.sum(np.abs(ref) ** 2) * ORACLE_GRID.t_span.dt, abs=1e-4)
    assert pc_tot == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        photon_counting_efficiency(r, end + 1.0)


def test_photon_counting_transparent_medium():
    _, r = _no_control(1e-8, 0.0)
    pc_store, _ = photon_counting_efficiency(r, r.transmitted.times[-1])
    assert abs(pc_store) < 1e-6


@settings(max_examples=12, deadline=None)
@given(
    d=st.floats(1, 60),
    tau=st.floats(0.05, 2.0),
    detuning=st.floats(-30, 30),
    area=st.floats(0, 12),
    delay=st.floats(-0.6, 0.8),
    duration=st.floats(0.5, 1.4),
)
def test_ledger_closes_on_random_storage(d, tau, detuning, area, delay, duration):
    r = run_memory(MemoryParams(d, tau, detuning), ControlPulse(area, delay, duration), retrieve=False)
    assert r.ledger.closure < 1e-3
    assert 0 <= r.eta_store <= 1
    assert r.eta_store <= optimal_storage_efficiency(d) + 0.01
