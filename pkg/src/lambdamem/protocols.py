"""Regime and protocol presets, efficiency bounds and pulse-area scans."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ive

from .core import ControlPulse, MemoryParams, gaussian_signal
from .solver import GridConfig, default_grid, solve

log = logging.getLogger(__name__)

PRESET_NAMES = ("ATT", "ATS", "EIT")


@dataclass(frozen=True)
class RegimePreset:
    name: str
    memory: MemoryParams
    control: ControlPulse

    def __post_init__(self):
        if self.name not in PRESET_NAMES:
            raise ValueError(f"unknown preset {self.name!r}; expected one of {PRESET_NAMES}")

    @property
    def adiabaticity(self) -> float:
        return adiabaticity(self.memory)


_PRESETS = (
    RegimePreset("ATT", MemoryParams(5.0, 0.1), ControlPulse(1.0789, 0.76176, 0.52137)),
    RegimePreset("ATS", MemoryParams(7.5, 0.4), ControlPulse(2.63177, -0.23817, 1.23829)),
    RegimePreset("EIT", MemoryParams(50.0, 1.5), ControlPulse(10.05845, -0.54359, 1.33658)),
)


def regime_presets() -> list[RegimePreset]:
    return list(_PRESETS)


def preset(name: str) -> RegimePreset:
    key = name.upper()
    for p in _PRESETS:
        if p.name == key:
            return p
    raise KeyError(f"unknown preset {name!r}; expected one of {PRESET_NAMES}")


def adiabaticity(memory: MemoryParams) -> float:
    """chi = d * tau_FWHM * gamma."""
    return memory.d * memory.tau_gamma


def eta_opt(d: float) -> float:
    """Large-d optimal storage efficiency estimate, clamped at zero."""
    if not d > 0:
        raise ValueError(f"optical depth must be > 0, got {d}")
    if math.isinf(d):
        return 1.0
    return max(0.0, 1.0 - 2.9 / d)


def optimal_storage_efficiency(d: float, n_nodes: int = 200) -> float:
    """Exact optimum of forward storage for optical depth ``d``.

    Largest eigenvalue of the symmetric storage kernel
    K(z, z') = d/2 exp(-d (z + z')/2) I0(d sqrt(z z')) on [0, 1], evaluated by
    Gauss-Legendre quadrature.  It approaches 1 - 2.9/d from above for large d.
    """
    if not d > 0:
        raise ValueError(f"optical depth must be > 0, got {d}")
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    z = 0.5 * (x + 1.0)
    w = 0.5 * w
    s = np.sqrt(z)
    arg = d * np.outer(s, s)
    # I0(x) e^{-d(z+z')/2} = ive(0, x) e^{-d (sqrt z - sqrt z')^2 / 2}
    kernel = 0.5 * d * ive(0, arg) * np.exp(-0.5 * d * (s[:, None] - s[None, :]) ** 2)
    sw = np.sqrt(w)
    return float(np.linalg.eigvalsh(sw[:, None] * kernel * sw[None, :])[-1])


def first_local_max(x, y):
    """Quadratic-interpolated first local maximum of a sampled curve.

    Returns ``(x_peak, y_peak)``; a maximum on the boundary is returned as the
    boundary sample.  NaN entries (failed points) end the search.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    if n == 0:
        raise ValueError("empty curve")
    k = 0
    while k + 1 < n and np.isfinite(y[k + 1]) and y[k + 1] >= y[k]:
        k += 1
    if k == 0 or k == n - 1 or not np.isfinite(y[k + 1]):
        return float(x[k]), float(y[k])
    return quadratic_vertex(x[k - 1:k + 2], y[k - 1:k + 2])


def quadratic_vertex(x3, y3):
    """Vertex of the parabola through three points."""
    coeffs = np.polyfit(np.asarray(x3, float), np.asarray(y3, float), 2)
    a, b, c = coeffs
    if a >= 0:
        k = int(np.argmax(y3))
        return float(x3[k]), float(y3[k])
    xv = -b / (2 * a)
    return float(xv), float(c - b * b / (4 * a))


@dataclass(frozen=True, eq=False)
class AreaScan:
    memory: MemoryParams
    control: ControlPulse
    areas: np.ndarray
    eta_store: np.ndarray
    failures: dict = field(default_factory=dict)

    @property
    def partial(self) -> bool:
        return bool(self.failures)

    def first_maximum(self):
        """(area, eta_store) at the first local maximum, areas in units of pi."""
        order = np.argsort(self.areas, kind="stable")
        return first_local_max(self.areas[order], self.eta_store[order])

    def subsequent_minimum(self):
        """Smallest eta_store after the first maximum, or None if there is no later point."""
        peak, _ = self.first_maximum()
        order = np.argsort(self.areas, kind="stable")
        a, e = self.areas[order], self.eta_store[order]
        later = (a > peak) & np.isfinite(e)
        if not later.any():
            return None
        k = int(np.argmin(np.where(later, e, np.inf)))
        return float(a[k]), float(e[k])

    def to_dict(self) -> dict:
        peak, eta_max = self.first_maximum()
        return {"argmax_over_pi": peak, "max": eta_max,
                "failures": {str(k): v for k, v in self.failures.items()}}


def _run_parallel(fn, items, jobs):
    if jobs is None or jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def sweep_pulse_area(
    memory: MemoryParams,
    control_template: ControlPulse,
    areas,
    grid: GridConfig | None = None,
    jobs: int = 1,
) -> AreaScan:
    """Storage efficiency versus control pulse area (units of pi).

    Storage only: no retrieval pulse is applied.  Per-point solver errors are
    recorded in ``failures`` with NaN efficiency and the sweep continues.
    """
    areas = np.asarray(areas, dtype=float)
    if areas.size == 0:
        raise ValueError("areas must be non-empty")
    if np.any(areas < 0) or not np.all(np.isfinite(areas)):
        raise ValueError("areas must be finite and non-negative")
    if grid is None:
        grid = default_grid(memory, control_template.with_area(float(areas.max())))
    signal = gaussian_signal(memory.tau_gamma, grid.t_span, center=0.0)

    def run(area):
        try:
            r = solve(memory, signal, control_template.with_area(area), grid=grid, signal_center=0.0)
            return r.eta_store, None
        except (ArithmeticError, RuntimeError, ValueError) as exc:
            log.warning("area %.4g failed: %s", area, exc)
            return math.nan, f"{type(exc).__name__}: {exc}"

    results = _run_parallel(run, [float(a) for a in areas], jobs)
    eta = np.array([r[0] for r in results])
    failures = {float(a): r[1] for a, r in zip(areas, results) if r[1] is not None}
    return AreaScan(memory, control_template, areas, eta, failures)
