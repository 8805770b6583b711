"""Detuning sweeps and near-off-resonant memory (NORM) identification."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .core import ControlPulse, MemoryParams, gaussian_signal
from .protocols import PRESET_NAMES, _run_parallel, adiabaticity, preset, quadratic_vertex, regime_presets
from .solver import GridConfig, default_grid, default_retrieval_delay, solve

log = logging.getLogger(__name__)

NORM_THRESHOLD = 0.5
FLAT_RTOL = 1e-2


class UndefinedAdiabaticityError(ValueError):
    """The control is not one of the named optimal presets, so chi' is undefined."""


@dataclass(frozen=True, eq=False)
class DetuningSweep:
    memory: MemoryParams
    control: ControlPulse
    detunings: np.ndarray
    eta_store: np.ndarray
    eta_tot: np.ndarray
    failures: dict = field(default_factory=dict)
    regime: str | None = None
    protocol: str | None = None

    def __post_init__(self):
        n = len(self.detunings)
        if n == 0:
            raise ValueError("detunings must be non-empty")
        if np.any(np.diff(self.detunings) <= 0):
            raise ValueError("detunings must be strictly increasing")
        if len(self.eta_store) != n or len(self.eta_tot) != n:
            raise ValueError("efficiencies must align one-to-one with detunings")

    @property
    def partial(self) -> bool:
        return bool(self.failures)

    def rows(self):
        return list(zip(self.detunings.tolist(), self.eta_store.tolist(), self.eta_tot.tolist()))


class DetuningOptimum(NamedTuple):
    delta_opt: float
    eta_max: float
    degenerate: bool
    interval: tuple


def default_detunings(memory: MemoryParams) -> np.ndarray:
    """41 points over [-10, 10] below d = 50, 61 points over [-30, 30] otherwise."""
    if memory.d >= 50:
        return np.linspace(-30.0, 30.0, 61)
    return np.linspace(-10.0, 10.0, 41)


def sweep_detuning(
    memory: MemoryParams,
    control: ControlPulse,
    detunings=None,
    grid: GridConfig | None = None,
    retrieval_delay: float | None = None,
    jobs: int = 1,
    regime: str | None = None,
    protocol: str | None = None,
) -> DetuningSweep:
    """Storage followed by retrieval at each detuning on one shared grid.

    Solver failures are recorded per point (efficiencies NaN) and the sweep
    continues.
    """
    detunings = default_detunings(memory) if detunings is None else np.asarray(detunings, dtype=float)
    if detunings.size == 0:
        raise ValueError("detunings must be non-empty")
    if retrieval_delay is None:
        retrieval_delay = default_retrieval_delay(memory, control)
    if grid is None:
        grid = default_grid(memory, control, retrieval_delay,
                            max_detuning=float(np.max(np.abs(detunings))))
    signal = gaussian_signal(memory.tau_gamma, grid.t_span, center=0.0)

    def run(delta):
        try:
            r = solve(memory.with_detuning(delta), signal, control, retrieval_delay=retrieval_delay,
                      grid=grid, signal_center=0.0)
            return r.eta_store, r.eta_tot, None
        except (ArithmeticError, RuntimeError, ValueError) as exc:
            log.warning("detuning %.4g failed: %s", delta, exc)
            return math.nan, math.nan, f"{type(exc).__name__}: {exc}"

    results = _run_parallel(run, [float(x) for x in detunings], jobs)
    failures = {float(x): r[2] for x, r in zip(detunings, results) if r[2] is not None}
    return DetuningSweep(
        memory=memory,
        control=control,
        detunings=detunings,
        eta_store=np.array([r[0] for r in results]),
        eta_tot=np.array([r[1] for r in results]),
        failures=failures,
        regime=regime,
        protocol=protocol,
    )


def optimal_detuning(sweep: DetuningSweep, rtol: float = FLAT_RTOL) -> DetuningOptimum:
    """Interpolated argmax and maximum of eta_tot over a detuning sweep.

    The samples within ``rtol`` (relative) of the maximum that are contiguous
    with it form the near-optimal run.  If that run spans the whole sweep or
    contains an interior dip, the optimum is degenerate and its midpoint is
    reported.  Otherwise the three points around the discrete maximum are
    fitted by a parabola.
    """
    ok = np.isfinite(sweep.eta_tot)
    x = sweep.detunings[ok]
    y = sweep.eta_tot[ok]
    if x.size < 5:
        raise ValueError(f"need >= 5 successful sweep points, got {x.size}")
    k = int(np.argmax(y))
    y_max = float(y[k])
    near = y >= (1.0 - rtol) * y_max if y_max > 0 else np.ones_like(y, bool)
    lo = k
    while lo > 0 and near[lo - 1]:
        lo -= 1
    hi = k
    while hi < y.size - 1 and near[hi + 1]:
        hi += 1
    run = y[lo:hi + 1]
    interior_dip = run.size >= 3 and np.any(
        (run[1:-1] < run[:-2]) & (run[1:-1] < run[2:]))
    interval = (float(x[lo]), float(x[hi]))
    if y_max <= 0 or (lo == 0 and hi == y.size - 1) or interior_dip:
        return DetuningOptimum(float(0.5 * (x[lo] + x[hi])), y_max, True, interval)
    if k == 0 or k == y.size - 1:
        return DetuningOptimum(float(x[k]), y_max, False, interval)
    xv, yv = quadratic_vertex(x[k - 1:k + 2], y[k - 1:k + 2])
    return DetuningOptimum(xv, max(yv, y_max), False, interval)


def _matching_preset(control: ControlPulse, rel_tol: float = 1e-9):
    for p in regime_presets():
        c = p.control
        if all(math.isclose(a, b, rel_tol=rel_tol, abs_tol=1e-12)
               for a, b in ((control.area, c.area), (control.delay, c.delay),
                            (control.duration, c.duration))):
            return p
    return None


def norm_predicate(memory: MemoryParams, control: ControlPulse) -> bool:
    """True when the control's own regime is less adiabatic than ``memory``.

    chi' is the adiabaticity of the preset regime whose optimal control is
    ``control``; it is only defined for the three named presets.
    """
    match = _matching_preset(control)
    if match is None:
        raise UndefinedAdiabaticityError(
            f"control {control} is not an optimal preset control; adiabaticity is undefined")
    return adiabaticity(match.memory) < adiabaticity(memory)


@dataclass(frozen=True, eq=False)
class MatrixEntry:
    sweep: DetuningSweep
    optimum: DetuningOptimum
    predicate: bool

    @property
    def norm_observed(self) -> bool:
        return abs(self.optimum.delta_opt) > NORM_THRESHOLD


@dataclass(frozen=True, eq=False)
class ProtocolMatrix:
    entries: dict  # (regime, protocol) -> MatrixEntry

    def truth_table(self) -> list[dict]:
        rows = []
        for (regime, protocol), e in self.entries.items():
            rows.append({
                "regime": regime,
                "protocol": protocol,
                "delta_opt": e.optimum.delta_opt,
                "eta_max": e.optimum.eta_max,
                "degenerate": e.optimum.degenerate,
                "norm_observed": bool(e.norm_observed),
                "norm_predicate": e.predicate,
                "failures": len(e.sweep.failures),
            })
        return rows

    @property
    def consistent(self) -> bool:
        """NORM is observed exactly where the predicate says it should be."""
        return all(e.norm_observed == e.predicate for e in self.entries.values())

    def best_regime(self, protocol: str) -> str:
        """Regime in which ``protocol`` reaches its largest eta_tot."""
        cands = {r: e.optimum.eta_max for (r, p), e in self.entries.items() if p == protocol}
        return max(cands, key=cands.get)

    @property
    def partial(self) -> bool:
        return any(e.sweep.partial for e in self.entries.values())


def protocol_matrix(
    jobs: int = 1,
    detunings: dict | None = None,
    grid_factor: int = 1,
) -> ProtocolMatrix:
    """Detuning sweeps for every protocol control in every preset regime.

    ``detunings`` optionally maps regime names to detuning arrays;
    ``grid_factor`` refines every default grid for convergence checks.
    """
    entries = {}
    for regime in PRESET_NAMES:
        mem = preset(regime).memory
        deltas = (detunings or {}).get(regime, default_detunings(mem))
        for protocol in PRESET_NAMES:
            ctrl = preset(protocol).control
            delay = default_retrieval_delay(mem, ctrl)
            grid = default_grid(mem, ctrl, delay, max_detuning=float(np.max(np.abs(deltas))))
            if grid_factor > 1:
                grid = grid.refined(grid_factor)
            sweep = sweep_detuning(mem, ctrl, deltas, grid=grid, retrieval_delay=delay, jobs=jobs,
                                   regime=regime, protocol=protocol)
            entries[(regime, protocol)] = MatrixEntry(
                sweep, optimal_detuning(sweep), norm_predicate(mem, ctrl))
            log.info("matrix %s regime / %s protocol: %s", regime, protocol, entries[(regime, protocol)].optimum)
    return ProtocolMatrix(entries)
