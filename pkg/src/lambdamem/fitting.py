"""Shared least-squares machinery and the fit result container.

Nonlinear fits run scipy's MINPACK Levenberg-Marquardt from several
deterministic starting points and keep the lowest-cost solution.  Standard
errors come from the Jacobian at the optimum scaled by the reduced
chi-square.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

FTOL = 1e-10
MAX_ITER = 200


class FitError(RuntimeError):
    """A fit did not converge; ``best`` holds the best parameters seen."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class RankDeficiencyError(ValueError):
    """The design matrix does not determine every parameter."""


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


@dataclass(frozen=True)
class FitResult:
    model: str
    params: dict
    std_errs: dict
    residual_norm: float
    converged: bool
    flags: tuple = ()
    extra: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.params[name]

    def to_dict(self) -> dict:
        out = {
            "model": self.model,
            "params": {k: _jsonable(float(v)) for k, v in self.params.items()},
            "std_errs": {k: _jsonable(float(v)) for k, v in self.std_errs.items()},
            "residual_norm": _jsonable(float(self.residual_norm)),
            "converged": bool(self.converged),
        }
        if self.flags:
            out["flags"] = list(self.flags)
        if self.extra:
            out["extra"] = {k: _jsonable(v) for k, v in self.extra.items()}
        return out


def sorted_xy(x, y, min_points: int, what: str = "points"):
    """Validate, flatten and sort paired samples by abscissa."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise ValueError(f"x and y lengths differ ({x.size} vs {y.size})")
    if x.size < min_points:
        raise ValueError(f"need >= {min_points} {what}, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("data must be finite")
    order = np.lexsort((y, x))
    return x[order], y[order]


def _std_errs(jac, residuals, n_params):
    m = residuals.size
    if m <= n_params:
        return np.full(n_params, math.nan)
    jtj = jac.T @ jac
    if np.linalg.matrix_rank(jtj) < n_params:
        return np.full(n_params, math.nan)
    cov = np.linalg.inv(jtj) * float(residuals @ residuals) / (m - n_params)
    return np.sqrt(np.clip(np.diag(cov), 0.0, None))


def levenberg_marquardt(model, names, func, x, y, starts, flags=(), extra=None) -> FitResult:
    """Multi-start LM fit of ``y ~ func(x, *p)``.

    Each start is limited to ``MAX_ITER`` Jacobian evaluations' worth of
    function calls; convergence is a relative cost change below ``FTOL``
    (or the step/gradient tests).  Raises :class:`FitError` carrying the
    best result if no start converges.
    """
    n = len(names)

    def resid(p):
        return func(x, *p) - y

    best = None
    for p0 in starts:
        p0 = np.asarray(p0, dtype=float)
        if not np.all(np.isfinite(resid(p0))):
            continue
        sol = least_squares(resid, p0, method="lm", ftol=FTOL, xtol=1e-14, gtol=1e-14,
                            max_nfev=MAX_ITER * (n + 1))
        if not np.all(np.isfinite(sol.fun)):
            continue
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None:
        raise FitError(f"{model}: no starting point gave finite residuals")
    errs = _std_errs(best.jac, best.fun, n)
    result = FitResult(
        model=model,
        params=dict(zip(names, map(float, best.x))),
        std_errs=dict(zip(names, map(float, errs))),
        residual_norm=float(np.linalg.norm(best.fun)),
        converged=bool(best.status > 0),
        flags=tuple(flags),
        extra=dict(extra or {}),
    )
    if not result.converged:
        raise FitError(f"{model}: no start converged within {MAX_ITER} iterations "
                       f"({best.message})", best=result)
    return result


def linear_least_squares(model, names, design, y, flags=(), extra=None) -> FitResult:
    """Ordinary least squares with a rank check."""
    design = np.asarray(design, dtype=float)
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < design.shape[1]:
        raise RankDeficiencyError(
            f"{model}: design matrix has rank {rank} < {design.shape[1]} (degenerate abscissae)")
    residuals = design @ coef - y
    errs = _std_errs(design, residuals, design.shape[1])
    return FitResult(
        model=model,
        params=dict(zip(names, map(float, coef))),
        std_errs=dict(zip(names, map(float, errs))),
        residual_norm=float(np.linalg.norm(residuals)),
        converged=True,
        flags=tuple(flags),
        extra=dict(extra or {}),
    )
