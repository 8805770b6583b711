"""Shared constructors for test inputs."""

import numpy as np

from lambdamem.core import ControlPulse, MemoryParams

SWEEP_SEED = 20240601


def random_draws(n, seed=SWEEP_SEED):
    """Randomised (memory, control) pairs spanning the stress-test ranges.

    d in [1, 60], tau_gamma in [0.05, 2], detuning in [-30, 30] and area in
    [0, 12] pi; control delay and duration are drawn so the control overlaps
    the signal.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        memory = MemoryParams(
            d=float(rng.uniform(1, 60)),
            tau_gamma=float(rng.uniform(0.05, 2.0)),
            detuning=float(rng.uniform(-30, 30)),
        )
        control = ControlPulse(
            area=float(rng.uniform(0, 12)),
            delay=float(rng.uniform(-0.6, 0.8)),
            duration=float(rng.uniform(0.5, 1.4)),
        )
        out.append((memory, control))
    return out
