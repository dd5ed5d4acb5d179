"""Momentum descent as a damped oscillator.

On a quadratic loss the (theta, velocity) pair evolves under a fixed 2x2
matrix; the spectral radius of that matrix decides convergence, and complex
eigenvalues mean underdamped (oscillating) trajectories. This prints a few
regimes side by side as ASCII sparklines.
"""

import numpy as np

from funcscene.optimizer import (
    DampingProbe,
    is_underdamped,
    simulate_quadratic,
    spectral_radius,
)


def sparkline(values, width=60):
    lo, hi = min(values), max(values)
    span = (hi - lo) or 1.0
    chars = " .:-=+*#"
    idx = np.linspace(0, len(values) - 1, width).astype(int)
    return "".join(chars[int((values[i] - lo) / span * (len(chars) - 1))] for i in idx)


cases = [
    ("underdamped ", DampingProbe(curvature=1.0, lr=0.1, momentum=0.9, steps=120)),
    ("critical-ish", DampingProbe(curvature=1.0, lr=0.1, momentum=0.47, steps=120)),
    ("overdamped  ", DampingProbe(curvature=1.0, lr=0.02, momentum=0.0, steps=120)),
    ("divergent   ", DampingProbe(curvature=1.0, lr=3.9, momentum=0.0, steps=120)),
]

for name, probe in cases:
    rho = spectral_radius(probe)
    with np.errstate(over="ignore", invalid="ignore"):
        traj = simulate_quadratic(probe)
    tag = "underdamped" if is_underdamped(probe) else "overdamped"
    verdict = "converges" if rho < 1 else "diverges"
    print(f"{name} rho={rho:6.3f} {verdict:9s} ({tag})")
    print(f"  {sparkline(np.clip(traj, -2, 2))}")
