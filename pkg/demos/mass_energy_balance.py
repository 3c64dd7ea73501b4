"""
Mass and energy bookkeeping along one noise path
=================================================

Phase noise leaves |u| alone, so the mass only feels damping and forcing.
We integrate one path and compare the recorded mass and energy with the
balance laws evaluated from the same record.
"""

import numpy as np

from sfnls import ForcingSpec, IntegratorConfig, ModelParams, SpectralField, evolve, make_grid, sample_path
from sfnls.model import gaussian_bump

# a 1D torus of length 40 with 256 modes, alpha = 0.8
grid = make_grid(1, 40.0, 256, 0.8)
x = grid.coords()[0]
u0 = SpectralField(grid, np.exp(-x**2 / 2) * (1 + 0.3j * x))

###############################################################################
# Linear damping only: the mass must decay like exp(-2 (gamma + beta) t)
params = ModelParams(alpha=0.8, sigma=0.8, gamma=0.5, beta=0.3)
path = sample_path(seed=3, t0=0.0, dt=1e-3, steps=2000)
rec, _ = evolve(u0, 0.0, 2.0, params, ForcingSpec.linear_damping(0.3), path, IntegratorConfig(1e-3))
print("M(2)/M(0)          ", rec.mass[-1] / rec.mass[0])
print("exp(-2 * 0.8 * 2)  ", np.exp(-3.2))

###############################################################################
# The mass residual is the trapezoid error of the balance law: halving dt
# cuts it by four
forcing = ForcingSpec.damped_forced(0.3, gaussian_bump(grid, 0.05, 2.0))
for dt in (2e-3, 1e-3, 5e-4):
    rec, _ = evolve(u0, 0.0, 1.0, params, forcing, sample_path(3, 0.0, dt, round(1 / dt)), IntegratorConfig(dt))
    print(f"dt={dt:.0e}  mass residual {np.max(np.abs(rec.identity_residuals['mass'])):.3e}"
          f"  energy residual {abs(rec.identity_residuals['energy'][-1]):.3e}")

###############################################################################
# The energy residual is first order: its dt integrals use left-point sums.
# The noise never enters the energy balance, which the recorded integrand
# confirms
print("max |noise work|   ", np.max(np.abs(rec.integrands["noise_work"])))

# the full record goes to CSV with one row per recorded step
rec.to_csv("mass_energy_balance.csv")
