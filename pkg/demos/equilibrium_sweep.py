"""How the thermal equilibrium of a 1d log gas depends on temperature.

At large beta the interaction dominates and the density approaches the
semicircle of radius sqrt(2/kappa), whose variance is 1/(2 kappa). At small
beta the entropy wins and the density is close to the Gaussian
exp(-beta V). For the log kernel the virial identity gives the variance
exactly, 1/(kappa beta) + 1/(2 kappa), which the printout can be checked
against. The script prints the
variance, free energy and convexity certificate along a beta sweep and
writes one CSV per beta under ``out/demo_equilibrium``.

    python demos/equilibrium_sweep.py
    python demos/plot_csv.py out/demo_equilibrium/beta_4.csv --x x --y mu_beta -o eq.png
"""
from pathlib import Path

import numpy as np

from chaoslab import ConfinementSpec, Grid1D, KernelSpec, convexity_constant, free_energy, solve_thermal_equilibrium
from chaoslab.recipes import write_csv

OUT = Path("out/demo_equilibrium")
kernel = KernelSpec("log")
well = ConfinementSpec("quadratic", kappa=2.0)

OUT.mkdir(parents=True, exist_ok=True)
print(f"{'beta':>6} {'variance':>10} {'(virial)':>8} {'free energy':>12} {'kappa':>8} {'C_LS':>8}")
for beta in (0.25, 1.0, 4.0, 16.0):
    # hotter gases need a wider window
    half = 4.0 + 6.0 / np.sqrt(beta)
    grid = Grid1D(-half, half, 384)
    res = solve_thermal_equilibrium(kernel, well, beta, grid)
    mu = res.mu_beta
    x, w = grid.centers, mu.values * grid.h
    var = np.sum(w * x**2) - np.sum(w * x) ** 2
    lsi = convexity_constant(mu, mu, well, kernel, beta)
    print(f"{beta:6.2f} {var:10.4f} ({1 / (2 * beta) + 0.25:.4f}) {free_energy(mu, kernel, well, beta):12.5f} {lsi.kappa:8.3f} {lsi.c_ls:8.3f}")
    write_csv(OUT / f"beta_{beta:g}.csv", ["x", "mu_beta"], zip(x, mu.values))

# at equilibrium the convexity deficit vanishes, so kappa is just inf V'' = 2
print("CSV files in", OUT)
