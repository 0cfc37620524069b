"""Empirical measures of particle ensembles against the mean-field density.

Runs small SDE ensembles of the log gas at several N (32 replicas each,
so this takes a minute or two) and compares the pooled particle positions
at the final time with the mean-field solution from the same initial law.
W2 shrinks with N until it reaches the sampling floor of the pooled
sample, which is of order 1/sqrt(M N).

Uses the library directly; the ``particles`` and ``diagnose`` CLI recipes
write the same snapshots as CSV files.
"""
from pathlib import Path

import numpy as np

from chaoslab import load_config, run_ensemble, run_meanfield
from chaoslab.diagnostics import wasserstein2_to_density
from chaoslab.recipes import initial_density

ROOT = Path(__file__).resolve().parents[1]
cfg = load_config(ROOT / "configs/particles.toml")
d, M = cfg["dynamics"], 32
mu0 = initial_density(cfg)
snaps, _ = run_meanfield(mu0, cfg.kernel, cfg.confinement, cfg.beta, 1e-3, d["t_end"])
mu_t = snaps[-1].mu
xs, w = mu_t.grid.centers, mu_t.values * mu_t.grid.h
var_mf = np.sum(w * xs**2) - np.sum(w * xs) ** 2
params = dict(spec=cfg.kernel, V=cfg.confinement, beta=cfg.beta, dt=d["dt"], scheme=d["kind"])

print(f"{'N':>5} {'W2':>9} {'floor':>9} {'var':>8} {'var (mf)':>8}")
for N in (8, 32, 128):
    run = run_ensemble(lambda r: mu0.sample(r, N), "sde", params, M, d["t_end"], None, cfg["ensemble"]["master_seed"])
    x = np.asarray(run.final).ravel()
    print(f"{N:5d} {wasserstein2_to_density(run.final, mu_t):9.4f} {1 / np.sqrt(x.size):9.4f} {x.var():8.4f} {var_mf:8.4f}")
