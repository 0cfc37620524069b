"""Canned experiments behind the command line.

Each recipe takes a validated :class:`ExperimentConfig` and an output
directory, writes its CSV/JSON artifacts and returns a summary dict with a
``status`` entry. Audit failures raise :class:`AuditViolation` after the
artifacts are on disk, so a failing run can still be inspected.
"""
from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path

import numpy as np

from . import particles as pt
from .config import ExperimentConfig
from .diagnostics import (
    commutator_functional,
    error_terms,
    marginal_distances,
    modulated_energy_batch,
    riesz_lower_bound,
    wasserstein2_to_density,
)
from .equilibrium import convexity_constant, free_energy, perturb_equilibrium, solve_thermal_equilibrium
from .errors import AuditViolation, ConfigError, InsufficientSamplesError
from .experiments import certify_trajectory, run_coupled, split_mixture
from .grid import GridDensity, GridField
from .liouville import RECORD_COLUMNS, build_joint, dissipation_audit, gronwall_audit
from .meanfield import SERIES_COLUMNS, run_meanfield

FLOAT_FMT = "{:.17g}"


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT.format(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, columns, rows) -> None:
    """Rows are sequences in column order or dicts keyed by column name."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            values = [row[c] for c in columns] if isinstance(row, dict) else row
            w.writerow([_fmt(v) for v in values])


def read_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {}
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# shared setup
# ---------------------------------------------------------------------------

def equilibrium_of(cfg: ExperimentConfig):
    return solve_thermal_equilibrium(cfg.kernel, cfg.confinement, cfg.beta, cfg.grid,
                                     tol=cfg["tolerances"]["equilibrium"])


def initial_density(cfg: ExperimentConfig, mu_beta: GridDensity | None = None) -> GridDensity:
    ini, grid = cfg["initial"], cfg.grid
    kind = ini["kind"]
    if kind in ("perturbed_equilibrium", "equilibrium", "split_mixture", "product"):
        mu_beta = mu_beta if mu_beta is not None else equilibrium_of(cfg).mu_beta
        if kind == "equilibrium":
            return mu_beta
        a = ini["amplitude"]
        return perturb_equilibrium(mu_beta, lambda x: a * np.sin(x) * np.exp(-x**2 / 8.0))
    if kind == "gaussian":
        m, s = ini["mean"], ini["std"]
        return GridDensity.from_function(grid, lambda x: np.exp(-((x - m) ** 2) / (2 * s * s)))
    return GridDensity.uniform(grid, grid.lo, grid.hi)


def _n_steps(cfg):
    d = cfg["dynamics"]
    return int(round(d["t_end"] / d["dt"])), max(1, int(round(d["snapshot_dt"] / d["dt"])))


# ---------------------------------------------------------------------------
# recipes
# ---------------------------------------------------------------------------

def recipe_equilibrium(cfg: ExperimentConfig, out: Path) -> dict:
    res = equilibrium_of(cfg)
    mu = res.mu_beta
    write_csv(out / "equilibrium.csv", ["x", "mu_beta"], zip(cfg.grid.centers, mu.values))
    cert = convexity_constant(mu, mu, cfg.confinement, cfg.kernel, cfg.beta)
    summary = {"c_beta": res.c_beta, "residual": res.residual, "iterations": res.iterations,
               "free_energy": free_energy(mu, cfg.kernel, cfg.confinement, cfg.beta),
               "kappa": cert.kappa, "c_ls": cert.c_ls, "sup_mu": mu.sup_norm}
    summary["status"] = "pass" if res.residual < cfg["tolerances"]["equilibrium"] else "fail"
    write_json(out / "summary.json", summary)
    if summary["status"] != "pass":
        raise AuditViolation("equilibrium residual above tolerance")
    return summary


def recipe_meanfield(cfg: ExperimentConfig, out: Path) -> dict:
    eq = equilibrium_of(cfg)
    mu0 = initial_density(cfg, eq.mu_beta)
    d = cfg["dynamics"]
    snaps, series = run_meanfield(mu0, cfg.kernel, cfg.confinement, cfg.beta, d["dt"], d["t_end"],
                                  snapshot_dt=d["snapshot_dt"], mode=d["kind"], mu_eq=eq.mu_beta)
    n = len(series["t"])
    write_csv(out / "series.csv", list(SERIES_COLUMNS), ({c: series[c][i] for c in SERIES_COLUMNS} for i in range(n)))
    x = cfg.grid.centers
    write_csv(out / "snapshots.csv", ["t", "x", "mu"],
              ((s.t, xi, mi) for s in snaps for xi, mi in zip(x, s.mu.values)))
    increments = np.diff(series["free_energy"])
    worst = float(increments.max()) if increments.size else 0.0
    tol = cfg["tolerances"]["tol_abs"]
    summary = {"free_energy_max_increment": worst, "final_l1_to_equilibrium": series["l1_dist_to_equilibrium"][-1],
               "steps": n - 1, "status": "pass" if worst <= tol else "fail"}
    write_json(out / "summary.json", summary)
    if summary["status"] != "pass":
        raise AuditViolation(f"free energy increased by {worst:g}")
    return summary


def _sampler(cfg, mu0):
    N = cfg["ensemble"]["N"]
    return lambda rng: mu0.sample(rng, N)


def recipe_particles(cfg: ExperimentConfig, out: Path, threads: int | None = None) -> dict:
    e, d = cfg["ensemble"], cfg["dynamics"]
    eq = equilibrium_of(cfg)
    mu0 = initial_density(cfg, eq.mu_beta)
    params = {"spec": cfg.kernel, "V": cfg.confinement, "beta": cfg.beta}
    if e["sampler"] == "mala":
        params.update(dt=e["mala_dt"], target=e["target"], mu=eq.mu_beta)
        n_steps = int(round(d["t_end"] / d["dt"]))
        t_end, cadence = n_steps * e["mala_dt"], max(1, int(round(d["snapshot_dt"] / d["dt"]))) * e["mala_dt"]
    else:
        # drift-implicit steps for singular kernels; plain Euler-Maruyama with step halving otherwise
        params.update(dt=d["dt"], scheme=d["kind"])
        t_end, cadence = d["t_end"], d["snapshot_dt"]
    run = pt.run_ensemble(_sampler(cfg, mu0), e["sampler"], params, e["M"], t_end, cadence, e["master_seed"], threads)
    write_snapshots(out / "snapshots", run.times, run.snapshots)
    summary = {"snapshots": len(run.times), "M": e["M"], "N": e["N"], "status": "pass"}
    write_json(out / "summary.json", summary)
    return summary


def write_snapshots(directory, times, snapshots) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index = []
    for k, (t, X) in enumerate(zip(times, snapshots)):
        name = f"snapshot_{k:05d}.csv"
        M, N = X.shape
        rows = ((r, i, X[r, i]) for r in range(M) for i in range(N))
        write_csv(directory / name, ["replica", "particle", "x"], rows)
        index.append((k, t, name))
    write_csv(directory / "index.csv", ["k", "t", "file"], index)


def read_snapshots(directory):
    directory = Path(directory)
    with open(directory / "index.csv", newline="") as fh:
        entries = list(csv.DictReader(fh))
    times, snaps = [], []
    for ent in entries:
        data = read_csv(directory / ent["file"])
        M, N = int(data["replica"].max()) + 1, int(data["particle"].max()) + 1
        X = np.empty((M, N))
        X[data["replica"].astype(int), data["particle"].astype(int)] = data["x"]
        times.append(float(ent["t"]))
        snaps.append(X)
    return np.array(times), snaps


def _coupled(cfg: ExperimentConfig):
    e, d = cfg["ensemble"], cfg["dynamics"]
    if e["N"] not in (2, 3):
        raise ConfigError(["ensemble.N: the joint solver needs N in {2, 3}"])
    eq = equilibrium_of(cfg)
    mu0 = initial_density(cfg, eq.mu_beta)
    grid = cfg.grid
    if cfg["initial"]["kind"] == "split_mixture":
        if e["N"] != 2:
            raise ConfigError(["initial.kind: split_mixture is defined for N = 2"])
        width = cfg["initial"]["width"] or None
        f0 = split_mixture(mu0, width)
    elif cfg["initial"]["kind"] == "equilibrium":
        f0 = build_joint("gibbs", cfg.kernel, grid, e["N"], beta=cfg.beta, V=cfg.confinement)
    else:
        f0 = build_joint("product", cfg.kernel, grid, e["N"], mu=mu0)
    _, every = _n_steps(cfg)
    run = run_coupled(f0, mu0, cfg.kernel, cfg.confinement, cfg.beta, d["dt"], d["t_end"],
                      record_every=1, constants=cfg.constants(), mu_beta=eq.mu_beta)
    return run, every


def tol_disc(cfg: ExperimentConfig) -> float:
    t = cfg["tolerances"]
    return t["tol_disc_c"] * (cfg.grid.h**2 + cfg["dynamics"]["dt"]) + t["tol_abs"]


def audit_coupled(cfg: ExperimentConfig, run) -> tuple:
    """Dissipation, LSI-chain and Gronwall audits; returns (summary, audit rows)."""
    beta, N = cfg.beta, cfg["ensemble"]["N"]
    tol = cfg["tolerances"]
    records = run.records
    diss = dissipation_audit(records, beta, tol_disc(cfg))
    kmin, c_ls = certify_trajectory(records, beta)
    gron = gronwall_audit(records, beta, c_ls, cfg["constants"]["c_me"], N, tol=tol["gronwall"], kappas=None)
    t = run.column("t")
    h_q, fisher = run.column("h_rel_q"), run.column("fisher")
    lsi_margin = fisher - h_q / c_ls
    for r, b in zip(records, gron.bound_rhs):
        r.bound_rhs = float(b)
    h_prod = run.column("h_rel")
    rows = []
    for i, r in enumerate(records):
        rows.append({"t": r.t, "diss_lhs": diss.lhs[i], "diss_rhs": diss.rhs[i], "diss_exact": diss.exact_rhs[i],
                     "diss_margin": diss.rhs[i] + diss.tol_disc - diss.lhs[i],
                     "lsi_margin": lsi_margin[i], "gronwall_margin": gron.bound_rhs[i] + tol["gronwall"] - r.e_script,
                     "nonneg_margin": r.e_script + tol["tol_abs"]})
    rate_floor = tol["rate_factor"] / (c_ls * beta)
    summary = {
        "dissipation": {"worst_margin": diss.worst_margin, "violations": diss.violations, "tol_disc": diss.tol_disc,
                        "identity_residual": diss.identity_residual},
        "lsi_chain": {"worst_margin": float(lsi_margin.min() + tol["lsi"]), "violations": int(np.sum(lsi_margin < -tol["lsi"])),
                      "kappa_min": kmin, "c_ls": c_ls},
        "gronwall": {"worst_margin": gron.worst_margin, "violations": gron.violations},
        "decay": {"fitted_rate": gron.decay_rate, "rate_floor": rate_floor, "sharp_rate": gron.predicted_rate,
                  "plain_rate": gron.plain_rate},
        "chaos": {"h_initial": float(h_prod[0]), "h_final": float(h_prod[-1]),
                  "ratio": float(h_prod[-1] / h_prod[0]) if h_prod[0] > 0 else 0.0, "t_final": float(t[-1])},
        "nonnegativity": {"worst_margin": float(min(row["nonneg_margin"] for row in rows))},
    }
    status = {
        "dissipation": diss.violations == 0,
        "lsi_chain": summary["lsi_chain"]["violations"] == 0 and kmin > 0,
        "gronwall": gron.violations == 0,
        "decay": gron.decay_rate >= rate_floor,
        "nonnegativity": summary["nonnegativity"]["worst_margin"] >= 0,
    }
    for k, ok in status.items():
        summary[k]["status"] = "pass" if ok else "fail"
    return summary, rows


def _write_coupled(out, run, rows):
    write_csv(out / "records.csv", list(RECORD_COLUMNS), (r.as_row() for r in run.records))
    write_csv(out / "audit.csv", list(rows[0].keys()), rows)


def recipe_liouville(cfg: ExperimentConfig, out: Path) -> dict:
    run, _ = _coupled(cfg)
    summary, rows = audit_coupled(cfg, run)
    _write_coupled(out, run, rows)
    audit = {k: summary[k] for k in ("dissipation", "lsi_chain", "gronwall")}
    write_json(out / "audit.json", audit)
    failed = [k for k, v in audit.items() if v["status"] != "pass"]
    if failed:
        raise AuditViolation(f"audit failures: {', '.join(failed)}")
    return {"status": "pass", **audit}


def recipe_chaos_report(cfg: ExperimentConfig, out: Path) -> dict:
    run, _ = _coupled(cfg)
    summary, rows = audit_coupled(cfg, run)
    _write_coupled(out, run, rows)
    summary["constants"] = cfg.constants().to_dict()
    failed = [k for k, v in summary.items() if isinstance(v, dict) and v.get("status") == "fail"]
    summary["status"] = "fail" if failed else "pass"
    write_json(out / "summary.json", summary)
    if failed:
        raise AuditViolation(f"audit failures: {', '.join(failed)}")
    return summary


DIAGNOSE_COLUMNS = ("t", "mean_F", "min_F", "riesz_floor", "floor_violations", "o_n", "mean_commutator", "w2", "tv")


def recipe_diagnose(cfg: ExperimentConfig, out: Path, threads: int | None = None) -> dict:
    """Functionals of particle snapshots against the equilibrium (or configured) density.

    Snapshots come from ``out/snapshots`` when present (written by the
    ``particles`` recipe); otherwise an ensemble is generated first.
    """
    snapdir = out / "snapshots"
    if not (snapdir / "index.csv").exists():
        recipe_particles(cfg, out, threads)
    times, snaps = read_snapshots(snapdir)
    eq = equilibrium_of(cfg)
    mu = eq.mu_beta
    spec = cfg.kernel
    consts = cfg.constants()
    v = GridField(mu.grid, mu.grid.centers.copy())
    rows = []
    for t, X in zip(times, snaps):
        N = X.shape[1]
        inside = np.all((X > mu.grid.lo) & (X < mu.grid.hi), axis=1)
        F = modulated_energy_batch(X[inside], mu, spec) if inside.any() else np.array([np.nan])
        if spec.singular:
            floor = riesz_lower_bound(N, mu.sup_norm, spec, consts)
            o_n = error_terms(N, mu, spec, consts).o_n
        else:
            floor, o_n = float("nan"), 0.0
        comm = np.mean([commutator_functional(v, x, mu, spec) for x in X[inside][:16]]) if spec.singular and N > 1 else float("nan")
        try:
            tv = marginal_distances(X, mu, k=1).tv
        except InsufficientSamplesError:
            tv = float("nan")
        rows.append({"t": t, "mean_F": float(np.mean(F)), "min_F": float(np.min(F)), "riesz_floor": floor,
                     "floor_violations": int(np.sum(F < floor)) if np.isfinite(floor) else 0, "o_n": o_n,
                     "mean_commutator": comm, "w2": wasserstein2_to_density(X, mu), "tv": tv})
    write_csv(out / "diagnostics.csv", list(DIAGNOSE_COLUMNS), rows)
    summary = {"snapshots": len(rows), "floor_violations": int(sum(r["floor_violations"] for r in rows)),
               "status": "pass"}
    write_json(out / "summary.json", summary)
    return summary


RECIPES = {
    "equilibrium": recipe_equilibrium,
    "meanfield": recipe_meanfield,
    "particles": recipe_particles,
    "liouville": recipe_liouville,
    "diagnose": recipe_diagnose,
    "chaos-report": recipe_chaos_report,
}


def run_recipe(name: str, cfg: ExperimentConfig, out, threads: int | None = None) -> dict:
    if name not in RECIPES:
        raise ValueError(f"unknown recipe {name!r}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    fn = RECIPES[name]
    if name in ("particles", "diagnose"):
        return fn(cfg, out, threads)
    return fn(cfg, out)
