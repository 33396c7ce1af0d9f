"""Experiment runner: dispatch, output files, and metrics.

Every experiment writes to one output directory: an ``inputs.json`` echo
of the raw configuration, its declared CSV products, and a
``metrics.json`` with named scalars, per-check pass/fail flags, the
config hash, and wall-clock time.  All files are written atomically
(temp file + rename) so a killed run never leaves a truncated product.
"""

import json
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from . import constitutive as law
from . import macro_solver as ms
from .config import ExperimentConfig, validate_config
from .errors import ConfigError


@dataclass
class MetricsRecord:
    experiment: str
    input_hash: str
    metrics: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0

    @property
    def all_pass(self):
        return all(self.flags.values())


def _fmt(x):
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def write_csv(path, header, rows, preamble=None):
    lines = []
    if preamble:
        lines.append(preamble)
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    atomic_write(path, "\n".join(lines) + "\n")


def _write_metrics(out_dir, record):
    atomic_write(os.path.join(out_dir, "metrics.json"),
                 json.dumps(asdict(record), indent=2, default=float) + "\n")


def _echo_inputs(out_dir, cfg):
    atomic_write(os.path.join(out_dir, "inputs.json"),
                 json.dumps(cfg.raw, indent=2, sort_keys=True) + "\n")


def run(cfg, out_dir, workers=1):
    """Dispatch a validated config; returns the MetricsRecord."""
    if not isinstance(cfg, ExperimentConfig):
        cfg = validate_config(cfg)
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.perf_counter()
    _echo_inputs(out_dir, cfg)
    fn = _DISPATCH[cfg.experiment]
    metrics, flags = fn(cfg, out_dir, workers)
    record = MetricsRecord(
        experiment=cfg.experiment,
        input_hash=cfg.input_hash(),
        metrics=metrics,
        flags=flags,
        wall_clock_s=time.perf_counter() - t0,
    )
    _write_metrics(out_dir, record)
    return record


# ---------------------------------------------------------------- cell-perm

def _run_cell_perm(cfg, out_dir, workers):
    from .cell_problems import (WarrenRootCell, effective_perm,
                                limit_permeability, richardson_limit)

    sec = cfg["cell"]
    d, n, kf = sec["d"], sec["n"], sec["kf"]
    deltas = sorted(sec["deltas"], reverse=True)
    header = ["delta", "n", "K11", "K12", "K22"]
    if d == 3:
        header.append("K33")
    header += ["Yf_measure", "K11_over_Yf"]

    def one(delta):
        cell = WarrenRootCell(d, delta)
        sol = effective_perm(cell, kf, n)
        return cell, sol

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        sols = list(pool.map(one, deltas))

    rows, normed, snapped = [], [], []
    for cell, sol in sols:
        yf = 1.0 - (1.0 - sol.delta_snapped) ** d
        row = [sol.delta_snapped, n, sol.K[0, 0], sol.K[0, 1], sol.K[1, 1]]
        if d == 3:
            row.append(sol.K[2, 2])
        row += [yf, sol.K[0, 0] / yf]
        rows.append(row)
        normed.append(sol.K[0, 0] / yf)
        snapped.append(sol.delta_snapped)
    write_csv(os.path.join(out_dir, "cellperm.csv"), header, rows)

    k_lim = limit_permeability(d, kf)
    extrap = richardson_limit(snapped, normed)
    offdiag = max(abs(r[3]) for r in rows)
    metrics = {
        "extrapolated_K11_over_Yf": extrap,
        "limit_value": k_lim,
        "rel_gap": abs(extrap - k_lim) / k_lim,
        "max_offdiag": offdiag,
    }
    flags = {
        "limit_within_2pct": abs(extrap - k_lim) <= 0.02 * k_lim,
        "offdiag_small": offdiag <= 1e-8 * max(r[2] for r in rows),
        "normed_decreasing": all(a > b for a, b in zip(normed, normed[1:])),
    }
    return metrics, flags


# ---------------------------------------------------------- block-asymptotics

def _run_block_asym(cfg, out_dir, workers):
    from .matrix_block import block_asymptote_study

    sec = cfg["block"]
    rows_out = block_asymptote_study(
        sec["d"], cfg.system.matrix, _psi_m(cfg), sorted(sec["deltas"], reverse=True),
        sec["lambdas"], n_sub=sec["n_sub"],
        sigma_d=cfg["model"]["sigma_d"], use_series=sec["use_series"],
    )
    write_csv(os.path.join(out_dir, "block_asym.csv"),
              ["delta", "lambda", "integral", "ratio"],
              [[r["delta"], r["lambda"], r["integral"], r["ratio"]] for r in rows_out])

    by_lam = {}
    for r in rows_out:
        by_lam.setdefault(r["lambda"], []).append((r["delta"], r["ratio"]))
    gaps_inner = [abs(seq[-1][1] - 1.0) for seq in by_lam.values()]
    metrics = {"max_gap_smallest_delta": max(gaps_inner),
               "n_rows": len(rows_out)}
    flags = {
        "ratio_approaches_one": all(
            abs(seq[-1][1] - 1.0) < abs(seq[0][1] - 1.0) for seq in by_lam.values()
        ),
    }
    return metrics, flags


# --------------------------------------------------------------- kernel-check

def _run_kernel_check(cfg, out_dir, workers):
    from .memory_kernel import KernelQuadrature, HistoryBuffer, memory_source

    def max_rel_error(dt, case):
        # the error is measured away from t = 0, where the exact value
        # vanishes and any finite scheme has O(1) relative error
        n = int(round(1.0 / dt))
        quad = KernelQuadrature(dt, n)
        hist = HistoryBuffer()
        errs = []
        for step in range(1, n + 1):
            t = step * dt
            hist.append(t if case == "linear" else t * t)
            got = memory_source(quad, hist, 1.0, step)
            exact = -2.0 * np.sqrt(t) if case == "linear" else -(8.0 / 3.0) * t**1.5
            errs.append(abs(got - exact) / abs(exact))
        return max(errs[n // 2:]), errs[-1]

    dts = sorted(cfg["kernel"]["dts"], reverse=True)
    rows, metrics, final_by_case = [], {}, {"linear": [], "quadratic": []}
    for case in ("linear", "quadratic"):
        for dt in dts:
            err, final = max_rel_error(dt, case)
            final_by_case[case].append(final)
            rows.append([dt, case, err, np.nan])

    # observed order from successive final-time errors of the quadratic case
    orders = {}
    for case in ("linear", "quadratic"):
        e = np.array(final_by_case[case])
        with np.errstate(divide="ignore", invalid="ignore"):
            p = np.log(e[:-1] / e[1:]) / np.log(2.0)
        orders[case] = (float(np.min(p)) if np.all(np.isfinite(p)) else np.nan)
    out_rows = []
    for row in rows:
        dt, case, err, _ = row
        out_rows.append([dt, case, err, orders[case]])
    write_csv(os.path.join(out_dir, "kernel_check.csv"),
              ["dt", "test_case", "max_rel_error", "observed_order"], out_rows)

    lin_max = max(r[2] for r in out_rows if r[1] == "linear")
    metrics = {
        "linear_max_rel_error": lin_max,
        "quadratic_order": orders["quadratic"],
    }
    flags = {"linear_exact": lin_max <= 1e-13,
             "quadratic_order_ok": orders["quadratic"] >= 1.4}
    quad_finals = dict(zip(dts, final_by_case["quadratic"]))
    if 1e-3 in quad_finals:
        metrics["quadratic_final_err_dt_1e-3"] = quad_finals[1e-3]
        flags["quadratic_small"] = quad_finals[1e-3] <= 1e-3
    return metrics, flags


# ------------------------------------------------------------------ simulate

def _setup_macro(cfg):
    g = cfg["grid"]
    grid = ms.MacroGrid(g["lx"], g["ly"], g["nx"], g["ny"],
                        injection_edges=tuple(g["injection_edges"]))
    b = cfg["boundary"]
    bdata = ms.BoundaryData(p_gamma=b["p_gamma"], theta_gamma=b["theta_gamma"])
    theta0 = float(law.beta(cfg.system.fracture, cfg["initial"]["s_f0"]))
    return grid, bdata, theta0


def _psi_m(cfg):
    if cfg["model"]["psi_m"] is not None:
        return float(cfg["model"]["psi_m"])
    grid, bdata, theta0 = _setup_macro(cfg)
    return ms.default_psi_m(cfg.system, bdata, theta0)


def _coefficients(cfg):
    from .cell_problems import WarrenRootCell, effective_perm
    from .memory_kernel import kernel_amplitude

    m = cfg["model"]
    d = m["d"]
    rock_f, rock_m = cfg.system.fracture, cfg.system.matrix
    psi_m = _psi_m(cfg)
    _, c_m = kernel_amplitude(0.0, rock_m.phi, rock_m.k, psi_m, d,
                              sigma_d=m["sigma_d"])
    if m["level"] == "limit":
        return ms.limit_coefficients(d, rock_f.phi, rock_f.k, c_m)
    delta = m["delta"]
    cell = WarrenRootCell(d, delta)
    sol = effective_perm(cell, rock_f.k, m["cell_resolution"])
    d_delta, _ = kernel_amplitude(delta, rock_m.phi, rock_m.k, psi_m, d,
                                  sigma_d=m["sigma_d"])
    return ms.delta_level_coefficients(delta, d, rock_f.phi, sol.K[:2, :2], d_delta)


def _write_run_outputs(out_dir, grid, result, snapshot_every):
    rows = [[ts["t"], ts["mass"], ts["source_total"],
             ts["grad_P_norm"], ts["grad_theta_norm"]] for ts in result.timeseries]
    write_csv(os.path.join(out_dir, "timeseries.csv"),
              ["t", "mass", "source_total", "grad_P_norm", "grad_theta_norm"], rows)
    n_steps = len(result.times) - 1
    for step in range(0, n_steps + 1, snapshot_every):
        s = result.s_traj[step].reshape(grid.ny, grid.nx)
        body = "\n".join(",".join(_fmt(v) for v in row) for row in s)
        atomic_write(
            os.path.join(out_dir, "snapshots", f"S_f_{step}.csv"),
            f"# {grid.nx},{grid.ny},{_fmt(result.times[step])}\n" + body + "\n",
        )


def _run_simulate(cfg, out_dir, workers):
    grid, bdata, theta0 = _setup_macro(cfg)
    coeffs = _coefficients(cfg)
    t = cfg["time"]
    result = ms.simulate(coeffs, grid, bdata, cfg.system, theta0,
                         t["dt"], t["nsteps"])
    snap = max(1, t["nsteps"] // 10) if t["nsteps"] else 1
    _write_run_outputs(out_dir, grid, result, snap)
    d = result.diagnostics
    metrics = dict(d)
    th_star = d["theta_star"]
    flags = {
        "mass_balance": d["mass_balance_rel"] <= 1e-8,
        "theta_bounds": (d["theta_min"] >= 0.0 and d["theta_max"] <= th_star
                         and d["max_projection"] <= 1e-8 * th_star),
    }
    return metrics, flags


# ---------------------------------------------------------------- delta-sweep

def _run_delta_sweep(cfg, out_dir, workers):
    from .cell_problems import WarrenRootCell, effective_perm
    from .memory_kernel import kernel_amplitude

    grid, bdata, theta0 = _setup_macro(cfg)
    system = cfg.system
    t, m = cfg["time"], cfg["model"]
    d = m["d"]
    deltas = sorted(cfg["sweep"]["deltas"], reverse=True)
    psi_m = _psi_m(cfg)
    rock_f, rock_m = system.fracture, system.matrix
    _, c_m = kernel_amplitude(0.0, rock_m.phi, rock_m.k, psi_m, d,
                              sigma_d=m["sigma_d"])

    snap = max(1, t["nsteps"] // 10) if t["nsteps"] else 1
    limit = ms.limit_coefficients(d, rock_f.phi, rock_f.k, c_m)
    limit_run = ms.simulate(limit, grid, bdata, system, theta0, t["dt"], t["nsteps"])
    _write_run_outputs(os.path.join(out_dir, "limit"), grid, limit_run, snap)

    def one(delta):
        cell = WarrenRootCell(d, delta)
        sol = effective_perm(cell, rock_f.k, m["cell_resolution"])
        d_delta, _ = kernel_amplitude(delta, rock_m.phi, rock_m.k, psi_m, d,
                                      sigma_d=m["sigma_d"])
        co = ms.delta_level_coefficients(delta, d, rock_f.phi, sol.K[:2, :2], d_delta)
        run_ = ms.simulate(co, grid, bdata, system, theta0, t["dt"], t["nsteps"])
        _write_run_outputs(os.path.join(out_dir, f"delta_{delta:g}"), grid, run_, snap)
        return delta, run_

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        runs = list(pool.map(one, deltas))

    table = []
    for delta, run_ in runs:
        table.append({
            "delta": delta,
            "error_l2": ms.l2_space_time_error(run_, limit_run, grid),
            "grad_P_seminorm": run_.diagnostics["grad_P_seminorm"],
            "grad_theta_seminorm": run_.diagnostics["grad_theta_seminorm"],
            "mass_balance_rel": run_.diagnostics["mass_balance_rel"],
        })
    errors = [row["error_l2"] for row in table]
    lim_d = limit_run.diagnostics
    ratios = []
    for row in table:
        ratios.append(row["grad_P_seminorm"] / lim_d["grad_P_seminorm"])
        ratios.append(row["grad_theta_seminorm"] / lim_d["grad_theta_seminorm"])
    metrics = {
        "error_table": table,
        "limit_diagnostics": lim_d,
        "psi_m": psi_m,
        "c_m": c_m,
        "grad_ratio_max": max(ratios),
        "grad_ratio_min": min(ratios),
    }
    flags = {
        "error_decreasing": all(a > b for a, b in zip(errors, errors[1:])),
        "grad_ratios_bounded": max(ratios) <= 2.0 and min(ratios) >= 0.5,
        "mass_balance": all(row["mass_balance_rel"] <= 1e-8 for row in table)
        and lim_d["mass_balance_rel"] <= 1e-8,
    }
    return metrics, flags


# ------------------------------------------------------------ subgrid-compare

def _run_subgrid_compare(cfg, out_dir, workers):
    from .matrix_block import (BlockProblem, source_from_kernel,
                               source_from_subgrid)

    sec = cfg["subgrid"]
    rock_m = cfg.system.matrix
    if cfg["model"]["psi_m"] is not None:
        psi_m = float(cfg["model"]["psi_m"])
    else:
        # midpoint of this experiment's own trace excursion
        psi_m = float(law.alpha(rock_m, 0.5 * (sec["s_start"] + sec["s_end"])))
    dt, n_t = sec["dt"], sec["nsteps"]
    tgrid = np.arange(n_t + 1) * dt
    trace = sec["s_start"] + (sec["s_end"] - sec["s_start"]) * np.clip(
        tgrid / sec["t_ramp"], 0.0, 1.0)
    deltas = sorted(sec["deltas"], reverse=True)

    def one(delta):
        problem = BlockProblem(3, delta, rock_m, psi_m, n_sub=sec["n_sub"])
        q_sub, _ = source_from_subgrid(problem, trace, dt, n_t)
        q_ker = source_from_kernel(problem, trace, dt, n_t,
                                   sigma_d=cfg["model"]["sigma_d"])
        return delta, q_sub, q_ker

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(one, deltas))

    discrepancies = []
    for delta, q_sub, q_ker in results:
        rows = [[(j + 1) * dt, q_sub[j], q_ker[j], abs(q_sub[j] - q_ker[j])]
                for j in range(n_t)]
        write_csv(os.path.join(out_dir, f"delta_{delta:g}", "source_compare.csv"),
                  ["t", "Q_subgrid", "Q_kernel", "abs_diff"], rows)
        num = np.sqrt(np.sum((q_sub - q_ker) ** 2) * dt)
        den = np.sqrt(np.sum(q_sub**2) * dt)
        discrepancies.append(num / den if den > 0 else 0.0)

    metrics = {"deltas": deltas,
               "rel_l2_discrepancy": [float(x) for x in discrepancies],
               "psi_m": psi_m}
    flags = {"discrepancy_decreasing": all(
        a > b for a, b in zip(discrepancies, discrepancies[1:]))}
    return metrics, flags


_DISPATCH = {
    "cell-perm": _run_cell_perm,
    "block-asymptotics": _run_block_asym,
    "kernel-check": _run_kernel_check,
    "simulate": _run_simulate,
    "delta-sweep": _run_delta_sweep,
    "subgrid-compare": _run_subgrid_compare,
}
