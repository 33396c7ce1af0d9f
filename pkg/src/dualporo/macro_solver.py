"""Macroscale finite-volume solver in global/complementary-pressure form.

One code path serves both model levels: the thin-fissure model at finite
delta (coefficients: upscaled porosity, cell-problem permeability tensor,
kernel amplitude D_delta, equations divided by d*delta so the limit is
approached with O(1) coefficients) and the fully homogenized limit model
(porosity phi_f, permeability (d-1)/d*k_f, amplitude C_m/d).

The pressure equation is elliptic (no time derivative); each time step
solves it first, then takes a backward-Euler step for the complementary
pressure theta with Newton iteration.  The memory source is treated
implicitly in its newest sample through the split quadrature
coefficient.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from dataclasses import dataclass, field

from . import constitutive as law
from .errors import ConfigError, DomainError, SolverError
from .memory_kernel import KernelQuadrature

EDGES = ("left", "right", "bottom", "top")


@dataclass(frozen=True)
class EffectiveCoefficients:
    """Macroscale coefficient set at level delta or at the limit."""

    phi_eff: float
    K_eff: np.ndarray  # d x d SPD
    D_eff: float
    level: str  # "delta" or "limit"
    delta: float = 0.0

    def __post_init__(self):
        if self.phi_eff <= 0.0:
            raise DomainError("phi_eff must be positive")
        if self.D_eff < 0.0:
            raise DomainError("D_eff must be nonnegative")
        if self.level not in ("delta", "limit"):
            raise DomainError("level must be 'delta' or 'limit'")
        np.linalg.cholesky(np.asarray(self.K_eff))


def delta_level_coefficients(delta, d, phi_f, K_star_delta, D_delta):
    """Assemble the finite-delta coefficient set, rescaled by 1/(d*delta).

    The rescaling mirrors the thin-fissure limit passage: porosity,
    permeability and kernel amplitude all scale like d*delta, so the
    divided system carries O(1) coefficients comparable with the limit
    model.
    """
    scale = d * delta
    ym = (1.0 - delta) ** d
    yf = 1.0 - ym
    phi_delta = phi_f * yf / ym
    return EffectiveCoefficients(
        phi_eff=phi_delta / scale,
        K_eff=np.asarray(K_star_delta) / scale,
        D_eff=D_delta / scale,
        level="delta",
        delta=delta,
    )


def limit_coefficients(d, phi_f, k_f, c_m):
    """Fully homogenized coefficient set: phi_f, (d-1)/d*k_f, C_m/d."""
    return EffectiveCoefficients(
        phi_eff=phi_f,
        K_eff=(d - 1) / d * k_f * np.eye(d),
        D_eff=c_m / d,
        level="limit",
    )


class MacroGrid:
    """Uniform cell-centered rectangle with per-edge boundary tags."""

    def __init__(self, lx, ly, nx, ny, injection_edges=("left",)):
        if lx <= 0 or ly <= 0 or nx < 1 or ny < 1:
            raise DomainError("grid extents and cell counts must be positive")
        bad = set(injection_edges) - set(EDGES)
        if bad:
            raise DomainError(f"unknown edges {bad}; choose from {EDGES}")
        if not injection_edges:
            raise ConfigError("at least one edge must be tagged injection")
        self.lx, self.ly = float(lx), float(ly)
        self.nx, self.ny = int(nx), int(ny)
        self.hx, self.hy = self.lx / self.nx, self.ly / self.ny
        self.injection_edges = tuple(injection_edges)
        self.cell_volume = self.hx * self.hy
        self.n_cells = self.nx * self.ny

    def index(self, ix, iy):
        return iy * self.nx + ix

    def cell_centers(self):
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="xy")


@dataclass
class BoundaryData:
    """Injection-edge values of global and complementary pressure.

    Values may be scalars (applied to every injection edge) or a mapping
    edge -> value for throughflow configurations.
    """

    p_gamma: object
    theta_gamma: object

    def value(self, which, edge):
        raw = self.p_gamma if which == "p" else self.theta_gamma
        if isinstance(raw, dict):
            return float(raw[edge])
        return float(raw)


class MacroState:
    """Cell-centered theta and global pressure plus convolution history."""

    def __init__(self, grid, theta0, theta_cap, s_f0, s_m_match0):
        theta0 = np.asarray(theta0, dtype=float)
        if theta0.ndim == 0:
            theta0 = np.full(grid.n_cells, float(theta0))
        if np.any(theta0 < 0.0) or np.any(theta0 > theta_cap * (1 + 1e-12)):
            raise DomainError("theta0 must lie in [0, theta_star]")
        self.grid = grid
        self.theta = theta0.copy()
        self.theta_cap = float(theta_cap)
        self.p = np.zeros(grid.n_cells)
        self.s_f0 = np.asarray(s_f0) + np.zeros(grid.n_cells)
        self.match0 = np.asarray(s_m_match0) + np.zeros(grid.n_cells)
        self.g_history = [np.zeros(grid.n_cells)]  # matching deviation per step
        self.step_index = 0
        self.max_projection = 0.0

    @property
    def n_completed(self):
        return len(self.g_history) - 1


def _edge_cells(grid, edge):
    ix = np.arange(grid.nx)
    iy = np.arange(grid.ny)
    if edge == "left":
        return grid.index(0, iy), grid.hy, grid.hx
    if edge == "right":
        return grid.index(grid.nx - 1, iy), grid.hy, grid.hx
    if edge == "bottom":
        return grid.index(ix, 0), grid.hx, grid.hy
    return grid.index(ix, grid.ny - 1), grid.hx, grid.hy


def _interior_faces(grid):
    """(left cell, right cell, area/dist, axis) for interior x and y faces."""
    nx, ny = grid.nx, grid.ny
    idx = np.arange(grid.n_cells).reshape(ny, nx)
    fx_l = idx[:, :-1].ravel()
    fx_r = idx[:, 1:].ravel()
    fy_l = idx[:-1, :].ravel()
    fy_r = idx[1:, :].ravel()
    return (fx_l, fx_r, grid.hy / grid.hx), (fy_l, fy_r, grid.hx / grid.hy)


def _harmonic(a, b):
    return 2.0 * a * b / (a + b)


def pressure_solve(coeffs, grid, state, bdata, system, tol=1e-10):
    """Solve the elliptic global-pressure equation; returns the P field.

    Two-point fluxes with K times the harmonic mean of the adjacent total
    mobilities; Dirichlet data on injection edges through half-cell
    transmissibilities, no-flux elsewhere.
    """
    rock_f = system.fracture
    s = law.beta_inverse(rock_f, state.theta)
    _, _, lam_tot = law.mobilities(rock_f, s)
    kxx, kyy = coeffs.K_eff[0, 0], coeffs.K_eff[1, 1]

    (fx_l, fx_r, gx), (fy_l, fy_r, gy) = _interior_faces(grid)
    rows, cols, vals = [], [], []
    rhs = np.zeros(grid.n_cells)
    for (l, r, geom, kk) in ((fx_l, fx_r, gx, kxx), (fy_l, fy_r, gy, kyy)):
        t_face = kk * geom * _harmonic(lam_tot[l], lam_tot[r])
        rows.extend([l, r, l, r])
        cols.extend([l, r, r, l])
        vals.extend([t_face, t_face, -t_face, -t_face])

    for edge in grid.injection_edges:
        cells, area, dist = _edge_cells(grid, edge)
        kk = kxx if edge in ("left", "right") else kyy
        s_b = law.beta_inverse(rock_f, bdata.value("theta", edge))
        _, _, lam_b = law.mobilities(rock_f, s_b)
        t_b = kk * (area / (dist / 2.0)) * _harmonic(lam_tot[cells], np.full(cells.size, lam_b))
        rows.append(cells)
        cols.append(cells)
        vals.append(t_b)
        np.add.at(rhs, cells, t_b * bdata.value("p", edge))

    A = sp.csr_matrix(
        (np.concatenate([np.atleast_1d(v) for v in vals]),
         (np.concatenate([np.atleast_1d(r) for r in rows]),
          np.concatenate([np.atleast_1d(c) for c in cols]))),
        shape=(grid.n_cells, grid.n_cells),
    )
    if A.diagonal().min() <= 0.0:
        raise ConfigError("pressure system is singular; no injection edge touches the grid")
    p = spla.spsolve(A, rhs)
    res = np.abs(A @ p - rhs).max()
    scale = max(np.abs(rhs).max(), np.abs(A.diagonal() * p).max(), 1e-300)
    if res > tol * scale:
        raise SolverError("pressure solve residual too large",
                          {"residual": float(res / scale)})
    state.p = p
    return p


def _upwind(lam_up_l, lam_up_r, dp):
    """Pick the phase-potential upwind mobility for flow along -grad P."""
    return np.where(dp > 0.0, lam_up_l, lam_up_r)


class _SaturationAssembler:
    """Residual/Jacobian assembly for one backward-Euler theta step."""

    def __init__(self, coeffs, grid, state, bdata, system, dt, hist_part, cur_coef):
        self.coeffs = coeffs
        self.grid = grid
        self.state = state
        self.bdata = bdata
        self.system = system
        self.dt = dt
        self.hist_part = hist_part
        self.cur_coef = cur_coef
        self.rock_f = system.fracture
        self.s_old = law.beta_inverse(self.rock_f, state.theta)
        self.faces = _interior_faces(grid)
        self.kxx = coeffs.K_eff[0, 0]
        self.kyy = coeffs.K_eff[1, 1]

    def residual(self, theta, with_jacobian=False, flux_audit=False):
        grid, rock_f = self.grid, self.rock_f
        vol = grid.cell_volume
        s = law.beta_inverse(rock_f, theta)
        lam_w, _, lam_tot = law.mobilities(rock_f, s)
        p = self.state.p

        res = self.coeffs.phi_eff * (s - self.s_old) / self.dt * vol
        rows, cols, vals = [], [], []

        (fx_l, fx_r, gx), (fy_l, fy_r, gy) = self.faces
        boundary_influx = 0.0
        for (l, r, geom, kk) in ((fx_l, fx_r, gx, self.kxx), (fy_l, fy_r, gy, self.kyy)):
            t_diff = kk * geom * 0.5 * (lam_tot[l] + lam_tot[r])
            t_p = kk * geom
            dp = p[l] - p[r]
            lam_up = _upwind(lam_w[l], lam_w[r], dp)
            flux = t_diff * (theta[l] - theta[r]) + lam_up * t_p * dp
            np.add.at(res, l, flux)
            np.add.at(res, r, -flux)
            if with_jacobian:
                rows.extend([l, r, l, r])
                cols.extend([l, r, r, l])
                vals.extend([t_diff, t_diff, -t_diff, -t_diff])

        for edge in grid.injection_edges:
            cells, area, dist = _edge_cells(grid, edge)
            kk = self.kxx if edge in ("left", "right") else self.kyy
            th_b = self.bdata.value("theta", edge)
            p_b = self.bdata.value("p", edge)
            s_b = law.beta_inverse(rock_f, th_b)
            lam_w_b, _, lam_tot_b = law.mobilities(rock_f, s_b)
            geom_b = area / (dist / 2.0)
            t_diff = kk * geom_b * 0.5 * (lam_tot[cells] + lam_tot_b)
            t_p = kk * geom_b
            dp = p[cells] - p_b
            lam_up = np.where(dp > 0.0, lam_w[cells], lam_w_b)
            flux = t_diff * (theta[cells] - th_b) + lam_up * t_p * dp
            np.add.at(res, cells, flux)
            boundary_influx -= float(flux.sum())
            if with_jacobian:
                rows.append(cells)
                cols.append(cells)
                vals.append(t_diff)

        match = law.matching_P(self.system, s)
        g_new = match - self.state.match0
        q_w = self.hist_part + self.cur_coef * g_new
        res -= q_w * vol

        out = {"res": res, "s": s, "g_new": g_new, "q_w": q_w,
               "boundary_influx": boundary_influx}
        if with_jacobian:
            dsdth = 1.0 / np.maximum(law.alpha(rock_f, s), 1e-12)
            diag = self.coeffs.phi_eff * dsdth / self.dt * vol
            diag -= self.cur_coef * law.matching_P_deriv(self.system, s) * dsdth * vol
            rows.append(np.arange(grid.n_cells))
            cols.append(np.arange(grid.n_cells))
            vals.append(diag)
            J = sp.csr_matrix(
                (np.concatenate([np.atleast_1d(v) for v in vals]),
                 (np.concatenate([np.atleast_1d(r) for r in rows]),
                  np.concatenate([np.atleast_1d(c) for c in cols]))),
                shape=(grid.n_cells, grid.n_cells),
            )
            out["jac"] = J
        return out


def saturation_step(coeffs, grid, state, bdata, system, dt, kernel,
                    tol=1e-10, max_newton=60):
    """One implicit saturation step (Newton on theta); mutates state.

    The memory source is split into the known history part and an
    implicit coefficient on the newest matching-saturation sample.  The
    convolution quadrature assumes a uniform time grid, so a failed
    Newton iteration raises rather than silently sub-stepping; shrink dt
    for the whole run instead.
    """
    from .memory_kernel import split_implicit_coefficient, HistoryBuffer

    n_next = state.n_completed + 1
    hist = HistoryBuffer()
    hist._entries = state.g_history  # shared storage; g^0..g^{n}
    if coeffs.D_eff > 0.0:
        hist_part, cur_coef = split_implicit_coefficient(
            kernel, hist, coeffs.D_eff, n_next
        )
    else:
        hist_part, cur_coef = np.zeros(grid.n_cells), 0.0

    asm = _SaturationAssembler(coeffs, grid, state, bdata, system, dt,
                               hist_part, cur_coef)
    theta_star = state.theta_cap
    scale = (coeffs.phi_eff * grid.cell_volume * theta_star / dt
             + np.abs(coeffs.K_eff).max() * theta_star)

    theta = state.theta.copy()
    out = asm.residual(theta, with_jacobian=True)
    res_norm = np.abs(out["res"]).max()
    history = [float(res_norm)]
    for _ in range(max_newton):
        if res_norm <= tol * scale:
            break
        step = spla.spsolve(out["jac"], out["res"])
        lam_damp = 1.0
        for _ in range(10):
            theta_try = theta - lam_damp * step
            out_try = asm.residual(theta_try, with_jacobian=True)
            norm_try = np.abs(out_try["res"]).max()
            if norm_try < res_norm or lam_damp < 1e-3:
                break
            lam_damp *= 0.5
        theta, out, res_norm = theta_try, out_try, norm_try
        history.append(float(res_norm))
    else:
        raise SolverError("saturation Newton failed",
                          {"residual_history": history, "dt": dt})

    violation = max(float((-theta).max()), float((theta - theta_star).max()), 0.0)
    state.max_projection = max(state.max_projection, violation)
    theta = np.clip(theta, 0.0, theta_star)
    state.theta = theta
    state.g_history.append(out["g_new"].copy())
    state.step_index += 1
    state.last_step = {
        "q_w": out["q_w"].copy(),
        "boundary_influx": out["boundary_influx"],
        "s": out["s"].copy(),
        "newton_iters": len(history) - 1,
        "residual": float(res_norm),
    }
    return state


def _grad_seminorm(grid, field):
    """Discrete H1 seminorm (squared) of a cell field with TPFA gradients."""
    (fx_l, fx_r, _), (fy_l, fy_r, _) = _interior_faces(grid)
    gx = (field[fx_r] - field[fx_l]) / grid.hx
    gy = (field[fy_r] - field[fy_l]) / grid.hy
    return float((gx**2).sum() * grid.cell_volume + (gy**2).sum() * grid.cell_volume)


@dataclass
class SimulationResult:
    times: np.ndarray
    s_traj: np.ndarray  # (n_steps+1, n_cells)
    theta_traj: np.ndarray
    p_final: np.ndarray
    diagnostics: dict
    timeseries: list = field(default_factory=list)


def simulate(coeffs, grid, bdata, system, theta0, dt, n_steps,
             s_m0=None, store_trajectory=True):
    """Run the sequential-implicit time loop and collect diagnostics."""
    if dt <= 0.0 or n_steps < 0:
        raise DomainError("dt must be positive and n_steps nonnegative")
    rock_f = system.fracture
    th_star = law.theta_star(rock_f)
    s_f0 = law.beta_inverse(rock_f, np.asarray(theta0) + np.zeros(grid.n_cells))
    match0 = law.matching_P(system, s_f0)
    if s_m0 is not None:
        pcm = law.pc(system.matrix, np.clip(s_m0, 1e-12, 1.0))
        pcf = law.pc(system.fracture, np.clip(s_f0, 1e-12, 1.0))
        if np.abs(pcm - pcf).max() > 1e-8 * max(1.0, np.abs(pcf).max()):
            raise ConfigError("initial matrix saturation is not capillary-consistent")
    state = MacroState(grid, theta0, th_star, s_f0, match0)
    kernel = KernelQuadrature(dt, max(n_steps, 1))

    s_traj = [s_f0.copy()] if store_trajectory else None
    th_traj = [state.theta.copy()] if store_trajectory else None
    timeseries = []
    grad_p_sq = 0.0
    grad_th_sq = 0.0
    source_total = 0.0
    influx_total = 0.0

    mass0 = float(coeffs.phi_eff * s_f0.sum() * grid.cell_volume)
    for step in range(1, n_steps + 1):
        pressure_solve(coeffs, grid, state, bdata, system)
        saturation_step(coeffs, grid, state, bdata, system, dt, kernel)
        if not np.all(np.isfinite(state.theta)):
            raise SolverError("NaN guard tripped", {"step": step})
        info = state.last_step
        grad_p_sq += _grad_seminorm(grid, state.p) * dt
        grad_th_sq += _grad_seminorm(grid, state.theta) * dt
        step_source = float(info["q_w"].sum() * grid.cell_volume)
        source_total += step_source * dt
        influx_total += info["boundary_influx"] * dt
        mass = float(coeffs.phi_eff * info["s"].sum() * grid.cell_volume)
        timeseries.append(
            {
                "t": step * dt,
                "mass": mass,
                "source_total": step_source,
                "grad_P_norm": np.sqrt(_grad_seminorm(grid, state.p)),
                "grad_theta_norm": np.sqrt(_grad_seminorm(grid, state.theta)),
            }
        )
        if store_trajectory:
            s_traj.append(info["s"].copy())
            th_traj.append(state.theta.copy())

    mass_final = (
        float(coeffs.phi_eff * law.beta_inverse(rock_f, state.theta).sum()
              * grid.cell_volume)
    )
    balance_gap = mass_final - mass0 - influx_total - source_total
    balance_scale = max(abs(mass_final - mass0), abs(influx_total), abs(mass0), 1e-300)
    diagnostics = {
        "grad_P_seminorm": float(np.sqrt(grad_p_sq)),
        "grad_theta_seminorm": float(np.sqrt(grad_th_sq)),
        "mass_initial": mass0,
        "mass_final": mass_final,
        "influx_total": influx_total,
        "source_total": source_total,
        "mass_balance_rel": float(abs(balance_gap) / balance_scale),
        "max_projection": state.max_projection,
        "theta_min": float(state.theta.min()),
        "theta_max": float(state.theta.max()),
        "theta_star": th_star,
    }
    return SimulationResult(
        times=np.arange(n_steps + 1) * dt,
        s_traj=np.array(s_traj) if store_trajectory else None,
        theta_traj=np.array(th_traj) if store_trajectory else None,
        p_final=state.p.copy(),
        diagnostics=diagnostics,
        timeseries=timeseries,
    )


def phase_fields(coeffs, state_or_fields, system):
    """Per-cell phase pressures from (theta, P); P_n - P_w = P_c(S_f)."""
    rock_f = system.fracture
    if isinstance(state_or_fields, MacroState):
        theta, p = state_or_fields.theta, state_or_fields.p
    else:
        theta, p = state_or_fields
    s = law.beta_inverse(rock_f, np.asarray(theta))
    p_w = np.empty_like(s)
    p_n = np.empty_like(s)
    for i, (si, pi) in enumerate(zip(np.atleast_1d(s), np.atleast_1d(p))):
        p_w[i], p_n[i] = law.global_pressure_split(rock_f, max(si, 1e-10), pi)
    return p_w, p_n, s


def time_continuity_modulus(result, grid, lags):
    """M(h) = sum over t of <S(t)-S(t-h), theta(t)-theta(t-h)> dx dt."""
    dt = result.times[1] - result.times[0]
    out = []
    for lag in lags:
        ds = result.s_traj[lag:] - result.s_traj[:-lag]
        dth = result.theta_traj[lag:] - result.theta_traj[:-lag]
        m = float((ds * dth).sum() * grid.cell_volume * dt)
        out.append({"h": lag * dt, "M": m})
    return out


def l2_space_time_error(result_a, result_b, grid):
    """||S_a - S_b|| in the discrete L2(Omega x (0,T)) norm."""
    dt = result_a.times[1] - result_a.times[0]
    diff = result_a.s_traj - result_b.s_traj
    return float(np.sqrt((diff**2).sum() * grid.cell_volume * dt))


def delta_sweep(system, grid, bdata, theta0, dt, n_steps, deltas, d=2,
                psi_m=None, sigma_d=None, cell_resolution=256,
                progress=None):
    """Run the finite-delta family plus the limit model; report E(delta).

    All levels share the grid and time step; each finite-delta level is
    rescaled by 1/(d*delta) so coefficients stay O(1).
    """
    from .cell_problems import WarrenRootCell, effective_perm
    from .memory_kernel import kernel_amplitude

    deltas = list(deltas)
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise DomainError("delta list must be strictly decreasing")
    rock_f, rock_m = system.fracture, system.matrix
    if psi_m is None:
        psi_m = default_psi_m(system, bdata, theta0)
    _, c_m = kernel_amplitude(0.0, rock_m.phi, rock_m.k, psi_m, d, sigma_d=sigma_d)

    limit = limit_coefficients(d, rock_f.phi, rock_f.k, c_m)
    limit_run = simulate(limit, grid, bdata, system, theta0, dt, n_steps)
    if progress:
        progress("limit", limit_run.diagnostics)

    rows = []
    runs = {}
    for delta in deltas:
        cell = WarrenRootCell(d, delta)
        sol = effective_perm(cell, rock_f.k, cell_resolution)
        d_delta, _ = kernel_amplitude(delta, rock_m.phi, rock_m.k, psi_m, d,
                                      sigma_d=sigma_d)
        coeffs = delta_level_coefficients(delta, d, rock_f.phi, sol.K[:2, :2],
                                          d_delta)
        run = simulate(coeffs, grid, bdata, system, theta0, dt, n_steps)
        err = l2_space_time_error(run, limit_run, grid)
        rows.append(
            {
                "delta": delta,
                "error_l2": err,
                "grad_P_seminorm": run.diagnostics["grad_P_seminorm"],
                "grad_theta_seminorm": run.diagnostics["grad_theta_seminorm"],
                "mass_balance_rel": run.diagnostics["mass_balance_rel"],
            }
        )
        runs[delta] = run
        if progress:
            progress(f"delta={delta}", run.diagnostics)
    return {"rows": rows, "limit_run": limit_run, "runs": runs,
            "limit_diagnostics": limit_run.diagnostics, "psi_m": psi_m,
            "c_m": c_m}


def default_psi_m(system, bdata, theta0):
    """Matrix diffusivity frozen at the midpoint of the expected excursion."""
    rock_f, rock_m = system.fracture, system.matrix
    th_inj = bdata.value("theta", "left") if "left" in _bdata_edges(bdata) else None
    if th_inj is None:
        th_inj = law.theta_star(rock_f)
    s_inj = law.beta_inverse(rock_f, th_inj)
    s0 = float(np.mean(law.beta_inverse(rock_f, np.asarray(theta0))))
    s_mid = 0.5 * (law.matching_P(system, s0) + law.matching_P(system, s_inj))
    return float(law.alpha(rock_m, s_mid))


def _bdata_edges(bdata):
    if isinstance(bdata.theta_gamma, dict):
        return set(bdata.theta_gamma)
    return set(EDGES)
