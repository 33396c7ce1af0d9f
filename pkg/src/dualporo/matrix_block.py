"""Matrix-block physics on the cube of edge 1 - delta.

Contains the nonlinear imbibition step (implicit Euler, Newton in the
Kirchhoff variable), its linearized version, the screened-Poisson block
problem arising from the Laplace transform of the linear model, and the
sub-grid evaluation of the matrix-fracture source used to validate the
memory-kernel reduction.

Discretization: cell-centered finite differences with Dirichlet data
imposed through ghost values 2*g - u, which keeps the scheme second
order and preserves the discrete maximum principle (the boundary rows
stay diagonally dominant M-matrix rows).
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import constitutive as law
from .errors import DomainError, SolverError
from .memory_kernel import HistoryBuffer, KernelQuadrature, kernel_amplitude


class BlockProblem:
    """Geometry, rock data and linearization coefficient for one block."""

    def __init__(self, d, delta, rock_m, psi_m, n_sub=32):
        if d not in (1, 2, 3):
            raise DomainError(f"dimension must be 1, 2 or 3, got {d}")
        if not (0.0 < delta < 1.0):
            raise DomainError(f"delta must lie in (0,1), got {delta}")
        if psi_m <= 0.0:
            raise DomainError(f"psi_m must be positive, got {psi_m}")
        if rock_m.medium != "matrix":
            raise DomainError("BlockProblem needs matrix rock parameters")
        self.d = int(d)
        self.delta = float(delta)
        self.rock = rock_m
        self.psi_m = float(psi_m)
        self.n_sub = int(n_sub)
        self.edge = 1.0 - self.delta
        self.h = self.edge / self.n_sub

    @property
    def ym_measure(self):
        return self.edge**self.d

    @property
    def diffusion(self):
        """delta^2 * k_m (the nonlinear-problem diffusion scale)."""
        return self.delta**2 * self.rock.k

    def laplacian(self):
        """Negated Dirichlet-ghost Laplacian and per-cell boundary face count.

        The matrix realizes -Delta with ghost value 2*g - u; the g part
        enters the right-hand side as (2/h^2) * bfaces * g.
        """
        n, d, h = self.n_sub, self.d, self.h
        one = sp.identity(n, format="csr")
        main = np.full(n, 2.0)
        lap1 = sp.diags(
            [main, -np.ones(n - 1), -np.ones(n - 1)], [0, -1, 1], format="lil"
        )
        lap1[0, 0] = 3.0
        lap1[-1, -1] = 3.0
        lap1 = (lap1 / h**2).tocsr()
        mats = []
        for axis in range(d):
            factors = [one] * d
            factors[axis] = lap1
            term = factors[0]
            for f in factors[1:]:
                term = sp.kron(term, f, format="csr")
            mats.append(term)
        lap = sum(mats)
        bf1 = np.zeros(n)
        bf1[0] = bf1[-1] = 1.0
        grids = np.meshgrid(*([bf1] * d), indexing="ij")
        bfaces = np.add.reduce(grids).ravel()
        return lap.tocsr(), bfaces


class BlockState:
    """Cell-centered matrix saturation on the block sub-grid."""

    def __init__(self, problem, s0, t=0.0, trace=None):
        s0 = np.asarray(s0, dtype=float)
        if s0.ndim == 0:
            s0 = np.full(problem.n_sub**problem.d, float(s0))
        if np.any(s0 < 0.0) or np.any(s0 > 1.0):
            raise DomainError("matrix saturation must lie in [0,1]")
        self.problem = problem
        self.s = s0
        self.t = float(t)
        self.trace = trace

    @property
    def mean_saturation(self):
        return float(self.s.mean())


def _check_step_args(dt, g_b):
    if dt <= 0.0:
        raise DomainError(f"dt must be positive, got {dt}")
    if not (0.0 <= g_b <= 1.0):
        raise DomainError(f"boundary trace must lie in [0,1], got {g_b}")


def imbibition_step_linear(problem, state, g_b, dt, _cache={}):
    """One implicit Euler step of the linearized block diffusion."""
    _check_step_args(dt, g_b)
    key = (id(problem), problem.n_sub, problem.psi_m, dt)
    if key not in _cache:
        lap, bfaces = problem.laplacian()
        diff = problem.diffusion * problem.psi_m
        A = (problem.rock.phi / dt) * sp.identity(lap.shape[0], format="csr") + diff * lap
        _cache.clear()
        _cache[key] = (spla.factorized(A.tocsc()), bfaces, diff)
    solve, bfaces, diff = _cache[key]
    rhs = (problem.rock.phi / dt) * state.s + diff * (2.0 / problem.h**2) * bfaces * g_b
    s_new = solve(rhs)
    return BlockState(problem, np.clip(s_new, 0.0, 1.0), state.t + dt, trace=g_b)


def imbibition_step_nonlinear(
    problem, state, g_b, dt, tol=1e-11, max_newton=40
):
    """One implicit Euler step of the nonlinear imbibition equation.

    Newton iteration on the Kirchhoff variable b = beta_m(S):
        phi*(Binv(b) - S_old)/dt - delta^2*k_m*Lap(b) = 0,
    with Dirichlet data b = beta_m(g_b) on the block boundary.
    """
    _check_step_args(dt, g_b)
    rock = problem.rock
    lap, bfaces = problem.laplacian()
    diff = problem.diffusion
    b_bdry = law.beta(rock, g_b)
    b = law.beta(rock, np.clip(state.s, 0.0, 1.0))
    th_star = law.theta_star(rock)
    scale = rock.phi / dt + diff * 2.0 * problem.d / problem.h**2 * th_star

    def residual(bv):
        s = law.beta_inverse(rock, bv)
        return (
            rock.phi * (s - state.s) / dt
            + diff * (lap @ bv)
            - diff * (2.0 / problem.h**2) * bfaces * b_bdry
        ), s

    res, s = residual(b)
    history = [float(np.abs(res).max())]
    for _ in range(max_newton):
        if history[-1] <= tol * scale:
            break
        dsdb = 1.0 / np.maximum(law.alpha(rock, s), 1e-12)
        J = sp.diags(rock.phi * dsdb / dt) + diff * lap
        step = spla.spsolve(J.tocsr(), res)
        lam = 1.0
        for _ in range(12):
            b_try = np.clip(b - lam * step, 0.0, th_star)
            res_try, s_try = residual(b_try)
            if np.abs(res_try).max() < history[-1]:
                break
            lam *= 0.5
        b, res, s = b_try, res_try, s_try
        history.append(float(np.abs(res).max()))
    else:
        raise SolverError(
            "Newton failed on the imbibition step", {"residual_history": history}
        )
    return BlockState(problem, np.clip(s, 0.0, 1.0), state.t + dt, trace=g_b)


def laplace_block_integral(problem, lam, tol=1e-12):
    """Volume integral of the screened block solution at frequency lam.

    Solves lam*phi*u - delta^2*k_m*psi_m*Lap(u) = 0 with u = 1 on the
    block boundary and returns the discrete volume integral h^d * sum(u).
    """
    if lam <= 0.0:
        raise DomainError(f"Laplace frequency must be positive, got {lam}")
    lap, bfaces = problem.laplacian()
    diff = problem.diffusion * problem.psi_m
    A = lam * problem.rock.phi * sp.identity(lap.shape[0], format="csr") + diff * lap
    rhs = diff * (2.0 / problem.h**2) * bfaces
    u, info = spla.cg(A.tocsr(), rhs, rtol=tol, atol=0.0, maxiter=20000)
    if info != 0:
        raise SolverError("CG failed on the block screened-Poisson solve",
                          {"info": info})
    return float(problem.h**problem.d * u.sum()), u


def _slab_deficit(t, a, length):
    """1D slab integral f(t) = int of the cooling solution, per axis.

    Slab of the given length, value 0 at both ends, initial value 1;
    eigenseries for moderate times, boundary-layer form 4*sqrt(a*t/pi)
    when the layers are far from interacting.
    """
    t = np.asarray(t, dtype=float)
    x = a * t / length**2
    out = np.empty_like(x)
    small = x <= 0.01
    out[small] = length - 4.0 * np.sqrt(a * t[small] / np.pi)
    if np.any(~small):
        xs = x[~small]
        kmax = int(np.ceil(np.sqrt(45.0 / (np.pi**2 * xs.min())))) | 1
        k = np.arange(1, kmax + 1, 2, dtype=float)
        terms = (8.0 * length / (np.pi**2 * k[:, None] ** 2)) * np.exp(
            -np.pi**2 * k[:, None] ** 2 * xs[None, :]
        )
        out[~small] = terms.sum(axis=0)
    return out


def laplace_block_integral_series(problem, lam):
    """Continuum eigenseries value of the block volume integral.

    Uses the product structure of the cube: the Laplace-domain integral
    equals L^d - lam * int_0^inf exp(-lam*t) * f(t)^d dt with f the 1D
    slab deficit; evaluated by adaptive quadrature.
    """
    if lam <= 0.0:
        raise DomainError(f"Laplace frequency must be positive, got {lam}")
    return _series_value(problem, lam)


def _series_value(problem, lam):
    from scipy import integrate

    L = problem.edge
    a = problem.diffusion * problem.psi_m / problem.rock.phi
    d = problem.d

    def integrand(t):
        return np.exp(-lam * t) * (L**d - _slab_deficit(np.atleast_1d(t), a, L)[0] ** d)

    t_cut = 50.0 / lam
    val, _ = integrate.quad(
        integrand, 0.0, t_cut, epsabs=1e-12, epsrel=1e-11, limit=400,
    )
    return float(lam * val)


def laplace_block_integral_discrete_series(problem, lam):
    """Eigen-decomposition value of the discrete block volume integral.

    Expands the discrete solution in the tensorized eigenbasis of the 1D
    ghost-Dirichlet operator; independent cross-check of the sparse solve
    on the identical mesh.
    """
    if lam <= 0.0:
        raise DomainError(f"Laplace frequency must be positive, got {lam}")
    n, d, h = problem.n_sub, problem.d, problem.h
    main = np.full(n, 2.0)
    main[0] = main[-1] = 3.0
    lap1 = (
        np.diag(main) - np.diag(np.ones(n - 1), 1) - np.diag(np.ones(n - 1), -1)
    ) / h**2
    mu, vecs = np.linalg.eigh(lap1)
    c = vecs.sum(axis=0)  # projections of the constant vector
    diff = problem.diffusion * problem.psi_m
    phi = problem.rock.phi
    shape = (n,) * d
    mu_sum = np.zeros(shape)
    c_sq = np.ones(shape)
    for axis in range(d):
        expand = [None] * d
        expand[axis] = slice(None)
        mu_sum = mu_sum + mu[tuple(expand)]
        c_sq = c_sq * (c**2)[tuple(expand)]
    v_int = (lam * phi * c_sq / (lam * phi + diff * mu_sum)).sum()
    return float(h**d * (n**d - v_int))


def laplace_block_integral_1d_exact(problem, lam):
    """Closed-form 1D value (2/mu)*tanh(mu*L/2) of the block integral."""
    if problem.d != 1:
        raise DomainError("closed form applies to d=1 only")
    mu = np.sqrt(lam * problem.rock.phi / (problem.diffusion * problem.psi_m))
    return float(2.0 / mu * np.tanh(mu * problem.edge / 2.0))


def block_asymptote_study(d, rock_m, psi_m, deltas, lams, n_sub=32, sigma_d=None,
                          use_series=True):
    """Ratio of the block integral to its thin-fissure asymptote.

    For each (delta, lambda) returns the integral and the ratio
    r = integral / (sigma_d * delta * sqrt(k*psi/(phi*lambda))); the
    asymptote predicts r -> 1 as delta -> 0.
    """
    deltas = list(deltas)
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise DomainError("delta list must be strictly decreasing")
    if sigma_d is None:
        sigma_d = 2.0 * d
    rows = []
    for delta in deltas:
        problem = BlockProblem(d, delta, rock_m, psi_m, n_sub=n_sub)
        for lam in lams:
            if use_series:
                integral = _series_value(problem, lam)
            else:
                integral, _ = laplace_block_integral(problem, lam)
            asym = sigma_d * delta * np.sqrt(
                rock_m.k * psi_m / (rock_m.phi * lam)
            )
            rows.append(
                {
                    "delta": delta,
                    "lambda": lam,
                    "integral": integral,
                    "ratio": integral / asym,
                }
            )
    return rows


def source_from_subgrid(problem, trace, dt, n_t):
    """Matrix-fracture wetting source from a resolved sub-grid run.

    `trace` gives the boundary saturation at steps 0..n_t; the initial
    block saturation is trace[0].  Returns the per-step source
    Q_w = -phi_m * d(mean S)/dt (and Q_n = -Q_w).
    """
    trace = np.asarray(trace, dtype=float)
    if trace.size != n_t + 1:
        raise DomainError("trace must have n_t + 1 samples")
    state = BlockState(problem, trace[0])
    q_w = np.zeros(n_t)
    mean_prev = state.mean_saturation
    for step in range(1, n_t + 1):
        state = imbibition_step_linear(problem, state, trace[step], dt)
        mean_new = state.mean_saturation
        q_w[step - 1] = -problem.rock.phi * (mean_new - mean_prev) / dt
        mean_prev = mean_new
    return q_w, -q_w


def source_from_kernel(problem, trace, dt, n_t, sigma_d=None):
    """Memory-kernel source for the same trace, for reduction validation."""
    trace = np.asarray(trace, dtype=float)
    if trace.size != n_t + 1:
        raise DomainError("trace must have n_t + 1 samples")
    d_delta, _ = kernel_amplitude(
        problem.delta, problem.rock.phi, problem.rock.k, problem.psi_m,
        problem.d, sigma_d=sigma_d,
    )
    quad = KernelQuadrature(dt, n_t)
    hist = HistoryBuffer()
    from .memory_kernel import memory_source

    q = np.zeros(n_t)
    for step in range(1, n_t + 1):
        hist.append(trace[step] - trace[0])
        q[step - 1] = memory_source(quad, hist, d_delta, step)
    return q
