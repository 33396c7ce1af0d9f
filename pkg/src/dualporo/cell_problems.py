"""Periodic corrector problems on the thin-fracture unit cell.

The unit cell is a Warren-Root cube: a centered matrix cube of edge
1 - delta surrounded by a fracture layer of thickness delta/2 per face.
The correctors solve a Laplace problem in the fracture region with a
no-flux condition on the matrix boundary and periodicity on the cell
boundary; their gradients assemble the upscaled permeability tensor.

Discretization: cell-centered finite differences on the full cell with a
binary coefficient (1 in the fracture, 0 in the matrix) and harmonic face
averaging, so the matrix region enforces the no-flux condition without
boundary-fitted meshing.  The geometry is axis-aligned, so the interface
coincides with grid faces whenever n*delta is an even integer; `snap_delta`
maps a requested delta to the nearest representable value.
"""

import itertools

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, ResolutionError, SolverError

MIN_FRACTURE_CELLS = 8  # cells across the full fracture channel (= n*delta)


class WarrenRootCell:
    """Geometry of the unit periodicity cell with fracture thickness delta."""

    def __init__(self, d, delta):
        if d not in (1, 2, 3):
            raise DomainError(f"dimension must be 1, 2 or 3, got {d}")
        if not (0.0 <= delta < 1.0):
            raise DomainError(f"delta must lie in [0,1), got {delta}")
        self.d = int(d)
        self.delta = float(delta)

    @property
    def ym_measure(self):
        return (1.0 - self.delta) ** self.d

    @property
    def yf_measure(self):
        return 1.0 - self.ym_measure

    def __repr__(self):
        return f"WarrenRootCell(d={self.d}, delta={self.delta})"


def effective_porosity(cell, phi_f):
    """Upscaled porosity phi_f * |Y_f| / |Y_m| (closed form)."""
    if cell.delta >= 1.0:
        raise DomainError("delta must be < 1")
    return phi_f * cell.yf_measure / cell.ym_measure


def snap_delta(delta, n):
    """Snap delta so the fracture half-layer spans an integer cell count.

    Returns (snapped_delta, m) where m = n*delta/2 cells per half layer.
    """
    m = int(round(n * delta / 2.0))
    m = max(m, 1)
    if 2 * m >= n:
        raise ResolutionError(f"delta={delta} leaves no matrix block at n={n}")
    return 2.0 * m / n, m


def fracture_mask(d, n, m):
    """Boolean cell-centered mask of the fracture region (True = fracture)."""
    idx = np.arange(n)
    in_matrix_1d = (idx >= m) & (idx < n - m)
    grids = np.meshgrid(*([in_matrix_1d] * d), indexing="ij")
    in_matrix = np.logical_and.reduce(grids)
    return ~in_matrix


def _face_coefficients(mask, axis):
    """Coefficient on faces between cell i and its +axis periodic neighbor.

    Harmonic average of the binary cell coefficient: 1 only if both cells
    are fracture cells.
    """
    return mask & np.roll(mask, -1, axis=axis)


def _assemble(mask, h):
    """Sparse operator and per-axis face data restricted to fracture cells.

    Returns (A, index_map, face_open) where A is the (negated-divergence)
    operator over fracture cells, scaled by 1/h^2, and face_open[axis] is
    the boolean +axis face coefficient on the full grid.
    """
    d = mask.ndim
    n_cells = mask.sum()
    index = -np.ones(mask.shape, dtype=np.int64)
    index[mask] = np.arange(n_cells)

    rows, cols, vals = [], [], []
    diag = np.zeros(n_cells)
    face_open = []
    for axis in range(d):
        a_face = _face_coefficients(mask, axis)
        face_open.append(a_face)
        i_here = index[a_face]
        i_next = np.roll(index, -1, axis=axis)[a_face]
        np.add.at(diag, i_here, 1.0)
        np.add.at(diag, i_next, 1.0)
        rows.extend([i_here, i_next])
        cols.extend([i_next, i_here])
        vals.extend([-np.ones(i_here.size), -np.ones(i_here.size)])

    rows.append(np.arange(n_cells))
    cols.append(np.arange(n_cells))
    vals.append(diag)
    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_cells, n_cells),
    )
    A = A / h**2
    return A, index, face_open


def _pcg_projected(A, b, tol=1e-12, maxiter=20000):
    """Conjugate gradients on the singular periodic system.

    The constant nullspace is removed by projecting the iterates onto
    mean-zero vectors.  Preconditioner: algebraic multigrid when
    available, otherwise Jacobi.
    """
    n = b.size

    def project(v):
        return v - v.mean()

    try:
        import pyamg

        ml = pyamg.smoothed_aggregation_solver(A.tocsr(), max_coarse=64)
        M = ml.aspreconditioner(cycle="V")
        precond = M.matvec
    except Exception:
        dinv = 1.0 / A.diagonal()
        precond = lambda r: dinv * r

    b = project(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0
    x = np.zeros(n)
    r = b.copy()
    z = project(precond(r))
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Ap = A @ p
        denom = p @ Ap
        if denom <= 0.0:
            raise SolverError("CG breakdown: non-positive curvature",
                              {"iteration": it})
        alpha = rz / denom
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= tol * bnorm:
            return project(x), it
        z = project(precond(r))
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(
        f"CG did not reach tol={tol} in {maxiter} iterations",
        {"residual": float(np.linalg.norm(r) / bnorm), "iterations": maxiter},
    )


class CellProblemSolution:
    """Correctors and the assembled permeability tensor for one cell."""

    def __init__(self, cell, n, delta_snapped, k_f, correctors, mask, K):
        self.cell = cell
        self.n = n
        self.delta_snapped = delta_snapped
        self.k_f = k_f
        self.correctors = correctors  # list of full-grid arrays (NaN in matrix)
        self.mask = mask
        self.K = K

    @property
    def yf_measure(self):
        return 1.0 - (1.0 - self.delta_snapped) ** self.cell.d

    @property
    def ym_measure(self):
        return (1.0 - self.delta_snapped) ** self.cell.d

    def ellipticity_ratio(self, xi):
        """(1/delta) K xi . xi / |xi|^2 for a direction xi."""
        xi = np.asarray(xi, dtype=float)
        return float(xi @ self.K @ xi / (xi @ xi) / self.delta_snapped)


def solve_corrector(cell, j, k_f, n, tol=1e-12, return_mask=False):
    """Solve the periodic corrector for axis j on an n^d grid.

    Returns the mean-zero corrector on the full grid (NaN outside the
    fracture).  The fracture channel must span at least 8 cells.
    """
    if not (0 <= j < cell.d):
        raise DomainError(f"axis index {j} out of range for d={cell.d}")
    delta_s, m = snap_delta(cell.delta, n)
    if 2 * m < MIN_FRACTURE_CELLS:
        raise ResolutionError(
            f"fracture spans {2 * m} cells at n={n}, need >= {MIN_FRACTURE_CELLS}"
        )
    h = 1.0 / n
    mask = fracture_mask(cell.d, n, m)
    A, index, face_open = _assemble(mask, h)

    b = np.zeros(mask.sum())
    a_plus = face_open[j].astype(float)
    a_minus = np.roll(a_plus, 1, axis=j)
    np.add.at(b, index[mask], ((a_plus - a_minus)[mask]) / h)

    x, _ = _pcg_projected(A, b, tol=tol)
    field = np.full(mask.shape, np.nan)
    field[mask] = x
    if return_mask:
        return field, mask
    return field


def effective_perm(cell, k_f, n, tol=1e-12):
    """Solve all correctors and assemble the permeability tensor.

    The tensor entry (i,j) is the face-quadrature energy inner product of
    the corrected gradients, scaled by k_f / |Y_m|; assembly through the
    shared discrete bilinear form makes it symmetric by construction.
    """
    d = cell.d
    delta_s, m = snap_delta(cell.delta, n)
    h = 1.0 / n
    mask = fracture_mask(d, n, m)

    correctors = [solve_corrector(cell, j, k_f, n, tol=tol) for j in range(d)]
    grads = []  # grads[i][axis]: corrected gradient samples on open +axis faces
    face_sets = [_face_coefficients(mask, axis) for axis in range(d)]
    for i in range(d):
        xi = np.where(mask, correctors[i], 0.0)
        comp = []
        for axis in range(d):
            dxi = (np.roll(xi, -1, axis=axis) - xi) / h
            comp.append(dxi[face_sets[axis]] + (1.0 if axis == i else 0.0))
        grads.append(comp)

    ym = (1.0 - delta_s) ** d
    K = np.zeros((d, d))
    for i in range(d):
        for jj in range(i, d):
            val = sum(grads[i][axis] @ grads[jj][axis] for axis in range(d))
            K[i, jj] = K[jj, i] = k_f / ym * val * h**d

    np.linalg.cholesky(K)  # SPD guard
    return CellProblemSolution(cell, n, delta_s, k_f, correctors, mask, K)


def limit_permeability(d, k_f):
    """Asymptotic fracture-network permeability (d-1)/d * k_f."""
    return (d - 1) / d * k_f


def asymptote_study(d, k_f, deltas, n, tol=1e-12):
    """Tabulate K/|Y_f| over a decreasing delta list and fit the residual decay.

    Returns a dict with per-delta rows and the fitted decay exponent of
    the residual tensor norm versus delta.
    """
    deltas = list(deltas)
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise DomainError("delta list must be strictly decreasing")
    k_star = limit_permeability(d, k_f)
    rows = []
    for delta in deltas:
        sol = effective_perm(WarrenRootCell(d, delta), k_f, n, tol=tol)
        scaled = sol.K / sol.yf_measure
        resid = scaled - k_star * np.eye(d)
        rows.append(
            {
                "delta": sol.delta_snapped,
                "n": n,
                "K": sol.K,
                "K_over_Yf": scaled,
                "yf_measure": sol.yf_measure,
                "residual_norm": float(np.linalg.norm(resid)),
            }
        )
    x = np.log([r["delta"] for r in rows])
    y = np.log([max(r["residual_norm"], 1e-300) for r in rows])
    exponent = float(np.polyfit(x, y, 1)[0]) if len(rows) >= 2 else float("nan")
    return {"rows": rows, "k_star": k_star, "decay_exponent": exponent}


def richardson_limit(deltas, values):
    """Polynomial-in-delta Richardson extrapolation of a sequence to delta=0.

    Uses degree min(len-1, 2); the permeability sweep carries visible
    curvature in delta, so two points alone under-shoot the limit.
    """
    deltas = np.asarray(deltas, dtype=float)
    values = np.asarray(values, dtype=float)
    deg = min(len(deltas) - 1, 2)
    return float(np.polyval(np.polyfit(deltas, values, deg), 0.0))
