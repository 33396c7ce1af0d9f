import numpy as np
import pytest

from dualporo import cell_problems as cp
from dualporo.errors import DomainError, ResolutionError


def test_cell_measures():
    cell = cp.WarrenRootCell(3, 0.1)
    assert np.isclose(cell.ym_measure, 0.9**3)
    assert np.isclose(cell.yf_measure, 1.0 - 0.9**3)
    with pytest.raises(DomainError):
        cp.WarrenRootCell(3, 1.5)


def test_effective_porosity_leading_order():
    # phi_eff = phi_f * |Y_f|/|Y_m| = d*delta*phi_f + O(delta^2)
    phi_f = 0.2
    for d in (2, 3):
        for delta in (1e-3, 1e-4):
            cell = cp.WarrenRootCell(d, delta)
            val = cp.effective_porosity(cell, phi_f)
            assert abs(val - d * delta * phi_f) < 5 * d * delta**2 * phi_f


def test_snap_delta():
    snapped, m = cp.snap_delta(0.1, 256)
    assert m == 13 and snapped == 26 / 256
    with pytest.raises(ResolutionError):
        cp.snap_delta(0.9, 4)  # no matrix block left
    with pytest.raises(ResolutionError):
        # fracture channel would span fewer than 8 cells
        cp.effective_perm(cp.WarrenRootCell(2, 0.05), 1.0, 128)


def test_corrector_solves_discrete_system():
    cell = cp.WarrenRootCell(2, 0.2)
    n = 64
    field = cp.solve_corrector(cell, 0, 1.0, n)
    assert field.shape == (n, n)
    mask = ~np.isnan(field)
    # mean-zero over the fracture region
    assert abs(field[mask].mean()) < 1e-10


def test_effective_perm_symmetry_and_spd():
    cell = cp.WarrenRootCell(2, 0.2)
    sol = cp.effective_perm(cell, 1.0, 128)
    K = sol.K
    assert abs(K[0, 0] - K[1, 1]) < 1e-12 * K[0, 0]
    assert abs(K[0, 1] - K[1, 0]) < 1e-14
    assert abs(K[0, 1]) < 1e-10 * K[0, 0]
    np.linalg.cholesky(K)


def test_permeability_scales_linearly_with_kf():
    cell = cp.WarrenRootCell(2, 0.2)
    k1 = cp.effective_perm(cell, 1.0, 64).K
    k3 = cp.effective_perm(cell, 3.0, 64).K
    assert np.allclose(k3, 3.0 * k1, rtol=1e-12)


def test_effective_perm_regression():
    # frozen from a verified run of this solver (grid-converged to ~4e-4)
    cell = cp.WarrenRootCell(2, 0.1)
    sol = cp.effective_perm(cell, 1.0, 256)
    yf = 1.0 - (1.0 - sol.delta_snapped) ** 2
    assert sol.delta_snapped == 0.1015625
    assert abs(sol.K[0, 0] / yf - 0.6712446678805721) < 1e-12


def test_grid_convergence_of_normalized_permeability():
    # same physical delta on two grids; values approach each other
    delta = 12 / 128  # exactly representable at n = 128 and 256
    vals = []
    for n in (128, 256):
        cell = cp.WarrenRootCell(2, delta)
        sol = cp.effective_perm(cell, 1.0, n)
        assert sol.delta_snapped == delta
        yf = 1.0 - (1.0 - delta) ** 2
        vals.append(sol.K[0, 0] / yf)
    assert abs(vals[1] - vals[0]) < 1e-3


def test_limit_permeability():
    assert cp.limit_permeability(2, 1.0) == 0.5
    assert cp.limit_permeability(3, 2.0) == pytest.approx(4.0 / 3.0)


def test_richardson_limit_exact_on_quadratic():
    deltas = [0.2, 0.1, 0.05]
    vals = [0.5 + 0.7 * d - 0.3 * d * d for d in deltas]
    assert abs(cp.richardson_limit(deltas, vals) - 0.5) < 1e-12


def test_ellipticity_ratio_positive():
    cell = cp.WarrenRootCell(2, 0.2)
    sol = cp.effective_perm(cell, 1.0, 64)
    for ang in np.linspace(0.0, np.pi, 7):
        xi = np.array([np.cos(ang), np.sin(ang)])
        assert sol.ellipticity_ratio(xi) > 0.0
