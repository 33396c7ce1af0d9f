"""Numerical laboratory for two-phase flow in double-porosity media.

The package covers the chain from constitutive laws through periodic
cell problems and matrix-block physics to a macroscale finite-volume
solver with a half-order memory source, for media whose fissure system
is a thin layer of relative thickness delta around cubic matrix blocks.
"""

from .constitutive import (LawCurves, RockParams, TwoRockSystem, alpha, beta,
                           beta_inverse, dbeta, dpc, global_pressure_split,
                           matching_P, matching_P_deriv, mobilities, pc,
                           pc_inverse, power_law, theta_star)
from .cell_problems import (WarrenRootCell, asymptote_study, effective_perm,
                            effective_porosity, limit_permeability,
                            richardson_limit, snap_delta, solve_corrector)
from .errors import ConfigError, DomainError, ResolutionError, SolverError
from .macro_solver import (BoundaryData, EffectiveCoefficients, MacroGrid,
                           MacroState, delta_level_coefficients, delta_sweep,
                           limit_coefficients, phase_fields, pressure_solve,
                           saturation_step, simulate)
from .matrix_block import (BlockProblem, BlockState, block_asymptote_study,
                           imbibition_step_linear, imbibition_step_nonlinear,
                           laplace_block_integral, laplace_block_integral_series,
                           source_from_kernel, source_from_subgrid)
from .memory_kernel import (HistoryBuffer, KernelQuadrature, kernel_amplitude,
                            memory_source, split_implicit_coefficient)

__all__ = [n for n in dir() if not n.startswith("_")]
__version__ = "0.1.0"
