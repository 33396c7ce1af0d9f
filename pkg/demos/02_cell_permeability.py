"""Effective permeability of the thin-fissure unit cell.

Solves the periodic corrector problems on the Warren-Root cell for a
family of fissure thicknesses and shows the normalized permeability
K11/|Y_f| approaching its closed-form thin-layer limit (d-1)/d * k_f.
"""

import numpy as np

from dualporo import cell_problems as cp

d, k_f, n = 2, 1.0, 512
deltas = [0.2, 0.1, 0.05]

print(f"d={d}, k_f={k_f}, grid {n}^{d}")
print("thin-layer limit: (d-1)/d * k_f =", cp.limit_permeability(d, k_f))
print()
print(" delta(snapped)    K11         K12          K11/|Y_f|")
snapped, normed = [], []
for delta in deltas:
    sol = cp.effective_perm(cp.WarrenRootCell(d, delta), k_f, n)
    yf = 1.0 - (1.0 - sol.delta_snapped) ** d
    snapped.append(sol.delta_snapped)
    normed.append(sol.K[0, 0] / yf)
    print("  %9.6f   %10.6f  %11.2e   %10.6f" % (
        sol.delta_snapped, sol.K[0, 0], sol.K[0, 1], normed[-1]))

extrap = cp.richardson_limit(snapped, normed)
print()
print("Richardson-extrapolated K11/|Y_f| at delta=0: %.6f" % extrap)
print("relative gap to the limit: %.2e" % (abs(extrap - 0.5 * k_f) / (0.5 * k_f)))
