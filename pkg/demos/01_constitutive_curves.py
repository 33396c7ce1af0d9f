"""Constitutive laws for a fracture/matrix rock pair.

Tabulates the capillary pressure, mobilities, capillary diffusivity and
its integral (the complementary-pressure transform), and the matching
function that couples the two media at equal capillary pressure.
"""

import numpy as np

from dualporo import constitutive as law

rock_f = law.RockParams("fracture", phi=0.2, k=1.0, a=1.0)
rock_m = law.RockParams("matrix", phi=0.4, k=0.05, a=2.0)
system = law.TwoRockSystem(fracture=rock_f, matrix=rock_m)

print("fracture rock: phi=%.2f  k=%.2f  a=%.2f" % (rock_f.phi, rock_f.k, rock_f.a))
print("matrix rock:   phi=%.2f  k=%.2f  a=%.2f" % (rock_m.phi, rock_m.k, rock_m.a))
print()
print("theta* (fracture) = %.6f" % law.theta_star(rock_f))
print("theta* (matrix)   = %.6f" % law.theta_star(rock_m))
print()

header = "   s      Pc_f     lam_w   lam_n    alpha_f   beta_f    match"
print(header)
for s in np.linspace(0.1, 1.0, 10):
    lam_w, lam_n, _ = law.mobilities(rock_f, s)
    print("%5.2f  %8.4f  %6.4f  %6.4f  %8.5f  %8.5f  %7.4f" % (
        s, law.pc(rock_f, s), lam_w, lam_n,
        law.alpha(rock_f, s), law.beta(rock_f, s),
        law.matching_P(system, s)))

print()
print("phase-pressure split at global pressure P = 1:")
for s in (0.3, 0.6, 0.9):
    p_w, p_n = law.global_pressure_split(rock_f, s, 1.0)
    print("  s=%.1f:  P_w=%8.4f  P_n=%8.4f  P_n-P_w=%8.4f  Pc=%8.4f" % (
        s, p_w, p_n, p_n - p_w, law.pc(rock_f, s)))
