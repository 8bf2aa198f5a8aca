"""Walk through the energy of the basic solutions.

Prints the breakdown of the skyrmion across helicity strengths, the
Bogomol'nyi factorization at r = 1 for a few families, the best glued energies
per degree, and the stretched maps whose energy runs off to minus infinity
once r > 1.
"""
import math

from skyrmion_lab import energy as en
from skyrmion_lab import minimize as mz
from skyrmion_lab import solutions as sol

FOUR_PI = 4 * math.pi


def main():
    print("skyrmion h^r on its patch tiling")
    print(f"{'r':>6} {'D/4pi':>8} {'E_r':>10} {'4pi(1-2r^2)':>12} {'Q':>8}")
    for r in (0.25, 0.5, 1 / math.sqrt(2), 0.9, 1.0):
        b = en.evaluate_map(sol.skyrmion(r), r)
        print(f"{r:6.3f} {b.D / FOUR_PI:8.4f} {b.E_r:10.4f} {FOUR_PI * (1 - 2 * r * r):12.4f} {b.Q_raw:8.4f}")

    print("\nat r = 1 the energy is 4 pi Q plus the Bogomol'nyi residual")
    for name in ("skyrmion", "anti_skyrmion", "distorted", "meromorphic"):
        b = en.evaluate_map(sol.builtin_families()[name], 1.0)
        print(f"  {name:14s} E_1 = {b.E_r:9.4f}   4 pi Q = {FOUR_PI * b.Q_raw:9.4f}   "
              f"residual = {b.bogomolnyi_residual:8.4f}")

    print("\nbest glued energy per degree at r = 0.5 (R up to 64)")
    _, best = mz.minimal_energy_sweep([0.5], list(range(-3, 4)), R_schedule=(16.0, 32.0, 64.0))
    for row in best:
        print(f"  k={row.k:+d}  E={row.E:9.4f}  formula={row.formula_value:9.4f}  R={row.scale:g}")

    print("\nstretched maps at r = 1.25, degree -1")
    res = mz.divergence_sweep(1.25, -1, (10.0, 20.0, 40.0, 80.0))
    for L, E in zip(res.L, res.E):
        print(f"  L={L:5.0f}  E_r={E:10.3f}")
    print(f"  slope {res.slope_fit:.3f}; one line of the profile costs {mz.line_energy_oracle(1.25):.3f} "
          "and the strip has two")


if __name__ == "__main__":
    main()
