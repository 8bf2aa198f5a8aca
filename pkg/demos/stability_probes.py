"""Stability of the homogeneous state and instability of the skyrmion for r > 1.

Dilated bumps around e3 probe the second variation: with a positive or zero
field every probe costs energy, with a negative field large dilations win.
Then the gradient flow started from h^1.5 keeps lowering the energy.
"""
from skyrmion_lab import minimize as mz


def main():
    for r, h, kw in ((0.8, 0.0, {"l2_radius": 0.1}), (0.8, 0.2, {"l4_radius": 0.2}), (0.8, -0.1, {})):
        rep = mz.probe_homogeneous_stability(r, h, **kw)
        print(f"r={r} h={h:+.1f}: {len(rep.rows)} probes, {rep.verdict}")
    print(f"sign of the x-bump quadratic form flips at lambda ~ {mz.flip_lambda(-0.1, 'x'):.3f} for h = -0.1")

    ev = mz.skyrmion_flow_probe(1.5, iters=300)
    print(f"flow from the skyrmion at r = 1.5: E {ev.start_energy:.3f} -> {ev.final_energy:.3f} "
          f"after {ev.iterations} iterations ({ev.reason}), Q {ev.degree_start:.3f} -> {ev.degree_final:.3f}")


if __name__ == "__main__":
    main()
