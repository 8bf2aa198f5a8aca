"""Southpole and equator sets of the meromorphic solutions.

Writes one SVG triptych per degree (below, at and above the threshold a*)
into the directory given on the command line, default ./figures, and prints
the component counts on both sides of the threshold.
"""
import sys
from pathlib import Path

from skyrmion_lab import moduli as md


def main(out="figures"):
    out = Path(out)
    out.mkdir(exist_ok=True)
    for k in (2, 5, -2, -3):
        a_star = md.threshold_a_star(k)
        rows = md.bifurcation_scan(k)
        print(f"k={k:+d}  a*={a_star} ~ {float(a_star):.5f}  components "
              + "  ".join(f"{row.ratio:g}a*: {row.count}{' nested' if row.nested else ''}" for row in rows))
        params = [md.MeromorphicParams(k, 1j * ratio * float(a_star)) for ratio in (0.8, 1.0, 1.6)]
        md.emit_figure(params, out / f"k{k}.svg", "svg", resolution=513)
    print(f"figures written to {out}/")


if __name__ == "__main__":
    main(*sys.argv[1:])
