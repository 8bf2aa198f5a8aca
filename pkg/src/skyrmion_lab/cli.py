"""Command-line front end.

Usage::

    skyrmion-lab energy --family skyrmion:r=0.5 --r 0.5 --N 513 --S 20
    skyrmion-lab sweep --r-values 0.25,0.5 --k-values -3,-2,-1,0,1,2,3 --output table.csv
    skyrmion-lab sweep --r-values 1.25 --k-values -1 --L-values 10,20,40,80
    skyrmion-lab moduli --k 2 --a 0+0.0625i --svg out.svg
    skyrmion-lab moduli scan --k 5
    skyrmion-lab stability --r 0.8 --h -0.1

Family strings: ``name`` or ``name:key=value,key=value``.  Names and keys:

    homogeneous
    skyrmion:r            anti_skyrmion:r
    cutoff:r,R            cutoff_anti:r,R
    multi_vortex:r,R,k    (k < 0 glues skyrmions of scale r; k > 0 anti-skyrmions of scale r)
    stretched:r,L,k
    equivariant:r,m,psi0
    distorted:a           meromorphic:k,a
    perturbed_homogeneous:t,lam,shape   (shape in x, y, swirl)

Complex values accept ``0+0.1i``, ``0.1j``, ``-1`` and so on.

``--config FILE`` reads flat ``key = value`` lines using the flag names
(``command = energy`` selects the subcommand); flags on the command line
override the file.  Exit codes: 0 ok, 2 usage, 3 numeric failure,
4 unresolved result (degree or component count).
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings

import numpy as np

from . import energy as en
from . import minimize as mz
from . import moduli as md
from . import solutions as sol
from .grid import FieldError, GridSpec, sample

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_UNRESOLVED = 0, 2, 3, 4

COMMANDS = ("energy", "sweep", "moduli", "stability")


class UsageError(Exception):
    pass


def _floats(text):
    vals = [float(x) for x in str(text).split(",") if x.strip()]
    if not vals:
        raise UsageError("empty list")
    return vals


def _ints(text):
    vals = [int(x) for x in str(text).split(",") if x.strip()]
    if not vals:
        raise UsageError("empty list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="skyrmion-lab", description=__doc__.split("\n")[0])
    p.add_argument("--config", help="flat key = value file; flags override it")
    sub = p.add_subparsers(dest="command")

    e = sub.add_parser("energy", help="energy breakdown of a family")
    e.add_argument("--family", required=True)
    e.add_argument("--r", type=float, default=1.0)
    e.add_argument("--h", type=float, default=0.0)
    e.add_argument("--N", type=int)
    e.add_argument("--S", type=float)
    e.add_argument("--patches", action="store_true",
                   help="whole-plane evaluation on the family's patch tiling instead of one grid")
    e.add_argument("--output")
    e.add_argument("--format", choices=["json"], default="json")

    s = sub.add_parser("sweep", help="minimal-energy table or divergence sweep")
    s.add_argument("--r-values", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")
    s.add_argument("--k-values", default="-3,-2,-1,0,1,2,3")
    s.add_argument("--R-schedule", default="8,16,32")
    s.add_argument("--lam", type=float, default=0.05)
    s.add_argument("--L-values", help="stretched-map lengths (requires r > 1)")
    s.add_argument("--output")
    s.add_argument("--format", choices=["csv"], default="csv")

    m = sub.add_parser("moduli", help="Z0 / Z1 geometry of the meromorphic family")
    m.add_argument("action", nargs="?", choices=["figure", "scan"], default="figure")
    m.add_argument("--k", type=int, required=True)
    m.add_argument("--a", action="append", help="complex coefficient; repeat for several panels")
    m.add_argument("--ratios", default="0.5,2", help="|a|/a* values for scan")
    m.add_argument("--resolution", type=int, default=1025)
    m.add_argument("--svg")
    m.add_argument("--csv")
    m.add_argument("--output")

    st = sub.add_parser("stability", help="stability probes and flows")
    st.add_argument("--r", type=float, required=True)
    st.add_argument("--h", type=float, default=0.0)
    st.add_argument("--family", help="flow from this family instead of probing e3")
    st.add_argument("--iters", type=int, default=500)
    st.add_argument("--N", type=int, default=129)
    st.add_argument("--S", type=float)
    st.add_argument("--noise", type=float, default=0.0, help="sup-norm of tangent noise added before flowing")
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--output")
    st.add_argument("--flow-log", help="CSV path for the flow log")
    return p


def read_config(path) -> dict:
    out = {}
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, eq, val = line.partition("=")
            if not eq:
                raise UsageError(f"{path}:{ln}: expected key = value")
            out[key.strip().replace("_", "-")] = val.strip()
    return out


LIST_FLAGS = ("--r-values", "--k-values", "--R-schedule", "--L-values", "--ratios", "--a")


def _join_list_flags(argv):
    # argparse reads "-1,0" as an option, so glue list values onto their flag
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in LIST_FLAGS and i + 1 < len(argv):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def _merge_config(argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if not known.config:
        return rest
    cfg = read_config(known.config)
    command = cfg.pop("command", None)
    if not any(tok in COMMANDS for tok in rest):
        if command is None:
            raise UsageError("no command given")
        rest = [command] + rest
    idx = next(i for i, tok in enumerate(rest) if tok in COMMANDS)
    present = {tok.split("=")[0] for tok in rest if tok.startswith("--")}
    extra = []
    for key, val in cfg.items():
        flag = "--" + key
        if flag in present:
            continue
        if key == "action":
            extra.append(val)
        elif val.lower() in ("true", "yes") and key == "patches":
            extra.append(flag)
        else:
            extra += [flag, val]
    return rest[:idx + 1] + extra + rest[idx + 1:]


def _write(text, path):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_energy(args) -> int:
    amap = sol.parse_family(args.family)
    if args.patches:
        b = en.evaluate_map(amap, args.r, args.h)
    else:
        spec = amap.default_grid()
        spec = GridSpec(args.S or spec.half_width, args.N or spec.samples_per_axis)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", en.ResolutionWarning)
            b = en.evaluate(sample(amap, spec), args.r, args.h)
    _write(b.to_json() + "\n", args.output)
    return EXIT_OK if b.degree_resolved else EXIT_UNRESOLVED


def cmd_sweep(args) -> int:
    r_values = _floats(args.r_values)
    k_values = _ints(args.k_values)
    if args.L_values:
        L_values = _floats(args.L_values)
        parts = []
        ok = True
        for r in r_values:
            for k in k_values:
                res = mz.divergence_sweep(r, k, L_values)
                parts.append(mz.divergence_csv(res))
                ok &= res.decreasing
                sys.stderr.write(f"r={r:g} k={k}: fitted slope {res.slope_fit:.4f}, "
                                 f"last-interval slope {res.slope_last:.4f}, "
                                 f"line integral {res.line_integral:.4f}, "
                                 f"{'decreasing' if res.decreasing else 'NOT decreasing'}\n")
        header = parts[0].splitlines()[0]
        body = [ln for part in parts for ln in part.splitlines()[1:]]
        _write("\n".join([header] + body) + "\n", args.output)
        return EXIT_OK
    _, best = mz.minimal_energy_sweep(r_values, k_values, _floats(args.R_schedule), args.lam)
    _write(mz.sweep_csv(best), args.output)
    return EXIT_OK if all(row.resolved for row in best) else EXIT_UNRESOLVED


def cmd_moduli(args) -> int:
    if args.k == 1:
        raise UsageError("k = 1 is the distorted skyrmion; use the family 'distorted:a=...'")
    if args.action == "scan":
        if abs(args.k) < 2:
            raise UsageError("scan needs |k| >= 2")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", md.UnresolvedCount)
            rows = md.bifurcation_scan(args.k, ratios=_floats(args.ratios))
        lines = ["abs_a,ratio,count,nested,count_refined,resolved"]
        lines += [f"{r.abs_a!r},{r.ratio!r},{r.count},{int(r.nested)},{r.count_refined},{int(r.resolved)}"
                  for r in rows]
        _write("\n".join(lines) + "\n", args.output)
        return EXIT_OK if all(r.resolved for r in rows) else EXIT_UNRESOLVED
    if not args.a:
        raise UsageError("moduli figure needs at least one --a")
    params = [md.MeromorphicParams(args.k, sol.parse_complex(a)) for a in args.a]
    wrote = False
    if args.svg:
        md.emit_figure(params, args.svg, "svg", args.resolution)
        wrote = True
    if args.csv:
        md.emit_figure(params, args.csv, "csv", args.resolution)
        wrote = True
    if not wrote:
        _write(md.emit_figure(params, None, "svg", args.resolution), args.output)
    return EXIT_OK


def cmd_stability(args) -> int:
    r, h = args.r, args.h
    if args.family:
        amap = sol.parse_family(args.family)
        spec = GridSpec(args.S or amap.default_grid().half_width, args.N)
        n0 = sample(amap, spec)
        if args.noise > 0:
            n0 = mz.tangent_noise(n0, args.noise, seed=args.seed)
        traj = mz.gradient_flow(n0, r, h, mz.FlowParams(max_iters=args.iters, snapshot_every=0))
        if args.flow_log:
            with open(args.flow_log, "w") as fh:
                fh.write(traj.to_csv())
        dropped = traj.energies[-1] < traj.energies[0]
        verdict = (f"{amap.family} unstable (energy {traj.energies[0]:.6g} -> {traj.energies[-1]:.6g} "
                   f"in {traj.iterations} iterations, {traj.reason})" if dropped
                   else f"{amap.family}: no descent in {traj.iterations} iterations ({traj.reason})")
        report = {"verdict": verdict, "r": r, "h": h, "family": args.family,
                  "E_start": traj.energies[0], "E_final": traj.energies[-1],
                  "Q_start": traj.degrees[0], "Q_final": traj.degrees[-1],
                  "iterations": traj.iterations, "reason": traj.reason}
    else:
        if h < 0:
            rep = mz.probe_homogeneous_stability(r, h)
        elif h > 0:
            rep = mz.probe_homogeneous_stability(r, h, l4_radius=0.2)
        else:
            rep = mz.probe_homogeneous_stability(r, h, l2_radius=0.1)
        report = {"verdict": rep.verdict, "r": r, "h": h, "probes": len(rep.rows),
                  "largest_positive_l2": rep.largest_positive_l2,
                  "witness": None if rep.witness is None else vars(rep.witness)}
    _write(json.dumps(report, sort_keys=True, indent=2) + "\n", args.output)
    if args.output:
        print(report["verdict"])
    return EXIT_OK


HANDLERS = {"energy": cmd_energy, "sweep": cmd_sweep, "moduli": cmd_moduli, "stability": cmd_stability}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _join_list_flags(_merge_config(argv))
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:  # argparse reports usage errors this way
        return EXIT_USAGE if exc.code else EXIT_OK
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return HANDLERS[args.command](args)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"numeric error: {exc}\n")
        return EXIT_NUMERIC
    except (UsageError, FieldError, ValueError) as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
