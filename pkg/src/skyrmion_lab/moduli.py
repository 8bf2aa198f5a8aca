"""Zero and equator sets of the meromorphic solution family v = -(i/2) conj(z) + a z^k.

Z0 is where n = -e3 (v = 0) and Z1 is where n3 = 0 (|v| = 1).  Z1 is traced
as the zero contour of n3 rather than of |v|^2 - 1, because n3 stays bounded
across the poles of v.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import optimize
from scipy.spatial import cKDTree
from skimage import measure

from .solutions import Meromorphic, meromorphic_v


class UnresolvedCount(UserWarning):
    pass


class WindowWarning(UserWarning):
    pass


@dataclass(frozen=True)
class MeromorphicParams:
    k: int
    a: complex

    def __post_init__(self):
        if self.a == 0 and self.k != 0:
            raise ValueError("a must be nonzero when k != 0")

    @property
    def arg(self) -> float:
        return math.atan2(self.a.imag, self.a.real)


@dataclass
class LevelSetCurve:
    points: np.ndarray  # (m, 2); first == last when closed
    closed: bool
    component_id: int
    enclosed_Z0_points: list = field(default_factory=list)

    def contains(self, p) -> bool:
        return point_in_polygon(np.asarray(p, float), self.points)


@dataclass
class Z0Set:
    points: np.ndarray  # (m, 2), possibly empty
    circle_radius: float = None  # k = -1 with a on the positive imaginary axis

    @property
    def empty(self) -> bool:
        return len(self.points) == 0 and self.circle_radius is None


# ---------------------------------------------------------------------------
# thresholds and Z0
# ---------------------------------------------------------------------------

def threshold_a_star(k: int) -> Fraction:
    """Exact bifurcation threshold of |a|.

    k >= 2:  (k-1)^(k-1) / (2k)^k
    k <= -2: (1 / 2|k|) ((k-1) / 2k)^(k-1)
    """
    k = int(k)
    if abs(k) <= 1:
        raise ValueError(f"threshold is defined only for |k| >= 2, got k = {k}")
    if k >= 2:
        return Fraction((k - 1) ** (k - 1), (2 * k) ** k)
    return Fraction(1, 2 * abs(k)) * Fraction(k - 1, 2 * k) ** (k - 1)


def threshold_general_form(k: int) -> Fraction:
    """The k <= -2 expression evaluated at any |k| >= 2 (agrees with k >= 2)."""
    return Fraction(1, 2 * abs(k)) * Fraction(k - 1, 2 * k) ** (k - 1)


def _refine_zero(params: MeromorphicParams, z0: complex, tol=1e-8) -> complex:
    def resid(p):
        v = meromorphic_v(complex(p[0], p[1]), params.k, params.a)
        return [v.real, v.imag]

    sol = optimize.root(resid, [z0.real, z0.imag], tol=1e-14)
    z = complex(*sol.x)
    if abs(meromorphic_v(z, params.k, params.a)) > tol:
        raise ArithmeticError(f"zero refinement failed near {z0}: |v| = {abs(meromorphic_v(z, params.k, params.a)):.2e}")
    return z


def z0_points(params: MeromorphicParams, refine: bool = True) -> Z0Set:
    """Preimage of the southpole.

    For |k| >= 2 the nonzero points are gamma e^{2 pi i j / (k+1)} with
    gamma = (2|a|)^{-1/(k-1)} e^{i (pi/2 - arg a)/(k+1)}, j = 0..|k+1|-1; the
    origin belongs to Z0 only when k >= 2.  Each point is polished by a 2D root
    solve on (Re v, Im v).
    """
    k, a = params.k, params.a
    if k == 1:
        return Z0Set(np.zeros((1, 2)))
    if k == -1:
        if abs(a.real) < 1e-14 and a.imag > 0:
            return Z0Set(np.zeros((0, 2)), circle_radius=math.sqrt(2 * a.imag))
        return Z0Set(np.zeros((0, 2)))
    if k == 0:
        guess = 2j * np.conj(a)
        z = _refine_zero(params, complex(guess)) if refine else complex(guess)
        return Z0Set(np.array([[z.real, z.imag]]))
    gamma = (2 * abs(a)) ** (-1.0 / (k - 1)) * np.exp(1j * (math.pi / 2 - params.arg) / (k + 1))
    pts = [gamma * np.exp(2j * math.pi * j / (k + 1)) for j in range(abs(k + 1))]
    if refine:
        pts = [_refine_zero(params, complex(p)) for p in pts]
    if k >= 2:
        pts = [0j] + pts
    return Z0Set(np.array([[p.real, p.imag] for p in pts]))


def z0_radius(params: MeromorphicParams) -> float:
    return Meromorphic(params.k, params.a).z0_radius() if params.k != 1 else 0.0


def default_window(params: MeromorphicParams) -> float:
    """2 max(Z0 radius, 2, (4|a|)^{1/(1-k)})."""
    k, a = params.k, abs(params.a)
    heur = (4 * a) ** (1.0 / (1 - k)) if k != 1 else 2.0
    w = 2.0 * max(z0_radius(params), 2.0, heur)
    if k == -1:
        outer = 2 * (params.a.imag + 1 + math.sqrt(max(2 * params.a.imag + 1 - params.a.real ** 2, 0.0)))
        w = max(w, 1.5 * math.sqrt(max(outer, 0.0)))
    return w


# ---------------------------------------------------------------------------
# Z1 extraction
# ---------------------------------------------------------------------------

def point_in_polygon(p, poly) -> bool:
    """Even-odd ray casting along +x1."""
    x, y = p
    xs, ys = poly[:, 0], poly[:, 1]
    x0, y0 = xs[:-1], ys[:-1]
    x1, y1 = xs[1:], ys[1:]
    cond = (y0 > y) != (y1 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
    return bool(np.count_nonzero(cond & (xint > x)) % 2)


def _join_open(pieces, tol):
    """Chain open polylines whose endpoints are within ``tol``."""
    pieces = [p.copy() for p in pieces]
    joined = True
    while joined and len(pieces) > 1:
        joined = False
        for i in range(len(pieces)):
            for j in range(len(pieces)):
                if i == j:
                    continue
                a, b = pieces[i], pieces[j]
                if np.linalg.norm(a[-1] - b[0]) <= tol:
                    pieces[i] = np.vstack([a, b[1:]])
                    del pieces[j]
                    joined = True
                    break
                if np.linalg.norm(a[-1] - b[-1]) <= tol:
                    pieces[i] = np.vstack([a, b[::-1][1:]])
                    del pieces[j]
                    joined = True
                    break
            if joined:
                break
    return pieces


@dataclass
class Z1Result:
    curves: list
    window: float
    resolution: int
    spacing: float
    warnings: list = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.curves)

    def nesting_depths(self) -> list:
        """For each curve, how many other curves enclose it."""
        out = []
        for c in self.curves:
            probe = c.points[0]
            out.append(sum(1 for o in self.curves if o is not c and o.closed and o.contains(probe)))
        return out

    @property
    def nested(self) -> bool:
        return any(d > 0 for d in self.nesting_depths())


def n3_grid(params: MeromorphicParams, window: float, resolution: int):
    c = np.linspace(-window, window, resolution)
    X1, X2 = np.meshgrid(c, c)
    amap = Meromorphic(params.k, params.a)
    return c, amap.evaluate(X1, X2)[..., 2]


def z1_extract(params: MeromorphicParams, window: float = None, resolution: int = 1025,
               auto_enlarge: bool = True, max_doublings: int = 4) -> Z1Result:
    """Components of Z1 by marching squares on n3 over [-W, W]^2."""
    if params.k == 1:
        raise ValueError("k = 1 is the distorted family")
    W = window or default_window(params)
    notes = []
    for _ in range(max_doublings + 1):
        c, n3 = n3_grid(params, W, resolution)
        h = c[1] - c[0]
        raw = measure.find_contours(n3, 0.0)
        pts = [np.column_stack([c[0] + p[:, 1] * h, c[0] + p[:, 0] * h]) for p in raw]
        closed = [p for p in pts if np.linalg.norm(p[0] - p[-1]) <= 1e-9 * W]
        opened = [p for p in pts if np.linalg.norm(p[0] - p[-1]) > 1e-9 * W]
        opened = _join_open(opened, 1.5 * h)
        still_open = []
        for p in opened:
            if np.linalg.norm(p[0] - p[-1]) <= 1.5 * h:
                closed.append(np.vstack([p, p[:1]]))
            else:
                still_open.append(p)
        if not still_open or not auto_enlarge or window is not None:
            break
        notes.append(f"open curve touches the window boundary at W={W:g}; enlarging to {2 * W:g}")
        warnings.warn(notes[-1], WindowWarning, stacklevel=2)
        W *= 2
    if still_open:
        msg = f"{len(still_open)} open Z1 piece(s) at window W={W:g}; suggest W={2 * W:g}"
        notes.append(msg)
        warnings.warn(msg, WindowWarning, stacklevel=2)
    curves = [LevelSetCurve(p, True, i) for i, p in enumerate(closed)]
    curves += [LevelSetCurve(p, False, len(closed) + i) for i, p in enumerate(still_open)]
    z0 = z0_points(params, refine=False)
    for cv in curves:
        if cv.closed:
            cv.enclosed_Z0_points = [tuple(p) for p in z0.points if cv.contains(p)]
    return Z1Result(curves, W, resolution, h, notes)


def v_level_residuals(params: MeromorphicParams, res: Z1Result):
    """Per-vertex | |v|^2 - 1 | and the bound 10 |grad |v|^2| spacing."""
    out = []
    for cv in res.curves:
        z = cv.points[:, 0] + 1j * cv.points[:, 1]
        v = meromorphic_v(z, params.k, params.a)
        k, a = params.k, params.a
        vx = -0.5j + (a * k * z ** (k - 1) if k else 0)
        vy = -0.5 + 1j * (a * k * z ** (k - 1) if k else 0)
        gx = 2 * np.real(np.conj(v) * vx)
        gy = 2 * np.real(np.conj(v) * vy)
        out.append((np.abs(np.abs(v) ** 2 - 1), 10 * np.hypot(gx, gy) * res.spacing))
    return out


# ---------------------------------------------------------------------------
# scans, symmetry, figures
# ---------------------------------------------------------------------------

@dataclass
class ScanRow:
    abs_a: float
    ratio: float
    count: int
    nested: bool
    count_refined: int
    resolved: bool


def bifurcation_scan(k: int, abs_values=None, ratios=(0.5, 2.0), phase: float = math.pi / 2,
                     resolution: int = 513):
    """Component counts of Z1 over |a|, with a = |a| e^{i phase}.

    Ratios inside (0.95, 1.05) of a* are rejected: counting at the immersed
    threshold curve is ill-conditioned.  Each count is repeated at doubled
    resolution and flagged unresolved when the two differ.
    """
    a_star = float(threshold_a_star(k))
    if abs_values is None:
        abs_values = [rho * a_star for rho in ratios]
    rows = []
    for av in abs_values:
        ratio = av / a_star
        if 0.95 < ratio < 1.05:
            raise ValueError(f"|a|/a* = {ratio:.3f} lies in the excluded band (0.95, 1.05)")
        p = MeromorphicParams(k, av * complex(math.cos(phase), math.sin(phase)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", WindowWarning)
            coarse = z1_extract(p, resolution=resolution)
            fine = z1_extract(p, window=coarse.window, resolution=2 * resolution - 1)
        ok = coarse.count == fine.count and not any(not c.closed for c in fine.curves)
        if not ok:
            warnings.warn(f"unresolved Z1 count for k={k}, |a|={av:g}: {coarse.count} vs {fine.count}",
                          UnresolvedCount, stacklevel=2)
        rows.append(ScanRow(av, ratio, coarse.count, coarse.nested, fine.count, ok))
    return rows


def expected_counts(k: int):
    """(below a*, above a*) component counts."""
    if k >= 2:
        return k + 2, 1
    if k <= -2:
        return 2, abs(k) - 1
    raise ValueError("|k| >= 2 required")


def symmetry_fold(k: int) -> int:
    return k + 1 if k >= 2 else abs(k) - 1


def _hausdorff(A, B) -> float:
    da, _ = cKDTree(B).query(A)
    db, _ = cKDTree(A).query(B)
    return float(max(da.max(), db.max()))


def z1_symmetry_check(params: MeromorphicParams, angle: float = None, res: Z1Result = None,
                      resolution: int = 1025) -> float:
    """Hausdorff distance between Z1 and Z1 rotated by ``angle`` (default 2 pi / fold)."""
    if abs(params.k) < 2:
        raise ValueError("|k| >= 2 required")
    res = res or z1_extract(params, resolution=resolution)
    angle = 2 * math.pi / symmetry_fold(params.k) if angle is None else angle
    pts = np.vstack([c.points for c in res.curves])
    c, s = math.cos(angle), math.sin(angle)
    rot = pts @ np.array([[c, s], [-s, c]])
    return _hausdorff(pts, rot)


def _svg_panel(params, res: Z1Result, z0: Z0Set, ox: float, size: float):
    W = res.window
    sw = 0.01 * 2 * W
    parts = [f'<g transform="translate({ox:g},0)">',
             f'<rect x="{-W:g}" y="{-W:g}" width="{2 * W:g}" height="{2 * W:g}" fill="white" stroke="black" stroke-width="{sw:g}"/>',
             f'<line class="axis" x1="{-W:g}" y1="0" x2="{W:g}" y2="0" stroke="gray" stroke-width="{sw / 2:g}"/>',
             f'<line class="axis" x1="0" y1="{-W:g}" x2="0" y2="{W:g}" stroke="gray" stroke-width="{sw / 2:g}"/>']
    for cv in res.curves:
        pts = " ".join(f"{x:.5g},{-y:.5g}" for x, y in cv.points)
        parts.append(f'<polyline class="z1" points="{pts}" fill="none" stroke="red" stroke-width="{sw:g}"/>')
    if z0.circle_radius is not None:
        parts.append(f'<circle class="z0" cx="0" cy="0" r="{z0.circle_radius:g}" fill="none" stroke="blue" stroke-width="{2 * sw:g}"/>')
    for x, y in z0.points:
        parts.append(f'<circle class="z0" cx="{x:.6g}" cy="{-y:.6g}" r="{3 * sw:g}" fill="blue"/>')
    label = f"k={params.k}, a={params.a.real:g}{params.a.imag:+g}i"
    if abs(params.k) >= 2:
        label += f", |a|/a*={abs(params.a) / float(threshold_a_star(params.k)):.4g}"
    parts.append(f'<text x="{-W + 2 * sw:g}" y="{-W + 8 * sw:g}" font-size="{6 * sw:g}">{label}</text>')
    parts.append("</g>")
    return parts


def emit_figure(params_list, path=None, fmt: str = "svg", resolution: int = 1025) -> str:
    """Render Z0 (blue) and Z1 (red) for each parameter set side by side."""
    if fmt not in ("svg", "csv"):
        raise ValueError("format must be svg or csv")
    panels = []
    for p in params_list:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", WindowWarning)
            panels.append((p, z1_extract(p, resolution=resolution), z0_points(p, refine=False)))
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["set", "component", "x1", "x2"])
        offset = 0
        for p, res, z0 in panels:
            for j, (x, y) in enumerate(z0.points):
                w.writerow(["z0", offset + j, repr(float(x)), repr(float(y))])
            for cv in res.curves:
                for x, y in cv.points:
                    w.writerow(["z1", offset + cv.component_id, repr(float(x)), repr(float(y))])
            offset += len(res.curves) + len(z0.points)
        text = buf.getvalue()
    else:
        size = max(res.window for _, res, _ in panels)
        gap = 0.25 * size
        body = []
        ox = 0.0
        for i, (p, res, z0) in enumerate(panels):
            ox = i * (2 * size + gap)
            body += _svg_panel(p, res, z0, ox, size)
        width = len(panels) * 2 * size + (len(panels) - 1) * gap
        text = "\n".join([
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{-size:g} {-size:g} {width:g} {2 * size:g}">',
            *body, "</svg>", ""])
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def read_figure_csv(text: str):
    """Parse an emitted CSV back into {set: {component: points}}."""
    out = {"z0": {}, "z1": {}}
    for row in csv.DictReader(io.StringIO(text)):
        out[row["set"]].setdefault(int(row["component"]), []).append((float(row["x1"]), float(row["x2"])))
    return {s: {c: np.array(v) for c, v in comps.items()} for s, comps in out.items()}
