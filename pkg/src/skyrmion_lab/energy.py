"""Energy functionals, degree, Bogomol'nyi residual and the algebraic identities.

All integrals are trapezoid quadratures of pointwise densities built from
finite-difference (or, for analytic maps on request, exact) derivatives:

    D  = 1/2 int |grad n|^2
    H  = int (n - e3) . curl n             (direct form, diagnostic)
       = 2 int (n3 - 1)(d1 n2 - d2 n1)     (integrated by parts, primary)
    V  = 1/2 int (1 - n3)^2,  Z = int (1 - n3),  A = 1/2 int (1 - n3^2)
    Q  = 1/(4 pi) int n . d1 n x d2 n

with ``curl n = (d2 n3, -d1 n3, d1 n2 - d2 n1)``.  The r-dependent pieces are
stored through r-independent integrals so a single pass serves many r.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .grid import E3, FieldError, NonFiniteError, SphereField, gradients, reduce_sum, trapezoid_weights

FOUR_PI = 4.0 * math.pi
DEGREE_FLAG = 0.05  # |Q_raw - Q_int| above this marks the degree unresolved

JSON_KEYS = ("D", "H_ibp", "H_direct", "V", "Z", "A", "E_r", "E_rh", "Q_raw", "Q_int",
             "residual", "fact_gap", "r", "h", "N", "S")


class ResolutionWarning(UserWarning):
    pass


@dataclass
class EnergyIntegrals:
    """r-independent integrals of one field (or a sum over patches).

    The Bogomol'nyi density is |P + B/r|^2 with ``P = d1 n + n x d2 n`` and
    ``B = -(e1 x n) - n x (e2 x n)``; we keep int |P|^2, int P.B and int |B|^2.
    """

    D: float = 0.0
    H_ibp: float = 0.0
    H_direct: float = 0.0
    V: float = 0.0
    Z: float = 0.0
    A: float = 0.0
    Q: float = 0.0
    bog_pp: float = 0.0
    bog_pb: float = 0.0
    bog_bb: float = 0.0
    dir_minus: float = 0.0  # 1/2 int |d1 n - n x d2 n|^2
    dir_plus: float = 0.0   # 1/2 int |d1 n + n x d2 n|^2

    def __add__(self, other: "EnergyIntegrals") -> "EnergyIntegrals":
        return EnergyIntegrals(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    def __sub__(self, other: "EnergyIntegrals") -> "EnergyIntegrals":
        return EnergyIntegrals(*(getattr(self, f.name) - getattr(other, f.name) for f in fields(self)))

    def residual(self, r: float) -> float:
        """(r^2/2) int |D1 n + n x D2 n|^2 with D_j = d_j - (1/r) e_j x."""
        return 0.5 * (r * r * self.bog_pp + 2.0 * r * self.bog_pb + self.bog_bb)

    def breakdown(self, r: float, h: float = 0.0, N=None, S=None) -> "EnergyBreakdown":
        if not r > 0:
            raise ValueError("r must be positive")
        E_r = self.D + r * self.H_ibp + self.V
        Q_int = int(round(self.Q))
        res = max(self.residual(r), 0.0)
        gap = E_r - FOUR_PI * r * r * self.Q - res - (1.0 - r * r) * self.D
        dgap = max(abs(self.D - self.dir_minus + FOUR_PI * self.Q),
                   abs(self.D - self.dir_plus - FOUR_PI * self.Q))
        out = EnergyBreakdown(
            D=self.D, H=self.H_ibp, H_direct=self.H_direct, V=self.V, Z=self.Z, A=self.A,
            E_r=E_r, E_rh=E_r + h * self.Z, Q_raw=self.Q, Q_int=Q_int,
            bogomolnyi_residual=res, factorization_gap=gap, dirichlet_gap=dgap,
            r=r, h=h, N=N, S=S)
        if abs(self.Q - Q_int) > DEGREE_FLAG:
            out.warnings.append(f"degree unresolved: Q_raw = {self.Q:.4f}")
        return out


@dataclass
class EnergyBreakdown:
    D: float
    H: float  # integrated-by-parts estimator
    H_direct: float
    V: float
    Z: float
    A: float
    E_r: float
    E_rh: float
    Q_raw: float
    Q_int: int
    bogomolnyi_residual: float
    factorization_gap: float
    dirichlet_gap: float
    r: float
    h: float
    N: object = None
    S: object = None
    tail: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def degree_resolved(self) -> bool:
        return abs(self.Q_raw - self.Q_int) <= DEGREE_FLAG

    @property
    def helical_identity_gap(self) -> float:
        return self.D - FOUR_PI * self.Q_raw - self.V / self.r ** 2

    def to_json_dict(self) -> dict:
        return {
            "D": self.D, "H_ibp": self.H, "H_direct": self.H_direct, "V": self.V, "Z": self.Z,
            "A": self.A, "E_r": self.E_r, "E_rh": self.E_rh, "Q_raw": self.Q_raw,
            "Q_int": self.Q_int, "residual": self.bogomolnyi_residual,
            "fact_gap": self.factorization_gap, "r": self.r, "h": self.h, "N": self.N, "S": self.S,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EnergyBreakdown":
        d = json.loads(text)
        if set(d) != set(JSON_KEYS):
            raise FieldError(f"unexpected keys {sorted(set(d) ^ set(JSON_KEYS))}")
        E_r, Q, r = d["E_r"], d["Q_raw"], d["r"]
        return cls(D=d["D"], H=d["H_ibp"], H_direct=d["H_direct"], V=d["V"], Z=d["Z"], A=d["A"],
                   E_r=E_r, E_rh=d["E_rh"], Q_raw=Q, Q_int=d["Q_int"],
                   bogomolnyi_residual=d["residual"], factorization_gap=d["fact_gap"],
                   dirichlet_gap=float("nan"), r=r, h=d["h"], N=d["N"], S=d["S"])


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------

def _check_finite(arr, what, mesh=None):
    bad = ~np.isfinite(arr)
    if bad.any():
        idx = tuple(np.argwhere(bad)[0][:2])
        where = f" at node {idx}"
        if mesh is not None:
            where += f" = ({mesh[0][idx]:g}, {mesh[1][idx]:g})"
        raise NonFiniteError(f"non-finite {what}{where}")


def integrals_from_arrays(n, d1, d2, weights, mesh=None) -> EnergyIntegrals:
    """Quadrature of every density for sampled values and derivatives."""
    for arr, what in ((n, "field value"), (d1, "x1-derivative"), (d2, "x2-derivative")):
        _check_finite(arr, what, mesh)
    n1, n2, n3 = n[..., 0], n[..., 1], n[..., 2]
    w = weights
    S = reduce_sum

    dirichlet = 0.5 * (np.sum(d1 * d1, -1) + np.sum(d2 * d2, -1))
    curl_z = d1[..., 1] - d2[..., 0]
    h_direct = n1 * d2[..., 2] - n2 * d1[..., 2] + (n3 - 1.0) * curl_z
    h_ibp = 2.0 * (n3 - 1.0) * curl_z
    one_minus = 1.0 - n3
    v = 0.5 * one_minus ** 2
    a = 0.5 * (1.0 - n3 * n3)
    q = np.sum(n * np.cross(d1, d2), -1) / FOUR_PI

    nxd2 = np.cross(n, d2)
    p = d1 + nxd2
    # B = -(e1 x n) - n x (e2 x n); e1 x n = (0, -n3, n2), n x (e2 x n) = e2 |n|^2 - n n2
    e1xn = np.stack([np.zeros_like(n1), -n3, n2], -1)
    e2 = np.zeros_like(n)
    e2[..., 1] = 1.0
    b = -e1xn - (e2 * np.sum(n * n, -1, keepdims=True) - n * n2[..., None])
    m = d1 - nxd2

    return EnergyIntegrals(
        D=S(w * dirichlet), H_ibp=S(w * h_ibp), H_direct=S(w * h_direct), V=S(w * v),
        Z=S(w * one_minus), A=S(w * a), Q=S(w * q),
        bog_pp=S(w * np.sum(p * p, -1)), bog_pb=S(w * np.sum(p * b, -1)), bog_bb=S(w * np.sum(b * b, -1)),
        dir_minus=0.5 * S(w * np.sum(m * m, -1)), dir_plus=0.5 * S(w * np.sum(p * p, -1)),
    )


def field_integrals(n: SphereField, order: int = 4) -> EnergyIntegrals:
    d1, d2 = n.gradients(order)
    return integrals_from_arrays(n.values, d1, d2, n.weights(), n.spec.mesh())


# ---------------------------------------------------------------------------
# public operations on sampled fields
# ---------------------------------------------------------------------------

def evaluate(n: SphereField, r: float, h: float = 0.0, order: int = 4) -> EnergyBreakdown:
    """Full breakdown of E_{r,h} on a sampled field."""
    out = field_integrals(n, order).breakdown(r, h, N=n.spec.samples_per_axis, S=n.spec.half_width)
    for msg in out.warnings:
        warnings.warn(msg, ResolutionWarning, stacklevel=2)
    return out


def helicity_direct(n: SphereField) -> float:
    return field_integrals(n).H_direct


def helicity_ibp(n: SphereField) -> float:
    return field_integrals(n).H_ibp


def degree(n: SphereField):
    """(Q_raw, Q_int); warns when the rounding distance exceeds 0.05."""
    q = field_integrals(n).Q
    qi = int(round(q))
    if abs(q - qi) > DEGREE_FLAG:
        warnings.warn(f"degree unresolved: Q_raw = {q:.4f}", ResolutionWarning, stacklevel=2)
    return q, qi


def bogomolnyi_residual(n: SphereField, r: float) -> float:
    return max(field_integrals(n).residual(r), 0.0)


def factorization_gap(n: SphereField, r: float) -> float:
    """Worst of the E_r factorization gap and both Dirichlet factorization gaps."""
    b = field_integrals(n).breakdown(r)
    return b.factorization_gap if abs(b.factorization_gap) >= b.dirichlet_gap else b.dirichlet_gap


def helical_identity_gap(n: SphereField, r: float) -> float:
    """D - 4 pi Q - V / r^2 (vanishes for solutions of the Bogomol'nyi equation)."""
    return field_integrals(n).breakdown(r).helical_identity_gap


def equivariant_degree(theta0: float, theta_inf: float, phi_winding: float, tol: float = 1e-9) -> float:
    """(1/4 pi)(cos Theta(0) - cos Theta(inf)) * (Phi(2 pi) - Phi(0))."""
    if abs(theta0 / math.pi - round(theta0 / math.pi)) > tol:
        raise ValueError(f"Theta(0) = {theta0} is not a multiple of pi")
    if abs(theta_inf / (2 * math.pi) - round(theta_inf / (2 * math.pi))) > tol:
        raise ValueError(f"Theta(inf) = {theta_inf} is not a multiple of 2 pi")
    return (math.cos(theta0) - math.cos(theta_inf)) * phi_winding / FOUR_PI


# ---------------------------------------------------------------------------
# analytic maps over the whole plane
# ---------------------------------------------------------------------------

def patch_integrals(patch, derivatives: str = "fd", order: int = 4) -> EnergyIntegrals:
    X1, X2 = patch.mesh()
    src = patch.source
    n = src.evaluate(X1, X2)
    h1, h2 = patch.spacing
    if derivatives == "exact":
        d1, d2 = src.jacobian(X1, X2)
    else:
        d1, d2 = gradients(n, h1, h2, order=order)
    w = trapezoid_weights(patch.counts[1], patch.counts[0], h1, h2)
    return integrals_from_arrays(n, d1, d2, w, (X1, X2))


def _outer_level(patches):
    """Indices of the patches touching the outermost boundary of the tiling."""
    lo1 = min(p.lo[0] for p in patches)
    hi1 = max(p.hi[0] for p in patches)
    lo2 = min(p.lo[1] for p in patches)
    hi2 = max(p.hi[1] for p in patches)
    return [i for i, p in enumerate(patches)
            if p.lo[0] == lo1 or p.hi[0] == hi1 or p.lo[1] == lo2 or p.hi[1] == hi2]


def map_integrals(amap, refine: float = 1.0, derivatives: str = "fd", order: int = 4):
    """Sum of patch integrals, plus the contribution of the outermost frame.

    For non-compact families the outermost frame is the region between
    half-widths S/2 and S, so its contribution is the truncation estimate
    |value(S) - value(S/2)|.
    """
    if derivatives == "exact" and not amap.exact_derivatives:
        derivatives = "fd"
    patches = amap.patches(refine)
    parts = [patch_integrals(p, derivatives, order) for p in patches]
    total = EnergyIntegrals()
    for part in parts:
        total = total + part
    tail = EnergyIntegrals()
    if amap.support_radius is None and len(patches) > 1:
        for i in _outer_level(patches):
            tail = tail + parts[i]
    return total, tail, patches


def evaluate_map(amap, r: float, h: float = 0.0, refine: float = 1.0,
                 derivatives: str = "fd", order: int = 4) -> EnergyBreakdown:
    """Whole-plane breakdown of an analytic map via its patch tiling."""
    total, tail, patches = map_integrals(amap, refine, derivatives, order)
    out = total.breakdown(r, h, N=sum(p.nodes for p in patches),
                          S=max(max(abs(c) for c in p.lo + p.hi) for p in patches))
    if amap.support_radius is None:
        tb = tail.breakdown(r, h)
        out.tail = {"D": abs(tb.D), "H_ibp": abs(tb.H), "V": abs(tb.V), "E_r": abs(tb.E_r),
                    "Q_raw": abs(tb.Q_raw)}
    return out


# ---------------------------------------------------------------------------
# BRS correction
# ---------------------------------------------------------------------------

def contour_helicity_correction(amap, R: float, samples: int = 4096) -> float:
    """Re of the contour integral of (n1 - i n2) dz over |z| = R.

    By Stokes this equals int_{|z|<R} e3 . curl n.  The integrand is smooth and
    periodic, so the trapezoid rule converges spectrally.
    """
    t = 2 * np.pi * np.arange(samples) / samples
    z = R * np.exp(1j * t)
    n = amap.evaluate(z.real, z.imag)
    dz = 1j * z * (2 * np.pi / samples)
    return float(np.real(np.sum((n[:, 0] - 1j * n[:, 1]) * dz)))


@dataclass
class BRSResult:
    E1: float
    correction: float
    energy: float
    sequence: dict
    converged: bool


def brs_energy(amap, radii=(50.0, 100.0, 200.0), E1: float = None, refine: float = 1.0) -> BRSResult:
    """E_1 plus the limit of the contour correction over growing circles."""
    seq = {float(R): contour_helicity_correction(amap, R) for R in radii}
    vals = [seq[float(R)] for R in radii]
    last, prev = vals[-1], vals[-2] if len(vals) > 1 else vals[-1]
    converged = abs(last - prev) <= 1e-2 * max(abs(last), 1.0)
    if not converged:
        warnings.warn(f"contour correction not converged: {vals}", ResolutionWarning, stacklevel=2)
    if E1 is None:
        E1 = evaluate_map(amap, 1.0, refine=refine).E_r
    return BRSResult(E1=E1, correction=last, energy=E1 + last, sequence=seq, converged=converged)
