"""Closed-form sphere-valued map families.

Each family is an :class:`AnalyticMap`: it evaluates pointwise, knows its
exact first derivatives where the formula allows, and describes how to tile
the plane with rectangular :class:`Patch` regions for whole-plane energy
quadrature.  A patch carries the smooth piece of the map that is valid on it,
so piecewise maps (the stretched construction) are integrated without
differentiating across their seams.

Conventions: ``x1`` is the first planar coordinate, ``z = x1 + i x2``, polar
angle ``psi`` and radius ``rho``.  Equivariant maps are
``n = (cos Phi sin Theta, sin Phi sin Theta, cos Theta)`` with
``Phi = m psi + psi0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .grid import E3, FieldError, GridSpec, north_chart_to_sphere, south_chart_to_sphere

ORIGIN_NUDGE = 1e-9  # relative offset used when a derivative formula is singular at 0


# ---------------------------------------------------------------------------
# patches
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Patch:
    """Axis-aligned rectangle [lo1, hi1] x [lo2, hi2] sampled uniformly.

    ``source`` is the smooth map used on this rectangle (coordinates are
    global, not patch-local).
    """

    source: "AnalyticMap"
    lo: tuple
    hi: tuple
    counts: tuple

    def __post_init__(self):
        if not (self.hi[0] > self.lo[0] and self.hi[1] > self.lo[1]):
            raise FieldError(f"empty patch {self.lo} .. {self.hi}")

    @property
    def spacing(self):
        return ((self.hi[0] - self.lo[0]) / (self.counts[0] - 1),
                (self.hi[1] - self.lo[1]) / (self.counts[1] - 1))

    def mesh(self):
        c1 = np.linspace(self.lo[0], self.hi[0], self.counts[0])
        c2 = np.linspace(self.lo[1], self.hi[1], self.counts[1])
        return np.meshgrid(c1, c2)

    @property
    def nodes(self) -> int:
        return self.counts[0] * self.counts[1]


def _count(length: float, spacing: float, odd=False) -> int:
    n = max(int(math.ceil(length / spacing - 1e-9)) + 1, 3)
    if odd and n % 2 == 0:
        n += 1
    return n


def rect_patch(source, lo, hi, spacing, min_count=3) -> Patch:
    n1 = max(_count(hi[0] - lo[0], spacing), min_count)
    n2 = max(_count(hi[1] - lo[1], spacing), min_count)
    return Patch(source, (float(lo[0]), float(lo[1])), (float(hi[0]), float(hi[1])), (n1, n2))


def nested_patches(source, center, core_half: float, spacing: float, outer_half: float,
                   growth: float = 2.0):
    """Square core around ``center`` plus square frames growing geometrically.

    Each frame doubles its half-width and its spacing, so every level holds
    roughly the same number of nodes.  The union is the square of half-width
    ``outer_half``.
    """
    c0, c1 = center
    core_half = min(core_half, outer_half)
    n = _count(2 * core_half, spacing, odd=True)
    out = [Patch(source, (c0 - core_half, c1 - core_half), (c0 + core_half, c1 + core_half), (n, n))]
    inner, h = core_half, spacing
    while inner < outer_half * (1 - 1e-12):
        outer = min(inner * growth, outer_half)
        h = h * growth
        out += [
            rect_patch(source, (c0 - outer, c1 + inner), (c0 + outer, c1 + outer), h),
            rect_patch(source, (c0 - outer, c1 - outer), (c0 + outer, c1 - inner), h),
            rect_patch(source, (c0 - outer, c1 - inner), (c0 - inner, c1 + inner), h),
            rect_patch(source, (c0 + inner, c1 - inner), (c0 + outer, c1 + inner), h),
        ]
        inner = outer
    return out


def clip_patches(patches, lo2=-np.inf, hi2=np.inf):
    """Restrict patches to lo2 <= x2 <= hi2, keeping spacing roughly unchanged."""
    out = []
    for p in patches:
        a, b = max(p.lo[1], lo2), min(p.hi[1], hi2)
        if b - a <= 1e-12 * max(1.0, abs(b)):
            continue
        h2 = p.spacing[1]
        n2 = _count(b - a, h2)
        out.append(Patch(p.source, (p.lo[0], a), (p.hi[0], b), (p.counts[0], n2)))
    return out


# ---------------------------------------------------------------------------
# base class
# ---------------------------------------------------------------------------

class AnalyticMap:
    """A closed-form map R^2 -> S^2 with far-field value e3."""

    family = "analytic"
    exact_derivatives = False
    support_radius: Optional[float] = None  # deviation from e3 vanishes outside

    def __init__(self, **params):
        self.params = params

    def __call__(self, x1, x2) -> np.ndarray:
        return self.evaluate(x1, x2)

    def evaluate(self, x1, x2) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, x1, x2):
        """(d1 n, d2 n) arrays of shape (..., 3)."""
        raise NotImplementedError(f"{self.family} has no closed-form derivatives")

    def patches(self, refine: float = 1.0):
        raise NotImplementedError

    def default_grid(self) -> GridSpec:
        return GridSpec(20.0, 513)

    def translated(self, shift) -> "AnalyticMap":
        return Translated(self, shift)

    def label(self) -> str:
        inner = ",".join(f"{k}={_fmt(v)}" for k, v in self.params.items())
        return f"{self.family}:{inner}" if inner else self.family

    def __repr__(self):
        return f"<{self.label()}>"


def _fmt(v):
    if isinstance(v, complex):
        return f"{v.real:g}{v.imag:+g}i"
    if isinstance(v, float):
        return f"{v:g}"
    return str(v)


class Homogeneous(AnalyticMap):
    family = "homogeneous"
    exact_derivatives = True
    support_radius = 0.0

    def evaluate(self, x1, x2):
        shape = np.broadcast(np.asarray(x1), np.asarray(x2)).shape
        return np.broadcast_to(E3, shape + (3,)).copy()

    def jacobian(self, x1, x2):
        z = np.zeros(self.evaluate(x1, x2).shape)
        return z, z.copy()

    def patches(self, refine=1.0):
        return [Patch(self, (-1.0, -1.0), (1.0, 1.0), (9, 9))]


class Translated(AnalyticMap):
    def __init__(self, base: AnalyticMap, shift):
        super().__init__(**base.params)
        self.base = base
        self.shift = (float(shift[0]), float(shift[1]))
        self.family = base.family
        self.exact_derivatives = base.exact_derivatives
        self.support_radius = base.support_radius

    def evaluate(self, x1, x2):
        return self.base.evaluate(np.asarray(x1) - self.shift[0], np.asarray(x2) - self.shift[1])

    def jacobian(self, x1, x2):
        return self.base.jacobian(np.asarray(x1) - self.shift[0], np.asarray(x2) - self.shift[1])

    def patches(self, refine=1.0):
        s1, s2 = self.shift
        return [Patch(self if p.source is self.base else p.source.translated(self.shift),
                      (p.lo[0] + s1, p.lo[1] + s2), (p.hi[0] + s1, p.hi[1] + s2), p.counts)
                for p in self.base.patches(refine)]

    def label(self):
        return f"{self.base.label()}@({self.shift[0]:g},{self.shift[1]:g})"


# ---------------------------------------------------------------------------
# equivariant maps
# ---------------------------------------------------------------------------

def skyrmion_profile(r: float):
    """theta^r(rho) = 2 atan(2r/rho) and its derivative -sin(theta)/rho."""
    def theta(rho):
        return 2.0 * np.arctan2(2.0 * r, rho)

    def dtheta(rho):
        return -4.0 * r / (rho ** 2 + 4.0 * r ** 2)
    return theta, dtheta


def _smooth_step(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1, built from exp(-1/s)."""
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        f = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        g = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return f / (f + g)


def _smooth_step_deriv(s):
    s = np.asarray(s, dtype=float)
    inside = (s > 0) & (s < 1)
    out = np.zeros_like(s)
    si = s[inside]
    f = np.exp(-1.0 / si)
    g = np.exp(-1.0 / (1.0 - si))
    out[inside] = (f / si ** 2 * g + f * g / (1.0 - si) ** 2) / (f + g) ** 2
    return out


def cutoff_factor(R: float):
    """zeta_R: 1 on [0, R/4], 0 on [R/2, inf), smooth in between."""
    def zeta(rho):
        return _smooth_step((R / 2.0 - np.asarray(rho)) / (R / 4.0))

    def dzeta(rho):
        return -_smooth_step_deriv((R / 2.0 - np.asarray(rho)) / (R / 4.0)) * 4.0 / R
    return zeta, dzeta


class Equivariant(AnalyticMap):
    """n = (cos Phi sin Theta, sin Phi sin Theta, cos Theta), Phi = m psi + psi0."""

    family = "equivariant"

    def __init__(self, theta: Callable, dtheta: Optional[Callable] = None, m: int = 1,
                 psi0: float = math.pi / 2, scale: float = 1.0, support=None, **params):
        super().__init__(**params)
        self.theta, self.dtheta = theta, dtheta
        self.m, self.psi0 = int(m), float(psi0)
        self.scale = float(scale)  # core length, used for sampling
        self.support_radius = support
        self.exact_derivatives = dtheta is not None

    def evaluate(self, x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        rho = np.hypot(x1, x2)
        th = self.theta(rho)
        phi = self.m * np.arctan2(x2, x1) + self.psi0
        st = np.sin(th)
        return np.stack([np.cos(phi) * st, np.sin(phi) * st, np.cos(th)], axis=-1)

    def jacobian(self, x1, x2):
        if self.dtheta is None:
            return super().jacobian(x1, x2)
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        x1 = np.where((x1 == 0) & (x2 == 0), ORIGIN_NUDGE * self.scale, x1)
        rho = np.hypot(x1, x2)
        th, dth = self.theta(rho), self.dtheta(rho)
        phi = self.m * np.arctan2(x2, x1) + self.psi0
        st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(phi), np.cos(phi)
        n_th = np.stack([cp * ct, sp * ct, -st], axis=-1)
        n_ph = np.stack([-sp * st, cp * st, np.zeros_like(st)], axis=-1)
        d1 = n_th * (dth * x1 / rho)[..., None] + n_ph * (-self.m * x2 / rho ** 2)[..., None]
        d2 = n_th * (dth * x2 / rho)[..., None] + n_ph * (self.m * x1 / rho ** 2)[..., None]
        return d1, d2

    def patches(self, refine=1.0):
        s = self.scale
        outer = self.support_radius if self.support_radius else 2048.0 * s
        return nested_patches(self, (0.0, 0.0), min(4.0 * s, outer), s / (16.0 * refine), outer)

    def default_grid(self):
        S = self.support_radius * 1.05 if self.support_radius else 40.0 * self.scale
        return GridSpec(S, 513)


class Skyrmion(Equivariant):
    """h^r(x) = h(x / 2r), h(y) = (-2 y2, 2 y1, |y|^2 - 1) / (|y|^2 + 1)."""

    family = "skyrmion"

    def __init__(self, r: float):
        if not r > 0:
            raise FieldError("skyrmion scale r must be positive")
        th, dth = skyrmion_profile(r)
        super().__init__(th, dth, m=1, psi0=math.pi / 2, scale=r, r=r)
        self.r = r

    def evaluate(self, x1, x2):
        y1, y2 = np.asarray(x1, float) / (2 * self.r), np.asarray(x2, float) / (2 * self.r)
        s = y1 ** 2 + y2 ** 2
        return np.stack(np.broadcast_arrays(-2 * y2 / (s + 1), 2 * y1 / (s + 1), (s - 1) / (s + 1)), axis=-1)

    def jacobian(self, x1, x2):
        y1, y2 = np.broadcast_arrays(np.asarray(x1, float) / (2 * self.r), np.asarray(x2, float) / (2 * self.r))
        s = y1 ** 2 + y2 ** 2
        q = (s + 1) ** 2
        c = 1.0 / (2 * self.r)
        # d/dy1 and d/dy2 of the rational formula
        dy1 = np.stack([4 * y1 * y2 / q, 2 * (s + 1 - 2 * y1 ** 2) / q, 4 * y1 / q], axis=-1)
        dy2 = np.stack([-2 * (s + 1 - 2 * y2 ** 2) / q, -4 * y1 * y2 / q, 4 * y2 / q], axis=-1)
        return c * dy1, c * dy2


class AntiSkyrmion(Equivariant):
    """h~^r(x) = h~(x / 2r), h~(y) = (-2 y1, 2 y2, |y|^2 - 1) / (|y|^2 + 1)."""

    family = "anti_skyrmion"

    def __init__(self, r: float):
        if not r > 0:
            raise FieldError("anti-skyrmion scale r must be positive")
        th, dth = skyrmion_profile(r)
        super().__init__(th, dth, m=-1, psi0=math.pi, scale=r, r=r)
        self.r = r

    def evaluate(self, x1, x2):
        y1, y2 = np.asarray(x1, float) / (2 * self.r), np.asarray(x2, float) / (2 * self.r)
        s = y1 ** 2 + y2 ** 2
        return np.stack(np.broadcast_arrays(-2 * y1 / (s + 1), 2 * y2 / (s + 1), (s - 1) / (s + 1)), axis=-1)

    def jacobian(self, x1, x2):
        y1, y2 = np.broadcast_arrays(np.asarray(x1, float) / (2 * self.r), np.asarray(x2, float) / (2 * self.r))
        s = y1 ** 2 + y2 ** 2
        q = (s + 1) ** 2
        c = 1.0 / (2 * self.r)
        dy1 = np.stack([-2 * (s + 1 - 2 * y1 ** 2) / q, -4 * y1 * y2 / q, 4 * y1 / q], axis=-1)
        dy2 = np.stack([4 * y1 * y2 / q, 2 * (s + 1 - 2 * y2 ** 2) / q, 4 * y2 / q], axis=-1)
        return c * dy1, c * dy2


class Cutoff(Equivariant):
    """Compactified (anti-)skyrmion with profile zeta_R * theta^r."""

    family = "cutoff"

    def __init__(self, r: float, R: float, anti: bool = False):
        if not (r > 0 and R > 0):
            raise FieldError("cutoff needs r > 0 and R > 0")
        th, dth = skyrmion_profile(r)
        zeta, dzeta = cutoff_factor(R)

        def theta(rho):
            return zeta(rho) * th(rho)

        def dtheta(rho):
            return dzeta(rho) * th(rho) + zeta(rho) * dth(rho)

        m, psi0 = (-1, math.pi) if anti else (1, math.pi / 2)
        super().__init__(theta, dtheta, m=m, psi0=psi0, scale=min(r, R / 8.0),
                         support=R / 2.0, r=r, R=R, anti=anti)
        self.r, self.R, self.anti = r, R, anti

    def evaluate(self, x1, x2):
        out = super().evaluate(x1, x2)
        rho = np.hypot(*np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float)))
        out[rho >= self.R / 2.0] = E3  # exact far field
        return out

    def patches(self, refine=1.0):
        # the transition annulus has its own length scale R/4
        s = self.scale
        h = min(s / 16.0, self.R / 256.0) / refine
        return nested_patches(self, (0.0, 0.0), min(4.0 * s, self.R / 2.0), h, self.R / 2.0)


def equivariant(r: float = 1.0, m: int = 1, psi0: float = math.pi / 2) -> Equivariant:
    """theta^r profile with arbitrary winding and phase (derivatives by differences)."""
    th, _ = skyrmion_profile(r)
    out = Equivariant(th, None, m=m, psi0=psi0, scale=r)
    out.params = {"r": r, "m": m, "psi0": psi0}
    return out


class MultiVortex(AnalyticMap):
    """|k| disjoint cutoff vortices at a_j = (10 j R, 0) on an e3 background.

    k < 0 glues skyrmions h^r_R (degree k); k > 0 glues anti-skyrmions of
    scale r (degree k); k = 0 is e3.
    """

    family = "multi_vortex"
    exact_derivatives = True

    def __init__(self, r: float, R: float, k: int):
        super().__init__(r=r, R=R, k=int(k))
        self.r, self.R, self.k = r, R, int(k)
        self.unit = Cutoff(r, R, anti=k > 0)
        self.centers = [(10.0 * j * R, 0.0) for j in range(1, abs(self.k) + 1)]
        self.pieces = [self.unit.translated(c) for c in self.centers]
        self.support_radius = (10.0 * abs(self.k) * R + R / 2.0) if self.k else 0.0

    def evaluate(self, x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        out = np.broadcast_to(E3, x1.shape + (3,)).copy()
        for (c1, c2), piece in zip(self.centers, self.pieces):
            mask = np.hypot(x1 - c1, x2 - c2) < self.R
            if mask.any():
                out[mask] = piece.evaluate(x1[mask], x2[mask])
        return out

    def jacobian(self, x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        d1 = np.zeros(x1.shape + (3,))
        d2 = np.zeros(x1.shape + (3,))
        for (c1, c2), piece in zip(self.centers, self.pieces):
            mask = np.hypot(x1 - c1, x2 - c2) < self.R
            if mask.any():
                d1[mask], d2[mask] = piece.jacobian(x1[mask], x2[mask])
        return d1, d2

    def patches(self, refine=1.0):
        if not self.pieces:
            return Homogeneous().patches()
        return [p for piece in self.pieces for p in piece.patches(refine)]

    def default_grid(self):
        return GridSpec(max(self.support_radius, 1.0) * 1.02, 1025)


class _StripPiece(AnalyticMap):
    """x -> profile(x1, 0): the stretched core, constant along x2."""

    exact_derivatives = True

    def __init__(self, profile: AnalyticMap):
        super().__init__()
        self.profile = profile
        self.family = "stretched_strip"

    def evaluate(self, x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        return self.profile.evaluate(x1, np.zeros_like(x1))

    def jacobian(self, x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        d1, _ = self.profile.jacobian(x1, np.zeros_like(x1))
        return d1, np.zeros_like(d1)


class Stretched(AnalyticMap):
    """One-dimensional stretch of a cutoff skyrmion, with caps and unit vortices.

    Strip ``|x1|, |x2| <= L``: profile(x1, 0).  Caps beyond ``x2 = +-L`` inside
    the balls of radius L about (0, +-L): the profile shifted by L.  Then
    ``|k + 1|`` cutoff unit vortices (scale 1, cutoff radius 1) centred at
    ``b_j = (10 (L + j), 0)``, anti-vortices when k >= 0.

    The profile is the cutoff skyrmion of scale 1/(2r), i.e. ``h(r x)`` near
    the core, whose one-dimensional energy density integrates to
    ``pi (1 - r^2) / r``.
    """

    family = "stretched"
    exact_derivatives = True

    def __init__(self, r: float, L: float, k: int = -1):
        if not (r > 0 and L > 0):
            raise FieldError("stretched map needs r > 0 and L > 0")
        super().__init__(r=r, L=L, k=int(k))
        self.r, self.L, self.k = r, float(L), int(k)
        self.profile = Cutoff(1.0 / (2.0 * r), self.L)
        self.strip = _StripPiece(self.profile)
        self.cap_up = self.profile.translated((0.0, self.L))
        self.cap_down = self.profile.translated((0.0, -self.L))
        unit = Cutoff(1.0, 1.0, anti=self.k >= 0)
        n_unit = abs(self.k + 1)
        self.vortex_centers = [(10.0 * (self.L + j), 0.0) for j in range(1, n_unit + 1)]
        self.vortices = [unit.translated(c) for c in self.vortex_centers]
        self.support_radius = max([1.5 * self.L] + [c[0] + 0.5 for c in self.vortex_centers])

    def _regions(self, x1, x2):
        L = self.L
        strip = (np.abs(x1) <= L) & (np.abs(x2) <= L)
        up = (x2 > L) & (np.hypot(x1, x2 - L) < L)
        down = (x2 < -L) & (np.hypot(x1, x2 + L) < L)
        return [(strip, self.strip), (up, self.cap_up), (down, self.cap_down)] + [
            (np.hypot(x1 - c[0], x2 - c[1]) < 1.0, v) for c, v in zip(self.vortex_centers, self.vortices)]

    def evaluate(self, x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        out = np.broadcast_to(E3, x1.shape + (3,)).copy()
        for mask, piece in self._regions(x1, x2):
            if mask.any():
                out[mask] = piece.evaluate(x1[mask], x2[mask])
        return out

    def jacobian(self, x1, x2):
        """One-sided at the seams x2 = +-L (the strip side is used on the seam)."""
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        d1 = np.zeros(x1.shape + (3,))
        d2 = np.zeros(x1.shape + (3,))
        for mask, piece in self._regions(x1, x2):
            if mask.any():
                d1[mask], d2[mask] = piece.jacobian(x1[mask], x2[mask])
        return d1, d2

    def patches(self, refine=1.0):
        L = self.L
        core = self.profile.scale
        h = core / (8.0 * refine)
        out = []
        # strip: constant along x2, so a few rows suffice; one patch so that
        # no seam crosses the long direction
        out.append(Patch(self.strip, (-L, -L), (L, L), (_count(2 * L, h, odd=True), 9)))
        # caps: upper and lower halves of the profile's nested tiling
        base = self.profile.patches(refine)
        for p in clip_patches(base, lo2=0.0):
            out.append(Patch(self.cap_up, (p.lo[0], p.lo[1] + L), (p.hi[0], p.hi[1] + L), p.counts))
        for p in clip_patches(base, hi2=0.0):
            out.append(Patch(self.cap_down, (p.lo[0], p.lo[1] - L), (p.hi[0], p.hi[1] - L), p.counts))
        for v in self.vortices:
            out += v.patches(refine)
        return out

    def default_grid(self):
        return GridSpec(self.support_radius * 1.05, 1025)


# ---------------------------------------------------------------------------
# chart-based families
# ---------------------------------------------------------------------------

def _north_jacobian(v, vx, vy):
    """Derivatives of north_chart_to_sphere(v) given the derivatives of v."""
    s = np.abs(v) ** 2
    out = []
    for vj in (vx, vy):
        sj = 2.0 * np.real(np.conj(v) * vj)
        c = 2.0 * vj / (1 + s) - 2.0 * v * sj / (1 + s) ** 2  # d(n1 - i n2)
        n3 = 2.0 * sj / (1 + s) ** 2
        out.append(np.stack([c.real, -c.imag, n3], axis=-1))
    return out


def _south_jacobian(w, wx, wy):
    s = np.abs(w) ** 2
    out = []
    for wj in (wx, wy):
        sj = 2.0 * np.real(np.conj(w) * wj)
        c = 2.0 * wj / (1 + s) - 2.0 * w * sj / (1 + s) ** 2  # d(n1 + i n2)
        n3 = -2.0 * sj / (1 + s) ** 2
        out.append(np.stack([c.real, c.imag, n3], axis=-1))
    return out


class ChartMap(AnalyticMap):
    """n = north_chart_to_sphere(v(z)), switching to w = 1/v where |v| > 1."""

    exact_derivatives = True

    def chart(self, z):
        """Return (v, v_x, v_y) as complex arrays."""
        raise NotImplementedError

    def south(self, z):
        """Return (w, w_x, w_y) with w = 1/v, or None to derive it from v."""
        return None

    def evaluate(self, x1, x2):
        z = np.asarray(x1, float) + 1j * np.asarray(x2, float)
        res = self.south(z)
        if res is None:
            v = self.chart(z)[0]
            return north_chart_to_sphere(v)
        w = res[0]
        out = south_chart_to_sphere(w)
        small = np.abs(w) > 1.0
        if small.any():
            out[small] = north_chart_to_sphere(self.chart(z[small])[0])
        return out

    def jacobian(self, x1, x2):
        z = np.asarray(x1, float) + 1j * np.asarray(x2, float)
        z = np.where(z == 0, ORIGIN_NUDGE * self.length_scale(), z)
        v, vx, vy = self.chart(z)
        with np.errstate(all="ignore"):
            big = ~(np.abs(v) <= 1.0)
        d1, d2 = _north_jacobian(np.where(big, 0, v), vx, vy)
        if big.any():
            res = self.south(z[big])
            if res is None:
                vb, vxb, vyb = v[big], vx[big], vy[big]
                res = (1 / vb, -vxb / vb ** 2, -vyb / vb ** 2)
            s1, s2 = _south_jacobian(*res)
            d1[big], d2[big] = s1, s2
        return d1, d2

    def length_scale(self) -> float:
        return 1.0


class Distorted(ChartMap):
    """v = X1 + i X2 with X = [[a1, -1/2 - a2], [-1/2 + a2, a1]] x."""

    family = "distorted"

    def __init__(self, a: complex):
        a = complex(a)
        if abs(abs(a) - 0.5) < 1e-9:
            raise FieldError("distorted skyrmion is degenerate at |a| = 1/2 (det = |a|^2 - 1/4 = 0)")
        super().__init__(a=a)
        self.a = a
        a1, a2 = a.real, a.imag
        self.matrix = np.array([[a1, -0.5 - a2], [-0.5 + a2, a1]])
        sv = np.linalg.svd(self.matrix, compute_uv=False)
        self.sigma_max, self.sigma_min = float(sv[0]), float(sv[-1])

    def chart(self, z):
        M = self.matrix
        x1, x2 = z.real, z.imag
        v = (M[0, 0] * x1 + M[0, 1] * x2) + 1j * (M[1, 0] * x1 + M[1, 1] * x2)
        vx = np.full(z.shape, M[0, 0] + 1j * M[1, 0])
        vy = np.full(z.shape, M[0, 1] + 1j * M[1, 1])
        return v, vx, vy

    def length_scale(self):
        return 1.0 / self.sigma_max

    def patches(self, refine=1.0):
        return nested_patches(self, (0.0, 0.0), 3.0 / self.sigma_min,
                              1.0 / (8.0 * self.sigma_max * refine), 1024.0 / self.sigma_min)

    def default_grid(self):
        return GridSpec(20.0 / self.sigma_min, 1025)


def meromorphic_v(z, k: int, a: complex):
    """v = -(i/2) conj(z) + a z^k (infinite at z = 0 when k < 0)."""
    z = np.asarray(z, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        return -0.5j * np.conj(z) + a * z ** k


class Meromorphic(ChartMap):
    """Bogomol'nyi solutions at r = 1 with f(z) = a z^k."""

    family = "meromorphic"

    def __init__(self, k: int, a: complex):
        k, a = int(k), complex(a)
        if k == 1:
            raise FieldError("k = 1 is the distorted skyrmion family; use distorted(a)")
        if a == 0 and k != 0:
            raise FieldError("a must be nonzero for k != 0")
        super().__init__(k=k, a=a)
        self.k, self.a = k, a

    @property
    def expected_degree(self) -> int:
        return self.k if self.k >= 2 else -self.k - 1

    def chart(self, z):
        k, a = self.k, self.a
        with np.errstate(divide="ignore", invalid="ignore"):
            v = -0.5j * np.conj(z) + a * z ** k
            dk = a * k * z ** (k - 1) if k != 0 else np.zeros_like(z)
        return v, -0.5j + dk, -0.5 + 1j * dk

    def south(self, z):
        if self.k >= 0:
            return None
        # w = 1/v = z^m / (a - (i/2) conj(z) z^m), m = -k, finite at z = 0
        m, a = -self.k, self.a
        zm = z ** m
        dzm = m * z ** (m - 1)
        den = a - 0.5j * np.conj(z) * zm
        w = zm / den
        # d/dx and d/dy of numerator and denominator
        num_x, num_y = dzm, 1j * dzm
        den_x = -0.5j * (zm + np.conj(z) * dzm)
        den_y = -0.5j * (-1j * zm + np.conj(z) * 1j * dzm)
        wx = (num_x * den - zm * den_x) / den ** 2
        wy = (num_y * den - zm * den_y) / den ** 2
        return w, wx, wy

    def z0_radius(self) -> float:
        k, a = self.k, abs(self.a)
        if k >= 2:
            return (2 * a) ** (-1.0 / (k - 1))
        if k <= -2:
            return (2 * a) ** (1.0 / (1 - k))
        if k == 0:
            return 2 * a
        return math.sqrt(2 * max(self.a.imag, 0.0))

    def length_scale(self):
        return max(self.z0_radius(), 2.0) / 64.0

    def window(self) -> float:
        k, a = self.k, abs(self.a)
        heur = (4 * a) ** (1.0 / (1 - k)) if k != 1 else 2.0
        return 2.0 * max(self.z0_radius(), 2.0, heur)

    def patches(self, refine=1.0):
        W = self.window()
        h = W / (128.0 * refine)
        if self.k == -1:
            # Z1 radii from the explicit formula may exceed the window
            W = max(W, 2 * math.sqrt(2 * (abs(self.a) + 1 + math.sqrt(2 * abs(self.a) + 1))))
        return nested_patches(self, (0.0, 0.0), W, h, 1024.0 * W)

    def default_grid(self):
        return GridSpec(2.0 * self.window(), 513)


# ---------------------------------------------------------------------------
# perturbations of the homogeneous state
# ---------------------------------------------------------------------------

BUMP_RADIUS = 4.0


def bump(rho):
    """Smooth radial bump g with g(0) = 1 and support |x| < 4."""
    s = np.asarray(rho, float) / BUMP_RADIUS
    out = np.zeros_like(s)
    m = s < 1
    out[m] = np.exp(1.0 - 1.0 / (1.0 - s[m] ** 2))
    return out


def bump_deriv(rho):
    s = np.asarray(rho, float) / BUMP_RADIUS
    out = np.zeros_like(s)
    m = s < 1
    sm = s[m]
    out[m] = np.exp(1.0 - 1.0 / (1.0 - sm ** 2)) * (-2.0 * sm / (1.0 - sm ** 2) ** 2) / BUMP_RADIUS
    return out


PERTURBATION_SHAPES = ("x", "y", "swirl")


def perturbation(shape: str = "x"):
    """Built-in horizontal perturbations phi0 (e3 . phi0 = 0), support radius 4.

    Returns (phi, dphi) where phi(x1, x2) -> (..., 3) and dphi returns the two
    partial derivatives.  "x" is (g, 0, 0); "y" is (0, g, 0); "swirl" is
    g(|x|) (-x2, x1, 0) / 4.
    """
    if shape not in PERTURBATION_SHAPES:
        raise FieldError(f"unknown perturbation shape {shape!r}")

    def phi(x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        g = bump(np.hypot(x1, x2))
        z = np.zeros_like(g)
        if shape == "x":
            return np.stack([g, z, z], -1)
        if shape == "y":
            return np.stack([z, g, z], -1)
        return np.stack([-x2 * g / BUMP_RADIUS, x1 * g / BUMP_RADIUS, z], -1)

    def dphi(x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        rho = np.hypot(x1, x2)
        g, dg = bump(rho), bump_deriv(rho)
        with np.errstate(invalid="ignore", divide="ignore"):
            c1 = np.where(rho > 0, dg * x1 / np.where(rho > 0, rho, 1), 0.0)
            c2 = np.where(rho > 0, dg * x2 / np.where(rho > 0, rho, 1), 0.0)
        z = np.zeros_like(g)
        if shape == "x":
            return np.stack([c1, z, z], -1), np.stack([c2, z, z], -1)
        if shape == "y":
            return np.stack([z, c1, z], -1), np.stack([z, c2, z], -1)
        R = BUMP_RADIUS
        d1 = np.stack([-x2 * c1 / R, (g + x1 * c1) / R, z], -1)
        d2 = np.stack([-(g + x2 * c2) / R, x1 * c2 / R, z], -1)
        return d1, d2
    return phi, dphi


class PerturbedHomogeneous(AnalyticMap):
    """n_t = (e3 + t phi_lam) / |e3 + t phi_lam| with phi_lam(x) = phi0(x / lam)."""

    family = "perturbed_homogeneous"
    exact_derivatives = True

    def __init__(self, t: float, lam: float = 1.0, shape: str = "x"):
        if not lam > 0:
            raise FieldError("dilation lam must be positive")
        super().__init__(t=float(t), lam=float(lam), shape=shape)
        self.t, self.lam, self.shape = float(t), float(lam), shape
        self.phi, self.dphi = perturbation(shape)
        self.support_radius = BUMP_RADIUS * self.lam

    def _raw(self, x1, x2):
        return E3 + self.t * self.phi(np.asarray(x1) / self.lam, np.asarray(x2) / self.lam)

    def evaluate(self, x1, x2):
        u = self._raw(x1, x2)
        norm = np.linalg.norm(u, axis=-1)
        if np.any(norm < 1e-12):
            raise FieldError("degenerate normalization e3 + t phi = 0")
        return u / norm[..., None]

    def jacobian(self, x1, x2):
        u = self._raw(x1, x2)
        norm = np.linalg.norm(u, axis=-1)[..., None]
        n = u / norm
        out = []
        for du in self.dphi(np.asarray(x1) / self.lam, np.asarray(x2) / self.lam):
            du = self.t * du / self.lam
            out.append(du / norm - n * np.sum(n * du, -1, keepdims=True) / norm)
        return tuple(out)

    def patches(self, refine=1.0):
        S = self.support_radius
        n = _count(2 * S, S / (64.0 * refine), odd=True)
        return [Patch(self, (-S, -S), (S, S), (n, n))]

    def default_grid(self):
        return GridSpec(self.support_radius, 257)


# ---------------------------------------------------------------------------
# constructors and the family mini-language
# ---------------------------------------------------------------------------

def homogeneous() -> Homogeneous:
    return Homogeneous()


def skyrmion(r: float) -> Skyrmion:
    return Skyrmion(r)


def anti_skyrmion(r: float) -> AntiSkyrmion:
    return AntiSkyrmion(r)


def cutoff_skyrmion(r: float, R: float) -> Cutoff:
    return Cutoff(r, R)


def cutoff_anti(r: float, R: float) -> Cutoff:
    return Cutoff(r, R, anti=True)


def multi_vortex(r: float, R: float, k: int) -> MultiVortex:
    return MultiVortex(r, R, k)


def stretched(r: float, L: float, k: int = -1) -> Stretched:
    return Stretched(r, L, k)


def distorted(a: complex) -> Distorted:
    return Distorted(a)


def meromorphic(k: int, a: complex) -> Meromorphic:
    return Meromorphic(k, a)


def perturbed_homogeneous(t: float, lam: float = 1.0, shape: str = "x") -> PerturbedHomogeneous:
    return PerturbedHomogeneous(t, lam, shape)


def parse_complex(text: str) -> complex:
    """Accepts '0.5', '0+0.1i', '-1-2i', '0.1j', 'i'."""
    s = text.strip().replace(" ", "").replace("i", "j")
    if s in ("j", "+j"):
        return 1j
    if s == "-j":
        return -1j
    try:
        return complex(s)
    except ValueError:
        raise FieldError(f"cannot parse complex value {text!r}") from None


_FAMILIES = {
    "homogeneous": (homogeneous, {}),
    "skyrmion": (skyrmion, {"r": float}),
    "anti_skyrmion": (anti_skyrmion, {"r": float}),
    "cutoff": (cutoff_skyrmion, {"r": float, "R": float}),
    "cutoff_anti": (cutoff_anti, {"r": float, "R": float}),
    "multi_vortex": (multi_vortex, {"r": float, "R": float, "k": int}),
    "stretched": (stretched, {"r": float, "L": float, "k": int}),
    "equivariant": (equivariant, {"r": float, "m": int, "psi0": float}),
    "distorted": (distorted, {"a": parse_complex}),
    "meromorphic": (meromorphic, {"k": int, "a": parse_complex}),
    "perturbed_homogeneous": (perturbed_homogeneous, {"t": float, "lam": float, "shape": str}),
}

FAMILY_NAMES = tuple(_FAMILIES)


def parse_family(text: str) -> AnalyticMap:
    """Build a map from strings like 'skyrmion:r=0.5' or 'meromorphic:k=2,a=0+0.1i'."""
    name, _, rest = text.strip().partition(":")
    if name not in _FAMILIES:
        raise FieldError(f"unknown family {name!r}; expected one of {', '.join(FAMILY_NAMES)}")
    ctor, types = _FAMILIES[name]
    kwargs = {}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        key, eq, val = item.partition("=")
        if not eq:
            raise FieldError(f"expected key=value in {item!r}")
        key = key.strip()
        if key not in types:
            raise FieldError(f"family {name!r} has no parameter {key!r}")
        try:
            kwargs[key] = types[key](val.strip())
        except ValueError as exc:
            raise FieldError(f"bad value for {key!r}: {val!r}") from exc
    try:
        return ctor(**kwargs)
    except TypeError as exc:
        raise FieldError(f"{name}: {exc}") from None


def builtin_families() -> dict:
    """One representative per built-in family (used by the property suites)."""
    return {
        "homogeneous": homogeneous(),
        "skyrmion": skyrmion(1.0),
        "anti_skyrmion": anti_skyrmion(1.0),
        "cutoff": cutoff_skyrmion(1.0, 16.0),
        "multi_vortex": multi_vortex(0.5, 8.0, -2),
        "stretched": stretched(1.25, 10.0, -1),
        "equivariant": equivariant(1.0, m=-1, psi0=math.pi),
        "distorted": distorted(0.75),
        "meromorphic": meromorphic(2, 0.1j),
        "perturbed_homogeneous": perturbed_homogeneous(0.05, 1.0),
    }
