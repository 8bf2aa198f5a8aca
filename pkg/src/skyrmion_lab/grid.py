"""Sampled sphere-valued fields on uniform planar grids.

Everything numeric in the package bottoms out here: the grid geometry, the
finite-difference operators (and their exact transposes, needed by the
gradient flow), trapezoid quadrature, a deterministic reduction, the two
stereographic charts and the distances d_M / d_M'.

Array layout: ``values[i, j]`` is the vector at ``x1 = coords[j]``,
``x2 = coords[i]``, i.e. axis 1 is the x1 direction and axis 0 is x2.
"""
from __future__ import annotations

import csv
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.sparse as sparse

E3 = np.array([0.0, 0.0, 1.0])

#: row block used by :func:`reduce_sum`; fixed so the summation tree never
#: depends on the number of worker threads.
REDUCE_BLOCK_ROWS = 64

_MAGIC = b"SFLD"
_VERSION = 1
_HEADER = struct.Struct("<4sIQd8x")  # 32 bytes


class FieldError(ValueError):
    """Raised for malformed fields, bad parameters and mismatched grids."""


class NonFiniteError(FieldError, ArithmeticError):
    """A sampled value or integrand is NaN or infinite."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform square grid on [-S, S]^2 with N samples per axis."""

    half_width: float
    samples_per_axis: int

    def __post_init__(self):
        if not self.half_width > 0:
            raise FieldError(f"half_width must be positive, got {self.half_width}")
        if int(self.samples_per_axis) != self.samples_per_axis or self.samples_per_axis < 3:
            raise FieldError(f"samples_per_axis must be an integer >= 3, got {self.samples_per_axis}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.samples_per_axis - 1)

    @property
    def coords(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.samples_per_axis)

    def mesh(self):
        """Return (X1, X2) coordinate arrays, each of shape (N, N)."""
        c = self.coords
        return np.meshgrid(c, c)

    def refined(self) -> "GridSpec":
        """Same window, spacing halved (N -> 2N - 1)."""
        return GridSpec(self.half_width, 2 * self.samples_per_axis - 1)

    @classmethod
    def with_spacing(cls, half_width: float, spacing: float, odd: bool = True) -> "GridSpec":
        n = int(np.ceil(2.0 * half_width / spacing)) + 1
        if odd and n % 2 == 0:
            n += 1
        return cls(half_width, max(n, 3))


def normalize(values: np.ndarray) -> np.ndarray:
    return values / np.linalg.norm(values, axis=-1, keepdims=True)


class SphereField:
    """Immutable unit-vector field on a :class:`GridSpec`, equal to e3 off-grid."""

    far_field = E3

    def __init__(self, spec: GridSpec, values, *, renormalize: bool = True):
        values = np.array(values, dtype=float)
        n = spec.samples_per_axis
        if values.shape != (n, n, 3):
            raise FieldError(f"expected values of shape {(n, n, 3)}, got {values.shape}")
        bad = ~np.isfinite(values).all(axis=-1)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            x = spec.coords
            raise NonFiniteError(f"non-finite value at grid node ({i}, {j}) = ({x[j]:g}, {x[i]:g})")
        if renormalize:
            values = normalize(values)
        elif np.abs(np.linalg.norm(values, axis=-1) - 1.0).max() > 1e-12:
            raise FieldError("field values are not unit vectors")
        values.setflags(write=False)
        self.spec = spec
        self.values = values

    @classmethod
    def homogeneous(cls, spec: GridSpec) -> "SphereField":
        n = spec.samples_per_axis
        return cls(spec, np.broadcast_to(E3, (n, n, 3)))

    @property
    def n1(self):
        return self.values[..., 0]

    @property
    def n2(self):
        return self.values[..., 1]

    @property
    def n3(self):
        return self.values[..., 2]

    def gradients(self, order: int = 4):
        h = self.spec.spacing
        return gradients(self.values, h, h, order=order)

    def weights(self) -> np.ndarray:
        h = self.spec.spacing
        n = self.spec.samples_per_axis
        return trapezoid_weights(n, n, h, h)

    def integrate(self, density: np.ndarray) -> float:
        return reduce_sum(self.weights() * density)

    def at(self, x1, x2) -> np.ndarray:
        """Bilinear interpolation (renormalized); e3 outside the grid square."""
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        S, h = self.spec.half_width, self.spec.spacing
        n = self.spec.samples_per_axis
        out = np.broadcast_to(E3, np.broadcast(x1, x2).shape + (3,)).copy()
        inside = (np.abs(x1) <= S) & (np.abs(x2) <= S)
        if inside.any():
            u = (np.broadcast_to(x1, inside.shape)[inside] + S) / h
            w = (np.broadcast_to(x2, inside.shape)[inside] + S) / h
            j = np.clip(np.floor(u).astype(int), 0, n - 2)
            i = np.clip(np.floor(w).astype(int), 0, n - 2)
            fu = (u - j)[:, None]
            fw = (w - i)[:, None]
            v = self.values
            val = ((1 - fu) * (1 - fw) * v[i, j] + fu * (1 - fw) * v[i, j + 1]
                   + (1 - fu) * fw * v[i + 1, j] + fu * fw * v[i + 1, j + 1])
            out[inside] = normalize(val)
        return out

    def shifted(self, cells1: int, cells2: int) -> "SphereField":
        """Translate by whole grid cells, filling vacated nodes with e3."""
        n = self.spec.samples_per_axis
        out = np.broadcast_to(E3, (n, n, 3)).copy()
        src = self.values
        i0, i1 = max(cells2, 0), n + min(cells2, 0)
        j0, j1 = max(cells1, 0), n + min(cells1, 0)
        out[i0:i1, j0:j1] = src[i0 - cells2:i1 - cells2, j0 - cells1:j1 - cells1]
        return SphereField(self.spec, out, renormalize=False)

    def rotated_quarter(self) -> "SphereField":
        """Rotate the domain by +pi/2 and the horizontal codomain by +pi/2."""
        # new(x) = R n(R^{-1} x); on the grid R^{-1} maps node (i, j) -> (N-1-j, i)
        v = _rot_nodes(self.values)
        out = np.stack([-v[..., 1], v[..., 0], v[..., 2]], axis=-1)
        return SphereField(self.spec, out, renormalize=False)

    # -- serialization -------------------------------------------------
    def save(self, path) -> None:
        n = self.spec.samples_per_axis
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, _VERSION, n, float(self.spec.half_width)))
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "SphereField":
        data = Path(path).read_bytes()
        if len(data) < _HEADER.size:
            raise FieldError("truncated SphereField file")
        magic, version, n, S = _HEADER.unpack_from(data)
        if magic != _MAGIC:
            raise FieldError(f"bad magic {magic!r}")
        if version != _VERSION:
            raise FieldError(f"unsupported SphereField version {version}")
        body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
        if body.size != n * n * 3:
            raise FieldError(f"expected {n * n * 3} floats, found {body.size}")
        return cls(GridSpec(S, int(n)), body.reshape(n, n, 3), renormalize=False)

    def to_csv(self, path) -> None:
        X1, X2 = self.spec.mesh()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x1", "x2", "n1", "n2", "n3"])
            for row in zip(X1.ravel(), X2.ravel(), *self.values.reshape(-1, 3).T):
                w.writerow([repr(float(v)) for v in row])


def _rot_nodes(values: np.ndarray) -> np.ndarray:
    # out[i, j] = values at R^{-1}(x1_j, x2_i) = (x2_i, -x1_j) -> node (N-1-j, i)
    return np.ascontiguousarray(np.swapaxes(values, 0, 1)[:, ::-1])


# -- finite differences -------------------------------------------------------

@lru_cache(maxsize=64)
def _unit_diff_matrix(n: int, order: int) -> sparse.csr_matrix:
    """First-derivative matrix for unit spacing.

    Interior rows use the centred stencil of the requested order (2 or 4);
    rows next to the boundary fall back to the 3-point centred stencil and the
    two end rows use the one-sided second-order stencil.  The interior part is
    antisymmetric, so summation by parts is exact for fields that are
    constant near the boundary.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    if n < 5 and order == 4:
        order = 2
    D = sparse.lil_matrix((n, n))
    for i in range(1, n - 1):
        if order == 4 and 2 <= i <= n - 3:
            D[i, i - 2], D[i, i - 1], D[i, i + 1], D[i, i + 2] = 1 / 12, -2 / 3, 2 / 3, -1 / 12
        else:
            D[i, i - 1], D[i, i + 1] = -0.5, 0.5
    D[0, 0], D[0, 1], D[0, 2] = -1.5, 2.0, -0.5
    D[n - 1, n - 3], D[n - 1, n - 2], D[n - 1, n - 1] = 0.5, -2.0, 1.5
    return D.tocsr()


def diff_matrix(n: int, spacing: float, order: int = 4) -> sparse.csr_matrix:
    return _unit_diff_matrix(n, order) / spacing


def _apply_axis0(M, a):
    shp = a.shape
    return (M @ a.reshape(shp[0], -1)).reshape(shp)


def _apply_axis1(M, a):
    t = np.swapaxes(a, 0, 1)
    shp = t.shape
    return np.swapaxes((M @ np.ascontiguousarray(t).reshape(shp[0], -1)).reshape(shp), 0, 1)


def diff_along(a: np.ndarray, axis: int, spacing: float, order: int = 4) -> np.ndarray:
    """Apply the derivative stencil of :func:`diff_matrix` along ``axis``.

    Written as weighted differences of node pairs so a constant field has an
    exactly zero derivative (the sparse product only cancels to roundoff).
    """
    a = np.moveaxis(np.asarray(a, dtype=float), axis, 0)
    n = a.shape[0]
    if n < 5:
        order = 2
    out = np.empty_like(a)
    out[0] = 2.0 * (a[1] - a[0]) - 0.5 * (a[2] - a[0])
    out[-1] = 2.0 * (a[-1] - a[-2]) - 0.5 * (a[-1] - a[-3])
    if order == 4:
        out[1] = 0.5 * (a[2] - a[0])
        out[-2] = 0.5 * (a[-1] - a[-3])
        out[2:-2] = (2.0 / 3.0) * (a[3:-1] - a[1:-3]) - (1.0 / 12.0) * (a[4:] - a[:-4])
    elif order == 2:
        out[1:-1] = 0.5 * (a[2:] - a[:-2])
    else:
        raise ValueError("order must be 2 or 4")
    return np.moveaxis(out / spacing, 0, axis)


def gradients(values: np.ndarray, h1: float, h2: float, order: int = 4):
    """Return (d1, d2): derivatives along x1 (axis 1) and x2 (axis 0)."""
    return diff_along(values, 1, h1, order), diff_along(values, 0, h2, order)


def gradients_adjoint(g1: np.ndarray, g2: np.ndarray, h1: float, h2: float, order: int = 4):
    """Apply the transposes of the two derivative operators and add."""
    n2, n1 = g1.shape[:2]
    return (_apply_axis1(diff_matrix(n1, h1, order).T.tocsr(), g1)
            + _apply_axis0(diff_matrix(n2, h2, order).T.tocsr(), g2))


def trapezoid_weights(n_rows: int, n_cols: int, h1: float, h2: float) -> np.ndarray:
    w1 = np.full(n_cols, h1)
    w1[[0, -1]] = h1 / 2
    w2 = np.full(n_rows, h2)
    w2[[0, -1]] = h2 / 2
    return np.outer(w2, w1)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("SKYRMION_LAB_THREADS", "1")))
    except ValueError:
        return 1


def _pairwise(parts):
    parts = list(parts)
    while len(parts) > 1:
        nxt = [parts[k] + parts[k + 1] for k in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0] if parts else 0.0


def reduce_sum(a: np.ndarray) -> float:
    """Deterministic sum of a 2D array.

    Rows are cut into fixed blocks, each block is summed with numpy (pairwise
    over a contiguous buffer) and block totals are combined by a fixed
    pairwise tree, so the result is bitwise identical for any
    ``SKYRMION_LAB_THREADS`` setting.
    """
    a = np.ascontiguousarray(a, dtype=float)
    if a.ndim != 2:
        a = a.reshape(a.shape[0], -1) if a.ndim > 2 else a.reshape(1, -1)
    blocks = [a[k:k + REDUCE_BLOCK_ROWS] for k in range(0, a.shape[0], REDUCE_BLOCK_ROWS)]
    nthreads = _threads()
    if nthreads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            sums = list(pool.map(lambda b: float(np.sum(b)), blocks))
    else:
        sums = [float(np.sum(b)) for b in blocks]
    return float(_pairwise(sums))


# -- stereographic charts -------------------------------------------------------

def north_chart_to_sphere(v) -> np.ndarray:
    """n from the northpole chart v (v = infinity maps to e3).

    n1 + i n2 = 2 conj(v) / (|v|^2 + 1),  n3 = (|v|^2 - 1) / (|v|^2 + 1).
    Large |v| is routed through w = 1/v so no overflow can occur.
    """
    v = np.asarray(v, dtype=complex)
    out = np.empty(v.shape + (3,))
    big = ~np.isfinite(v) | (np.abs(v) > 1.0)
    small = ~big
    vs = v[small]
    s = np.abs(vs) ** 2 + 1.0
    out[small] = np.stack([2 * vs.real / s, -2 * vs.imag / s, (s - 2.0) / s], axis=-1)
    if big.any():
        vb = v[big]
        w = np.where(np.isfinite(vb), 1.0 / np.where(np.isfinite(vb), vb, 1.0), 0.0)
        out[big] = south_chart_to_sphere(w)
    return out


def south_chart_to_sphere(w) -> np.ndarray:
    """n from the southpole chart w = (n1 + i n2) / (1 + n3); w = 0 is e3."""
    w = np.asarray(w, dtype=complex)
    s = 1.0 + np.abs(w) ** 2
    return np.stack([2 * w.real / s, 2 * w.imag / s, (2.0 - s) / s], axis=-1)


def sphere_to_north_chart(n) -> np.ndarray:
    """v = (1 + n3) / (n1 + i n2); infinity at the northpole."""
    n = np.asarray(n, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = (n[..., 0] - 1j * n[..., 1]) / (1.0 - n[..., 2])
    return np.where(n[..., 2] >= 1.0, np.inf + 0j, v)


def sphere_to_south_chart(n) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    return (n[..., 0] + 1j * n[..., 1]) / (1.0 + n[..., 2])


# -- norms and distances --------------------------------------------------------

def _check_same(n: SphereField, m: SphereField):
    if n.spec != m.spec:
        raise FieldError(f"grid mismatch: {n.spec} vs {m.spec}")


def lp_norm(field_diff: np.ndarray, weights: np.ndarray, p: float) -> float:
    mag = np.sqrt(np.sum(field_diff ** 2, axis=-1)) if field_diff.ndim == 3 else np.abs(field_diff)
    return reduce_sum(weights * mag ** p) ** (1.0 / p)


def gradient_l2(diff: np.ndarray, h: float, weights: np.ndarray, order: int = 4) -> float:
    d1, d2 = gradients(diff if diff.ndim == 3 else diff[..., None], h, h, order=order)
    return np.sqrt(reduce_sum(weights * (np.sum(d1 ** 2, -1) + np.sum(d2 ** 2, -1))))


def metric_dM(n: SphereField, m: SphereField) -> float:
    """||n - m||_{L^4} + ||grad(n - m)||_{L^2}."""
    _check_same(n, m)
    diff = n.values - m.values
    w = n.weights()
    return lp_norm(diff, w, 4) + gradient_l2(diff, n.spec.spacing, w)


def metric_dMprime(n: SphereField, m: SphereField) -> float:
    """||n - m||_{L^2} + ||grad(n - m)||_{L^2}."""
    _check_same(n, m)
    diff = n.values - m.values
    w = n.weights()
    return lp_norm(diff, w, 2) + gradient_l2(diff, n.spec.spacing, w)


def metric_parts(n: SphereField, m: SphereField) -> dict:
    _check_same(n, m)
    diff = n.values - m.values
    w = n.weights()
    return {"L2": lp_norm(diff, w, 2), "L4": lp_norm(diff, w, 4),
            "grad_L2": gradient_l2(diff, n.spec.spacing, w)}


def ladyzhenskaya_ratio(f: np.ndarray, spec: GridSpec) -> float:
    """||f||_4 / (||f||_2^{1/2} ||grad f||_2^{1/2}) for a scalar or vector sample."""
    n = spec.samples_per_axis
    h = spec.spacing
    w = trapezoid_weights(n, n, h, h)
    l4 = lp_norm(f, w, 4)
    l2 = lp_norm(f, w, 2)
    g = gradient_l2(f, h, w)
    return l4 / np.sqrt(l2 * g)


def sample(amap, spec: GridSpec) -> SphereField:
    """Evaluate a map (any callable (x1, x2) -> (..., 3)) at every grid node."""
    X1, X2 = spec.mesh()
    return SphereField(spec, amap(X1, X2))
