"""Projected gradient flow on the discrete E_{r,h}, stability probes and sweeps.

The discrete energy of a grid field (with the integrated-by-parts helicity)

    E(n) = sum_nodes w [ 1/2 |D1 n|^2 + 1/2 |D2 n|^2
                         + 2 r (n3 - 1)(D1 n2 - D2 n1) + 1/2 (1 - n3)^2 + h (1 - n3) ]

is a polynomial in the raw node values, so its gradient is exact:
``w dE/dn + D1^T (w dE/dD1n) + D2^T (w dE/dD2n)``.  The flow divides by the
node weight (an L^2 gradient), projects on the tangent plane of each node,
steps, and renormalizes.  The outer ring of nodes is held fixed.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import solutions as sol
from .energy import FOUR_PI, evaluate_map, field_integrals, map_integrals
from .grid import (GridSpec, SphereField, diff_along, diff_matrix, normalize, reduce_sum, sample,
                   trapezoid_weights)


# ---------------------------------------------------------------------------
# discrete energy and gradient
# ---------------------------------------------------------------------------

class DiscreteEnergy:
    """E_{r,h} and its gradient on a fixed uniform grid."""

    def __init__(self, spec: GridSpec, r: float, h: float = 0.0, order: int = 4):
        self.spec, self.r, self.h, self.order = spec, float(r), float(h), order
        n = spec.samples_per_axis
        self.D = diff_matrix(n, spec.spacing, order)
        self.DT = self.D.T.tocsr()
        self.w = trapezoid_weights(n, n, spec.spacing, spec.spacing)

    def _d1(self, a):  # along x1 = axis 1
        return diff_along(a, 1, self.spec.spacing, self.order)

    def _d2(self, a):
        return diff_along(a, 0, self.spec.spacing, self.order)

    def _d1T(self, a):
        return np.stack([(self.DT @ a[..., c].T).T for c in range(3)], -1)

    def _d2T(self, a):
        return np.stack([self.DT @ a[..., c] for c in range(3)], -1)

    def density(self, n, d1, d2):
        curl = d1[..., 1] - d2[..., 0]
        return (0.5 * (np.sum(d1 * d1, -1) + np.sum(d2 * d2, -1))
                + 2.0 * self.r * (n[..., 2] - 1.0) * curl
                + 0.5 * (1.0 - n[..., 2]) ** 2 + self.h * (1.0 - n[..., 2]))

    def energy(self, n) -> float:
        d1, d2 = self._d1(n), self._d2(n)
        return reduce_sum(self.w * self.density(n, d1, d2))

    def energy_and_gradient(self, n):
        """Energy and d E / d(values) (raw, unweighted, unprojected)."""
        d1, d2 = self._d1(n), self._d2(n)
        E = reduce_sum(self.w * self.density(n, d1, d2))
        w = self.w[..., None]
        a = 2.0 * self.r * (n[..., 2] - 1.0)
        g1 = d1.copy()
        g1[..., 1] += a
        g2 = d2.copy()
        g2[..., 0] -= a
        gn = np.zeros_like(n)
        gn[..., 2] = 2.0 * self.r * (d1[..., 1] - d2[..., 0]) - (1.0 - n[..., 2]) - self.h
        grad = w * gn + self._d1T(w * g1) + self._d2T(w * g2)
        return E, grad


def tangent_projection(g, n):
    return g - np.sum(g * n, -1, keepdims=True) * n


def _interior_mask(n: int):
    m = np.zeros((n, n), bool)
    m[1:-1, 1:-1] = True
    return m


# ---------------------------------------------------------------------------
# flow
# ---------------------------------------------------------------------------

@dataclass
class FlowParams:
    step_size: float = None  # default 0.2 * spacing^2
    max_iters: int = 500
    grad_tol: float = 1e-6
    renormalize_every: int = 1
    backtrack: float = 0.5
    growth: float = 1.25
    min_step: float = 1e-12
    divergence_drop: float = 1e3
    snapshot_every: int = 100

    def __post_init__(self):
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.max_iters < 0 or self.renormalize_every < 1:
            raise ValueError("max_iters >= 0 and renormalize_every >= 1 required")


@dataclass
class FlowTrajectory:
    energies: list
    degrees: list
    steps: list
    reason: str
    final: SphereField
    snapshots: dict = field(default_factory=dict)
    rejected: int = 0

    @property
    def iterations(self) -> int:
        return len(self.energies) - 1

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "E", "Q_raw", "step"])
        for i, (e, q, s) in enumerate(zip(self.energies, self.degrees, self.steps)):
            w.writerow([i, repr(float(e)), repr(float(q)), repr(float(s))])
        return buf.getvalue()


def gradient_flow(n0: SphereField, r: float, h: float = 0.0, params: FlowParams = None,
                  order: int = 4) -> FlowTrajectory:
    """Backtracking projected steepest descent of the discrete E_{r,h}."""
    params = params or FlowParams()
    spec = n0.spec
    energy = DiscreteEnergy(spec, r, h, order)
    inner = _interior_mask(spec.samples_per_axis)[..., None]
    w = energy.w[..., None]
    tau = params.step_size or 0.2 * spec.spacing ** 2
    tau_max = 8.0 * tau

    n = np.array(n0.values)
    E, g = energy.energy_and_gradient(n)
    E0 = E
    energies, degrees, steps = [E], [field_integrals(n0, order).Q], [0.0]
    snapshots = {0: n0}
    rejected = 0
    reason = "max_iters"
    it = 0
    while True:
        pg = np.where(inner, tangent_projection(g / w, n), 0.0)
        if np.max(np.abs(pg)) < params.grad_tol:
            reason = "converged"
            break
        if it >= params.max_iters:
            break
        while True:
            trial = n - tau * pg
            if (it + 1) % params.renormalize_every == 0:
                trial = normalize(trial)
            E_new, g_new = energy.energy_and_gradient(trial)
            if E_new <= E:
                break
            rejected += 1
            tau *= params.backtrack
            if tau < params.min_step:
                reason = "stalled"
                break
        if reason == "stalled":
            break
        it += 1
        n, E, g = trial, E_new, g_new
        field_now = SphereField(spec, n, renormalize=False) if params.renormalize_every == 1 \
            else SphereField(spec, n)
        energies.append(E)
        degrees.append(field_integrals(field_now, order).Q)
        steps.append(tau)
        if params.snapshot_every and it % params.snapshot_every == 0:
            snapshots[it] = field_now
        if E < E0 - params.divergence_drop:
            reason = "energy_diverging"
            break
        tau = min(tau * params.growth, tau_max)
    final = SphereField(spec, n)
    snapshots[it] = final
    return FlowTrajectory(energies, degrees, steps, reason, final, snapshots, rejected)


def gradient_check(n: SphereField, r: float, h: float = 0.0, nodes: int = 20, eps: float = 1e-5,
                   seed: int = 0, order: int = 4):
    """Compare the analytic gradient with central differences at random nodes.

    Each probe perturbs one interior node along a random tangent direction
    (no renormalization) and returns the worst relative discrepancy.
    """
    rng = np.random.default_rng(seed)
    energy = DiscreteEnergy(n.spec, r, h, order)
    vals = np.array(n.values)
    _, grad = energy.energy_and_gradient(vals)
    N = n.spec.samples_per_axis
    worst = 0.0
    for _ in range(nodes):
        i, j = rng.integers(1, N - 1, size=2)
        t = tangent_projection(rng.normal(size=3), vals[i, j])
        t /= np.linalg.norm(t)
        plus, minus = vals.copy(), vals.copy()
        plus[i, j] += eps * t
        minus[i, j] -= eps * t
        fd = (energy.energy(plus) - energy.energy(minus)) / (2 * eps)
        an = float(grad[i, j] @ t)
        worst = max(worst, abs(fd - an) / max(abs(an), abs(fd), 1e-300))
    return worst


def tangent_noise(n: SphereField, amplitude: float, seed: int = 0, smooth: float = 0.0) -> SphereField:
    """n plus random tangent noise of sup-norm ``amplitude`` (boundary untouched)."""
    rng = np.random.default_rng(seed)
    noise = rng.normal(size=n.values.shape)
    if smooth > 0:
        from scipy.ndimage import gaussian_filter
        noise = gaussian_filter(noise, sigma=(smooth, smooth, 0))
    noise = tangent_projection(noise, n.values)
    noise *= amplitude / np.max(np.linalg.norm(noise, axis=-1))
    noise[[0, -1], :] = 0
    noise[:, [0, -1]] = 0
    return SphereField(n.spec, n.values + noise)


# ---------------------------------------------------------------------------
# stability probes
# ---------------------------------------------------------------------------

@dataclass
class ProbeRow:
    shape: str
    lam: float
    t: float
    l2: float
    l4: float
    gap: float
    quadratic_form: float


@dataclass
class ProbeReport:
    r: float
    h: float
    rows: list
    verdict: str
    witness: ProbeRow = None
    largest_positive_l2: float = 0.0
    flip_lambda: dict = field(default_factory=dict)


def quadratic_form(lam: float, h: float, shape: str = "x", refine: float = 1.0):
    """1/2 int (|grad phi_lam|^2 + h |phi_lam|^2) by quadrature."""
    pm = sol.PerturbedHomogeneous(0.0, lam, shape)
    total = 0.0
    for p in pm.patches(refine):
        X1, X2 = p.mesh()
        phi = pm.phi(X1 / lam, X2 / lam)
        d1, d2 = pm.dphi(X1 / lam, X2 / lam)
        dens = (np.sum(d1 ** 2, -1) + np.sum(d2 ** 2, -1)) / lam ** 2 + h * np.sum(phi ** 2, -1)
        h1, h2 = p.spacing
        total += 0.5 * reduce_sum(trapezoid_weights(p.counts[1], p.counts[0], h1, h2) * dens)
    return total


def _deviation_norms(pm: sol.PerturbedHomogeneous, refine=1.0):
    l2 = l4 = 0.0
    for p in pm.patches(refine):
        X1, X2 = p.mesh()
        d = pm.evaluate(X1, X2) - sol.E3
        m2 = np.sum(d * d, -1)
        w = trapezoid_weights(p.counts[1], p.counts[0], *p.spacing)
        l2 += reduce_sum(w * m2)
        l4 += reduce_sum(w * m2 * m2)
    return math.sqrt(l2), l4 ** 0.25


DEFAULT_LAMBDAS = (0.25, 0.5, 1.0, 2.0, 4.0)
DEFAULT_TS = (0.005, 0.01, 0.02, 0.05)
WITNESS_LAMBDAS = tuple(float(x) for x in range(1, 33))


def probe_homogeneous_stability(r: float, h: float, lambdas=None, ts=None,
                                shapes=sol.PERTURBATION_SHAPES, l2_radius=None,
                                l4_radius=None) -> ProbeReport:
    """Energy gaps E_{r,h}[n_t] - E_{r,h}[e3] over dilated bump perturbations.

    With h < 0 the default scan runs lam = 1, 2, ..., 32 at t = 0.01 looking
    for a negative gap; otherwise it scans small lam and t, keeping only
    probes inside the requested L^2 or L^4 ball.  The verdict is empirical:
    it reports what was tested, not a certified stability radius.
    """
    if lambdas is None:
        lambdas = WITNESS_LAMBDAS if h < 0 else DEFAULT_LAMBDAS
    if ts is None:
        ts = (0.01,) if h < 0 else DEFAULT_TS
    rows = []
    for shape in shapes:
        for lam in lambdas:
            qf = quadratic_form(lam, h, shape)
            for t in ts:
                pm = sol.PerturbedHomogeneous(t, lam, shape)
                l2, l4 = _deviation_norms(pm)
                if l2_radius is not None and l2 > l2_radius:
                    continue
                if l4_radius is not None and l4 > l4_radius:
                    continue
                gap = evaluate_map(pm, r, h).E_rh  # E_{r,h}[e3] = 0
                rows.append(ProbeRow(shape, float(lam), float(t), l2, l4, gap, qf))
    negative = [row for row in rows if row.gap < 0]
    report = ProbeReport(r, h, rows, "")
    positive_l2 = [row.l2 for row in rows if row.gap > 0]
    if negative:
        report.witness = min(negative, key=lambda row: (row.lam, row.t))
        report.verdict = (f"unstable (witness lambda={report.witness.lam:g}, t={report.witness.t:g}, "
                          f"gap={report.witness.gap:.3e})")
    elif rows:
        report.verdict = "stable (all probes positive)"
    else:
        report.verdict = "no probes inside the requested ball"
    if not negative and positive_l2:
        report.largest_positive_l2 = max(positive_l2)
    for shape in shapes:
        qs = [(row.lam, row.quadratic_form) for row in rows if row.shape == shape]
        flips = [lam for lam, q in qs if q < 0]
        if flips:
            report.flip_lambda[shape] = min(flips)
    return report


def flip_lambda(h: float, shape: str = "x") -> float:
    """Dilation where the quadratic form changes sign: lam^2 = G / (|h| M)."""
    if h >= 0:
        return math.inf
    G = 2 * quadratic_form(1.0, 0.0, shape)
    M = 2 * (quadratic_form(1.0, 1.0, shape) - quadratic_form(1.0, 0.0, shape))
    return math.sqrt(G / (-h * M))


@dataclass
class InstabilityEvidence:
    start_energy: float
    final_energy: float
    iterations: int
    reason: str
    degree_start: float
    degree_final: float

    @property
    def descended(self) -> bool:
        return self.final_energy < self.start_energy


def skyrmion_flow_probe(r: float, h: float = 0.0, iters: int = 500, N: int = 129, S: float = None,
                        seed: int = 0) -> InstabilityEvidence:
    """Flow from the sampled h^r and report whether the energy drops."""
    S = S or 20.0 * r
    n0 = sample(sol.skyrmion(r), GridSpec(S, N))
    traj = gradient_flow(n0, r, h, FlowParams(max_iters=iters, snapshot_every=0))
    return InstabilityEvidence(traj.energies[0], traj.energies[-1], traj.iterations, traj.reason,
                               traj.degrees[0], traj.degrees[-1])


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def minimal_energy_formula(r: float, k: int) -> float:
    """4 pi |k| (1 - 2 r^2) for k < 0 and 4 pi k for k >= 0 (valid for 0 < r <= 1)."""
    return FOUR_PI * abs(k) * (1 - 2 * r * r) if k < 0 else FOUR_PI * k


@dataclass
class SweepRow:
    r: float
    k: int
    scale: float
    E: float
    formula_value: float
    Q_raw: float
    resolved: bool

    @property
    def gap(self) -> float:
        return self.E - self.formula_value


def construction(r: float, k: int, R: float, lam: float):
    if k < 0:
        return sol.multi_vortex(r, R, k)
    if k > 0:
        return sol.multi_vortex(lam, R, k)
    return sol.homogeneous()


def minimal_energy_sweep(r_values, k_values=range(-3, 4), R_schedule=(8.0, 16.0, 32.0),
                         lam: float = 0.05):
    """Energies of the gluing constructions over the R schedule.

    Returns (all_rows, best_rows); the best row per (r, k) is the lowest
    energy reached.  Constructions for k > 0 do not depend on r, so their
    integrals are reused across r.
    """
    r_values = [float(r) for r in r_values]
    if not r_values:
        raise ValueError("empty r list")
    cache = {}
    rows = []
    for r in r_values:
        if not 0 < r <= 1:
            raise ValueError(f"r = {r} outside (0, 1]")
        for k in k_values:
            k = int(k)
            schedule = R_schedule if k != 0 else (0.0,)
            for R in schedule:
                key = (k, R) if k >= 0 else (k, R, r)
                if key not in cache:
                    cache[key] = map_integrals(construction(r, k, R, lam))[0]
                b = cache[key].breakdown(r)
                rows.append(SweepRow(r, k, R, b.E_r, minimal_energy_formula(r, k), b.Q_raw,
                                     b.degree_resolved and b.Q_int == k))
    best = {}
    for row in rows:
        cur = best.get((row.r, row.k))
        if cur is None or row.E < cur.E:
            best[(row.r, row.k)] = row
    return rows, [best[key] for key in sorted(best)]


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["r", "k", "scale", "E", "formula_value", "gap"])
    for row in rows:
        w.writerow([repr(row.r), row.k, repr(float(row.scale)), repr(float(row.E)),
                    repr(float(row.formula_value)), repr(float(row.gap))])
    return buf.getvalue()


def line_energy_oracle(r: float) -> float:
    """int_R 2 (1 - r^2) / (r^2 x^2 + 1)^2 dx by adaptive quadrature (= pi (1 - r^2) / r)."""
    val, _ = integrate.quad(lambda x: 2 * (1 - r * r) / (r * r * x * x + 1) ** 2, -np.inf, np.inf)
    return val


@dataclass
class DivergenceResult:
    r: float
    k: int
    L: list
    E: list
    slope_fit: float
    slope_last: float
    line_integral: float
    decreasing: bool
    Q: list

    @property
    def ends_negative(self) -> bool:
        return self.E[-1] < 0


def divergence_sweep(r: float, k: int = -1, L_values=(10.0, 20.0, 40.0, 80.0)) -> DivergenceResult:
    """E_r of the stretched maps over L, with a least-squares slope."""
    if not r > 1:
        raise ValueError("divergence sweep needs r > 1")
    Ls = [float(L) for L in L_values]
    Es, Qs = [], []
    for L in Ls:
        b = evaluate_map(sol.stretched(r, L, k), r)
        Es.append(b.E_r)
        Qs.append(b.Q_raw)
    slope = float(np.polyfit(Ls, Es, 1)[0]) if len(Ls) > 1 else float("nan")
    last = (Es[-1] - Es[-2]) / (Ls[-1] - Ls[-2]) if len(Ls) > 1 else float("nan")
    dec = all(b < a for a, b in zip(Es, Es[1:]))
    return DivergenceResult(r, k, Ls, Es, slope, last, line_energy_oracle(r), dec, Qs)


def divergence_csv(res: DivergenceResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["r", "k", "scale", "E", "formula_value", "gap"])
    for L, E in zip(res.L, res.E):
        # no finite minimum exists; the reference column is the linear rate 2 L I
        ref = 2 * L * res.line_integral
        w.writerow([repr(res.r), res.k, repr(L), repr(E), repr(ref), repr(E - ref)])
    return buf.getvalue()
