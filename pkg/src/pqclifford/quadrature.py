"""Boundary integrals of kernel x form x field, epsilon limits, C_{p,q}.

Every surface is covered by charts (see :mod:`pqclifford.geometry`).  The
first chart parameter is the inner variable.  Its range is split into
Gauss-Legendre panels that are graded geometrically towards every crossing
of the null cone through ``X_0``, down to a width of ``band_ratio * |eps|``.
The remaining parameters use tensor Gauss-Legendre rules.

Work is split into fixed chunks of outer nodes and reduced in a fixed order,
so results do not depend on the number of worker threads.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Literal, Optional, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .algebra import Multivector, Signature, Space, as_signature, mul_arrays, vector_masks
from .fields import PolynomialField, dirac_field
from .geometry import (
    Boundary, Chart, box_face_charts, conj_coords, d_form_array, h_eps_pullback_array,
    ray_charts, sphere_volume, volume_form,
)
from .kernels import g_eps_coords, g_kernel_coords

Side = Literal["left", "right"]

#: minimal ratio |tangential grad N| / (2 ||X - X_0||) accepted at a cone crossing
TRANSVERSAL_TOL = 1e-3


class NonFiniteIntegrand(ArithmeticError):
    """The integrand evaluated to inf/nan at a quadrature node."""

    def __init__(self, msg, node=None):
        super().__init__(msg)
        self.node = node


class TransversalityError(ValueError):
    """The boundary meets the shifted null cone (nearly) tangentially."""


class NonConvergedError(ArithmeticError):
    """The epsilon series is not Cauchy within the requested tolerance."""

    def __init__(self, msg, estimate=None):
        super().__init__(msg)
        self.estimate = estimate


@dataclass(frozen=True)
class GridSpec:
    """Node layout.

    ``outer_nodes`` is a count per angle of length pi (an angle ranging over
    2 pi gets twice as many), or an explicit tuple, one count per outer
    parameter.  ``depth=None`` grades the cone band until the panel width is
    at most ``band_ratio * |eps|``; an explicit depth is a lower bound.
    """

    inner_nodes: int = 16
    inner_panels: int = 4
    outer_nodes: int | tuple[int, ...] = 24
    band_halfwidth: float = 0.25
    depth: Optional[int] = None
    band_ratio: float = 0.25
    volume_nodes: int = 12
    root_samples: int = 400
    chunk: int = 1 << 15
    threads: int = 1

    def __post_init__(self):
        counts = [self.inner_nodes, self.volume_nodes]
        counts += list(self.outer_nodes) if isinstance(self.outer_nodes, tuple) else [self.outer_nodes]
        if min(counts) < 4:
            raise ValueError("node counts must be >= 4")
        if self.inner_panels < 1:
            raise ValueError("inner_panels must be >= 1")
        if self.depth is not None and self.depth < 0:
            raise ValueError("refinement depth must be >= 0")
        if not (self.band_halfwidth > 0 and self.band_ratio > 0):
            raise ValueError("band_halfwidth and band_ratio must be positive")
        if self.threads < 1 or self.chunk < 1:
            raise ValueError("threads and chunk must be >= 1")

    def doubled(self) -> "GridSpec":
        o = self.outer_nodes
        return replace(self, inner_nodes=2 * self.inner_nodes, volume_nodes=2 * self.volume_nodes,
                       outer_nodes=tuple(2 * k for k in o) if isinstance(o, tuple) else 2 * o)

    def outer_counts(self, ranges: Sequence[tuple[float, float]]) -> list[int]:
        if isinstance(self.outer_nodes, tuple):
            if len(self.outer_nodes) != len(ranges):
                raise ValueError(f"need {len(ranges)} outer node counts, got {len(self.outer_nodes)}")
            return list(self.outer_nodes)
        return [max(4, int(round(self.outer_nodes * (hi - lo) / math.pi))) for lo, hi in ranges]


@dataclass(frozen=True)
class EpsSchedule:
    eps0: float = 0.1
    ratio: float = 0.5
    steps: int = 6
    sign: int = 1
    order: int = 4

    def __post_init__(self):
        if not self.eps0 > 0:
            raise ValueError("eps0 must be > 0")
        if not 0 < self.ratio < 1:
            raise ValueError("ratio must lie in (0, 1)")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if self.order < 0:
            raise ValueError("order must be >= 0")

    def values(self) -> np.ndarray:
        return self.sign * self.eps0 * self.ratio ** np.arange(self.steps)


@dataclass
class IntegralEstimate:
    value: Multivector
    eps: np.ndarray
    series: list[Multivector]
    extrapolants: list[Multivector]
    limit: Multivector
    error: float
    converged: bool = True
    grid: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# 1-D rules


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def graded_breakpoints(lo: float, hi: float, roots: Iterable[float], base_panels: int,
                       halfwidth: float, min_width: float) -> np.ndarray:
    """Panel boundaries: uniform base panels plus geometric grading at each root."""
    pts = list(np.linspace(lo, hi, base_panels + 1))
    for r in roots:
        if not lo < r < hi:
            continue
        pts.append(r)
        w = halfwidth
        while True:
            pts.extend([r - w, r + w])
            if w <= min_width:
                break
            w /= 2
    pts = np.unique(np.clip(pts, lo, hi))
    keep = np.concatenate([[True], np.diff(pts) > 1e-14 * max(1.0, hi - lo)])
    return pts[keep]


def panel_rule(breaks: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = gauss_legendre(n)
    a, b = breaks[:-1, None], breaks[1:, None]
    half = (b - a) / 2
    return (a + half * (x + 1)).ravel(), (half * w).ravel()


def tensor_rule(ranges: Sequence[tuple[float, float]], counts: Sequence[int]):
    """Tensor Gauss-Legendre nodes ``(M, k)`` and weights ``(M,)``."""
    if not ranges:
        return np.zeros((1, 0)), np.ones(1)
    xs, ws = [], []
    for (lo, hi), n in zip(ranges, counts):
        x, w = gauss_legendre(n)
        xs.append(lo + (hi - lo) * (x + 1) / 2)
        ws.append(w * (hi - lo) / 2)
    grids = np.meshgrid(*xs, indexing="ij")
    wgrid = np.meshgrid(*ws, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1), np.prod([g.ravel() for g in wgrid], axis=0)


def richardson(values: np.ndarray, ratio: float, order: int = 4):
    """Neville table for a sequence with an error expansion in powers of eps.

    Returns ``(extrapolants, limit, error, extrapolated)`` where
    ``extrapolants[k]`` is the best estimate from the first ``k+1`` values.
    The error is the difference of the last two extrapolants; if that is
    larger than the raw last difference the sequence is treated as not
    polynomial in eps and the last raw value is returned instead.
    """
    v = np.asarray(values)
    K = v.shape[0]
    T = [v[0]]
    diag = [v[0]]
    for k in range(1, K):
        row = [v[k]]
        for m in range(1, min(k, order) + 1):
            rm = ratio ** m
            row.append((row[m - 1] - rm * T[m - 1]) / (1 - rm))
        T = row
        diag.append(row[-1])
    diag = np.array(diag)
    if K == 1:
        return diag, v[0], float("inf"), False
    ext_err = float(np.linalg.norm(diag[-1] - diag[-2]))
    raw_err = float(np.linalg.norm(v[-1] - v[-2]))
    if ext_err <= raw_err:
        return diag, diag[-1], ext_err, True
    return diag, v[-1], raw_err, False


# ---------------------------------------------------------------------------
# node generation


@dataclass
class NodeBatch:
    """Quadrature nodes of one chunk: points, oriented frames, normals, weights."""

    sig: Signature
    X: np.ndarray
    frames: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    jacobian: Optional[np.ndarray] = None

    def __len__(self):
        return self.X.shape[0]

    def d_real(self) -> np.ndarray:
        """``D x`` on the oriented frames as paravector coordinates."""
        if self.jacobian is not None:
            return volume_form(self.sig) * conj_coords(self.normals, self.sig) * self.jacobian[:, None]
        return d_form_array(self.frames, self.sig, "real-pq")


def _cone_values(chart: Chart, u: np.ndarray, x0: np.ndarray, sig: Signature) -> np.ndarray:
    d = chart.points(u) - x0
    return np.einsum("...j,j->...", d * d, sig.coordinate_signs())


def find_cone_roots(chart: Chart, outer: np.ndarray, x0: np.ndarray, sig: Signature,
                    samples: int = 400, tol: float = TRANSVERSAL_TOL) -> list[np.ndarray]:
    """Crossings of ``N(X - x0) = 0`` along the inner variable, per outer node.

    Sign changes between samples are bisected.  Sampled extrema that come
    close to zero are refined as well: a hidden pair of crossings is located,
    and a near-touch (within ``tol**2 ||X - x0||**2`` of the cone, no crossing)
    raises :class:`TransversalityError`.
    """
    lo, hi = chart.ranges[0]
    t = np.linspace(lo, hi, samples)
    out: list[np.ndarray] = []
    block = max(1, 200000 // samples)
    for s in range(0, outer.shape[0], block):
        ob = outer[s:s + block]
        u = np.concatenate([np.broadcast_to(t[None, :, None], (ob.shape[0], samples, 1)),
                            np.broadcast_to(ob[:, None, :], (ob.shape[0], samples, ob.shape[1]))], axis=-1)
        g = _cone_values(chart, u, x0, sig)
        change = np.signbit(g[:, :-1]) != np.signbit(g[:, 1:])
        oi, ti = np.nonzero(change)
        a, b = t[ti].copy(), t[ti + 1].copy()
        ga = g[oi, ti]
        ou = ob[oi]
        for _ in range(60):
            m = 0.5 * (a + b)
            gm = _cone_values(chart, np.concatenate([m[:, None], ou], axis=-1), x0, sig)
            left = np.signbit(gm) == np.signbit(ga)
            a = np.where(left, m, a)
            ga = np.where(left, gm, ga)
            b = np.where(left, b, m)
        roots = 0.5 * (a + b)
        extra = _near_touches(chart, ob, t, g, change, x0, sig, tol)
        for k in range(ob.shape[0]):
            r = roots[oi == k]
            if k in extra:
                r = np.sort(np.concatenate([r, extra[k]]))
            out.append(r)
    return out


def _near_touches(chart, ob, t, g, change, x0, sig, tol) -> dict[int, np.ndarray]:
    """Crossing pairs hidden between samples, keyed by row of ``ob``."""
    a = np.abs(g)
    interior = (a[:, 1:-1] <= a[:, :-2]) & (a[:, 1:-1] <= a[:, 2:]) & ~change[:, :-1] & ~change[:, 1:]
    interior &= a[:, 1:-1] <= 0.05 * np.max(a, axis=1, keepdims=True)
    extra: dict[int, list[float]] = {}
    for k, j in zip(*np.nonzero(interior)):
        j = j + 1
        sgn = 1.0 if g[k, j] > 0 else -1.0
        o = ob[k]

        def f(x, o=o):
            return float(_cone_values(chart, np.array([x, *o]), x0, sig))

        res = minimize_scalar(lambda x: sgn * f(x), bounds=(t[j - 1], t[j + 1]), method="bounded",
                              options={"xatol": 1e-13})
        d = chart.points(np.array([res.x, *o])) - x0
        scale = float(np.dot(d, d))
        if res.fun < 0:
            extra.setdefault(k, []).extend([brentq(f, t[j - 1], res.x, xtol=1e-15),
                                            brentq(f, res.x, t[j + 1], xtol=1e-15)])
        elif res.fun <= tol ** 2 * scale:
            X = chart.points(np.array([res.x, *o]))
            raise TransversalityError(
                f"boundary touches the null cone of X_0 near {X} without crossing it "
                f"(|N| = {abs(res.fun):.2e})")
    return {k: np.array(v) for k, v in extra.items()}


def check_transversal(chart: Chart, u: np.ndarray, x0: np.ndarray, sig: Signature,
                      tol: float = TRANSVERSAL_TOL) -> float:
    """Smallest normalized tangential gradient of ``N(X - x0)`` at points ``u``."""
    if u.shape[0] == 0:
        return float("inf")
    X = chart.points(u)
    d = X - x0
    grad = 2 * d * sig.coordinate_signs()
    nrm = chart.normals(X)
    tang = grad - np.sum(grad * nrm, axis=-1, keepdims=True) * nrm
    ratio = np.linalg.norm(tang, axis=-1) / (2 * np.linalg.norm(d, axis=-1))
    worst = float(np.min(ratio))
    if worst < tol:
        k = int(np.argmin(ratio))
        raise TransversalityError(
            f"boundary meets the null cone of X_0 tangentially near {X[k]} (ratio {worst:.2e} < {tol})")
    return worst


@dataclass
class _ChartPlan:
    chart: Chart
    outer: np.ndarray
    outer_w: np.ndarray
    inner: list[tuple[np.ndarray, np.ndarray]]

    def node_count(self) -> int:
        return sum(x.size for x, _ in self.inner) if len(self.inner) > 1 else self.inner[0][0].size * self.outer.shape[0]


@dataclass
class Plan:
    """All chart plans for one boundary, plus bookkeeping for reports."""

    sig: Signature
    charts: list[_ChartPlan]
    meta: dict

    @property
    def nodes(self) -> int:
        return sum(c.node_count() for c in self.charts)


def plan_boundary(b: Boundary, sig, grid: GridSpec, x0=None, eps: Optional[float] = None,
                  charts: Optional[list[Chart]] = None, transversal_tol: float = TRANSVERSAL_TOL) -> Plan:
    """Lay out the nodes for a boundary.

    With ``x0`` given, cone crossings of ``N(X - x0)`` are located (or read
    from the chart when its pole is ``x0``), transversality is checked, and
    the inner panels are graded to width ``band_ratio * |eps|``.
    """
    sig = as_signature(sig)
    x0 = None if x0 is None else np.asarray(x0, dtype=float)
    if charts is None:
        if b.kind == "box":
            charts = box_face_charts(b)
        else:
            pole = x0 if (x0 is not None and b.level(x0) < 1.0) else None
            charts = ray_charts(b, sig, pole)
    min_width = grid.band_halfwidth
    if eps is not None and eps != 0:
        min_width = min(min_width, grid.band_ratio * abs(eps))
    if grid.depth is not None:
        min_width = min(min_width, grid.band_halfwidth / 2 ** grid.depth)
    plans = []
    min_ratio = float("inf")
    n_roots = 0
    for ch in charts:
        counts = grid.outer_counts(ch.ranges[1:])
        outer, ow = tensor_rule(ch.ranges[1:], counts)
        lo, hi = ch.ranges[0]
        cone = x0 is not None and sig.q > 0
        if cone and ch.known_roots is not None and ch.pole is not None and np.allclose(ch.pole, x0):
            roots = [r for r in ch.known_roots if lo < r < hi]
            br = graded_breakpoints(lo, hi, roots, grid.inner_panels, grid.band_halfwidth, min_width)
            inner = [panel_rule(br, grid.inner_nodes)]
            pts = np.array([[r, *o] for r in roots for o in outer]).reshape(-1, sig.n)
            min_ratio = min(min_ratio, check_transversal(ch, pts, x0, sig, transversal_tol))
            n_roots += len(roots) * outer.shape[0]
        elif cone:
            per = find_cone_roots(ch, outer, x0, sig, grid.root_samples, transversal_tol)
            inner = [panel_rule(graded_breakpoints(lo, hi, r, grid.inner_panels, grid.band_halfwidth,
                                                   min_width), grid.inner_nodes) for r in per]
            pts = np.array([[r, *o] for rr, o in zip(per, outer) for r in rr]).reshape(-1, sig.n)
            min_ratio = min(min_ratio, check_transversal(ch, pts, x0, sig, transversal_tol))
            n_roots += pts.shape[0]
        else:
            br = graded_breakpoints(lo, hi, [], grid.inner_panels, grid.band_halfwidth, min_width)
            inner = [panel_rule(br, grid.inner_nodes)]
        plans.append(_ChartPlan(ch, outer, ow, inner))
    plan = Plan(sig, plans, {})
    plan.meta = {"charts": len(plans), "nodes": plan.nodes, "min_panel_width": min_width,
                 "cone_crossings": n_roots,
                 "transversality": None if math.isinf(min_ratio) else min_ratio}
    return plan


def _work_items(plan: Plan, chunk: int):
    """Fixed list of (chart plan, outer slice) work items."""
    items = []
    for cp in plan.charts:
        per_outer = max(1, max(x.size for x, _ in cp.inner))
        step = max(1, chunk // per_outer)
        for s in range(0, cp.outer.shape[0], step):
            items.append((cp, slice(s, min(s + step, cp.outer.shape[0]))))
    return items


def _batch(plan: Plan, cp: _ChartPlan, sl: slice) -> NodeBatch:
    outer, ow = cp.outer[sl], cp.outer_w[sl]
    idx = range(sl.start, sl.stop)
    us, ws = [], []
    for k, o, w in zip(idx, outer, ow):
        x, wi = cp.inner[k] if len(cp.inner) > 1 else cp.inner[0]
        us.append(np.concatenate([x[:, None], np.broadcast_to(o, (x.size, o.size))], axis=-1))
        ws.append(wi * w)
    u = np.concatenate(us)
    w = np.concatenate(ws)
    ch = cp.chart
    X = ch.points(u)
    V = ch.tangents(u)
    nrm = np.array(ch.normals(X), dtype=float)
    s = np.sign(np.linalg.det(np.concatenate([nrm[:, None, :], V], axis=1)))
    V[:, 0, :] *= s[:, None]
    jac = ch.jacobian(u) if ch.jacobian is not None else None
    if jac is not None:
        jac = np.where(s == 0, 0.0, jac)
    return NodeBatch(plan.sig, X, V, nrm, w, jac)


def integrate_plan(plan: Plan, integrand: Callable[[NodeBatch], np.ndarray], chunk: int = 1 << 15,
                   threads: int = 1) -> np.ndarray:
    """Weighted node sum of ``integrand`` (which returns ``(M, ...)`` values)."""
    items = _work_items(plan, chunk)

    def run(item):
        nb = _batch(plan, *item)
        vals = np.asarray(integrand(nb))
        if not np.all(np.isfinite(vals)):
            bad = np.argwhere(~np.isfinite(vals.reshape(vals.shape[0], -1)))[0, 0]
            raise NonFiniteIntegrand(f"integrand not finite at node {nb.X[bad]}", nb.X[bad])
        return np.tensordot(nb.weights, vals, axes=(0, 0))

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(run, items))
    else:
        parts = [run(it) for it in items]
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    return total


def integrate_boundary(b: Boundary, integrand: Callable[[NodeBatch], np.ndarray], grid: GridSpec,
                       sig=None, x0=None, eps=None) -> np.ndarray:
    """Integrate a batched integrand over ``b``.

    ``integrand`` receives a :class:`NodeBatch` and returns one value per
    node.  Frames are oriented (``{n, v_1..v_n}`` positive) and carry the
    chart scale, so forms evaluated on them integrate against the plain
    parameter weights.
    """
    sig = as_signature(sig if sig is not None else (b.dim - 1, 0))
    plan = plan_boundary(b, sig, grid, x0, eps)
    return integrate_plan(plan, integrand, grid.chunk, grid.threads)


# ---------------------------------------------------------------------------
# Cauchy integrals


def _as_list(f):
    return (list(f), True) if isinstance(f, (list, tuple)) else ([f], False)


def _kernel_form(K, D, side: Side, sig, space: Space):
    """``K D`` (left) or ``D K`` (right) for paravector coordinate arrays."""
    vm = vector_masks(sig.n)
    if side == "left":
        return mul_arrays(K, D, sig, space, vm, vm)
    if side == "right":
        return mul_arrays(D, K, sig, space, vm, vm)
    raise ValueError(f"unknown side {side!r}")


def _apply(KD, F, side: Side, sig, space: Space):
    return mul_arrays(KD, F, sig, space) if side == "left" else mul_arrays(F, KD, sig, space)


def regularized_values(fields, x0, b: Boundary, grid: GridSpec, eps_values: Sequence[float],
                       side: Side = "left", plan: Optional[Plan] = None):
    """``int G_eps(X - X_0) (D x) f(X)`` for every eps and field, one pass.

    Returns ``(values (n_eps, n_fields, 2**n), plan)``.
    """
    fields, _ = _as_list(fields)
    sig = fields[0].sig
    x0 = np.asarray(x0, dtype=float)
    eps_values = np.asarray(eps_values, dtype=float)
    if plan is None:
        plan = plan_boundary(b, sig, grid, x0, float(np.min(np.abs(eps_values))))

    def integrand(nb: NodeBatch):
        D = nb.d_real()
        F = [f.evaluate_batch(nb.X) for f in fields]
        out = np.empty((len(nb), len(eps_values), len(fields), sig.dim), dtype=complex)
        for i, e in enumerate(eps_values):
            KD = _kernel_form(g_eps_coords(nb.X - x0, e, sig), D, side, sig, "real-pq")
            for j, Fj in enumerate(F):
                out[:, i, j] = _apply(KD, Fj, side, sig, "real-pq")
        return out

    return integrate_plan(plan, integrand, grid.chunk, grid.threads), plan


def cauchy_second(f, x0, b: Boundary, grid: GridSpec, sched: EpsSchedule, side: Side = "left",
                  tol: Optional[float] = None, plan: Optional[Plan] = None):
    """Regularized-kernel integral over ``b`` and its eps -> 0 limit.

    ``f`` may be one field or a list (sharing all geometry and kernel work);
    the result is an :class:`IntegralEstimate` or a list of them.  With
    ``tol`` given, :class:`NonConvergedError` is raised when the error
    estimate of any limit exceeds it.
    """
    fields, many = _as_list(f)
    sig = fields[0].sig
    eps = sched.values()
    vals, plan = regularized_values(fields, x0, b, grid, eps, side, plan)
    out = []
    for j, fj in enumerate(fields):
        series = vals[:, j]
        diag, lim, err, extrapolated = richardson(series, sched.ratio, sched.order)
        floor = 1e-12 * max(1.0, float(np.max(np.abs(series))))
        err = max(err, floor)
        mv = lambda c: Multivector(sig, c, "real-pq")  # noqa: E731
        est = IntegralEstimate(mv(series[-1]), eps, [mv(s) for s in series], [mv(d) for d in diag],
                               mv(lim), err, True,
                               dict(plan.meta, extrapolated=extrapolated, eps_min=float(np.min(np.abs(eps)))))
        if tol is not None and not err <= tol:
            est.converged = False
            raise NonConvergedError(f"eps series not Cauchy: error estimate {err:.3g} > {tol:.3g}", est)
        out.append(est)
    return out if many else out[0]


def deformed_values(fields_c, x0, b: Boundary, grid: GridSpec, eps_values: Sequence[float],
                    side: Side = "left", plan: Optional[Plan] = None):
    """``int G(Z - X_0) D z f(Z)`` over ``(h_{eps,X_0})_*(b)`` per eps and field.

    The contour is parametrized by the real boundary: ``Z = X_0 + h_eps(X - X_0)``
    in complex coordinates, with the form pulled back by minor scaling.
    """
    fields, _ = _as_list(fields_c)
    sig = fields[0].sig
    x0 = np.asarray(x0, dtype=float)
    x0c = np.array(x0, dtype=complex)
    x0c[sig.p + 1:] *= 1j
    eps_values = np.asarray(eps_values, dtype=float)
    if plan is None:
        plan = plan_boundary(b, sig, grid, x0, float(np.min(np.abs(eps_values))))
    iota = np.ones(sig.n + 1, dtype=complex)
    iota[sig.p + 1:] = 1j

    def integrand(nb: NodeBatch):
        dz = (nb.X - x0) * iota
        V = nb.frames * iota
        out = np.empty((len(nb), len(eps_values), len(fields), sig.dim), dtype=complex)
        for i, e in enumerate(eps_values):
            a = np.full(sig.n + 1, 1 + 1j * e)
            a[sig.p + 1:] = 1 - 1j * e
            Z = dz * a
            KD = _kernel_form(g_kernel_coords(Z, sig, "complex"), h_eps_pullback_array(V, e, sig),
                              side, sig, "complex")
            for j, fj in enumerate(fields):
                out[:, i, j] = _apply(KD, fj.evaluate_batch(x0c + Z), side, sig, "complex")
        return out

    return integrate_plan(plan, integrand, grid.chunk, grid.threads), plan


def cauchy_first(f_c, x0, b: Boundary, grid: GridSpec, eps, side: Side = "left",
                 plan: Optional[Plan] = None):
    """Deformed-contour integral with the complex kernel, at one or more eps.

    Returns a complex-space :class:`Multivector` (or nested lists: one entry
    per eps, then per field when lists are given).
    """
    fields, many_f = _as_list(f_c)
    eps_list, many_e = _as_list(eps)
    if any(e == 0 for e in eps_list):
        raise ValueError("cauchy_first needs eps != 0")
    for fj in fields:
        if fj.domain != "complex":
            raise ValueError("cauchy_first takes complex-domain fields (use complexify())")
    vals, _ = deformed_values(fields, x0, b, grid, eps_list, side, plan)
    sig = fields[0].sig
    res = [[Multivector(sig, vals[i, j], "complex") for j in range(len(fields))]
           for i in range(len(eps_list))]
    res = [r if many_f else r[0] for r in res]
    return res if many_e else res[0]


def cauchy_classical(f, x0, b: Boundary, grid: GridSpec, side: Side = "left",
                     plan: Optional[Plan] = None):
    """``int G(X - X_0) (D x) f(X)`` for q = 0 (no regularization needed)."""
    fields, many = _as_list(f)
    sig = fields[0].sig
    if sig.q != 0:
        raise ValueError("the classical formula is for q = 0")
    x0 = np.asarray(x0, dtype=float)
    if plan is None:
        plan = plan_boundary(b, sig, grid, x0)

    def integrand(nb: NodeBatch):
        KD = _kernel_form(g_kernel_coords(nb.X - x0, sig, "real-pq"), nb.d_real(), side, sig, "real-pq")
        return np.stack([_apply(KD, fj.evaluate_batch(nb.X), side, sig, "real-pq") for fj in fields], axis=1)

    vals = integrate_plan(plan, integrand, grid.chunk, grid.threads)
    res = [Multivector(sig, vals[j], "real-pq") for j in range(len(fields))]
    return res if many else res[0]


# ---------------------------------------------------------------------------
# the constant C_{p,q}


def c_constant_closed_form(sig) -> complex:
    sig = as_signature(sig)
    if sig.q < 1:
        raise ValueError("C_{p,q} needs q >= 1")
    return (-1j) ** sig.q * sphere_volume(sig.n) / (sphere_volume(sig.p) * sphere_volume(sig.q - 1))


def c_constant_at(sig, eps: float, grid: GridSpec) -> complex:
    """``int_0^{pi/2} cos^p sin^(q-1) (cos 2t + i eps)^(-(n+1)/2) dt`` at fixed eps."""
    from .kernels import branched_power

    sig = as_signature(sig)
    min_width = min(grid.band_halfwidth, grid.band_ratio * abs(eps))
    if grid.depth is not None:
        min_width = min(min_width, grid.band_halfwidth / 2 ** grid.depth)
    br = graded_breakpoints(0.0, math.pi / 2, [math.pi / 4], grid.inner_panels, grid.band_halfwidth, min_width)
    t, w = panel_rule(br, grid.inner_nodes)
    vals = (np.cos(t) ** sig.p * np.sin(t) ** (sig.q - 1)
            * branched_power(np.cos(2 * t) + 1j * eps, -(sig.n + 1)))
    return complex(np.sum(w * vals))


def c_constant(sig, sched: EpsSchedule, grid: GridSpec, tol: Optional[float] = None):
    """Extrapolated ``eps -> 0`` limit of :func:`c_constant_at`.

    Returns ``(limit, error_estimate, series)``.
    """
    sig = as_signature(sig)
    if sig.q < 1:
        raise ValueError("C_{p,q} needs q >= 1")
    eps = sched.values()
    series = np.array([c_constant_at(sig, e, grid) for e in eps])
    _, lim, err, _ = richardson(series, sched.ratio, sched.order)
    err = max(err, 1e-13 * max(1.0, float(np.max(np.abs(series)))))
    if tol is not None and not err <= tol:
        raise NonConvergedError(f"C_{{p,q}} series not Cauchy: error {err:.3g} > {tol:.3g}")
    return complex(lim), err, series


# ---------------------------------------------------------------------------
# Stokes / product rule


def volume_integral(b: Boundary, integrand: Callable[[np.ndarray], np.ndarray], nodes: int) -> np.ndarray:
    """Tensor Gauss-Legendre integral over a box of a batched ``(M, n+1) -> (M, ...)`` function."""
    if b.kind != "box":
        raise ValueError("volume integrals are implemented for boxes")
    ranges = [(c - h, c + h) for c, h in zip(b.center, b.size)]
    x, w = tensor_rule(ranges, [nodes] * b.dim)
    return np.tensordot(w, integrand(x), axes=(0, 0))


def stokes_check(f: PolynomialField, g: PolynomialField, b: Boundary, grid: GridSpec) -> float:
    """Residual of ``oint g (D x) f - int [(g nabla+) f + g (nabla+ f)] dV``."""
    sig = f.sig
    if f.domain != "real-pq" or g.domain != "real-pq":
        raise ValueError("stokes_check works on real-pq fields")
    if b.kind != "box":
        raise ValueError("stokes_check integrates over a box")

    def surf(nb: NodeBatch):
        gD = mul_arrays(g.evaluate_batch(nb.X), nb.d_real(), sig, "real-pq", None, vector_masks(sig.n))
        return mul_arrays(gD, f.evaluate_batch(nb.X), sig, "real-pq")

    boundary = integrate_boundary(b, surf, grid, sig)
    g_right = dirac_field(g, "nabla_plus", "right")
    f_left = dirac_field(f, "nabla_plus", "left")

    def vol(x):
        a = mul_arrays(g_right.evaluate_batch(x), f.evaluate_batch(x), sig, "real-pq")
        c = mul_arrays(g.evaluate_batch(x), f_left.evaluate_batch(x), sig, "real-pq")
        return (a + c) * volume_form(sig)

    volume = volume_integral(b, vol, grid.volume_nodes)
    return float(np.linalg.norm(boundary - volume))
