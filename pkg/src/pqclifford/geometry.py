"""Differential forms on tangent frames, boundaries, hybrid spherical
coordinates and the deformation ``h_eps``.

Forms are never manipulated symbolically.  An n-form is evaluated on an
explicit frame of n tangent vectors through the signed n x n minors of the
``(n+1) x n`` coordinate matrix of the frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional

import numpy as np

from .algebra import (
    Multivector, Paravector, Signature, Space, as_signature, check_space, embed_coords,
)


class GeometryError(ValueError):
    """Bad geometric input: angle out of range, point off a surface, frame mismatch."""


# ---------------------------------------------------------------------------
# spheres and hybrid spherical coordinates


def sphere_volume(n: int) -> float:
    """``omega_n``, the n-dimensional volume of the unit sphere in R^(n+1)."""
    if n < 0:
        raise GeometryError("sphere_volume needs n >= 0")
    return 2 * math.pi ** ((n + 1) / 2) / math.gamma((n + 1) / 2)


def sphere_chart(alpha):
    """Standard spherical chart ``(..., m) angles -> (..., m+1)`` unit vectors.

    ``c_0 = cos a_1``, ``c_k = sin a_1 ... sin a_k cos a_{k+1}``,
    ``c_m = sin a_1 ... sin a_m``.  Works on complex input (complex-step).
    """
    alpha = np.asarray(alpha)
    m = alpha.shape[-1]
    out = np.empty(alpha.shape[:-1] + (m + 1,), dtype=np.result_type(alpha, float))
    run = np.ones(alpha.shape[:-1], dtype=out.dtype)
    for k in range(m):
        out[..., k] = run * np.cos(alpha[..., k])
        run = run * np.sin(alpha[..., k])
    out[..., m] = run
    return out


def sphere_angles(c) -> np.ndarray:
    """Inverse of :func:`sphere_chart` for unit (or any nonzero) vectors."""
    c = np.asarray(c, dtype=float)
    m = c.shape[-1] - 1
    out = np.empty(c.shape[:-1] + (m,))
    for k in range(m):
        tail = np.sqrt(np.sum(c[..., k + 1:] ** 2, axis=-1))
        out[..., k] = np.arctan2(tail, c[..., k])
    if m:
        out[..., m - 1] = np.mod(np.arctan2(c[..., m], c[..., m - 1]), 2 * np.pi)
    return out


def sphere_chart_det(alpha, rho=1.0):
    """``det S_{m,alpha} = rho**m sin**(m-1) a_1 ... sin a_{m-1}``."""
    alpha = np.asarray(alpha)
    m = alpha.shape[-1]
    out = np.asarray(rho, dtype=float) ** m * np.ones(alpha.shape[:-1])
    for k in range(m - 1):
        out = out * np.sin(alpha[..., k]) ** (m - 1 - k)
    return out


def sphere_angle_ranges(m: int) -> list[tuple[float, float]]:
    return [(0.0, math.pi)] * max(m - 1, 0) + ([(0.0, 2 * math.pi)] if m else [])


@dataclass(frozen=True)
class HybridAngles:
    """Hybrid spherical coordinates for signature (p, q), p, q >= 1.

    ``phi`` has p entries (sphere in the x-block), ``psi`` has q-1 entries
    (sphere in the tilde block).  For q = 1 the tilde sphere is S^0 = {+-1}
    and ``tilde_sign`` picks the point; it is ignored for q >= 2.
    """

    rho: float
    theta: float
    phi: tuple[float, ...] = ()
    psi: tuple[float, ...] = ()
    tilde_sign: int = 1

    def validate(self, sig) -> None:
        sig = as_signature(sig)
        if sig.p < 1 or sig.q < 1:
            raise GeometryError("hybrid coordinates need p >= 1 and q >= 1")
        if len(self.phi) != sig.p or len(self.psi) != sig.q - 1:
            raise GeometryError(f"expected {sig.p} phi and {sig.q - 1} psi angles for {sig}")
        if self.rho < 0:
            raise GeometryError("rho must be >= 0")
        if not 0 <= self.theta <= math.pi / 2:
            raise GeometryError(f"theta={self.theta} outside [0, pi/2]")
        for name, ang in (("phi", self.phi), ("psi", self.psi)):
            for (lo, hi), a in zip(sphere_angle_ranges(len(ang)), ang):
                if not lo <= a <= hi:
                    raise GeometryError(f"{name} angle {a} outside [{lo}, {hi}]")
        if self.tilde_sign not in (1, -1):
            raise GeometryError("tilde_sign must be +1 or -1")


def hybrid_direction(theta, phi, psi, sig, tilde_sign=1):
    """Unit vector with hybrid angles; arrays broadcast over leading axes."""
    sig = as_signature(sig)
    theta = np.asarray(theta)
    xb = sphere_chart(phi) * np.cos(theta)[..., None]
    tb = sphere_chart(psi) * np.sin(theta)[..., None]
    if sig.q == 1:
        tb = tb * tilde_sign
    return np.concatenate([xb, tb], axis=-1)


def hybrid_to_cartesian(a: HybridAngles, sig) -> Paravector:
    sig = as_signature(sig)
    a.validate(sig)
    d = hybrid_direction(a.theta, np.array(a.phi, dtype=float), np.array(a.psi, dtype=float),
                         sig, a.tilde_sign)
    return Paravector(sig, a.rho * d, "real-pq")


def cartesian_to_hybrid(X: Paravector) -> HybridAngles:
    sig = X.sig
    if sig.p < 1 or sig.q < 1:
        raise GeometryError("hybrid coordinates need p >= 1 and q >= 1")
    c = np.asarray(X.coords.real, dtype=float)
    xb, tb = c[: sig.p + 1], c[sig.p + 1:]
    rx, rt = float(np.linalg.norm(xb)), float(np.linalg.norm(tb))
    sign = 1
    if sig.q == 1:
        sign = -1 if tb[0] < 0 else 1
        tb = np.abs(tb)
    phi = sphere_angles(xb if rx > 0 else np.eye(sig.p + 1)[0])
    psi = sphere_angles(tb if rt > 0 else np.eye(sig.q)[0])
    return HybridAngles(math.hypot(rx, rt), math.atan2(rt, rx), tuple(phi), tuple(psi), sign)


def hybrid_jacobian(a: HybridAngles, sig) -> float:
    """Closed-form Jacobian determinant of the hybrid chart.

    The variable order is ``(rho, phi_1..phi_p, theta, psi_1..psi_{q-1})``.
    For q = 1 the ``tilde_sign = -1`` chart is reflected, which flips the sign.
    """
    sig = as_signature(sig)
    a.validate(sig)
    return float(hybrid_jacobian_array(a.rho, a.theta, np.array(a.phi), np.array(a.psi), sig, a.tilde_sign))


def hybrid_jacobian_array(rho, theta, phi, psi, sig, tilde_sign=1):
    sig = as_signature(sig)
    s = tilde_sign if sig.q == 1 else 1
    return (s * rho * np.cos(theta) ** sig.p * np.sin(theta) ** (sig.q - 1)
            * sphere_chart_det(phi, rho) * sphere_chart_det(psi, rho))


# ---------------------------------------------------------------------------
# forms


def volume_form(sig, space: Space = "real-pq") -> complex:
    """Value of ``dV`` on the standard basis: 1 (complex) or ``i**q`` (real-pq)."""
    sig = as_signature(sig)
    return 1.0 + 0j if check_space(space) == "complex" else 1j ** sig.q


@dataclass(frozen=True)
class TangentFrame:
    base: Paravector
    vectors: tuple[Paravector, ...]
    orientation: int = 1

    def __post_init__(self):
        object.__setattr__(self, "vectors", tuple(self.vectors))
        if len(self.vectors) != self.base.sig.n:
            raise GeometryError(f"frame needs {self.base.sig.n} vectors, got {len(self.vectors)}")
        for v in self.vectors:
            if v.sig != self.base.sig or v.kind != self.base.kind:
                raise GeometryError("frame vectors must match the base point's signature and kind")
        if self.orientation not in (1, -1):
            raise GeometryError("orientation must be +1 or -1")

    @property
    def sig(self) -> Signature:
        return self.base.sig

    def matrix(self) -> np.ndarray:
        """``(n, n+1)`` array of vector coordinates, orientation applied to the first."""
        m = np.array([v.coords for v in self.vectors])
        m[0] *= self.orientation
        return m


def minors(vectors) -> np.ndarray:
    """Signed minors ``(-1)**j det(V with coordinate j removed)``.

    ``vectors`` has shape ``(..., n, n+1)``; the result ``(..., n+1)`` is the
    generalized cross product, so ``sum_j z_j out_j = det[z, v_1..v_n]``.
    """
    v = np.asarray(vectors)
    n1 = v.shape[-1]
    if v.shape[-2] != n1 - 1:
        raise GeometryError(f"need {n1 - 1} vectors in R^{n1}, got {v.shape[-2]}")
    out = np.empty(v.shape[:-2] + (n1,), dtype=np.result_type(v, float))
    idx = np.arange(n1)
    for j in range(n1):
        sub = v[..., idx != j]
        out[..., j] = (-1) ** j * (np.linalg.det(sub) if n1 > 1 else 1.0)
    return out


def d_form_array(vectors, sig, space: Space = "real-pq") -> np.ndarray:
    """Paravector coordinates of ``D z`` (complex) or ``D x`` (real-pq) on frames.

    Real-pq: ``i**q`` times the minors, with the tilde coordinates negated, so
    that ``<Z_0, D(frame)> = dV(Z_0, frame)`` for the real bilinear form.
    """
    sig = as_signature(sig)
    m = minors(vectors).astype(complex)
    if check_space(space) == "real-pq":
        m[..., sig.p + 1:] *= -1
        m *= 1j ** sig.q
    return m


def d_form(frame: TangentFrame, space: Optional[Space] = None) -> Paravector:
    space = check_space(space or frame.base.kind)
    if space != frame.base.kind:
        raise GeometryError(f"frame kind {frame.base.kind} does not match space {space}")
    return Paravector(frame.sig, d_form_array(frame.matrix(), frame.sig, space), space)


def dv_form(vectors, sig, space: Space = "real-pq"):
    """``dV`` on n+1 vectors, shape ``(..., n+1, n+1)``."""
    return volume_form(sig, space) * np.linalg.det(np.asarray(vectors))


# ---------------------------------------------------------------------------
# h_eps


def h_eps_factors(sig, eps) -> np.ndarray:
    """Per-coordinate scalings: ``1 + i eps`` for j <= p, ``1 - i eps`` after."""
    sig = as_signature(sig)
    f = np.full(sig.n + 1, 1 + 1j * eps)
    f[sig.p + 1:] = 1 - 1j * eps
    return f


def h_eps_map(Z: Paravector, eps: float, center: Optional[Paravector] = None) -> Paravector:
    """``Z_0 + h_eps(Z - Z_0)``; keeps the coordinate kind of ``Z``."""
    c = np.zeros(Z.sig.n + 1) if center is None else center.coords
    if center is not None and center.kind != Z.kind:
        raise GeometryError("center and point must be of the same kind")
    return Paravector(Z.sig, c + h_eps_factors(Z.sig, eps) * (Z.coords - c), Z.kind)


def h_eps_pullback_array(vectors, eps, sig) -> np.ndarray:
    """``D z`` on the h_eps image of complex frames by scaling each minor."""
    sig = as_signature(sig)
    a = h_eps_factors(sig, eps)
    m = minors(vectors)
    total = np.prod(a)
    return m * (total / a)


def h_eps_pullback_form(frame: TangentFrame, eps: float) -> Paravector:
    """Pulled-back complex form on a frame (real-pq frames are embedded first)."""
    vecs = frame.matrix()
    if frame.base.kind == "real-pq":
        vecs = embed_coords(vecs, frame.sig)
    return Paravector(frame.sig, h_eps_pullback_array(vecs, eps, frame.sig), "complex")


# ---------------------------------------------------------------------------
# boundaries

BoundaryKind = Literal["sphere", "box", "ellipsoid"]

#: distance tolerance for "point lies on the surface"
ON_SURFACE_TOL = 1e-10


@dataclass(frozen=True)
class Boundary:
    """Boundary of a sphere, axis-aligned box or axis-aligned ellipsoid.

    ``size`` is the radius (sphere) or the per-axis half-widths / semi-axes.
    """

    kind: BoundaryKind
    center: np.ndarray
    size: np.ndarray

    def __post_init__(self):
        if self.kind not in ("sphere", "box", "ellipsoid"):
            raise GeometryError(f"unknown boundary kind {self.kind!r}")
        c = np.array(self.center, dtype=float).reshape(-1)
        s = np.array(self.size, dtype=float).reshape(-1)
        if self.kind == "sphere":
            if s.size != 1:
                raise GeometryError("sphere takes a single radius")
            s = np.full(c.size, s[0])
        if s.shape != c.shape:
            raise GeometryError(f"size must have {c.size} entries")
        if np.any(s <= 0):
            raise GeometryError("sizes must be positive")
        c.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "size", s)

    @classmethod
    def sphere(cls, sig, radius: float = 1.0, center=None) -> "Boundary":
        sig = as_signature(sig)
        return cls("sphere", np.zeros(sig.n + 1) if center is None else center, [radius])

    @classmethod
    def box(cls, sig, half_widths, center=None) -> "Boundary":
        sig = as_signature(sig)
        hw = np.broadcast_to(np.asarray(half_widths, dtype=float), (sig.n + 1,))
        return cls("box", np.zeros(sig.n + 1) if center is None else center, hw)

    @classmethod
    def ellipsoid(cls, sig, semi_axes, center=None) -> "Boundary":
        sig = as_signature(sig)
        return cls("ellipsoid", np.zeros(sig.n + 1) if center is None else center, semi_axes)

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def radius(self) -> float:
        if self.kind != "sphere":
            raise GeometryError("only spheres have a radius")
        return float(self.size[0])

    def level(self, x) -> np.ndarray:
        """Scaled level function: < 1 inside, 1 on the surface, > 1 outside."""
        u = (np.asarray(x, dtype=float) - self.center) / self.size
        if self.kind == "box":
            return np.max(np.abs(u), axis=-1)
        return np.sqrt(np.sum(u * u, axis=-1))

    def contains(self, X) -> bool:
        return bool(self.level(_coords(X)) < 1.0)

    def distance(self, X) -> float:
        """Distance-like residual |level - 1| scaled by the smallest size."""
        return float(abs(self.level(_coords(X)) - 1.0) * np.min(self.size))

    def normal(self, X, tol: float = ON_SURFACE_TOL) -> np.ndarray:
        """Unit outward normal (Euclidean) at a smooth surface point."""
        x = _coords(X)
        if self.distance(x) > tol:
            raise GeometryError(f"point {x} is not on the {self.kind} (distance {self.distance(x):.3g})")
        u = (x - self.center) / self.size
        if self.kind == "box":
            a = np.abs(u)
            active = np.flatnonzero(a >= 1.0 - tol / np.min(self.size))
            if active.size != 1:
                raise GeometryError(f"point {x} lies on an edge or corner of the box")
            n = np.zeros_like(x)
            n[active[0]] = np.sign(u[active[0]])
            return n
        g = u / self.size
        return g / np.linalg.norm(g)

    def normal_array(self, x) -> np.ndarray:
        """Vectorized normals for points known to be on smooth sphere/ellipsoid parts."""
        if self.kind == "box":
            raise GeometryError("use per-face charts for box normals")
        g = (np.asarray(x) - self.center) / self.size ** 2
        return g / np.linalg.norm(g, axis=-1, keepdims=True)


def _coords(X) -> np.ndarray:
    if isinstance(X, Paravector):
        if X.kind != "real-pq" or not np.allclose(X.coords.imag, 0):
            raise GeometryError("boundary points must be real-pq paravectors")
        return X.coords.real.copy()
    return np.asarray(X, dtype=float)


@dataclass(frozen=True)
class SurfaceMeasure:
    """``D x`` restricted to the boundary equals ``factor * dS``."""

    normal: Paravector
    density: complex
    factor: Multivector

    def dS(self, frame: TangentFrame) -> complex:
        """``dS(v_1..v_n) = dV(n, v_1..v_n)``."""
        m = np.vstack([self.normal.coords, frame.matrix()])
        return complex(dv_form(m, self.normal.sig, "real-pq"))


def conj_coords(coords, sig) -> np.ndarray:
    """Complex conjugate of real-pq coordinates (tilde components negated)."""
    sig = as_signature(sig)
    out = np.conj(np.array(coords, dtype=complex))
    out[..., sig.p + 1:] *= -1
    return out


def surface_measure(b: Boundary, X: Paravector) -> SurfaceMeasure:
    """Outward normal, ``dS`` density per unit Euclidean area, and ``nbar``.

    The density is ``dS`` on a positively oriented orthonormal tangent frame,
    which is ``i**q``.
    """
    sig = X.sig
    n = b.normal(X)
    nbar = Paravector(sig, conj_coords(n, sig), "real-pq")
    return SurfaceMeasure(Paravector(sig, n, "real-pq"), volume_form(sig, "real-pq"),
                          nbar.to_multivector())


def oriented_tangent_frame(b: Boundary, X: Paravector, rng: Optional[np.random.Generator] = None
                           ) -> TangentFrame:
    """A random positively oriented tangent frame at a boundary point."""
    rng = rng or np.random.default_rng(0)
    n = b.normal(X)
    m = rng.standard_normal((n.size - 1, n.size))
    m -= np.outer(m @ n, n)
    if np.linalg.det(np.vstack([n, m])) < 0:
        m[0] *= -1
    return TangentFrame(X, tuple(Paravector(X.sig, v, "real-pq") for v in m))


# ---------------------------------------------------------------------------
# charts used by the quadrature engine


@dataclass
class Chart:
    """A parametrized piece of a boundary.

    ``param`` maps parameter arrays ``(..., n)`` to points ``(..., n+1)``; it
    must accept complex input (tangent vectors come from complex-step
    differentiation).  Parameter 0 is the "inner" variable in which null-cone
    crossings are resolved; ``known_roots`` lists crossings of the inner
    variable that do not depend on the other parameters.
    """

    param: Callable[[np.ndarray], np.ndarray]
    ranges: list[tuple[float, float]]
    known_roots: Optional[list[float]] = None
    normal: Optional[Callable[[np.ndarray], np.ndarray]] = None
    fixed_normal: Optional[np.ndarray] = None
    label: str = ""
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)
    pole: Optional[np.ndarray] = None

    def points(self, u) -> np.ndarray:
        return self.param(np.asarray(u))

    def tangents(self, u, h: float = 1e-30) -> np.ndarray:
        """Complex-step partial derivatives, shape ``(..., n, n+1)``."""
        u = np.asarray(u, dtype=float)
        k = u.shape[-1]
        out = []
        for j in range(k):
            du = np.zeros(k, dtype=complex)
            du[j] = 1j * h
            out.append(self.param(u + du).imag / h)
        return np.stack(out, axis=-2)

    def normals(self, x) -> np.ndarray:
        if self.fixed_normal is not None:
            return np.broadcast_to(self.fixed_normal, np.shape(x))
        return self.normal(x)


def direction_layout(sig, hybrid: Optional[bool] = None):
    """Angle ranges and a direction map for the unit sphere S^n.

    Hybrid angles (``theta`` first) are used when p, q >= 1, so the null cone
    through the pole sits at ``theta = pi/4``.  Otherwise standard spherical
    angles are used.  Returns ``(branches, ranges, hybrid)`` where each branch
    is a direction map for one value of the discrete sign(s).
    """
    sig = as_signature(sig)
    hybrid = (sig.p >= 1 and sig.q >= 1) if hybrid is None else hybrid
    if hybrid:
        if sig.p < 1 or sig.q < 1:
            raise GeometryError("hybrid directions need p >= 1 and q >= 1")
        ranges = [(0.0, math.pi / 2)] + sphere_angle_ranges(sig.p) + sphere_angle_ranges(sig.q - 1)
        signs = (1, -1) if sig.q == 1 else (1,)

        def make(s):
            def direction(u):
                return hybrid_direction(u[..., 0], u[..., 1:1 + sig.p], u[..., 1 + sig.p:], sig, s)
            return direction

        return [make(s) for s in signs], ranges, True
    if sig.n == 0:
        raise GeometryError("no surface charts for n = 0")
    ranges = sphere_angle_ranges(sig.n)
    return [lambda u: sphere_chart(u)], ranges, False


def ray_charts(b: Boundary, sig, pole=None, hybrid: Optional[bool] = None) -> list[Chart]:
    """Charts of a sphere/ellipsoid by rays from an interior ``pole``.

    ``X(u) = pole + R(u) w(u)`` with ``w`` a unit direction and ``R`` the exit
    distance along it.  When the pole is the centre of a sphere the hybrid
    chart Jacobian is attached.
    """
    sig = as_signature(sig)
    if b.kind == "box":
        raise GeometryError("ray charts are for spheres and ellipsoids")
    pole = b.center.copy() if pole is None else np.asarray(pole, dtype=float)
    if b.level(pole) >= 1.0:
        raise GeometryError("ray-chart pole must lie strictly inside the boundary")
    a = pole - b.center
    W = 1.0 / b.size ** 2
    C = float(np.sum(W * a * a) - 1.0)
    branches, ranges, hyb = direction_layout(sig, hybrid)
    centered = b.kind == "sphere" and np.allclose(a, 0.0)

    charts = []
    for k, direction in enumerate(branches):
        def param(u, direction=direction):
            w = direction(u)
            A = np.sum(W * w * w, axis=-1)
            B = np.sum(W * a * w, axis=-1)
            R = (-B + np.sqrt(B * B - A * C)) / A
            return pole + R[..., None] * w

        jac = None
        if centered and hyb:
            r = b.radius

            def jac(u, r=r):
                return np.abs(hybrid_jacobian_array(r, u[..., 0], u[..., 1:1 + sig.p],
                                                    u[..., 1 + sig.p:], sig))
        elif centered:
            r = b.radius

            def jac(u, r=r):
                return np.abs(sphere_chart_det(u, r))

        charts.append(Chart(param, list(ranges), [math.pi / 4] if hyb else None,
                            normal=b.normal_array, label=f"{b.kind}-ray-{k}", jacobian=jac,
                            pole=pole))
    return charts


def box_face_charts(b: Boundary) -> list[Chart]:
    """One chart per face: the free coordinates in their ranges."""
    if b.kind != "box":
        raise GeometryError("face charts are for boxes")
    n1 = b.dim
    charts = []
    for j in range(n1):
        free = [i for i in range(n1) if i != j]
        for s in (-1.0, 1.0):
            def param(u, j=j, s=s, free=free):
                u = np.asarray(u)
                out = np.empty(u.shape[:-1] + (n1,), dtype=np.result_type(u, float))
                out[..., j] = b.center[j] + s * b.size[j]
                out[..., free] = u
                return out

            normal = np.zeros(n1)
            normal[j] = s
            ranges = [(b.center[i] - b.size[i], b.center[i] + b.size[i]) for i in free]
            charts.append(Chart(param, ranges, None, fixed_normal=normal,
                                label=f"face{j}{'+' if s > 0 else '-'}",
                                jacobian=lambda u: np.ones(np.shape(u)[:-1])))
    return charts
