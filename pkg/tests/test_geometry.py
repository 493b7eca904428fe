import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pqclifford.algebra import Multivector, Paravector, Signature, bilinear, embed_coords, n_form
from pqclifford.geometry import (
    Boundary, GeometryError, HybridAngles, TangentFrame, box_face_charts, cartesian_to_hybrid,
    conj_coords, d_form, d_form_array, dv_form, h_eps_map, h_eps_pullback_array, h_eps_pullback_form,
    hybrid_jacobian, hybrid_to_cartesian, oriented_tangent_frame, ray_charts, sphere_volume,
    surface_measure, volume_form,
)


def test_sphere_volumes():
    assert sphere_volume(0) == pytest.approx(2)
    assert sphere_volume(1) == pytest.approx(2 * math.pi)
    assert sphere_volume(2) == pytest.approx(4 * math.pi)
    assert sphere_volume(3) == pytest.approx(2 * math.pi ** 2)
    assert sphere_volume(4) == pytest.approx(8 * math.pi ** 2 / 3)


def test_hybrid_examples():
    sig = Signature(1, 1)
    np.testing.assert_allclose(hybrid_to_cartesian(HybridAngles(1, 0, (0.0,)), sig).coords, [1, 0, 0], atol=1e-16)
    X = hybrid_to_cartesian(HybridAngles(1, math.pi / 4, (0.0,)), sig)
    np.testing.assert_allclose(X.coords.real, [math.sqrt(0.5), 0, math.sqrt(0.5)], atol=1e-15)
    assert abs(n_form(X)) <= 1e-15


def test_hybrid_validation():
    sig = Signature(2, 1)
    with pytest.raises(GeometryError):
        hybrid_to_cartesian(HybridAngles(1, 2.0, (0.1, 0.2)), sig)
    with pytest.raises(GeometryError):
        hybrid_to_cartesian(HybridAngles(1, 0.5, (0.1,)), sig)
    with pytest.raises(GeometryError):
        hybrid_to_cartesian(HybridAngles(1, 0.5, (0.1, 0.2)), Signature(3, 0))


def numerical_jacobian(a, sig, h=1e-5):
    """Central-difference Jacobian matrix in the order (rho, phi, theta, psi)."""
    v0 = np.array([a.rho, *a.phi, a.theta, *a.psi], dtype=float)

    def f(v):
        return hybrid_to_cartesian(HybridAngles(v[0], v[1 + sig.p], tuple(v[1:1 + sig.p]), tuple(v[2 + sig.p:]),
                                                a.tilde_sign), sig).coords.real

    cols = []
    for k in range(v0.size):
        dv = np.zeros_like(v0)
        dv[k] = h
        cols.append((-f(v0 + 2 * dv) + 8 * f(v0 + dv) - 8 * f(v0 - dv) + f(v0 - 2 * dv)) / (12 * h))
    return np.linalg.det(np.array(cols).T)


def random_angles(sig, rng):
    def ang(m):
        return tuple(rng.uniform(0.1, math.pi - 0.1, max(m - 1, 0))) + ((rng.uniform(0.1, 6.1),) if m else ())

    return HybridAngles(rng.uniform(0.5, 2), rng.uniform(0.1, 1.4), ang(sig.p), ang(sig.q - 1),
                        int(rng.choice([-1, 1])))


@pytest.mark.parametrize("pq", [(1, 1), (2, 1), (1, 2), (2, 2), (3, 1)])
def test_hybrid_jacobian_against_numerical_determinant(pq):
    sig = Signature(*pq)
    rng = np.random.default_rng(sum(pq) + 100)
    for _ in range(100):
        a = random_angles(sig, rng)
        exact = hybrid_jacobian(a, sig)
        assert abs(numerical_jacobian(a, sig) - exact) <= 1e-8 * abs(exact)


def test_hybrid_jacobian_degenerate():
    for pq in [(1, 1), (2, 2)]:
        sig = Signature(*pq)
        a = HybridAngles(1.0, math.pi / 2, (0.3,) * sig.p, (0.4,) * (sig.q - 1))
        assert abs(hybrid_jacobian(a, sig)) <= 1e-15


@settings(max_examples=200, deadline=None)
@given(st.sampled_from([(1, 1), (2, 1), (1, 2), (2, 2)]), st.integers(0, 2 ** 32 - 1))
def test_hybrid_roundtrip(pq, seed):
    sig = Signature(*pq)
    x = np.random.default_rng(seed).standard_normal(sig.n + 1)
    back = hybrid_to_cartesian(cartesian_to_hybrid(Paravector(sig, x)), sig)
    np.testing.assert_allclose(back.coords.real, x, atol=1e-12)


def test_d_form_examples():
    n2 = Signature(2, 0)
    e = [Paravector.basis(j, n2, "complex") for j in range(3)]
    assert d_form(TangentFrame(e[0], (e[1], e[2]))).allclose(e[0])
    assert d_form(TangentFrame(e[0], (e[1], e[1]))).allclose(Paravector(n2, [0, 0, 0], "complex"))
    sig = Signature(1, 1)
    b = [Paravector.basis(j, sig) for j in range(3)]
    D = d_form(TangentFrame(b[0], (b[1], b[2])))
    assert abs(bilinear(b[0], D) - dv_form(np.eye(3), sig)) <= 1e-15
    assert volume_form(sig) == 1j


@pytest.mark.parametrize("space", ["real-pq", "complex"])
def test_probe_identity(space):
    rng = np.random.default_rng(1 if space == "complex" else 2)
    for _ in range(1000):
        p = int(rng.integers(0, 4))
        q = int(rng.integers(0 if p else 1, 4 - p))
        sig = Signature(p, q)
        cplx = space == "complex"
        z0 = rng.standard_normal(sig.n + 1) + (1j * rng.standard_normal(sig.n + 1) if cplx else 0)
        V = rng.standard_normal((sig.n, sig.n + 1)) + (1j * rng.standard_normal((sig.n, sig.n + 1)) if cplx else 0)
        D = d_form_array(V, sig, space)
        lhs = np.sum(sig.coordinate_signs(space) * z0 * D)
        rhs = dv_form(np.vstack([z0, V]), sig, space)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs), np.abs(z0).max() * np.abs(V).max() ** sig.n)


def test_complex_form_restricts_to_real_form():
    rng = np.random.default_rng(4)
    for pq in [(1, 1), (2, 1), (1, 2), (2, 2)]:
        sig = Signature(*pq)
        for _ in range(100):
            V = rng.standard_normal((sig.n, sig.n + 1))
            Dc = d_form_array(embed_coords(V, sig), sig, "complex")
            Dr = d_form_array(V, sig, "real-pq")
            np.testing.assert_allclose(Dc, embed_coords(Dr, sig), atol=1e-12)


def test_surface_measure_examples():
    sig = Signature(1, 1)
    S1 = Boundary.sphere(sig)
    m = surface_measure(S1, Paravector(sig, [1, 0, 0]))
    assert m.normal.allclose(Paravector(sig, [1, 0, 0])) and m.factor.allclose(Multivector.scalar(1.0, sig))
    m = surface_measure(S1, Paravector(sig, [0, 0, 1]))
    assert m.factor.allclose(Multivector.blade(2, sig, value=-1.0))
    box = Boundary.box(sig, 0.5, [0.5, 0.5, 0.5])
    m = surface_measure(box, Paravector(sig, [0.5, 1.0, 0.3]))
    assert m.factor.allclose(Multivector.blade(1, sig))
    with pytest.raises(GeometryError):
        surface_measure(box, Paravector(sig, [1.0, 1.0, 0.3]))
    with pytest.raises(GeometryError):
        surface_measure(S1, Paravector(sig, [0.5, 0, 0]))


@pytest.mark.parametrize("pq", [(1, 1), (2, 1), (1, 2), (2, 0)])
def test_restriction_to_sphere(pq):
    sig = Signature(*pq)
    rng = np.random.default_rng(5)
    r = 1.7
    b = Boundary.sphere(sig, r)
    for _ in range(100):
        x = rng.standard_normal(sig.n + 1)
        X = Paravector(sig, r * x / np.linalg.norm(x))
        frame = oriented_tangent_frame(b, X, rng)
        dS = surface_measure(b, X).dS(frame)
        D = d_form(frame).coords
        np.testing.assert_allclose(D, conj_coords(X.coords, sig) / r * dS, atol=1e-10)


def test_h_eps_examples():
    sig = Signature(1, 1)
    X = Paravector(sig, [1, 0, 1]).embed()
    assert h_eps_map(X, 0.0).allclose(X)
    assert abs(n_form(h_eps_map(X, 0.2)) - 0.8j) <= 1e-15
    Y = Paravector(sig, [0.3, -1.2, 0.7])
    assert abs(n_form(h_eps_map(Y.embed(), 1.0)) - 2j * np.sum(Y.coords.real ** 2)) <= 1e-14


def test_h_eps_norm_identity():
    rng = np.random.default_rng(6)
    for _ in range(1000):
        p = int(rng.integers(0, 4))
        sig = Signature(p, int(rng.integers(0 if p else 1, 4)))
        x = rng.standard_normal(sig.n + 1)
        e = rng.uniform(-1, 1)
        X = Paravector(sig, x)
        lhs = n_form(h_eps_map(X.embed(), e))
        rhs = (1 - e * e) * n_form(X) + 2j * e * np.sum(x * x)
        assert abs(lhs - rhs) <= 1e-14 * max(1.0, np.sum(x * x)) * 4


def test_h_eps_pullback():
    rng = np.random.default_rng(7)
    sig = Signature(2, 1)
    V = rng.standard_normal((sig.n, sig.n + 1)) + 1j * rng.standard_normal((sig.n, sig.n + 1))
    np.testing.assert_array_equal(h_eps_pullback_array(V, 0.0, sig), d_form_array(V, sig, "complex"))
    a = np.array([1 + 0.3j, 1 + 0.3j, 1 + 0.3j, 1 - 0.3j])
    np.testing.assert_allclose(h_eps_pullback_array(V, 0.3, sig), d_form_array(V * a, sig, "complex"), atol=1e-13)
    X = Paravector(sig, [0.1, 0.2, 0.3, 0.4])
    fr = TangentFrame(X, tuple(Paravector(sig, v.real) for v in V))
    np.testing.assert_allclose(h_eps_pullback_form(fr, 0.3).coords,
                               d_form_array(embed_coords(V.real, sig) * a, sig, "complex"), atol=1e-13)


@pytest.mark.parametrize("pq", [(1, 1), (2, 1), (2, 0)])
def test_ray_charts_land_on_boundary(pq):
    sig = Signature(*pq)
    b = Boundary.ellipsoid(sig, np.linspace(0.8, 1.3, sig.n + 1), np.full(sig.n + 1, 0.1))
    rng = np.random.default_rng(8)
    for chart in ray_charts(b, sig, pole=b.center + 0.2):
        lo, hi = np.array(chart.ranges).T
        u = lo + (hi - lo) * rng.uniform(0.05, 0.95, (50, len(lo)))
        x = chart.points(u)
        np.testing.assert_allclose(b.level(x), 1.0, atol=1e-13)
        T = chart.tangents(u)
        n = chart.normals(x)
        assert np.max(np.abs(np.einsum("mkj,mj->mk", T, n))) <= 1e-12
        for k in range(len(lo)):
            du = np.zeros(len(lo))
            du[k] = 1e-6
            fd = (chart.points(u + du) - chart.points(u - du)) / 2e-6
            np.testing.assert_allclose(T[:, k], fd, atol=1e-8)


def test_box_face_charts():
    sig = Signature(1, 1)
    b = Boundary.box(sig, 0.5, [0.5, 0.5, 0.5])
    charts = box_face_charts(b)
    assert len(charts) == 6
    for c in charts:
        x = c.points(np.array([[0.2, 0.7]]))
        assert abs(b.level(x)[0] - 1.0) <= 1e-15
