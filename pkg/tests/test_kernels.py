import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pqclifford.algebra import Multivector, Paravector, Signature, embed_iota
from pqclifford.fields import BlackBoxField, dirac
from pqclifford.kernels import (
    BranchCutError, BranchedPower, KernelPoint, OriginError, branched_power, classify, dirac_of_g_eps,
    g_eps_array, g_eps_kernel, g_kernel, h_kernel,
)


def test_branched_power_principal_sheet():
    rng = np.random.default_rng(0)
    w = rng.standard_normal(10_000) * 10 + 1j * rng.standard_normal(10_000) * 10
    r = branched_power(w, 1)
    assert np.all(r.real > 0)
    np.testing.assert_array_equal(branched_power(w, 2), w)
    np.testing.assert_allclose(branched_power(w, 1) ** 2, w, rtol=1e-13)


def test_branched_power_odd_powers_and_cut():
    w = 2.0 - 0.5j
    s = cmath.sqrt(w)
    assert abs(BranchedPower(w, -3).value - s ** -3) <= 1e-15
    assert abs(BranchedPower(w, 5).value - s ** 5) <= 1e-13
    with pytest.raises(BranchCutError):
        branched_power(-1.0 + 0j, 1)
    with pytest.raises(BranchCutError):
        branched_power(0.0, -1)


@settings(max_examples=300, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3).filter(lambda x: abs(x) > 1e-6), st.integers(-7, 7))
def test_branched_power_is_power_of_principal_root(a, b, m):
    w = complex(a, b)
    ref = cmath.sqrt(w) ** m
    assert cmath.isclose(complex(branched_power(w, m)), ref, rel_tol=1e-12, abs_tol=1e-300)


def test_h_kernel_examples():
    n2 = Signature(2, 0)
    assert h_kernel(Paravector(n2, [1, 0, 0], "complex")) == 1
    with pytest.raises(BranchCutError):
        h_kernel(Paravector(Signature(1, 1), [1, 0, 1]))
    with pytest.raises(BranchCutError):
        h_kernel(Paravector(Signature(3, 0), [0, 0, 0, 1e-3j], "complex"))


def test_g_kernel_examples():
    n2 = Signature(2, 0)
    assert g_kernel(Paravector(n2, [1, 0, 0], "complex")).allclose(Multivector.scalar(1.0, n2, "complex"))
    assert g_kernel(Paravector(n2, [0, 1, 0])).allclose(Multivector.blade(1, n2, value=-1.0))
    sig = Signature(1, 1)
    want = (Multivector.scalar(2.0, sig) - Multivector.blade(2, sig)) * 3 ** -1.5
    assert g_kernel(Paravector(sig, [2, 0, 1])).allclose(want, rtol=1e-14)


def test_regions():
    sig = Signature(1, 1)
    assert classify(Paravector(sig, [2, 0, 1])) == "in_R_G"
    assert classify(Paravector(sig, [1, 0, 2])) == "excluded"
    assert classify(Paravector(sig, [1, 0, 1])) == "excluded"
    assert classify(Paravector(sig, [1, 0, 2], "complex")) == "in_C_G"
    assert classify(Paravector(sig, [1j, 0, 0], "complex")) == "excluded"
    assert KernelPoint(Paravector(sig, [0, 0, 0])).region == "excluded"


def test_g_eps_examples():
    sig = Signature(1, 1)
    X = Paravector(sig, [1, 0, 1])
    got = g_eps_kernel(X, 0.5)
    root = cmath.exp(1j * math.pi / 4)
    want = (Multivector.scalar(1.0, sig) - Multivector.blade(2, sig)) * root ** -3
    assert got.allclose(want, rtol=1e-14)
    with pytest.raises(OriginError):
        g_eps_kernel(Paravector(sig, [0, 0, 0]), 0.1)


def test_g_eps_tends_to_g_off_the_cone():
    sig = Signature(2, 1)
    X = Paravector(sig, [1.5, 0.2, -0.3, 0.4])
    errs = [(g_eps_kernel(X, e) - g_kernel(X)).norm() for e in (1e-2, 1e-4, 1e-6)]
    assert errs[0] > errs[1] > errs[2] and errs[2] <= 1e-5 * g_kernel(X).norm()


def test_g_eps_parity():
    rng = np.random.default_rng(3)
    for pq in [(1, 1), (2, 1), (1, 2), (2, 2)]:
        sig = Signature(*pq)
        for _ in range(50):
            x = rng.standard_normal(sig.n + 1)
            e = rng.uniform(0.01, 1)
            np.testing.assert_allclose(g_eps_array(x, -e, sig), np.conj(g_eps_array(x, e, sig)), rtol=1e-14)


@pytest.mark.parametrize("pq", [(1, 1), (2, 1), (1, 2), (2, 2)])
def test_restriction_consistency(pq):
    sig = Signature(*pq)
    rng = np.random.default_rng(sum(pq))
    done = 0
    while done < 100:
        x = rng.uniform(-2, 2, sig.n + 1)
        if np.sum(sig.coordinate_signs() * x * x) <= 0.1:
            continue
        done += 1
        X = Paravector(sig, x)
        assert g_kernel(X.embed(), "complex").allclose(embed_iota(g_kernel(X)), rtol=1e-13, atol=0)


def test_dirac_of_g_eps_vanishes_on_e0_axis():
    sig = Signature(1, 1)
    for side in ("left", "right"):
        assert dirac_of_g_eps(Paravector(sig, [1, 0, 0]), 0.2, side).norm() == 0


def _g_eps_field(sig, eps):
    return BlackBoxField(sig, "real-pq", lambda P: g_eps_kernel(P, eps),
                         batch=lambda c: g_eps_array(np.asarray(c).real, eps, sig))


def test_dirac_of_g_eps_on_the_cone():
    sig = Signature(1, 1)
    X = Paravector(sig, [1, 0, 1])
    for side in ("left", "right"):
        exact = dirac_of_g_eps(X, 0.3, side)
        fd = dirac(_g_eps_field(sig, 0.3), X, "nabla_plus", side, h=1e-4)
        assert (exact - fd).norm() <= 1e-6 * exact.norm()


@pytest.mark.parametrize("pq", [(1, 1), (2, 1), (1, 2), (2, 2)])
def test_dirac_of_g_eps_random(pq):
    sig = Signature(*pq)
    rng = np.random.default_rng(10 + sum(pq))
    for _ in range(100):
        x = rng.standard_normal(sig.n + 1)
        x *= rng.uniform(0.5, 2) / np.linalg.norm(x)
        e = rng.uniform(0.05, 0.5)
        X = Paravector(sig, x)
        side = "left" if rng.random() < 0.5 else "right"
        exact = dirac_of_g_eps(X, e, side)
        fd = dirac(_g_eps_field(sig, e), X, "nabla_plus", side, h=1e-4)
        assert (exact - fd).norm() <= 1e-6 * exact.norm()


@pytest.mark.parametrize("pq", [(1, 1), (2, 1), (1, 2)])
def test_g_kernel_monogenic_real(pq):
    sig = Signature(*pq)
    f = BlackBoxField(sig, "real-pq", lambda P: g_kernel(P))
    rng = np.random.default_rng(21)
    done = 0
    while done < 50:
        x = rng.uniform(-2, 2, sig.n + 1)
        if np.sum(sig.coordinate_signs() * x * x) < 0.5:
            continue
        done += 1
        for side in ("left", "right"):
            assert dirac(f, Paravector(sig, x), "nabla_plus", side, h=1e-4).norm() <= 1e-8


@pytest.mark.parametrize("n", [2, 3])
def test_g_kernel_monogenic_complex(n):
    sig = Signature(n, 0)
    f = BlackBoxField(sig, "complex", lambda P: g_kernel(P))
    rng = np.random.default_rng(n)
    done = 0
    while done < 50:
        z = rng.uniform(-2, 2, n + 1) + 0.5j * rng.uniform(-1, 1, n + 1)
        if np.sum(z * z).real < 0.5:
            continue
        done += 1
        for side in ("left", "right"):
            assert dirac(f, Paravector(sig, z, "complex"), "nabla_plus", side, h=1e-4).norm() <= 1e-8
