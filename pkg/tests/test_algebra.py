import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pqclifford.algebra import (
    AlgebraError, Multivector, NullConeError, Paravector, Signature, blade_product, cayley_table,
    conjugate, embed_iota, invert, iota_inverse, is_real_pq, mul_arrays, mv_mul, n_form, bilinear,
    norm_sq, vector_masks,
)


def word_product(a, b, sig, space):
    """Independent oracle: multiply generator words by adjacent swaps and contractions."""
    word = [j for j in range(sig.n) if a >> j & 1] + [j for j in range(sig.n) if b >> j & 1]
    sign = 1
    changed = True
    while changed:
        changed = False
        for i in range(len(word) - 1):
            if word[i] > word[i + 1]:
                word[i], word[i + 1] = word[i + 1], word[i]
                sign = -sign
                changed = True
                break
            if word[i] == word[i + 1]:
                g = word[i]
                sign *= 1 if (space == "real-pq" and g >= sig.p) else -1
                del word[i:i + 2]
                changed = True
                break
    return sign, sum(1 << j for j in word)


SIGS = [Signature(p, q) for p, q in [(1, 0), (0, 1), (1, 1), (2, 1), (1, 2), (2, 2), (3, 1), (0, 3)]]


@pytest.mark.parametrize("sig", SIGS, ids=str)
@pytest.mark.parametrize("space", ["real-pq", "complex"])
def test_blade_product_matches_word_oracle(sig, space):
    for a in range(sig.dim):
        for b in range(sig.dim):
            assert blade_product(a, b, sig, space) == word_product(a, b, sig, space)


def test_generator_squares():
    sig = Signature(1, 1)
    assert blade_product(1, 1, sig, "complex") == (-1, 0)
    assert blade_product(2, 2, sig, "complex") == (-1, 0)
    assert blade_product(1, 1, sig, "real-pq") == (-1, 0)
    assert blade_product(2, 2, sig, "real-pq") == (1, 0)


def test_identity_and_anticommutation():
    sig = Signature(2, 2)
    for B in range(sig.dim):
        assert blade_product(0, B, sig) == (1, B)
        assert blade_product(B, 0, sig) == (1, B)
    for j, k in itertools.permutations(range(4), 2):
        s1, m1 = blade_product(1 << j, 1 << k, sig)
        s2, m2 = blade_product(1 << k, 1 << j, sig)
        assert m1 == m2 and s1 == -s2


def test_blade_product_rejects_bad_masks():
    with pytest.raises(AlgebraError):
        blade_product(4, 0, Signature(1, 1))


@pytest.mark.parametrize("pq", [(0, 0), (-1, 2), (1.5, 1)])
def test_signature_validation(pq):
    with pytest.raises(AlgebraError):
        Signature(*pq)


@pytest.mark.parametrize("n", range(1, 6))
def test_associativity_exhaustive(n):
    for p in range(n + 1):
        for space in ("real-pq", "complex"):
            sig = Signature(p, n - p)
            sign, index = cayley_table(sig, space)
            d = sig.dim
            a, b, c = np.meshgrid(np.arange(d), np.arange(d), np.arange(d), indexing="ij")
            ab, bc = index[a, b], index[b, c]
            assert np.array_equal(index[ab, c], index[a, bc])
            assert np.array_equal(sign[a, b] * sign[ab, c], sign[b, c] * sign[a, bc])


def test_mv_mul_example():
    sig = Signature(2, 0)
    x = Multivector.blade(0, sig) + Multivector.blade(1, sig)
    y = Multivector.blade(0, sig) - Multivector.blade(1, sig)
    assert (x * y).allclose(Multivector.scalar(2.0, sig))


def test_mv_mul_unit_and_mismatch():
    rng = np.random.default_rng(1)
    sig = Signature(2, 1)
    a = Multivector(sig, rng.standard_normal(sig.dim) + 1j * rng.standard_normal(sig.dim))
    assert (a * Multivector.scalar(1.0, sig)).allclose(a)
    with pytest.raises(AlgebraError):
        mv_mul(a, Multivector.scalar(1.0, Signature(1, 2)))
    with pytest.raises(AlgebraError):
        mv_mul(a, Multivector.scalar(1.0, sig, "complex"))


def dense_oracle(x, y, sig, space):
    out = np.zeros(sig.dim, dtype=complex)
    for a in range(sig.dim):
        for b in range(sig.dim):
            s, m = word_product(a, b, sig, space)
            out[m] += s * x[a] * y[b]
    return out


@pytest.mark.parametrize("sig", [Signature(1, 1), Signature(2, 1), Signature(3, 1)], ids=str)
def test_mul_arrays_batched_against_oracle(sig):
    rng = np.random.default_rng(7)
    x = rng.standard_normal((5, sig.dim)) + 1j * rng.standard_normal((5, sig.dim))
    y = rng.standard_normal((5, sig.dim)) + 1j * rng.standard_normal((5, sig.dim))
    for space in ("real-pq", "complex"):
        got = mul_arrays(x, y, sig, space)
        for k in range(5):
            np.testing.assert_allclose(got[k], dense_oracle(x[k], y[k], sig, space), atol=1e-12)


def test_mul_arrays_compact_paravector_operands():
    sig = Signature(2, 2)
    rng = np.random.default_rng(3)
    vm = vector_masks(sig.n)
    u = rng.standard_normal((4, sig.n + 1))
    y = rng.standard_normal((4, sig.dim))
    full = np.zeros((4, sig.dim))
    full[:, vm] = u
    np.testing.assert_allclose(mul_arrays(u, y, sig, "real-pq", x_masks=vm),
                               mul_arrays(full, y, sig, "real-pq"), atol=1e-13)
    np.testing.assert_allclose(mul_arrays(y, u, sig, "real-pq", y_masks=vm),
                               mul_arrays(y, full, sig, "real-pq"), atol=1e-13)


def test_exact_products():
    from fractions import Fraction

    sig = Signature(1, 2)
    c = np.empty(sig.dim, dtype=object)
    c[:] = [Fraction(k, 3) for k in range(sig.dim)]
    x = Multivector(sig, c)
    assert (x * x).exact
    ref = dense_oracle(np.arange(sig.dim) / 3, np.arange(sig.dim) / 3, sig, "real-pq")
    np.testing.assert_allclose((x * x).coeffs.astype(complex), ref, atol=1e-12)


def test_conjugations():
    sig = Signature(1, 1)
    Z = Paravector(sig, [1.0, 1.0, 0.0], "complex")
    assert conjugate(Z, "clifford").allclose(Paravector(sig, [1.0, -1.0, 0.0], "complex"))
    X = Paravector(sig, [0.5, 2.0, 3.0])
    assert conjugate(X, "complex").allclose(Paravector(sig, [0.5, 2.0, -3.0]))
    # complex conjugation restricts through iota
    assert conjugate(X.embed(), "complex").allclose(conjugate(X, "complex").embed())


def test_norms_examples():
    sig = Signature(1, 1)
    X = Paravector(sig, [1, 0, 1])
    assert n_form(X) == 0 and norm_sq(X) == 2
    Z = Paravector(sig, [1j, 1, 0], "complex")
    assert n_form(Z) == 0 and norm_sq(Z) == 2
    assert bilinear(Paravector.basis(0, sig), Paravector.basis(1, sig)) == 0


def test_invert_examples():
    sig = Signature(2, 0)
    assert invert(Paravector(sig, [2, 0, 0])).allclose(Paravector(sig, [0.5, 0, 0]))
    assert invert(Paravector(sig, [1, 1, 0])).allclose(Paravector(sig, [0.5, -0.5, 0]))
    with pytest.raises(NullConeError):
        invert(Paravector(Signature(1, 1), [1, 0, 1]))


def test_invert_threshold_is_scale_invariant():
    sig = Signature(1, 1)
    for s in (1e-8, 1.0, 1e8):
        with pytest.raises(NullConeError):
            invert(Paravector(sig, [s, 0, s * (1 + 1e-15)]))
        Y = invert(Paravector(sig, [s, 0, 0.5 * s]))
        assert (Y.to_multivector() * Paravector(sig, [s, 0, 0.5 * s]).to_multivector()).allclose(
            Multivector.scalar(1.0, sig))


coords = st.floats(-10, 10, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(SIGS), st.data())
def test_z_zplus_is_n(sig, data):
    c = [data.draw(coords) for _ in range(sig.n + 1)]
    for kind in ("real-pq", "complex"):
        Z = Paravector(sig, c, kind)
        prod = Z.to_multivector() * conjugate(Z, "clifford").to_multivector()
        scale = max(1.0, norm_sq(Z))
        assert prod.allclose(Multivector.scalar(n_form(Z), sig, kind), rtol=0, atol=1e-13 * scale)


def test_z_zplus_exact():
    from fractions import Fraction

    sig = Signature(2, 1)
    c = np.empty(sig.dim, dtype=object)
    c[:] = 0
    for m, v in zip(vector_masks(sig.n), [Fraction(1, 2), 3, Fraction(-2, 7), 5]):
        c[m] = v
    z = Multivector(sig, c)
    cp = c.copy()
    cp[vector_masks(sig.n)[1:]] *= -1
    prod = z * Multivector(sig, cp)
    N = Fraction(1, 4) + 9 + Fraction(4, 49) - 25
    assert prod.coeffs[0] == N and not any(prod.coeffs[1:])


def test_euclidean_norm_identity():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        sig = SIGS[rng.integers(len(SIGS))]
        Z = Paravector(sig, rng.standard_normal(sig.n + 1) + 1j * rng.standard_normal(sig.n + 1), "complex")
        zb = conjugate(Z, "complex").to_multivector()
        zp = conjugate(Z, "clifford").to_multivector()
        zbp = conjugate(conjugate(Z, "complex"), "clifford").to_multivector()
        zm = Z.to_multivector()
        half = 0.5 * (zm * zbp + zb * zp)
        assert abs(half.coeffs[0] - norm_sq(Z)) <= 1e-13 * norm_sq(Z)


def test_iota_examples():
    sig = Signature(1, 1)
    assert embed_iota(Multivector.blade(2, sig)).allclose(Multivector.blade(2, sig, "complex", 1j))
    assert embed_iota(Multivector.blade(0, sig)).allclose(Multivector.blade(0, sig, "complex"))
    sig = Signature(1, 2)
    assert embed_iota(Multivector.blade(0b110, sig)).allclose(Multivector.blade(0b110, sig, "complex", -1.0))
    with pytest.raises(AlgebraError):
        embed_iota(Multivector.blade(0, sig, "complex"))


def test_paravector_embed_project_roundtrip():
    sig = Signature(2, 2)
    X = Paravector(sig, [1.0, -2.0, 0.5, 3.0, -1.5])
    assert X.embed().allclose(Paravector(sig, [1.0, -2.0, 0.5, 3j, -1.5j], "complex"))
    assert X.embed().project().allclose(X)


@pytest.mark.parametrize("pq", [(1, 1), (2, 1), (1, 2), (2, 2)])
def test_iota_multiplicative_exact(pq):
    sig = Signature(*pq)
    rng = np.random.default_rng(sum(pq))
    for _ in range(500):
        x = Multivector(sig, rng.integers(-5, 6, sig.dim) + 1j * rng.integers(-5, 6, sig.dim))
        y = Multivector(sig, rng.integers(-5, 6, sig.dim) + 1j * rng.integers(-5, 6, sig.dim))
        assert embed_iota(x * y) == embed_iota(x) * embed_iota(y)


def test_iota_exact_mode():
    from sympy.polys.domains import QQ_I

    sig = Signature(1, 1)
    c = np.empty(sig.dim, dtype=object)
    c[:] = [QQ_I(1, 2), QQ_I(0, 1), QQ_I(3, 0), QQ_I(-1, -1)]
    x = Multivector(sig, c)
    assert embed_iota(x * x) == embed_iota(x) * embed_iota(x)


def test_iota_injective_and_real_predicate():
    rng = np.random.default_rng(5)
    sig = Signature(2, 2)
    for _ in range(50):
        x = Multivector(sig, rng.standard_normal(sig.dim))
        z = embed_iota(x)
        assert is_real_pq(z)
        assert not is_real_pq(Multivector(sig, 1j * z.coeffs, "complex"))
        assert iota_inverse(z).allclose(x)
        y = Multivector(sig, rng.standard_normal(sig.dim))
        assert is_real_pq(embed_iota(x * y))
