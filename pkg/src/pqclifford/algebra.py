"""Clifford algebras of signature (p, q) and their complexification.

Sign convention
---------------
Generators square to *minus* their quadratic form value: ``e_j**2 = -1`` for
the ``p`` generators with ``Q(e_j) = +1`` and ``ee_j**2 = +1`` for the ``q``
tilde generators with ``Q(ee_j) = -1``.  In the complex algebra every
generator squares to ``-1``.  This is the opposite of the most common
geometric-algebra convention, so a signature ``(p, q)`` here corresponds to
``Cl(q, p)`` in, e.g., the ``clifford`` package.

Blades are encoded as integer bitmasks: bit ``j - 1`` set means generator
``e_j`` is present, and mask ``0`` is the identity ``e_0``.  Generators
``1..p`` are the ordinary ones, ``p+1..p+q`` the tilde ones.

Two coefficient "spaces" are distinguished:

``"real-pq"``
    products use the real signature-(p, q) sign rules (coefficients may still
    be complex, i.e. the complexification of the real algebra);
``"complex"``
    products use the complex-algebra rule (every generator squares to -1).

The embedding ``iota`` sends ``ee_j -> i e_j`` and connects the two.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Literal, Sequence

import numpy as np

Space = Literal["real-pq", "complex"]
SPACES = ("real-pq", "complex")

#: default relative threshold for the null-cone test in :func:`invert`
NULL_CONE_RTOL = 1e-12


class AlgebraError(ValueError):
    """Invalid algebra input (signature mismatch, bad blade mask, ...)."""


class NullConeError(ArithmeticError):
    """Paravector lies on (or numerically at) the null cone N(Z) = 0."""


def check_space(space: str) -> Space:
    if space not in SPACES:
        raise AlgebraError(f"unknown space {space!r}; expected one of {SPACES}")
    return space  # type: ignore[return-value]


@dataclass(frozen=True)
class Signature:
    """Signature ``(p, q)`` of a non-degenerate real quadratic form."""

    p: int
    q: int

    def __post_init__(self):
        if not (isinstance(self.p, (int, np.integer)) and isinstance(self.q, (int, np.integer))):
            raise AlgebraError("signature entries must be integers")
        if self.p < 0 or self.q < 0:
            raise AlgebraError(f"signature entries must be non-negative, got ({self.p}, {self.q})")
        if self.p + self.q == 0:
            raise AlgebraError("signature (0, 0) is not allowed: need p + q >= 1")

    @property
    def n(self) -> int:
        return self.p + self.q

    @property
    def dim(self) -> int:
        """Number of blades, ``2**n``."""
        return 1 << self.n

    @property
    def tilde_mask(self) -> int:
        """Bitmask of the tilde generators ``p+1..p+q``."""
        return ((1 << self.q) - 1) << self.p

    def coordinate_signs(self, space: Space = "real-pq") -> np.ndarray:
        """Signs of the quadratic form ``N`` on paravector coordinates 0..n."""
        s = np.ones(self.n + 1)
        if check_space(space) == "real-pq":
            s[self.p + 1:] = -1.0
        return s

    def __str__(self):
        return f"({self.p},{self.q})"


def as_signature(sig) -> Signature:
    if isinstance(sig, Signature):
        return sig
    p, q = sig
    return Signature(int(p), int(q))


# ---------------------------------------------------------------------------
# blades


def grade(mask: int) -> int:
    return int(mask).bit_count()


def _reorder_sign(a: int, b: int) -> int:
    """Sign from sorting the generator word ``e_a e_b`` into canonical order."""
    a >>= 1
    swaps = 0
    while a:
        swaps += (a & b).bit_count()
        a >>= 1
    return -1 if swaps & 1 else 1


def _square_sign(common: int, sig: Signature, space: Space) -> int:
    if space == "complex":
        return -1 if common.bit_count() & 1 else 1
    # ordinary generators square to -1, tilde ones to +1
    neg = (common & ~sig.tilde_mask).bit_count()
    return -1 if neg & 1 else 1


def blade_product(a: int, b: int, sig, space: Space = "real-pq") -> tuple[int, int]:
    """Product of basis blades ``e_a e_b``; returns ``(sign, a ^ b)``."""
    sig = as_signature(sig)
    space = check_space(space)
    top = sig.dim
    if not (0 <= a < top and 0 <= b < top):
        raise AlgebraError(f"blade masks {a}, {b} invalid for n = {sig.n}")
    return _reorder_sign(a, b) * _square_sign(a & b, sig, space), a ^ b


@lru_cache(maxsize=None)
def cayley_table(sig: Signature, space: Space) -> tuple[np.ndarray, np.ndarray]:
    """Sign and result-index tables, ``e_a e_b = sign[a, b] * e_{index[a, b]}``."""
    dim = sig.dim
    sign = np.empty((dim, dim), dtype=np.int8)
    index = np.empty((dim, dim), dtype=np.intp)
    for a in range(dim):
        for b in range(dim):
            s, r = blade_product(a, b, sig, space)
            sign[a, b] = s
            index[a, b] = r
    sign.setflags(write=False)
    index.setflags(write=False)
    return sign, index


@lru_cache(maxsize=None)
def _product_tensor(sig: Signature, space: Space) -> np.ndarray:
    """Dense tensor ``T[a, b, c]`` with ``(x y)_c = sum_ab x_a y_b T[a, b, c]``."""
    sign, index = cayley_table(sig, space)
    dim = sig.dim
    t = np.zeros((dim, dim, dim))
    a, b = np.meshgrid(np.arange(dim), np.arange(dim), indexing="ij")
    t[a, b, index] = sign
    t.setflags(write=False)
    return t


def mul_arrays(x: np.ndarray, y: np.ndarray, sig, space: Space, x_masks=None, y_masks=None) -> np.ndarray:
    """Batched product of coefficient arrays of shape ``(..., 2**n)``.

    ``x_masks`` / ``y_masks`` declare an operand as compact: its last axis
    then holds only the coefficients of those blades (e.g.
    ``vector_masks(n)`` for paravectors), which skips the zero rows of the
    product tensor.
    """
    sig = as_signature(sig)
    x = np.asarray(x)
    y = np.asarray(y)
    if x.dtype == object or y.dtype == object:
        if x_masks is not None or y_masks is not None:
            raise AlgebraError("compact operands are not supported in exact mode")
        return _mul_exact(x, y, sig, space)
    xm = np.arange(sig.dim) if x_masks is None else np.asarray(x_masks)
    ym = np.arange(sig.dim) if y_masks is None else np.asarray(y_masks)
    if xm.size * ym.size * sig.dim <= 1 << 16:
        t = _product_tensor(sig, space)[np.ix_(xm, ym)].reshape(xm.size * ym.size, sig.dim)
        shape = np.broadcast_shapes(x.shape[:-1], y.shape[:-1])
        outer = (np.broadcast_to(x, shape + x.shape[-1:])[..., :, None]
                 * np.broadcast_to(y, shape + y.shape[-1:])[..., None, :])
        return outer.reshape(shape + (xm.size * ym.size,)) @ t
    sign, index = cayley_table(sig, space)
    out = np.zeros(np.broadcast_shapes(x.shape[:-1], y.shape[:-1]) + (sig.dim,),
                   dtype=np.result_type(x, y, float))
    for i, a in enumerate(xm):
        out[..., index[a, ym]] += x[..., i:i + 1] * (sign[a, ym] * y)
    return out


def _mul_exact(x, y, sig, space):
    if x.ndim != 1 or y.ndim != 1:
        raise AlgebraError("exact (object dtype) products are only supported unbatched")
    sign, index = cayley_table(sig, space)
    out = [0] * sig.dim
    for a, xa in enumerate(x):
        if not xa:
            continue
        for b, yb in enumerate(y):
            if not yb:
                continue
            out[index[a, b]] = out[index[a, b]] + int(sign[a, b]) * (xa * yb)
    res = np.empty(sig.dim, dtype=object)
    res[:] = out
    return res


def blade_name(mask: int, sig: Signature, space: Space = "real-pq") -> str:
    if mask == 0:
        return "e0"
    parts = []
    for j in range(sig.n):
        if mask >> j & 1:
            tilde = space == "real-pq" and j >= sig.p
            parts.append(("ee" if tilde else "e") + str(j + 1))
    return "".join(parts)


# ---------------------------------------------------------------------------
# multivectors


class Multivector:
    """Element of the (complexified) Clifford algebra over a 2**n blade basis.

    ``coeffs`` is a dense length-``2**n`` array indexed by blade mask.  Numeric
    dtypes give floating-point arithmetic; ``dtype=object`` arrays holding
    exact numbers (ints, ``Fraction``, Gaussian rationals) give exact results.
    """

    __slots__ = ("sig", "space", "coeffs")

    def __init__(self, sig, coeffs, space: Space = "real-pq"):
        sig = as_signature(sig)
        arr = np.asarray(coeffs)
        if arr.dtype != object:
            arr = arr.astype(complex)
        if arr.shape != (sig.dim,):
            raise AlgebraError(f"expected {sig.dim} coefficients, got shape {arr.shape}")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "sig", sig)
        object.__setattr__(self, "space", check_space(space))
        object.__setattr__(self, "coeffs", arr)

    def __setattr__(self, key, value):
        raise AttributeError("Multivector is immutable")

    # construction helpers
    @classmethod
    def zero(cls, sig, space: Space = "real-pq", exact: bool = False):
        sig = as_signature(sig)
        c = np.zeros(sig.dim, dtype=object if exact else complex)
        if exact:
            c[:] = 0
        return cls(sig, c, space)

    @classmethod
    def blade(cls, mask: int, sig, space: Space = "real-pq", value=1.0):
        sig = as_signature(sig)
        if not 0 <= mask < sig.dim:
            raise AlgebraError(f"blade mask {mask} invalid for n = {sig.n}")
        exact = not isinstance(value, (float, complex, np.floating, np.complexfloating))
        mv = cls.zero(sig, space, exact=exact)
        c = mv.coeffs.copy()
        c[mask] = value
        return cls(sig, c, space)

    @classmethod
    def scalar(cls, value, sig, space: Space = "real-pq"):
        return cls.blade(0, sig, space, value)

    @property
    def exact(self) -> bool:
        return self.coeffs.dtype == object

    def _coerce(self, other) -> "Multivector":
        if isinstance(other, Multivector):
            if other.sig != self.sig:
                raise AlgebraError(f"signature mismatch: {self.sig} vs {other.sig}")
            if other.space != self.space:
                raise AlgebraError(f"space mismatch: {self.space} vs {other.space}")
            return other
        if np.isscalar(other) or isinstance(other, (int, float, complex)):
            return Multivector.scalar(other, self.sig, self.space)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return Multivector(self.sig, self.coeffs + other.coeffs, self.space)

    __radd__ = __add__

    def __neg__(self):
        return Multivector(self.sig, -self.coeffs, self.space)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return Multivector(self.sig, self.coeffs - other.coeffs, self.space)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        if isinstance(other, Multivector):
            return mv_mul(self, other)
        if isinstance(other, (int, float, complex, np.number)) or not hasattr(other, "__len__"):
            return Multivector(self.sig, self.coeffs * other, self.space)
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, Multivector):
            return mv_mul(other, self)
        return Multivector(self.sig, other * self.coeffs, self.space)

    def __truediv__(self, other):
        return Multivector(self.sig, self.coeffs / other, self.space)

    def __eq__(self, other):
        if not isinstance(other, Multivector):
            return NotImplemented
        return (self.sig == other.sig and self.space == other.space
                and not any(a - b for a, b in zip(self.coeffs, other.coeffs)))

    __hash__ = None  # type: ignore[assignment]

    def __getitem__(self, mask: int):
        return self.coeffs[mask]

    def norm(self) -> float:
        """Root sum of squared coefficient magnitudes."""
        return float(np.sqrt(sum(abs(complex(c)) ** 2 for c in self.coeffs)))

    def allclose(self, other: "Multivector", rtol=1e-12, atol=1e-12) -> bool:
        other = self._coerce(other)
        return bool(np.allclose(self.coeffs.astype(complex), other.coeffs.astype(complex), rtol=rtol, atol=atol))

    def to_dict(self, tol: float = 0.0) -> dict[str, complex]:
        return {blade_name(m, self.sig, self.space): complex(c)
                for m, c in enumerate(self.coeffs) if abs(complex(c)) > tol}

    def __repr__(self):
        terms = [f"({complex(c):.6g})*{blade_name(m, self.sig, self.space)}"
                 for m, c in enumerate(self.coeffs) if c != 0]
        return f"Multivector[{self.space} {self.sig}](" + (" + ".join(terms) or "0") + ")"


def mv_mul(a: Multivector, b: Multivector) -> Multivector:
    """Clifford product of two multivectors of the same signature and space."""
    if a.sig != b.sig:
        raise AlgebraError(f"signature mismatch: {a.sig} vs {b.sig}")
    if a.space != b.space:
        raise AlgebraError(f"space mismatch: {a.space} vs {b.space}")
    return Multivector(a.sig, mul_arrays(a.coeffs, b.coeffs, a.sig, a.space), a.space)


# ---------------------------------------------------------------------------
# paravectors


def vector_masks(n: int) -> np.ndarray:
    """Blade masks of ``e_0, e_1, ..., e_n``."""
    return np.array([0] + [1 << j for j in range(n)], dtype=np.intp)


@dataclass(frozen=True, eq=False)
class Paravector:
    """Element of span{e_0, ..., e_n}.

    For ``kind="real-pq"`` the coordinates are ``x_0..x_p, xx_{p+1}..xx_{p+q}``
    with respect to ``e_0, e_1..e_p, ee_{p+1}..ee_{p+q}``; for
    ``kind="complex"`` they are ``z_0..z_n`` with respect to ``e_0..e_n`` of the
    complex algebra.
    """

    sig: Signature
    coords: np.ndarray
    kind: Space = "real-pq"

    def __post_init__(self):
        sig = as_signature(self.sig)
        c = np.array(self.coords, dtype=complex).reshape(-1)
        if c.shape != (sig.n + 1,):
            raise AlgebraError(f"paravector for n = {sig.n} needs {sig.n + 1} coordinates, got {c.size}")
        c.setflags(write=False)
        object.__setattr__(self, "sig", sig)
        object.__setattr__(self, "coords", c)
        object.__setattr__(self, "kind", check_space(self.kind))

    @classmethod
    def basis(cls, j: int, sig, kind: Space = "real-pq") -> "Paravector":
        sig = as_signature(sig)
        c = np.zeros(sig.n + 1)
        c[j] = 1.0
        return cls(sig, c, kind)

    def to_multivector(self) -> Multivector:
        c = np.zeros(self.sig.dim, dtype=complex)
        c[vector_masks(self.sig.n)] = self.coords
        return Multivector(self.sig, c, self.kind)

    def embed(self) -> "Paravector":
        """iota: real-pq coordinates -> complex-span coordinates."""
        if self.kind == "complex":
            return self
        return Paravector(self.sig, embed_coords(self.coords, self.sig), "complex")

    def project(self) -> "Paravector":
        """Inverse of :meth:`embed` on its image."""
        if self.kind == "real-pq":
            return self
        c = self.coords.copy()
        c[self.sig.p + 1:] = c[self.sig.p + 1:] / 1j
        return Paravector(self.sig, c, "real-pq")

    def __add__(self, other):
        _same(self, other)
        return Paravector(self.sig, self.coords + other.coords, self.kind)

    def __sub__(self, other):
        _same(self, other)
        return Paravector(self.sig, self.coords - other.coords, self.kind)

    def __mul__(self, s):
        return Paravector(self.sig, self.coords * s, self.kind)

    __rmul__ = __mul__

    def __neg__(self):
        return Paravector(self.sig, -self.coords, self.kind)

    def allclose(self, other, rtol=1e-12, atol=1e-12) -> bool:
        _same(self, other)
        return bool(np.allclose(self.coords, other.coords, rtol=rtol, atol=atol))

    def __repr__(self):
        return f"Paravector[{self.kind} {self.sig}]({np.array2string(self.coords, precision=6)})"


def _same(a: Paravector, b: Paravector):
    if a.sig != b.sig or a.kind != b.kind:
        raise AlgebraError(f"paravector mismatch: {a.kind}{a.sig} vs {b.kind}{b.sig}")


def embed_coords(coords: np.ndarray, sig) -> np.ndarray:
    """Apply iota to real-pq paravector coordinates (last axis)."""
    sig = as_signature(sig)
    out = np.array(coords, dtype=complex)
    out[..., sig.p + 1:] *= 1j
    return out


def conjugate(Z: Paravector, mode: Literal["clifford", "complex"]) -> Paravector:
    """Clifford conjugation ``Z+`` or complex conjugation ``Zbar``.

    On real-pq paravectors the complex conjugation is the restriction of the
    complex one through iota: it negates the tilde coordinates (and conjugates
    coordinate values, which is a no-op for real points).
    """
    c = Z.coords.copy()
    if mode == "clifford":
        c[1:] = -c[1:]
    elif mode == "complex":
        c = np.conj(c)
        if Z.kind == "real-pq":
            c[Z.sig.p + 1:] = -c[Z.sig.p + 1:]
    else:
        raise AlgebraError(f"unknown conjugation mode {mode!r}")
    return Paravector(Z.sig, c, Z.kind)


def n_form(Z: Paravector) -> complex:
    """The quadratic form ``N(Z) = Z Z+``."""
    return complex(np.sum(Z.sig.coordinate_signs(Z.kind) * Z.coords ** 2))


def bilinear(Z: Paravector, W: Paravector) -> complex:
    _same(Z, W)
    return complex(np.sum(Z.sig.coordinate_signs(Z.kind) * Z.coords * W.coords))


def norm_sq(Z: Paravector) -> float:
    """Euclidean ``||Z||**2``, the sum of squared coordinate magnitudes."""
    return float(np.sum(np.abs(Z.coords) ** 2))


def invert(Z: Paravector, rtol: float = NULL_CONE_RTOL) -> Paravector:
    """``Z**-1 = Z+ / N(Z)``; raises :class:`NullConeError` on the null cone."""
    N = n_form(Z)
    if abs(N) <= rtol * norm_sq(Z):
        raise NullConeError(f"N(Z) = {N} is zero relative to ||Z||^2 = {norm_sq(Z)}")
    return conjugate(Z, "clifford") * (1.0 / N)


# ---------------------------------------------------------------------------
# the embedding iota: A_{p,q} -> A_{p+q}^C


@lru_cache(maxsize=None)
def iota_factors(sig: Signature) -> np.ndarray:
    """``iota(e_B) = i**k e_B`` where k counts tilde generators in B."""
    tm = sig.tilde_mask
    return np.array([1j ** (m & tm).bit_count() for m in range(sig.dim)])


def embed_iota(x: Multivector) -> Multivector:
    if x.space != "real-pq":
        raise AlgebraError("iota acts on real-pq multivectors")
    f = iota_factors(x.sig)
    if x.exact:
        from sympy.polys.domains import QQ_I
        unit = {0: QQ_I(1, 0), 1: QQ_I(0, 1), 2: QQ_I(-1, 0), 3: QQ_I(0, -1)}
        tm = x.sig.tilde_mask
        c = np.empty(x.sig.dim, dtype=object)
        c[:] = [unit[(m & tm).bit_count() % 4] * v for m, v in enumerate(x.coeffs)]
        return Multivector(x.sig, c, "complex")
    return Multivector(x.sig, x.coeffs * f, "complex")


def iota_inverse(z: Multivector) -> Multivector:
    """Preimage under iota (coefficients stay complex; real iff ``z`` is in the image)."""
    if z.space != "complex":
        raise AlgebraError("iota_inverse acts on complex multivectors")
    return Multivector(z.sig, z.coeffs.astype(complex) / iota_factors(z.sig), "real-pq")


def is_real_pq(z: Multivector, tol: float = 1e-12) -> bool:
    """True iff ``z`` lies in iota(A_{p,q}) up to ``tol`` (relative to its norm)."""
    pre = iota_inverse(z).coeffs
    scale = max(1.0, float(np.max(np.abs(pre)))) if pre.size else 1.0
    return bool(np.all(np.abs(pre.imag) <= tol * scale))
