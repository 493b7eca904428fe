"""Multivector-valued fields and the Dirac / wave operators acting on them.

Polynomial fields are differentiated exactly (term by term); black-box fields
are differentiated with 4th-order central differences.  Coordinates are
``v_0..v_n``: ``x_0..x_p, xx_{p+1}..xx_{p+q}`` on the real space and
``z_0..z_n`` on the complex one.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Iterable, Literal, Mapping, Optional

import numpy as np

from .algebra import (
    AlgebraError, Multivector, Paravector, Signature, Space, as_signature,
    blade_product, check_space, iota_factors,
)

Which = Literal["nabla", "nabla_plus"]
Side = Literal["left", "right"]


class FieldError(ValueError):
    """Bad field/operator input: domain mismatch, non-positive step, ..."""


def _exact_coeff(c):
    """Convert a number to a Gaussian rational (binary floats are exact rationals)."""
    from fractions import Fraction
    from sympy.polys.domains import QQ, QQ_I

    if isinstance(c, type(QQ_I.one)):
        return c
    if isinstance(c, Fraction):
        return QQ_I(QQ(c.numerator, c.denominator), 0)
    if isinstance(c, int):
        return QQ_I(c, 0)
    c = complex(c)
    re, im = Fraction(c.real), Fraction(c.imag)
    return QQ_I(QQ(re.numerator, re.denominator), QQ(im.numerator, im.denominator))


def _to_complex(c) -> complex:
    if hasattr(c, "x") and hasattr(c, "y"):
        return complex(float(c.x), float(c.y))
    return complex(c)


def _is_zero(c) -> bool:
    return not c


class PolynomialField:
    """Polynomial multivector field ``sum c * v**alpha * e_B``.

    ``terms`` maps ``(blade_mask, exponents)`` to a coefficient, with
    ``exponents`` a tuple of length ``n + 1``.  With ``exact=True`` the
    coefficients are Gaussian rationals and all operator identities hold
    exactly.
    """

    def __init__(self, sig, domain: Space, terms: Mapping | None = None, exact: bool = False):
        self.sig = as_signature(sig)
        self.domain = check_space(domain)
        self.exact = exact
        self.terms: dict[tuple[int, tuple[int, ...]], object] = {}
        for (mask, exps), c in (terms or {}).items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != self.sig.n + 1 or min(exps, default=0) < 0:
                raise FieldError(f"bad exponent tuple {exps} for n = {self.sig.n}")
            if not 0 <= mask < self.sig.dim:
                raise FieldError(f"bad blade mask {mask}")
            self._accumulate(mask, exps, _exact_coeff(c) if exact else complex(c))

    def _accumulate(self, mask, exps, c):
        key = (mask, exps)
        v = self.terms.get(key, 0) + c
        if _is_zero(v):
            self.terms.pop(key, None)
        else:
            self.terms[key] = v

    def _empty(self) -> "PolynomialField":
        return PolynomialField(self.sig, self.domain, exact=self.exact)

    # -- constructors -----------------------------------------------------
    @classmethod
    def constant(cls, mv: Multivector | complex, sig, domain: Space, exact=False):
        sig = as_signature(sig)
        zero = (0,) * (sig.n + 1)
        if isinstance(mv, Multivector):
            return cls(sig, domain, {(m, zero): c for m, c in enumerate(mv.coeffs) if c != 0}, exact)
        return cls(sig, domain, {(0, zero): mv}, exact)

    @classmethod
    def coordinate(cls, j: int, sig, domain: Space, mask: int = 0, coeff=1, exact=False):
        sig = as_signature(sig)
        e = [0] * (sig.n + 1)
        e[j] = 1
        return cls(sig, domain, {(mask, tuple(e)): coeff}, exact)

    @classmethod
    def random(cls, sig, domain: Space, degree: int, rng: np.random.Generator,
               n_terms: int = 12, exact: bool = False, complex_coeffs: bool = True):
        """Random field with small Gaussian-integer coefficients."""
        sig = as_signature(sig)
        terms = {}
        for _ in range(n_terms):
            total = int(rng.integers(0, degree + 1))
            exps = [0] * (sig.n + 1)
            for _ in range(total):
                exps[int(rng.integers(0, sig.n + 1))] += 1
            mask = int(rng.integers(0, sig.dim))
            re = int(rng.integers(-5, 6))
            im = int(rng.integers(-5, 6)) if complex_coeffs else 0
            terms[(mask, tuple(exps))] = terms.get((mask, tuple(exps)), 0) + complex(re, im)
        return cls(sig, domain, terms, exact)

    # -- algebra ----------------------------------------------------------
    def _check(self, other: "PolynomialField"):
        if other.sig != self.sig or other.domain != self.domain:
            raise FieldError("field signature/domain mismatch")

    def __add__(self, other: "PolynomialField") -> "PolynomialField":
        self._check(other)
        out = self.copy()
        for (m, e), c in other.terms.items():
            out._accumulate(m, e, c)
        return out

    def __neg__(self):
        return self.scale(-1)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, s) -> "PolynomialField":
        out = self._empty()
        if self.exact and not isinstance(s, int):
            s = _exact_coeff(s)
        for k, c in self.terms.items():
            out._accumulate(*k, c * s)
        return out

    __mul__ = scale
    __rmul__ = scale

    def copy(self) -> "PolynomialField":
        out = self._empty()
        out.terms = dict(self.terms)
        return out

    def partial(self, j: int) -> "PolynomialField":
        out = self._empty()
        for (m, e), c in self.terms.items():
            if e[j]:
                e2 = list(e)
                e2[j] -= 1
                out._accumulate(m, tuple(e2), c * e[j])
        return out

    def blade_multiply(self, mask: int, side: Side, coeff: int = 1) -> "PolynomialField":
        """``coeff * e_mask * f`` (left) or ``coeff * f * e_mask`` (right)."""
        out = self._empty()
        for (m, e), c in self.terms.items():
            if side == "left":
                s, r = blade_product(mask, m, self.sig, self.domain)
            elif side == "right":
                s, r = blade_product(m, mask, self.sig, self.domain)
            else:
                raise FieldError(f"unknown side {side!r}")
            out._accumulate(r, e, c * (s * coeff))
        return out

    def degree(self) -> int:
        return max((sum(e) for _, e in self.terms), default=0)

    def max_abs(self) -> float:
        return max((abs(_to_complex(c)) for c in self.terms.values()), default=0.0)

    def is_zero(self) -> bool:
        return not self.terms

    # -- evaluation -------------------------------------------------------
    def evaluate(self, point: Paravector) -> Multivector:
        if point.kind != self.domain:
            raise FieldError(f"point kind {point.kind} does not match field domain {self.domain}")
        return Multivector(self.sig, self.evaluate_batch(point.coords[None, :])[0], self.domain)

    __call__ = evaluate

    def evaluate_batch(self, coords: np.ndarray) -> np.ndarray:
        coords = np.asarray(coords, dtype=complex)
        out = np.zeros(coords.shape[:-1] + (self.sig.dim,), dtype=complex)
        for (m, e), c in self.terms.items():
            mono = np.ones(coords.shape[:-1], dtype=complex)
            for j, k in enumerate(e):
                if k:
                    mono = mono * coords[..., j] ** k
            out[..., m] += _to_complex(c) * mono
        return out

    def complexify(self) -> "PolynomialField":
        """Holomorphic extension of a real-pq field to the complex space.

        Substitutes ``xx_j = -i z_j`` (so that ``z = iota(X)`` reproduces the
        field) and maps blade coefficients through iota.
        """
        if self.domain != "real-pq":
            raise FieldError("complexify expects a real-pq field")
        f = iota_factors(self.sig)
        p = self.sig.p
        out = PolynomialField(self.sig, "complex", exact=self.exact)
        for (m, e), c in self.terms.items():
            k = sum(e[p + 1:])
            factor = f[m] * (-1j) ** k
            factor = complex(round(factor.real), round(factor.imag))
            out._accumulate(m, e, c * (_exact_coeff(factor) if self.exact else factor))
        return out

    def __repr__(self):
        return f"PolynomialField[{self.domain} {self.sig}]({len(self.terms)} terms, degree {self.degree()})"


@dataclass
class BlackBoxField:
    """A field known only through an evaluator ``Paravector -> Multivector``.

    ``batch`` optionally evaluates many points at once
    (``(N, n+1) coords -> (N, 2**n)`` coefficients); quadrature uses it.
    """

    sig: Signature
    domain: Space
    evaluator: Callable[[Paravector], Multivector]
    smooth: bool = True
    batch: Optional[Callable[[np.ndarray], np.ndarray]] = dc_field(default=None, repr=False)

    def __post_init__(self):
        self.sig = as_signature(self.sig)
        self.domain = check_space(self.domain)

    def evaluate(self, point: Paravector) -> Multivector:
        if point.kind != self.domain:
            raise FieldError(f"point kind {point.kind} does not match field domain {self.domain}")
        return self.evaluator(point)

    __call__ = evaluate

    def evaluate_batch(self, coords: np.ndarray) -> np.ndarray:
        coords = np.asarray(coords, dtype=complex)
        if self.batch is not None:
            return np.asarray(self.batch(coords))
        flat = coords.reshape(-1, coords.shape[-1])
        vals = np.array([self.evaluator(Paravector(self.sig, c, self.domain)).coeffs for c in flat])
        return vals.reshape(coords.shape[:-1] + (self.sig.dim,))


Field = PolynomialField | BlackBoxField


# ---------------------------------------------------------------------------
# operators

def operator_terms(sig: Signature, which: Which, space: Space) -> list[tuple[int, int]]:
    """``(blade_mask, sign)`` per coordinate for the operator ``which``."""
    sig = as_signature(sig)
    out = [(0, 1)]
    for j in range(1, sig.n + 1):
        tilde = space == "real-pq" and j > sig.p
        if which == "nabla_plus":
            s = -1 if tilde else 1
        elif which == "nabla":
            s = 1 if tilde else -1
        else:
            raise FieldError(f"unknown operator {which!r}")
        out.append((1 << (j - 1), s))
    return out


def wave_signs(sig: Signature, space: Space) -> np.ndarray:
    return as_signature(sig).coordinate_signs(space)


def dirac_field(f: PolynomialField, which: Which = "nabla_plus", side: Side = "left",
                space: Optional[Space] = None) -> PolynomialField:
    """Exact Dirac operator on a polynomial field, returning a polynomial field."""
    space = space or f.domain
    if space != f.domain:
        raise FieldError(f"field domain {f.domain} does not match space {space}")
    out = f._empty()
    for j, (mask, s) in enumerate(operator_terms(f.sig, which, space)):
        out = out + f.partial(j).blade_multiply(mask, side, s)
    return out


def wave_field(f: PolynomialField, space: Optional[Space] = None) -> PolynomialField:
    space = space or f.domain
    if space != f.domain:
        raise FieldError(f"field domain {f.domain} does not match space {space}")
    out = f._empty()
    for j, s in enumerate(wave_signs(f.sig, space)):
        out = out + f.partial(j).partial(j).scale(int(s))
    return out


def default_step(point: Paravector) -> float:
    return 1e-4 * max(1.0, float(np.linalg.norm(point.coords)))


def _fd_partials(f: BlackBoxField, point: Paravector, h: float, order: int) -> np.ndarray:
    """4th-order central differences; returns ``(n+1, 2**n)`` partials."""
    if not h > 0:
        raise FieldError(f"finite-difference step must be positive, got {h}")
    n1 = f.sig.n + 1
    offsets = np.array([-2, -1, 1, 2]) if order == 1 else np.array([-2, -1, 0, 1, 2])
    stencil = np.repeat(point.coords[None, None, :], n1 * len(offsets), axis=0).reshape(n1, len(offsets), n1)
    for j in range(n1):
        stencil[j, :, j] += offsets * h
    vals = f.evaluate_batch(stencil.reshape(-1, n1)).reshape(n1, len(offsets), f.sig.dim)
    if order == 1:
        w = np.array([1.0, -8.0, 8.0, -1.0]) / (12 * h)
    else:
        w = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12 * h * h)
    return np.einsum("k,jkd->jd", w, vals)


def _check_point(f, point: Paravector, space: Space):
    space = check_space(space)
    if f.domain != space:
        raise FieldError(f"field domain {f.domain} does not match space {space}")
    if point.kind != space:
        raise FieldError(f"point kind {point.kind} does not match space {space}")
    if point.sig != f.sig:
        raise FieldError("point/field signature mismatch")


def dirac(f: Field, point: Paravector, which: Which = "nabla_plus", side: Side = "left",
          space: Optional[Space] = None, h: Optional[float] = None) -> Multivector:
    """Apply ``nabla`` or ``nabla_plus`` from the given side and evaluate at ``point``."""
    space = space or f.domain
    _check_point(f, point, space)
    if side not in ("left", "right"):
        raise FieldError(f"unknown side {side!r}")
    if isinstance(f, PolynomialField):
        return dirac_field(f, which, side, space).evaluate(point)
    h = default_step(point) if h is None else h
    partials = _fd_partials(f, point, h, 1)
    acc = Multivector.zero(f.sig, space)
    for j, (mask, s) in enumerate(operator_terms(f.sig, which, space)):
        e = Multivector.blade(mask, f.sig, space, float(s))
        d = Multivector(f.sig, partials[j], space)
        acc = acc + (e * d if side == "left" else d * e)
    return acc


def wave_op(f: Field, point: Paravector, space: Optional[Space] = None,
            h: Optional[float] = None) -> Multivector:
    """Wave operator (real) or complex Laplacian applied at ``point``."""
    space = space or f.domain
    _check_point(f, point, space)
    if isinstance(f, PolynomialField):
        return wave_field(f, space).evaluate(point)
    h = default_step(point) if h is None else h
    second = _fd_partials(f, point, h, 2)
    return Multivector(f.sig, np.einsum("j,jd->d", wave_signs(f.sig, space), second), space)


def factorization_residual(f: PolynomialField, space: Optional[Space] = None) -> float:
    """Largest coefficient of ``nabla nabla+ f - box f`` and its variants.

    Both orders (``nabla nabla+`` and ``nabla+ nabla``) and both sides are
    checked.  Exact fields give an exact 0.
    """
    space = space or f.domain
    box = wave_field(f, space)
    worst = 0.0
    for side in ("left", "right"):
        for a, b in (("nabla", "nabla_plus"), ("nabla_plus", "nabla")):
            twice = dirac_field(dirac_field(f, b, side, space), a, side, space)
            worst = max(worst, (twice - box).max_abs())
    return worst


def monogenicity_residual(f: Field, points: Iterable[Paravector], side: Side = "left",
                          space: Optional[Space] = None, h: Optional[float] = None) -> float:
    space = space or f.domain
    return max((dirac(f, pt, "nabla_plus", side, space, h).norm() for pt in points), default=0.0)


def fueter_basis(sig, space: Space, exact: bool = False) -> list[PolynomialField]:
    """Degree-one fields annihilated by ``nabla_plus`` from both sides.

    Complex space: ``z_k e_0 - z_0 e_k``.  Real space: ``x_k e_0 - x_0 e_k``
    for ordinary ``k`` and ``i (xx_k e_0 + x_0 ee_k)`` for tilde ``k``; the
    factor ``i`` makes the complex list restrict to the real list under iota.
    """
    sig = as_signature(sig)
    space = check_space(space)
    out = []
    for k in range(1, sig.n + 1):
        mask = 1 << (k - 1)
        if space == "real-pq" and k > sig.p:
            f = (PolynomialField.coordinate(k, sig, space, 0, 1j, exact)
                 + PolynomialField.coordinate(0, sig, space, mask, 1j, exact))
        else:
            f = (PolynomialField.coordinate(k, sig, space, 0, 1, exact)
                 + PolynomialField.coordinate(0, sig, space, mask, -1, exact))
        out.append(f)
    return out
