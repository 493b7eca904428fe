"""Green's kernels with the right-half-plane branch of ``N**(1/2)``.

Every half-integer power goes through :func:`branched_power`; nothing here
relies on the ambient branch of ``**``.  The batched ``*_array`` functions
work on coordinate arrays of shape ``(..., n+1)`` and return coefficient
arrays of shape ``(..., 2**n)``; the scalar wrappers take and return
:class:`Paravector` / :class:`Multivector` objects.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .algebra import (
    Multivector, Paravector, Signature, Space, as_signature, check_space,
    mul_arrays, vector_masks,
)

#: tolerance (relative to ||Z||^2) for deciding that N(Z) lies on the cut
REGION_TOL = 1e-12

Region = Literal["in_C_G", "in_R_G", "excluded"]


class BranchCutError(ArithmeticError):
    """N(Z) is a non-positive real: the kernel is not defined there."""


class OriginError(ArithmeticError):
    """The regularized kernel was evaluated at X = 0."""


@dataclass(frozen=True)
class BranchedPower:
    """``base**(half_exponent / 2)`` on the sheet where ``sqrt`` has Re > 0."""

    base: complex
    half_exponent: int

    @property
    def value(self) -> complex:
        return complex(branched_power(np.asarray(self.base, dtype=complex), self.half_exponent))


def on_cut(w, scale=1.0, tol: float = REGION_TOL):
    """True where ``w`` is (numerically) a non-positive real number."""
    w = np.asarray(w, dtype=complex)
    lim = tol * np.asarray(scale)
    return (np.abs(w.imag) <= lim) & (w.real <= lim)


def branched_power(w, m: int, check: bool = True):
    """``(sqrt w)**m`` with the principal square root (Re sqrt w > 0).

    Even ``m`` reduces to an integer power of ``w`` with no square root at all.
    """
    w = np.asarray(w, dtype=complex)
    if check and np.any(on_cut(w, 1.0, 0.0)):
        raise BranchCutError("base lies on the closed negative real axis")
    k, odd = divmod(m, 2)
    out = w ** k if k >= 0 else 1.0 / w ** (-k)
    if odd:
        out = out * np.sqrt(w)
    return out


def n_form_array(coords, sig, space: Space = "real-pq"):
    return np.einsum("...j,j->...", np.asarray(coords) ** 2, as_signature(sig).coordinate_signs(space))


def norm_sq_array(coords):
    return np.sum(np.abs(np.asarray(coords)) ** 2, axis=-1)


def clifford_conj_array(coords):
    c = np.array(coords, dtype=complex)
    c[..., 1:] *= -1
    return c


def paravector_coeffs(coords, sig) -> np.ndarray:
    """Place paravector coordinates into blade-coefficient arrays."""
    sig = as_signature(sig)
    coords = np.asarray(coords)
    out = np.zeros(coords.shape[:-1] + (sig.dim,), dtype=complex)
    out[..., vector_masks(sig.n)] = coords
    return out


def classify(Z: Paravector, tol: float = REGION_TOL) -> Region:
    """Region flag: ``in_C_G`` / ``in_R_G`` / ``excluded``."""
    N = complex(n_form_array(Z.coords, Z.sig, Z.kind))
    scale = float(norm_sq_array(Z.coords))
    if scale == 0.0 or on_cut(N, scale, tol):
        return "excluded"
    if Z.kind == "real-pq":
        return "in_R_G" if N.real > tol * scale else "excluded"
    return "in_C_G"


@dataclass(frozen=True)
class KernelPoint:
    location: Paravector

    @property
    def sig(self) -> Signature:
        return self.location.sig

    @property
    def region(self) -> Region:
        return classify(self.location)


def _check_region(coords, sig, space, tol=REGION_TOL):
    N = n_form_array(coords, sig, space)
    scale = norm_sq_array(coords)
    bad = on_cut(N, scale, tol) | (scale == 0)
    if space == "real-pq":
        bad |= np.real(N) <= tol * scale
    if np.any(bad):
        raise BranchCutError("kernel evaluated where N(Z) is a non-positive real")
    return N


def h_kernel_array(coords, sig, space: Space = "real-pq"):
    sig = as_signature(sig)
    N = _check_region(coords, sig, check_space(space))
    out = branched_power(N, 1 - sig.n)
    return out.real if space == "real-pq" else out


def g_kernel_coords(coords, sig, space: Space = "real-pq"):
    """Paravector coordinates of ``G``; see :func:`g_kernel`."""
    sig = as_signature(sig)
    N = _check_region(coords, sig, check_space(space))
    scale = branched_power(N, -(sig.n + 1))
    return clifford_conj_array(coords) * scale[..., None]


def g_kernel_array(coords, sig, space: Space = "real-pq"):
    return paravector_coeffs(g_kernel_coords(coords, sig, space), sig)


def h_kernel(Z: Paravector, space: Space | None = None) -> complex:
    """``H(Z) = N(Z)**(-(n-1)/2)``; real-valued on the real space."""
    space = space or Z.kind
    val = h_kernel_array(Z.coords, Z.sig, space)
    return float(val) if space == "real-pq" else complex(val)


def g_kernel(Z: Paravector, space: Space | None = None) -> Multivector:
    """``G(Z) = Z+ / N(Z)**((n+1)/2)``."""
    space = space or Z.kind
    return Multivector(Z.sig, g_kernel_array(Z.coords, Z.sig, space), space)


# ---------------------------------------------------------------------------
# regularized kernel


def g_eps_base(coords, eps, sig):
    """``N(X) + i eps ||X||**2`` for real-pq coordinates."""
    coords = np.asarray(coords)
    return n_form_array(coords, sig) + 1j * eps * norm_sq_array(coords)


def g_eps_coords(coords, eps, sig):
    """Paravector coordinates of the regularized kernel."""
    sig = as_signature(sig)
    coords = np.asarray(coords)
    if np.any(norm_sq_array(coords) == 0):
        raise OriginError("regularized kernel is undefined at X = 0")
    base = g_eps_base(coords, eps, sig)
    scale = branched_power(base, -(sig.n + 1))
    return clifford_conj_array(coords) * scale[..., None]


def g_eps_array(coords, eps, sig):
    return paravector_coeffs(g_eps_coords(coords, eps, sig), sig)


def g_eps_kernel(X: Paravector, eps: float) -> Multivector:
    """``X+ / (N(X) + i eps ||X||^2)**((p+q+1)/2)`` on the real space."""
    if X.kind != "real-pq":
        raise ValueError("g_eps_kernel takes a real-pq paravector")
    if not np.allclose(X.coords.imag, 0):
        raise ValueError("g_eps_kernel takes a real point")
    return Multivector(X.sig, g_eps_array(X.coords.real, eps, X.sig), "real-pq")


def dirac_of_g_eps_array(coords, eps, sig, side: Literal["left", "right"] = "left"):
    """Closed form of ``nabla+`` applied to the regularized kernel."""
    sig = as_signature(sig)
    coords = np.asarray(coords, dtype=float)
    nsq = norm_sq_array(coords)
    if np.any(nsq == 0):
        raise OriginError("regularized kernel is undefined at X = 0")
    bar = np.array(coords, dtype=complex)
    bar[..., sig.p + 1:] *= -1
    plus = clifford_conj_array(coords)
    bar_mv = paravector_coeffs(bar, sig)
    plus_mv = paravector_coeffs(plus, sig)
    if side == "left":
        prod = mul_arrays(bar_mv, plus_mv, sig, "real-pq")
    elif side == "right":
        prod = mul_arrays(plus_mv, bar_mv, sig, "real-pq")
    else:
        raise ValueError(f"unknown side {side!r}")
    num = -prod
    num[..., 0] += nsq
    base = g_eps_base(coords, eps, sig)
    factor = 1j * eps * (sig.n + 1) * branched_power(base, -(sig.n + 3))
    return num * factor[..., None]


def dirac_of_g_eps(X: Paravector, eps: float, side: Literal["left", "right"] = "left") -> Multivector:
    return Multivector(X.sig, dirac_of_g_eps_array(X.coords.real, eps, X.sig, side), "real-pq")
