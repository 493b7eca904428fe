"""Clifford analysis in indefinite signature (p, q) with numerical checks of
the Cauchy integral formulas."""
from .algebra import (
    AlgebraError, Multivector, NullConeError, Paravector, Signature, blade_product,
    conjugate, embed_iota, invert, iota_inverse, mv_mul, n_form, norm_sq,
)
from .kernels import (
    BranchCutError, OriginError, classify, dirac_of_g_eps, g_eps_kernel, g_kernel, h_kernel,
)

__version__ = "0.1.0"
