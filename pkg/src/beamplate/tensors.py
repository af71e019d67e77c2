"""Constant fourth-order elasticity tensors and pointwise strain algebra.

Symmetric 3x3 strains are passed around as plain ``(3, 3)`` numpy arrays.
For assembly the package uses the engineering Voigt convention with
component order ``(11, 22, 33, 12, 13, 23)``: strain vectors carry doubled
shear entries ``(e11, e22, e33, 2*e12, 2*e13, 2*e23)`` so that
``[A e, f] = e_voigt . D f_voigt`` with the 6x6 matrix built by
:meth:`Tensor4.voigt6`.
"""

from __future__ import annotations

import numpy as np

#: (row, col) index pairs backing the Voigt component order.
VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))

_SQRT2 = np.sqrt(2.0)


def sym3(e11=0.0, e22=0.0, e33=0.0, e12=0.0, e13=0.0, e23=0.0):
    """Symmetric 3x3 matrix from its six independent entries."""
    return np.array(
        [[e11, e12, e13], [e12, e22, e23], [e13, e23, e33]], dtype=float
    )


def inner(eta, xi):
    """Frobenius scalar product of two 3x3 matrices."""
    return float(np.sum(np.asarray(eta) * np.asarray(xi)))


class Tensor4:
    """Constant elasticity tensor A_ijkl with minor symmetries.

    Stores all 81 coefficients; the 6x6 views are derived.  Instances are
    immutable after construction and safe to share across workers.
    """

    def __init__(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (3, 3, 3, 3):
            raise ValueError("expected a (3,3,3,3) coefficient array")
        if not np.allclose(coeffs, coeffs.transpose(1, 0, 2, 3), atol=1e-14):
            raise ValueError("minor symmetry A_ijkl = A_jikl violated")
        if not np.allclose(coeffs, coeffs.transpose(0, 1, 3, 2), atol=1e-14):
            raise ValueError("minor symmetry A_ijkl = A_ijlk violated")
        self._c = coeffs
        self._c.setflags(write=False)

    @property
    def coeffs(self):
        return self._c

    @classmethod
    def from_voigt_upper(cls, upper):
        """Build from the 21 upper-triangle entries of the symmetric 6x6
        Voigt matrix, row-major order ``D11, D12, ..., D16, D22, ...``."""
        upper = np.asarray(upper, dtype=float)
        if upper.shape != (21,):
            raise ValueError("expected 21 Voigt upper-triangle coefficients")
        D = np.zeros((6, 6))
        idx = np.triu_indices(6)
        D[idx] = upper
        D = D + np.triu(D, 1).T
        c = np.zeros((3, 3, 3, 3))
        for I, (i, j) in enumerate(VOIGT_PAIRS):
            for J, (k, l) in enumerate(VOIGT_PAIRS):
                c[i, j, k, l] = D[I, J]
                c[j, i, k, l] = D[I, J]
                c[i, j, l, k] = D[I, J]
                c[j, i, l, k] = D[I, J]
        return cls(c)

    def apply(self, xi):
        """Contraction (A xi)_ij = sum_kl A_ijkl xi_kl."""
        return np.einsum("ijkl,kl->ij", self._c, np.asarray(xi, dtype=float))

    def voigt6(self):
        """6x6 matrix D with sigma_voigt = D e_voigt(engineering)."""
        D = np.empty((6, 6))
        for I, (i, j) in enumerate(VOIGT_PAIRS):
            for J, (k, l) in enumerate(VOIGT_PAIRS):
                D[I, J] = self._c[i, j, k, l]
        return D

    def mandel6(self):
        """Orthonormal (Mandel) 6x6 representation of xi -> A xi.

        Its eigenvalues are the eigenvalues of the quadratic form
        [A xi, xi] on symmetric matrices, so coercivity is testable by an
        eigenvalue computation on this matrix.
        """
        M = self.voigt6().copy()
        M[:3, 3:] *= _SQRT2
        M[3:, :3] *= _SQRT2
        M[3:, 3:] *= 2.0
        return M

    def coercivity_constant(self):
        """Smallest eigenvalue of the symmetrized Mandel form."""
        M = self.mandel6()
        return float(np.linalg.eigvalsh(0.5 * (M + M.T)).min())


def isotropic(lame_lambda, lame_mu):
    """Isotropic tensor A_ijkl = lam d_ij d_kl + mu (d_ik d_jl + d_il d_jk).

    Rejects parameter pairs for which the tensor is not coercive
    (requires mu > 0 and 3*lam + 2*mu > 0).
    """
    if lame_mu <= 0.0 or 3.0 * lame_lambda + 2.0 * lame_mu <= 0.0:
        raise ValueError(
            "isotropic tensor needs mu > 0 and 3*lambda + 2*mu > 0, got "
            f"lambda={lame_lambda}, mu={lame_mu}"
        )
    d = np.eye(3)
    c = lame_lambda * np.einsum("ij,kl->ijkl", d, d) + lame_mu * (
        np.einsum("ik,jl->ijkl", d, d) + np.einsum("il,jk->ijkl", d, d)
    )
    return Tensor4(c)


def apply(A, xi):
    """Functional form of :meth:`Tensor4.apply`."""
    return A.apply(xi)


def rescale_strain_beam(e, r):
    """Block scaling of a beam strain: in-plane block /r^2, mixed /r, 33 kept."""
    if r <= 0.0:
        raise ValueError(f"beam radius parameter must be positive, got {r}")
    e = np.asarray(e, dtype=float)
    out = e.copy()
    out[:2, :2] /= r * r
    out[:2, 2] /= r
    out[2, :2] /= r
    return out


def rescale_strain_plate(e, eps):
    """Block scaling of a plate strain: in-plane kept, mixed /eps, 33 /eps^2."""
    if eps <= 0.0:
        raise ValueError(f"plate thickness parameter must be positive, got {eps}")
    e = np.asarray(e, dtype=float)
    out = e.copy()
    out[:2, 2] /= eps
    out[2, :2] /= eps
    out[2, 2] /= eps * eps
    return out


def beam_scale_voigt(r):
    """Diagonal Voigt factors of :func:`rescale_strain_beam`."""
    if r <= 0.0:
        raise ValueError(f"beam radius parameter must be positive, got {r}")
    return np.array([1 / r**2, 1 / r**2, 1.0, 1 / r**2, 1 / r, 1 / r])


def plate_scale_voigt(eps):
    """Diagonal Voigt factors of :func:`rescale_strain_plate`."""
    if eps <= 0.0:
        raise ValueError(f"plate thickness parameter must be positive, got {eps}")
    return np.array([1.0, 1.0, 1 / eps**2, 1.0, 1 / eps, 1 / eps])


def limit_strain_beam(e_w, e_v_13, e_v_23, e_u_33):
    """Composite beam limit strain: in-plane block from the in-plane
    corrector, mixed entries from the rotation/warping corrector, 33 from
    the one-dimensional displacement."""
    e_w = np.asarray(e_w, dtype=float)
    out = np.zeros((3, 3))
    out[:2, :2] = e_w[:2, :2]
    out[0, 2] = out[2, 0] = e_v_13
    out[1, 2] = out[2, 1] = e_v_23
    out[2, 2] = e_u_33
    return out


def limit_strain_plate(e_u, e_v_13, e_v_23, e_w_33):
    """Composite plate limit strain: in-plane block from the in-plane
    displacement, mixed entries from the shear corrector, 33 from the
    transverse-compression corrector."""
    e_u = np.asarray(e_u, dtype=float)
    out = np.zeros((3, 3))
    out[:2, :2] = e_u[:2, :2]
    out[0, 2] = out[2, 0] = e_v_13
    out[1, 2] = out[2, 1] = e_v_23
    out[2, 2] = e_w_33
    return out
