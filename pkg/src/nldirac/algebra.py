"""Exact 4x4 Dirac/Pauli matrix algebra and spinor pairings.

All matrices are hard-coded in the standard (Dirac) representation with
entries in {0, +-1, +-i}, so every algebraic identity below holds exactly
in floating point.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SIGMA1 = np.array([[0, 1], [1, 0]], dtype=complex)
# note the sign convention: upper-right entry +i, lower-left -i
SIGMA2 = np.array([[0, 1j], [-1j, 0]], dtype=complex)
SIGMA3 = np.array([[1, 0], [0, -1]], dtype=complex)

_I2 = np.eye(2, dtype=complex)
_Z2 = np.zeros((2, 2), dtype=complex)

BETA = np.block([[_I2, _Z2], [_Z2, -_I2]])
ALPHA = np.stack([
    np.block([[_Z2, s], [s, _Z2]]) for s in (SIGMA1, SIGMA2, SIGMA3)
])

for _m in (SIGMA1, SIGMA2, SIGMA3, BETA, ALPHA):
    _m.setflags(write=False)


@dataclass(frozen=True)
class DiracMatrices:
    """The alpha_i, beta and Pauli matrices in the fixed representation."""

    alpha: np.ndarray = field(default_factory=lambda: ALPHA)
    beta: np.ndarray = field(default_factory=lambda: BETA)
    sigma: np.ndarray = field(
        default_factory=lambda: np.stack([SIGMA1, SIGMA2, SIGMA3]))


def make_dirac_matrices() -> DiracMatrices:
    return DiracMatrices()


def dirac_conjugate(u: np.ndarray) -> np.ndarray:
    """beta applied to the componentwise complex conjugate of u.

    Works on a single 4-spinor or on any array whose last axis has length 4.
    """
    return np.conj(u) @ BETA.T


def spinor_dot(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinear C^4 dot product u.v (no conjugation), broadcast over leading axes."""
    return np.sum(u * v, axis=-1)


def scalar_density(u: np.ndarray) -> np.ndarray:
    """The real Lorentz scalar u.(beta u^*), pointwise.

    This is the argument of the nonlinearity; it is real for every spinor.
    """
    return np.real(spinor_dot(u, dirac_conjugate(u)))
