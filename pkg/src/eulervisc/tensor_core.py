"""Small-tensor algebra on batched 3x3 and 3x3x3 arrays.

All routines accept arrays whose trailing axes carry the tensor indices
(shape ``(..., 3, 3)`` for second-order, ``(..., 3, 3, 3)`` for
third-order) and broadcast over any leading axes.  Everything is pure
and allocation-only, so calls are safe from any number of workers.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "SingularMatrixError",
    "identity",
    "det",
    "cof",
    "inv",
    "tr",
    "dev",
    "frob",
    "ddot",
    "sym",
    "transpose",
]

# Relative determinant threshold below which inversion is refused.
_SINGULAR_RTOL = 1e-14


class SingularMatrixError(ValueError):
    """Raised when a matrix is numerically singular for inversion."""


def identity(shape=(), dtype=float):
    """Batched identity matrices of shape ``shape + (3, 3)``."""
    out = np.zeros(tuple(shape) + (3, 3), dtype=dtype)
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = 1.0
    out[..., 2, 2] = 1.0
    return out


def det(a):
    """Determinant of batched 3x3 matrices (explicit cofactor expansion)."""
    a = np.asarray(a)
    return (
        a[..., 0, 0] * (a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 1])
        - a[..., 0, 1] * (a[..., 1, 0] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 0])
        + a[..., 0, 2] * (a[..., 1, 0] * a[..., 2, 1] - a[..., 1, 1] * a[..., 2, 0])
    )


def cof(a):
    """Cofactor matrix, cof(A)_ij = d det(A) / d A_ij.

    Satisfies A cof(A)^T = det(A) I and cof(A) = det(A) A^{-T} for
    invertible A, but is a polynomial in the entries and therefore
    total (defined for singular A as well).
    """
    a = np.asarray(a)
    c = np.empty_like(a)
    for i in range(3):
        i1, i2 = (i + 1) % 3, (i + 2) % 3
        for j in range(3):
            j1, j2 = (j + 1) % 3, (j + 2) % 3
            c[..., i, j] = a[..., i1, j1] * a[..., i2, j2] - a[..., i1, j2] * a[..., i2, j1]
    return c


def inv(a):
    """Inverse of batched 3x3 matrices via the cofactor formula.

    Raises
    ------
    SingularMatrixError
        If any |det A| <= 1e-14 * |A|^3 (scale-relative threshold).
    """
    a = np.asarray(a, dtype=float)
    d = det(a)
    scale = frob(a) ** 3
    if np.any(np.abs(d) <= _SINGULAR_RTOL * scale):
        raise SingularMatrixError(
            "matrix numerically singular: min |det|/|A|^3 = %.3e"
            % float(np.min(np.abs(d) / np.maximum(scale, np.finfo(float).tiny)))
        )
    return np.swapaxes(cof(a), -1, -2) / d[..., None, None]


def tr(a):
    """Trace of batched 3x3 matrices."""
    a = np.asarray(a)
    return a[..., 0, 0] + a[..., 1, 1] + a[..., 2, 2]


def dev(a):
    """Deviatoric (trace-free) part, A - tr(A) I / 3."""
    a = np.asarray(a, dtype=float)
    out = a.copy()
    third = tr(a) / 3.0
    out[..., 0, 0] -= third
    out[..., 1, 1] -= third
    out[..., 2, 2] -= third
    return out


def frob(a, rank=2):
    """Frobenius norm over the trailing `rank` tensor axes."""
    a = np.asarray(a)
    axes = tuple(range(-rank, 0))
    return np.sqrt(np.sum(a * a, axis=axes))


def ddot(a, b, rank=2):
    """Full contraction over the trailing `rank` tensor axes."""
    a = np.asarray(a)
    b = np.asarray(b)
    axes = tuple(range(-rank, 0))
    return np.sum(a * b, axis=axes)


def sym(a):
    """Symmetric part (A + A^T)/2."""
    a = np.asarray(a)
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def transpose(a):
    """Transpose of the trailing matrix axes."""
    return np.swapaxes(np.asarray(a), -1, -2)
