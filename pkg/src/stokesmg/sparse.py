"""Sparse and dense linear-algebra plumbing.

Matrices are scipy CSR throughout; this module pins down the small set of
operations the solver relies on (matvec, transpose, triple products, a
pivoted dense factorization for the coarsest grid) with explicit contract
checks, plus COO-triplet assembly and a MatrixMarket dump for
cross-checking against external tools.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg
import scipy.sparse as sp


class SingularMatrixError(ValueError):
    """Dense factorization hit a (numerically) singular matrix."""


def from_triplets(nrows, ncols, rows, cols, values):
    """CSR matrix from coordinate triplets; duplicate entries are summed."""
    mat = sp.coo_matrix(
        (np.asarray(values, dtype=float), (rows, cols)), shape=(nrows, ncols)
    )
    out = mat.tocsr()
    out.sum_duplicates()
    return out


def matvec(matrix, x):
    """y = M x with an explicit dimension check."""
    x = np.asarray(x)
    if matrix.shape[1] != x.shape[0]:
        raise ValueError(
            f"matvec dimension mismatch: matrix is {matrix.shape}, "
            f"vector has length {x.shape[0]}"
        )
    return matrix @ x


def transpose(matrix):
    """CSR transpose."""
    return matrix.T.tocsr()


def triple_product(R, A, P):
    """R @ A @ P as CSR, used for Galerkin-identity checks."""
    if R.shape[1] != A.shape[0] or A.shape[1] != P.shape[0]:
        raise ValueError(
            f"triple_product dimension mismatch: {R.shape} x {A.shape} x {P.shape}"
        )
    out = (R @ A @ P).tocsr()
    out.sum_duplicates()
    return out


class DenseFactorization:
    """Pivoted LU of a square dense matrix with two-sided equilibration.

    Row/column max-norm scaling keeps the factorization meaningful for the
    badly scaled saddle matrices that appear at large reaction
    coefficients; singularity is detected through a reciprocal condition
    estimate of the equilibrated matrix, which stays many orders of
    magnitude above the threshold for every nonsingular system this
    package produces.
    """

    _RCOND_FLOOR = 1e-14

    def __init__(self, matrix):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {matrix.shape}")
        self.shape = matrix.shape
        row_scale = np.max(np.abs(matrix), axis=1)
        if matrix.size == 0 or np.any(row_scale == 0.0):
            raise SingularMatrixError(
                f"matrix of shape {matrix.shape} has an all-zero row"
            )
        scaled = matrix / row_scale[:, None]
        col_scale = np.max(np.abs(scaled), axis=0)
        scaled = scaled / col_scale[None, :]
        self._row_scale = row_scale
        self._col_scale = col_scale
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            self._lu, self._piv = scipy.linalg.lu_factor(
                scaled, check_finite=False
            )
        gecon = scipy.linalg.get_lapack_funcs("gecon", (self._lu,))
        rcond, _ = gecon(self._lu, np.linalg.norm(scaled, 1))
        if rcond < self._RCOND_FLOOR:
            raise SingularMatrixError(
                f"matrix of shape {matrix.shape} is singular to working "
                f"precision (equilibrated rcond {rcond:.1e})"
            )

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.shape[0]:
            raise ValueError(
                f"solve dimension mismatch: factor is {self.shape}, "
                f"rhs has length {b.shape[0]}"
            )
        y = scipy.linalg.lu_solve(
            (self._lu, self._piv), b / self._row_scale, check_finite=False
        )
        return y / self._col_scale


def dense_solve(matrix, b):
    """Solve M x = b by pivoted LU; raises SingularMatrixError if singular."""
    return DenseFactorization(matrix).solve(b)


def dump_matrix_market(matrix, path):
    """Write a matrix in MatrixMarket coordinate format."""
    from scipy.io import mmwrite

    mmwrite(path, sp.coo_matrix(matrix))
