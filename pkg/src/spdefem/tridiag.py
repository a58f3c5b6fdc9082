"""Symmetric tridiagonal matrices and their Cholesky factors.

Only the diagonal and the first off-diagonal are stored.  Batched
right-hand sides use the trailing axis as the matrix dimension, i.e. an
array of shape ``(..., size)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import NotNegativeDefiniteError, ValidationError

DENSE_LIMIT = 256


@dataclass(frozen=True, eq=False)
class TridiagonalMatrix:
    diag: np.ndarray
    off: np.ndarray

    def __post_init__(self):
        diag = np.array(self.diag, dtype=float)
        off = np.array(self.off, dtype=float)
        if diag.ndim != 1 or off.ndim != 1 or len(off) != max(len(diag) - 1, 0):
            raise ValidationError("need len(off) == len(diag) - 1")
        diag.flags.writeable = False
        off.flags.writeable = False
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "off", off)

    @property
    def size(self):
        return len(self.diag)

    def __neg__(self):
        return TridiagonalMatrix(-self.diag, -self.off)

    def __add__(self, other):
        return TridiagonalMatrix(self.diag + other.diag, self.off + other.off)

    def __sub__(self, other):
        return TridiagonalMatrix(self.diag - other.diag, self.off - other.off)

    def scaled(self, factor):
        return TridiagonalMatrix(factor * self.diag, factor * self.off)

    def shifted(self, value):
        """self + value * Id"""
        return TridiagonalMatrix(self.diag + value, self.off)

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        out = self.diag * x
        out[..., :-1] += self.off * x[..., 1:]
        out[..., 1:] += self.off * x[..., :-1]
        return out

    def matvec_columns(self, x):
        """A x for x of shape (size, batch)."""
        out = self.diag[:, None] * x
        out[:-1] += self.off[:, None] * x[1:]
        out[1:] += self.off[:, None] * x[:-1]
        return out

    def quadratic_form(self, x):
        x = np.asarray(x, dtype=float)
        return np.sum(x * self.matvec(x), axis=-1)

    def to_dense(self):
        if self.size > DENSE_LIMIT:
            raise ValidationError(f"dense form refused above size {DENSE_LIMIT}")
        return np.diag(self.diag) + np.diag(self.off, 1) + np.diag(self.off, -1)

    def eigvalsh(self):
        return linalg.eigvalsh_tridiagonal(self.diag, self.off)

    def cholesky(self):
        return TridiagonalCholesky.factor(self)


@dataclass(frozen=True, eq=False)
class TridiagonalCholesky:
    """A = R^T R with R upper bidiagonal (diagonal ``r``, superdiagonal ``s``)."""

    r: np.ndarray
    s: np.ndarray

    @classmethod
    def factor(cls, a: TridiagonalMatrix):
        d, e = a.diag, a.off
        r = np.empty_like(d)
        s = np.empty_like(e)
        prev = 0.0
        for i in range(len(d)):
            pivot = d[i] - (s[i - 1] ** 2 if i > 0 else prev)
            if not pivot > 0:
                raise NotNegativeDefiniteError(
                    f"non-positive pivot {pivot:.3e} at row {i} of a size-{len(d)} matrix")
            r[i] = np.sqrt(pivot)
            if i < len(e):
                s[i] = e[i] / r[i]
        r.flags.writeable = False
        s.flags.writeable = False
        return cls(r, s)

    @property
    def size(self):
        return len(self.r)

    def _banded_upper(self):
        ab = np.zeros((2, self.size))
        ab[0, 1:] = self.s
        ab[1] = self.r
        return ab

    def _columns(self, b):
        b = np.asarray(b, dtype=float)
        if b.shape[-1] != self.size:
            raise ValidationError(f"right-hand side has size {b.shape[-1]}, expected {self.size}")
        return b.reshape(-1, self.size).T, b.shape

    def solve(self, b):
        """Solve (R^T R) x = b."""
        cols, shape = self._columns(b)
        x = linalg.cho_solve_banded((self._banded_upper(), False), cols, check_finite=False)
        return x.T.reshape(shape)

    def solve_upper(self, b):
        """Solve R x = b."""
        cols, shape = self._columns(b)
        x = linalg.solve_banded((0, 1), self._banded_upper(), cols, check_finite=False)
        return x.T.reshape(shape)

    def solve_lower(self, b):
        """Solve R^T x = b."""
        cols, shape = self._columns(b)
        ab = np.zeros((2, self.size))
        ab[0] = self.r
        ab[1, :-1] = self.s
        x = linalg.solve_banded((1, 0), ab, cols, check_finite=False)
        return x.T.reshape(shape)

    # Column layout: arrays of shape (size, batch), solved by looping over
    # rows with each row operation vectorised across the batch.

    def solve_upper_columns(self, b, out=None):
        """R x = b, column layout."""
        x = np.array(b, dtype=float) if out is None else out
        if out is not None and out is not b:
            x[...] = b
        r, s = self.r, self.s
        n = len(r)
        x[n - 1] /= r[n - 1]
        for i in range(n - 2, -1, -1):
            x[i] -= s[i] * x[i + 1]
            x[i] /= r[i]
        return x

    def solve_lower_columns(self, b, out=None):
        """R^T x = b, column layout."""
        x = np.array(b, dtype=float) if out is None else out
        if out is not None and out is not b:
            x[...] = b
        r, s = self.r, self.s
        x[0] /= r[0]
        for i in range(1, len(r)):
            x[i] -= s[i - 1] * x[i - 1]
            x[i] /= r[i]
        return x

    def solve_columns(self, b, out=None):
        """(R^T R) x = b, column layout."""
        x = self.solve_lower_columns(b, out)
        return self.solve_upper_columns(x, x)

    def mul_lower_columns(self, x):
        """R^T x, column layout."""
        out = self.r[:, None] * x
        out[1:] += self.s[:, None] * x[:-1]
        return out

    def mul_upper(self, x):
        """R x"""
        x = np.asarray(x, dtype=float)
        out = self.r * x
        out[..., :-1] += self.s * x[..., 1:]
        return out

    def mul_lower(self, x):
        """R^T x"""
        x = np.asarray(x, dtype=float)
        out = self.r * x
        out[..., 1:] += self.s * x[..., :-1]
        return out

    def logdet(self):
        return 2.0 * float(np.sum(np.log(self.r)))
