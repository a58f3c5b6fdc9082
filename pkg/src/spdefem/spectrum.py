"""Boundary conditions for the operator d^2/dx^2 on [0, 1] and its sign.

The operator acts on functions with

    alpha0 * u(0) - beta0 * u'(0) = 0,    alpha1 * u(1) + beta1 * u'(1) = 0.

A real lambda >= 0 is an eigenvalue exactly when the determinant

    f(lambda) = a0*a1 + (a0*b1 + a1*b0) * sqrt(lambda) * coth(sqrt(lambda))
                + b0*b1*lambda

vanishes, so the operator is negative definite iff f has no root on
[0, inf).  ``is_negative_definite`` decides this in closed form and
``scan_nonnegative_spectrum`` cross-checks it numerically.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import optimize

from .errors import ValidationError

__all__ = [
    "BoundaryCase",
    "BoundaryConditions",
    "SpectrumReport",
    "eigen_determinant",
    "is_negative_definite",
    "scan_nonnegative_spectrum",
]


class BoundaryCase(enum.Enum):
    ROBIN_ROBIN = "robin-robin"
    DIRICHLET_LEFT = "dirichlet-left"
    DIRICHLET_RIGHT = "dirichlet-right"
    DIRICHLET_DIRICHLET = "dirichlet-dirichlet"


def _canonical_side(alpha, beta):
    if alpha == 0 and beta == 0:
        raise ValidationError("boundary coefficients (alpha, beta) must not both vanish")
    if beta < 0 or (beta == 0 and alpha < 0):
        return -alpha, -beta
    return alpha, beta


@dataclass(frozen=True)
class BoundaryConditions:
    """Coefficients (alpha0, beta0, alpha1, beta1), stored in canonical form.

    Each side is multiplied by -1 if needed so that beta >= 0 and alpha >= 0
    whenever beta == 0.  This does not change the operator.
    """

    alpha0: float
    beta0: float
    alpha1: float
    beta1: float

    def __post_init__(self):
        values = [float(v) for v in (self.alpha0, self.beta0, self.alpha1, self.beta1)]
        if not all(np.isfinite(values)):
            raise ValidationError(f"boundary coefficients must be finite, got {values}")
        a0, b0 = _canonical_side(values[0], values[1])
        a1, b1 = _canonical_side(values[2], values[3])
        # 0.0 * -1 gives -0.0; normalise so equal conditions compare equal
        object.__setattr__(self, "alpha0", a0 + 0.0)
        object.__setattr__(self, "beta0", b0 + 0.0)
        object.__setattr__(self, "alpha1", a1 + 0.0)
        object.__setattr__(self, "beta1", b1 + 0.0)

    @classmethod
    def dirichlet(cls):
        return cls(1.0, 0.0, 1.0, 0.0)

    @classmethod
    def neumann(cls):
        return cls(0.0, 1.0, 0.0, 1.0)

    @classmethod
    def robin(cls, c):
        """u'(0) = c u(0) and u'(1) = -c u(1)."""
        return cls(c, 1.0, c, 1.0)

    @classmethod
    def parse(cls, text):
        parts = text.strip().strip("()").replace(",", " ").split()
        try:
            values = [float(p) for p in parts]
        except ValueError:
            values = []
        if len(values) != 4:
            raise ValidationError(f"expected four boundary coefficients, got {text!r}")
        return cls(*values)

    def as_tuple(self):
        return (self.alpha0, self.beta0, self.alpha1, self.beta1)

    @property
    def case(self):
        left, right = self.beta0 == 0, self.beta1 == 0
        if left and right:
            return BoundaryCase.DIRICHLET_DIRICHLET
        if left:
            return BoundaryCase.DIRICHLET_LEFT
        if right:
            return BoundaryCase.DIRICHLET_RIGHT
        return BoundaryCase.ROBIN_ROBIN

    @property
    def denominator(self):
        """f(0) = a0*a1 + a0*b1 + a1*b0; zero iff 0 is an eigenvalue."""
        return self.alpha0 * self.alpha1 + self.alpha0 * self.beta1 + self.alpha1 * self.beta0

    def __str__(self):
        return "({:g},{:g},{:g},{:g})".format(*self.as_tuple())


def is_negative_definite(bc: BoundaryConditions) -> bool:
    """Closed-form criterion, evaluated in exact rational arithmetic.

    Floats are converted to ``Fraction`` so that sums such as a1 + b1 with a
    tiny a1 are not rounded before the strict comparisons.
    """
    a0, b0, a1, b1 = (Fraction(v) for v in bc.as_tuple())
    left_robin = b0 * (a0 + b0) > 0
    right_robin = b1 * (a1 + b1) > 0
    left_dirichlet = b0 == 0 and a0 != 0
    right_dirichlet = b1 == 0 and a1 != 0
    if left_robin and right_robin:
        return abs((a0 + b0) * (a1 + b1)) > abs(b0 * b1)
    return (
        (left_dirichlet and right_robin)
        or (left_robin and right_dirichlet)
        or (left_dirichlet and right_dirichlet)
    )


_TAYLOR_CUTOFF = 1e-4


def _x_coth_sqrt(lam):
    # sqrt(l) * coth(sqrt(l)); even series near 0 avoids 0/0
    lam = np.asarray(lam, dtype=float)
    small = lam < _TAYLOR_CUTOFF
    s = np.sqrt(np.where(small, 1.0, lam))
    big = s / np.tanh(s)
    series = 1.0 + lam / 3.0 - lam**2 / 45.0
    return np.where(small, series, big)


def eigen_determinant(bc: BoundaryConditions, lam):
    """Determinant f(lambda) whose roots are the eigenvalues lambda >= 0.

    Accepts a scalar or an array; returns the same shape.
    """
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(lam_arr < 0) or np.any(~np.isfinite(lam_arr)):
        raise ValidationError("eigen_determinant requires finite lambda >= 0")
    a0, b0, a1, b1 = bc.as_tuple()
    value = a0 * a1 + (a0 * b1 + a1 * b0) * _x_coth_sqrt(lam_arr) + b0 * b1 * lam_arr
    if np.ndim(lam) == 0:
        return float(value)
    return value


@dataclass
class SpectrumReport:
    bc: BoundaryConditions
    lambda_max: float
    n_points: int
    roots: list = field(default_factory=list)
    brackets: list = field(default_factory=list)

    @property
    def has_nonneg_eigenvalue(self):
        return bool(self.roots)


def _scan_grid(lambda_max, n_points):
    patch_end = min(1.0, lambda_max)
    n_lin = max(2, n_points // 5)
    linear = np.linspace(0.0, patch_end, n_lin)
    if lambda_max <= patch_end or n_points - n_lin < 2:
        return linear
    logs = np.geomspace(patch_end, lambda_max, n_points - n_lin + 1)[1:]
    return np.concatenate([linear, logs])


def scan_nonnegative_spectrum(bc: BoundaryConditions, lambda_max: float = 1e4,
                              n_points: int = 4000, rtol: float = 1e-12) -> SpectrumReport:
    """Locate roots of ``eigen_determinant`` on [0, lambda_max].

    Sign changes on the grid are refined by bisection.  Local minima that
    stay positive on the grid are minimised on their neighbourhood so that
    a dip below zero between two grid points is not missed.
    """
    if not lambda_max > 0:
        raise ValidationError("lambda_max must be positive")
    if n_points < 2:
        raise ValidationError("n_points must be at least 2")
    grid = _scan_grid(float(lambda_max), int(n_points))
    values = eigen_determinant(bc, grid)
    report = SpectrumReport(bc=bc, lambda_max=float(lambda_max), n_points=len(grid))

    def f(x):
        return eigen_determinant(bc, x)

    def add_bracket(lo, hi):
        report.brackets.append((lo, hi))
        root = optimize.bisect(f, lo, hi, xtol=1e-300, rtol=max(rtol, 4 * np.finfo(float).eps),
                               maxiter=2000)
        report.roots.append(root)

    for i, v in enumerate(values):
        if v == 0:
            report.roots.append(float(grid[i]))
    signs = np.sign(values)
    for i in np.flatnonzero(signs[:-1] * signs[1:] < 0):
        add_bracket(grid[i], grid[i + 1])

    for i in range(1, len(grid) - 1):
        v = values[i]
        left, right = values[i - 1], values[i + 1]
        # skip plateaus such as the constant determinant of Dirichlet conditions
        if v > 0 and v <= left and v <= right and (v < left or v < right):
            lo, hi = grid[i - 1], grid[i + 1]
            res = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded",
                                           options={"xatol": 1e-12 * max(hi, 1.0)})
            if res.fun < 0:
                add_bracket(lo, res.x)
                add_bracket(res.x, hi)
            elif res.fun == 0:
                report.roots.append(float(res.x))
    report.roots.sort()
    return report
