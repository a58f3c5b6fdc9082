"""Continuum stationary measures.

``nu`` is the centred Gaussian stationary law of du = L u dt + sqrt(2) dw,
with covariance equal to the Green's function of -L.  A path from ``nu``
is (1 - x) L + x R + B(x) with (L, R) a Gaussian pair of boundary values
and B an independent Brownian bridge.  ``mu`` is the stationary law once
the drift f = F' is switched on; it has density proportional to
exp(int_0^1 F(u(x)) dx) with respect to ``nu``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularOperatorError, ValidationError
from .spectrum import BoundaryConditions

__all__ = [
    "CovarianceParams",
    "PathSample",
    "boundary_moments",
    "brownian_bridge",
    "covariance",
    "log_density_mu_vs_nu",
    "sample_stationary_linear",
]


@dataclass(frozen=True)
class CovarianceParams:
    sigmaL2: float
    sigmaR2: float
    sigmaLR: float

    def as_matrix(self):
        return np.array([[self.sigmaL2, self.sigmaLR], [self.sigmaLR, self.sigmaR2]])


@dataclass(frozen=True, eq=False)
class PathSample:
    """Path values on the equispaced grid 0, 1/m, ..., 1.

    ``values`` has shape ``(..., m + 1)``; leading axes index independent
    paths.
    """

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or len(grid) < 2:
            raise ValidationError("path grid needs at least two points")
        if values.shape[-1] != len(grid):
            raise ValidationError("path values do not match the grid")
        if not np.all(np.isfinite(values)):
            raise ValidationError("path values must be finite")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @property
    def m(self):
        return len(self.grid) - 1

    @classmethod
    def on_grid(cls, values):
        values = np.asarray(values, dtype=float)
        return cls(np.linspace(0.0, 1.0, values.shape[-1]), values)


def _denominator(bc):
    d = bc.denominator
    if d == 0:
        raise SingularOperatorError(f"0 is an eigenvalue of the operator for bc={bc}")
    return d


def covariance(bc: BoundaryConditions, x, y):
    """Green's function of -d^2/dx^2 under ``bc``; broadcasts over x and y."""
    a0, b0, a1, b1 = bc.as_tuple()
    d = _denominator(bc)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any((x < 0) | (x > 1) | (y < 0) | (y > 1)):
        raise ValidationError("covariance arguments must lie in [0, 1]")
    value = (b0 * b1 + a0 * b1 * x * y + b0 * a1 * (1 - x) * (1 - y)) / d + np.minimum(x, y) - x * y
    return value if value.ndim else float(value)


def boundary_moments(bc: BoundaryConditions) -> CovarianceParams:
    a0, b0, a1, b1 = bc.as_tuple()
    d = _denominator(bc)
    return CovarianceParams(b0 * (a1 + b1) / d, (a0 + b0) * b1 / d, b0 * b1 / d)


def brownian_bridge(m, rng, size=(), scale=1.0):
    """Standard Brownian bridge on the grid 0, 1/m, ..., 1, shape ``size + (m+1,)``.

    Cumulative sums of N(0, 1/m) increments with the linear trend removed,
    exact in law at the grid points.  ``scale`` multiplies the time axis,
    so the variance at relative position t is scale * t * (1 - t).
    """
    size = (size,) if np.isscalar(size) else tuple(size)
    steps = rng.standard_normal(size + (m,)) * np.sqrt(scale / m)
    walk = np.zeros(size + (m + 1,))
    np.cumsum(steps, axis=-1, out=walk[..., 1:])
    t = np.arange(m + 1) / m
    walk -= t * walk[..., -1:]
    walk[..., -1] = 0.0
    return walk


def _boundary_pair(params, rng, size):
    z = rng.standard_normal(size + (2,))
    sl = np.sqrt(params.sigmaL2)
    left = sl * z[..., 0]
    if sl > 0:
        rho = params.sigmaLR / sl
        resid = max(params.sigmaR2 - rho * rho, 0.0)
        right = rho * z[..., 0] + np.sqrt(resid) * z[..., 1]
    else:
        right = np.sqrt(params.sigmaR2) * z[..., 1]
    return left, right


def sample_stationary_linear(bc: BoundaryConditions, m: int, rng, size=()) -> PathSample:
    """Exact draws of nu at the grid points 0, 1/m, ..., 1."""
    if m < 1:
        raise ValidationError("m must be at least 1")
    params = boundary_moments(bc)
    size = (size,) if np.isscalar(size) else tuple(size)
    left, right = _boundary_pair(params, rng, size)
    x = np.linspace(0.0, 1.0, m + 1)
    values = (1 - x) * left[..., None] + x * right[..., None] + brownian_bridge(m, rng, size)
    return PathSample(x, values)


def log_density_mu_vs_nu(path: PathSample, F):
    """Unnormalised log dmu/dnu: the trapezoid rule for int_0^1 F(u(x)) dx."""
    vals = np.asarray(F.F(path.values), dtype=float)
    total = (np.sum(vals[..., 1:-1], axis=-1) + 0.5 * (vals[..., 0] + vals[..., -1])) / path.m
    return total if np.ndim(total) else float(total)
