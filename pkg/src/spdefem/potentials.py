"""Potentials F with drift f = F'.

All callables must accept numpy arrays and act elementwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ValidationError

_FD_STEP = 1e-5
_FD_RTOL = 1e-6
_FD_POINTS = 16


@dataclass(frozen=True, eq=False)
class Potential:
    """F together with its derivative and the bounds the theory assumes.

    ``F_second_bound`` bounds |F''| and ``F_upper_bound`` bounds F from
    above.  At construction f is compared with a central difference of F at
    16 pseudo-random points in [-3, 3].
    """

    F: Callable
    f: Callable
    F_second_bound: float
    F_upper_bound: float
    name: str = "custom"
    constant: float | None = None

    def __post_init__(self):
        if not (np.isfinite(self.F_second_bound) and np.isfinite(self.F_upper_bound)):
            raise ValidationError("potential bounds must be finite")
        x = np.random.default_rng(20240517).uniform(-3.0, 3.0, _FD_POINTS)
        fd = (np.asarray(self.F(x + _FD_STEP)) - np.asarray(self.F(x - _FD_STEP))) / (2 * _FD_STEP)
        exact = np.asarray(self.f(x), dtype=float)
        err = np.abs(fd - exact)
        if np.any(err > _FD_RTOL * np.maximum(1.0, np.abs(exact))):
            worst = int(np.argmax(err))
            raise ValidationError(
                f"potential {self.name!r}: f does not match F' at x={x[worst]:.4f} "
                f"(f={exact[worst]:.8g}, finite difference {fd[worst]:.8g})")

    @property
    def is_constant(self):
        return self.constant is not None

    @classmethod
    def zero(cls):
        return cls.const(0.0)

    @classmethod
    def const(cls, c):
        c = float(c)
        return cls(lambda v: np.full(np.shape(v), c), lambda v: np.zeros(np.shape(v)),
                   0.0, c, name=f"const({c:g})", constant=c)

    @classmethod
    def quadratic(cls, coeff=1.0):
        """F(v) = -coeff * v^2 / 2, so f(v) = -coeff * v."""
        coeff = float(coeff)
        if coeff < 0:
            raise ValidationError("quadratic potential needs coeff >= 0 to be bounded above")
        return cls(lambda v: -0.5 * coeff * np.square(v), lambda v: -coeff * np.asarray(v),
                   coeff, 0.0, name=f"quadratic({coeff:g})")

    @classmethod
    def neg_cos(cls):
        return cls(lambda v: -np.cos(v), np.sin, 1.0, 1.0, name="neg-cos")

    @classmethod
    def neg_logcosh(cls):
        def F(v):
            a = np.abs(v)
            # log cosh(v) = |v| + log1p(exp(-2|v|)) - log 2, overflow safe
            return -(a + np.log1p(np.exp(-2.0 * a)) - np.log(2.0))
        return cls(F, lambda v: -np.tanh(v), 1.0, 0.0, name="neg-logcosh")

    @classmethod
    def conditioned_diffusion(cls, g, dg, d2g, g_bound, dg_bound, d2g_bound, d3g_bound, name="g"):
        """F = -(g^2 + g')/2 for the drift g of dX = g(X) dt + dW.

        The bounds are sup|g|, sup|g'|, sup|g''|, sup|g'''| and are used for
        the upper bound of F and the bound on |F''|.
        """
        def F(v):
            return -0.5 * (np.square(g(v)) + dg(v))

        def f(v):
            return -(g(v) * dg(v) + 0.5 * d2g(v))

        second = dg_bound**2 + g_bound * d2g_bound + 0.5 * d3g_bound
        return cls(F, f, second, 0.5 * dg_bound, name=name)


def tanh_drift(a=1.0):
    """g(v) = a tanh(v) with its first two derivatives."""
    def g(v):
        return a * np.tanh(v)

    def dg(v):
        return a / np.cosh(v) ** 2

    def d2g(v):
        t = np.tanh(v)
        return -2.0 * a * t * (1.0 - t * t)

    return g, dg, d2g, abs(a), abs(a), 0.8 * abs(a), 2.0 * abs(a)


def sin_drift(a=1.0, k=1.0):
    """g(v) = a sin(k v) with its first two derivatives."""
    def g(v):
        return a * np.sin(k * v)

    def dg(v):
        return a * k * np.cos(k * v)

    def d2g(v):
        return -a * k * k * np.sin(k * v)

    return g, dg, d2g, abs(a), abs(a * k), abs(a) * k * k, abs(a) * abs(k) ** 3


def potential_from_name(name: str) -> Potential:
    """Look up one of the named potentials used by the experiments."""
    table = {
        "zero": Potential.zero,
        "neg-cos": Potential.neg_cos,
        "neg-half-square": lambda: Potential.quadratic(1.0),
        "neg-logcosh": Potential.neg_logcosh,
    }
    if name.startswith("const:"):
        try:
            return Potential.const(float(name.split(":", 1)[1]))
        except ValueError as exc:
            raise ValidationError(f"bad constant potential {name!r}") from exc
    if name not in table:
        raise ValidationError(f"unknown potential {name!r}; choose from {sorted(table)} or const:<c>")
    return table[name]()
