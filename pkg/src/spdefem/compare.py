"""Comparing the continuum stationary measure with its finite element version.

Total variation is used without the factor 1/2: for two laws with
densities p and q relative to a common reference, the distance is
E|p - q|, which lies in [0, 2].

Densities relative to the Gaussian references are known only up to their
normalising constants, which are estimated by importance sampling on
batches independent of the ones used for the |.| average.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import AlignmentError, DegenerateWeightsError, NotNegativeDefiniteError, ValidationError
from .exact import PathSample, brownian_bridge, log_density_mu_vs_nu, sample_stationary_linear
from .fem import DEFAULT_QUAD_ORDER, F_n_functional, FiniteElementModel, GridSpec
from .spectrum import BoundaryConditions, is_negative_definite

__all__ = [
    "InnerBiasWarning",
    "NormalizationEstimate",
    "TvEstimate",
    "TvEstimator",
    "estimate_logZ",
    "estimate_tv_conditional",
    "estimate_tv_upper",
    "F_n_functional",
    "fit_loglog_slope",
    "hat_embed",
    "project",
    "SlopeFit",
]

MIN_ESS = 10
_CHUNK_FLOATS = 4_000_000


class TvEstimator(enum.Enum):
    UPPER_BOUND = "upper"
    CONDITIONAL = "conditional"


class InnerBiasWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TvEstimate:
    value: float
    std_error: float
    n_outer: int
    n_inner: int
    estimator: TvEstimator
    inner_shift: float | None = None


@dataclass(frozen=True)
class NormalizationEstimate:
    logZ: float
    std_error: float
    ess: float


def project(path: PathSample, grid: GridSpec):
    """Values of ``path`` at the finite element nodes in the index set."""
    m = path.m
    if m % grid.n:
        raise AlignmentError(f"path resolution m={m} is not a multiple of n={grid.n}")
    return path.values[..., grid.index_set * (m // grid.n)]


def hat_embed(u, grid: GridSpec, m_per_cell: int, rng, antithetic=False) -> PathSample:
    """Lift coefficient vectors to paths by filling every cell with a Brownian bridge.

    Excluded Dirichlet nodes are reconstructed as 0.  Each leading index of
    ``u`` gets its own independent bridges.  With ``antithetic=True`` the
    second half along the last batch axis reuses the first half's bridges
    with flipped sign (marginally still exact, pairwise dependent).
    """
    if m_per_cell < 1:
        raise ValidationError("m_per_cell must be at least 1")
    full = grid.full_nodes(u)
    batch = full.shape[:-1]
    t = np.arange(m_per_cell + 1) / m_per_cell
    cells = full[..., :-1, None] * (1.0 - t) + full[..., 1:, None] * t
    if m_per_cell > 1:
        if antithetic:
            if not batch or batch[-1] % 2:
                raise ValidationError("antithetic fill-ins need an even last batch axis")
            half = brownian_bridge(m_per_cell, rng, size=batch[:-1] + (batch[-1] // 2, grid.n),
                                   scale=grid.dx)
            cells += np.concatenate([half, -half], axis=-3)
        else:
            cells += brownian_bridge(m_per_cell, rng, size=batch + (grid.n,), scale=grid.dx)
    values = np.empty(batch + (grid.n * m_per_cell + 1,))
    values[..., :-1] = cells[..., :-1].reshape(batch + (-1,))
    values[..., -1] = full[..., -1]
    return PathSample(np.linspace(0.0, 1.0, grid.n * m_per_cell + 1), values)


def _log_mean_exp(lw, axis=None):
    top = np.max(lw, axis=axis, keepdims=True)
    w = np.exp(lw - top)
    out = np.squeeze(top, axis=axis) + np.log(np.mean(w, axis=axis))
    return out, w


def _chunks(total, per_item):
    size = max(1, _CHUNK_FLOATS // max(per_item, 1))
    start = 0
    while start < total:
        yield min(size, total - start)
        start += size


def _require_negative(bc):
    if not is_negative_definite(bc):
        raise NotNegativeDefiniteError(f"operator is not negative definite for bc={bc}")


def _continuum_log_weights(bc, F, m_fine, count, rng):
    out = np.empty(count)
    pos = 0
    for k in _chunks(count, m_fine + 1):
        out[pos:pos + k] = log_density_mu_vs_nu(sample_stationary_linear(bc, m_fine, rng, k), F)
        pos += k
    return out


def estimate_logZ(bc: BoundaryConditions, F, which, n_samples: int, rng,
                  m_fine: int = 1024, quad_order: int = DEFAULT_QUAD_ORDER) -> NormalizationEstimate:
    """log E[exp(int F)] under nu (``which="continuum"``) or log E[exp(F_n)] under nu_n.

    ``which`` is ``"continuum"`` or the number of elements n.  The error
    bar is the delta-method standard error of the log of a sample mean.
    """
    _require_negative(bc)
    if n_samples < 2:
        raise ValidationError("n_samples must be at least 2")
    if which != "continuum" and (isinstance(which, str) or int(which) < 2):
        raise ValidationError(f"which must be 'continuum' or an integer n >= 2, got {which!r}")
    if F.is_constant:
        # every weight equals exp(c); skip sampling so the result is exact
        return NormalizationEstimate(float(F.constant), 0.0, float(n_samples))
    if which == "continuum":
        lw = _continuum_log_weights(bc, F, m_fine, n_samples, rng)
    else:
        model = FiniteElementModel(bc, int(which))
        lw = np.empty(n_samples)
        pos = 0
        for k in _chunks(n_samples, model.grid.size * (quad_order + 1)):
            lw[pos:pos + k] = F_n_functional(model.sample_nu_n(rng, k), F, model.grid, quad_order)
            pos += k
    logZ, w = _log_mean_exp(lw)
    ess = float(np.sum(w) ** 2 / np.sum(w * w))
    if ess < MIN_ESS:
        raise DegenerateWeightsError(f"effective sample size {ess:.2f} below {MIN_ESS}")
    se = float(np.std(w, ddof=1) / (np.mean(w) * np.sqrt(n_samples)))
    return NormalizationEstimate(float(logZ), se, ess)


@dataclass(frozen=True)
class _PairedNormalizers:
    """log Z and log Z_n from one batch: x ~ nu_n and its hat embedding ~ nu."""

    logZ: float
    logZ_n: float
    rel_w: np.ndarray
    rel_w_n: np.ndarray

    def influence(self, grad_c, grad_n):
        # linearised error of grad_c * dlogZ + grad_n * dlogZ_n, per batch sample
        return grad_c * (self.rel_w - 1.0) + grad_n * (self.rel_w_n - 1.0)


def _paired_normalizers(model, F, n_norm, m_fine, rng, quad_order):
    if n_norm < 2:
        raise ValidationError("n_norm must be at least 2")
    grid = model.grid
    lw = np.empty(n_norm)
    lw_n = np.empty(n_norm)
    pos = 0
    for k in _chunks(n_norm, m_fine + 1):
        x = model.sample_nu_n(rng, k)
        lw_n[pos:pos + k] = F_n_functional(x, F, grid, quad_order)
        lw[pos:pos + k] = log_density_mu_vs_nu(hat_embed(x, grid, m_fine // grid.n, rng), F)
        pos += k
    logZ, w = _log_mean_exp(lw)
    logZ_n, w_n = _log_mean_exp(lw_n)
    for weights in (w, w_n):
        ess = np.sum(weights) ** 2 / np.sum(weights * weights)
        if ess < MIN_ESS:
            raise DegenerateWeightsError(f"effective sample size {ess:.2f} below {MIN_ESS}")
    return _PairedNormalizers(float(logZ), float(logZ_n), w / w.mean(), w_n / w_n.mean())


def _bootstrap_se(x, rng, n_boot):
    if len(x) < 2:
        return float("nan")
    if np.all(x == x[0]):
        return 0.0
    means = np.array([x[rng.integers(0, len(x), len(x))].mean() for _ in range(n_boot)])
    return float(means.std(ddof=1))


def _combined_se(boot_se, sign, w, w_n, norm):
    # first-order effect of the normalising constants on mean|w - w_n|
    grad_c = np.mean(-sign * w)
    grad_n = np.mean(sign * w_n)
    infl = norm.influence(grad_c, grad_n)
    norm_se = infl.std(ddof=1) / np.sqrt(len(infl))
    return float(np.sqrt(boot_se**2 + norm_se**2))


def estimate_tv_upper(bc: BoundaryConditions, F, n: int, n_outer: int, rng, m_fine: int | None = None,
                      quad_order: int = DEFAULT_QUAD_ORDER, n_norm: int | None = None,
                      n_boot: int = 200) -> TvEstimate:
    """Monte Carlo estimate of E_nu | dmu/dnu - (dmu_n/dnu_n) o Pi |.

    This bounds the total variation distance between mu projected to the
    nodes and mu_n from above.  Paths are drawn on a grid of ``m_fine``
    cells (default 64 n).  Both normalising constants come from one
    independent batch of ``n_norm`` samples (default ``n_outer``) so their
    errors largely cancel in the ratio.
    """
    _require_negative(bc)
    m_fine = 64 * n if m_fine is None else m_fine
    if m_fine % n:
        raise AlignmentError(f"m_fine={m_fine} is not a multiple of n={n}")
    if n_outer < 1:
        raise ValidationError("n_outer must be positive")
    n_norm = n_outer if n_norm is None else n_norm
    model = FiniteElementModel(bc, n)
    grid = model.grid
    norm = _paired_normalizers(model, F, n_norm, m_fine, rng, quad_order)
    a = np.empty(n_outer)
    b = np.empty(n_outer)
    pos = 0
    for k in _chunks(n_outer, m_fine + 1):
        paths = sample_stationary_linear(bc, m_fine, rng, k)
        a[pos:pos + k] = log_density_mu_vs_nu(paths, F)
        b[pos:pos + k] = F_n_functional(project(paths, grid), F, grid, quad_order)
        pos += k
    w = np.exp(a - norm.logZ)
    w_n = np.exp(b - norm.logZ_n)
    diff = w - w_n
    absdiff = np.abs(diff)
    se = _combined_se(_bootstrap_se(absdiff, rng, n_boot), np.sign(diff), w, w_n, norm)
    return TvEstimate(float(absdiff.mean()), se, n_outer, 0, TvEstimator.UPPER_BOUND)


def estimate_tv_conditional(bc: BoundaryConditions, F, n: int, n_outer: int, n_inner: int, rng,
                            m_fine: int | None = None, quad_order: int = DEFAULT_QUAD_ORDER,
                            n_norm: int | None = None, n_boot: int = 200,
                            antithetic: bool = True) -> TvEstimate:
    """Estimate E_{nu_n} | E_nu[dmu/dnu | Pi = x] - dmu_n/dnu_n(x) |.

    Given the node values x ~ nu_n, the law of nu between nodes is n
    independent Brownian bridges, so the conditional expectation is
    averaged over ``n_inner`` hat-embedded fill-ins.  The average is also
    formed with ``2 n_inner`` fill-ins; ``inner_shift`` reports how far
    that moves the estimate, and an ``InnerBiasWarning`` is issued when the
    shift exceeds two standard errors.  Fill-ins come in antithetic pairs
    (B, -B) unless ``antithetic=False``; an odd ``n_inner`` then uses one
    extra fill-in.
    """
    _require_negative(bc)
    if n_inner < 2:
        raise ValidationError("n_inner must be at least 2")
    m_fine = 64 * n if m_fine is None else m_fine
    if m_fine % n:
        raise AlignmentError(f"m_fine={m_fine} is not a multiple of n={n}")
    n_norm = n_outer if n_norm is None else n_norm
    model = FiniteElementModel(bc, n)
    grid = model.grid
    norm = _paired_normalizers(model, F, n_norm, m_fine, rng, quad_order)
    inner = n_inner + (n_inner % 2 if antithetic else 0)
    x = model.sample_nu_n(rng, n_outer)
    b = F_n_functional(x, F, grid, quad_order)
    cond = np.empty(n_outer)
    cond_double = np.empty(n_outer)
    pos = 0
    for k in _chunks(n_outer, 2 * inner * (m_fine + 1)):
        xs = np.broadcast_to(x[pos:pos + k, None, None, :], (k, 2, inner, grid.size))
        a = log_density_mu_vs_nu(hat_embed(xs, grid, m_fine // n, rng, antithetic), F)
        cond[pos:pos + k] = _log_mean_exp(a[:, 0], axis=1)[0]
        cond_double[pos:pos + k] = _log_mean_exp(a.reshape(k, -1), axis=1)[0]
        pos += k
    w_n = np.exp(b - norm.logZ_n)
    w = np.exp(cond - norm.logZ)
    diff = w - w_n
    absdiff = np.abs(diff)
    se = _combined_se(_bootstrap_se(absdiff, rng, n_boot), np.sign(diff), w, w_n, norm)
    value = float(absdiff.mean())
    shift = float(np.abs(np.exp(cond_double - norm.logZ) - w_n).mean() - value)
    if se > 0 and abs(shift) > 2 * se:
        warnings.warn(f"doubling n_inner moved the estimate by {shift:.3g} "
                      f"(> 2 standard errors of {se:.3g})", InnerBiasWarning, stacklevel=2)
    return TvEstimate(value, se, n_outer, n_inner, TvEstimator.CONDITIONAL, shift)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    std_error: float
    ci_low: float
    ci_high: float
    intercept: float


def fit_loglog_slope(ns, values, std_errors=None, level=0.95) -> SlopeFit | None:
    """Weighted least squares fit of log(value) against log(n).

    Returns None when any value is not positive, i.e. the slope is undefined.
    """
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(ns) < 2 or np.any(~(values > 0)):
        return None
    x, y = np.log(ns), np.log(values)
    if std_errors is None:
        sy = np.ones_like(y)
    else:
        sy = np.maximum(np.asarray(std_errors, dtype=float) / values, 1e-12)
    w = 1.0 / sy**2
    xm = np.sum(w * x) / np.sum(w)
    ym = np.sum(w * y) / np.sum(w)
    sxx = np.sum(w * (x - xm) ** 2)
    slope = np.sum(w * (x - xm) * (y - ym)) / sxx
    intercept = ym - slope * xm
    dof = len(x) - 2
    resid = y - (intercept + slope * x)
    if dof > 0:
        # scale by the residual spread when it exceeds the stated error bars
        scale = max(1.0, np.sum(w * resid**2) / dof)
        q = stats.t.ppf(0.5 + level / 2, dof)
    else:
        scale, q = 1.0, stats.norm.ppf(0.5 + level / 2)
    se = float(np.sqrt(scale / sxx))
    return SlopeFit(float(slope), se, float(slope - q * se), float(slope + q * se), float(intercept))
