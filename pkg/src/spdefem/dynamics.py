"""Euler-Maruyama integration of the finite element SDE.

Two forms share the stationary law exp(F_n(u)) N(0, (-L)^{-1}):

* mass form:            dU = M^{-1}(L U + f_n(U)) dt + sqrt(2) M^{-1/2} dW
* preconditioned form:  dU = (L U + f_n(U)) dt + sqrt(2) dW

The stiff linear part scales like n^2 (preconditioned) or n^2 / dx
(mass form), so the default scheme treats it implicitly.  The noise
M^{-1/2} dW is realised with the Cholesky factor M = R^T R: x = R^{-1} z
has covariance M^{-1}.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DivergenceError, NotNegativeDefiniteError, ValidationError
from .fem import DEFAULT_QUAD_ORDER, FiniteElementModel, discretized_drift, discretized_drift_columns
from .spectrum import BoundaryConditions, is_negative_definite


class SdeForm(enum.Enum):
    MASS = "mass"
    PRECONDITIONED = "preconditioned"


class Scheme(enum.Enum):
    EXPLICIT_EM = "explicit"
    SEMI_IMPLICIT_EM = "semi-implicit"


def default_dt(n):
    return 1e-3 if n <= 32 else min(1e-3, 0.1 / n)


@dataclass
class IntegratorConfig:
    """Time stepping and sampling schedule.

    ``dt=None`` picks ``default_dt(n)``.  Explicit EM is only stable for
    dt below about 2 / |lambda_max| of the linear drift, i.e. roughly
    1 / (2 n) in preconditioned form (L carries a single factor 1/dx) and
    dx^2 / 6 in mass form.
    """

    dt: float | None = None
    scheme: Scheme = Scheme.SEMI_IMPLICIT_EM
    burn_in: int = 10_000
    thin: int = 10
    n_samples: int = 1000
    seed: int = 0
    n_chains: int = 1
    quad_order: int = DEFAULT_QUAD_ORDER

    def __post_init__(self):
        self.scheme = Scheme(self.scheme)
        for name in ("burn_in", "thin", "n_samples", "n_chains", "quad_order"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be at least 1")
        if self.dt is not None and not self.dt > 0:
            raise ValidationError("dt must be positive")

    def resolved_dt(self, n):
        return self.dt if self.dt is not None else default_dt(n)

    def echo(self):
        d = asdict(self)
        d["scheme"] = self.scheme.value
        return d


class Stepper:
    """One-step map for a fixed model, form, scheme and dt.

    Holds the factorisation of the implicit system so repeated steps are
    O(|I|) per chain.
    """

    def __init__(self, model: FiniteElementModel, form: SdeForm, F, dt,
                 scheme=Scheme.SEMI_IMPLICIT_EM, quad_order=DEFAULT_QUAD_ORDER):
        self.model = model
        self.form = SdeForm(form)
        self.scheme = Scheme(scheme)
        self.F = F
        self.dt = float(dt)
        self.quad_order = quad_order
        self.noise_scale = np.sqrt(2.0 * self.dt)
        if self.scheme is Scheme.SEMI_IMPLICIT_EM:
            # mass form is multiplied through by M: (M - dt L) u+ = M u + dt f_n + sqrt(2dt) R^T z
            base = model.M if self.form is SdeForm.MASS else None
            implicit = (base - model.L.scaled(self.dt)) if base is not None else \
                (-model.L.scaled(self.dt)).shifted(1.0)
            self.implicit_chol = implicit.cholesky()

    def nonlinear_drift(self, u):
        """f_n(u) for u of shape (..., |I|)."""
        if self.F.is_constant:
            return np.zeros_like(u)
        return discretized_drift(self.F, u, self.model.grid, self.quad_order)

    def linear_drift(self, u):
        """A_lin u, i.e. M^{-1} L u or L u, for u of shape (..., |I|)."""
        Lu = self.model.L.matvec(u)
        return self.model.M_chol.solve(Lu) if self.form is SdeForm.MASS else Lu

    def step(self, u, z):
        """One step for states of shape (..., |I|)."""
        u = np.asarray(u, dtype=float)
        d = u.shape[-1]
        cols = u.reshape(-1, d).T
        zc = np.asarray(z, dtype=float).reshape(-1, d).T
        return self.step_columns(cols, zc).T.reshape(u.shape)

    def step_columns(self, u, z):
        """One step in column layout: u and z of shape (|I|, chains)."""
        model, dt, c = self.model, self.dt, self.noise_scale
        fn = None if self.F.is_constant else \
            discretized_drift_columns(self.F, u, model.grid, self.quad_order)
        if self.scheme is Scheme.EXPLICIT_EM:
            drift = model.L.matvec_columns(u)
            if fn is not None:
                drift += fn
            if self.form is SdeForm.MASS:
                drift = model.M_chol.solve_columns(drift, out=drift)
                noise = model.M_chol.solve_upper_columns(z)
            else:
                noise = z
            return u + dt * drift + c * noise
        if self.form is SdeForm.MASS:
            rhs = model.M.matvec_columns(u)
            rhs += c * model.M_chol.mul_lower_columns(z)
        else:
            rhs = u + c * z
        if fn is not None:
            rhs += dt * fn
        return self.implicit_chol.solve_columns(rhs, out=rhs)


def _check_finite(u, step, config=None):
    if not np.all(np.isfinite(u)):
        raise DivergenceError(f"non-finite state after step {step}", step=step, config=config)


def em_step(u, form, F, model: FiniteElementModel, dt, rng=None, scheme=Scheme.SEMI_IMPLICIT_EM,
            z=None, step_index=0, quad_order=DEFAULT_QUAD_ORDER):
    """Advance ``u`` by one Euler-Maruyama step.

    ``z`` overrides the standard normal increment drawn from ``rng``.
    """
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != model.grid.size:
        raise ValidationError("state does not match the model's index set")
    if z is None:
        z = rng.standard_normal(u.shape)
    out = Stepper(model, form, F, dt, scheme, quad_order).step(u, np.asarray(z, dtype=float))
    _check_finite(out, step_index)
    return out


@dataclass
class SampleSet:
    """``samples`` has shape (n_chains, n_samples, |I|)."""

    samples: np.ndarray
    form: SdeForm
    config: IntegratorConfig
    diagnostics: dict = field(default_factory=dict)

    @property
    def flat(self):
        return self.samples.reshape(-1, self.samples.shape[-1])

    def _batches(self, min_batches=20):
        """Index blocks used for batch-means error bars.

        Whole chains when there are enough of them, otherwise contiguous
        blocks of each chain.
        """
        chains, n_samples, _ = self.samples.shape
        per_chain = min(max(1, -(-min_batches // chains)), n_samples)
        blocks = np.array_split(np.arange(n_samples), per_chain)
        return [(c, b) for c in range(chains) for b in blocks]

    def moments(self, min_batches=20):
        """Mean and covariance with batch-means standard errors.

        Returns ``(mean, mean_se, cov, cov_se)``.  The covariance error bar
        linearises cov = E[x x^T] - m m^T around the pooled mean, so
        fluctuations of the batch means are not discarded.
        """
        batches = self._batches(min_batches)
        first = np.array([self.samples[c, b].mean(axis=0) for c, b in batches])
        second = np.array([np.einsum("ki,kj->ij", self.samples[c, b], self.samples[c, b]) / len(b)
                           for c, b in batches])
        weights = np.array([len(b) for _, b in batches], dtype=float)
        weights /= weights.sum()
        mean = weights @ first
        raw = np.tensordot(weights, second, axes=1)
        total = self.flat.shape[0]
        cov = (raw - np.outer(mean, mean)) * total / max(total - 1, 1)
        nb = len(batches)
        if nb < 2:
            nan = np.full_like(cov, np.nan)
            return mean, np.full_like(mean, np.nan), cov, nan
        lin = second - first[:, :, None] * mean[None, None, :] - mean[None, :, None] * first[:, None, :]
        # equal-size batches up to one sample, so plain spread is adequate
        mean_se = first.std(axis=0, ddof=1) / np.sqrt(nb)
        cov_se = lin.std(axis=0, ddof=1) / np.sqrt(nb)
        return mean, mean_se, cov, cov_se

    def mean(self):
        m, se, _, _ = self.moments()
        return m, se

    def covariance(self):
        _, _, c, se = self.moments()
        return c, se

    def variance(self):
        _, _, c, se = self.moments()
        return np.diag(c).copy(), np.diag(se).copy()

    def effective_sample_size(self):
        """Smallest ESS over covariance entries, Gaussian reference variance."""
        _, _, c, se = self.moments()
        d = np.diag(c)
        ref = np.outer(d, d) + c * c
        with np.errstate(divide="ignore", invalid="ignore"):
            return float(np.nanmin(ref / se**2))


def _lag1_autocorrelation(samples):
    x = samples - samples.mean(axis=1, keepdims=True)
    num = np.sum(x[:, 1:] * x[:, :-1], axis=(0, 1))
    den = np.sum(x * x, axis=(0, 1))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / den, np.nan)


def simulate_stationary(form, bc: BoundaryConditions, n: int, F, cfg: IntegratorConfig,
                        u0=None) -> SampleSet:
    """Run ``cfg.n_chains`` independent chains and collect thinned states.

    Chains start at ``u0`` (zeros by default), run ``burn_in`` steps, then
    record ``n_samples`` states ``thin`` steps apart.  All chains advance
    together as one batch; chain streams come from ``cfg.seed``.
    """
    if not is_negative_definite(bc):
        raise NotNegativeDefiniteError(f"operator is not negative definite for bc={bc}")
    model = FiniteElementModel(bc, n)
    dt = cfg.resolved_dt(n)
    stepper = Stepper(model, form, F, dt, cfg.scheme, cfg.quad_order)
    rng = np.random.Generator(np.random.SFC64(cfg.seed))
    d = model.grid.size
    if u0 is None:
        u = np.zeros((d, cfg.n_chains))
    else:
        u = np.array(np.broadcast_to(u0, (cfg.n_chains, d)), dtype=float).T
    out = np.empty((cfg.n_chains, cfg.n_samples, d))
    z = np.empty((d, cfg.n_chains))
    echo = cfg.echo()
    step = 0
    # overflow is reported as a DivergenceError, not as numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(cfg.burn_in + cfg.n_samples * cfg.thin):
            rng.standard_normal(out=z)
            u = stepper.step_columns(u, z)
            step += 1
            if not np.isfinite(u).all():
                _check_finite(u, step, echo)
            taken = k + 1 - cfg.burn_in
            if taken > 0 and taken % cfg.thin == 0:
                out[:, taken // cfg.thin - 1] = u.T
    diagnostics = {
        "finite": True,
        "steps": step,
        "dt": dt,
        "lag1_autocorrelation": _lag1_autocorrelation(out) if cfg.n_samples > 1 else np.full(d, np.nan),
    }
    return SampleSet(out, SdeForm(form), cfg, diagnostics)
