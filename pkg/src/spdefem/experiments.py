"""Experiment drivers behind the command-line interface.

Each driver takes an ``ExperimentConfig`` and returns a ``ResultTable``.
Work is split into tasks (one per n, or per boundary case); each task
draws from its own generator seeded by (seed, task key), so results do
not depend on how many worker processes run them.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .compare import (
    InnerBiasWarning,
    estimate_tv_conditional,
    estimate_tv_upper,
    fit_loglog_slope,
)
from .dynamics import IntegratorConfig, SdeForm, simulate_stationary
from .errors import ValidationError
from .fem import F_n_functional, FiniteElementModel, check_exactness
from .potentials import Potential, potential_from_name, sin_drift, tanh_drift
from .spectrum import BoundaryConditions, is_negative_definite, scan_nonnegative_spectrum

HEADER = ("experiment", "n", "stat", "value", "stderr", "seed", "runtime_ms")
EXPERIMENTS = ("exactness", "linear-law", "ou", "bridge", "tv-rate")


@dataclass(frozen=True)
class Row:
    experiment: str
    n: int
    stat: str
    value: float
    stderr: float
    seed: int
    runtime_ms: float = 0.0

    def key(self):
        return (self.experiment, self.n, self.stat)


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)

    def add(self, *args, **kwargs):
        self.rows.append(Row(*args, **kwargs))

    def extend(self, rows):
        self.rows.extend(rows)

    def sorted(self):
        return ResultTable(sorted(self.rows, key=Row.key))

    def get(self, stat, n=None, experiment=None):
        for r in self.rows:
            if r.stat == stat and (n is None or r.n == n) and (experiment is None or r.experiment == experiment):
                return r
        raise KeyError(stat)

    def to_csv(self, timing=True):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(HEADER)
        for r in self.rows:
            writer.writerow([r.experiment, r.n, r.stat, _fmt(r.value), _fmt(r.stderr), r.seed,
                             _fmt(round(r.runtime_ms, 3) if timing else 0.0)])
        return buf.getvalue()

    def to_json(self, timing=True):
        rows = []
        for r in self.rows:
            d = asdict(r)
            for k in ("value", "stderr"):
                d[k] = None if math.isnan(d[k]) else d[k]
            if not timing:
                d["runtime_ms"] = 0.0
            rows.append(d)
        return json.dumps({"columns": list(HEADER), "rows": rows}, indent=1)


@dataclass
class ExperimentConfig:
    """Flat experiment description; ``None`` means the experiment's default."""

    experiment: str
    n: tuple | None = None
    seed: int = 0
    output_path: str = "-"
    bc: str | None = None
    # ou
    c: float = 1.0
    drift_linear_coeff: bool = False
    # bridge
    g: str = "tanh"
    a: float = 1.0
    k: float = 1.0
    eps: float = 0.02
    n_accept: int = 10_000
    oracle_steps: int = 200
    # tv-rate
    potential: str = "neg-cos"
    conditional: bool = False
    check_m_fine: bool = False
    # sampler overrides
    dt: float | None = None
    mass_dt: float | None = None
    burn_in: int | None = None
    thin: int | None = None
    n_samples: int | None = None
    n_chains: int | None = None
    n_outer: int | None = None
    n_inner: int | None = None
    m_fine: int | None = None
    quad_order: int = 4
    sde: bool = True

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValidationError(f"unknown experiment {self.experiment!r}")
        if self.n is not None:
            n = tuple(int(v) for v in (self.n if isinstance(self.n, (tuple, list)) else (self.n,)))
            if any(b <= a for a, b in zip(n, n[1:])):
                raise ValidationError(f"n list must be strictly increasing, got {n}")
            self.n = n
        if self.experiment == "ou" and not self.c > 0:
            raise ValidationError("ou needs c > 0")
        for name in ("dt", "mass_dt", "burn_in", "thin", "n_samples", "n_chains", "n_outer",
                     "n_inner", "m_fine", "quad_order", "eps", "n_accept", "oracle_steps"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValidationError(f"{name} must be positive, got {value}")
        if self.g not in ("tanh", "sin"):
            raise ValidationError("g must be 'tanh' or 'sin'")

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    def n_list(self, default):
        return self.n if self.n is not None else tuple(default)

    def pick(self, name, default):
        value = getattr(self, name)
        return default if value is None else value


def _rng(seed, *key):
    return np.random.default_rng([int(seed), *(int(k) for k in key)])


def _run_tasks(fn, tasks, jobs):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(fn, tasks))
    else:
        results = [fn(t) for t in tasks]
    return [row for rows in results for row in rows]


class _Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.ms = (time.perf_counter() - self.start) * 1e3


# --- exactness ---------------------------------------------------------------

EXACTNESS_CASES = (
    ("dirichlet-dirichlet", (1.0, 0.0, 1.0, 0.0)),
    ("robin-robin", (1.0, 1.0, 1.0, 1.0)),
    ("dirichlet-left", (1.0, 0.0, 0.0, 1.0)),
    ("dirichlet-right", (1.0, 1.0, 1.0, 0.0)),
    ("neumann-neumann", (0.0, 1.0, 0.0, 1.0)),
)


def _exactness_task(args):
    name, coeffs, ns, seed = args
    bc = BoundaryConditions(*coeffs)
    rows = []
    negative = is_negative_definite(bc)
    for n in ns:
        with _Timer() as t:
            residual = check_exactness(bc, n) if negative else float("nan")
        stat = f"residual[{name}]" if negative else f"residual[{name}]:skipped:not-negative-definite"
        rows.append(Row("exactness", n, stat, residual, 0.0, seed, t.ms))
    with _Timer() as t:
        scan = scan_nonnegative_spectrum(bc, 1e4)
    agree = float(scan.has_nonneg_eigenvalue == (not negative))
    rows.append(Row("exactness-spectrum", 0, f"set-a-agrees[{name}]", agree, 0.0, seed, t.ms))
    rows.append(Row("exactness-spectrum", 0, f"negative-definite[{name}]", float(negative), 0.0, seed, 0.0))
    return rows


def run_exactness_suite(cfg: ExperimentConfig, jobs=1) -> ResultTable:
    ns = cfg.n_list((2, 4, 8, 16, 32, 64))
    if cfg.bc is not None:
        cases = (("custom", BoundaryConditions.parse(cfg.bc).as_tuple()),)
    else:
        cases = EXACTNESS_CASES
    tasks = [(name, coeffs, ns, cfg.seed) for name, coeffs in cases]
    return ResultTable(_run_tasks(_exactness_task, tasks, jobs)).sorted()


# --- linear law ----------------------------------------------------------------

def _integrator(cfg, n, seed_key, *, dt=None, defaults=None):
    d = {"burn_in": 8000, "thin": 250, "n_samples": 200, "n_chains": 1000}
    d.update(defaults or {})
    seed = int(_rng(cfg.seed, *seed_key).integers(2**63))
    return IntegratorConfig(dt=dt if dt is not None else cfg.dt, burn_in=cfg.pick("burn_in", d["burn_in"]),
                            thin=cfg.pick("thin", d["thin"]), n_samples=cfg.pick("n_samples", d["n_samples"]),
                            n_chains=cfg.pick("n_chains", d["n_chains"]), seed=seed,
                            quad_order=cfg.quad_order)


def _linear_law_task(args):
    cfg, n = args
    bc = BoundaryConditions.parse(cfg.bc) if cfg.bc else BoundaryConditions(1, 1, 1, 1)
    rows = []
    with _Timer() as t:
        icfg = _integrator(cfg, n, (n, 1))
        samples = simulate_stationary(SdeForm.PRECONDITIONED, bc, n, Potential.zero(), icfg)
        cov, se = samples.covariance()
        exact = FiniteElementModel(bc, n).nu_n_covariance()
    seed = cfg.seed
    size = len(exact)
    for i in range(size):
        for j in range(i, size):
            rows.append(Row("linear-law", n, f"cov[{i},{j}]", cov[i, j], se[i, j], seed, t.ms))
            rows.append(Row("linear-law", n, f"exact[{i},{j}]", exact[i, j], 0.0, seed, 0.0))
    z = np.abs(cov - exact) / se
    rows.append(Row("linear-law", n, "max_abs_z", float(z.max()), 0.0, seed, 0.0))
    rows.append(Row("linear-law", n, "ess", samples.effective_sample_size(), 0.0, seed, 0.0))
    return rows


def run_linear_law(cfg: ExperimentConfig, jobs=1) -> ResultTable:
    tasks = [(cfg, n) for n in cfg.n_list((4,))]
    return ResultTable(_run_tasks(_linear_law_task, tasks, jobs)).sorted()


# --- weighted statistics ------------------------------------------------------

def weighted_moments(x, log_w, i, j):
    """Self-normalised importance estimates of E[x_i], Var(x_i), Cov(x_i, x_j).

    Returns a dict name -> (estimate, standard error); the error bars use
    the delta method for ratio estimators.
    """
    w = np.exp(log_w - np.max(log_w))
    w /= w.sum()

    def ratio(h):
        est = float(w @ h)
        return est, float(np.sqrt(np.sum(w * w * (h - est) ** 2)))

    mi, mi_se = ratio(x[:, i])
    mj, _ = ratio(x[:, j])
    var = ratio((x[:, i] - mi) ** 2)
    cov = ratio((x[:, i] - mi) * (x[:, j] - mj))
    ess = 1.0 / float(np.sum(w * w))
    return {"mean": (mi, mi_se), "var": var, "cov": cov, "ess": (ess, 0.0)}


# --- OU example ----------------------------------------------------------------

def _ou_potential(cfg):
    coeff = cfg.c if cfg.drift_linear_coeff else cfg.c**2
    return Potential.quadratic(coeff)


def _ou_task(args):
    cfg, n, route = args
    c = cfg.c
    bc = BoundaryConditions.robin(c)
    F = _ou_potential(cfg)
    model = FiniteElementModel(bc, n)
    last = model.grid.size - 1
    rows = []
    seed = cfg.seed
    with _Timer() as t:
        if route == "reweight":
            rng = _rng(cfg.seed, n, 10)
            x = model.sample_nu_n(rng, cfg.pick("n_outer", 200_000))
            stats = weighted_moments(x, F_n_functional(x, F, model.grid, cfg.quad_order), 0, last)
            var0, cov01 = stats["var"], stats["cov"]
            extra = [("ess[reweight]", stats["ess"])]
        else:
            form = SdeForm.MASS if route == "mass" else SdeForm.PRECONDITIONED
            dt = cfg.pick("dt", 1e-3)
            if form is SdeForm.MASS:
                dt = cfg.pick("mass_dt", dt / 10)
            defaults = {"burn_in": 2000, "thin": 200, "n_samples": 100, "n_chains": 1000} \
                if form is SdeForm.MASS else {"burn_in": 30_000, "thin": 1000, "n_samples": 30, "n_chains": 1000}
            icfg = _integrator(cfg, n, (n, 11 if form is SdeForm.MASS else 12), dt=dt, defaults=defaults)
            samples = simulate_stationary(form, bc, n, F, icfg)
            cov, se = samples.covariance()
            var0, cov01 = (cov[0, 0], se[0, 0]), (cov[0, last], se[0, last])
            extra = [(f"ess[{route}]", (samples.effective_sample_size(), 0.0))]
    rows.append(Row("ou", n, f"var0[{route}]", var0[0], var0[1], seed, t.ms))
    rows.append(Row("ou", n, f"cov01[{route}]", cov01[0], cov01[1], seed, t.ms))
    rows.extend(Row("ou", n, name, v, s, seed, 0.0) for name, (v, s) in extra)
    return rows


def run_ou_example(cfg: ExperimentConfig, jobs=1) -> ResultTable:
    """Robin example: u_x(0) = c u(0), u_x(1) = -c u(1), drift -c^2 u.

    The stationary law is the stationary OU process on [0, 1] with kernel
    exp(-c|s - t|) / (2c).
    """
    routes = ("reweight", "mass", "preconditioned") if cfg.sde else ("reweight",)
    ns = cfg.n_list((32,))
    table = ResultTable(_run_tasks(_ou_task, [(cfg, n, r) for n in ns for r in routes], jobs))
    c = cfg.c
    for n in ns:
        model = FiniteElementModel(BoundaryConditions.robin(c), n)
        coeff = c if cfg.drift_linear_coeff else c**2
        precision = (-model.L) + model.M.scaled(coeff)
        fe = precision.cholesky().solve(np.eye(model.grid.size)) if model.grid.size <= 256 else None
        table.add("ou", n, "var0[analytic]", 1.0 / (2 * c), 0.0, cfg.seed)
        table.add("ou", n, "cov01[analytic]", math.exp(-c) / (2 * c), 0.0, cfg.seed)
        if fe is not None:
            table.add("ou", n, "var0[fe-exact]", fe[0, 0], 0.0, cfg.seed)
            table.add("ou", n, "cov01[fe-exact]", fe[0, -1], 0.0, cfg.seed)
        for stat in ("var0", "cov01"):
            for a, b in zip(routes, routes[1:] + routes[:1]):
                if a == b:
                    continue
                ra, rb = table.get(f"{stat}[{a}]", n), table.get(f"{stat}[{b}]", n)
                z = abs(ra.value - rb.value) / math.hypot(ra.stderr, rb.stderr)
                table.add("ou", n, f"z[{stat}:{a}-vs-{b}]", z, 0.0, cfg.seed)
            r = table.get(f"{stat}[reweight]", n)
            ref = table.get(f"{stat}[analytic]", n).value
            table.add("ou", n, f"z[{stat}:reweight-vs-analytic]", abs(r.value - ref) / r.stderr, 0.0, cfg.seed)
    return table.sorted()


# --- conditioned diffusion -------------------------------------------------

def _drift_family(cfg):
    if cfg.g == "tanh":
        return tanh_drift(cfg.a)
    return sin_drift(cfg.a, cfg.k)


def bridge_potential(cfg):
    g, dg, d2g, *bounds = _drift_family(cfg)
    return Potential.conditioned_diffusion(g, dg, d2g, *bounds, name=f"bridge-{cfg.g}")


def bridge_oracle(g, n_accept, eps, n_steps, rng, max_paths=50_000_000, chunk=20_000):
    """Euler-Maruyama for dX = g(X) dt + dW, X_0 = 0, kept when |X_1| < eps.

    Returns (values of X at time 1/2 for accepted paths, number simulated).
    """
    if n_steps % 2:
        raise ValidationError("oracle_steps must be even so that t = 1/2 is a grid point")
    h = 1.0 / n_steps
    sq = math.sqrt(h)
    kept = []
    total = 0
    accepted = 0
    while accepted < n_accept and total < max_paths:
        x = np.zeros(chunk)
        half = None
        for step in range(n_steps):
            x += g(x) * h + sq * rng.standard_normal(chunk)
            if step + 1 == n_steps // 2:
                half = x.copy()
        mask = np.abs(x) < eps
        kept.append(half[mask])
        accepted += int(mask.sum())
        total += chunk
        if total >= 200_000 and accepted < 1e-4 * total:
            break
    return np.concatenate(kept), total


def _bridge_task(args):
    cfg, n, route = args
    if n % 2:
        raise ValidationError("bridge experiment needs even n so that x = 1/2 is a node")
    bc = BoundaryConditions.dirichlet()
    F = bridge_potential(cfg)
    model = FiniteElementModel(bc, n)
    mid = n // 2 - 1  # index set starts at node 1
    seed = cfg.seed
    rows = []
    with _Timer() as t:
        if route == "reweight":
            rng = _rng(cfg.seed, n, 20)
            x = model.sample_nu_n(rng, cfg.pick("n_outer", 200_000))
            stats = weighted_moments(x, F_n_functional(x, F, model.grid, cfg.quad_order), mid, mid)
            mean, var = stats["mean"], stats["var"]
            extra = [("ess[reweight]", stats["ess"])]
        elif route == "sde":
            icfg = _integrator(cfg, n, (n, 21), defaults={"burn_in": 5000, "thin": 300, "n_samples": 100})
            samples = simulate_stationary(SdeForm.PRECONDITIONED, bc, n, F, icfg)
            m, mse, cov, cse = samples.moments()
            mean, var = (m[mid], mse[mid]), (cov[mid, mid], cse[mid, mid])
            extra = [("ess[sde]", (samples.effective_sample_size(), 0.0))]
        else:
            rng = _rng(cfg.seed, n, 22)
            g = _drift_family(cfg)[0]
            half, total = bridge_oracle(g, cfg.n_accept, cfg.eps, cfg.oracle_steps, rng)
            rate = len(half) / total
            extra = [("accepted[oracle]", (float(len(half)), 0.0)), ("acceptance_rate[oracle]", (rate, 0.0))]
            if rate < 1e-4 or len(half) < 2:
                warnings.warn(f"bridge oracle infeasible: acceptance rate {rate:.2e}", RuntimeWarning)
                mean = var = (float("nan"), float("nan"))
            else:
                k = len(half)
                mu = float(half.mean())
                v = float(half.var(ddof=1))
                fourth = float(np.mean((half - mu) ** 4))
                mean = (mu, math.sqrt(v / k))
                var = (v, math.sqrt(max(fourth - v * v, 0.0) / k))
    rows.append(Row("bridge", n, f"mean_half[{route}]", mean[0], mean[1], seed, t.ms))
    rows.append(Row("bridge", n, f"var_half[{route}]", var[0], var[1], seed, t.ms))
    rows.extend(Row("bridge", n, name, v, s, seed, 0.0) for name, (v, s) in extra)
    return rows


def run_conditioned_diffusion_example(cfg: ExperimentConfig, jobs=1) -> ResultTable:
    """Dirichlet example: F = -(g^2 + g')/2, compared against a bridge simulation."""
    routes = ("reweight", "sde", "oracle") if cfg.sde else ("reweight", "oracle")
    ns = cfg.n_list((32,))
    table = ResultTable(_run_tasks(_bridge_task, [(cfg, n, r) for n in ns for r in routes], jobs))
    for n in ns:
        for stat in ("mean_half", "var_half"):
            oracle = table.get(f"{stat}[oracle]", n)
            for route in routes[:-1]:
                r = table.get(f"{stat}[{route}]", n)
                z = abs(r.value - oracle.value) / math.hypot(r.stderr, oracle.stderr)
                table.add("bridge", n, f"z[{stat}:{route}-vs-oracle]", z, 0.0, cfg.seed)
    return table.sorted()


# --- TV rate ---------------------------------------------------------------

def _tv_task(args):
    cfg, n, which = args
    bc = BoundaryConditions.parse(cfg.bc) if cfg.bc else BoundaryConditions.dirichlet()
    F = potential_from_name(cfg.potential)
    m_fine = cfg.pick("m_fine", 64 * n)
    if which == "conditional":
        with _Timer() as t, warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", InnerBiasWarning)
            est = estimate_tv_conditional(bc, F, n, cfg.pick("n_outer", 5000), cfg.pick("n_inner", 32),
                                          _rng(cfg.seed, n, 32), m_fine=m_fine, quad_order=cfg.quad_order)
        flagged = any(issubclass(w.category, InnerBiasWarning) for w in caught)
        shift = est.inner_shift if est.inner_shift is not None else float("nan")
        return [Row("tv-rate", n, "tv_conditional", est.value, est.std_error, cfg.seed, t.ms),
                Row("tv-rate", n, "tv_conditional:inner_shift", shift, 0.0, cfg.seed, 0.0),
                Row("tv-rate", n, "tv_conditional:inner_bias_warning", float(flagged), 0.0, cfg.seed, 0.0)]
    doubled = which == "upper-double"
    with _Timer() as t:
        est = estimate_tv_upper(bc, F, n, cfg.pick("n_outer", 50_000), _rng(cfg.seed, n, 31 if doubled else 30),
                                m_fine=2 * m_fine if doubled else m_fine, quad_order=cfg.quad_order)
    stat = "tv_upper[m_fine*2]" if doubled else "tv_upper"
    return [Row("tv-rate", n, stat, est.value, est.std_error, cfg.seed, t.ms)]


def run_tv_rate(cfg: ExperimentConfig, jobs=1) -> ResultTable:
    ns = cfg.n_list((4, 8, 16, 32))
    if len(ns) < 3:
        raise ValidationError("tv-rate needs at least three values of n")
    kinds = ["upper"]
    if cfg.check_m_fine:
        kinds.append("upper-double")
    if cfg.conditional:
        kinds.append("conditional")
    table = ResultTable(_run_tasks(_tv_task, [(cfg, n, k) for n in ns for k in kinds], jobs))
    values = [table.get("tv_upper", n).value for n in ns]
    errors = [table.get("tv_upper", n).stderr for n in ns]
    fit = fit_loglog_slope(ns, values, errors)
    nan = float("nan")
    table.add("tv-rate", 0, "slope", fit.slope if fit else nan, fit.std_error if fit else nan, cfg.seed)
    table.add("tv-rate", 0, "slope_ci_low", fit.ci_low if fit else nan, 0.0, cfg.seed)
    table.add("tv-rate", 0, "slope_ci_high", fit.ci_high if fit else nan, 0.0, cfg.seed)
    table.add("tv-rate", 0, "slope_defined", 1.0 if fit else 0.0, 0.0, cfg.seed)
    return table.sorted()


RUNNERS = {
    "exactness": run_exactness_suite,
    "linear-law": run_linear_law,
    "ou": run_ou_example,
    "bridge": run_conditioned_diffusion_example,
    "tv-rate": run_tv_rate,
}


def run(cfg: ExperimentConfig, jobs=1) -> ResultTable:
    return RUNNERS[cfg.experiment](cfg, jobs)
