"""Data-generating processes for the heteroskedastic transformation model.

Samples follow

    T_0(Y) = m(X) + sigma(X) eps,    m(x) = 1.5 + exp(x),  sigma(x) = x,

with the Yeo-Johnson transform at ``theta = 0``.  The error law switches
at ``x = 0.5``; every branch is standardized to mean 0 and variance 1, so
the null of independence holds only for the degenerate parameter values
(A/D: ``eta = 0, nu = inf``; B: ``nu = inf``; C: ``kappa = 1``).
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gammaln

from . import transform
from .errors import InvalidInputError, StudyAborted
from .smoothing import Sample
from .transform import TransformFamily

THETA0 = 0.0


def m_true(x):
    return 1.5 + np.exp(x)


def sigma_true(x):
    return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class ErrorModel:
    """One of the error laws A-D; irrelevant parameters are ignored."""

    variant: str = "A"
    eta: float = 0.0
    nu: float = math.inf
    kappa: float = 1.0

    def __post_init__(self):
        variant = str(self.variant).upper()
        object.__setattr__(self, "variant", variant)
        if variant not in "ABCD" or len(variant) != 1:
            raise InvalidInputError(f"unknown model {self.variant!r}")
        if variant in "AD" and not self.nu > 2:
            raise InvalidInputError("skew-t errors need nu > 2 for a finite variance")
        if variant == "B" and not self.nu >= 1:
            raise InvalidInputError("chi-square errors need nu >= 1")
        if variant == "C" and not self.kappa > 0:
            raise InvalidInputError("kappa must be positive")

    @property
    def is_null(self):
        if self.variant in "AD":
            return self.eta == 0 and math.isinf(self.nu)
        if self.variant == "B":
            return math.isinf(self.nu)
        return self.kappa == 1

    def params(self):
        """Short parameter label, e.g. ``eta=0;nu=inf``."""
        if self.variant in "AD":
            return f"eta={_fmt(self.eta)};nu={_fmt(self.nu)}"
        if self.variant == "B":
            return f"nu={_fmt(self.nu)}"
        return f"kappa={_fmt(self.kappa)}"


def _fmt(value):
    if math.isinf(value):
        return "inf"
    return f"{value:g}"


def skew_t_sample(eta, nu, rng, size=None):
    """Draw from the skew-t law ``ST(0, 1, eta, nu)``.

    Skew-normal numerator ``delta |U0| + sqrt(1 - delta^2) U1`` with
    ``delta = eta / sqrt(1 + eta^2)``, divided by ``sqrt(V / nu)`` for
    ``V ~ chi2(nu)`` when ``nu`` is finite.
    """
    delta = eta / math.sqrt(1.0 + eta * eta)
    u0 = np.abs(rng.standard_normal(size))
    u1 = rng.standard_normal(size)
    z = delta * u0 + math.sqrt(1.0 - delta * delta) * u1
    if math.isinf(nu):
        return z
    v = rng.chisquare(nu, size)
    return z / np.sqrt(v / nu)


def skew_t_moments(eta, nu):
    """Mean and variance of ``ST(0, 1, eta, nu)``."""
    delta = eta / math.sqrt(1.0 + eta * eta)
    if math.isinf(nu):
        b = math.sqrt(2.0 / math.pi)
        second = 1.0
    else:
        if not nu > 2:
            raise InvalidInputError("variance of the skew-t law needs nu > 2")
        b = math.sqrt(nu / math.pi) * math.exp(gammaln((nu - 1.0) / 2.0) - gammaln(nu / 2.0))
        second = nu / (nu - 2.0)
    mean = b * delta
    return mean, second - mean * mean


def asym_laplace_sample(kappa, rng, size=None):
    """Draw from ``AL(0, 1, kappa)`` as ``E1/kappa - kappa*E2``."""
    e1 = rng.standard_exponential(size)
    e2 = rng.standard_exponential(size)
    return e1 / kappa - kappa * e2


def asym_laplace_moments(kappa):
    return (1.0 - kappa * kappa) / kappa, (1.0 + kappa**4) / (kappa * kappa)


def _standard_skew_t(eta, nu, rng, size):
    mean, var = skew_t_moments(eta, nu)
    return (skew_t_sample(eta, nu, rng, size) - mean) / math.sqrt(var)


def _standard_chi2(nu, rng, size):
    if math.isinf(nu):
        return rng.standard_normal(size)
    return (rng.chisquare(nu, size) - nu) / math.sqrt(2.0 * nu)


def _standard_al(kappa, rng, size):
    mean, var = asym_laplace_moments(kappa)
    return (asym_laplace_sample(kappa, rng, size) - mean) / math.sqrt(var)


def gen_error(model, x, rng):
    """Errors given covariates ``x``; every branch has mean 0, variance 1."""
    x = np.asarray(x, dtype=float)
    low = x <= 0.5
    k = int(low.sum())
    out = np.empty(x.shape)
    if model.variant in "AD":
        out[low] = _standard_skew_t(model.eta, model.nu, rng, k)
        out[~low] = rng.standard_normal(x.size - k)
    elif model.variant == "B":
        out[low] = _standard_chi2(model.nu, rng, k)
        out[~low] = rng.standard_normal(x.size - k)
    else:
        out[low] = _standard_al(model.kappa, rng, k)
        out[~low] = _standard_al(1.0, rng, x.size - k)
    return out


def gen_covariates(model, n, rng):
    if model.variant == "D":
        return rng.integers(1, 11, size=n) / 10.0
    return rng.uniform(0.0, 1.0, size=n)


def gen_sample(model, n, rng, return_errors=False):
    """Draw ``n`` observations from the simulation model."""
    if n < 1:
        raise InvalidInputError("n must be positive")
    x = gen_covariates(model, n, rng)
    eps = gen_error(model, x, rng)
    z = m_true(x) + sigma_true(x) * eps
    lo, hi = transform.transform_range(TransformFamily.YEO_JOHNSON, THETA0)
    assert lo == -math.inf and hi == math.inf
    y = transform.inverse(TransformFamily.YEO_JOHNSON, THETA0, z)
    sample = Sample(y, x)
    if return_errors:
        return sample, eps
    return sample


# ---------------------------------------------------------------------------
# Warp-speed Monte Carlo study

STUDY_COLUMNS = (
    "model", "params", "n", "test", "statistic_family", "gamma", "c", "alpha",
    "rejection_rate", "critical_value", "M", "seed", "failures",
)


@dataclass(frozen=True)
class StudyConfig:
    """One table cell group: a model, a sample size and a list of weights.

    ``weights`` holds :class:`~cfgof.statistics.WeightSpec` entries for the
    independence test and :class:`~cfgof.statistics.UnivariateWeight`
    entries for the normality and symmetry tests.  Each Monte Carlo sample
    gets one bootstrap sample shared by all weights.  ``full_B`` switches
    to a full bootstrap with ``full_B`` draws per sample (slow; for spot
    checks).
    """

    model: ErrorModel
    n: int
    weights: tuple
    kind: str = "independence"
    M: int = 1000
    alpha: float = 0.05
    seed: int = 0
    spec: object = None  # resampling.ModelSpec; None is the default fit
    bootstrap: object = None  # resampling.BootstrapConfig template
    full_B: int | None = None
    max_failure_fraction: float = 0.01

    def __post_init__(self):
        from . import resampling

        kind = resampling.TestKind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "weights", tuple(self.weights))
        if self.M < 100:
            raise InvalidInputError("M must be at least 100 for a stable quantile")
        if self.n < 50:
            raise InvalidInputError("n must be at least 50")
        if not 0.0 < self.alpha <= 1.0:
            raise InvalidInputError("alpha must lie in (0, 1]")
        if not self.weights:
            raise InvalidInputError("at least one weight is required")
        if self.spec is None:
            object.__setattr__(self, "spec", resampling.ModelSpec())
        if self.bootstrap is None:
            object.__setattr__(self, "bootstrap", resampling.BootstrapConfig(
                scheme=resampling.DEFAULT_SCHEME[kind], seed=self.seed))
        if self.full_B is not None and self.full_B < 1:
            raise InvalidInputError("full_B must be positive")


@dataclass(frozen=True)
class StudyResult:
    rows: list
    statistics: np.ndarray  # (M, K) statistics on the Monte Carlo samples
    replicates: np.ndarray  # (M, K) warp-speed bootstrap statistics
    failures: int
    clip_events: int

    def rejection_rates(self):
        return np.array([row["rejection_rate"] for row in self.rows])


def _weight_columns(weight):
    kernel = getattr(weight, "residual", None)
    if kernel is not None:
        return kernel.family.value, kernel.gamma, kernel.c
    return weight.family.value, "", weight.c


def _study_replication(study, m):
    """Monte Carlo replication ``m``; returns ``(stats, boot, clips, failures)``."""
    from . import resampling

    failures = 0
    for attempt in range(study.bootstrap.max_redraws):
        rng = np.random.default_rng([study.seed, m, attempt])
        sample = gen_sample(study.model, study.n, rng)
        try:
            with np.errstate(over="raise", invalid="raise", divide="raise"):
                ctx, fit = resampling._prepare(sample, study.spec, study.bootstrap,
                                               study.kind, study.weights)
                stats = np.array([resampling.statistic_function(study.kind, w)(fit, sample.x)
                                  for w in study.weights])
                if study.full_B is None:
                    boot, clips = resampling._one_draw(ctx, rng)
                    return stats, boot, clips, failures
        except resampling._REPLICATION_ERRORS:
            failures += 1
            continue
        # Full bootstrap: per-sample critical values, replication seeds nested.
        ctx = replace(ctx, config=replace(ctx.config, seed=int(rng.integers(2**63))))
        draws = [resampling.replicate(ctx, b) for b in range(study.full_B)]
        boot = np.array([d[0] for d in draws])
        return (stats, boot, sum(d[1] for d in draws),
                failures + sum(d[2] for d in draws))
    raise StudyAborted(f"replication {m} failed {failures} times in a row",
                       {"replication": m, "failures": failures})


def _study_star(args):
    return _study_replication(*args)


def warp_speed_study(study):
    """Rejection rates of one study; one row per weight."""
    from . import resampling

    jobs = [(study, m) for m in range(study.M)]
    workers = resampling.worker_count()
    if workers == 1:
        results = [_study_replication(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_study_star, jobs,
                                    chunksize=max(1, len(jobs) // (4 * workers))))

    failures = sum(r[3] for r in results)
    if failures > study.max_failure_fraction * study.M:
        raise StudyAborted(
            f"{failures} failed replications exceed {study.max_failure_fraction:.0%} of M",
            {"failures": failures, "M": study.M, "model": study.model.variant,
             "params": study.model.params(), "n": study.n})
    stats = np.array([r[0] for r in results])
    clips = int(sum(r[2] for r in results))

    rows = []
    if study.full_B is None:
        boot = np.array([r[1] for r in results])
        crit = np.array([resampling.critical_value(boot[:, k], study.alpha)
                         for k in range(stats.shape[1])])
        reject = stats > crit[None, :]
        crit_report = crit
    else:
        boot = np.array([r[1] for r in results])  # (M, B, K)
        crit = np.array([[resampling.critical_value(boot[m, :, k], study.alpha)
                          for k in range(stats.shape[1])] for m in range(study.M)])
        reject = stats > crit
        crit_report = crit.mean(axis=0)
    for k, weight in enumerate(study.weights):
        family, gamma, c = _weight_columns(weight)
        rows.append({
            "model": study.model.variant,
            "params": study.model.params(),
            "n": study.n,
            "test": study.kind.value,
            "statistic_family": family,
            "gamma": gamma,
            "c": c,
            "alpha": study.alpha,
            "rejection_rate": 100.0 * float(reject[:, k].mean()),
            "critical_value": float(crit_report[k]),
            "M": study.M,
            "seed": study.seed,
            "failures": failures,
        })
    return StudyResult(rows, stats, boot, failures, clips)


def write_study_csv(rows, stream):
    writer = csv.DictWriter(stream, fieldnames=STUDY_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        out = dict(row)
        out["rejection_rate"] = f"{row['rejection_rate']:.1f}"
        out["critical_value"] = f"{row['critical_value']:.6g}"
        writer.writerow(out)


def format_study_table(rows):
    """Aligned plain-text table: one line per model cell, one column per weight."""
    if not rows:
        return ""
    headers = []
    for row in rows:
        label = f"{row['statistic_family']} c={row['c']:g}"
        if label not in headers:
            headers.append(label)
    cells = {}
    for row in rows:
        key = (row["model"], row["params"], row["n"], row["test"])
        label = f"{row['statistic_family']} c={row['c']:g}"
        cells.setdefault(key, {})[label] = f"{row['rejection_rate']:.1f}"
    head = ["model", "params", "n", "test"] + headers
    body = [[k[0], k[1], str(k[2]), k[3]] + [v.get(h, "") for h in headers]
            for k, v in cells.items()]
    widths = [max(len(r[i]) for r in [head] + body) for i in range(len(head))]
    lines = ["  ".join(s.rjust(w) for s, w in zip(r, widths)) for r in [head] + body]
    return "\n".join(lines) + "\n"
