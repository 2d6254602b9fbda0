"""Bootstrap calibration of the characteristic-function tests.

One replication of the smooth residual bootstrap:

1. draw covariate rows ``X*`` with replacement from the data;
2. perturb the (standardized) residuals, ``eps*_j = a_n xi_j + e_j`` with
   ``xi`` standard normal; the rows of step 1 are drawn independently of
   ``j``, so ``eps*`` is independent of ``X*``;
3. map back to responses ``Y* = T^-1(m(X*) + sigma(X*) eps*)`` under the
   fitted transformation;
4. refit mean and scale; the transformation parameter is estimated afresh
   for the normality and symmetry tests and kept at its fitted value for
   the independence test (``reestimate_theta`` overrides);
5. recompute the statistic on the new residuals.

The normality test replaces step 2 by standard normal errors and the
symmetry test by a wild bootstrap ``eps* = U e`` with Rademacher ``U``.
Replication ``b`` draws from its own stream ``SeedSequence([seed, b, attempt])``
so results do not depend on execution order or worker count.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import estimation, smoothing, statistics, transform
from .errors import (
    BootstrapDegeneracyError,
    EstimationError,
    InvalidInputError,
)
from .transform import TransformFamily

#: Environment variable holding the number of worker processes.
WORKERS_ENV = "CFGOF_WORKERS"
#: Smallest sample size accepted by the tests.
MIN_N = 10

_REPLICATION_ERRORS = (
    EstimationError,
    BootstrapDegeneracyError,
    InvalidInputError,
    FloatingPointError,
    np.linalg.LinAlgError,
)


class Scheme(str, enum.Enum):
    SMOOTH_RESIDUAL = "smooth"
    NORMAL_ERRORS = "normal"
    WILD = "wild"


class TestKind(str, enum.Enum):
    INDEPENDENCE = "independence"
    NORMALITY = "normality"
    SYMMETRY = "symmetry"

    __test__ = False  # not a pytest class


DEFAULT_SCHEME = {
    TestKind.INDEPENDENCE: Scheme.SMOOTH_RESIDUAL,
    TestKind.NORMALITY: Scheme.NORMAL_ERRORS,
    TestKind.SYMMETRY: Scheme.WILD,
}


class ClipMode(str, enum.Enum):
    CLAMP = "clamp"
    RESAMPLE = "resample"


@dataclass(frozen=True)
class ClipPolicy:
    """What to do with inverse-transform arguments outside the range.

    ``CLAMP`` moves them just inside the boundary; ``RESAMPLE`` redraws
    the offending errors up to ``max_tries`` times.
    """

    mode: ClipMode = ClipMode.CLAMP
    max_tries: int = 10

    def __post_init__(self):
        object.__setattr__(self, "mode", ClipMode(self.mode))
        if self.max_tries < 1:
            raise InvalidInputError("max_tries must be at least 1")


@dataclass(frozen=True)
class BootstrapConfig:
    scheme: Scheme = Scheme.SMOOTH_RESIDUAL
    B: int = 200
    alpha: float = 0.05
    a_n_scale: float = 0.5
    a_n_exponent: float = 0.25
    seed: int = 0
    clip_policy: ClipPolicy = field(default_factory=ClipPolicy)
    standardize_residuals: bool = True
    reselect_bandwidth: bool = False
    reestimate_theta: bool | None = None  # None: per test kind
    max_failures: int | None = None  # None allows max(10, B // 10)
    max_redraws: int = 20

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if int(self.B) != self.B or self.B < 1:
            raise InvalidInputError("B must be a positive integer")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidInputError("alpha must lie in (0, 1)")
        if not self.a_n_scale >= 0:
            raise InvalidInputError("a_n scale must be non-negative")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidInputError("seed must be a 64-bit unsigned integer")

    def a_n(self, n):
        return self.a_n_scale * n ** (-self.a_n_exponent)

    @property
    def failure_cap(self):
        if self.max_failures is not None:
            return self.max_failures
        return max(10, self.B // 10)


@dataclass(frozen=True)
class TestResult:
    statistic: float
    critical_value: float
    p_value: float
    B_used: int
    theta_hat: float | None
    clip_events: int
    refit_failures: int
    alpha: float
    replicates: np.ndarray = field(repr=False)

    __test__ = False

    @property
    def reject(self):
        return self.statistic > self.critical_value


@dataclass(frozen=True)
class ModelSpec:
    """How the model is fitted: transformation family, optional fixed
    parameter (skips estimation), smoother and profile settings.

    With ``residuals_leave_one_out`` the residuals that enter the test
    statistics come from leave-one-out fits; the parameter is still
    estimated with ``smoother`` as given.  In-sample fits pull each residual
    toward zero by its own weight, most where the scale is small, which
    the bootstrap does not reproduce.
    """

    family: TransformFamily = TransformFamily.YEO_JOHNSON
    theta: float | None = None
    smoother: smoothing.SmootherConfig = field(default_factory=smoothing.SmootherConfig)
    profile: estimation.ProfileConfig = field(default_factory=estimation.ProfileConfig)
    residuals_leave_one_out: bool = True

    def __post_init__(self):
        object.__setattr__(self, "family", TransformFamily(self.family))

    @classmethod
    def identity(cls, smoother=None):
        """No transformation: Yeo-Johnson at parameter 1 is the identity."""
        return cls(TransformFamily.YEO_JOHNSON, 1.0,
                   smoother or smoothing.SmootherConfig())

    def fit(self, sample, smoother=None):
        smoother = smoother or self.smoother
        weights = smoothing.smoothing_weights(sample.x, smoother, y=sample.y)
        if self.theta is None:
            theta = estimation.estimate_theta(sample, smoother, self.profile,
                                              self.family, weights)
        else:
            theta = self.theta
        if self.residuals_leave_one_out and not smoother.leave_one_out:
            # Same bandwidth, own observation excluded from its fit.
            smoother = replace(smoother, leave_one_out=True, bandwidth=weights.bandwidth)
            weights = smoothing.smoothing_weights(sample.x, smoother, y=sample.y)
        return smoothing.fit(sample, theta, smoother, self.family, weights)


# ---------------------------------------------------------------------------
# Single-replication building blocks


def standardize(residuals):
    r = np.asarray(residuals, dtype=float)
    sd = float(np.std(r))
    if not sd > 0:
        raise BootstrapDegeneracyError("residuals have zero spread")
    return (r - r.mean()) / sd


def bootstrap_errors(scheme, residuals, a_n, rng):
    """Bootstrap errors for one replication."""
    scheme = Scheme(scheme)
    r = np.asarray(residuals, dtype=float)
    n = r.size
    if scheme is Scheme.NORMAL_ERRORS:
        return rng.standard_normal(n)
    if scheme is Scheme.SMOOTH_RESIDUAL:
        return a_n * rng.standard_normal(n) + r
    signs = rng.integers(0, 2, n) * 2 - 1
    return signs * r[rng.integers(0, n, n)]


def _clamp_margin(bound):
    return 1e-9 * max(1.0, abs(bound))


def bootstrap_responses(fit, rows, errors, family, clip_policy=None, redraw=None):
    """Responses ``T^-1(m(X*) + sigma(X*) eps*)``; returns ``(y, clip_events)``.

    ``redraw(idx)`` must supply fresh errors for positions ``idx`` when the
    policy is ``RESAMPLE``.
    """
    clip_policy = clip_policy or ClipPolicy()
    rows = np.asarray(rows)
    m = fit.m_hat[rows]
    s = fit.sigma_hat[rows]
    errors = np.array(errors, dtype=float)
    lo, hi = transform.transform_range(family, fit.theta_hat)
    z = m + s * errors
    bad = (z <= lo) | (z >= hi)
    clip_events = int(bad.sum())
    if clip_events and clip_policy.mode is ClipMode.CLAMP:
        z = np.clip(z, lo + _clamp_margin(lo) if math.isfinite(lo) else lo,
                    hi - _clamp_margin(hi) if math.isfinite(hi) else hi)
    elif clip_events:
        if redraw is None:
            raise InvalidInputError("resample clip policy needs a redraw function")
        for _ in range(clip_policy.max_tries):
            errors[bad] = redraw(np.flatnonzero(bad))
            z[bad] = m[bad] + s[bad] * errors[bad]
            bad = (z <= lo) | (z >= hi)
            if not bad.any():
                break
        else:
            raise BootstrapDegeneracyError(
                f"{int(bad.sum())} bootstrap responses outside the transformation range")
    return transform.inverse(family, fit.theta_hat, z), clip_events


def p_value(statistic, replicates):
    rep = np.asarray(replicates, dtype=float)
    return (1.0 + np.count_nonzero(rep >= statistic)) / (rep.size + 1.0)


def critical_value(replicates, alpha):
    """Order statistic ``Delta*_(ceil((1-alpha) B))``; 0 when that index is 0."""
    rep = np.sort(np.asarray(replicates, dtype=float))
    k = math.ceil((1.0 - alpha) * rep.size - 1e-9)
    if k <= 0:
        return 0.0
    return float(rep[k - 1])


# ---------------------------------------------------------------------------
# Replication driver


def statistic_function(kind, weight):
    """``(fit, x) -> statistic`` for a test kind and its weight."""
    kind = TestKind(kind)
    if kind is TestKind.INDEPENDENCE:
        return lambda fit, x: statistics.delta_stat(fit.residuals, x, weight)
    if kind is TestKind.NORMALITY:
        return lambda fit, x: statistics.normality_stat(fit.residuals, weight)
    return lambda fit, x: statistics.symmetry_stat(fit.residuals, weight)


@dataclass(frozen=True)
class _Context:
    sample: smoothing.Sample
    fit: smoothing.FittedModel
    spec: ModelSpec
    config: BootstrapConfig
    kind: TestKind
    weights: tuple
    errors_source: np.ndarray


def reestimates_theta(config, kind):
    """Whether replications estimate the transformation parameter again.

    The residual-law tests are sensitive to the skew that estimation noise
    in the parameter puts into the residuals, so the bootstrap has to
    reproduce it; the independence test keeps the fitted value.
    """
    if config.reestimate_theta is not None:
        return config.reestimate_theta
    return TestKind(kind) is not TestKind.INDEPENDENCE


def _prepare(sample, spec, config, kind, weights):
    if sample.n < MIN_N:
        raise InvalidInputError(f"bootstrap tests need n >= {MIN_N}, got {sample.n}")
    if np.ptp(sample.y) == 0:
        raise BootstrapDegeneracyError("response is constant")
    fit = spec.fit(sample)
    source = fit.residuals
    if config.standardize_residuals and config.scheme is not Scheme.NORMAL_ERRORS:
        source = standardize(source)
    if not config.reselect_bandwidth:
        # Reuse the bandwidth chosen on the data for every replication.
        spec = replace(spec, smoother=replace(spec.smoother, bandwidth=fit.bandwidth_used))
    if not reestimates_theta(config, kind):
        spec = replace(spec, theta=fit.theta_hat)
    return _Context(sample, fit, spec, config, TestKind(kind), tuple(weights), source), fit


def _one_draw(ctx, rng):
    n = ctx.sample.n
    a_n = ctx.config.a_n(n)
    rows = rng.integers(0, n, n)
    errors = bootstrap_errors(ctx.config.scheme, ctx.errors_source, a_n, rng)

    def redraw(idx):
        return bootstrap_errors(ctx.config.scheme, ctx.errors_source, a_n, rng)[idx]

    y_star, clips = bootstrap_responses(ctx.fit, rows, errors, ctx.spec.family,
                                        ctx.config.clip_policy, redraw)
    if not np.all(np.isfinite(y_star)):
        raise BootstrapDegeneracyError("non-finite bootstrap responses")
    x_star = ctx.sample.x[rows]
    fit_star = ctx.spec.fit(smoothing.Sample(y_star, x_star))
    stats = [statistic_function(ctx.kind, w)(fit_star, x_star) for w in ctx.weights]
    return np.array(stats), clips


def replicate(ctx, b):
    """Replication ``b``: redraws on failure; returns ``(stats, clips, failures)``."""
    failures = 0
    for attempt in range(ctx.config.max_redraws):
        rng = np.random.default_rng([ctx.config.seed, b, attempt])
        try:
            with np.errstate(over="raise", invalid="raise", divide="raise"):
                stats, clips = _one_draw(ctx, rng)
        except _REPLICATION_ERRORS:
            failures += 1
            continue
        return stats, clips, failures
    raise BootstrapDegeneracyError(
        f"replication {b} failed {failures} times in a row")


def worker_count():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        workers = int(raw)
    except ValueError:
        raise InvalidInputError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, workers)


def _replicate_star(args):
    return replicate(*args)


def run_replications(ctx, indices):
    """Run replications ``indices``; results are in index order."""
    workers = worker_count()
    jobs = [(ctx, b) for b in indices]
    if workers == 1 or len(jobs) < 2:
        return [replicate(ctx, b) for b in indices]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_replicate_star, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def _run(sample, kind, weight, smoother, profile, config, family, theta):
    smoother = smoother or smoothing.SmootherConfig()
    profile = profile or estimation.ProfileConfig()
    if config is None:
        config = BootstrapConfig(scheme=DEFAULT_SCHEME[TestKind(kind)])
    spec = ModelSpec(family, theta, smoother, profile)
    ctx, fit = _prepare(sample, spec, config, kind, [weight])
    statistic = statistic_function(kind, weight)(fit, sample.x)

    results = run_replications(ctx, range(config.B))
    failures = sum(r[2] for r in results)
    if failures > config.failure_cap:
        raise BootstrapDegeneracyError(
            f"{failures} failed bootstrap replications exceed the cap {config.failure_cap}")
    replicates = np.array([r[0][0] for r in results])
    return TestResult(
        statistic=float(statistic),
        critical_value=critical_value(replicates, config.alpha),
        p_value=float(p_value(statistic, replicates)),
        B_used=config.B,
        theta_hat=None if theta is not None else fit.theta_hat,
        clip_events=int(sum(r[1] for r in results)),
        refit_failures=int(failures),
        alpha=config.alpha,
        replicates=replicates,
    )


def run_test(sample, weights, smoother=None, profile=None, config=None, *,
             family=TransformFamily.YEO_JOHNSON, theta=None):
    """Bootstrap test of independence between errors and covariates.

    ``theta`` fixes the transformation parameter instead of estimating it;
    ``theta=1`` with the Yeo-Johnson family fits the untransformed model.
    """
    return _run(sample, TestKind.INDEPENDENCE, weights, smoother, profile, config,
                family, theta)


def run_normality_test(sample, weight, smoother=None, profile=None, config=None, *,
                       family=TransformFamily.YEO_JOHNSON, theta=None):
    """Bootstrap test of standard normal errors."""
    return _run(sample, TestKind.NORMALITY, weight, smoother, profile, config,
                family, theta)


def run_symmetry_test(sample, weight, smoother=None, profile=None, config=None, *,
                      family=TransformFamily.YEO_JOHNSON, theta=None):
    """Wild-bootstrap test of symmetric errors."""
    return _run(sample, TestKind.SYMMETRY, weight, smoother, profile, config,
                family, theta)
