"""Kernel smoothing of the transformed response.

Estimates of the conditional mean and variance of ``T_theta(Y)`` given
``X``, the companion density estimate of ``X``, rule-of-thumb bandwidths
and the standardized residuals

    eps_j = (T_theta(Y_j) - m(X_j)) / sigma(X_j).

Two smoothers are available.  Nadaraya-Watson is the plain kernel-weighted
average.  Local-linear (the default for fitting) removes the first-order
boundary bias of Nadaraya-Watson, which matters whenever the scale function
is small near the edge of the design; its variance estimate is kept above a
fixed fraction of the Nadaraya-Watson one because local-linear weights can
be negative.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import transform
from .errors import InvalidInputError
from .transform import TransformFamily

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class Kernel(str, enum.Enum):
    GAUSSIAN = "gaussian"
    EPANECHNIKOV = "epanechnikov"


class Method(str, enum.Enum):
    NADARAYA_WATSON = "nadaraya-watson"
    LOCAL_LINEAR = "local-linear"


@dataclass(frozen=True)
class Sample:
    """Paired observations ``(y_j, x_j)``; ``x`` is stored as ``(n, p)``."""

    y: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2:
            raise InvalidInputError("covariates must be a vector or an (n, p) matrix")
        if x.shape[0] != y.shape[0]:
            raise InvalidInputError(
                f"response has {y.shape[0]} rows but covariates have {x.shape[0]}"
            )
        if y.shape[0] < 2 or x.shape[1] < 1:
            raise InvalidInputError("need n >= 2 observations and p >= 1 covariates")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise InvalidInputError("sample contains non-finite values")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def p(self):
        return self.x.shape[1]

    def take(self, rows):
        return Sample(self.y[rows], self.x[rows])


@dataclass(frozen=True)
class SmootherConfig:
    kernel: Kernel = Kernel.GAUSSIAN
    bandwidth: float | None = None  # None selects select_bandwidth
    density_floor: float = 1e-10
    variance_floor_factor: float = 1e-8
    leave_one_out: bool = False
    homoskedastic: bool = False
    method: Method = Method.LOCAL_LINEAR
    variance_nw_fraction: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "kernel", Kernel(self.kernel))
        object.__setattr__(self, "method", Method(self.method))
        if not 0 <= self.variance_nw_fraction <= 1:
            raise InvalidInputError("variance_nw_fraction must lie in [0, 1]")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise InvalidInputError("bandwidth must be positive")
        if not (self.density_floor > 0 and self.variance_floor_factor > 0):
            raise InvalidInputError("floors must be positive")


@dataclass(frozen=True)
class FittedModel:
    family: TransformFamily
    theta_hat: float
    m_hat: np.ndarray
    sigma_hat: np.ndarray
    residuals: np.ndarray
    bandwidth_used: float
    clip_count: int = 0
    floored_density: int = 0
    leave_one_out: bool = False
    transformed: np.ndarray = field(default=None, repr=False)


def kernel_values(u, kernel=Kernel.GAUSSIAN):
    """Univariate kernel ``k(u)``."""
    u = np.asarray(u, dtype=float)
    if Kernel(kernel) is Kernel.GAUSSIAN:
        return np.exp(-0.5 * u * u) / _SQRT_2PI
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


def product_kernel(diffs, h, kernel=Kernel.GAUSSIAN):
    """``K((x0 - X_v)/h)`` for a stack of difference vectors ``(..., p)``."""
    u = np.asarray(diffs, dtype=float) / h
    if Kernel(kernel) is Kernel.GAUSSIAN:
        # product of Gaussians = Gaussian of the squared norm
        p = u.shape[-1]
        return np.exp(-0.5 * np.sum(u * u, axis=-1)) / _SQRT_2PI**p
    return np.prod(kernel_values(u, kernel), axis=-1)


def _as_matrix(x):
    x = np.asarray(x, dtype=float)
    return x.reshape(-1, 1) if x.ndim == 1 else x


def _config(config):
    return SmootherConfig() if config is None else config


def density_at(x, h, x0, config=None):
    """Kernel density estimate ``f(x0) = sum_v K((x0 - X_v)/h) / (n h^p)``."""
    config = _config(config)
    x = _as_matrix(x)
    n, p = x.shape
    x0 = np.asarray(x0, dtype=float).reshape(p)
    k = product_kernel(x0 - x, h, config.kernel)
    return float(np.sum(k) / (n * h**p))


def bandwidth_auto(x):
    """Rule-of-thumb bandwidth ``1.06 * s * n**(-1/(4+p))``.

    ``s`` is the geometric mean of the per-coordinate standard deviations;
    coordinates without spread are ignored.
    """
    x = _as_matrix(x)
    n, p = x.shape
    if n < 2:
        raise InvalidInputError("bandwidth selection needs at least two observations")
    sd = np.std(x, axis=0, ddof=1)
    sd = sd[sd > 0]
    if sd.size == 0:
        raise InvalidInputError("covariates have zero spread in every coordinate")
    s = float(np.exp(np.mean(np.log(sd))))
    return 1.06 * s * n ** (-1.0 / (4.0 + p))


def bandwidth_fan_gijbels(x, y):
    """Fan-Gijbels rule-of-thumb bandwidth for local-linear regression.

    A global quartic fit supplies the residual variance and the second
    derivative in ``h = C [s2 * range(x) / sum m''(x_i)^2]^(1/5)``, with
    ``C = (1 / (2 sqrt(pi)))^(1/5)`` for the Gaussian kernel.  Univariate
    covariates only.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.size < 6:
        raise InvalidInputError("rule-of-thumb bandwidth needs at least six observations")
    center, scale = x.mean(), x.std()
    if not scale > 0:
        raise InvalidInputError("covariate has zero spread")
    u = (x - center) / scale
    design = np.vander(u, 5, increasing=True)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    s2 = float(resid @ resid) / (x.size - 5)
    second = (2.0 * coef[2] + 6.0 * coef[3] * u + 12.0 * coef[4] * u * u) / scale**2
    curvature = float(np.sum(second * second))
    const = (1.0 / (2.0 * math.sqrt(math.pi))) ** 0.2
    return const * (s2 * (x.max() - x.min()) / curvature) ** 0.2


def select_bandwidth(x, y=None, config=None):
    """Bandwidth used by :func:`fit` when none is given explicitly.

    Nadaraya-Watson, multivariate covariates or a missing response use
    :func:`bandwidth_auto`.  Otherwise the Fan-Gijbels rule on the response
    as given is used, kept within ``[0.2, 1]`` times :func:`bandwidth_auto`
    since the quartic pilot fit is not robust to extreme responses.
    """
    config = _config(config)
    if config.bandwidth is not None:
        return float(config.bandwidth)
    x = _as_matrix(x)
    ref = bandwidth_auto(x)
    if config.method is Method.NADARAYA_WATSON or x.shape[1] > 1 or y is None:
        return ref
    try:
        h = bandwidth_fan_gijbels(x[:, 0], y)
    except (InvalidInputError, np.linalg.LinAlgError):
        return ref
    if not math.isfinite(h):
        return ref
    return float(min(max(h, 0.2 * ref), ref))


@dataclass(frozen=True)
class SmoothingWeights:
    """Linear-smoother weights of the data points evaluated at themselves.

    ``matrix`` gives the mean fit ``m = matrix @ T``; ``nw`` is the
    Nadaraya-Watson matrix (identical to ``matrix`` for that method).
    """

    matrix: np.ndarray
    nw: np.ndarray
    bandwidth: float
    floored_density: int
    method: Method = Method.NADARAYA_WATSON


def _local_linear_rows(k, x):
    """Local-linear weights ``e1' (Z'KZ)^-1 Z'K`` for each evaluation row."""
    n, p = x.shape
    diffs = x[None, :, :] - x[:, None, :]  # (eval, data, p)
    z = np.concatenate([np.ones((n, n, 1)), diffs], axis=2)
    kz = k[:, :, None] * z
    gram = np.einsum("ivk,ivl->ikl", kz, z)
    rhs = np.zeros((n, p + 1))
    rhs[:, 0] = 1.0
    cond = np.linalg.cond(gram)
    ok = np.isfinite(cond) & (cond < 1e12)
    coef = np.zeros((n, p + 1))
    if np.any(ok):
        coef[ok] = np.linalg.solve(gram[ok], rhs[ok][:, :, None])[:, :, 0]
    w = np.einsum("ik,ivk->iv", coef, kz)
    return w, ok


def smoothing_weights(x, config=None, bandwidth=None, y=None):
    """Weights ``w[j, v]`` for evaluating the smoother at each ``X_j``.

    These only depend on the covariates (and on ``y`` through the automatic
    bandwidth), so one set serves every value of the transformation
    parameter.
    """
    config = _config(config)
    x = _as_matrix(x)
    n, p = x.shape
    h = bandwidth or select_bandwidth(x, y, config)
    k = product_kernel(x[:, None, :] - x[None, :, :], h, config.kernel)
    if config.leave_one_out:
        np.fill_diagonal(k, 0.0)
        denom_n = n - 1
    else:
        denom_n = n
    dens = k.sum(axis=1) / (denom_n * h**p)
    floored = dens < config.density_floor
    dens = np.maximum(dens, config.density_floor)
    nw = k / (denom_n * h**p * dens)[:, None]
    if config.method is Method.NADARAYA_WATSON:
        return SmoothingWeights(nw, nw, float(h), int(floored.sum()), config.method)
    ll, ok = _local_linear_rows(k, x)
    # rows with an ill-conditioned local design fall back to Nadaraya-Watson
    ll[~ok] = nw[~ok]
    return SmoothingWeights(ll, nw, float(h), int(floored.sum()), config.method)


def _variance_floor(values, config):
    spread = float(np.var(values))
    return config.variance_floor_factor * max(spread, np.finfo(float).tiny)


def regress_mean(sample, theta, h, x0, config=None, family=TransformFamily.YEO_JOHNSON):
    """Nadaraya-Watson estimate of ``E(T_theta(Y) | X = x0)``."""
    config = _config(config)
    k = product_kernel(np.asarray(x0, dtype=float).reshape(sample.p) - sample.x, h, config.kernel)
    dens = max(np.sum(k) / (sample.n * h**sample.p), config.density_floor)
    ty = transform.forward(family, theta, sample.y)
    return float(np.sum(k * ty) / (sample.n * h**sample.p * dens))


def regress_var(sample, theta, m_hat_at_data, h, x0, config=None,
                family=TransformFamily.YEO_JOHNSON):
    """Nadaraya-Watson estimate of ``Var(T_theta(Y) | X = x0)``, floored."""
    config = _config(config)
    k = product_kernel(np.asarray(x0, dtype=float).reshape(sample.p) - sample.x, h, config.kernel)
    dens = max(np.sum(k) / (sample.n * h**sample.p), config.density_floor)
    ty = transform.forward(family, theta, sample.y)
    dev2 = (ty - np.asarray(m_hat_at_data, dtype=float)) ** 2
    raw = float(np.sum(k * dev2) / (sample.n * h**sample.p * dens))
    return max(raw, _variance_floor(ty, config))


def fit(sample, theta, config=None, family=TransformFamily.YEO_JOHNSON, weights=None):
    """Fit mean and scale at every data point and form the residuals.

    ``weights`` may carry a precomputed :class:`SmoothingWeights` for
    ``sample.x``; it is recomputed otherwise.
    """
    config = _config(config)
    if weights is None:
        weights = smoothing_weights(sample.x, config, y=sample.y)
    ty = transform.forward(family, theta, sample.y)
    return fit_transformed(ty, theta, weights, config, family)


def fit_transformed(ty, theta, weights, config, family):
    """Residual fit given already transformed responses ``ty``."""
    w = weights.matrix
    m = w @ ty
    floor = _variance_floor(ty, config)
    dev2 = (ty - m) ** 2
    if config.homoskedastic:
        var = np.full_like(ty, max(float(np.mean(dev2)), floor))
    elif weights.method is Method.NADARAYA_WATSON:
        var = np.maximum(w @ dev2, floor)
    else:
        lower = config.variance_nw_fraction * (weights.nw @ dev2)
        var = np.maximum(np.maximum(w @ dev2, lower), floor)
    sigma = np.sqrt(var)
    resid = (ty - m) / sigma
    return FittedModel(
        family=TransformFamily(family),
        theta_hat=float(theta),
        m_hat=m,
        sigma_hat=sigma,
        residuals=resid,
        bandwidth_used=weights.bandwidth,
        floored_density=weights.floored_density,
        leave_one_out=config.leave_one_out,
        transformed=ty,
    )
