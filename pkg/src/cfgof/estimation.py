"""Profile-likelihood estimation of the transformation parameter.

For a candidate ``theta`` the mean and scale are profiled out with the
smoother, the error density with a Gaussian kernel estimate of the
residuals, and the log-likelihood of the responses is

    L(theta) = sum_j log f_eps(eps_j) - log sigma(X_j) + log T'_theta(Y_j).

Each residual's density is estimated without its own kernel bump (a
leave-in estimate rewards parameter values that isolate observations).
The maximizer is located on a uniform grid and then refined by golden
section search inside the winning cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import smoothing, transform
from .errors import EstimationError, InvalidInputError
from .transform import TransformFamily

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_LOG_DENSITY_FLOOR = math.log(1e-300)


@dataclass(frozen=True)
class ProfileConfig:
    theta_lo: float = -2.0
    theta_hi: float = 4.0
    grid_points: int = 61
    refine_tol: float = 1e-4
    kde_bandwidth: float | None = None  # None selects silverman_bandwidth
    kde_leave_one_out: bool = True

    def __post_init__(self):
        if not self.theta_lo < self.theta_hi:
            raise InvalidInputError("theta_lo must be below theta_hi")
        if self.grid_points < 5:
            raise InvalidInputError("grid_points must be at least 5")
        if not self.refine_tol > 0:
            raise InvalidInputError("refine_tol must be positive")
        if self.kde_bandwidth is not None and not self.kde_bandwidth > 0:
            raise InvalidInputError("kde_bandwidth must be positive")

    def grid(self):
        return np.linspace(self.theta_lo, self.theta_hi, self.grid_points)


def silverman_bandwidth(values):
    """``0.9 * min(sd, IQR/1.34) * n**(-1/5)``; falls back to sd if IQR is 0."""
    values = np.asarray(values, dtype=float)
    n = values.size
    sd = float(np.std(values, ddof=1)) if n > 1 else 0.0
    q75, q25 = np.percentile(values, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    if not spread > 0:
        spread = 1.0
    return 0.9 * spread * n ** (-0.2)


def residual_density(residuals, g):
    """Gaussian kernel density estimate of the errors, as a callable."""
    if not g > 0:
        raise InvalidInputError("density bandwidth must be positive")
    centers = np.asarray(residuals, dtype=float).reshape(-1)
    n = centers.size

    def density(u):
        u_arr = np.asarray(u, dtype=float)
        z = (u_arr.reshape(-1, 1) - centers[None, :]) / g
        vals = np.exp(-0.5 * z * z).sum(axis=1) / (n * g * _SQRT_2PI)
        return float(vals[0]) if u_arr.ndim == 0 else vals.reshape(u_arr.shape)

    return density


def _log_kde_at_centers(resid, g, leave_one_out):
    z = (resid[:, None] - resid[None, :]) / g
    k = np.exp(-0.5 * z * z)
    n = resid.size
    if leave_one_out and n > 1:
        np.fill_diagonal(k, 0.0)
        n -= 1
    dens = k.sum(axis=1) / (n * g * _SQRT_2PI)
    with np.errstate(divide="ignore"):
        return np.maximum(np.log(dens), _LOG_DENSITY_FLOOR)


class ProfileObjective:
    """``theta -> L(theta)`` for one sample, caching the smoothing weights."""

    def __init__(self, sample, smoother=None, config=None,
                 family=TransformFamily.YEO_JOHNSON, weights=None):
        self.sample = sample
        self.smoother = smoother or smoothing.SmootherConfig()
        self.config = config or ProfileConfig()
        self.family = TransformFamily(family)
        if weights is None:
            weights = smoothing.smoothing_weights(sample.x, self.smoother, y=sample.y)
        self.weights = weights
        self.evaluations = 0

    def fitted(self, theta):
        return smoothing.fit(self.sample, theta, self.smoother, self.family, self.weights)

    def __call__(self, theta):
        self.evaluations += 1
        fm = self.fitted(theta)
        g = self.config.kde_bandwidth or silverman_bandwidth(fm.residuals)
        value = (
            _log_kde_at_centers(fm.residuals, g, self.config.kde_leave_one_out).sum()
            - np.log(fm.sigma_hat).sum()
            + transform.log_d_dy(self.family, theta, self.sample.y).sum()
        )
        return float(value)


def profile_loglik(sample, theta, smoother=None, config=None,
                   family=TransformFamily.YEO_JOHNSON):
    """Profile log-likelihood of ``theta``."""
    return ProfileObjective(sample, smoother, config, family)(theta)


@dataclass(frozen=True)
class ProfileResult:
    theta: float
    loglik: float
    grid: np.ndarray
    grid_loglik: np.ndarray
    evaluations: int


def golden_section_max(f, lo, hi, tol):
    """Maximize a unimodal ``f`` on ``[lo, hi]``; returns ``(x, f(x))``."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def profile_search(sample, smoother=None, config=None,
                   family=TransformFamily.YEO_JOHNSON, weights=None):
    """Grid search plus golden-section refinement of ``L(theta)``."""
    if TransformFamily(family) is TransformFamily.BOX_COX and np.any(sample.y <= 0):
        raise InvalidInputError("Box-Cox needs strictly positive responses")
    objective = ProfileObjective(sample, smoother, config, family, weights)
    config = objective.config
    grid = config.grid()
    values = np.full(grid.shape, -np.inf)
    for i, theta in enumerate(grid):
        try:
            v = objective(theta)
        except (InvalidInputError, FloatingPointError):
            continue
        if math.isfinite(v):
            values[i] = v
    if not np.any(np.isfinite(values)):
        raise EstimationError("profile likelihood is not finite anywhere on the grid")

    k = int(np.argmax(values))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid.size - 1)]

    def safe(theta):
        try:
            v = objective(theta)
        except (InvalidInputError, FloatingPointError):
            return -math.inf
        return v if math.isfinite(v) else -math.inf

    theta, loglik = golden_section_max(safe, lo, hi, config.refine_tol)
    if loglik < values[k]:
        theta, loglik = float(grid[k]), float(values[k])
    return ProfileResult(float(theta), float(loglik), grid, values, objective.evaluations)


def estimate_theta(sample, smoother=None, config=None,
                   family=TransformFamily.YEO_JOHNSON, weights=None):
    """Profile-likelihood estimate of the transformation parameter."""
    return profile_search(sample, smoother, config, family, weights).theta
