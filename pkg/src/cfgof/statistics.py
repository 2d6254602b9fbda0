"""Characteristic-function test statistics.

The independence statistic is the weighted L2 distance between the joint
empirical characteristic function of ``(eps, X)`` and the product of the
marginals.  With a product weight ``w1(t1) w2(t2)`` whose cosine transforms
are characteristic kernels ``Psi(||.||)`` it reduces to pairwise sums:

    D = 1/n   sum_jk I1_jk I2_jk
      + 1/n^3 sum_jk I1_jk  sum_jk I2_jk
      - 2/n^2 sum_j (sum_k I1_jk)(sum_l I2_jl)

with ``I1_jk = Psi1(|e_j - e_k|)`` and ``I2_jk = Psi2(||X_j - X_k||)``.
The normality and symmetry statistics of the residuals are written the
same way in terms of the cosine transform of a univariate weight.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import InvalidInputError

log = logging.getLogger(__name__)

#: Rows per block in the pairwise loops; keeps memory at O(n) per row block.
BLOCK_ROWS = 512
#: Pre-clamp values below this are reported as round-off anomalies.
NEGATIVE_WARN = -1e-8


class KernelFamily(str, enum.Enum):
    SPHERICAL_STABLE = "stable"
    GENERALIZED_LAPLACE = "laplace"


@dataclass(frozen=True)
class CharacteristicKernel:
    """``exp(-c u^gamma)`` (stable) or ``(1 + u^2/c)^-gamma`` (Laplace),
    times ``amplitude`` (the total mass of the weight function)."""

    family: KernelFamily = KernelFamily.SPHERICAL_STABLE
    gamma: float = 2.0
    c: float = 1.0
    amplitude: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily(self.family))
        if not (self.gamma > 0 and self.c > 0 and self.amplitude > 0):
            raise InvalidInputError("kernel gamma, c and amplitude must be positive")
        if self.family is KernelFamily.SPHERICAL_STABLE and self.gamma > 2:
            raise InvalidInputError("stable characteristic kernels need gamma <= 2")

    def __call__(self, u):
        return psi(self, u)

    @classmethod
    def gaussian(cls, c=1.0):
        return cls(KernelFamily.SPHERICAL_STABLE, 2.0, c)


@dataclass(frozen=True)
class WeightSpec:
    """Product weight: ``residual`` kernel for ``w1``, ``covariate`` for ``w2``."""

    residual: CharacteristicKernel
    covariate: CharacteristicKernel

    @classmethod
    def same(cls, kernel):
        return cls(kernel, kernel)


class WeightFamily(str, enum.Enum):
    GAUSS_EXP = "gauss"  # exp(-c t^2)
    ABS_EXP = "abs"  # exp(-c |t|)
    CAUCHY = "cauchy"  # (1 + t^2/c^2)^-1


@dataclass(frozen=True)
class UnivariateWeight:
    family: WeightFamily = WeightFamily.GAUSS_EXP
    c: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", WeightFamily(self.family))
        if not self.c > 0:
            raise InvalidInputError("weight parameter c must be positive")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.family is WeightFamily.GAUSS_EXP:
            return np.exp(-self.c * t * t)
        if self.family is WeightFamily.ABS_EXP:
            return np.exp(-self.c * np.abs(t))
        return 1.0 / (1.0 + (t / self.c) ** 2)


def psi(kernel, u):
    """Characteristic kernel value at ``u >= 0``."""
    u = np.asarray(u, dtype=float)
    if kernel.family is KernelFamily.SPHERICAL_STABLE:
        if kernel.gamma == 2.0:
            out = np.exp(-kernel.c * u * u)
        elif kernel.gamma == 1.0:
            out = np.exp(-kernel.c * u)
        else:
            out = np.exp(-kernel.c * u**kernel.gamma)
    else:
        out = (1.0 + u * u / kernel.c) ** (-kernel.gamma)
    if kernel.amplitude != 1.0:
        out = kernel.amplitude * out
    return float(out) if out.ndim == 0 else out


def fourier_cos(weight, a):
    """``integral cos(a t) w(t) dt`` over the real line, in closed form."""
    a = np.asarray(a, dtype=float)
    c = weight.c
    if weight.family is WeightFamily.GAUSS_EXP:
        out = math.sqrt(math.pi / c) * np.exp(-a * a / (4.0 * c))
    elif weight.family is WeightFamily.ABS_EXP:
        out = 2.0 * c / (c * c + a * a)
    else:
        out = math.pi * c * np.exp(-c * np.abs(a))
    return float(out) if out.ndim == 0 else out


def ecf(values, t):
    """Empirical characteristic function ``mean(exp(i t v))``."""
    v = np.asarray(values, dtype=float)
    return complex(np.mean(np.exp(1j * t * v)))


def _clamp(value, name):
    if value < NEGATIVE_WARN:
        log.warning("%s pre-clamp value %.3e below round-off tolerance", name, value)
    return max(float(value), 0.0)


def _as_matrix(x):
    x = np.asarray(x, dtype=float)
    return x.reshape(-1, 1) if x.ndim == 1 else x


def _pairwise_blocks(n):
    for start in range(0, n, BLOCK_ROWS):
        yield slice(start, min(start + BLOCK_ROWS, n))


def delta_stat_raw(residuals, x, weights):
    """Pairwise form of the independence statistic, before clamping."""
    e = np.asarray(residuals, dtype=float).reshape(-1)
    x = _as_matrix(x)
    n = e.size
    if x.shape[0] != n:
        raise InvalidInputError(f"{n} residuals but {x.shape[0]} covariate rows")
    if n == 0:
        raise InvalidInputError("statistic needs at least one observation")
    joint = 0.0
    total1 = 0.0
    total2 = 0.0
    cross = 0.0
    for rows in _pairwise_blocks(n):
        i1 = psi(weights.residual, np.abs(e[rows, None] - e[None, :]))
        dx = x[rows, None, :] - x[None, :, :]
        i2 = psi(weights.covariate, np.sqrt(np.sum(dx * dx, axis=-1)))
        r1 = i1.sum(axis=1)
        r2 = i2.sum(axis=1)
        joint += float(np.sum(i1 * i2))
        total1 += float(r1.sum())
        total2 += float(r2.sum())
        cross += float(r1 @ r2)
    return joint / n + total1 * total2 / n**3 - 2.0 * cross / n**2


def delta_stat(residuals, x, weights):
    """Independence statistic between residuals and covariates (>= 0)."""
    return _clamp(delta_stat_raw(residuals, x, weights), "independence statistic")


def _normal_cos_terms(weight, a):
    """``J(a) = int cos(at) exp(-t^2/2) w(t) dt`` and ``K = int exp(-t^2) w(t) dt``."""
    a = np.asarray(a, dtype=float)
    if weight.family is WeightFamily.GAUSS_EXP:
        cj = weight.c + 0.5
        j = math.sqrt(math.pi / cj) * np.exp(-a * a / (4.0 * cj))
        k = math.sqrt(math.pi / (weight.c + 1.0))
        return j, k

    def jfun(t):
        return np.cos(a * t) * np.exp(-0.5 * t * t) * weight(t)

    j, _ = integrate.quad_vec(jfun, 0.0, np.inf, epsabs=1e-13, epsrel=1e-10)
    k, _ = integrate.quad(lambda t: np.exp(-t * t) * weight(t), 0.0, np.inf,
                          epsabs=1e-13, epsrel=1e-10)
    return 2.0 * j, 2.0 * k


def normality_stat(residuals, weight):
    """Weighted L2 distance of the residual ECF from ``exp(-t^2/2)``, times n."""
    e = np.asarray(residuals, dtype=float).reshape(-1)
    n = e.size
    if n == 0:
        raise InvalidInputError("statistic needs at least one observation")
    pair = 0.0
    for rows in _pairwise_blocks(n):
        pair += float(np.sum(fourier_cos(weight, e[rows, None] - e[None, :])))
    j, k = _normal_cos_terms(weight, e)
    value = pair / n - 2.0 * float(np.sum(j)) + n * float(k)
    return _clamp(value, "normality statistic")


def symmetry_stat(residuals, weight):
    """n times the weighted L2 norm of the imaginary part of the residual ECF."""
    e = np.asarray(residuals, dtype=float).reshape(-1)
    n = e.size
    if n == 0:
        raise InvalidInputError("statistic needs at least one observation")
    total = 0.0
    for rows in _pairwise_blocks(n):
        diff = fourier_cos(weight, e[rows, None] - e[None, :])
        plus = fourier_cos(weight, e[rows, None] + e[None, :])
        total += float(np.sum(diff - plus))
    return _clamp(total / (2.0 * n), "symmetry statistic")
