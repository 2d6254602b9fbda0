"""Parametric power transformations of the response.

Two families are provided, both strictly increasing in ``y`` for every
real parameter value:

* Yeo-Johnson, defined on the whole real line, with removable
  singularities at ``theta = 0`` (non-negative branch) and ``theta = 2``
  (negative branch);
* Box-Cox, defined for ``y > 0`` only, with the log branch at ``theta = 0``.

All functions accept scalars or arrays and return the same shape.
"""

from __future__ import annotations

import enum
import math

import numpy as np

from .errors import InvalidInputError, OutOfRangeError

#: Distance from a removable singularity inside which the log branch is used.
BRANCH_TOL = 1e-10


class TransformFamily(str, enum.Enum):
    YEO_JOHNSON = "yeo-johnson"
    BOX_COX = "box-cox"


def _family(family) -> TransformFamily:
    try:
        return TransformFamily(family)
    except ValueError:
        raise InvalidInputError(f"unknown transformation family {family!r}") from None


def _wrap(result, like):
    if np.ndim(like) == 0:
        return float(result)
    return result


def _check_theta(theta):
    theta = float(theta)
    if not math.isfinite(theta):
        raise InvalidInputError(f"transformation parameter must be finite, got {theta}")
    return theta


def _check_domain(family, y):
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise InvalidInputError("responses must be finite")
    if family is TransformFamily.BOX_COX and np.any(y <= 0):
        raise InvalidInputError("Box-Cox transformation requires y > 0")
    return y


def forward(family, theta, y):
    """Evaluate ``T_theta(y)``."""
    family = _family(family)
    theta = _check_theta(theta)
    yy = _check_domain(family, y)
    if family is TransformFamily.BOX_COX:
        logy = np.log(yy)
        if abs(theta) < BRANCH_TOL:
            out = logy
        else:
            out = np.expm1(theta * logy) / theta
        return _wrap(out, y)

    out = np.empty_like(yy)
    pos = yy >= 0
    lp = np.log1p(yy[pos])
    if abs(theta) < BRANCH_TOL:
        out[pos] = lp
    else:
        out[pos] = np.expm1(theta * lp) / theta
    ln = np.log1p(-yy[~pos])
    other = 2.0 - theta
    if abs(other) < BRANCH_TOL:
        out[~pos] = -ln
    else:
        out[~pos] = -np.expm1(other * ln) / other
    return _wrap(out, y)


def transform_range(family, theta):
    """Open image ``(lo, hi)`` of ``T_theta`` over its domain."""
    family = _family(family)
    theta = _check_theta(theta)
    lo, hi = -math.inf, math.inf
    if family is TransformFamily.BOX_COX:
        if theta > BRANCH_TOL:
            lo = -1.0 / theta
        elif theta < -BRANCH_TOL:
            hi = -1.0 / theta
        return lo, hi
    if theta < -BRANCH_TOL:
        hi = -1.0 / theta
    if theta > 2.0 + BRANCH_TOL:
        lo = 1.0 / (2.0 - theta)
    return lo, hi


def inverse(family, theta, z):
    """Invert ``T_theta``; ``z`` must lie strictly inside the range."""
    family = _family(family)
    theta = _check_theta(theta)
    zz = np.asarray(z, dtype=float)
    lo, hi = transform_range(family, theta)
    if np.any(zz <= lo):
        raise OutOfRangeError(f"argument at or below lower range endpoint {lo}", lo)
    if np.any(zz >= hi):
        raise OutOfRangeError(f"argument at or above upper range endpoint {hi}", hi)

    if family is TransformFamily.BOX_COX:
        if abs(theta) < BRANCH_TOL:
            out = np.exp(zz)
        else:
            out = np.exp(np.log1p(theta * zz) / theta)
        return _wrap(out, z)

    zz = np.atleast_1d(zz)
    out = np.empty_like(zz)
    pos = zz >= 0
    if abs(theta) < BRANCH_TOL:
        out[pos] = np.expm1(zz[pos])
    else:
        out[pos] = np.expm1(np.log1p(theta * zz[pos]) / theta)
    other = 2.0 - theta
    if abs(other) < BRANCH_TOL:
        out[~pos] = -np.expm1(-zz[~pos])
    else:
        out[~pos] = -np.expm1(np.log1p(-other * zz[~pos]) / other)
    if np.ndim(z) == 0:
        return float(out[0])
    return out


def d_dy(family, theta, y):
    """Derivative of ``T_theta`` with respect to ``y`` (always positive)."""
    family = _family(family)
    theta = _check_theta(theta)
    yy = _check_domain(family, y)
    if family is TransformFamily.BOX_COX:
        return _wrap(np.exp((theta - 1.0) * np.log(yy)), y)
    out = np.where(
        yy >= 0,
        np.exp((theta - 1.0) * np.log1p(np.abs(yy))),
        np.exp((1.0 - theta) * np.log1p(np.abs(yy))),
    )
    return _wrap(out, y)


def log_d_dy(family, theta, y):
    """``log dT_theta/dy``, computed without overflow."""
    family = _family(family)
    theta = _check_theta(theta)
    yy = _check_domain(family, y)
    if family is TransformFamily.BOX_COX:
        return _wrap((theta - 1.0) * np.log(yy), y)
    lp = np.log1p(np.abs(yy))
    return _wrap(np.where(yy >= 0, (theta - 1.0) * lp, (1.0 - theta) * lp), y)
