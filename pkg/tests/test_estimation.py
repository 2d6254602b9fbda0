import math
from pathlib import Path

import numpy as np
import pytest

from cfgof import estimation, simulation
from cfgof.errors import InvalidInputError
from cfgof.estimation import ProfileConfig
from cfgof.smoothing import Sample, SmootherConfig
from cfgof.transform import TransformFamily

DATA = Path(__file__).parent / "data" / "ultrasonic.csv"
BC = TransformFamily.BOX_COX


@pytest.fixture(scope="module")
def ultrasonic():
    raw = np.loadtxt(DATA, delimiter=",", skiprows=1)
    return Sample(raw[:, 0], raw[:, 1])


@pytest.mark.parametrize("peak", [-1.3, 0.0, 0.77, 2.5])
def test_golden_section_finds_peak(peak):
    x, fx = estimation.golden_section_max(lambda t: -(t - peak) ** 2, -2, 4, 1e-8)
    assert x == pytest.approx(peak, abs=1e-7)
    assert fx == pytest.approx(0.0, abs=1e-12)


def test_silverman_bandwidth():
    v = np.random.default_rng(0).standard_normal(400)
    iqr = np.subtract(*np.percentile(v, [75, 25]))
    expected = 0.9 * min(np.std(v, ddof=1), iqr / 1.34) * 400 ** -0.2
    assert estimation.silverman_bandwidth(v) == pytest.approx(expected)
    assert estimation.silverman_bandwidth(np.zeros(10)) > 0


def test_residual_density_integrates_to_one():
    f = estimation.residual_density(np.array([-1.0, 0.2, 3.0]), 0.4)
    u = np.linspace(-10, 15, 50001)
    assert np.trapezoid(f(u), u) == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(InvalidInputError):
        estimation.residual_density([0.0], 0.0)


def test_profile_config_validation():
    with pytest.raises(InvalidInputError):
        ProfileConfig(theta_lo=1, theta_hi=0)
    with pytest.raises(InvalidInputError):
        ProfileConfig(grid_points=3)


@pytest.fixture(scope="module")
def null_sample():
    return simulation.gen_sample(simulation.ErrorModel("A"), 200, np.random.default_rng(99))


def test_refined_maximum_dominates_grid(null_sample):
    res = estimation.profile_search(null_sample)
    assert res.loglik >= np.max(res.grid_loglik)
    assert res.theta == pytest.approx(
        res.grid[np.argmax(res.grid_loglik)], abs=res.grid[1] - res.grid[0])
    assert res.loglik == pytest.approx(estimation.profile_loglik(null_sample, res.theta),
                                       rel=1e-12)


def test_estimate_within_search_box(null_sample):
    cfg = ProfileConfig(theta_lo=0.5, theta_hi=1.5, grid_points=11)
    theta = estimation.estimate_theta(null_sample, config=cfg)
    assert 0.5 <= theta <= 1.5


def test_null_median_estimate_near_truth():
    rng_root = np.random.SeedSequence(314)
    estimates = []
    for child in rng_root.spawn(15):
        sample = simulation.gen_sample(simulation.ErrorModel("A"), 300,
                                       np.random.default_rng(child))
        estimates.append(estimation.estimate_theta(sample))
    assert abs(float(np.median(estimates))) <= 0.15


@pytest.mark.parametrize(
    "homoskedastic, expected",
    [(True, 0.458), (False, -0.436)],
    ids=["homoskedastic", "heteroskedastic"],
)
def test_ultrasonic_box_cox_estimates(ultrasonic, homoskedastic, expected):
    theta = estimation.estimate_theta(ultrasonic, SmootherConfig(homoskedastic=homoskedastic),
                                      family=BC)
    assert abs(theta - expected) <= 0.15


def test_profile_loglik_includes_jacobian(ultrasonic):
    # At theta = 1 Box-Cox is a shift, so the Jacobian term vanishes and
    # the likelihood equals the one for y - 1 under the identity.
    shifted = Sample(ultrasonic.y - 1.0, ultrasonic.x)
    a = estimation.profile_loglik(ultrasonic, 1.0, family=BC)
    b = estimation.profile_loglik(shifted, 1.0, family=TransformFamily.YEO_JOHNSON)
    assert math.isfinite(a)
    assert a == pytest.approx(b, rel=1e-10)
