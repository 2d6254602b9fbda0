import io
import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import integrate, stats

from cfgof import resampling, simulation, statistics, transform
from cfgof.errors import InvalidInputError, StudyAborted
from cfgof.simulation import ErrorModel, StudyConfig
from cfgof.transform import TransformFamily

BIG = 1_000_000


def rng(*key):
    return np.random.default_rng(list(key))


def within_3se(draws, target, what="mean"):
    n = draws.size
    if what == "mean":
        se = draws.std() / math.sqrt(n)
        return abs(draws.mean() - target) <= 3 * se
    centered = (draws - draws.mean()) ** 2
    se = centered.std() / math.sqrt(n)
    return abs(centered.mean() - target) <= 3 * se


def test_error_model_validation():
    with pytest.raises(InvalidInputError):
        ErrorModel("E")
    with pytest.raises(InvalidInputError):
        ErrorModel("A", nu=2.0)
    with pytest.raises(InvalidInputError):
        ErrorModel("C", kappa=0.0)
    assert ErrorModel("a").variant == "A"
    assert ErrorModel("A").is_null and not ErrorModel("A", eta=1.0).is_null
    assert ErrorModel("C", kappa=1.0).is_null
    assert ErrorModel("A", eta=0, nu=2.1).params() == "eta=0;nu=2.1"


def test_skew_t_degenerate_is_normal():
    w = simulation.skew_t_sample(0.0, math.inf, rng(1), 10_000)
    assert stats.kstest(w, "norm").statistic < 0.02


def test_skew_t_positive_skew():
    w = simulation.skew_t_sample(5.0, math.inf, rng(2), 10_000)
    assert stats.skew(w) > 0


def test_skew_t_moments_match_monte_carlo():
    # brute-force moments first; the closed form must agree with them
    w = simulation.skew_t_sample(5.0, 5.0, rng(3), BIG)
    mean, var = simulation.skew_t_moments(5.0, 5.0)
    assert abs(w.mean() - mean) < 0.02
    assert abs(w.var() - var) < 0.05


def test_skew_t_moments_heavy_tail():
    w = simulation.skew_t_sample(100.0, 2.1, rng(4), 10 * BIG)
    mean, var = simulation.skew_t_moments(100.0, 2.1)
    assert within_3se(w, mean)
    # The fourth moment is infinite at nu = 2.1, so the sample variance is
    # no oracle; integrate the skew-t density instead.
    eta, nu = 100.0, 2.1

    def density(u):
        scale = math.sqrt((nu + 1) / (nu + u * u))
        return 2 * stats.t.pdf(u, nu) * stats.t.cdf(eta * u * scale, nu + 1)

    m1 = sum(integrate.quad(lambda u: u * density(u), a, b, limit=400, epsabs=1e-12)[0]
             for a, b in ((-np.inf, 0), (0, 1), (1, np.inf)))
    m2 = sum(integrate.quad(lambda u: u * u * density(u), a, b, limit=400, epsabs=1e-12)[0]
             for a, b in ((-np.inf, 0), (0, 1), (1, np.inf)))
    assert mean == pytest.approx(m1, rel=1e-6)
    assert var == pytest.approx(m2 - m1 * m1, rel=1e-6)


@pytest.mark.parametrize("nu", [2.5, 3.0, 10.0])
def test_symmetric_skew_t_has_zero_mean(nu):
    mean, var = simulation.skew_t_moments(0.0, nu)
    assert mean == 0.0 and var == pytest.approx(nu / (nu - 2))


def test_skew_t_moments_reject_low_nu():
    with pytest.raises(InvalidInputError):
        simulation.skew_t_moments(1.0, 2.0)
    assert simulation.skew_t_moments(0.0, math.inf) == (0.0, 1.0)


def test_laplace_symmetric_case():
    w = simulation.asym_laplace_sample(1.0, rng(5), BIG)
    assert abs(w.mean()) < 0.02


def test_laplace_moments():
    w = simulation.asym_laplace_sample(2.0, rng(6), BIG)
    assert within_3se(w, -1.5)
    assert within_3se(w, 4.25, "var")
    assert simulation.asym_laplace_moments(2.0) == (-1.5, 4.25)


BRANCHES = [
    (ErrorModel("A", eta=5.0, nu=5.0), 0.2),
    (ErrorModel("A", eta=100.0, nu=3.0), 0.2),
    (ErrorModel("A", eta=5.0, nu=5.0), 0.8),
    (ErrorModel("B", nu=3.0), 0.2),
    (ErrorModel("B", nu=math.inf), 0.2),
    (ErrorModel("B", nu=3.0), 0.8),
    (ErrorModel("C", kappa=5.0), 0.2),
    (ErrorModel("C", kappa=5.0), 0.8),
    (ErrorModel("D", eta=5.0, nu=5.0), 0.3),
]


@pytest.mark.parametrize("model, x", BRANCHES, ids=lambda v: str(v))
def test_every_error_branch_is_standardized(model, x):
    eps = simulation.gen_error(model, np.full(BIG, x), rng(7, int(10 * x)))
    assert within_3se(eps, 0.0)
    assert within_3se(eps, 1.0, "var")


def test_model_b_branch_example():
    eps = simulation.gen_error(ErrorModel("B", nu=3.0), np.full(BIG, 0.2), rng(8))
    assert abs(eps.mean()) < 0.01 and abs(eps.var() - 1) < 0.02


def test_model_c_null_branches_match_in_law():
    model = ErrorModel("C", kappa=1.0)
    lo = simulation.gen_error(model, np.full(20000, 0.2), rng(9))
    hi = simulation.gen_error(model, np.full(20000, 0.8), rng(10))
    assert stats.ks_2samp(lo, hi).pvalue > 0.01


def test_model_b_null_is_normal():
    eps = simulation.gen_error(ErrorModel("B"), np.full(10000, 0.3), rng(11))
    assert stats.kstest(eps, "norm").statistic < 0.02


def test_gen_sample_formula_chain():
    x = 0.5
    z = simulation.m_true(x) + simulation.sigma_true(x) * 0.0
    y = transform.inverse(TransformFamily.YEO_JOHNSON, 0.0, float(z))
    assert y == pytest.approx(math.exp(1.5 + math.exp(0.5)) - 1)


def test_gen_sample_construction():
    sample, eps = simulation.gen_sample(ErrorModel("A"), 2000, rng(12), return_errors=True)
    x = sample.x[:, 0]
    ty = transform.forward(TransformFamily.YEO_JOHNSON, 0.0, sample.y)
    np.testing.assert_allclose((ty - simulation.m_true(x)) / x, eps, rtol=1e-8, atol=1e-8)
    assert np.all((x >= 0) & (x <= 1))


def test_model_d_covariates_are_discrete():
    sample = simulation.gen_sample(ErrorModel("D"), 500, rng(13))
    assert set(np.round(sample.x[:, 0], 10)) <= {k / 10 for k in range(1, 11)}


def test_null_errors_are_independent_of_covariates():
    # true errors and covariates: the statistic stays small relative to a
    # clearly dependent construction
    sample, eps = simulation.gen_sample(ErrorModel("A"), 300, rng(14), return_errors=True)
    w = statistics.WeightSpec.same(statistics.CharacteristicKernel.gaussian(1.0))
    null = statistics.delta_stat(eps, sample.x, w)
    alt = statistics.delta_stat(eps * (0.2 + 3 * sample.x[:, 0]), sample.x, w)
    assert null < alt


GAUSS1 = [statistics.WeightSpec.same(statistics.CharacteristicKernel.gaussian(1.0))]


def test_study_config_validation():
    with pytest.raises(InvalidInputError):
        StudyConfig(ErrorModel("A"), 100, GAUSS1, M=50)
    with pytest.raises(InvalidInputError):
        StudyConfig(ErrorModel("A"), 20, GAUSS1)


@pytest.fixture(scope="module")
def tiny_study():
    return StudyConfig(ErrorModel("A"), 50, GAUSS1, M=100, seed=17)


def test_alpha_one_rejects_everything(tiny_study):
    result = simulation.warp_speed_study(replace(tiny_study, alpha=1.0))
    assert list(result.rejection_rates()) == [100.0]


def test_study_is_deterministic(tiny_study):
    a = simulation.warp_speed_study(tiny_study)
    b = simulation.warp_speed_study(tiny_study)
    buf_a, buf_b = io.StringIO(), io.StringIO()
    simulation.write_study_csv(a.rows, buf_a)
    simulation.write_study_csv(b.rows, buf_b)
    assert buf_a.getvalue() == buf_b.getvalue()
    header = buf_a.getvalue().splitlines()[0].split(",")
    assert tuple(header) == simulation.STUDY_COLUMNS
    assert simulation.format_study_table(a.rows).startswith("model")


def test_study_rates_are_percentages(tiny_study):
    result = simulation.warp_speed_study(tiny_study)
    rate = result.rejection_rates()[0]
    assert 0.0 <= rate <= 100.0
    assert result.statistics.shape == (100, 1) and result.replicates.shape == (100, 1)


def test_study_aborts_on_failures(tiny_study, monkeypatch):
    def broken(ctx, rng_):
        raise FloatingPointError("boom")

    monkeypatch.setattr(resampling, "_one_draw", broken)
    with pytest.raises(StudyAborted) as info:
        simulation.warp_speed_study(tiny_study)
    assert info.value.diagnostics
