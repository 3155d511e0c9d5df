import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

from stocklab.core import SystemParams
from stocklab.demand import (
    CorrelatedNormalSupport,
    Deterministic,
    FiniteSupport,
    IIDNormal,
    IndependentNormals,
    InstanceHyper,
    draw,
    fixed_cost_for_cycle,
    marginal_pmfs,
    sample_instance,
    support_atoms,
    truncated_normal_pmf,
)


def test_deterministic_draw():
    data = draw(Deterministic((4.0, 3.0, 1.0)), 3, seed=0)
    assert len(data) == 3
    assert all(s.values == (4.0, 3.0, 1.0) for s in data.sequences)


def test_integerized_draws_stay_in_range():
    model = IndependentNormals((5.0,) * 4, (30.0,) * 4, cap=20.0)
    data = draw(model, 1000, seed=1).as_matrix()
    assert data.min() >= 0
    assert data.max() <= 20
    assert np.all(data == np.rint(data))


def test_zero_variance_is_constant():
    data = draw(IIDNormal(10.0, 0.0, 3), 5, seed=2).as_matrix()
    assert np.all(data == 10.0)


def test_same_seed_bit_identical():
    model = IIDNormal(10.0, 5.0, 6)
    a = draw(model, 50, seed=123)
    b = draw(model, 50, seed=123)
    c = draw(model, 50, seed=124)
    assert a == b
    assert a != c


def test_truncated_rounded_mean_against_quadrature():
    # oracle: numeric integration of the normal density over rounding bins
    mu, sigma, cap = 10.0, 5.0, 20
    pmf = truncated_normal_pmf(mu, sigma, cap)
    mean_pmf = float(np.dot(np.arange(cap + 1), pmf))

    expected = 0.0
    for k in range(cap + 1):
        lo = -np.inf if k == 0 else k - 0.5
        hi = np.inf if k == cap else k + 0.5
        mass, _ = quad(lambda x: norm.pdf(x, mu, sigma), max(lo, mu - 12 * sigma), min(hi, mu + 12 * sigma))
        expected += k * mass
    assert mean_pmf == pytest.approx(expected, abs=1e-8)

    sample = draw(IIDNormal(mu, sigma, 1, cap=cap), 100_000, seed=9).as_matrix()
    assert abs(sample.mean() - expected) < 0.1


def test_pmf_sums_to_one():
    for mu, sigma in [(10, 5), (0.5, 2.5), (19.5, 7.5), (10, 0)]:
        pmf = truncated_normal_pmf(mu, sigma, 20)
        assert pmf.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(pmf >= 0)


def test_marginal_pmfs_match_empirical():
    model = IndependentNormals((5.0, 12.0), (2.5, 7.5), cap=20.0)
    pmfs = marginal_pmfs(model)
    data = draw(model, 200_000, seed=4).as_matrix()
    for t, pmf in enumerate(pmfs):
        emp = np.bincount(data[:, t].astype(int), minlength=21) / len(data)
        assert np.max(np.abs(emp - pmf)) < 0.01


def test_correlated_support_autocorrelation_near_zero_at_rho_zero():
    model = CorrelatedNormalSupport(
        means=(10.0,) * 2, stds=(5.0,) * 2, rho=0.0,
        support_size=20_000, support_seed=7, cap=20.0,
    )
    data = draw(model, 100_000, seed=8).as_matrix()
    corr = np.corrcoef(data[:, 0], data[:, 1])[0, 1]
    assert abs(corr) < 0.05


def test_correlated_support_degenerate_rho():
    for rho in (-1.0, 1.0):
        model = CorrelatedNormalSupport(
            means=(10.0, 10.0), stds=(3.0, 3.0), rho=rho,
            support_size=500, support_seed=3, cap=20.0, integerize=False,
        )
        atoms = model.support()
        corr = np.corrcoef(atoms[:, 0], atoms[:, 1])[0, 1]
        assert corr == pytest.approx(rho, abs=0.05)


def test_support_is_deterministic_per_seed():
    kw = dict(means=(10.0,) * 3, stds=(5.0,) * 3, rho=-0.5, support_size=5, cap=20.0)
    a = CorrelatedNormalSupport(support_seed=11, **kw)
    b = CorrelatedNormalSupport(support_seed=11, **kw)
    assert np.array_equal(a.support(), b.support())
    assert np.array_equal(support_atoms(a), a.support())


def test_finite_support_draw():
    model = FiniteSupport(((1.0, 2.0), (3.0, 4.0)))
    data = draw(model, 500, seed=5).as_matrix()
    assert set(map(tuple, data)) <= {(1.0, 2.0), (3.0, 4.0)}


class TestSampleInstance:
    def test_horizon_sweep_ranges(self):
        p = SystemParams(T=10, L=0, U=20.0)
        hyper = InstanceHyper()
        for seed in range(20):
            model = sample_instance("ee-vs-T", seed, p, hyper)
            assert all(5.0 <= m <= 15.0 for m in model.means)
            assert all(2.5 <= s <= 7.5 for s in model.stds)
            assert model.n_periods == 10

    def test_fixed_cost_formula(self):
        p = SystemParams(T=20, h=1.0, b=9.0)
        assert fixed_cost_for_cycle(2.0, p) == pytest.approx(18.0)
        assert fixed_cost_for_cycle(np.sqrt(2.0), p) == pytest.approx(9.0)

    def test_degenerate_nonstationarity(self):
        p = SystemParams(T=4, U=20.0)
        model = sample_instance("oos-vs-N-St", 0, p, InstanceHyper(nonst=0.0))
        assert all(m == 10.0 for m in model.means)
        assert all(s == 5.0 for s in model.stds)

    def test_iid_kind_ranges(self):
        p = SystemParams(T=20, U=20.0)
        for seed in range(20):
            model = sample_instance("oos-vs-N-sS", seed, p, InstanceHyper())
            assert 8.0 <= model.mu <= 12.0
            assert 4.0 <= model.sigma <= 6.0

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="kind"):
            sample_instance("nope", 0, SystemParams(T=1), InstanceHyper())

    def test_deterministic_in_seed(self):
        p = SystemParams(T=5, U=20.0)
        a = sample_instance("erm-vs-perm-corr", 3, p, InstanceHyper(rho=-0.8))
        b = sample_instance("erm-vs-perm-corr", 3, p, InstanceHyper(rho=-0.8))
        assert a == b
