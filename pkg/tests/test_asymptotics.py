"""
Test suite for the large-antenna limits.
Compares limits with the closed-form bounds at large arrays and checks the
classification of saturating, divergent and vanishing rates.
"""
import pytest
import sys
from pathlib import Path

import numpy as np

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from asymptotics import LimitTag, ScalingLaw, asymptotic_rates, cell_objective
from bounds import bound, bound_mrt
from config import PowerConfig
from netgen import ScheduledProfile, fixed_beta_profile
from training import beta_hat, build_pilots
from validator import ConfigError


LIMIT_TOLERANCE = 0.03
REFERENCE_N_SC = 1024
REFERENCE_N_BS = 10240
VANISHING_GRID = (256, 512, 1024, 2048)


@pytest.fixture(scope='module')
def table():
    return fixed_beta_profile(20, 8, 4)


def _single_mue():
    return ScheduledProfile(
        beta_bm=np.array([1.0]),
        beta_sm=np.zeros((0, 1)),
        beta_bs=np.zeros((0, 0)),
        beta_ss=np.zeros((0, 0, 0)),
        sue_mask=np.zeros((0, 0), dtype=bool)
    )


# ============================================================================
# Scaling law
# ============================================================================

def test_scaled_powers():
    law = ScalingLaw(case='I', chi=1.0, eta=1.0, e_tau=2.0, e_bs=10.0, e_sc=1.0, lam=10.0)
    p_tau, p_bs, p_sc = law.scaled_powers(100)
    assert p_tau == 2.0
    assert p_bs == pytest.approx(10.0 / 1000.0)
    assert p_sc == pytest.approx(1.0 / 100.0)
    assert law.n_bs(100) == 1000

    law = ScalingLaw(case='II', theta=0.5, chi=0.5, eta=0.5)
    assert law.pilot_power(100) == pytest.approx(0.1)


def test_invalid_laws():
    with pytest.raises(ConfigError):
        ScalingLaw(case='III')
    with pytest.raises(ConfigError):
        ScalingLaw(case='II', theta=0.0)
    with pytest.raises(ConfigError):
        ScalingLaw(chi=-1.0)
    with pytest.raises(ConfigError):
        ScalingLaw(lam=0.5)


# ============================================================================
# Limits
# ============================================================================

def test_single_user_limit_is_one_bit():
    """χ = η = 1, K = 1, β̂ = β = 1, E_BS = 1, σ² = 1 → 1 bit/s/Hz."""
    profile = _single_mue()
    plan = build_pilots(1, 0, 0)
    law = ScalingLaw(case='I', chi=1.0, eta=1.0, e_tau=1e12, e_bs=1.0, e_sc=1.0)

    for kind in ('mrt', 'zft'):
        result = asymptotic_rates(profile, plan, law, kind, 1.0)
        assert result.mue_rate[0] == pytest.approx(1.0, abs=1e-9)
        assert result.mue_tag[0] == LimitTag.FINITE.value


@pytest.mark.parametrize('gamma', [8, 2])
@pytest.mark.parametrize('kind', ['mrt', 'zft'])
def test_bounds_approach_limits(table, gamma, kind):
    """At N_SC = 1024, N_BS = 10240 the bounds sit within 3% of their limits."""
    plan = build_pilots(20, 4, gamma, num_sc=8)
    law = ScalingLaw(case='I', chi=1.0, eta=1.0, e_tau=1.0, e_bs=1.0, e_sc=1.0, lam=10.0)
    p_tau, p_bs, p_sc = law.scaled_powers(REFERENCE_N_SC)
    powers = PowerConfig(p_bs=p_bs, p_sc=np.full(8, p_sc), p_tau=p_tau, sigma2=1.0)

    bounds = bound(kind, table, beta_hat(table, plan, p_tau, 1.0), powers, REFERENCE_N_BS, REFERENCE_N_SC)
    limits = asymptotic_rates(table, plan, law, kind, 1.0)

    errors = []
    for tier, got, expected in (('MUE', bounds.mue_rate, limits.mue_rate),
                                ('SUE', bounds.sue_rate, limits.sue_rate)):
        rel = np.abs(got - expected) / expected
        if rel.max() > LIMIT_TOLERANCE:
            errors.append(f"{tier}: bound {got.min():.5f} vs limit {expected.min():.5f} ({rel.max():.2%})")
    if errors:
        pytest.fail(f"{kind.upper()} γ={gamma} limit errors:\n" + "\n".join(errors))


def test_pilot_reuse_ceiling(table):
    """χ < 1 with reuse: the SUE rate saturates at the co-pilot ceiling."""
    plan = build_pilots(20, 4, 2, num_sc=8)
    law = ScalingLaw(case='I', chi=0.5, eta=1.0)
    result = asymptotic_rates(table, plan, law, 'mrt', 1.0)

    # ss/(3·cross) for three co-pilot SCs of the fixed table
    expected = 25.0 / (3 * 0.36)
    assert np.allclose(result.sue_sinr, expected, rtol=1e-12)
    assert set(result.sue_tag.ravel()) == {LimitTag.FINITE.value}


def test_divergent_and_vanishing_tags(table):
    plan = build_pilots(20, 4, 8, num_sc=8)

    divergent = asymptotic_rates(table, plan, ScalingLaw(case='I', chi=0.5, eta=0.5), 'zft', 1.0)
    assert set(divergent.mue_tag) == {LimitTag.DIVERGENT.value}
    assert set(divergent.sue_tag.ravel()) == {LimitTag.DIVERGENT.value}
    assert np.all(np.isinf(divergent.mue_sinr))

    vanishing = asymptotic_rates(table, plan, ScalingLaw(case='I', chi=1.5, eta=1.5), 'mrt', 1.0)
    assert set(vanishing.mue_tag) == {LimitTag.VANISHING.value}
    assert np.all(vanishing.sue_rate == 0.0)


def test_case_two_limits_follow_copilot_model(table):
    """χ = η = θ = 0.5 with γ < S: conditional leakage saturates, literal MRT leakage wins."""
    law = ScalingLaw(case='II', theta=0.5, chi=0.5, eta=0.5)
    reuse = build_pilots(20, 4, 2, num_sc=8)

    conditional = asymptotic_rates(table, reuse, law, 'mrt', 1.0, 'conditional')
    assert set(conditional.sue_tag.ravel()) == {LimitTag.FINITE.value}
    assert set(conditional.mue_tag) == {LimitTag.FINITE.value}
    # 175 / (σ² + 3 co-pilot SCs · 2.52)
    assert np.allclose(conditional.sue_sinr, 175.0 / (1.0 + 7.56), rtol=1e-12)

    literal = asymptotic_rates(table, reuse, law, 'mrt', 1.0, 'literal')
    assert set(literal.sue_tag.ravel()) == {LimitTag.VANISHING.value}
    assert np.all(literal.sue_rate == 0.0)

    for model in ('conditional', 'literal'):
        zft = asymptotic_rates(table, reuse, law, 'zft', 1.0, model)
        assert set(zft.sue_tag.ravel()) == {LimitTag.FINITE.value}
        assert np.all(zft.sue_rate > 0)

    orthogonal = asymptotic_rates(table, build_pilots(20, 4, 8, num_sc=8), law, 'mrt', 1.0, 'literal')
    assert set(orthogonal.sue_tag.ravel()) == {LimitTag.FINITE.value}
    assert np.all(orthogonal.sue_rate > 0)


def test_case_two_bound_meets_its_limit(table):
    """At N_SC = 1e12 the conditional MRT bound sits on its saturated limit; the literal one has collapsed."""
    law = ScalingLaw(case='II', theta=0.5, chi=0.5, eta=0.5, lam=10.0)
    plan = build_pilots(20, 4, 2, num_sc=8)
    n = 1e12
    p_tau, p_bs, p_sc = law.scaled_powers(n)
    powers = PowerConfig(p_bs=p_bs, p_sc=np.full(8, p_sc), p_tau=p_tau, sigma2=1.0)
    gains = beta_hat(table, plan, p_tau, 1.0)

    limit = asymptotic_rates(table, plan, law, 'mrt', 1.0, 'conditional')
    conditional = bound_mrt(table, gains, powers, 10.0 * n, n, 'conditional')
    literal = bound_mrt(table, gains, powers, 10.0 * n, n, 'literal')

    rel = np.abs(conditional.sue_rate - limit.sue_rate)[table.sue_mask] / limit.sue_rate[table.sue_mask]
    assert rel.max() < 0.01
    assert literal.sue_rate.mean() < conditional.sue_rate.mean() / 50


def test_contaminated_rate_vanishes_along_the_grid(table):
    """
    Case II with θ = 0.5, χ = η = 1, E_τ = −21 dB and E_BS = E_SC = 0 dB,
    γ = 2 of S = 8: the literal MRT SUE bound decreases along N_SC = 256 … 2048
    and ends below 0.05 bit/s/Hz, as its limit says.
    """
    plan = build_pilots(20, 4, 2, num_sc=8)
    law = ScalingLaw(case='II', theta=0.5, chi=1.0, eta=1.0, e_tau=10.0 ** -2.1, lam=10.0)

    rates = []
    for n in VANISHING_GRID:
        p_tau, p_bs, p_sc = law.scaled_powers(n)
        powers = PowerConfig(p_bs=p_bs, p_sc=np.full(8, p_sc), p_tau=p_tau, sigma2=1.0)
        gains = beta_hat(table, plan, p_tau, 1.0)
        rates.append(bound_mrt(table, gains, powers, law.n_bs(n), n, 'literal').sue_rate.mean())

    errors = []
    if not np.all(np.diff(rates) < 0):
        errors.append(f"literal SUE bound not decreasing: {rates}")
    if rates[-1] >= 0.05:
        errors.append(f"literal SUE bound at N_SC={VANISHING_GRID[-1]} is {rates[-1]:.4f}")
    limit = asymptotic_rates(table, plan, law, 'mrt', 1.0, 'literal')
    if set(limit.sue_tag.ravel()) != {LimitTag.VANISHING.value}:
        errors.append(f"limit tags {set(limit.sue_tag.ravel())}")
    if errors:
        pytest.fail("Vanishing-rate errors:\n" + "\n".join(errors))


# ============================================================================
# Cell objective
# ============================================================================

def test_cell_objective():
    law = ScalingLaw(case='I', e_tau=1.0, e_bs=1.0, e_sc=2.0)
    betas = np.array([1.0, 2.0])
    gains = 10 * betas ** 2 / (10 * betas + 1.0)

    expected = 2 * np.log2(1.0 + 2.0 / np.sum(1.0 / gains))
    assert cell_objective(betas, 'zft', law, 1.0, 10) == pytest.approx(expected)

    expected = np.sum(np.log2(1.0 + 2.0 * gains ** 2 / gains.sum()))
    assert cell_objective(betas, 'mrt', law, 1.0, 10) == pytest.approx(expected)

    assert cell_objective(np.array([]), 'mrt', law, 1.0, 10) == 0.0
    with pytest.raises(ConfigError):
        cell_objective(betas, 'mmse', law, 1.0, 10)


if __name__ == "__main__":
    pytest.main([__file__, "-v", "--tb=short"])
