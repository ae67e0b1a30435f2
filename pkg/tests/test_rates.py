"""
Test suite for Monte-Carlo rates and spectral efficiency.
The ergodic rates must sit above the closed-form lower bounds on a
realistic drop and be reproducible whatever the worker count.
"""
import pytest
import sys
from pathlib import Path

import numpy as np

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

import rates
from bounds import bound
from config import ExperimentConfig, PowerConfig
from experiments import generate_drop
from netgen import fixed_beta_profile, select_profile
from precoder import PrecoderError
from rates import (RateReport, Scenario, boundary_user_rate, mc_rates, overhead_factor,
                   spectral_efficiency, trial_terms)
from scheduler import rsa
from training import build_pilots
from channel import draw_channels
from validator import ConfigError


JENSEN_SIGMAS = 3.0
JENSEN_TRIALS = 2000
GAP_TRIALS = 500
SEED = 2024


def _desk_scenario(n_bs=80):
    """S=4, K=8, L=2, N_SC=8, γ=S on a clustered drop with the macro and small-cell pathloss models."""
    config = ExperimentConfig(num_sc=4, num_users=60, user_layout='clustered', k_mue=8, l_sue=2,
                              n_bs=n_bs, n_sc=8, seed=SEED)
    powers = config.power_config()
    drop = generate_drop(config, 0, powers)
    assert drop.feasible

    schedule = rsa(drop.association, 8, 2, np.random.default_rng(0))
    profile = select_profile(drop.full, schedule.mue_selected, schedule.sue_selected, 2)
    plan = build_pilots(8, 2, 4, num_sc=4)
    return Scenario(profile=profile, plan=plan, powers=powers, n_bs=n_bs, n_sc=8)


@pytest.fixture(scope='module')
def desk_scenario():
    return _desk_scenario()


def _relative_gap(scenario, kind, trials):
    report = mc_rates(scenario, kind, trials, SEED)
    result = bound(kind, scenario.profile, scenario.gains(), scenario.powers, scenario.n_bs, scenario.n_sc)
    mc = np.concatenate([report.mue_mean, report.sue_mean[report.sue_mask]])
    lower = np.concatenate([result.mue_rate, result.sue_rate[report.sue_mask]])
    return float(np.mean((mc - lower) / mc))


# ============================================================================
# Bounds against simulation
# ============================================================================

@pytest.mark.parametrize('kind', ['mrt', 'zft'])
def test_simulated_rates_respect_bounds(desk_scenario, kind):
    """Ergodic rate + 3 standard errors never falls below the lower bound."""
    report = mc_rates(desk_scenario, kind, JENSEN_TRIALS, SEED)
    result = bound(kind, desk_scenario.profile, desk_scenario.gains(), desk_scenario.powers,
                   desk_scenario.n_bs, desk_scenario.n_sc)

    errors = []
    mue_ok = report.mue_mean + JENSEN_SIGMAS * report.mue_stderr >= result.mue_rate
    for i in np.flatnonzero(~mue_ok):
        errors.append(f"MUE {i}: MC {report.mue_mean[i]:.4f} < bound {result.mue_rate[i]:.4f}")

    mask = report.sue_mask
    sue_ok = report.sue_mean + JENSEN_SIGMAS * report.sue_stderr >= result.sue_rate
    for m, j in zip(*np.nonzero(mask & ~sue_ok)):
        errors.append(f"SUE ({m}, {j}): MC {report.sue_mean[m, j]:.4f} < bound {result.sue_rate[m, j]:.4f}")

    if errors:
        pytest.fail(f"{kind.upper()} bound violations:\n" + "\n".join(errors))


@pytest.mark.parametrize('n_bs', [80, 160])
def test_zft_bound_is_tighter(n_bs):
    scenario = _desk_scenario(n_bs)
    mrt_gap = _relative_gap(scenario, 'mrt', GAP_TRIALS)
    zft_gap = _relative_gap(scenario, 'zft', GAP_TRIALS)
    assert zft_gap < mrt_gap


# ============================================================================
# Trial terms
# ============================================================================

def test_single_user_terms_collapse():
    """K=1, zero SC power, perfect CSI: only the desired term and noise remain."""
    profile = fixed_beta_profile(1, 1, 1, beta_bm=0.7)
    powers = PowerConfig(p_bs=2.0, p_sc=np.zeros(1), p_tau=1.0, sigma2=1.0)
    scenario = Scenario(profile=profile, plan=build_pilots(1, 1, 1, num_sc=1), powers=powers,
                        n_bs=16, n_sc=8, estimation='perfect')

    terms = trial_terms(scenario, 'mrt', np.random.default_rng(12))
    draw = draw_channels(profile, 16, 8, np.random.default_rng(12))

    alpha_sq = powers.p_bs / (16 * 0.7)
    expected = alpha_sq * np.sum(np.abs(draw.g_bm[:, 0]) ** 2) ** 2

    assert terms.mue_eei[0] == 0.0
    assert terms.mue_imi[0] == 0.0
    assert terms.mue_cti[0] == 0.0
    assert terms.mue_desired[0] == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize('estimation', ['pipeline', 'direct', 'perfect'])
def test_estimation_modes(estimation):
    profile = fixed_beta_profile(2, 2, 2)
    scenario = Scenario(profile=profile, plan=build_pilots(2, 2, 2, num_sc=2),
                        powers=PowerConfig(1.0, np.ones(2), 1.0, 1.0), n_bs=16, n_sc=8,
                        estimation=estimation)
    report = mc_rates(scenario, 'zft', 30, SEED)
    assert np.all(np.isfinite(report.mue_mean))
    assert np.all(report.sue_mean > 0)


def test_unknown_estimation_mode():
    profile = fixed_beta_profile(2, 2, 2)
    scenario = Scenario(profile=profile, plan=build_pilots(2, 2, 2, num_sc=2),
                        powers=PowerConfig(1.0, np.ones(2), 1.0, 1.0), n_bs=16, n_sc=8,
                        estimation='oracle')
    with pytest.raises(ConfigError):
        trial_terms(scenario, 'mrt', np.random.default_rng(0))


# ============================================================================
# Reproducibility
# ============================================================================

def test_same_seed_same_rates(desk_scenario):
    first = mc_rates(desk_scenario, 'mrt', 60, SEED, key=(0, 1))
    second = mc_rates(desk_scenario, 'mrt', 60, SEED, key=(0, 1))
    other = mc_rates(desk_scenario, 'mrt', 60, SEED, key=(0, 2))

    assert np.array_equal(first.mue_mean, second.mue_mean)
    assert np.array_equal(first.sue_stderr, second.sue_stderr)
    assert not np.array_equal(first.mue_mean, other.mue_mean)


def test_workers_do_not_change_results(desk_scenario):
    serial = mc_rates(desk_scenario, 'zft', 60, SEED, workers=1)
    parallel = mc_rates(desk_scenario, 'zft', 60, SEED, workers=2)

    assert np.array_equal(serial.mue_mean, parallel.mue_mean)
    assert np.array_equal(serial.sue_mean, parallel.sue_mean)
    assert np.array_equal(serial.mue_stderr, parallel.mue_stderr)


def test_failed_trial_is_retried(desk_scenario, monkeypatch):
    original = rates.trial_terms
    calls = {'count': 0}

    def flaky(scenario, kind, rng):
        calls['count'] += 1
        if calls['count'] == 1:
            raise PrecoderError("ill-conditioned", 1e13)
        return original(scenario, kind, rng)

    monkeypatch.setattr(rates, 'trial_terms', flaky)
    report = mc_rates(desk_scenario, 'zft', 5, SEED)

    assert report.retries == 1
    assert report.trials == 5


def test_invalid_trial_count(desk_scenario):
    with pytest.raises(ConfigError):
        mc_rates(desk_scenario, 'mrt', 0, SEED)


# ============================================================================
# Spectral efficiency
# ============================================================================

@pytest.fixture(scope='module')
def unit_report():
    """K=2, S=1, L=1, every user at 1 bit/s/Hz."""
    return RateReport(kind='mrt', mue_mean=np.ones(2), mue_stderr=np.zeros(2),
                      sue_mean=np.ones((1, 1)), sue_stderr=np.zeros((1, 1)),
                      sue_mask=np.ones((1, 1), dtype=bool), trials=1)


def test_overhead_factor():
    assert overhead_factor(200, 52) == pytest.approx(0.74)
    assert overhead_factor(200, 0) == 1.0
    with pytest.raises(ConfigError):
        overhead_factor(200, 200)
    with pytest.raises(ConfigError):
        overhead_factor(200, -1)


def test_spectral_efficiency(unit_report):
    assert spectral_efficiency(unit_report, 200, 52) == pytest.approx(2.22)
    assert spectral_efficiency(unit_report, 200, 0) == pytest.approx(3.0)
    assert boundary_user_rate(unit_report) == pytest.approx(1.0)


def test_report_sources(unit_report):
    with pytest.raises(ConfigError):
        unit_report.rates('bound')
    with pytest.raises(ConfigError):
        unit_report.rates('oracle')

    frame = unit_report.to_frame()
    assert len(frame) == 3
    assert frame['tier'].tolist() == ['mue', 'mue', 'sue']
    assert frame['bound'].isna().all()


def test_partial_sue_set_excluded():
    report = RateReport(kind='zft', mue_mean=np.array([2.0]), mue_stderr=np.zeros(1),
                        sue_mean=np.array([[1.0, 0.0]]), sue_stderr=np.zeros((1, 2)),
                        sue_mask=np.array([[True, False]]), trials=1)
    assert spectral_efficiency(report, 100, 0) == pytest.approx(3.0)
    assert boundary_user_rate(report) == pytest.approx(1.0)
    assert len(report.to_frame()) == 2


if __name__ == "__main__":
    pytest.main([__file__, "-v", "--tb=short"])
