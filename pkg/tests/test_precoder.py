"""
Test suite for the MRT / ZFT precoders and the Wishart helpers.
"""
import pytest
import sys
from pathlib import Path

import numpy as np

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from channel import complex_gaussian
from config import PowerConfig
from precoder import (MRT, ZFT, PrecoderError, build_precoder, inverse_wishart_trace_moments, mrt_alpha_sq,
                      sample_complex_wishart, zero_forcing_directions, zft_alpha_sq, zft_dof)
from training import BetaHat, ChannelEstimate
from validator import ConfigError, DegenerateInputError


POWER_TOLERANCE = 0.02
FIRST_MOMENT_TOLERANCE = 0.02
SECOND_MOMENT_TOLERANCE = 0.05
NULLING_TOLERANCE = 1e-8


def _estimate(beta_bm, n_bs, rng):
    """BS-only estimate whose columns are CN(0, β̂_k)."""
    beta_bm = np.asarray(beta_bm, dtype=float)
    gains = BetaHat(
        bm=beta_bm,
        ss=np.zeros((1, 1)),
        cross=np.zeros((1, 1, 1)),
        copilot=np.eye(1, dtype=bool),
        sue_mask=np.zeros((1, 1), dtype=bool)
    )
    g_hat = complex_gaussian((n_bs, beta_bm.size), beta_bm[None, :], rng)
    return ChannelEstimate(g_hat_bm=g_hat, g_hat_ss=np.zeros((1, 4, 1), dtype=complex), beta_hat=gains)


@pytest.fixture(scope='module')
def powers():
    return PowerConfig(p_bs=10.0, p_sc=np.zeros(1), p_tau=1.0, sigma2=1.0)


# ============================================================================
# Normalization constants
# ============================================================================

def test_alpha_constants():
    assert mrt_alpha_sq(np.array([1.0, 3.0]), 8.0, 2) == pytest.approx(1.0)
    assert mrt_alpha_sq(np.array([]), 8.0, 2) == 0.0
    assert zft_alpha_sq(np.array([1.0, 0.5]), 3.0, 10, dof_offset=1) == pytest.approx(7 * 3.0 / 3.0)
    assert zft_alpha_sq(np.array([1.0, 0.5]), 3.0, 10, dof_offset=0) == pytest.approx(8 * 3.0 / 3.0)


def test_degenerate_normalization():
    with pytest.raises(DegenerateInputError):
        mrt_alpha_sq(np.zeros(3), 1.0, 8)
    with pytest.raises(DegenerateInputError):
        zft_alpha_sq(np.array([1.0, 0.0]), 1.0, 8)


def test_zft_dimension_check():
    assert zft_dof(10, 4, 1) == 5
    with pytest.raises(ConfigError):
        zft_dof(5, 4, 1)
    assert zft_dof(5, 4, 0) == 1


def test_unknown_precoder(powers):
    estimate = _estimate([1.0], 4, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        build_precoder('mmse', estimate, powers)


# ============================================================================
# Zero forcing
# ============================================================================

def test_zero_forcing_nulls_interference():
    """Ĝᴴ Ḡ = I for every realization."""
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        g_hat = complex_gaussian((32, 6), np.linspace(0.1, 2.0, 6)[None, :], rng)
        g_bar, _ = zero_forcing_directions(g_hat)
        worst = max(worst, np.abs(g_hat.conj().T @ g_bar - np.eye(6)).max())
    assert worst < NULLING_TOLERANCE


def test_rank_deficient_channel_raises():
    column = complex_gaussian((8, 1), 1.0, np.random.default_rng(2))
    g_hat = np.hstack([column, column])
    with pytest.raises(PrecoderError):
        zero_forcing_directions(g_hat)


def test_empty_node():
    g_bar, condition = zero_forcing_directions(np.zeros((8, 0), dtype=complex))
    assert g_bar.shape == (8, 0)
    assert condition == 1.0


# ============================================================================
# Average transmit power
# ============================================================================

@pytest.mark.parametrize('kind, dof_offset, expected_ratio', [
    (MRT, 1, 1.0),
    (ZFT, 0, 1.0),
    (ZFT, 1, (32 - 4 - 1) / (32 - 4)),
])
def test_average_transmit_power(powers, kind, dof_offset, expected_ratio):
    """E[Tr(WᴴW)] meets the power constraint (exactly p for MRT and offset-free ZFT)."""
    rng = np.random.default_rng(3)
    betas = [0.5, 1.0, 2.0, 4.0]
    traces = []
    for _ in range(10000):
        precoder = build_precoder(kind, _estimate(betas, 32, rng), powers, dof_offset)
        traces.append(np.sum(np.abs(precoder.w_bs) ** 2))

    ratio = np.mean(traces) / (powers.p_bs * expected_ratio)
    assert ratio == pytest.approx(1.0, abs=POWER_TOLERANCE)


# ============================================================================
# Wishart moments
# ============================================================================

def test_inverse_wishart_moments():
    first, second = inverse_wishart_trace_moments(4, 16)
    assert first == pytest.approx(1.0 / 3.0)

    rng = np.random.default_rng(4)
    traces = []
    for _ in range(10):
        samples = sample_complex_wishart(4, 16, rng, size=10000)
        traces.append(np.trace(np.linalg.inv(samples), axis1=1, axis2=2).real)
    traces = np.concatenate(traces)

    errors = []
    if abs(traces.mean() / first - 1.0) > FIRST_MOMENT_TOLERANCE:
        errors.append(f"E[Tr W⁻¹] = {traces.mean():.5f}, expected {first:.5f}")
    if abs(np.mean(traces ** 2) / second - 1.0) > SECOND_MOMENT_TOLERANCE:
        errors.append(f"E[Tr² W⁻¹] = {np.mean(traces ** 2):.5f}, expected {second:.5f}")

    if errors:
        pytest.fail("Wishart moment errors:\n" + "\n".join(errors))


def test_wishart_moment_domain():
    with pytest.raises(ConfigError):
        inverse_wishart_trace_moments(4, 5)
    with pytest.raises(ConfigError):
        sample_complex_wishart(4, 3, np.random.default_rng(0))


if __name__ == "__main__":
    pytest.main([__file__, "-v", "--tb=short"])
