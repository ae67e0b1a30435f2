"""
Monte-Carlo ergodic rates from the exact per-realization SINR decomposition.
Trials run in fixed blocks, optionally across processes; every trial has its own substream.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from bounds import BoundResult
from channel import draw_channels
from config import PowerConfig
from netgen import ScheduledProfile
from numeric_utils import STREAM_TRIALS, exact_sum, log2_rate, mean_and_stderr, substream
from precoder import PrecoderError, build_precoder
from training import (BetaHat, PilotPlan, beta_hat, direct_estimate, mmse_estimate,
                      perfect_beta_hat, perfect_estimate, receive_training)
from validator import ConfigError

logger = logging.getLogger(__name__)

BLOCK_SIZE = 25
ESTIMATION_MODES = ('pipeline', 'direct', 'perfect')


@dataclass(frozen=True)
class Scenario:
    """Everything a trial needs: scheduled profile, pilots, powers and array sizes."""
    profile: ScheduledProfile
    plan: PilotPlan
    powers: PowerConfig
    n_bs: int
    n_sc: int
    estimation: str = 'pipeline'
    dof_offset: int = 1

    def gains(self) -> BetaHat:
        """Effective gains matching the estimation mode."""
        if self.estimation == 'perfect':
            return perfect_beta_hat(self.profile)
        return beta_hat(self.profile, self.plan, self.powers.p_tau, self.powers.sigma2)


@dataclass(frozen=True)
class TrialTerms:
    """
    Received powers of one realization.

    MUE arrays have shape (K,); SUE arrays (S, L); ssi (S, S, L) is indexed
    [n, m, j] like the channel tensors.
    """
    mue_desired: np.ndarray
    mue_eei: np.ndarray
    mue_imi: np.ndarray
    mue_cti: np.ndarray
    sue_desired: np.ndarray
    sue_eei: np.ndarray
    sue_isi: np.ndarray
    sue_cti: np.ndarray
    ssi: np.ndarray
    sue_mask: np.ndarray
    sigma2: float

    def sinr(self) -> Tuple[np.ndarray, np.ndarray]:
        mue = self.mue_desired / (self.mue_eei + self.mue_imi + self.mue_cti + self.sigma2)
        interference = self.sue_eei + self.sue_isi + self.sue_cti + self.ssi.sum(axis=0) + self.sigma2
        sue = np.where(self.sue_mask, self.sue_desired / interference, 0.0)
        return mue, sue


def _estimate(scenario: Scenario, draw, rng: np.random.Generator):
    if scenario.estimation == 'pipeline':
        signal = receive_training(draw, scenario.plan, scenario.powers.p_tau, scenario.powers.sigma2, rng)
        return mmse_estimate(signal, scenario.plan, scenario.profile,
                             scenario.powers.p_tau, scenario.powers.sigma2)
    if scenario.estimation == 'direct':
        return direct_estimate(draw, scenario.profile, scenario.gains(), rng)
    if scenario.estimation == 'perfect':
        return perfect_estimate(draw, scenario.profile)
    raise ConfigError(f"Unknown estimation mode: {scenario.estimation}")


def trial_terms(scenario: Scenario, kind: str, rng: np.random.Generator) -> TrialTerms:
    """
    One realization: channels, training, precoders and the SINR terms.

    With W = α·conj(Ḡ) user i hears α Σ_k (ḡ_kᴴ g_i) x_k. The desired part
    uses the estimate ĝ_i, the remainder g_i − ĝ_i is estimation error.
    """
    profile = scenario.profile
    draw = draw_channels(profile, scenario.n_bs, scenario.n_sc, rng)
    estimate = _estimate(scenario, draw, rng)
    precoder = build_precoder(kind, estimate, scenario.powers, scenario.dof_offset)

    num_sc = profile.num_sc
    idx = np.arange(num_sc)
    a_bs2 = precoder.alpha_bs ** 2
    a_sc2 = precoder.alpha_sc ** 2

    # MUE
    g_bar = precoder.g_bar_bs
    gram = g_bar.conj().T @ draw.g_bm
    known = np.einsum('ak,ak->k', g_bar.conj(), estimate.g_hat_bm)
    error = np.einsum('ak,ak->k', g_bar.conj(), draw.g_bm - estimate.g_hat_bm)
    leak = np.abs(gram) ** 2
    mue_desired = a_bs2 * np.abs(known) ** 2
    mue_eei = a_bs2 * np.abs(error) ** 2
    mue_imi = a_bs2 * (leak.sum(axis=0) - np.diag(leak))
    # SC n → MUE i: Σ_l |ḡ_nlᴴ g_ni|²
    sc_to_mue = np.abs(np.einsum('nal,nak->nlk', precoder.g_bar_sc.conj(), draw.g_sm)) ** 2
    mue_cti = np.einsum('n,nk->k', a_sc2, sc_to_mue.sum(axis=1))

    # SUE, own cell
    g_own = draw.g_ss[idx, idx]
    g_bar_sc = precoder.g_bar_sc
    own_gram = np.abs(np.einsum('mal,maj->mlj', g_bar_sc.conj(), g_own)) ** 2
    known = np.einsum('maj,maj->mj', g_bar_sc.conj(), estimate.g_hat_ss)
    error = np.einsum('maj,maj->mj', g_bar_sc.conj(), g_own - estimate.g_hat_ss)
    sue_desired = a_sc2[:, None] * np.abs(known) ** 2
    sue_eei = a_sc2[:, None] * np.abs(error) ** 2
    sue_isi = a_sc2[:, None] * (own_gram.sum(axis=1) - np.diagonal(own_gram, axis1=1, axis2=2))

    bs_to_sue = np.abs(np.einsum('ak,maj->mkj', precoder.g_bar_bs.conj(), draw.g_bs)) ** 2
    sue_cti = a_bs2 * bs_to_sue.sum(axis=1)

    cross = np.abs(np.einsum('nal,nmaj->nmlj', g_bar_sc.conj(), draw.g_ss)) ** 2
    ssi = a_sc2[:, None, None] * cross.sum(axis=2)
    ssi[idx, idx, :] = 0.0

    mask = profile.sue_mask
    return TrialTerms(
        mue_desired=mue_desired, mue_eei=mue_eei, mue_imi=mue_imi, mue_cti=mue_cti,
        sue_desired=np.where(mask, sue_desired, 0.0), sue_eei=sue_eei, sue_isi=sue_isi,
        sue_cti=sue_cti, ssi=np.where(mask[None, :, :], ssi, 0.0),
        sue_mask=mask, sigma2=scenario.powers.sigma2
    )


def _run_trial(scenario: Scenario, kind: str, master_seed: int, key: Tuple[int, ...],
               trial: int) -> Tuple[np.ndarray, np.ndarray, int]:
    """Rates of one trial, retried once on a fresh substream after a numerical failure."""
    for attempt in range(2):
        rng = substream(master_seed, *key, STREAM_TRIALS, trial, attempt)
        try:
            mue, sue = trial_terms(scenario, kind, rng).sinr()
            return log2_rate(mue), np.where(scenario.profile.sue_mask, log2_rate(sue), 0.0), attempt
        except (np.linalg.LinAlgError, PrecoderError) as e:
            if attempt == 1:
                raise
            logger.warning(f"Trial {trial} failed numerically ({e}); retrying on a fresh substream")


def _run_block(args) -> Tuple[np.ndarray, np.ndarray, int]:
    scenario, kind, master_seed, key, start, stop = args
    mue_rows, sue_rows, retries = [], [], 0
    for trial in range(start, stop):
        mue, sue, attempt = _run_trial(scenario, kind, master_seed, key, trial)
        mue_rows.append(mue)
        sue_rows.append(sue)
        retries += attempt
    return np.array(mue_rows), np.array(sue_rows), retries


@dataclass(frozen=True)
class RateReport:
    """Per-user rates in bit/s/Hz: Monte-Carlo mean and stderr, bound and limit."""
    kind: str
    mue_mean: np.ndarray
    mue_stderr: np.ndarray
    sue_mean: np.ndarray
    sue_stderr: np.ndarray
    sue_mask: np.ndarray
    trials: int = 0
    retries: int = 0
    mue_bound: Optional[np.ndarray] = None
    sue_bound: Optional[np.ndarray] = None
    mue_asymptotic: Optional[np.ndarray] = None
    sue_asymptotic: Optional[np.ndarray] = None

    def with_bounds(self, result: BoundResult) -> 'RateReport':
        return replace(self, mue_bound=result.mue_rate, sue_bound=result.sue_rate)

    def with_asymptotics(self, result) -> 'RateReport':
        return replace(self, mue_asymptotic=result.mue_rate, sue_asymptotic=result.sue_rate)

    def rates(self, source: str = 'mc') -> Tuple[np.ndarray, np.ndarray]:
        """(MUE, SUE) rates from 'mc', 'bound' or 'asymptotic'."""
        if source == 'mc':
            return self.mue_mean, self.sue_mean
        if source == 'bound':
            pair = (self.mue_bound, self.sue_bound)
        elif source == 'asymptotic':
            pair = (self.mue_asymptotic, self.sue_asymptotic)
        else:
            raise ConfigError(f"Unknown rate source: {source}")
        if pair[0] is None:
            raise ConfigError(f"Report carries no {source} rates")
        return pair

    def to_frame(self) -> pd.DataFrame:
        """One row per scheduled user."""
        rows = []

        def optional(values, index):
            return float(values[index]) if values is not None else float('nan')

        for i in range(self.mue_mean.shape[0]):
            rows.append({
                'tier': 'mue', 'cell': -1, 'user': i,
                'mc_mean': float(self.mue_mean[i]), 'mc_stderr': float(self.mue_stderr[i]),
                'bound': optional(self.mue_bound, i), 'asymptotic': optional(self.mue_asymptotic, i)
            })
        for m, j in zip(*np.nonzero(self.sue_mask)):
            rows.append({
                'tier': 'sue', 'cell': int(m), 'user': int(j),
                'mc_mean': float(self.sue_mean[m, j]), 'mc_stderr': float(self.sue_stderr[m, j]),
                'bound': optional(self.sue_bound, (m, j)), 'asymptotic': optional(self.sue_asymptotic, (m, j))
            })

        return pd.DataFrame(rows, columns=['tier', 'cell', 'user', 'mc_mean', 'mc_stderr',
                                           'bound', 'asymptotic'])


def mc_rates(scenario: Scenario, kind: str, trials: int, master_seed: int,
             key: Tuple[int, ...] = (), workers: int = 1) -> RateReport:
    """
    Ergodic per-user rates averaged over independent trials.

    Args:
        scenario: Scenario
        kind: 'mrt' or 'zft'
        trials: Number of realizations (≥ 1)
        master_seed: Master seed
        key: Counter prefix (sweep point, drop) of the substreams
        workers: Processes; results do not depend on it

    Returns:
        RateReport with the Monte-Carlo fields
    """
    if trials < 1:
        raise ConfigError(f"Need at least one trial, got {trials}")

    blocks = [(scenario, kind, master_seed, tuple(key), start, min(start + BLOCK_SIZE, trials))
              for start in range(0, trials, BLOCK_SIZE)]

    if workers > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            results: List = list(executor.map(_run_block, blocks))
    else:
        results = [_run_block(block) for block in blocks]

    mue = np.concatenate([r[0] for r in results])
    sue = np.concatenate([r[1] for r in results])
    retries = sum(r[2] for r in results)

    mue_mean, mue_stderr = mean_and_stderr(mue)
    sue_mean, sue_stderr = mean_and_stderr(sue)

    logger.debug(f"{kind.upper()} Monte-Carlo: {trials} trials, {retries} retries")

    return RateReport(kind=kind, mue_mean=mue_mean, mue_stderr=mue_stderr,
                      sue_mean=sue_mean, sue_stderr=sue_stderr,
                      sue_mask=scenario.profile.sue_mask, trials=trials, retries=retries)


def overhead_factor(coherence_T: int, tau: int) -> float:
    """
    (T − τ)/T.

    Raises:
        ConfigError: Unless 0 ≤ τ < T
    """
    if not 0 <= tau < coherence_T:
        raise ConfigError(f"Training length τ={tau} must satisfy 0 ≤ τ < T={coherence_T}")
    return (coherence_T - tau) / coherence_T


def spectral_efficiency(report: RateReport, coherence_T: int, tau: int, source: str = 'mc') -> float:
    """(T − τ)/T × (Σ MUE + Σ SUE rates)."""
    mue, sue = report.rates(source)
    total = exact_sum(np.concatenate([mue, sue[report.sue_mask]]))
    return overhead_factor(coherence_T, tau) * total


def boundary_user_rate(report: RateReport, source: str = 'mc') -> float:
    """Mean SUE rate; SUEs are the cell-boundary users."""
    _, sue = report.rates(source)
    values = sue[report.sue_mask]
    if values.size == 0:
        return float('nan')
    return exact_sum(values) / values.size
