"""
Uplink training: pilot reuse plan, received training signals and MMSE estimation.
Also holds the closed-form effective gains β̂ the precoders and bounds rely on.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from channel import ChannelDraw, complex_gaussian, draw_noise
from netgen import ScheduledProfile
from validator import ConfigError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PilotPlan:
    """
    Pilot assignment.

    pilot_mue (K, τ) rows shared by the macro cell; pilot_sue (γ, L, τ) one
    block per reuse group; SC m uses block m mod γ.
    """
    gamma: int
    groups: List[List[int]]
    tau: int
    pilot_mue: np.ndarray
    pilot_sue: np.ndarray

    def group_of(self, sc: int) -> int:
        return sc % self.gamma

    def copilot_matrix(self, num_sc: int) -> np.ndarray:
        """(S, S) boolean, True where two SCs share a pilot block."""
        if num_sc == 0:
            return np.zeros((0, 0), dtype=bool)
        group = np.arange(num_sc) % self.gamma
        return group[:, None] == group[None, :]

    def sc_pilots(self, num_sc: int) -> np.ndarray:
        """Pilot block of every SC, shape (S, L, τ)."""
        if num_sc == 0:
            return np.zeros((0,) + self.pilot_sue.shape[1:], dtype=complex)
        return self.pilot_sue[np.arange(num_sc) % self.gamma]


@dataclass(frozen=True)
class BetaHat:
    """
    Effective (estimated) large-scale gains.

    bm (K,) MUE links at the BS; ss (S, L) own SUE links; cross (S, S, L)
    [n, m, j] the gain of SC n's estimate of its SUE j towards co-pilot SUE j
    of SC m (zero unless n and m share pilots); copilot (S, S); sue_mask
    (S, L) occupied SUE slots.
    """
    bm: np.ndarray
    ss: np.ndarray
    cross: np.ndarray
    copilot: np.ndarray
    sue_mask: np.ndarray


@dataclass(frozen=True)
class TrainingSignal:
    y_bs: np.ndarray
    y_sc: np.ndarray


@dataclass(frozen=True)
class ChannelEstimate:
    """MMSE estimates at the BS (N_BS, K) and at every SC (S, N_SC, L)."""
    g_hat_bm: np.ndarray
    g_hat_ss: np.ndarray
    beta_hat: BetaHat


def pilot_groups(num_sc: int, gamma: int) -> List[List[int]]:
    """
    Reuse groups A_r = {r, r+γ, r+2γ, …} over 0-based SC indices.

    Raises:
        ConfigError: If γ does not divide S
    """
    if gamma < 1 or gamma > num_sc or num_sc % gamma != 0:
        raise ConfigError(f"γ must divide S (S={num_sc}, γ={gamma})")
    return [list(range(r, num_sc, gamma)) for r in range(gamma)]


def build_pilots(k: int, l: int, gamma: int, num_sc: Optional[int] = None) -> PilotPlan:
    """
    Orthonormal pilots of length τ = K + L·γ from the rows of a unitary DFT.

    Args:
        k: MUEs (≥ 1)
        l: SUEs per SC (0 only without small cells)
        gamma: Reuse factor (0 only without small cells)
        num_sc: When given, the reuse groups are materialized and checked
    """
    if k < 1 or l < 0 or gamma < 0:
        raise ConfigError(f"Invalid pilot sizes K={k}, L={l}, γ={gamma}")

    tau = k + l * gamma
    rows = np.arange(tau)
    dft = np.exp(-2j * np.pi * np.outer(rows, rows) / tau) / np.sqrt(tau)

    pilot_mue = dft[:k]
    pilot_sue = dft[k:].reshape(gamma, l, tau) if gamma > 0 else np.zeros((0, l, tau), dtype=complex)

    groups = pilot_groups(num_sc, gamma) if num_sc else []

    return PilotPlan(gamma=gamma, groups=groups, tau=tau, pilot_mue=pilot_mue, pilot_sue=pilot_sue)


def receive_training(draw: ChannelDraw, plan: PilotPlan, p_tau: float, sigma2: float,
                     rng: np.random.Generator) -> TrainingSignal:
    """
    Uplink training reception at the BS and every SC.

    Every scheduled user sends its pilot with energy τ·p_τ; co-pilot SUEs of
    other SCs superimpose on the same rows.
    """
    scale = np.sqrt(plan.tau * p_tau)
    num_sc = draw.g_ss.shape[0]
    phi_sc = plan.sc_pilots(num_sc)

    rx_bs = draw.g_bm @ plan.pilot_mue + np.einsum('mal,mlt->at', draw.g_bs, phi_sc)
    rx_sc = (np.einsum('nak,kt->nat', draw.g_sm, plan.pilot_mue)
             + np.einsum('nmal,mlt->nat', draw.g_ss, phi_sc))

    y_bs = scale * rx_bs + draw_noise(rx_bs.shape, sigma2, rng)
    y_sc = scale * rx_sc + draw_noise(rx_sc.shape, sigma2, rng)

    return TrainingSignal(y_bs=y_bs, y_sc=y_sc)


def _safe_divide(numerator, denominator):
    numerator, denominator = np.broadcast_arrays(np.asarray(numerator, dtype=float),
                                                 np.asarray(denominator, dtype=float))
    return np.divide(numerator, denominator, out=np.zeros(numerator.shape), where=denominator > 0)


def beta_hat(profile: ScheduledProfile, plan: PilotPlan, p_tau: float, sigma2: float) -> BetaHat:
    """
    Closed-form effective gains.

    β̂_BM = τp_τβ²/(τp_τβ + σ²); at SC n the denominator of SUE j sums the
    gains towards every co-pilot SUE j: τp_τ Σ_{l∈A_r} β^(n,l,j) + σ².
    """
    tp = plan.tau * p_tau
    num_sc = profile.num_sc

    bm = _safe_divide(tp * profile.beta_bm ** 2, tp * profile.beta_bm + sigma2)

    copilot = plan.copilot_matrix(num_sc)
    contamination = np.einsum('nl,nlj->nj', copilot.astype(float), profile.beta_ss)
    denom = tp * contamination + sigma2

    cross = _safe_divide(tp * profile.beta_ss ** 2, denom[:, None, :])
    cross = cross * copilot[:, :, None] * profile.sue_mask[:, None, :]

    idx = np.arange(num_sc)
    ss = cross[idx, idx, :]

    return BetaHat(bm=bm, ss=ss, cross=cross, copilot=copilot, sue_mask=profile.sue_mask)


def perfect_beta_hat(profile: ScheduledProfile) -> BetaHat:
    """Effective gains under perfect CSI: β̂ = β and no co-pilot correlation."""
    num_sc = profile.num_sc
    copilot = np.eye(num_sc, dtype=bool)
    cross = profile.beta_ss * copilot[:, :, None]
    return BetaHat(bm=profile.beta_bm.copy(), ss=profile.own_beta_ss.copy(), cross=cross,
                   copilot=copilot, sue_mask=profile.sue_mask)


def mmse_estimate(signal: TrainingSignal, plan: PilotPlan, profile: ScheduledProfile,
                  p_tau: float, sigma2: float) -> ChannelEstimate:
    """
    De-spread the training signal and apply the per-link MMSE scaling.

    Co-pilot contamination is retained: SC m's estimate of SUE j is a scaled
    sum of the channels to every SUE j in its reuse group plus noise.
    """
    gains = beta_hat(profile, plan, p_tau, sigma2)
    num_sc = profile.num_sc
    tp = plan.tau * p_tau

    if tp <= 0:
        g_hat_bm = np.zeros((signal.y_bs.shape[0], profile.num_mue), dtype=complex)
        g_hat_ss = np.zeros((num_sc, signal.y_sc.shape[1], profile.num_sue), dtype=complex)
        return ChannelEstimate(g_hat_bm=g_hat_bm, g_hat_ss=g_hat_ss, beta_hat=gains)

    scale = np.sqrt(tp)
    z_bm = signal.y_bs @ plan.pilot_mue.conj().T / scale
    coef_bm = _safe_divide(tp * profile.beta_bm, tp * profile.beta_bm + sigma2)
    g_hat_bm = z_bm * coef_bm[None, :]

    phi_sc = plan.sc_pilots(num_sc)
    z_sc = np.einsum('nat,nlt->nal', signal.y_sc, phi_sc.conj()) / scale
    # β̂ = c·β for every MMSE coefficient c
    coef_ss = _safe_divide(gains.ss, profile.own_beta_ss)
    g_hat_ss = z_sc * coef_ss[:, None, :]

    return ChannelEstimate(g_hat_bm=g_hat_bm, g_hat_ss=g_hat_ss, beta_hat=gains)


def perfect_estimate(draw: ChannelDraw, profile: ScheduledProfile) -> ChannelEstimate:
    """Ĝ = G."""
    idx = np.arange(profile.num_sc)
    return ChannelEstimate(
        g_hat_bm=draw.g_bm.copy(),
        g_hat_ss=draw.g_ss[idx, idx].copy(),
        beta_hat=perfect_beta_hat(profile)
    )


def direct_estimate(draw: ChannelDraw, profile: ScheduledProfile, gains: BetaHat,
                    rng: np.random.Generator) -> ChannelEstimate:
    """
    Sample (Ĝ, Ξ) statistically without simulating training.

    ĝ = (β̂/β)·g + √(β̂(1 − β̂/β))·z reproduces the MMSE joint law when no
    pilots are reused.

    Raises:
        ConfigError: If any two SCs share pilots (γ < S)
    """
    if np.any(gains.copilot & ~np.eye(gains.copilot.shape[0], dtype=bool)):
        raise ConfigError("Direct estimation is only valid without pilot reuse (γ = S)")

    ratio_bm = _safe_divide(gains.bm, profile.beta_bm)
    g_hat_bm = (ratio_bm[None, :] * draw.g_bm
                + complex_gaussian(draw.g_bm.shape, (gains.bm * (1.0 - ratio_bm))[None, :], rng))

    idx = np.arange(profile.num_sc)
    g_own = draw.g_ss[idx, idx]
    ratio_ss = _safe_divide(gains.ss, profile.own_beta_ss)
    g_hat_ss = (ratio_ss[:, None, :] * g_own
                + complex_gaussian(g_own.shape, (gains.ss * (1.0 - ratio_ss))[:, None, :], rng))

    return ChannelEstimate(g_hat_bm=g_hat_bm, g_hat_ss=g_hat_ss, beta_hat=gains)
