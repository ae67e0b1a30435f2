"""
Large-antenna limits of the rate bounds under power scaling laws.
Every exponent triple is classified by its leading order: finite limit, divergence or vanishing rate.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np

from bounds import CopilotModel
from netgen import ScheduledProfile
from numeric_utils import db_to_linear, log2_rate
from precoder import MRT, ZFT
from training import PilotPlan, beta_hat
from validator import ConfigError

logger = logging.getLogger(__name__)


class LimitTag(str, Enum):
    FINITE = 'finite'
    DIVERGENT = 'divergent'
    VANISHING = 'vanishing'


@dataclass(frozen=True)
class ScalingLaw:
    """
    Power scaling with the antenna count, N_BS = λ·N_SC.

    Case I keeps p_τ = e_tau; case II scales p_τ = e_tau/N_SC^θ.
    Data powers are p_BS = e_bs/N_BS^η and p_SC = e_sc/N_SC^χ.
    """
    case: str = 'I'
    theta: float = 0.0
    chi: float = 1.0
    eta: float = 1.0
    e_tau: float = 1.0
    e_bs: float = 1.0
    e_sc: float = 1.0
    lam: float = 10.0

    def __post_init__(self):
        if self.case not in ('I', 'II'):
            raise ConfigError(f"Scaling case must be I or II, got {self.case}")
        if self.case == 'II' and not 0.0 < self.theta <= 1.0:
            raise ConfigError(f"Case II needs 0 < θ ≤ 1, got {self.theta}")
        if self.chi < 0 or self.eta < 0:
            raise ConfigError(f"Exponents must be non-negative, got χ={self.chi}, η={self.eta}")
        if self.lam < 1:
            raise ConfigError(f"λ must be at least 1, got {self.lam}")

    @classmethod
    def from_config(cls, config) -> 'ScalingLaw':
        return cls(
            case=config.scaling_case,
            theta=config.theta if config.scaling_case == 'II' else 0.0,
            chi=config.chi,
            eta=config.eta,
            e_tau=db_to_linear(config.e_tau_db),
            e_bs=db_to_linear(config.e_bs_db),
            e_sc=db_to_linear(config.e_sc_db),
            lam=config.lambda_ratio
        )

    def n_bs(self, n_sc: int) -> int:
        return int(round(self.lam * n_sc))

    def pilot_power(self, n_sc) -> float:
        if self.case == 'I':
            return self.e_tau
        return self.e_tau / float(n_sc) ** self.theta

    def scaled_powers(self, n_sc) -> Tuple[float, float, float]:
        """(p_τ, p_BS, p_SC) at a given N_SC."""
        n_sc = float(n_sc)
        n_bs = self.lam * n_sc
        return self.pilot_power(n_sc), self.e_bs / n_bs ** self.eta, self.e_sc / n_sc ** self.chi


@dataclass(frozen=True)
class AsymptoticResult:
    """Limiting SINR per user; +inf for divergent users, 0 for vanishing ones."""
    kind: str
    mue_sinr: np.ndarray
    sue_sinr: np.ndarray
    mue_tag: np.ndarray
    sue_tag: np.ndarray
    sue_mask: np.ndarray

    @property
    def mue_rate(self) -> np.ndarray:
        return log2_rate(self.mue_sinr)

    @property
    def sue_rate(self) -> np.ndarray:
        return np.where(self.sue_mask, log2_rate(self.sue_sinr), 0.0)


def _classify(growth: np.ndarray, leading: np.ndarray, residual: np.ndarray,
              ceiling: np.ndarray = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Limit of N^g·D / (residual + N^g·C) as N → ∞.

    g > 0 saturates at D/C (diverges if C = 0); g = 0 gives D/(residual + C);
    g < 0 vanishes.
    """
    if ceiling is None:
        ceiling = np.zeros_like(leading)
    growth = np.broadcast_to(growth, leading.shape)

    sinr = np.zeros_like(leading, dtype=float)
    tags = np.full(leading.shape, LimitTag.VANISHING.value, dtype=object)

    flat = np.isclose(growth, 0.0, atol=1e-12)
    rising = (growth > 0) & ~flat

    sinr[flat] = leading[flat] / (residual[flat] + ceiling[flat])
    tags[flat] = LimitTag.FINITE.value

    saturated = rising & (ceiling > 0)
    sinr[saturated] = leading[saturated] / ceiling[saturated]
    tags[saturated] = LimitTag.FINITE.value

    divergent = rising & ~(ceiling > 0)
    sinr[divergent] = np.inf
    tags[divergent] = LimitTag.DIVERGENT.value

    return sinr, tags


def _zero(x: float) -> float:
    return 1.0 if abs(x) < 1e-12 else 0.0


def asymptotic_rates(profile: ScheduledProfile, plan: PilotPlan, law: ScalingLaw,
                     kind: str, sigma2: float,
                     copilot_model: CopilotModel = CopilotModel.CONDITIONAL) -> AsymptoticResult:
    """
    Limits of the closed-form bounds as N_SC → ∞ with N_BS = λ·N_SC.

    Case I evaluates β̂ at p_τ = e_tau. In case II β̂ ≈ τp_τβ²/σ² and the
    training exponent θ joins the data exponents. Co-pilot leakage saturates
    the SUE limit under the conditional model; under the literal model MRT
    SUEs sharing pilots with another SC vanish in case II.

    Args:
        profile: Scheduled large-scale tensors
        plan: Pilot plan (τ and co-pilot structure)
        law: ScalingLaw
        kind: 'mrt' or 'zft'
        sigma2: Noise power
        copilot_model: Co-pilot term of the SUE bound the limit follows

    Returns:
        AsymptoticResult
    """
    if kind not in (MRT, ZFT):
        raise ConfigError(f"Unknown precoder: {kind}")
    if sigma2 <= 0:
        raise ConfigError("Asymptotic limits need positive noise power")
    copilot_model = CopilotModel(copilot_model)

    mask = profile.sue_mask
    num_sc = profile.num_sc
    own = profile.own_beta_ss
    copilot = plan.copilot_matrix(num_sc)
    offdiag = copilot & ~np.eye(num_sc, dtype=bool)
    pairs = offdiag[:, :, None] & mask[:, None, :] & mask[None, :, :]
    contaminated = np.any(pairs, axis=0)

    if law.case == 'I':
        gains = beta_hat(profile, plan, law.e_tau, sigma2)
        bm, ss = gains.bm, np.where(mask, gains.ss, 0.0)
        scale_bs = 1.0
        mue_growth = 1.0 - law.eta
        sue_growth = np.full(mask.shape, 1.0 - law.chi)
    else:
        # leading order of β̂ for vanishing pilot power, N^θ factored out
        t = plan.tau * law.e_tau / sigma2
        bm, ss = t * profile.beta_bm ** 2, np.where(mask, t * own ** 2, 0.0)
        scale_bs = law.lam ** (1.0 - law.eta)
        mue_growth = 1.0 - law.eta - law.theta
        sue_growth = np.full(mask.shape, 1.0 - law.chi - law.theta)

    # MUE
    if kind == MRT:
        leading = law.e_bs * bm ** 2 / np.sum(bm) if bm.size else bm
    else:
        leading = np.full(bm.shape, law.e_bs / np.sum(1.0 / bm)) if bm.size else bm
    leading = scale_bs * leading
    active = mask.any(axis=1).astype(float)
    residual = (sigma2 + _zero(law.eta) * law.e_bs * profile.beta_bm
                + _zero(law.chi) * law.e_sc * (active @ profile.beta_sm))
    mue_sinr, mue_tag = _classify(np.asarray(mue_growth), leading, residual)

    # SUE
    with np.errstate(divide='ignore', invalid='ignore'):
        phi = ss.sum(axis=1)
        psi = np.where(mask, 1.0 / np.where(mask, ss, 1.0), 0.0).sum(axis=1)
        if kind == MRT:
            leading = law.e_sc * np.where(mask, ss ** 2 / phi[:, None], 0.0)
        else:
            leading = np.where(mask, law.e_sc / psi[:, None], 0.0)

    residual = (sigma2 + _zero(law.chi) * law.e_sc * np.einsum('n,nmj->mj', active, profile.beta_ss)
                + _zero(law.eta) * law.e_bs * profile.beta_bs)

    # co-pilot leakage grows with the array like the desired term
    if law.case == 'I':
        cross = gains.cross
    else:
        cross = t * profile.beta_ss ** 2
    beta_nn = own[:, None, :]
    with np.errstate(divide='ignore', invalid='ignore'):
        if kind == ZFT:
            per_pair = (profile.beta_ss ** 2 / beta_nn ** 2) / psi[:, None, None]
        elif copilot_model == CopilotModel.CONDITIONAL:
            per_pair = (cross * ss[:, None, :]) / phi[:, None, None]
        else:
            per_pair = (profile.beta_ss * cross) / phi[:, None, None]
    ceiling = law.e_sc * np.where(pairs, per_pair, 0.0).sum(axis=0)

    sue_sinr, sue_tag = _classify(sue_growth, leading, residual, ceiling)

    if law.case == 'II' and kind == MRT and copilot_model == CopilotModel.LITERAL:
        # the literal co-pilot term outgrows the desired term by N^θ
        sue_sinr = np.where(contaminated, 0.0, sue_sinr)
        sue_tag = np.where(contaminated, LimitTag.VANISHING.value, sue_tag)

    sue_sinr = np.where(mask, sue_sinr, 0.0)

    logger.debug(f"{kind.upper()} case {law.case} limits: MUE tags {sorted(set(mue_tag))}, "
                 f"SUE tags {sorted(set(sue_tag[mask]))}")

    return AsymptoticResult(kind=kind, mue_sinr=mue_sinr, sue_sinr=sue_sinr,
                            mue_tag=mue_tag, sue_tag=sue_tag, sue_mask=mask)


def cell_objective(betas: np.ndarray, kind: str, law: ScalingLaw, sigma2: float, tau: int,
                   tier: str = 'sc') -> float:
    """
    One cell's leading-order sum rate for a tentative user set.

    Only the cell's own statistics enter: uncontaminated β̂ at the law's pilot
    power and noise as the only residual.

    Args:
        betas: Large-scale gains of the tentative users towards their node
        tier: 'bs' (macro cell) or 'sc'
    """
    betas = np.asarray(betas, dtype=float)
    if betas.size == 0:
        return 0.0

    if law.case == 'I':
        tp = tau * law.e_tau
        gains = tp * betas ** 2 / (tp * betas + sigma2)
        scale = 1.0
    else:
        gains = tau * law.e_tau * betas ** 2 / sigma2
        scale = law.lam ** (1.0 - law.eta) if tier == 'bs' else 1.0

    energy = law.e_bs if tier == 'bs' else law.e_sc
    if kind == MRT:
        leading = energy * gains ** 2 / np.sum(gains)
    elif kind == ZFT:
        leading = np.full(gains.shape, energy / np.sum(1.0 / gains))
    else:
        raise ConfigError(f"Unknown precoder: {kind}")

    return float(np.sum(log2_rate(scale * leading / sigma2)))
