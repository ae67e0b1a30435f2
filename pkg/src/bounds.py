"""
Closed-form downlink rate lower bounds for MRT and ZFT under imperfect CSI.
Each bound is computed along two independent paths (term-by-term expectations and
the collected closed-form coefficients) and the discrepancy is logged.
"""
import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Tuple

import numpy as np

from config import PowerConfig
from netgen import ScheduledProfile
from numeric_utils import exact_sum, log2_rate
from precoder import MRT, ZFT, zft_dof
from training import BetaHat
from validator import ConfigError, DegenerateInputError

logger = logging.getLogger(__name__)

# Relative disagreement tolerated between the two paths on uncontaminated users
PATH_TOLERANCE = 1e-10


class CopilotModel(str, Enum):
    """How the co-pilot inter-small-cell term is evaluated on the expectation path."""
    CONDITIONAL = 'conditional'
    LITERAL = 'literal'


@dataclass(frozen=True)
class BoundCoefficients:
    """
    Linear-fractional form of the bounds.

    MUE i:      a_i·p_BS / (b_i·p_BS + Σ_n c[n,i]·p_n + σ²)
    SUE (m,j):  d[m,j]·p_m / (Σ_n e[n,m,j]·p_n + f[m,j]·p_BS + σ²)

    e[m,m,j] carries the own-cell terms. Nodes without users radiate nothing.
    """
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    e: np.ndarray
    f: np.ndarray
    sue_mask: np.ndarray

    def effective_powers(self, p_bs: float, p_sc) -> Tuple[float, np.ndarray]:
        num_sc = self.sue_mask.shape[0]
        p_sc = np.broadcast_to(np.asarray(p_sc, dtype=float), (num_sc,))
        active = self.sue_mask.any(axis=1)
        p_bs_eff = p_bs if self.a.size > 0 else 0.0
        return p_bs_eff, np.where(active, p_sc, 0.0)

    def sinr(self, p_bs: float, p_sc, sigma2: float) -> Tuple[np.ndarray, np.ndarray]:
        """Per-user SINR bounds; empty SUE slots report 0."""
        p_bs, p_sc = self.effective_powers(p_bs, p_sc)

        mue = self.a * p_bs / (self.b * p_bs + p_sc @ self.c + sigma2)

        interference = np.einsum('n,nmj->mj', p_sc, self.e) + self.f * p_bs + sigma2
        sue = np.where(self.sue_mask, self.d * p_sc[:, None] / interference, 0.0)

        return mue, sue

    def within_tier(self) -> 'BoundCoefficients':
        """The same bounds with the macro/small-cell cross terms c and f removed."""
        return replace(self, c=np.zeros_like(self.c), f=np.zeros_like(self.f))


@dataclass(frozen=True)
class BoundResult:
    """Per-user bounds from the canonical path plus the cross-check path."""
    kind: str
    mue_sinr: np.ndarray
    sue_sinr: np.ndarray
    collected_mue_sinr: np.ndarray
    collected_sue_sinr: np.ndarray
    sue_mask: np.ndarray
    copilot_model: CopilotModel

    @property
    def mue_rate(self) -> np.ndarray:
        return log2_rate(self.mue_sinr)

    @property
    def sue_rate(self) -> np.ndarray:
        return np.where(self.sue_mask, log2_rate(self.sue_sinr), 0.0)

    @property
    def max_discrepancy(self) -> float:
        return max(_relative_gap(self.mue_sinr, self.collected_mue_sinr, None),
                   _relative_gap(self.sue_sinr, self.collected_sue_sinr, self.sue_mask))

    def sum_rate(self) -> float:
        """Σ MUE + Σ SUE bound rates (no overhead factor)."""
        return exact_sum(np.concatenate([self.mue_rate, self.sue_rate[self.sue_mask]]))


def _relative_gap(x: np.ndarray, y: np.ndarray, mask) -> float:
    if x.size == 0:
        return 0.0
    gap = np.abs(x - y) / np.maximum(np.abs(y), 1e-300)
    if mask is not None:
        gap = gap[mask]
    return float(gap.max()) if gap.size else 0.0


def _ratio(numerator, denominator) -> np.ndarray:
    numerator, denominator = np.broadcast_arrays(np.asarray(numerator, dtype=float),
                                                 np.asarray(denominator, dtype=float))
    return np.divide(numerator, denominator, out=np.zeros(numerator.shape), where=denominator > 0)


@dataclass(frozen=True)
class _Sums:
    """Per-node sums Φ = Σβ̂ and Ψ = Σ1/β̂ and the ZFT degrees of freedom."""
    phi_bs: float
    phi_sc: np.ndarray
    psi_bs: float
    psi_sc: np.ndarray
    dof_bs: int
    dof_sc: np.ndarray
    copilot_pairs: np.ndarray


def _node_sums(profile: ScheduledProfile, gains: BetaHat, n_bs: int, n_sc: int,
               kind: str, dof_offset: int) -> _Sums:
    mask = profile.sue_mask
    counts = mask.sum(axis=1)
    num_sc = profile.num_sc

    phi_bs = float(np.sum(gains.bm))
    phi_sc = np.sum(np.where(mask, gains.ss, 0.0), axis=1)

    if kind == MRT:
        if profile.num_mue > 0 and phi_bs <= 0:
            raise DegenerateInputError("MRT normalization undefined: all MUE β̂ are zero")
        if np.any((counts > 0) & (phi_sc <= 0)):
            raise DegenerateInputError("MRT normalization undefined: an SC has all β̂ zero")

    if kind == ZFT:
        if np.any(gains.bm <= 0) or np.any(mask & (gains.ss <= 0)):
            raise DegenerateInputError("ZFT normalization undefined: a served user has β̂ = 0")

    psi_bs = float(np.sum(1.0 / gains.bm)) if profile.num_mue > 0 else 0.0
    psi_sc = np.sum(_ratio(mask.astype(float), gains.ss), axis=1)

    dof_bs, dof_sc = 0, np.zeros(num_sc, dtype=int)
    if kind == ZFT:
        if profile.num_mue > 0:
            dof_bs = zft_dof(n_bs, profile.num_mue, dof_offset)
        for m in range(num_sc):
            if counts[m] > 0:
                dof_sc[m] = zft_dof(n_sc, int(counts[m]), dof_offset)

    # co-pilot pairs (n ≠ m) whose pilot j is in use at SC n
    offdiag = ~np.eye(num_sc, dtype=bool)
    pairs = (gains.copilot & offdiag)[:, :, None] & mask[:, None, :] & mask[None, :, :]

    return _Sums(phi_bs=phi_bs, phi_sc=phi_sc, psi_bs=psi_bs, psi_sc=psi_sc,
                 dof_bs=dof_bs, dof_sc=dof_sc, copilot_pairs=pairs)


def _mrt_expectation_coefficients(profile: ScheduledProfile, gains: BetaHat, n_bs: int, n_sc: int,
                                  copilot_model: CopilotModel, sums: _Sums) -> BoundCoefficients:
    """
    Term-by-term path: E[1/SINR] built from the inverse-moment identities
    E‖ĝ‖⁻² = 1/((N−1)β̂), E‖ĝ‖⁻⁴ = 1/((N−1)(N−2)β̂²), with α² = p/(N·Φ).
    """
    num_sc = profile.num_sc
    offdiag = ~np.eye(num_sc, dtype=bool)

    # MUE
    n = n_bs
    beta, bh = profile.beta_bm, gains.bm
    unit_bs = 1.0 / (n * sums.phi_bs) if profile.num_mue > 0 else 0.0
    chi_bs = sums.phi_bs * (n * beta - 2.0 * bh) - (n - 4) * bh ** 2 - 2.0 * bh * beta
    a = unit_bs * (n - 1) * (n - 2) * bh ** 2
    b = unit_bs * chi_bs
    # α_n²·N_SC·Φ_n = p_n
    c = profile.beta_sm.copy()

    # SUE
    n = n_sc
    beta, bh = profile.own_beta_ss, gains.ss
    unit_sc = _ratio(1.0, n * sums.phi_sc)
    chi_sc = sums.phi_sc[:, None] * (n * beta - 2.0 * bh) - (n - 4) * bh ** 2 - 2.0 * bh * beta
    d = unit_sc[:, None] * (n - 1) * (n - 2) * bh ** 2

    spread = unit_sc[:, None, None] * n * sums.phi_sc[:, None, None] * profile.beta_ss
    if copilot_model == CopilotModel.CONDITIONAL:
        # E|ĝ_nnjᴴ g_nmj|² = N²β̂_nmj·β̂_nnj + N·β_nmj·β̂_nnj
        coherent = gains.cross * gains.ss[:, None, :]
    elif copilot_model == CopilotModel.LITERAL:
        coherent = profile.beta_ss * gains.cross
    else:
        raise ConfigError(f"Unknown co-pilot model: {copilot_model}")
    coherent = np.where(sums.copilot_pairs, unit_sc[:, None, None] * n * n * coherent, 0.0)

    e = np.where(offdiag[:, :, None], spread + coherent, 0.0)
    idx = np.arange(num_sc)
    e[idx, idx, :] = unit_sc[:, None] * chi_sc
    # α_BS²·N_BS·Φ_B-M = p_BS
    f = profile.beta_bs.copy()

    return BoundCoefficients(a=a, b=b, c=c, d=d, e=e, f=f, sue_mask=profile.sue_mask)


def _mrt_collected_coefficients(profile: ScheduledProfile, gains: BetaHat, n_bs: int, n_sc: int,
                              sums: _Sums) -> BoundCoefficients:
    """Collected coefficients a_M … f_M."""
    num_sc = profile.num_sc
    offdiag = ~np.eye(num_sc, dtype=bool)

    n = n_bs
    beta, bh = profile.beta_bm, gains.bm
    phi = sums.phi_bs if profile.num_mue > 0 else 1.0
    a = (n - 1) * (n - 2) * bh ** 2 / (n * phi)
    b = beta - 2.0 * bh / n - ((n - 4) * bh ** 2 + 2.0 * beta * bh) / (n * phi)
    c = profile.beta_sm.copy()

    n = n_sc
    beta, bh = profile.own_beta_ss, gains.ss
    inv_phi = _ratio(1.0, sums.phi_sc)[:, None]
    d = (n - 1) * (n - 2) * bh ** 2 * inv_phi / n
    own = beta - 2.0 * bh / n - ((n - 4) * bh ** 2 + 2.0 * beta * bh) * inv_phi / n

    beta_nn = profile.own_beta_ss[:, None, :]
    contamination = (n * _ratio(profile.beta_ss ** 2, beta_nn ** 2) * gains.ss[:, None, :] ** 2
                     * _ratio(1.0, sums.phi_sc)[:, None, None])
    e = np.where(offdiag[:, :, None],
                 profile.beta_ss + np.where(sums.copilot_pairs, contamination, 0.0), 0.0)
    idx = np.arange(num_sc)
    e[idx, idx, :] = own
    f = profile.beta_bs.copy()

    return BoundCoefficients(a=a, b=b, c=c, d=d, e=e, f=f, sue_mask=profile.sue_mask)


def _zft_expectation_coefficients(profile: ScheduledProfile, gains: BetaHat,
                                  copilot_model: CopilotModel, sums: _Sums) -> BoundCoefficients:
    """
    Term-by-term path from E[(ĜᴴĜ)⁻¹] = D̂⁻¹/d, with α² = d·p/Ψ.

    The desired term is exactly α²; the error leaks through E Tr(ḠᴴḠ) = Ψ/d.
    """
    num_sc = profile.num_sc
    offdiag = ~np.eye(num_sc, dtype=bool)

    unit_bs = sums.dof_bs / sums.psi_bs if profile.num_mue > 0 else 0.0
    leak_bs = sums.psi_bs / sums.dof_bs if profile.num_mue > 0 else 0.0
    a = np.full(profile.num_mue, unit_bs)
    b = unit_bs * (profile.beta_bm - gains.bm) * leak_bs
    # α_n²·Ψ_n/d_n = p_n
    c = profile.beta_sm.copy()

    unit_sc = _ratio(sums.dof_sc, sums.psi_sc)
    leak_sc = _ratio(sums.psi_sc, sums.dof_sc)
    xi = profile.own_beta_ss - gains.ss

    d = np.where(profile.sue_mask, unit_sc[:, None], 0.0)
    spread = (unit_sc * leak_sc)[:, None, None] * profile.beta_ss

    beta_nn = profile.own_beta_ss[:, None, :]
    coherent = _ratio(profile.beta_ss ** 2, beta_nn ** 2)
    if copilot_model == CopilotModel.CONDITIONAL:
        # residual of g_nmj given ĝ_nnj has variance β_nmj − β̂_nmj
        correction = gains.cross * leak_sc[:, None, None]
    elif copilot_model == CopilotModel.LITERAL:
        correction = _ratio(profile.beta_ss, sums.dof_sc[:, None, None] * gains.ss[:, None, :])
    else:
        raise ConfigError(f"Unknown co-pilot model: {copilot_model}")
    delta = np.where(sums.copilot_pairs, unit_sc[:, None, None] * (coherent - correction), 0.0)

    e = np.where(offdiag[:, :, None], spread + delta, 0.0)
    idx = np.arange(num_sc)
    e[idx, idx, :] = unit_sc[:, None] * xi * leak_sc[:, None]
    f = profile.beta_bs.copy()

    return BoundCoefficients(a=a, b=b, c=c, d=d, e=e, f=f, sue_mask=profile.sue_mask)


def _zft_collected_coefficients(profile: ScheduledProfile, gains: BetaHat, sums: _Sums) -> BoundCoefficients:
    """Collected coefficients a_Z … f_Z."""
    num_sc = profile.num_sc
    offdiag = ~np.eye(num_sc, dtype=bool)

    a = np.full(profile.num_mue, sums.dof_bs / sums.psi_bs if profile.num_mue > 0 else 0.0)
    b = profile.beta_bm - gains.bm
    c = profile.beta_sm.copy()

    d = np.where(profile.sue_mask, _ratio(sums.dof_sc, sums.psi_sc)[:, None], 0.0)
    own = profile.own_beta_ss - gains.ss

    beta_nn = profile.own_beta_ss[:, None, :]
    inv_psi = _ratio(1.0, sums.psi_sc)[:, None, None]
    contamination = (-_ratio(profile.beta_ss, gains.ss[:, None, :]) * inv_psi
                     + sums.dof_sc[:, None, None] * _ratio(profile.beta_ss ** 2, beta_nn ** 2) * inv_psi)
    e = np.where(offdiag[:, :, None],
                 profile.beta_ss + np.where(sums.copilot_pairs, contamination, 0.0), 0.0)
    idx = np.arange(num_sc)
    e[idx, idx, :] = own
    f = profile.beta_bs.copy()

    return BoundCoefficients(a=a, b=b, c=c, d=d, e=e, f=f, sue_mask=profile.sue_mask)


def bound_coefficients(kind: str, profile: ScheduledProfile, gains: BetaHat, n_bs: int, n_sc: int,
                       copilot_model: CopilotModel = CopilotModel.CONDITIONAL,
                       dof_offset: int = 1, path: str = 'expectation') -> BoundCoefficients:
    """
    Coefficients of either path.

    Args:
        kind: 'mrt' or 'zft'
        path: 'expectation' (canonical) or 'collected'
    """
    copilot_model = CopilotModel(copilot_model)
    sums = _node_sums(profile, gains, n_bs, n_sc, kind, dof_offset)

    if kind == MRT:
        if path == 'collected':
            return _mrt_collected_coefficients(profile, gains, n_bs, n_sc, sums)
        return _mrt_expectation_coefficients(profile, gains, n_bs, n_sc, copilot_model, sums)
    if kind == ZFT:
        if path == 'collected':
            return _zft_collected_coefficients(profile, gains, sums)
        return _zft_expectation_coefficients(profile, gains, copilot_model, sums)
    raise ConfigError(f"Unknown precoder: {kind}")


def _evaluate(kind: str, profile: ScheduledProfile, gains: BetaHat, powers: PowerConfig,
              n_bs: int, n_sc: int, copilot_model, dof_offset: int) -> BoundResult:
    copilot_model = CopilotModel(copilot_model)
    canonical = bound_coefficients(kind, profile, gains, n_bs, n_sc, copilot_model, dof_offset)
    collected = bound_coefficients(kind, profile, gains, n_bs, n_sc, copilot_model, dof_offset, path='collected')

    mue, sue = canonical.sinr(powers.p_bs, powers.p_sc, powers.sigma2)
    mue_t, sue_t = collected.sinr(powers.p_bs, powers.p_sc, powers.sigma2)

    result = BoundResult(kind=kind, mue_sinr=mue, sue_sinr=sue, collected_mue_sinr=mue_t,
                         collected_sue_sinr=sue_t, sue_mask=profile.sue_mask, copilot_model=copilot_model)

    # SUE (m, j) is contaminated when another SC n on its pilot block serves a SUE j
    copilot_off = gains.copilot & ~np.eye(profile.num_sc, dtype=bool)
    contaminated = np.any(copilot_off[:, :, None] & profile.sue_mask[:, None, :], axis=0)
    clean_gap = max(_relative_gap(mue, mue_t, None),
                    _relative_gap(sue, sue_t, profile.sue_mask & ~contaminated))

    logger.debug(f"{kind.upper()} bound paths: max relative discrepancy {result.max_discrepancy:.3e} "
                 f"({copilot_model.value} co-pilot model)")
    if clean_gap > PATH_TOLERANCE:
        logger.warning(f"{kind.upper()} bound paths disagree on uncontaminated users "
                       f"(relative gap {clean_gap:.3e})")

    return result


def bound_mrt(profile: ScheduledProfile, gains: BetaHat, powers: PowerConfig, n_bs: int, n_sc: int,
              copilot_model=CopilotModel.CONDITIONAL) -> BoundResult:
    """
    Jensen lower bound on every scheduled user's MRT rate.

    Args:
        profile: Scheduled large-scale tensors (partial SUE sets allowed)
        gains: Effective gains, carrying the co-pilot structure
        powers: Linear powers and noise
        n_bs, n_sc: Antenna counts (≥ 3 so both inverse moments exist)
        copilot_model: Evaluation of the co-pilot inter-SC term

    Returns:
        BoundResult from the expectation path, collected path kept for comparison
    """
    if n_bs < 3 or n_sc < 3:
        raise ConfigError(f"MRT bounds need N ≥ 3 antennas, got N_BS={n_bs}, N_SC={n_sc}")
    return _evaluate(MRT, profile, gains, powers, n_bs, n_sc, copilot_model, 1)


def bound_zft(profile: ScheduledProfile, gains: BetaHat, powers: PowerConfig, n_bs: int, n_sc: int,
              copilot_model=CopilotModel.CONDITIONAL, dof_offset: int = 1) -> BoundResult:
    """Jensen lower bound on every scheduled user's ZFT rate (see bound_mrt)."""
    return _evaluate(ZFT, profile, gains, powers, n_bs, n_sc, copilot_model, dof_offset)


def bound(kind: str, profile: ScheduledProfile, gains: BetaHat, powers: PowerConfig, n_bs: int, n_sc: int,
          copilot_model=CopilotModel.CONDITIONAL, dof_offset: int = 1) -> BoundResult:
    if kind == MRT:
        return bound_mrt(profile, gains, powers, n_bs, n_sc, copilot_model)
    if kind == ZFT:
        return bound_zft(profile, gains, powers, n_bs, n_sc, copilot_model, dof_offset)
    raise ConfigError(f"Unknown precoder: {kind}")


def expected_ssi(kind: str, profile: ScheduledProfile, gains: BetaHat, powers: PowerConfig,
                 n_bs: int, n_sc: int, copilot_model=CopilotModel.CONDITIONAL,
                 dof_offset: int = 1) -> np.ndarray:
    """
    Expected inter-small-cell interference per pair, shape (S, S, L) indexed
    [n, m, j]: power from SC n at SUE j of SC m (zero on the diagonal).
    """
    coeffs = bound_coefficients(kind, profile, gains, n_bs, n_sc, copilot_model, dof_offset)
    _, p_sc = coeffs.effective_powers(powers.p_bs, powers.p_sc)
    ssi = coeffs.e * p_sc[:, None, None]
    idx = np.arange(profile.num_sc)
    ssi[idx, idx, :] = 0.0
    return np.where(profile.sue_mask[None, :, :], ssi, 0.0)
