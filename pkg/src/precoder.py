"""
MRT and ZFT downlink precoders with β̂-based power normalization.
Also provides the complex Wishart sampler and inverse-trace moments behind the ZFT constants.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import linalg

from config import PowerConfig
from training import ChannelEstimate
from validator import ConfigError, DegenerateInputError

logger = logging.getLogger(__name__)

MRT = 'mrt'
ZFT = 'zft'

# Gram matrices worse than this are treated as rank deficient
MAX_CONDITION = 1e12


class PrecoderError(ArithmeticError):
    """Numerical failure while building a precoder."""

    def __init__(self, message: str, condition: float = float('inf')):
        super().__init__(message)
        self.condition = condition


@dataclass(frozen=True)
class Precoder:
    """
    Precoding at every node.

    The transmit matrix is W = α·conj(Ḡ) with Ḡ = Ĝ (MRT) or Ĝ(ĜᴴĜ)⁻¹ (ZFT),
    so user i of a node receives α Σ_k (ḡ_kᴴ g_i) x_k.
    """
    kind: str
    g_bar_bs: np.ndarray
    g_bar_sc: np.ndarray
    alpha_bs: float
    alpha_sc: np.ndarray
    condition_bs: float = 1.0
    condition_sc: np.ndarray = None

    @property
    def w_bs(self) -> np.ndarray:
        return self.alpha_bs * self.g_bar_bs.conj()

    @property
    def w_sc(self) -> np.ndarray:
        return self.alpha_sc[:, None, None] * self.g_bar_sc.conj()


def mrt_alpha_sq(beta_hats: np.ndarray, power: float, n_antennas: int) -> float:
    """
    α² = p/(N·Φ) with Φ = Σ β̂; zero when the node serves nobody.

    Raises:
        DegenerateInputError: If users are served but Φ = 0
    """
    if beta_hats.size == 0:
        return 0.0
    phi = float(np.sum(beta_hats))
    if phi <= 0:
        raise DegenerateInputError("MRT normalization undefined: all β̂ are zero")
    return power / (n_antennas * phi)


def zft_dof(n_antennas: int, n_users: int, dof_offset: int = 1) -> int:
    """
    Degrees of freedom N − K − offset used by the ZFT constants.

    Raises:
        ConfigError: If N − K − offset < 1
    """
    dof = n_antennas - n_users - dof_offset
    if dof < 1:
        raise ConfigError(f"ZFT needs N ≥ K + {dof_offset + 1}, got N={n_antennas}, K={n_users}")
    return dof


def zft_alpha_sq(beta_hats: np.ndarray, power: float, n_antennas: int, dof_offset: int = 1) -> float:
    """
    α² = (N − K − offset)·p/Ψ with Ψ = Σ 1/β̂; zero when the node serves nobody.

    Raises:
        DegenerateInputError: If a served user has β̂ = 0
    """
    if beta_hats.size == 0:
        return 0.0
    if np.any(beta_hats <= 0):
        raise DegenerateInputError("ZFT normalization undefined: a served user has β̂ = 0")
    psi = float(np.sum(1.0 / beta_hats))
    return zft_dof(n_antennas, beta_hats.size, dof_offset) * power / psi


def zero_forcing_directions(g_hat: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    Ḡ = Ĝ(ĜᴴĜ)⁻¹ through an economic QR of Ĝ.

    With Ĝ = QR, Ḡ = Q R⁻ᴴ, obtained by one triangular solve.

    Returns:
        (Ḡ, condition number of R)

    Raises:
        PrecoderError: If Ĝ is (numerically) rank deficient
    """
    if g_hat.shape[1] == 0:
        return g_hat.copy(), 1.0

    q, r = linalg.qr(g_hat, mode='economic')
    diag = np.abs(np.diag(r))
    if diag.min() == 0:
        raise PrecoderError("Estimated channel is rank deficient", float('inf'))

    condition = float(np.linalg.cond(r))
    if condition > MAX_CONDITION:
        raise PrecoderError(f"Estimated channel is ill-conditioned (cond={condition:.3e})", condition)

    g_bar_h = linalg.solve_triangular(r, q.conj().T, lower=False)
    return g_bar_h.conj().T, condition


def mrt(estimate: ChannelEstimate, powers: PowerConfig) -> Precoder:
    """
    Maximum-ratio transmission.

    α_BS = √(p_BS/(N_BS·Φ_B-M)); α_SC^(m) = √(p_SC^(m)/(N_SC·Φ_S-S^(m))).
    """
    n_bs = estimate.g_hat_bm.shape[0]
    n_sc = estimate.g_hat_ss.shape[1]
    gains = estimate.beta_hat
    served = gains.sue_mask

    alpha_bs = np.sqrt(mrt_alpha_sq(gains.bm, powers.p_bs, n_bs))
    alpha_sc = np.array([
        np.sqrt(mrt_alpha_sq(gains.ss[m][served[m]], powers.p_sc[m], n_sc))
        for m in range(gains.ss.shape[0])
    ])

    return Precoder(
        kind=MRT,
        g_bar_bs=estimate.g_hat_bm,
        g_bar_sc=estimate.g_hat_ss,
        alpha_bs=float(alpha_bs),
        alpha_sc=alpha_sc,
        condition_sc=np.ones(gains.ss.shape[0])
    )


def zft(estimate: ChannelEstimate, powers: PowerConfig, dof_offset: int = 1) -> Precoder:
    """
    Zero-forcing transmission, W = α·Ĝ*(ĜᵀĜ*)⁻¹ so that ĜᵀW = α·I.

    α_BS = √((N_BS − K − offset)·p_BS/Ψ_B-M) and likewise per SC.

    Raises:
        ConfigError: If a node has too few antennas
        PrecoderError: If an estimated channel matrix is rank deficient
    """
    n_bs = estimate.g_hat_bm.shape[0]
    n_sc = estimate.g_hat_ss.shape[1]
    gains = estimate.beta_hat
    num_sc = gains.ss.shape[0]

    alpha_bs = np.sqrt(zft_alpha_sq(gains.bm, powers.p_bs, n_bs, dof_offset))
    g_bar_bs, condition_bs = zero_forcing_directions(estimate.g_hat_bm)

    alpha_sc = np.zeros(num_sc)
    condition_sc = np.ones(num_sc)
    g_bar_sc = np.zeros_like(estimate.g_hat_ss)
    served = gains.sue_mask
    for m in range(num_sc):
        cols = np.flatnonzero(served[m])
        alpha_sc[m] = np.sqrt(zft_alpha_sq(gains.ss[m, cols], powers.p_sc[m], n_sc, dof_offset))
        g_bar_sc[m][:, cols], condition_sc[m] = zero_forcing_directions(estimate.g_hat_ss[m][:, cols])

    logger.debug(f"ZFT condition numbers: BS {condition_bs:.3e}, "
                 f"SC max {condition_sc.max() if num_sc else 1.0:.3e}")

    return Precoder(
        kind=ZFT,
        g_bar_bs=g_bar_bs,
        g_bar_sc=g_bar_sc,
        alpha_bs=float(alpha_bs),
        alpha_sc=alpha_sc,
        condition_bs=condition_bs,
        condition_sc=condition_sc
    )


def build_precoder(kind: str, estimate: ChannelEstimate, powers: PowerConfig, dof_offset: int = 1) -> Precoder:
    if kind == MRT:
        return mrt(estimate, powers)
    if kind == ZFT:
        return zft(estimate, powers, dof_offset)
    raise ConfigError(f"Unknown precoder: {kind}")


def sample_complex_wishart(m: int, n: int, rng: np.random.Generator, size: int = 1) -> np.ndarray:
    """
    Central complex Wishart W = XᴴX with X an n×m matrix of CN(0, 1) entries.

    Returns:
        Array of shape (size, m, m)
    """
    if n < m:
        raise ConfigError(f"Wishart needs n ≥ m, got n={n}, m={m}")
    x = (rng.standard_normal((size, n, m)) + 1j * rng.standard_normal((size, n, m))) / np.sqrt(2.0)
    return np.einsum('sni,snj->sij', x.conj(), x)


def inverse_wishart_trace_moments(m: int, n: int) -> Tuple[float, float]:
    """
    E[Tr W⁻¹] and E[Tr² W⁻¹] for W ~ CW_m(n, I).

    E[Tr W⁻¹] = m/(n−m);
    E[Tr² W⁻¹] = m/(n−m)·(n/((n−m)² − 1) + (m−1)/(n−m+1)).

    Raises:
        ConfigError: Unless n > m + 1
    """
    if n <= m + 1:
        raise ConfigError(f"Inverse moments need n > m + 1, got n={n}, m={m}")
    d = n - m
    first = m / d
    second = m / d * (n / (d * d - 1) + (m - 1) / (d + 1))
    return first, second
