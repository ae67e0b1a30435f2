"""
Small-scale Rayleigh fading and AWGN.
Every channel family is G = H·D^{1/2} with H i.i.d. CN(0, 1).
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from netgen import ScheduledProfile
from validator import ConfigError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChannelDraw:
    """
    One realization of every node → scheduled-user channel.

    g_bm (N_BS, K)           BS → MUEs
    g_bs (S, N_BS, L)        BS → SUEs of SC m
    g_sm (S, N_SC, K)        SC n → MUEs
    g_ss (S, S, N_SC, L)     [n, m]: SC n → SUEs of SC m
    """
    g_bm: np.ndarray
    g_bs: np.ndarray
    g_sm: np.ndarray
    g_ss: np.ndarray

    @property
    def n_bs(self) -> int:
        return int(self.g_bm.shape[0])

    @property
    def n_sc(self) -> int:
        return int(self.g_sm.shape[1])


def complex_gaussian(shape: Tuple[int, ...], variance, rng: np.random.Generator) -> np.ndarray:
    """CN(0, variance) samples; variance broadcasts against shape."""
    scale = np.sqrt(np.maximum(np.asarray(variance, dtype=float), 0.0) / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def draw_channels(profile: ScheduledProfile, n_bs: int, n_sc: int,
                  rng: np.random.Generator) -> ChannelDraw:
    """
    Draw all channel matrices for a scheduled profile.

    Column j of each family has i.i.d. CN(0, β_j) entries; β = 0 gives a zero column.

    Raises:
        ConfigError: For antenna counts below 2
    """
    if n_bs < 2 or n_sc < 2:
        raise ConfigError(f"Antenna counts must be at least 2, got N_BS={n_bs}, N_SC={n_sc}")

    k = profile.num_mue
    s = profile.num_sc
    l = profile.num_sue

    g_bm = complex_gaussian((n_bs, k), profile.beta_bm[None, :], rng)
    g_bs = complex_gaussian((s, n_bs, l), profile.beta_bs[:, None, :], rng)
    g_sm = complex_gaussian((s, n_sc, k), profile.beta_sm[:, None, :], rng)
    g_ss = complex_gaussian((s, s, n_sc, l), profile.beta_ss[:, :, None, :], rng)

    return ChannelDraw(g_bm=g_bm, g_bs=g_bs, g_sm=g_sm, g_ss=g_ss)


def draw_noise(shape: Tuple[int, ...], sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """
    i.i.d. CN(0, σ²) noise.

    Raises:
        ValueError: If sigma2 is negative
    """
    if sigma2 < 0:
        raise ValueError(f"Noise power must be non-negative, got {sigma2}")
    if sigma2 == 0:
        return np.zeros(shape, dtype=complex)
    return complex_gaussian(shape, sigma2, rng)
