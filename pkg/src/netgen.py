"""
Two-tier geometry, pathloss and biased user association.
Produces the large-scale fading profile every later stage works from.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from validator import ConfigError

logger = logging.getLogger(__name__)

MACRO = -1

# Macro and small-cell pathloss models, distance in km
PATHLOSS_MODELS = {
    'macro': (128.1, 37.6),
    'sc': (140.7, 36.7),
}


@dataclass(frozen=True)
class NetworkLayout:
    """Node positions as complex numbers (x + iy, metres); BS at the origin."""
    bs_position: complex
    sc_positions: np.ndarray
    cell_radius: float
    sc_ring_radius: float

    @property
    def num_sc(self) -> int:
        return int(self.sc_positions.shape[0])


@dataclass(frozen=True)
class UserPopulation:
    positions: np.ndarray

    @property
    def count(self) -> int:
        return int(self.positions.shape[0])


@dataclass(frozen=True)
class LargeScaleProfile:
    """
    Linear large-scale coefficients of every node → user link.

    beta_bm has shape (n_users,), beta_sm has shape (S, n_users).
    """
    beta_bm: np.ndarray
    beta_sm: np.ndarray

    @property
    def num_users(self) -> int:
        return int(self.beta_bm.shape[0])

    @property
    def num_sc(self) -> int:
        return int(self.beta_sm.shape[0])


@dataclass(frozen=True)
class Association:
    """Per-user serving node (MACRO or SC index) and the resulting candidate sets."""
    tags: np.ndarray
    mue_candidates: np.ndarray
    sue_candidates: List[np.ndarray] = field(default_factory=list)

    def is_feasible(self, k: int, l: int) -> bool:
        """True when the macro cell has ≥ k candidates and every SC has ≥ l."""
        if len(self.mue_candidates) < k:
            return False
        return all(len(c) >= l for c in self.sue_candidates)

    def counts(self) -> List[int]:
        return [len(self.mue_candidates)] + [len(c) for c in self.sue_candidates]


@dataclass(frozen=True)
class ScheduledProfile:
    """
    Large-scale tensors restricted to the scheduled users.

    beta_bm (K,)        BS → MUE
    beta_sm (S, K)      SC n → MUE
    beta_bs (S, L)      BS → SUE j of SC m
    beta_ss (S, S, L)   [n, m, j]: SC n → SUE j of SC m
    sue_mask (S, L)     occupied SUE slots; empty slots carry β = 0
    """
    beta_bm: np.ndarray
    beta_sm: np.ndarray
    beta_bs: np.ndarray
    beta_ss: np.ndarray
    sue_mask: np.ndarray

    @property
    def num_mue(self) -> int:
        return int(self.beta_bm.shape[0])

    @property
    def num_sc(self) -> int:
        return int(self.beta_bs.shape[0])

    @property
    def num_sue(self) -> int:
        return int(self.beta_bs.shape[1])

    @property
    def sue_counts(self) -> np.ndarray:
        return self.sue_mask.sum(axis=1)

    @property
    def own_beta_ss(self) -> np.ndarray:
        """β from each SC to its own SUEs, shape (S, L)."""
        idx = np.arange(self.num_sc)
        return self.beta_ss[idx, idx, :]


def place_nodes(num_sc: int, sc_ring_radius: float, cell_radius: float,
                placement: str = 'ring', rng: Optional[np.random.Generator] = None) -> NetworkLayout:
    """
    Place the BS at the origin and S small cells.

    Args:
        num_sc: Number of small cells (S ≥ 1)
        sc_ring_radius: Ring radius in metres
        cell_radius: Macro cell radius in metres
        placement: 'ring' (SC s at angle 2πs/S) or 'uniform' (area-uniform in the cell)
        rng: Generator, required for uniform placement

    Returns:
        NetworkLayout

    Raises:
        ConfigError: On invalid counts, radii or placement
    """
    if num_sc < 1:
        raise ConfigError(f"Need at least one small cell, got S={num_sc}")
    if not 0 < sc_ring_radius <= cell_radius:
        raise ConfigError(f"Require 0 < ring radius ≤ cell radius, got {sc_ring_radius} and {cell_radius}")

    if placement == 'ring':
        angles = 2.0 * np.pi * np.arange(num_sc) / num_sc
        positions = sc_ring_radius * np.exp(1j * angles)
    elif placement == 'uniform':
        if rng is None:
            raise ConfigError("Uniform SC placement needs a random generator")
        positions = _uniform_disk(num_sc, cell_radius, rng)
    else:
        raise ConfigError(f"Unknown SC placement: {placement}")

    return NetworkLayout(
        bs_position=0j,
        sc_positions=positions,
        cell_radius=float(cell_radius),
        sc_ring_radius=float(sc_ring_radius)
    )


def _uniform_disk(n: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    r = radius * np.sqrt(rng.random(n))
    phi = 2.0 * np.pi * rng.random(n)
    return r * np.exp(1j * phi)


def place_users(n: int, cell_radius: float, rng: np.random.Generator) -> UserPopulation:
    """
    Drop n users area-uniformly over the cell disk (radius ∝ √u).

    Raises:
        ConfigError: If n is negative
    """
    if n < 0:
        raise ConfigError(f"User count must be non-negative, got {n}")
    return UserPopulation(positions=_uniform_disk(n, cell_radius, rng))


def place_clustered_users(n: int, layout: NetworkLayout, rng: np.random.Generator,
                          cluster_fraction: float = 2.0 / 3.0,
                          cluster_radius: float = 50.0) -> UserPopulation:
    """
    Hotspot drop: a share of the users sits around the small cells.

    round(cluster_fraction · n) users are spread round-robin over the SCs and
    placed area-uniformly within cluster_radius of their SC; the rest are
    uniform over the cell. Points outside the cell are pulled onto its edge.
    """
    if n < 0:
        raise ConfigError(f"User count must be non-negative, got {n}")
    if not 0.0 <= cluster_fraction <= 1.0:
        raise ConfigError(f"cluster_fraction must lie in [0, 1], got {cluster_fraction}")

    n_cluster = int(round(cluster_fraction * n))
    hosts = layout.sc_positions[np.arange(n_cluster) % layout.num_sc]
    clustered = hosts + _uniform_disk(n_cluster, cluster_radius, rng)
    spread = _uniform_disk(n - n_cluster, layout.cell_radius, rng)

    positions = np.concatenate([clustered, spread])
    outside = np.abs(positions) > layout.cell_radius
    positions[outside] = positions[outside] / np.abs(positions[outside]) * layout.cell_radius

    return UserPopulation(positions=positions)


def pathloss_db(kind: str, distance_km):
    """
    Pathloss in dB for a node kind.

    Args:
        kind: 'macro' or 'sc'
        distance_km: Link distance in km (scalar or array)

    Raises:
        ValueError: For non-positive distances
        ConfigError: For an unknown model
    """
    if kind not in PATHLOSS_MODELS:
        raise ConfigError(f"Unknown pathloss model: {kind}")

    d = np.asarray(distance_km, dtype=float)
    if np.any(d <= 0):
        raise ValueError(f"Pathloss needs positive distance, got {distance_km}")

    intercept, slope = PATHLOSS_MODELS[kind]
    value = intercept + slope * np.log10(d)
    return float(value) if value.ndim == 0 else value


def large_scale_profile(layout: NetworkLayout, users: UserPopulation,
                        min_distance_m: float = 10.0) -> LargeScaleProfile:
    """
    Linear β = 10^(−PL/10) for every BS and SC link.

    Distances below min_distance_m are clamped to it.
    """
    if users.count == 0:
        raise ConfigError("Cannot build a profile for an empty population")

    d_bs = np.maximum(np.abs(users.positions - layout.bs_position), min_distance_m)
    d_sc = np.maximum(np.abs(users.positions[None, :] - layout.sc_positions[:, None]), min_distance_m)

    beta_bm = 10.0 ** (-pathloss_db('macro', d_bs / 1000.0) / 10.0)
    beta_sm = 10.0 ** (-np.asarray(pathloss_db('sc', d_sc / 1000.0)) / 10.0)

    return LargeScaleProfile(beta_bm=np.atleast_1d(beta_bm), beta_sm=np.atleast_2d(beta_sm))


def associate(profile: LargeScaleProfile, kappa_bs: float, kappa_sc: float,
              p_bs: float, p_sc) -> Association:
    """
    Biased received-power association.

    Each user joins the arg-max of κ_BS·p_BS·β_BM and κ_SC·p_SC·β_SM(s).
    Ties go to the macro cell, then to the lowest SC index.

    Args:
        profile: LargeScaleProfile
        kappa_bs, kappa_sc: Bias factors (> 0)
        p_bs: BS power (linear)
        p_sc: SC power (linear), scalar or one value per SC
    """
    if kappa_bs <= 0 or kappa_sc <= 0:
        raise ConfigError("Bias factors must be positive")

    num_sc = profile.num_sc
    macro = kappa_bs * p_bs * profile.beta_bm
    tags = np.full(profile.num_users, MACRO, dtype=int)

    if num_sc > 0:
        p_sc = np.broadcast_to(np.asarray(p_sc, dtype=float), (num_sc,))
        biased = kappa_sc * p_sc[:, None] * profile.beta_sm
        best = np.argmax(biased, axis=0)
        best_power = biased[best, np.arange(profile.num_users)]
        joins_sc = best_power > macro
        tags[joins_sc] = best[joins_sc]

    mue_candidates = np.flatnonzero(tags == MACRO)
    sue_candidates = [np.flatnonzero(tags == s) for s in range(num_sc)]

    logger.debug(f"Association: {len(mue_candidates)} macro users, "
                 f"SC loads {[len(c) for c in sue_candidates]}")

    return Association(tags=tags, mue_candidates=mue_candidates, sue_candidates=sue_candidates)


def select_profile(profile: LargeScaleProfile, mue_selected: Sequence[int],
                   sue_selected: Sequence[Sequence[int]], num_sue: Optional[int] = None) -> ScheduledProfile:
    """
    Slice the scheduled users out of a full profile.

    SUE sets may be shorter than num_sue (partial schedules); the missing
    slots are masked out and carry β = 0.
    """
    num_sc = profile.num_sc
    if len(sue_selected) != num_sc:
        raise ConfigError(f"Expected {num_sc} SUE sets, got {len(sue_selected)}")

    mue = np.asarray(mue_selected, dtype=int)
    width = num_sue if num_sue is not None else max((len(s) for s in sue_selected), default=0)

    sue_mask = np.zeros((num_sc, width), dtype=bool)
    sue_index = np.zeros((num_sc, width), dtype=int)
    for m, chosen in enumerate(sue_selected):
        if len(chosen) > width:
            raise ConfigError(f"SC {m} has {len(chosen)} SUEs, more than {width}")
        sue_mask[m, :len(chosen)] = True
        sue_index[m, :len(chosen)] = chosen

    beta_bs = np.where(sue_mask, profile.beta_bm[sue_index], 0.0)
    beta_ss = np.where(sue_mask[None, :, :], profile.beta_sm[:, sue_index], 0.0)

    return ScheduledProfile(
        beta_bm=profile.beta_bm[mue],
        beta_sm=profile.beta_sm[:, mue],
        beta_bs=beta_bs,
        beta_ss=beta_ss,
        sue_mask=sue_mask
    )


def fixed_beta_profile(num_mue: int, num_sc: int, num_sue: int,
                       beta_bm: float = 1.0, beta_bs: float = 0.2,
                       beta_own: float = 5.0, beta_cross: float = 0.6,
                       beta_sm: float = 0.6) -> ScheduledProfile:
    """Deterministic large-scale table used by the analytic experiments."""
    beta_ss = np.full((num_sc, num_sc, num_sue), beta_cross)
    idx = np.arange(num_sc)
    beta_ss[idx, idx, :] = beta_own

    return ScheduledProfile(
        beta_bm=np.full(num_mue, beta_bm),
        beta_sm=np.full((num_sc, num_mue), beta_sm),
        beta_bs=np.full((num_sc, num_sue), beta_bs),
        beta_ss=beta_ss,
        sue_mask=np.ones((num_sc, num_sue), dtype=bool)
    )


def one_tier_profile(profile: ScheduledProfile) -> ScheduledProfile:
    """
    Merge every scheduled user onto the macro BS (no small cells).

    Users keep their BS links; MUEs come first, then SUEs in SC order.
    """
    beta_bm = np.concatenate([profile.beta_bm, profile.beta_bs[profile.sue_mask]])
    return ScheduledProfile(
        beta_bm=beta_bm,
        beta_sm=np.zeros((0, beta_bm.shape[0])),
        beta_bs=np.zeros((0, 0)),
        beta_ss=np.zeros((0, 0, 0)),
        sue_mask=np.zeros((0, 0), dtype=bool)
    )
