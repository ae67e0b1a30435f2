"""
Transmit powers needed for a per-user target rate on the closed-form bounds.
Solves the coupled macro/small-cell pair by alternating one-dimensional bisection in dB.
"""
import logging
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Tuple

import numpy as np
import pandas as pd

from asymptotics import ScalingLaw
from bounds import BoundCoefficients, CopilotModel, bound_coefficients
from netgen import ScheduledProfile
from numeric_utils import db_to_linear
from training import PilotPlan, beta_hat
from validator import ConfigError

logger = logging.getLogger(__name__)

BRACKET_DB = (-100.0, 100.0)
TOLERANCE_DB = 1e-6
MAX_SWEEPS = 200


@dataclass(frozen=True)
class RequiredPower:
    n_sc: int
    n_bs: int
    p_bs_dbm: float
    p_sc_dbm: float
    feasible: bool
    sweeps: int
    residual_db: float


def target_sinr(target_rate: float, overhead: float = 1.0) -> float:
    """SINR at which overhead·log2(1 + SINR) equals the target."""
    if target_rate <= 0:
        raise ConfigError(f"Target rate must be positive, got {target_rate}")
    if not 0 < overhead <= 1:
        raise ConfigError(f"Overhead factor must lie in (0, 1], got {overhead}")
    return 2.0 ** (target_rate / overhead) - 1.0


def _bisect_db(worst_sinr: Callable[[float], float], target: float,
               bracket: Tuple[float, float]) -> float:
    """
    Smallest power (dB) whose worst-user SINR reaches the target.

    Returns nan when even the top of the bracket falls short.
    """
    lo, hi = bracket
    if worst_sinr(hi) < target:
        return float('nan')
    if worst_sinr(lo) >= target:
        return lo

    # half the tolerance so the sweep residual stays below it
    while hi - lo > TOLERANCE_DB / 2.0:
        mid = 0.5 * (lo + hi)
        if worst_sinr(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def solve_powers(coeffs: BoundCoefficients, target: float, sigma2: float,
                 bracket: Tuple[float, float] = BRACKET_DB,
                 max_sweeps: int = MAX_SWEEPS) -> Tuple[float, float, bool, int, float]:
    """
    Alternate MUE → p_BS and SUE → p_SC until neither moves by more than the tolerance.

    Starting from the bottom of the bracket both powers rise monotonically
    towards the smallest joint solution.

    Returns:
        (p_BS dB, p_SC dB, feasible, sweeps, residual dB)
    """
    has_mue = coeffs.a.size > 0
    has_sue = bool(coeffs.sue_mask.any())

    p_bs_db = bracket[0] if has_mue else float('nan')
    p_sc_db = bracket[0] if has_sue else float('nan')

    def linear(value_db: float) -> float:
        return 0.0 if np.isnan(value_db) else db_to_linear(value_db)

    def mue_worst(value_db: float) -> float:
        mue, _ = coeffs.sinr(db_to_linear(value_db), linear(p_sc_db), sigma2)
        return float(mue.min())

    def sue_worst(value_db: float) -> float:
        _, sue = coeffs.sinr(linear(p_bs_db), db_to_linear(value_db), sigma2)
        return float(sue[coeffs.sue_mask].min())

    residual = float('inf')
    for sweep in range(1, max_sweeps + 1):
        previous = (p_bs_db, p_sc_db)

        if has_mue:
            p_bs_db = _bisect_db(mue_worst, target, bracket)
            if np.isnan(p_bs_db):
                return float('nan'), float('nan'), False, sweep, float('nan')
        if has_sue:
            p_sc_db = _bisect_db(sue_worst, target, bracket)
            if np.isnan(p_sc_db):
                return float('nan'), float('nan'), False, sweep, float('nan')

        residual = max(abs(p_bs_db - previous[0]) if has_mue else 0.0,
                       abs(p_sc_db - previous[1]) if has_sue else 0.0)
        if residual < TOLERANCE_DB:
            return p_bs_db, p_sc_db, True, sweep, residual

    logger.warning(f"Power iteration stopped after {max_sweeps} sweeps (residual {residual:.3e} dB)")
    return p_bs_db, p_sc_db, False, max_sweeps, residual


def required_power(target_rate: float, law: ScalingLaw, n_sc_grid: Iterable[int],
                   profile: ScheduledProfile, plan: PilotPlan, kind: str, sigma2: float,
                   overhead: float = 1.0, copilot_model=CopilotModel.CONDITIONAL,
                   dof_offset: int = 1, cross_tier: bool = True) -> pd.DataFrame:
    """
    Required (p_BS, p_SC) for every user to reach target_rate, per N_SC.

    Args:
        target_rate: Per-user rate (bit/s/Hz)
        law: Supplies λ and the pilot power (case II scales it with N_SC)
        n_sc_grid: SC antenna counts
        profile: Large-scale table (typically the fixed-β table)
        plan: Pilot plan
        kind: 'mrt' or 'zft'
        sigma2: Noise power in the units of the resulting powers
        overhead: (T−τ)/T when the target is an effective rate, else 1
        cross_tier: False sizes each tier on its own interference (c = f = 0)

    Returns:
        DataFrame with n_sc, n_bs, p_bs_dbm, p_sc_dbm, feasible, sweeps, residual_db
    """
    target = target_sinr(target_rate, overhead)
    rows = []

    for n_sc in n_sc_grid:
        n_sc = int(n_sc)
        n_bs = law.n_bs(n_sc)
        gains = beta_hat(profile, plan, law.pilot_power(n_sc), sigma2)
        coeffs = bound_coefficients(kind, profile, gains, n_bs, n_sc, copilot_model, dof_offset)
        if not cross_tier:
            coeffs = coeffs.within_tier()

        p_bs_db, p_sc_db, feasible, sweeps, residual = solve_powers(coeffs, target, sigma2)
        if not feasible:
            logger.info(f"{kind.upper()} N_SC={n_sc}: target {target_rate} bit/s/Hz unreachable")

        rows.append(asdict(RequiredPower(
            n_sc=n_sc, n_bs=n_bs, p_bs_dbm=p_bs_db, p_sc_dbm=p_sc_db,
            feasible=feasible, sweeps=sweeps, residual_db=residual
        )))

    return pd.DataFrame(rows)
