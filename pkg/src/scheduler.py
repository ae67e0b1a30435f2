"""
User selection: random (RSA), greedy sum-rate (GSA) and per-cell asymptotic (ASA) schedulers.
Ties are broken by the lowest candidate index everywhere.
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Sequence, Tuple

import numpy as np

from asymptotics import ScalingLaw, cell_objective
from bounds import CopilotModel, bound
from config import PowerConfig
from netgen import Association, LargeScaleProfile, select_profile
from precoder import MRT, ZFT
from training import PilotPlan, beta_hat
from validator import ConfigError, InfeasibleScheduleError

logger = logging.getLogger(__name__)

Objective = Callable[[Sequence[int], Sequence[Sequence[int]]], float]


@dataclass
class Schedule:
    """
    Selected MUE indices I and per-SC SUE indices J_m (user ids of the drop).

    objective stays nan until the schedule is scored; trace lists the greedy
    additions as (tier, cell, user, objective after the addition).
    """
    mue_selected: List[int]
    sue_selected: List[List[int]]
    objective: float = float('nan')
    trace: List[Tuple[str, int, int, float]] = field(default_factory=list)

    def is_valid(self, association: Association, k: int, l: int) -> bool:
        """Sizes exactly K and L, subsets of the candidate sets, no duplicates."""
        if len(self.mue_selected) != k or len(set(self.mue_selected)) != k:
            return False
        if not set(self.mue_selected) <= set(association.mue_candidates.tolist()):
            return False
        if len(self.sue_selected) != len(association.sue_candidates):
            return False
        for chosen, candidates in zip(self.sue_selected, association.sue_candidates):
            if len(chosen) != l or len(set(chosen)) != l or not set(chosen) <= set(candidates.tolist()):
                return False
        return True


def check_feasible(association: Association, k: int, l: int):
    """
    Raises:
        InfeasibleScheduleError: If a candidate set is smaller than K or L
    """
    if not association.is_feasible(k, l):
        raise InfeasibleScheduleError(
            f"Candidate sets too small for K={k}, L={l}: sizes {association.counts()}")


def rsa(association: Association, k: int, l: int, rng: np.random.Generator) -> Schedule:
    """Uniform random subsets without replacement, in ascending index order."""
    check_feasible(association, k, l)
    mue = sorted(rng.choice(association.mue_candidates, size=k, replace=False).tolist())
    sue = [sorted(rng.choice(c, size=l, replace=False).tolist()) for c in association.sue_candidates]
    return Schedule(mue_selected=mue, sue_selected=sue)


def sum_rate_objective(full: LargeScaleProfile, plan: PilotPlan, kind: str, powers: PowerConfig,
                       n_bs: int, n_sc: int, num_sue: int, overhead: float,
                       copilot_model=CopilotModel.CONDITIONAL, dof_offset: int = 1) -> Objective:
    """
    R_SUM of a (possibly partial) selection from the closed-form bounds.

    Partial SUE sets are masked; β̂ uses the full training length τ of the plan.
    """
    def objective(mue: Sequence[int], sue: Sequence[Sequence[int]]) -> float:
        profile = select_profile(full, mue, sue, num_sue=num_sue)
        gains = beta_hat(profile, plan, powers.p_tau, powers.sigma2)
        result = bound(kind, profile, gains, powers, n_bs, n_sc, copilot_model, dof_offset)
        return overhead * result.sum_rate()

    return objective


def gsa(association: Association, k: int, l: int, objective: Objective) -> Schedule:
    """
    Greedy scheduling.

    Rounds of ⌊K/L⌋ MUE additions followed by one SUE per SC repeat until
    every SC holds L SUEs; a last pass adds K mod L MUEs. Each addition is
    the candidate maximizing the objective given all current selections.
    """
    check_feasible(association, k, l)
    num_sc = len(association.sue_candidates)

    mue: List[int] = []
    sue: List[List[int]] = [[] for _ in range(num_sc)]
    trace: List[Tuple[str, int, int, float]] = []
    value = float('nan')

    def add_mue():
        nonlocal value
        best, best_value = None, -np.inf
        for candidate in association.mue_candidates:
            if candidate in mue:
                continue
            score = objective(mue + [int(candidate)], sue)
            if score > best_value:
                best, best_value = int(candidate), score
        mue.append(best)
        value = best_value
        trace.append(('mue', -1, best, best_value))

    def add_sue(m: int):
        nonlocal value
        best, best_value = None, -np.inf
        for candidate in association.sue_candidates[m]:
            if candidate in sue[m]:
                continue
            tentative = [list(s) for s in sue]
            tentative[m].append(int(candidate))
            score = objective(mue, tentative)
            if score > best_value:
                best, best_value = int(candidate), score
        sue[m].append(best)
        value = best_value
        trace.append(('sue', m, best, best_value))

    if num_sc == 0 or l == 0:
        for _ in range(k):
            add_mue()
    else:
        per_round = k // l
        while any(len(s) < l for s in sue):
            for _ in range(per_round):
                add_mue()
            for m in range(num_sc):
                if len(sue[m]) < l:
                    add_sue(m)
        for _ in range(k % l):
            add_mue()

    logger.debug(f"GSA: {len(trace)} additions, objective {value:.6f}")
    return Schedule(mue_selected=mue, sue_selected=sue, objective=value, trace=trace)


def _greedy_cell(betas: np.ndarray, size: int, score: Callable[[np.ndarray], float]) -> List[int]:
    """Positions chosen one at a time, each maximizing the cell score of the set so far."""
    chosen: List[int] = []
    for _ in range(size):
        best, best_value = None, -np.inf
        for position in range(betas.shape[0]):
            if position in chosen:
                continue
            value = score(betas[chosen + [position]])
            if value > best_value:
                best, best_value = position, value
        chosen.append(best)
    return chosen


def asa_mrt(association: Association, full: LargeScaleProfile, k: int, l: int,
            law: ScalingLaw, sigma2: float, tau: int) -> Schedule:
    """
    Per-cell greedy selection on each cell's own leading-order MRT rate.

    The macro cell looks only at β_B-M of its candidates and SC m only at
    β_S-M(m) of its own candidates.
    """
    check_feasible(association, k, l)

    def macro_score(betas):
        return cell_objective(betas, MRT, law, sigma2, tau, tier='bs')

    def sc_score(betas):
        return cell_objective(betas, MRT, law, sigma2, tau, tier='sc')

    candidates = association.mue_candidates
    mue = [int(candidates[p]) for p in _greedy_cell(full.beta_bm[candidates], k, macro_score)]
    sue = []
    for m, candidates in enumerate(association.sue_candidates):
        positions = _greedy_cell(full.beta_sm[m, candidates], l, sc_score)
        sue.append([int(candidates[p]) for p in positions])
    return Schedule(mue_selected=mue, sue_selected=sue)


def top_k(candidates: np.ndarray, betas: np.ndarray, size: int) -> List[int]:
    """The size candidates with the largest β; equal β favour the lower index."""
    order = np.lexsort((candidates, -betas))
    return sorted(int(c) for c in candidates[order[:size]])


def asa_zft(association: Association, full: LargeScaleProfile, k: int, l: int) -> Schedule:
    """Max-β selection: the K strongest MUE candidates and the L strongest per SC."""
    check_feasible(association, k, l)
    mue = top_k(association.mue_candidates, full.beta_bm[association.mue_candidates], k)
    sue = [top_k(candidates, full.beta_sm[m, candidates], l)
           for m, candidates in enumerate(association.sue_candidates)]
    return Schedule(mue_selected=mue, sue_selected=sue)


def asa(association: Association, full: LargeScaleProfile, k: int, l: int, kind: str,
        law: ScalingLaw, sigma2: float, tau: int) -> Schedule:
    if kind == MRT:
        return asa_mrt(association, full, k, l, law, sigma2, tau)
    if kind == ZFT:
        return asa_zft(association, full, k, l)
    raise ConfigError(f"Unknown precoder: {kind}")


def exhaustive_search(association: Association, k: int, l: int, objective: Objective) -> Schedule:
    """Best selection over every combination; only for small instances."""
    check_feasible(association, k, l)

    best, best_value = None, -np.inf
    mue_options = itertools.combinations(association.mue_candidates.tolist(), k)
    sue_options = [list(itertools.combinations(c.tolist(), l)) for c in association.sue_candidates]

    for mue in mue_options:
        for sue in itertools.product(*sue_options):
            value = objective(list(mue), [list(s) for s in sue])
            if value > best_value:
                best, best_value = (list(mue), [list(s) for s in sue]), value

    return Schedule(mue_selected=best[0], sue_selected=best[1], objective=best_value)
