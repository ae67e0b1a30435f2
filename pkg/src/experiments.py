"""
Experiment orchestration: drops, association, scheduling and rate evaluation per sweep point.
Each experiment kind emits one row per sweep point with a fixed set of columns.
"""
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from asymptotics import ScalingLaw, asymptotic_rates
from bounds import bound
from config import ExperimentConfig, PowerConfig
from netgen import (Association, LargeScaleProfile, ScheduledProfile, associate, fixed_beta_profile,
                    large_scale_profile, one_tier_profile, place_clustered_users, place_nodes,
                    place_users, select_profile)
from numeric_utils import STREAM_GEOMETRY, STREAM_SCHEDULING, exact_sum, substream
from rates import RateReport, Scenario, boundary_user_rate, mc_rates, overhead_factor, spectral_efficiency
from required_power import required_power
from scheduler import Schedule, asa, gsa, rsa, sum_rate_objective
from training import PilotPlan, beta_hat, build_pilots
from validator import ConfigError, InfeasibleScheduleError, validate_config

logger = logging.getLogger(__name__)

SCHEDULERS = ('rsa', 'gsa', 'asa')
RATE_METRICS = ('se_mc', 'se_bound', 'boundary_mc', 'boundary_bound', 'min_user_mc', 'mean_user_mc')
SCHEDULING_METRICS = ('objective', 'se_mc')
ONE_TIER_METRICS = ('se_mc_two_tier', 'se_bound_two_tier', 'se_mc_one_tier', 'se_bound_one_tier',
                    'boundary_mc_two_tier', 'boundary_mc_one_tier')


@dataclass(frozen=True)
class Drop:
    """One user drop; infeasible when every resample lacked candidates."""
    index: int
    attempts: int
    feasible: bool
    full: Optional[LargeScaleProfile] = None
    association: Optional[Association] = None


@dataclass
class ExperimentResult:
    """Rows (one per sweep point) plus run metadata for the sidecar."""
    experiment: str
    rows: List[Dict[str, object]] = field(default_factory=list)
    points: List[Dict[str, object]] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)


def generate_drop(config: ExperimentConfig, drop: int, powers: PowerConfig) -> Drop:
    """
    Drop users and associate them, resampling until every cell has enough candidates.

    The geometry of drop d, attempt a comes from the (d, a) geometry stream,
    so every sweep point sees the same drops.
    """
    for attempt in range(config.max_drop_retries + 1):
        rng = substream(config.seed, STREAM_GEOMETRY, drop, attempt)
        layout = place_nodes(config.num_sc, config.sc_ring_radius_m, config.cell_radius_m,
                             config.sc_placement, rng)
        if config.user_layout == 'clustered':
            users = place_clustered_users(config.num_users, layout, rng,
                                          config.cluster_fraction, config.cluster_radius_m)
        else:
            users = place_users(config.num_users, config.cell_radius_m, rng)

        full = large_scale_profile(layout, users, config.min_distance_m)
        association = associate(full, config.kappa_bs, config.kappa_sc, powers.p_bs, powers.p_sc)

        if association.is_feasible(config.k_mue, config.l_sue):
            return Drop(index=drop, attempts=attempt + 1, feasible=True, full=full, association=association)

        logger.warning(f"Drop {drop} attempt {attempt}: candidate sizes {association.counts()} "
                       f"too small for K={config.k_mue}, L={config.l_sue}; resampling")

    return Drop(index=drop, attempts=config.max_drop_retries + 1, feasible=False)


def make_schedule(config: ExperimentConfig, drop: Drop, kind: str, algorithm: str, powers: PowerConfig,
                  plan: PilotPlan, n_bs: int) -> Schedule:
    """Run one scheduler on a feasible drop and score it with the bound-based R_SUM."""
    k, l = config.k_mue, config.l_sue
    objective = sum_rate_objective(drop.full, plan, kind, powers, n_bs, config.n_sc, l,
                                   overhead_factor(config.coherence_T, plan.tau),
                                   config.copilot_model, config.zf_dof_offset)

    if algorithm == 'rsa':
        schedule = rsa(drop.association, k, l, substream(config.seed, STREAM_SCHEDULING, drop.index))
    elif algorithm == 'gsa':
        return gsa(drop.association, k, l, objective)
    elif algorithm == 'asa':
        # leading-order objective at the configured powers
        law = replace(ScalingLaw.from_config(config), e_tau=powers.p_tau, e_bs=powers.p_bs,
                      e_sc=float(powers.p_sc[0]))
        schedule = asa(drop.association, drop.full, k, l, kind, law, powers.sigma2, plan.tau)
    else:
        raise ConfigError(f"Unknown scheduler: {algorithm}")

    schedule.objective = objective(schedule.mue_selected, schedule.sue_selected)
    return schedule


def evaluate(config: ExperimentConfig, scenario: Scenario, kind: str, key) -> RateReport:
    """Monte-Carlo rates of a scenario with the closed-form bounds attached."""
    report = mc_rates(scenario, kind, config.trials, config.seed, key, config.workers)
    result = bound(kind, scenario.profile, scenario.gains(), scenario.powers, scenario.n_bs,
                   scenario.n_sc, config.copilot_model, config.zf_dof_offset)
    return report.with_bounds(result)


def _mean(values: List[float]) -> float:
    return exact_sum(values) / len(values) if values else float('nan')


def _two_tier_scenario(config: ExperimentConfig, profile: ScheduledProfile, plan: PilotPlan,
                       powers: PowerConfig) -> Scenario:
    return Scenario(profile=profile, plan=plan, powers=powers, n_bs=config.resolved_n_bs,
                    n_sc=config.n_sc, estimation=config.estimation, dof_offset=config.zf_dof_offset)


def _rate_metrics(report: RateReport, coherence_T: int, tau: int) -> Dict[str, float]:
    mue, sue = report.rates('mc')
    users = np.concatenate([mue, sue[report.sue_mask]])
    return {
        'se_mc': spectral_efficiency(report, coherence_T, tau, 'mc'),
        'se_bound': spectral_efficiency(report, coherence_T, tau, 'bound'),
        'boundary_mc': boundary_user_rate(report, 'mc'),
        'boundary_bound': boundary_user_rate(report, 'bound'),
        'min_user_mc': float(users.min()),
        'mean_user_mc': exact_sum(users) / users.size,
    }


def point_columns(config: ExperimentConfig) -> List[str]:
    """Metric columns of one sweep-point row, in emission order."""
    if config.experiment == 'scheduling':
        return [f'{name}_{algorithm}_{kind}' for kind in config.precoders
                for algorithm in SCHEDULERS for name in SCHEDULING_METRICS]
    names = ONE_TIER_METRICS if config.experiment == 'one-tier' else RATE_METRICS
    return [f'{name}_{kind}' for kind in config.precoders for name in names]


def _collected_row(config: ExperimentConfig, collected: Dict[str, List[float]], feasible: int) -> Dict[str, object]:
    row: Dict[str, object] = {'feasible_drops': feasible, 'infeasible': feasible == 0}
    for column in point_columns(config):
        row[column] = _mean(collected.get(column, []))
    return row


def _run_table_point(config: ExperimentConfig, point: int, meta: Dict[str, object]) -> Dict[str, object]:
    """The fixed-β table as the single, unscheduled drop of a rate-sweep or pr-sweep point."""
    profile = fixed_beta_profile(config.k_mue, config.num_sc, config.l_sue)
    powers = config.table_powers()
    plan = build_pilots(config.k_mue, config.l_sue, config.gamma, config.num_sc)
    collected: Dict[str, List[float]] = {}

    for kind in config.precoders:
        report = evaluate(config, _two_tier_scenario(config, profile, plan, powers), kind, (point, 0))
        meta['trial_retries'] += report.retries
        for name, value in _rate_metrics(report, config.coherence_T, plan.tau).items():
            collected[f'{name}_{kind}'] = [value]

    return _collected_row(config, collected, 1)


def _run_rate_point(config: ExperimentConfig, point: int, meta: Dict[str, object]) -> Dict[str, object]:
    """rate-sweep and pr-sweep: MC and bound spectral efficiency averaged over drops."""
    if config.fixed_beta:
        return _run_table_point(config, point, meta)

    powers = config.power_config()
    plan = build_pilots(config.k_mue, config.l_sue, config.gamma, config.num_sc)
    collected: Dict[str, List[float]] = {}
    feasible = 0

    for d in range(config.drops):
        drop = generate_drop(config, d, powers)
        meta['drop_attempts'].append(drop.attempts)
        if not drop.feasible:
            continue
        feasible += 1

        for kind in config.precoders:
            schedule = make_schedule(config, drop, kind, config.scheduler, powers, plan, config.resolved_n_bs)
            profile = select_profile(drop.full, schedule.mue_selected, schedule.sue_selected, config.l_sue)
            report = evaluate(config, _two_tier_scenario(config, profile, plan, powers), kind, (point, d))
            meta['trial_retries'] += report.retries
            for name, value in _rate_metrics(report, config.coherence_T, plan.tau).items():
                collected.setdefault(f'{name}_{kind}', []).append(value)

    return _collected_row(config, collected, feasible)


def _run_scheduling_point(config: ExperimentConfig, point: int, meta: Dict[str, object]) -> Dict[str, object]:
    """Scheduler comparison: bound objective and MC spectral efficiency per algorithm."""
    powers = config.power_config()
    plan = build_pilots(config.k_mue, config.l_sue, config.gamma, config.num_sc)
    collected: Dict[str, List[float]] = {}
    feasible = 0

    for d in range(config.drops):
        drop = generate_drop(config, d, powers)
        meta['drop_attempts'].append(drop.attempts)
        if not drop.feasible:
            continue
        feasible += 1

        for kind in config.precoders:
            for algorithm in SCHEDULERS:
                schedule = make_schedule(config, drop, kind, algorithm, powers, plan, config.resolved_n_bs)
                profile = select_profile(drop.full, schedule.mue_selected, schedule.sue_selected, config.l_sue)
                report = evaluate(config, _two_tier_scenario(config, profile, plan, powers), kind, (point, d))
                meta['trial_retries'] += report.retries
                collected.setdefault(f'objective_{algorithm}_{kind}', []).append(schedule.objective)
                collected.setdefault(f'se_mc_{algorithm}_{kind}', []).append(
                    spectral_efficiency(report, config.coherence_T, plan.tau, 'mc'))

    return _collected_row(config, collected, feasible)


def _run_one_tier_point(config: ExperimentConfig, point: int, meta: Dict[str, object]) -> Dict[str, object]:
    """
    Two-tier network against a single macro BS with N_BS + S·N_SC antennas
    serving the same K + S·L users on orthogonal pilots.
    """
    powers = config.power_config()
    plan = build_pilots(config.k_mue, config.l_sue, config.gamma, config.num_sc)
    k_total = config.k_mue + config.num_sc * config.l_sue
    merged_plan = build_pilots(k_total, 0, 0)
    merged_powers = replace(powers, p_sc=np.zeros(0))
    n_total = config.resolved_n_bs + config.num_sc * config.n_sc
    collected: Dict[str, List[float]] = {}
    feasible = 0

    for d in range(config.drops):
        drop = generate_drop(config, d, powers)
        meta['drop_attempts'].append(drop.attempts)
        if not drop.feasible:
            continue
        feasible += 1

        for kind in config.precoders:
            schedule = make_schedule(config, drop, kind, config.scheduler, powers, plan, config.resolved_n_bs)
            profile = select_profile(drop.full, schedule.mue_selected, schedule.sue_selected, config.l_sue)
            two_tier = evaluate(config, _two_tier_scenario(config, profile, plan, powers), kind, (point, d))

            merged = Scenario(profile=one_tier_profile(profile), plan=merged_plan, powers=merged_powers,
                              n_bs=n_total, n_sc=config.n_sc, estimation=config.estimation,
                              dof_offset=config.zf_dof_offset)
            one_tier = evaluate(config, merged, kind, (point, d))
            meta['trial_retries'] += two_tier.retries + one_tier.retries

            # the former SUEs follow the MUEs in the merged profile
            former_sue = one_tier.mue_mean[config.k_mue:]
            values = {
                'se_mc_two_tier': spectral_efficiency(two_tier, config.coherence_T, plan.tau, 'mc'),
                'se_bound_two_tier': spectral_efficiency(two_tier, config.coherence_T, plan.tau, 'bound'),
                'se_mc_one_tier': spectral_efficiency(one_tier, config.coherence_T, merged_plan.tau, 'mc'),
                'se_bound_one_tier': spectral_efficiency(one_tier, config.coherence_T, merged_plan.tau, 'bound'),
                'boundary_mc_two_tier': boundary_user_rate(two_tier, 'mc'),
                'boundary_mc_one_tier': exact_sum(former_sue) / former_sue.size,
            }
            for name, value in values.items():
                collected.setdefault(f'{name}_{kind}', []).append(value)

    return _collected_row(config, collected, feasible)


def _tags(values: np.ndarray) -> str:
    return '|'.join(sorted(set(str(v) for v in np.ravel(values))))


def analytic_profile(config: ExperimentConfig) -> Optional[ScheduledProfile]:
    """Fixed-β table, or the RSA-scheduled first drop when fixed_beta is off."""
    if config.fixed_beta:
        return fixed_beta_profile(config.k_mue, config.num_sc, config.l_sue)

    powers = config.power_config()
    drop = generate_drop(config, 0, powers)
    if not drop.feasible:
        return None
    schedule = rsa(drop.association, config.k_mue, config.l_sue,
                   substream(config.seed, STREAM_SCHEDULING, drop.index))
    return select_profile(drop.full, schedule.mue_selected, schedule.sue_selected, config.l_sue)


def _power_scaling_metrics(config: ExperimentConfig, law: ScalingLaw, plan: PilotPlan,
                           profile: ScheduledProfile, n_sc: int, sigma2: float,
                           overhead: float) -> Dict[str, object]:
    n_bs = law.n_bs(n_sc)
    p_tau, p_bs, p_sc = law.scaled_powers(n_sc)
    powers = PowerConfig(p_bs=p_bs, p_sc=np.full(config.num_sc, p_sc), p_tau=p_tau, sigma2=sigma2)
    gains = beta_hat(profile, plan, p_tau, sigma2)
    mask = profile.sue_mask
    values: Dict[str, object] = {}

    for kind in config.precoders:
        bounds = bound(kind, profile, gains, powers, n_bs, n_sc, config.copilot_model,
                       config.zf_dof_offset)
        limits = asymptotic_rates(profile, plan, law, kind, sigma2, config.copilot_model)
        power = required_power(config.target_rate, law, [n_sc], profile, plan, kind, sigma2,
                               overhead, config.copilot_model, config.zf_dof_offset,
                               config.cross_tier).iloc[0]

        values.update({
            f'mue_bound_{kind}': float(np.mean(bounds.mue_rate)),
            f'sue_bound_{kind}': float(np.mean(bounds.sue_rate[mask])),
            f'mue_limit_{kind}': float(np.mean(limits.mue_rate)),
            f'sue_limit_{kind}': float(np.mean(limits.sue_rate[mask])),
            f'mue_limit_tag_{kind}': _tags(limits.mue_tag),
            f'sue_limit_tag_{kind}': _tags(limits.sue_tag[mask]),
            f'p_bs_dbm_{kind}': float(power['p_bs_dbm']),
            f'p_sc_dbm_{kind}': float(power['p_sc_dbm']),
            f'power_feasible_{kind}': bool(power['feasible']),
            f'residual_db_{kind}': float(power['residual_db']),
        })
    return values


def _run_power_scaling(config: ExperimentConfig, result: ExperimentResult):
    """
    Bounds, large-antenna limits and required powers along the N_SC grid.

    The fixed-β table is evaluated in normalized units (σ² = 1, energies from
    the e_*_db keys); otherwise the first drop is used with physical units.
    """
    started = time.perf_counter()
    law = ScalingLaw.from_config(config)
    sigma2 = 1.0 if config.fixed_beta else config.sigma2
    plan = build_pilots(config.k_mue, config.l_sue, config.gamma, config.num_sc)
    overhead = overhead_factor(config.coherence_T, plan.tau) if config.include_overhead else 1.0
    profile = analytic_profile(config)

    for point, value in enumerate(config.sweep_values):
        point_started = time.perf_counter()
        n_sc = int(value)
        n_bs = law.n_bs(n_sc)
        row: Dict[str, object] = {'sweep_value': float(value), 'seed': config.seed, 'trials': config.trials,
                                  'n_sc': n_sc, 'n_bs': n_bs, 'infeasible': profile is None}

        if profile is not None:
            try:
                row.update(_power_scaling_metrics(config, law, plan, profile, n_sc, sigma2, overhead))
            except ConfigError as e:
                logger.warning(f"Power scaling point N_SC={n_sc} infeasible: {e}")
                row['infeasible'] = True
        if row['infeasible']:
            row.update({f'power_feasible_{kind}': False for kind in config.precoders})

        result.rows.append(row)
        result.points.append({'sweep_value': float(value), 'drop_attempts': [], 'trial_retries': 0,
                              'runtime_s': time.perf_counter() - point_started})
        logger.info(f"Power scaling point {point + 1}/{len(config.sweep_values)}: N_SC={n_sc}, N_BS={n_bs}")

    logger.info(f"Power scaling finished in {time.perf_counter() - started:.2f} s")


_POINT_RUNNERS = {
    'rate-sweep': _run_rate_point,
    'pr-sweep': _run_rate_point,
    'scheduling': _run_scheduling_point,
    'one-tier': _run_one_tier_point,
}


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """
    Run every sweep point of the configured experiment.

    Infeasible points are flagged in their row and the run continues.
    """
    result = ExperimentResult(experiment=config.experiment)

    if config.experiment == 'power-scaling':
        _run_power_scaling(config, result)
        return result

    if config.experiment not in _POINT_RUNNERS:
        raise ConfigError(f"Unknown experiment: {config.experiment}")
    runner = _POINT_RUNNERS[config.experiment]

    for point, value in enumerate(config.sweep_values):
        started = time.perf_counter()
        meta: Dict[str, object] = {'sweep_value': float(value), 'drop_attempts': [], 'trial_retries': 0}

        row = {'sweep_variable': config.sweep_variable, 'sweep_value': float(value),
               'seed': config.seed, 'trials': config.trials}
        try:
            point_config = config.with_value(config.sweep_variable, value)
            validate_config(point_config)
            row.update(runner(point_config, point, meta))
        except (ConfigError, InfeasibleScheduleError) as e:
            logger.warning(f"Sweep point {config.sweep_variable}={value} infeasible: {e}")
            row.update(_collected_row(config, {}, 0))

        meta['runtime_s'] = time.perf_counter() - started
        result.rows.append(row)
        result.points.append(meta)

        status = 'infeasible' if row['infeasible'] else f"{row['feasible_drops']} feasible drops"
        logger.info(f"Sweep point {point + 1}/{len(config.sweep_values)} "
                    f"({config.sweep_variable}={value}): {status}, {meta['runtime_s']:.2f} s")

    return result
