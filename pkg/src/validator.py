"""
Configuration validation with collected, reportable findings.
Every problem in a config is gathered before a single ConfigError is raised.
"""
from typing import Dict, List, Optional, Sequence

import pandas as pd


class ConfigError(ValueError):
    """Invalid experiment or model configuration."""


class DegenerateInputError(ValueError):
    """Inputs for which a normalization constant is undefined (e.g. all β̂ zero)."""


class InfeasibleScheduleError(ValueError):
    """Candidate sets too small for the requested K / L."""


class ValidationError:
    """Represents a single configuration finding."""

    def __init__(self, field: str, error_type: str, message: str, value=None):
        self.field = field
        self.error_type = error_type
        self.message = message
        self.value = value

    def to_dict(self) -> Dict:
        return {
            'field': self.field,
            'error_type': self.error_type,
            'message': self.message,
            'value': str(self.value) if self.value is not None else None
        }

    def __str__(self) -> str:
        return f"{self.field}: {self.message}"


class ConfigValidator:
    """Validates an ExperimentConfig, collecting every finding."""

    EXPERIMENTS = ('rate-sweep', 'pr-sweep', 'power-scaling', 'scheduling', 'one-tier')
    SCHEDULERS = ('rsa', 'gsa', 'asa')
    PRECODERS = ('mrt', 'zft')
    ESTIMATION = ('pipeline', 'direct', 'perfect')
    COPILOT = ('conditional', 'literal')
    SC_PLACEMENT = ('ring', 'uniform')
    USER_LAYOUT = ('uniform', 'clustered')
    TABLE_SWEEPS = ('gamma', 'n_sc', 'n_bs', 'lambda_ratio')

    def __init__(self):
        self.errors: List[ValidationError] = []

    def validate(self, config) -> List[ValidationError]:
        """
        Validate a configuration.

        Args:
            config: ExperimentConfig instance

        Returns:
            List of findings (empty when valid)
        """
        self.errors = []

        self._check_choice('experiment', config.experiment, self.EXPERIMENTS)
        self._check_choice('scheduler', config.scheduler, self.SCHEDULERS)
        self._check_choice('estimation', config.estimation, self.ESTIMATION)
        self._check_choice('copilot_model', config.copilot_model, self.COPILOT)
        self._check_choice('sc_placement', config.sc_placement, self.SC_PLACEMENT)
        self._check_choice('user_layout', config.user_layout, self.USER_LAYOUT)
        for kind in config.precoders:
            self._check_choice('precoders', kind, self.PRECODERS)

        self._check_min('num_sc', config.num_sc, 1)
        self._check_min('num_users', config.num_users, 0)
        self._check_min('k_mue', config.k_mue, 1)
        self._check_min('l_sue', config.l_sue, 1)
        self._check_min('trials', config.trials, 1)
        self._check_min('workers', config.workers, 1)
        self._check_min('drops', config.drops, 1)
        self._check_min('max_drop_retries', config.max_drop_retries, 0)
        self._check_min('n_sc', config.n_sc, 2)
        if config.n_bs is not None:
            self._check_min('n_bs', config.n_bs, 2)

        self._check_positive('cell_radius_m', config.cell_radius_m)
        self._check_positive('sc_ring_radius_m', config.sc_ring_radius_m)
        self._check_positive('bandwidth_hz', config.bandwidth_hz)
        self._check_positive('kappa_bs', config.kappa_bs)
        self._check_positive('kappa_sc', config.kappa_sc)
        self._check_positive('lambda_ratio', config.lambda_ratio)
        self._check_positive('min_distance_m', config.min_distance_m)
        self._check_positive('cluster_radius_m', config.cluster_radius_m)
        self._check_positive('target_rate', config.target_rate)

        if config.sc_ring_radius_m > config.cell_radius_m:
            self._add('sc_ring_radius_m', 'out_of_range',
                      f'SC ring radius {config.sc_ring_radius_m} exceeds cell radius {config.cell_radius_m}',
                      config.sc_ring_radius_m)

        if not 0.0 <= config.cluster_fraction <= 1.0:
            self._add('cluster_fraction', 'out_of_range',
                      'cluster_fraction must lie in [0, 1]', config.cluster_fraction)

        if config.gamma < 1 or config.gamma > config.num_sc or config.num_sc % config.gamma != 0:
            self._add('gamma', 'invalid_reuse', 'γ must divide S', config.gamma)

        if config.tau >= config.coherence_T:
            self._add('coherence_T', 'overhead',
                      f'Training length τ={config.tau} must be shorter than T={config.coherence_T}',
                      config.coherence_T)

        if config.estimation == 'direct' and config.gamma != config.num_sc:
            self._add('estimation', 'invalid_choice',
                      'direct estimation needs orthogonal SC pilots (γ = S)', config.estimation)

        if config.zf_dof_offset not in (0, 1):
            self._add('zf_dof_offset', 'invalid_choice', 'zf_dof_offset must be 0 or 1',
                      config.zf_dof_offset)

        if 'zft' in config.precoders:
            self._check_zft_dimensions(config)

        if config.experiment in ('rate-sweep', 'pr-sweep', 'scheduling', 'one-tier', 'power-scaling'):
            self._check_sweep(config)

        if config.experiment == 'pr-sweep':
            for value in config.sweep_values:
                gamma = int(value)
                if gamma != value or gamma < 1 or config.num_sc % gamma != 0:
                    self._add('sweep_values', 'invalid_reuse', 'γ must divide S', value)

        if config.fixed_beta:
            self._check_table(config)

        if config.scaling_case not in ('I', 'II'):
            self._add('scaling_case', 'invalid_choice', 'scaling_case must be I or II',
                      config.scaling_case)
        elif config.scaling_case == 'II' and not 0.0 < config.theta <= 1.0:
            self._add('theta', 'out_of_range', 'case II requires 0 < θ ≤ 1', config.theta)
        for name in ('chi', 'eta'):
            if getattr(config, name) < 0:
                self._add(name, 'out_of_range', f'{name} must be non-negative', getattr(config, name))

        return self.errors

    def _check_zft_dimensions(self, config):
        """ZFT needs N − K − offset ≥ 1 at every node."""
        n_bs = config.resolved_n_bs
        k_total = config.k_mue
        if config.one_tier:
            n_bs += config.num_sc * config.n_sc
            k_total += config.num_sc * config.l_sue
        if n_bs - k_total - config.zf_dof_offset < 1:
            self._add('n_bs', 'zft_dimension',
                      f'ZFT requires N_BS ≥ K + {config.zf_dof_offset + 1}, got N_BS={n_bs}, K={k_total}',
                      n_bs)
        if config.n_sc - config.l_sue - config.zf_dof_offset < 1:
            self._add('n_sc', 'zft_dimension',
                      f'ZFT requires N_SC ≥ L + {config.zf_dof_offset + 1}, got N_SC={config.n_sc}, L={config.l_sue}',
                      config.n_sc)

    def _check_table(self, config):
        """The fixed-β table has no user drops and runs in normalized powers."""
        if config.experiment in ('scheduling', 'one-tier'):
            self._add('fixed_beta', 'invalid_choice',
                      f'{config.experiment} needs user drops; set fixed_beta=false', config.fixed_beta)
        elif config.experiment != 'power-scaling' and config.sweep_variable not in self.TABLE_SWEEPS:
            self._add('sweep_variable', 'invalid_choice',
                      f'the fixed-β table sweeps one of {", ".join(self.TABLE_SWEEPS)}, got: {config.sweep_variable}',
                      config.sweep_variable)

    def _check_sweep(self, config):
        if not config.sweep_values:
            self._add('sweep_values', 'empty_sweep', 'sweep_values must list at least one value')

    def _check_choice(self, field: str, value, choices: Sequence[str]):
        if value not in choices:
            self._add(field, 'invalid_choice',
                      f'{field} must be one of {", ".join(choices)}, got: {value}', value)

    def _check_min(self, field: str, value, minimum: int):
        if value is None or value < minimum:
            self._add(field, 'out_of_range', f'{field} must be ≥ {minimum}', value)

    def _check_positive(self, field: str, value):
        if value is None or not value > 0:
            self._add(field, 'out_of_range', f'{field} must be positive', value)

    def _add(self, field: str, error_type: str, message: str, value=None):
        self.errors.append(ValidationError(field, error_type, message, value))

    def get_error_report(self) -> pd.DataFrame:
        """
        Get findings as a DataFrame.

        Returns:
            DataFrame with one row per finding
        """
        if not self.errors:
            return pd.DataFrame()

        return pd.DataFrame([err.to_dict() for err in self.errors])


def validate_config(config, raise_on_error: bool = True) -> Dict[str, object]:
    """
    Validate a configuration.

    Args:
        config: ExperimentConfig instance
        raise_on_error: Raise ConfigError listing every finding

    Returns:
        Dictionary with is_valid, errors (DataFrame) and total_errors

    Raises:
        ConfigError: If findings exist and raise_on_error is set
    """
    validator = ConfigValidator()
    errors = validator.validate(config)

    if errors and raise_on_error:
        raise ConfigError("; ".join(str(e) for e in errors))

    return {
        'is_valid': not errors,
        'errors': validator.get_error_report(),
        'total_errors': len(errors)
    }


def require(condition: bool, message: str, error: Optional[type] = None):
    """Raise ConfigError (or the given error type) when condition fails."""
    if not condition:
        raise (error or ConfigError)(message)
