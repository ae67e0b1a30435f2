"""
Experiment configuration: default system parameters, key=value files, derived quantities.
Files are parsed with python-dotenv; environment and CLI values override them.
"""
import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
from dotenv import dotenv_values, load_dotenv

from numeric_utils import db_to_linear, dbm_to_mw, noise_power_mw
from validator import ConfigError, validate_config

load_dotenv()

logger = logging.getLogger(__name__)

CODE_VERSION = '0.1.0'

SWEEPABLE = ('p_bs_dbm', 'n_bs', 'n_sc', 'gamma', 'p_tau_dbm', 'lambda_ratio',
             'num_users', 'sc_power_offset_db')


@dataclass(frozen=True)
class PowerConfig:
    """Linear (mW) powers for one evaluation."""
    p_bs: float
    p_sc: np.ndarray
    p_tau: float
    sigma2: float

    @property
    def num_sc(self) -> int:
        return int(np.asarray(self.p_sc).shape[0])


@dataclass(frozen=True)
class ExperimentConfig:
    """Experiment settings. Omitted keys take the default system parameters."""
    experiment: str = 'rate-sweep'

    # Topology
    num_sc: int = 8
    num_users: int = 200
    cell_radius_m: float = 1000.0
    sc_ring_radius_m: float = 800.0
    sc_placement: str = 'ring'
    user_layout: str = 'uniform'
    cluster_fraction: float = 2.0 / 3.0
    cluster_radius_m: float = 50.0
    min_distance_m: float = 10.0

    # Antennas
    n_bs: Optional[int] = None
    n_sc: int = 8
    lambda_ratio: float = 10.0

    # Powers (dBm / dB at the boundary)
    p_bs_dbm: float = 46.0
    sc_power_offset_db: float = 22.0
    p_tau_dbm: float = 0.0
    noise_density_dbm_hz: float = -174.0
    bandwidth_hz: float = 20e6

    # Pilots
    gamma: Optional[int] = None
    coherence_T: int = 200

    # Scheduling
    k_mue: int = 20
    l_sue: int = 4
    scheduler: str = 'rsa'
    kappa_bs: float = 1.0
    kappa_sc: float = 1.2

    # Evaluation
    precoders: Tuple[str, ...] = ('mrt', 'zft')
    estimation: str = 'pipeline'
    zf_dof_offset: int = 1
    copilot_model: str = 'conditional'

    # Monte-Carlo
    trials: int = 200
    seed: int = field(default_factory=lambda: int(os.getenv('HETNET_SEED', '2024')))
    workers: int = field(default_factory=lambda: int(os.getenv('HETNET_WORKERS', '1')))
    drops: int = 10
    max_drop_retries: int = 20

    # Sweep
    sweep_variable: str = 'p_bs_dbm'
    sweep_values: Tuple[float, ...] = (46.0,)

    # Scaling law (power-scaling experiment, ASA objective)
    scaling_case: str = 'I'
    theta: float = 0.0
    chi: float = 1.0
    eta: float = 1.0
    e_tau_db: float = 0.0
    e_bs_db: float = 0.0
    e_sc_db: float = 0.0
    target_rate: float = 1.0
    include_overhead: bool = True
    cross_tier: bool = True
    # None → fixed-β table for power-scaling, user drops otherwise
    fixed_beta: Optional[bool] = None

    def __post_init__(self):
        if self.gamma is None:
            object.__setattr__(self, 'gamma', self.num_sc)
        if self.fixed_beta is None:
            object.__setattr__(self, 'fixed_beta', self.experiment == 'power-scaling')

    def table_powers(self) -> PowerConfig:
        """Normalized powers (σ² = 1) of the fixed-β table, from the e_*_db keys."""
        return PowerConfig(
            p_bs=db_to_linear(self.e_bs_db),
            p_sc=np.full(self.num_sc, db_to_linear(self.e_sc_db)),
            p_tau=db_to_linear(self.e_tau_db),
            sigma2=1.0
        )

    @property
    def one_tier(self) -> bool:
        return self.experiment == 'one-tier'

    @property
    def reuse_tau(self) -> int:
        """Two-tier training length K + L·γ."""
        return self.k_mue + self.l_sue * self.gamma

    @property
    def tau(self) -> int:
        """Longest training length of the run (K + S·L orthogonal pilots in one-tier mode)."""
        if self.one_tier:
            return self.k_mue + self.num_sc * self.l_sue
        return self.reuse_tau

    @property
    def overhead(self) -> float:
        """Pilot overhead factor (T − τ)/T."""
        return (self.coherence_T - self.tau) / self.coherence_T

    @property
    def resolved_n_bs(self) -> int:
        if self.n_bs is not None:
            return int(self.n_bs)
        return int(round(self.lambda_ratio * self.n_sc))

    @property
    def p_sc_dbm(self) -> float:
        return self.p_bs_dbm - self.sc_power_offset_db

    @property
    def sigma2(self) -> float:
        return noise_power_mw(self.noise_density_dbm_hz, self.bandwidth_hz)

    def power_config(self, num_sc: Optional[int] = None) -> PowerConfig:
        """
        Linear powers for this configuration.

        Args:
            num_sc: Number of SCs to provision (defaults to num_sc; 0 for one-tier)
        """
        s = self.num_sc if num_sc is None else num_sc
        return PowerConfig(
            p_bs=dbm_to_mw(self.p_bs_dbm),
            p_sc=np.full(s, dbm_to_mw(self.p_sc_dbm)),
            p_tau=dbm_to_mw(self.p_tau_dbm),
            sigma2=self.sigma2
        )

    def with_value(self, name: str, value) -> 'ExperimentConfig':
        """Copy with one sweep variable replaced."""
        if name not in SWEEPABLE:
            raise ConfigError(f"Cannot sweep over {name}; choose one of {', '.join(SWEEPABLE)}")
        cast = int if name in ('n_bs', 'n_sc', 'gamma', 'num_users') else float
        return replace(self, **{name: cast(value)})

    def derived(self) -> Dict[str, float]:
        """Derived quantities echoed to logs and metadata."""
        return {
            'tau': self.tau,
            'overhead': self.overhead,
            'n_bs': self.resolved_n_bs,
            'p_sc_dbm': self.p_sc_dbm,
            'noise_dbm': 10.0 * np.log10(self.sigma2),
        }

    def as_dict(self) -> Dict[str, object]:
        data = asdict(self)
        data['precoders'] = list(self.precoders)
        data['sweep_values'] = list(self.sweep_values)
        return data

    def config_hash(self) -> str:
        """Stable digest of every setting except the worker count."""
        data = self.as_dict()
        data.pop('workers')
        payload = json.dumps(data, sort_keys=True, default=str)
        return hashlib.sha256(payload.encode('utf-8')).hexdigest()


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ('true', '1', 'yes', 'on'):
        return True
    if lowered in ('false', '0', 'no', 'off'):
        return False
    raise ValueError(f"not a boolean: {text}")


def _parse_optional_int(text: str) -> Optional[int]:
    if text.strip().lower() in ('', 'none', 'auto'):
        return None
    return int(text)


def _parse_str_tuple(text: str) -> Tuple[str, ...]:
    return tuple(part.strip().lower() for part in text.split(',') if part.strip())


def _parse_float_tuple(text: str) -> Tuple[float, ...]:
    return tuple(float(part) for part in text.split(',') if part.strip())


_PARSERS = {
    'experiment': str.strip,
    'num_sc': int,
    'num_users': int,
    'cell_radius_m': float,
    'sc_ring_radius_m': float,
    'sc_placement': str.strip,
    'user_layout': str.strip,
    'cluster_fraction': float,
    'cluster_radius_m': float,
    'min_distance_m': float,
    'n_bs': _parse_optional_int,
    'n_sc': int,
    'lambda_ratio': float,
    'p_bs_dbm': float,
    'sc_power_offset_db': float,
    'p_tau_dbm': float,
    'noise_density_dbm_hz': float,
    'bandwidth_hz': float,
    'gamma': _parse_optional_int,
    'coherence_T': int,
    'k_mue': int,
    'l_sue': int,
    'scheduler': str.strip,
    'kappa_bs': float,
    'kappa_sc': float,
    'precoders': _parse_str_tuple,
    'estimation': str.strip,
    'zf_dof_offset': int,
    'copilot_model': str.strip,
    'trials': int,
    'seed': int,
    'workers': int,
    'drops': int,
    'max_drop_retries': int,
    'sweep_variable': str.strip,
    'sweep_values': _parse_float_tuple,
    'scaling_case': lambda text: text.strip().upper(),
    'theta': float,
    'chi': float,
    'eta': float,
    'e_tau_db': float,
    'e_bs_db': float,
    'e_sc_db': float,
    'target_rate': float,
    'include_overhead': _parse_bool,
    'cross_tier': _parse_bool,
    'fixed_beta': _parse_bool,
}

_FIELD_NAMES = {name.lower(): name for name in _PARSERS}


def parse_values(raw: Dict[str, Optional[str]]) -> Dict[str, object]:
    """
    Convert raw string values into typed config fields.

    Raises:
        ConfigError: Listing unknown keys and unparseable values
    """
    problems = []
    parsed = {}

    for key, text in raw.items():
        name = _FIELD_NAMES.get(key.strip().lower())
        if name is None:
            problems.append(f"unknown key '{key}'")
            continue
        if text is None:
            problems.append(f"{name}: missing value")
            continue
        try:
            parsed[name] = _PARSERS[name](text)
        except ValueError as e:
            problems.append(f"{name}: cannot parse '{text}' ({e})")

    if problems:
        raise ConfigError("; ".join(problems))

    return parsed


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, object]] = None) -> ExperimentConfig:
    """
    Load, default and validate an experiment configuration.

    Args:
        path: key=value file (None → pure defaults)
        overrides: Already-typed values that take precedence over the file

    Returns:
        Validated ExperimentConfig

    Raises:
        ConfigError: Missing file, unknown keys, bad values or failed validation
    """
    values: Dict[str, object] = {}

    if path is not None:
        config_path = Path(path)
        if not config_path.exists():
            raise ConfigError(f"Config file does not exist: {path}")
        values.update(parse_values(dotenv_values(config_path)))

    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})

    if values.get('experiment') == 'pr-sweep':
        values.setdefault('sweep_variable', 'gamma')
    elif values.get('experiment') == 'power-scaling':
        values.setdefault('sweep_variable', 'n_sc')

    try:
        config = ExperimentConfig(**values)
    except TypeError as e:
        raise ConfigError(f"Invalid configuration: {e}")

    validate_config(config)
    if config.sweep_variable not in SWEEPABLE:
        raise ConfigError(f"sweep_variable must be one of {', '.join(SWEEPABLE)}, got: {config.sweep_variable}")

    derived = config.derived()
    logger.info(f"Configuration loaded: experiment={config.experiment}, S={config.num_sc}, "
                f"K={config.k_mue}, L={config.l_sue}, γ={config.gamma}")
    logger.info(f"Derived: τ={derived['tau']}, overhead={derived['overhead']:.4f}, "
                f"N_BS={derived['n_bs']}, p_SC={derived['p_sc_dbm']:.1f} dBm, "
                f"noise={derived['noise_dbm']:.2f} dBm")

    return config
