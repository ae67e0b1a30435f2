"""
Result emission: schema-checked CSV with 9 significant digits plus a JSON metadata sidecar.
The CSV carries only deterministic values; runtimes and retries live in the sidecar.
"""
import json
import logging
import platform
from datetime import datetime
from pathlib import Path
from typing import Dict

import numpy as np
import pandas as pd
import pandera as pa

from config import CODE_VERSION, ExperimentConfig
from experiments import ExperimentResult

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.9g'


def _rate_column() -> pa.Column:
    return pa.Column(float, pa.Check.ge(0), nullable=True, regex=True, required=False)


def _power_column() -> pa.Column:
    return pa.Column(float, nullable=True, regex=True, required=False)


RESULT_SCHEMA = pa.DataFrameSchema(
    {
        'sweep_value': pa.Column(float),
        'infeasible': pa.Column(bool),
        'seed': pa.Column(int),
        'trials': pa.Column(int, pa.Check.ge(1)),
        r'^(se|boundary|min_user|mean_user|objective)_.+$': _rate_column(),
        r'^(mue|sue)_(bound|limit)_(mrt|zft)$': _rate_column(),
        r'^p_(bs|sc)_dbm_.+$': _power_column(),
        r'^residual_db_.+$': _power_column(),
        r'^power_feasible_.+$': pa.Column(bool, regex=True, required=False),
    },
    strict=False,
    coerce=True
)


def validate_results(frame: pd.DataFrame) -> pd.DataFrame:
    """
    Check the result frame against the schema.

    Raises:
        pandera.errors.SchemaError: On a missing key column or an out-of-range rate
    """
    return RESULT_SCHEMA.validate(frame)


def metadata_path(csv_path: Path) -> Path:
    return csv_path.with_name(csv_path.stem + '.meta.json')


def _jsonable(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, tuple):
        return list(value)
    return str(value)


def build_metadata(config: ExperimentConfig, result: ExperimentResult) -> Dict[str, object]:
    return {
        'code_version': CODE_VERSION,
        'config_hash': config.config_hash(),
        'seed': config.seed,
        'experiment': config.experiment,
        'drops_per_point': config.drops,
        'trials': config.trials,
        'workers': config.workers,
        'config': config.as_dict(),
        'derived': config.derived(),
        'points': result.points,
        'total_drop_attempts': int(sum(sum(p['drop_attempts']) for p in result.points)),
        'total_trial_retries': int(sum(p['trial_retries'] for p in result.points)),
        'runtime_s': float(sum(p['runtime_s'] for p in result.points)),
        'python': platform.python_version(),
        'generated_at': datetime.now().strftime('%Y-%m-%d %H:%M:%S'),
    }


def write_csv(frame: pd.DataFrame, path: str) -> Path:
    """
    Write the result rows.

    Args:
        frame: One row per sweep point (non-empty)
        path: Output CSV path; parent directories are created

    Returns:
        Path written

    Raises:
        ValueError: If there are no rows
        OSError: On I/O failure
    """
    if frame.empty:
        raise ValueError("No result rows to write")

    csv_path = Path(path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(csv_path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')

    logger.info(f"Wrote {len(frame)} rows to {csv_path}")
    return csv_path


def write_metadata(config: ExperimentConfig, result: ExperimentResult, csv_path: Path) -> Path:
    sidecar = metadata_path(Path(csv_path))
    with open(sidecar, 'w', encoding='utf-8') as f:
        json.dump(build_metadata(config, result), f, indent=2, sort_keys=True, default=_jsonable)
    logger.info(f"Wrote metadata to {sidecar}")
    return sidecar


def generate_report(config: ExperimentConfig, result: ExperimentResult, path: str) -> Path:
    """Validate, then write the CSV and its sidecar."""
    frame = validate_results(result.to_frame())
    csv_path = write_csv(frame, path)
    write_metadata(config, result, csv_path)
    return csv_path
