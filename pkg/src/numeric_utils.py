"""
Numeric utilities for unit conversion, aggregation and seeding.
All powers are carried in mW internally; dB/dBm appear only at I/O boundaries.
"""
import math
from typing import Iterable, Tuple

import numpy as np


# Streams under a (sweep point, drop) key
STREAM_GEOMETRY = 0
STREAM_SCHEDULING = 1
STREAM_TRIALS = 2


def db_to_linear(value_db: float) -> float:
    """
    Convert a dB ratio to linear scale.

    Args:
        value_db: Ratio in dB

    Returns:
        Linear ratio
    """
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value: float) -> float:
    """
    Convert a linear ratio to dB.

    Raises:
        ValueError: If value is not positive
    """
    if value <= 0:
        raise ValueError(f"Cannot express {value} in dB")
    return 10.0 * math.log10(value)


def dbm_to_mw(value_dbm: float) -> float:
    """Convert dBm to mW."""
    return db_to_linear(value_dbm)


def mw_to_dbm(value_mw: float) -> float:
    """Convert mW to dBm."""
    return linear_to_db(value_mw)


def noise_power_mw(density_dbm_hz: float, bandwidth_hz: float) -> float:
    """
    Thermal noise power over a band.

    Args:
        density_dbm_hz: Noise power spectral density (dBm/Hz)
        bandwidth_hz: Bandwidth (Hz)

    Returns:
        Noise power in mW
    """
    if bandwidth_hz <= 0:
        raise ValueError(f"Bandwidth must be positive, got {bandwidth_hz}")
    return dbm_to_mw(density_dbm_hz + 10.0 * math.log10(bandwidth_hz))


def exact_sum(values: Iterable[float]) -> float:
    """Correctly rounded sum; independent of summation order."""
    return math.fsum(float(v) for v in values)


def exact_column_sums(samples: np.ndarray) -> np.ndarray:
    """
    Correctly rounded sums along the first axis.

    Args:
        samples: Array of shape (trials, ...)

    Returns:
        Array of shape samples.shape[1:]
    """
    flat = samples.reshape(samples.shape[0], -1)
    sums = np.array([math.fsum(flat[:, c]) for c in range(flat.shape[1])])
    return sums.reshape(samples.shape[1:])


def mean_and_stderr(samples: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Sample mean and standard error (stddev / sqrt(n)) along the first axis.

    A single sample has zero standard error.
    """
    n = samples.shape[0]
    if n == 0:
        raise ValueError("Cannot average an empty sample")

    mean = exact_column_sums(samples) / n
    if n == 1:
        return mean, np.zeros_like(mean)

    squared = (samples - mean[None, ...]) ** 2
    variance = exact_column_sums(squared) / (n - 1)
    return mean, np.sqrt(variance / n)


def substream(master_seed: int, *key: int) -> np.random.Generator:
    """
    Independent generator for a counter key under a master seed.

    The same (master_seed, key) always yields the same stream, whatever
    process or worker asks for it.
    """
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(seq)


def log2_rate(sinr: np.ndarray) -> np.ndarray:
    """Shannon rate log2(1 + SINR) in bit/s/Hz."""
    return np.log2(1.0 + np.asarray(sinr, dtype=float))
