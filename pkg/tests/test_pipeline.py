"""
Test suite for the end-to-end simulation pipeline.
Runs tiny experiments through run_pipeline and checks the CSV and its sidecar.
"""
import json
import pytest
import sys
from pathlib import Path

import pandas as pd

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from main import main, run_pipeline
from report_generator import metadata_path, write_csv


TINY_CONFIG = "\n".join([
    "experiment=rate-sweep",
    "num_sc=2",
    "num_users=60",
    "user_layout=clustered",
    "k_mue=2",
    "l_sue=1",
    "n_bs=16",
    "n_sc=4",
    "gamma=2",
    "trials=20",
    "drops=2",
    "seed=2024",
    "workers=1",
    "sweep_variable=p_bs_dbm",
    "sweep_values=40,46",
])

SE_TOLERANCE = 1e-7


def _config_file(tmp_path, extra=""):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_CONFIG + "\n" + extra)
    return str(path)


@pytest.fixture(scope='module')
def rate_run(tmp_path_factory):
    """One rate sweep shared by the output checks."""
    tmp_path = tmp_path_factory.mktemp("rate")
    out = tmp_path / "out" / "rates.csv"
    assert run_pipeline(_config_file(tmp_path), str(out))
    return out


# ============================================================================
# Output files
# ============================================================================

def test_csv_has_one_row_per_point(rate_run):
    lines = rate_run.read_text().splitlines()
    assert len(lines) == 3

    frame = pd.read_csv(rate_run)
    assert frame['sweep_value'].tolist() == [40.0, 46.0]
    assert (frame['sweep_variable'] == 'p_bs_dbm').all()
    assert not frame['infeasible'].any()
    assert (frame['feasible_drops'] == 2).all()
    assert (frame['seed'] == 2024).all()
    assert (frame['trials'] == 20).all()


def test_metadata_sidecar(rate_run):
    sidecar = metadata_path(rate_run)
    assert sidecar.name == "rates.meta.json"

    meta = json.loads(sidecar.read_text())
    assert meta['seed'] == 2024
    assert len(meta['config_hash']) == 64
    assert meta['experiment'] == 'rate-sweep'
    assert len(meta['points']) == 2
    assert meta['derived']['tau'] == 4


def test_spectral_efficiency_consistency(rate_run):
    """se_mc = overhead × (K + S·L) × mean user rate, point by point."""
    frame = pd.read_csv(rate_run)
    overhead = (200 - 4) / 200
    users = 2 + 2 * 1

    errors = []
    for kind in ('mrt', 'zft'):
        expected = overhead * users * frame[f'mean_user_mc_{kind}']
        rel = ((frame[f'se_mc_{kind}'] - expected).abs() / expected).max()
        if rel > SE_TOLERANCE:
            errors.append(f"{kind}: relative mismatch {rel:.3e}")
        if not (frame[f'min_user_mc_{kind}'] <= frame[f'mean_user_mc_{kind}']).all():
            errors.append(f"{kind}: minimum above mean")
    if errors:
        pytest.fail("Spectral efficiency errors:\n" + "\n".join(errors))


# ============================================================================
# Reproducibility
# ============================================================================

def test_rerun_is_byte_identical(rate_run, tmp_path):
    again = tmp_path / "again.csv"
    assert run_pipeline(_config_file(tmp_path), str(again))
    assert again.read_bytes() == rate_run.read_bytes()


def test_worker_count_does_not_change_output(tmp_path):
    config = _config_file(tmp_path)
    serial = tmp_path / "serial.csv"
    parallel = tmp_path / "parallel.csv"

    assert run_pipeline(config, str(serial), {'trials': 60, 'workers': 1})
    assert run_pipeline(config, str(parallel), {'trials': 60, 'workers': 8})
    assert serial.read_bytes() == parallel.read_bytes()

    serial_meta = json.loads(metadata_path(serial).read_text())
    parallel_meta = json.loads(metadata_path(parallel).read_text())
    assert serial_meta['config_hash'] == parallel_meta['config_hash']


# ============================================================================
# Other experiments
# ============================================================================

@pytest.mark.parametrize('experiment, extra, columns', [
    ('scheduling', "", ['objective_gsa_mrt', 'objective_asa_zft', 'se_mc_rsa_mrt']),
    ('one-tier', "", ['se_mc_one_tier_zft', 'boundary_mc_two_tier_mrt']),
    ('pr-sweep', "sweep_variable=gamma\nsweep_values=1,2\n", ['se_mc_mrt', 'se_bound_zft']),
])
def test_experiment_smoke(tmp_path, experiment, extra, columns):
    out = tmp_path / f"{experiment}.csv"
    assert run_pipeline(_config_file(tmp_path, extra), str(out), {'experiment': experiment})

    frame = pd.read_csv(out)
    missing = [c for c in columns if c not in frame.columns]
    assert not missing, f"missing columns {missing}"
    assert frame[columns].notna().all().all()


PR_TABLE_CONFIG = "\n".join([
    "experiment=pr-sweep",
    "fixed_beta=true",
    "num_sc=20",
    "k_mue=20",
    "l_sue=4",
    "n_sc=16",
    "lambda_ratio=10",
    "e_tau_db=0",
    "e_bs_db=12",
    "e_sc_db=-10",
    "trials=5",
    "seed=2024",
    "workers=1",
    "sweep_variable=gamma",
    "sweep_values=1,2,4,5,10,20",
])


def test_pr_sweep_interior_optimum(tmp_path):
    """On the fixed-β table the bound spectral efficiency peaks at γ = 4 for both precoders."""
    config = tmp_path / "pr.cfg"
    config.write_text(PR_TABLE_CONFIG)
    out = tmp_path / "pr.csv"
    assert run_pipeline(str(config), str(out))

    frame = pd.read_csv(out)
    assert frame['sweep_value'].tolist() == [1.0, 2.0, 4.0, 5.0, 10.0, 20.0]
    assert (frame['feasible_drops'] == 1).all()
    for kind in ('mrt', 'zft'):
        best = frame.loc[frame[f'se_bound_{kind}'].idxmax(), 'sweep_value']
        assert best == 4.0, f"{kind}: maximum at γ={best}: {frame[f'se_bound_{kind}'].tolist()}"


def test_zft_gains_more_from_power(tmp_path):
    """From 30 to 50 dBm the ZFT bound gains more spectral efficiency than MRT, which saturates."""
    out = tmp_path / "slope.csv"
    extra = "p_tau_dbm=20\nsweep_values=30,50\n"
    assert run_pipeline(_config_file(tmp_path, extra), str(out))

    frame = pd.read_csv(out).set_index('sweep_value')
    gain = {kind: frame.loc[50.0, f'se_bound_{kind}'] - frame.loc[30.0, f'se_bound_{kind}']
            for kind in ('mrt', 'zft')}
    assert gain['zft'] > gain['mrt'] > 0, f"slopes {gain}"


def test_two_tier_beats_one_tier(tmp_path):
    out = tmp_path / "tiers.csv"
    assert run_pipeline(_config_file(tmp_path), str(out), {'experiment': 'one-tier'})

    frame = pd.read_csv(out)
    for kind in ('mrt', 'zft'):
        for source in ('bound', 'mc'):
            two, one = frame[f'se_{source}_two_tier_{kind}'], frame[f'se_{source}_one_tier_{kind}']
            assert (two > one).all(), f"{kind} {source}: two-tier {two.tolist()} vs one-tier {one.tolist()}"


def test_power_scaling_smoke(tmp_path):
    out = tmp_path / "scaling.csv"
    extra = "sweep_variable=n_sc\nsweep_values=16,32\n"
    assert run_pipeline(_config_file(tmp_path, extra), str(out), {'experiment': 'power-scaling'})

    frame = pd.read_csv(out)
    assert frame['n_bs'].tolist() == [160, 320]
    assert 'sweep_variable' not in frame.columns
    assert frame['seed'].tolist() == [2024, 2024]
    for kind in ('mrt', 'zft'):
        assert (frame[f'mue_bound_{kind}'] > 0).all()
        assert frame[f'power_feasible_{kind}'].all()


# ============================================================================
# Failures
# ============================================================================

def test_main_exits_on_bad_config(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(['--config', str(tmp_path / "missing.cfg"), '--out', str(tmp_path / "x.csv")])
    assert exc.value.code == 1


def test_pipeline_rejects_invalid_values(tmp_path):
    out = tmp_path / "bad.csv"
    assert not run_pipeline(_config_file(tmp_path, "gamma=3\n"), str(out))
    assert not out.exists()


def test_infeasible_point_keeps_the_sweep_going(tmp_path):
    """N_BS = 3 leaves ZFT no degrees of freedom for K = 2: that row is flagged, the other completes."""
    out = tmp_path / "partial.csv"
    extra = "sweep_variable=n_bs\nsweep_values=16,3\n"
    assert run_pipeline(_config_file(tmp_path, extra), str(out))

    frame = pd.read_csv(out)
    assert frame['infeasible'].tolist() == [False, True]
    assert frame['feasible_drops'].tolist() == [2, 0]
    assert frame.loc[0, ['se_mc_mrt', 'se_bound_zft']].notna().all()
    assert frame.loc[1, ['se_mc_mrt', 'se_bound_zft']].isna().all()
    assert (frame['seed'] == 2024).all()


def test_write_csv_rejects_empty_frame(tmp_path):
    with pytest.raises(ValueError):
        write_csv(pd.DataFrame(), str(tmp_path / "empty.csv"))


if __name__ == "__main__":
    pytest.main([__file__, "-v", "--tb=short"])
