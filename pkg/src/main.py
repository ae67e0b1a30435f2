"""
Main pipeline orchestrator.
Loads the configuration, runs the experiment sweep and writes the results.
"""
import argparse
import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Dict, Optional

# Add src to path
sys.path.insert(0, str(Path(__file__).parent))

from config import load_config
from experiments import run_experiment
from report_generator import generate_report, validate_results

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    datefmt='%Y-%m-%d %H:%M:%S'
)
logger = logging.getLogger(__name__)


def run_pipeline(config_path: Optional[str], output_path: str,
                 overrides: Optional[Dict[str, object]] = None) -> bool:
    """
    Run one experiment end to end.

    Args:
        config_path: key=value experiment file (None for defaults)
        output_path: CSV destination; the metadata sidecar goes next to it
        overrides: Typed values taking precedence over the file

    Returns:
        bool: True if every sweep point completed, False otherwise
    """
    start_time = datetime.now()
    logger.info("=" * 80)
    logger.info("HETNET DOWNLINK SIMULATION")
    logger.info(f"Started at: {start_time.strftime('%Y-%m-%d %H:%M:%S')}")
    logger.info("=" * 80)

    try:
        # Step 1: Configuration
        logger.info("\n[1/4] Loading configuration...")
        print("\n[1/4] Loading configuration...")

        try:
            config = load_config(config_path, overrides)
            print(f"✓ Experiment {config.experiment}, τ={config.tau}, "
                  f"{len(config.sweep_values)} sweep points")
        except Exception as e:
            error_msg = f"Error loading configuration: {str(e)}"
            logger.exception(error_msg)
            print(f"ERROR: {error_msg}")
            return False

        # Step 2: Simulation
        logger.info("\n[2/4] Running experiment...")
        print("\n[2/4] Running experiment...")

        try:
            result = run_experiment(config)
            infeasible = sum(1 for row in result.rows if row['infeasible'])
            logger.info(f"Completed {len(result.rows)} sweep points ({infeasible} infeasible)")
            print(f"✓ Completed {len(result.rows)} sweep points")
            if infeasible:
                print(f"⚠ {infeasible} sweep points flagged infeasible")
        except Exception as e:
            error_msg = f"Error during experiment: {str(e)}"
            logger.exception(error_msg)
            print(f"ERROR: {error_msg}")
            return False

        # Step 3: Validation
        logger.info("\n[3/4] Validating results...")
        print("\n[3/4] Validating results...")

        try:
            validate_results(result.to_frame())
            print("✓ Results passed schema validation")
        except Exception as e:
            error_msg = f"Error validating results: {str(e)}"
            logger.exception(error_msg)
            print(f"ERROR: {error_msg}")
            return False

        # Step 4: Output
        logger.info("\n[4/4] Writing results...")
        print("\n[4/4] Writing results...")

        try:
            csv_path = generate_report(config, result, output_path)

            end_time = datetime.now()
            duration = (end_time - start_time).total_seconds()

            logger.info("\n" + "=" * 80)
            logger.info("SIMULATION COMPLETE")
            logger.info(f"Completed at: {end_time.strftime('%Y-%m-%d %H:%M:%S')}")
            logger.info(f"Duration: {duration:.2f} seconds")
            logger.info(f"Results written to: {csv_path}")
            logger.info("=" * 80)

            print("\n" + "=" * 80)
            print("SIMULATION COMPLETE")
            print("=" * 80)
            print(f"Results written to: {csv_path}")
            print(f"Duration: {duration:.2f} seconds")

            return True

        except Exception as e:
            error_msg = f"Error writing results: {str(e)}"
            logger.exception(error_msg)
            print(f"ERROR: {error_msg}")
            return False

    except Exception as e:
        error_msg = f"Unexpected error in pipeline: {str(e)}"
        logger.exception(error_msg)
        print(f"ERROR: {error_msg}")
        return False


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Two-tier massive-MIMO HetNet downlink simulator")
    parser.add_argument('--config', help="key=value experiment file")
    parser.add_argument('--out', default='results/results.csv', help="CSV output path")
    parser.add_argument('--seed', type=int, help="Master seed")
    parser.add_argument('--trials', type=int, help="Monte-Carlo trials per scenario")
    parser.add_argument('--workers', type=int, help="Worker processes")
    parser.add_argument('--experiment',
                        choices=['rate-sweep', 'pr-sweep', 'power-scaling', 'scheduling', 'one-tier'])
    return parser


def main(argv=None):
    """Main entry point."""
    args = build_parser().parse_args(argv)

    overrides = {
        'seed': args.seed,
        'trials': args.trials,
        'workers': args.workers,
        'experiment': args.experiment,
    }

    success = run_pipeline(args.config, args.out, overrides)

    if not success:
        sys.exit(1)


if __name__ == "__main__":
    main()
