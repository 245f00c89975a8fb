import os
import sys
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))
import logging
import pandas as pd
from src.Experiments import ExperimentConfig, replicate_table1
from src.Simulation import SimulationConfig, SimulationModel
from src.utils import setup_logging

# Simulation settings (n, p, q)
SETTINGS = [(200, 25, 50), (400, 25, 50), (200, 25, 100), (400, 25, 100)]
MODEL = SimulationModel.NATURAL

# Experiment configuration
REPLICATES = 20
SEED = 2024
THREADS = None

OUTPUT_DIR = "./data/table_1"

logger = logging.getLogger(__name__)


def generate_data(model: SimulationModel, output_dir: str):
    os.makedirs(output_dir, exist_ok=True)
    summaries = []
    for n, p, q in SETTINGS:
        logger.warning("Running %d replicates at n=%d, p=%d, q=%d (%s model)", REPLICATES, n, p, q, model)
        cfg = ExperimentConfig(
            simulation=SimulationConfig(n=n, p=p, q=q, model=model),
            replicates=REPLICATES,
            seed=SEED,
            threads=THREADS,
        )
        per_replicate, summary = replicate_table1(cfg)
        per_replicate.to_csv(f"{output_dir}/replicates_n{n}_p{p}_q{q}.csv", index=False, float_format="%.17g")
        summaries.append(summary)

    pd.concat(summaries, ignore_index=True).to_csv(f"{output_dir}/summary.csv", index=False, float_format="%.17g")


if __name__ == "__main__":
    setup_logging(0)
    generate_data(MODEL, OUTPUT_DIR)
