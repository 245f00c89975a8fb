import os
import sys
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))
import pandas as pd
from src.Experiments import ExperimentConfig, ScalingDesign, fit_log_slope, sparsity_scaling_experiment
from src.Simulation import SimulationConfig
from src.utils import setup_logging

# Fixed dimensions of the scaling study
N = 300
P = 25
Q = 10

# Levels of the varied component
GAMMA_DENSITIES = [0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0]
EDGE_PROBS = [0.0, 0.02, 0.05, 0.1, 0.2, 0.3]

REPLICATES = 50
SEED = 7
OUTPUT_DIR = "./data/figure_2"

if __name__ == "__main__":
    setup_logging(0)
    os.makedirs(OUTPUT_DIR, exist_ok=True)
    base = ExperimentConfig(simulation=SimulationConfig(n=N, p=P, q=Q), seed=SEED)

    slopes = []
    for design, levels in ((ScalingDesign.GAMMA, GAMMA_DENSITIES), (ScalingDesign.GRAPH, EDGE_PROBS)):
        frame = sparsity_scaling_experiment(base, levels, REPLICATES, design)
        frame.to_csv(f"{OUTPUT_DIR}/{design.value}.csv", index=False, float_format="%.17g")
        slopes.append({"design": design.value, "slope": fit_log_slope(frame)})

    pd.DataFrame(slopes).to_csv(f"{OUTPUT_DIR}/slopes.csv", index=False, float_format="%.17g")
