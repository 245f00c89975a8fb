import os
import sys
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))
from src.Simulation import SimulationModel
from src.utils import setup_logging
from generate_table_1 import generate_data

# Same settings as table 1, data generated from the original (misspecified) model
MODEL = SimulationModel.ORIGINAL
OUTPUT_DIR = "./data/table_2"

if __name__ == "__main__":
    setup_logging(0)
    generate_data(MODEL, OUTPUT_DIR)
