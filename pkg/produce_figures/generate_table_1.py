import os
import sys
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))
import pandas as pd
from src.Experiments import format_summary_table

INPUT_DIR = "./data/table_1"
OUTPUT_DIR = "./figures"
TABLE_NAME = "table_1"

COLUMN_NAMES = {
    "n": "$n$",
    "p": "$p$",
    "q": "$q$",
    "model": "Model",
    "tpr": "TPR",
    "tpr_pop": "TPR (pop)",
    "fpr_pop": "FPR (pop)",
    "tpr_cov": "TPR (cov)",
    "fpr_overall": "FPR",
    "beta_err": r"$\beta_{err}$",
    "omega_err": r"$\Omega_{err}$",
    "omega_tpr": r"TPR ($\Omega$)",
    "omega_fpr": r"FPR ($\Omega$)",
    "mu_err": r"$\mu_{err}$",
}


def generate_table(input_dir: str, output_dir: str, table_name: str):
    summary = pd.read_csv(f"{input_dir}/summary.csv")
    table = format_summary_table(summary)
    os.makedirs(output_dir, exist_ok=True)
    table.to_csv(f"{output_dir}/{table_name}.csv", index=False)
    table.rename(columns=COLUMN_NAMES).to_latex(f"{output_dir}/{table_name}.tex", index=False, escape=False)
    return table


if __name__ == "__main__":
    print(generate_table(INPUT_DIR, OUTPUT_DIR, TABLE_NAME).to_string(index=False))
