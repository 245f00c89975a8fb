import os
import sys
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))
from generate_table_1 import generate_table

INPUT_DIR = "./data/table_2"
OUTPUT_DIR = "./figures"
TABLE_NAME = "table_2"

if __name__ == "__main__":
    print(generate_table(INPUT_DIR, OUTPUT_DIR, TABLE_NAME).to_string(index=False))
