"""Write planted-signal source CSVs and a schema for trying the CLI.

    python3 scripts/make_synthetic_sources.py runs/demo/data --rows 600 --seed 0
"""

import argparse
from pathlib import Path

from lnnforecast.synthetic import planted_frame, write_sources

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("directory", type=Path)
    ap.add_argument("--rows", type=int, default=600)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--noise-features", type=int, default=4)
    ap.add_argument("--target-r", type=float, default=0.5, help="population correlation of the planted term with the return")
    a = ap.parse_args()
    frame = planted_frame(a.rows + 2, n_noise_features=a.noise_features, seed=a.seed, target_r=a.target_r)
    print(f"wrote {write_sources(a.directory, frame)}")
