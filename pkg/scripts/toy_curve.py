"""Toy-problem robustness curve of a trained MLP.

Trains on the toy distribution, sweeps l_inf PGD over the class-k test split
and writes the curve CSV, then prints where the measured accuracy sits
relative to err(h|k) at twice the critical tolerance.

    python3 scripts/toy_curve.py --out results/toy_curve.csv
    python3 scripts/toy_curve.py --config my.cfg --seed 3
"""
import argparse
import logging
from pathlib import Path

import numpy as np

from nflbounds import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="key = value overrides of the default simulate config")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", default="results/toy_curve.csv")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    values = cli.parse_config_text(Path(args.config).read_text()) if args.config else {}
    if args.seed is not None:
        values["seed"] = args.seed
    cfg = cli.ExperimentConfig(**values).validate()
    curve = cli.run_simulation(cfg)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(curve.to_csv())
    below = [pt for pt in curve.points if pt.epsilon <= 2 * curve.eps_crit][-1]
    print(f"wrote {out}")
    print(f"clean accuracy {curve.points[0].acc_hat:.4f}, err(h|k) {curve.err_std:.4f}, "
          f"critical tolerance {curve.eps_crit:.5f}")
    print(f"accuracy {below.acc_hat:.4f} at eps {below.epsilon:.5f} (twice critical: {2 * curve.eps_crit:.5f})")
    print(f"non-increasing: {bool(np.all(np.diff(curve.acc) <= 0))}")


if __name__ == "__main__":
    main()
