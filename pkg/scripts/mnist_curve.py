"""MNIST robustness curve of a trained MLP under l_inf PGD.

    python3 scripts/mnist_curve.py --data-dir data/mnist5k --out results/mnist_curve.csv
"""
import argparse
import logging
from pathlib import Path

from nflbounds import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data-dir", default=cli.MNIST_DEFAULTS["data_dir"])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/mnist_curve.csv")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = cli.ExperimentConfig(**{**cli.MNIST_DEFAULTS, "data_dir": args.data_dir, "seed": args.seed}).validate()
    curve = cli.run_mnist(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(curve.to_csv())
    print(f"wrote {out}")
    for pt in curve.points:
        print(f"eps {pt.epsilon:.3f}  acc {pt.acc_hat:.4f}  [{pt.ci_lo:.4f}, {pt.ci_hi:.4f}]")


if __name__ == "__main__":
    main()
