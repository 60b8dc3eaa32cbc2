"""Convert the 5000-image MNIST subset shipped in the mlxtend wheel into IDX files.

The CSV has 784 pixel columns followed by the label, 500 images per digit.
Each digit is shuffled with a fixed seed and split 400 / 100 into the
train and t10k files; a MANIFEST with byte sizes is written alongside.

    python3 scripts/make_mnist_idx.py mnist_5k.csv.gz data/mnist5k
    python3 scripts/make_mnist_idx.py mlxtend-0.24.0-py3-none-any.whl data/mnist5k
"""
import argparse
import gzip
import io
import zipfile
from pathlib import Path

import numpy as np

from nflbounds.idx import MNIST_FILES, write_idx_images, write_idx_labels

CSV_IN_WHEEL = "mlxtend/data/data/mnist_5k.csv.gz"


def read_csv(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if path.suffix == ".whl":
        raw = zipfile.ZipFile(io.BytesIO(raw)).read(CSV_IN_WHEEL)
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return np.loadtxt(io.BytesIO(raw), delimiter=",", dtype=np.int64)


def split(table: np.ndarray, test_per_class: int, seed: int):
    gen = np.random.Generator(np.random.Philox(seed))
    train, test = [], []
    for digit in range(10):
        rows = gen.permutation(np.flatnonzero(table[:, -1] == digit))
        test.extend(rows[:test_per_class])
        train.extend(rows[test_per_class:])
    return table[gen.permutation(train)], table[gen.permutation(test)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("source", type=Path, help="mnist_5k.csv(.gz) or the mlxtend wheel")
    ap.add_argument("out", type=Path)
    ap.add_argument("--test-per-class", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--gzip", action="store_true", help="write .gz files")
    args = ap.parse_args()

    train, test = split(read_csv(args.source), args.test_per_class, args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for name, part in (("train", train), ("test", test)):
        blobs = zip(MNIST_FILES[name], (write_idx_images(part[:, :-1].astype(np.uint8)),
                                        write_idx_labels(part[:, -1])))
        for fname, blob in blobs:
            if args.gzip:
                fname, blob = fname + ".gz", gzip.compress(blob, mtime=0)
            (args.out / fname).write_bytes(blob)
            manifest.append(f"{fname}\t{len(blob)}")
        print(f"{name}: {len(part)} images")
    (args.out / "MANIFEST").write_text("\n".join(manifest) + "\n")


if __name__ == "__main__":
    main()
