#!/usr/bin/env python3
"""Generate the synthetic digit corpus used by the toolchain.

Writes IDX image/label pairs for training and test splits, and optionally
a matrix-text secondary set (16x16 digits with heavier distortion, stored
in [-1, 1] with a range header).
"""
import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from fixcnn.dataset import write_idx
from fixcnn.digits import make_digits, write_matrix_text


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="data", help="output directory")
    ap.add_argument("--train", type=int, default=10000)
    ap.add_argument("--test", type=int, default=1000)
    ap.add_argument("--secondary", type=int, default=0,
                    help="also write N matrix-text images (16x16, harder)")
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train = make_digits(args.train, seed=args.seed, name="train")
    test = make_digits(args.test, seed=args.seed + 1, name="test")
    write_idx(train, out / "train-images.idx", out / "train-labels.idx")
    write_idx(test, out / "test-images.idx", out / "test-labels.idx")
    print(f"wrote {len(train)} train / {len(test)} test images to {out}/")
    if args.secondary:
        sec = make_digits(args.secondary, seed=args.seed + 2, side=16,
                          name="secondary", distort=1.3)
        write_matrix_text(sec, out / "secondary.txt", lo=-1.0, hi=1.0)
        print(f"wrote {len(sec)} secondary images to {out}/secondary.txt")
    return 0


if __name__ == "__main__":
    sys.exit(main())
