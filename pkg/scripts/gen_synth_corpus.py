"""Generate a synthetic digit corpus: IDX files plus an encrypted pair tree.

Produces out_root/idx (IDX image/label files) and out_root/corpus-<mode>
(plain/cipher PNG pairs with manifest and key records), entirely from a seed.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from chaoscrack import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-root", type=Path, required=True)
    ap.add_argument("--train", type=int, default=2000)
    ap.add_argument("--test", type=int, default=200)
    ap.add_argument("--side", type=int, default=32)
    ap.add_argument("--mode", choices=["static", "dynamic"],
                    default="static")
    ap.add_argument("--replicas", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    idx_dir = args.out_root / "idx"
    corpus_dir = args.out_root / f"corpus-{args.mode}"
    rc = cli.main(["gen-synth", "--out-dir", str(idx_dir),
                   "--train", str(args.train), "--test", str(args.test),
                   "--seed", str(args.seed)])
    if rc != 0:
        return rc
    return cli.main(["gen-dataset", "--mnist-dir", str(idx_dir),
                     "--out-dir", str(corpus_dir), "--mode", args.mode,
                     "--side", str(args.side),
                     "--replicas", str(args.replicas),
                     "--seed", str(args.seed)])


if __name__ == "__main__":
    sys.exit(main())
