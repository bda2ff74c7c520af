"""End-to-end desk-scale attack experiment.

Builds a synthetic corpus, trains the decryption network and the digit
classifier, then evaluates reconstruction quality and downstream accuracy,
appending JSON lines to <workdir>/report.jsonl.  Everything is derived from
--seed, so two runs with the same arguments produce identical checkpoints.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from chaoscrack import cli


def step(argv):
    print(f"$ chaoscrack {' '.join(argv)}", file=sys.stderr)
    rc = cli.main(argv)
    if rc != 0:
        sys.exit(rc)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", type=Path, required=True)
    ap.add_argument("--train", type=int, default=2000)
    ap.add_argument("--test", type=int, default=200)
    ap.add_argument("--mode", choices=["static", "dynamic"],
                    default="static")
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--classifier-samples", type=int, default=10000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    idx_dir = args.workdir / "idx"
    corpus_dir = args.workdir / f"corpus-{args.mode}"
    model_path = args.workdir / "decryption.ckpt"
    classifier_path = args.workdir / "classifier.ckpt"
    report_path = args.workdir / "report.jsonl"

    n_synth = max(args.train, args.classifier_samples)
    step(["gen-synth", "--out-dir", str(idx_dir), "--train", str(n_synth),
          "--test", str(args.test), "--seed", str(args.seed)])
    step(["gen-dataset", "--mnist-dir", str(idx_dir), "--out-dir",
          str(corpus_dir), "--mode", args.mode, "--side", "32",
          "--limit-train", str(args.train), "--limit-test", str(args.test),
          "--seed", str(args.seed)])
    step(["train", "--corpus", str(corpus_dir), "--out-checkpoint",
          str(model_path), "--epochs", str(args.epochs),
          "--seed", str(args.seed)])
    step(["train-classifier", "--mnist-dir", str(idx_dir),
          "--out-checkpoint", str(classifier_path),
          "--limit", str(args.classifier_samples), "--seed",
          str(args.seed)])
    step(["eval", "--checkpoint", str(model_path), "--corpus",
          str(corpus_dir), "--classifier", str(classifier_path),
          "--report", str(report_path)])
    print(f"report appended to {report_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
