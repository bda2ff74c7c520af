"""Command-line entrypoint tying the pipeline together.

Subcommands: encrypt, decrypt, gen-synth, gen-dataset, train,
train-classifier, attack, keysearch, eval.  Every run logs its resolved
configuration as one machine-parsable ``runconfig:`` JSON line on stderr;
operational failures print one ``ERROR:`` line on stderr and exit
non-zero.  A single ``--seed`` fans out to per-component sub-seeds via
SHA-256 (see ``subseed``), so any stage can be reproduced in isolation.
"""

import argparse
import hashlib
import json
import re
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import attack, checkpoint, dataset, evaluate, keysearch, synthdigits
from .cipher import STATIC_KEY, CipherKey, decrypt, encrypt
from .errors import ChaoscrackError


def subseed(seed, label):
    """Derive a named 63-bit sub-seed from the global seed.

    sub = first 8 bytes (little-endian, sign bit cleared) of
    SHA-256(f"{seed}:{label}").
    """
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little") & (2 ** 63 - 1)


def parse_key(text):
    """Parse 'p,q,n,x0,y0,z0[,a,b,c]' into a CipherKey."""
    parts = [part.strip() for part in text.split(",")]
    if len(parts) not in (6, 9):
        raise ValueError(
            f"--key needs 6 or 9 comma-separated fields "
            f"(p,q,n,x0,y0,z0[,a,b,c]), got {len(parts)}")
    try:
        p, q, n = (int(parts[i]) for i in range(3))
        floats = [float(part) for part in parts[3:]]
    except ValueError as exc:
        raise ValueError(f"bad --key field: {exc}") from None
    if len(floats) == 3:
        return CipherKey(p=p, q=q, n=n, x0=floats[0], y0=floats[1],
                         z0=floats[2])
    return CipherKey(p=p, q=q, n=n, x0=floats[0], y0=floats[1],
                     z0=floats[2], a=floats[3], b=floats[4], c=floats[5])


def parse_key_record(text):
    """Parse key=value tokens (a dataset record line works) to a CipherKey.

    Non-key fields such as index/replica/label are ignored.
    """
    fields = {}
    for token in text.split():
        if "=" in token:
            key, _, value = token.partition("=")
            fields[key] = value
    try:
        return CipherKey(
            p=int(fields["p"]), q=int(fields["q"]), n=int(fields["n"]),
            x0=float(fields["x0"]), y0=float(fields["y0"]),
            z0=float(fields["z0"]),
            a=float(fields.get("a", STATIC_KEY.a)),
            b=float(fields.get("b", STATIC_KEY.b)),
            c=float(fields.get("c", STATIC_KEY.c)))
    except KeyError as exc:
        raise ValueError(f"key record is missing field {exc}") from None


def parse_bounds(text):
    """Parse 'p1..p2,q1..q2,n1..n2' into SearchBounds."""
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError("--bounds needs 'p1..p2,q1..q2,n1..n2'")
    ranges = []
    for part in parts:
        m = re.fullmatch(r"(\d+)\.\.(\d+)", part.strip())
        if not m:
            raise ValueError(f"bad bounds interval {part!r} "
                             f"(expected 'lo..hi')")
        ranges.append((int(m.group(1)), int(m.group(2))))
    return keysearch.SearchBounds(p_range=ranges[0], q_range=ranges[1],
                                  n_range=ranges[2])


@dataclass
class RunConfig:
    """Resolved invocation, logged so any run can be reconstructed."""

    command: str
    options: dict

    def log(self):
        print("runconfig: " + json.dumps(
            {"command": self.command, **self.options}, sort_keys=True,
            default=str), file=sys.stderr)


def _resolve_key(args):
    if getattr(args, "key", None):
        return parse_key(args.key)
    if getattr(args, "key_record", None):
        text = Path(args.key_record).read_text()
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError(f"{args.key_record}: empty key record file")
        return parse_key_record(lines[0])
    return STATIC_KEY


def _log_run(args, **extra):
    options = {k: v for k, v in vars(args).items() if k != "func"}
    options.update(extra)
    RunConfig(command=args.command, options=options).log()


# ---------------------------------------------------------------------------
# Subcommand implementations

def cmd_encrypt(args):
    key = _resolve_key(args)
    _log_run(args)
    image = dataset.read_png(args.infile)
    dataset.write_png(args.outfile, encrypt(image, key))
    print(f"encrypted {args.infile} -> {args.outfile} "
          f"(side {image.side}, p={key.p} q={key.q} n={key.n})")
    return 0


def cmd_decrypt(args):
    key = _resolve_key(args)
    _log_run(args)
    image = dataset.read_png(args.infile)
    dataset.write_png(args.outfile, decrypt(image, key))
    print(f"decrypted {args.infile} -> {args.outfile} "
          f"(side {image.side}, p={key.p} q={key.q} n={key.n})")
    return 0


def cmd_gen_synth(args):
    _log_run(args)
    paths = synthdigits.generate(args.out_dir, n_train=args.train,
                                 n_test=args.test, seed=args.seed)
    for name, path in paths.items():
        print(f"wrote {name}: {path}")
    return 0


def _find_idx(mnist_dir, stem):
    for suffix in ("", ".gz"):
        path = Path(mnist_dir) / (stem + suffix)
        if path.exists():
            return path
    raise FileNotFoundError(
        f"missing IDX file {stem}[.gz] in {mnist_dir}")


def _load_split(mnist_dir, split, limit=None):
    stems = {"train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
             "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")}
    images, labels = stems[split]
    items = dataset.load_idx(_find_idx(mnist_dir, images),
                             _find_idx(mnist_dir, labels))
    return items[:limit] if limit else items


def cmd_gen_dataset(args):
    if args.mode == "static" and args.replicas != 1:
        raise ValueError(
            "config contradiction: --mode static requires --replicas 1 "
            f"(got {args.replicas})")
    key = _resolve_key(args)
    manifest = dataset.DatasetManifest(
        side=args.side, key_mode=args.mode, replication=args.replicas,
        seed=subseed(args.seed, "dataset"), base_key=key)
    _log_run(args, derived_dataset_seed=manifest.seed)
    for split, limit in (("train", args.limit_train),
                         ("test", args.limit_test)):
        items = _load_split(args.mnist_dir, split, limit)
        written = dataset.build_corpus(manifest, items, args.out_dir, split)
        print(f"{split}: {written} pairs")
    digest = dataset.corpus_digest(args.out_dir)
    print(f"corpus digest: {digest}")
    return 0


def cmd_train(args):
    scales = {"desk": attack.desk_config, "full": attack.full_config}
    config = scales[args.scale](seed=subseed(args.seed, "model"))
    manifest = dataset.load_manifest(args.corpus)
    if manifest.side != config.side:
        raise ValueError(
            f"config contradiction: corpus side {manifest.side} does not "
            f"match --scale {args.scale} (side {config.side})")
    _log_run(args, model_config=config.to_dict())
    plain, cipher, _ = dataset.load_pairs(args.corpus, "train",
                                          limit=args.limit)
    model = attack.DecryptionModel(config)
    report = attack.train_model(
        model, cipher, plain, epochs=args.epochs, batch_size=args.batch,
        lr=args.lr, shuffle_seed=subseed(args.seed, "shuffle"),
        log=lambda e, v: print(f"epoch {e}: loss {v:.6f}",
                               file=sys.stderr))
    corpus_digest = dataset.corpus_digest(args.corpus)
    attack.save_checkpoint(model, args.out_checkpoint, meta={
        "epochs": args.epochs, "seed": args.seed,
        "corpus_digest": corpus_digest})
    print(f"trained {args.epochs} epochs on {len(plain)} pairs; "
          f"final loss {report.epoch_losses[-1]:.6f}")
    print(f"corpus digest: {corpus_digest}")
    print(f"checkpoint digest: {checkpoint.file_digest(args.out_checkpoint)}")
    return 0


def cmd_train_classifier(args):
    config = evaluate.ClassifierConfig(seed=subseed(args.seed, "classifier"),
                                       epochs=args.epochs)
    _log_run(args, classifier_config=config.to_dict())
    items = _load_split(args.mnist_dir, "train", args.limit)
    images = np.stack([item.image.pixels for item in items])
    labels = np.array([item.label for item in items])
    clf, history = evaluate.train_classifier(
        config, images, labels,
        log=lambda e, v: print(f"epoch {e}: loss {v:.6f}", file=sys.stderr))
    evaluate.save_classifier(clf, args.out_checkpoint, meta={
        "epochs": args.epochs, "seed": args.seed, "samples": len(images)})
    test_items = _load_split(args.mnist_dir, "test", args.limit)
    test_images = np.stack([item.image.pixels for item in test_items])
    test_labels = np.array([item.label for item in test_items])
    acc = evaluate.accuracy(clf, test_images, test_labels)
    print(f"trained classifier on {len(images)} samples; "
          f"plain test accuracy {acc:.4f}")
    print(f"checkpoint digest: {checkpoint.file_digest(args.out_checkpoint)}")
    return 0


def cmd_attack(args):
    _log_run(args)
    model, meta = attack.load_checkpoint(args.checkpoint)
    cipher = dataset.read_png(args.infile)
    recovered = attack.decrypt_learned(model, cipher)
    dataset.write_png(args.outfile, recovered)
    print(f"decrypted (learned) {args.infile} -> {args.outfile} "
          f"(model side {model.config.side}, trained "
          f"{meta.get('epochs', '?')} epochs)")
    return 0


def _collect_pairs(pairs_dir):
    pairs_dir = Path(pairs_dir)
    found = []
    for plain_path in pairs_dir.glob("*_plain.png"):
        cipher_path = plain_path.with_name(
            plain_path.name.replace("_plain.png", "_cipher.png"))
        if cipher_path.exists():
            found.append((plain_path, cipher_path))
    found.sort(key=lambda pair: pair[0].name)
    return found


def cmd_keysearch(args):
    bounds = parse_bounds(args.bounds) if args.bounds \
        else keysearch.SearchBounds()
    _log_run(args)
    paths = _collect_pairs(args.pairs)
    if args.max_pairs:
        paths = paths[:args.max_pairs]
    if len(paths) < 2:
        raise ValueError(
            f"{args.pairs}: found {len(paths)} usable pairs, need >= 2")
    pairs = [(dataset.read_png(p), dataset.read_png(c)) for p, c in paths]
    print(f"searching {bounds.size} candidates over {len(pairs)} pairs")
    found = keysearch.recover(pairs, bounds)
    if found is None:
        print("result: none (no candidate within bounds explains all "
              "pairs)")
        return 0
    print(f"result: p={found.p} q={found.q} n={found.n} "
          f"score={found.score}")
    print(f"keystream sha256: {found.keystream_digest}")
    if args.out_record:
        Path(args.out_record).write_text(
            f"p={found.p} q={found.q} n={found.n} score={found.score} "
            f"keystream_sha256={found.keystream_digest} "
            f"keystream={found.keystream.hex()}\n")
        print(f"wrote key record: {args.out_record}")
    return 0


def cmd_eval(args):
    _log_run(args)
    model, model_meta = attack.load_checkpoint(args.checkpoint)
    clf, _ = evaluate.load_classifier(args.classifier)
    plain, cipher, records = dataset.load_pairs(args.corpus, args.split,
                                                limit=args.limit)
    labels = np.array([rec.label for rec in records])
    corpus_digest = dataset.corpus_digest(args.corpus)
    ckpt_digest = checkpoint.file_digest(args.checkpoint)
    key_mode = dataset.load_manifest(args.corpus).key_mode

    reports = [
        evaluate.score(clf, plain, labels, plain, corpus="plain",
                       corpus_digest=corpus_digest,
                       checkpoint_digest=ckpt_digest),
        evaluate.score(clf, attack.decrypt_batch(model, cipher), labels,
                       plain, corpus=f"decrypted-{key_mode}",
                       corpus_digest=corpus_digest,
                       checkpoint_digest=ckpt_digest),
    ]
    for report in reports:
        print(report.to_text())
        print()
    if args.report:
        with open(args.report, "a") as fh:
            for report in reports:
                fh.write(report.to_json_line() + "\n")
        print(f"appended {len(reports)} records to {args.report}")
    return 0


# ---------------------------------------------------------------------------
# Argument surface

def build_parser():
    parser = argparse.ArgumentParser(
        prog="chaoscrack",
        description="Chaos-cipher workbench: encrypt, build corpora, train "
                    "the learned decryptor, brute-force keys, evaluate.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(func=func)
        return p

    p = add("encrypt", cmd_encrypt, help="encrypt one PNG")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--key", help="p,q,n,x0,y0,z0[,a,b,c]")
    p.add_argument("--key-record", help="file with key=value fields")

    p = add("decrypt", cmd_decrypt, help="decrypt one PNG with a known key")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--key", help="p,q,n,x0,y0,z0[,a,b,c]")
    p.add_argument("--key-record", help="file with key=value fields")

    p = add("gen-synth", cmd_gen_synth,
            help="write synthetic digit IDX files")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--train", type=int, default=60000)
    p.add_argument("--test", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)

    p = add("gen-dataset", cmd_gen_dataset,
            help="build a paired cipher/plain corpus from IDX files")
    p.add_argument("--mnist-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--mode", choices=("static", "dynamic"),
                   default="static")
    p.add_argument("--side", type=int, default=32)
    p.add_argument("--replicas", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--limit-train", type=int)
    p.add_argument("--limit-test", type=int)
    p.add_argument("--key", help="base key p,q,n,x0,y0,z0[,a,b,c]")
    p.add_argument("--key-record")

    p = add("train", cmd_train, help="train the learned decryptor")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", choices=("desk", "full"), default="desk")
    p.add_argument("--limit", type=int)

    p = add("train-classifier", cmd_train_classifier,
            help="train the plain-digit classifier used by eval")
    p.add_argument("--mnist-dir", required=True)
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--limit", type=int)

    p = add("attack", cmd_attack,
            help="decrypt one cipher PNG with a trained model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)

    p = add("keysearch", cmd_keysearch,
            help="brute-force (p,q,n)+keystream from known pairs")
    p.add_argument("--pairs", required=True,
                   help="directory with *_plain.png / *_cipher.png pairs")
    p.add_argument("--bounds", help="p1..p2,q1..q2,n1..n2")
    p.add_argument("--max-pairs", type=int)
    p.add_argument("--out-record")

    p = add("eval", cmd_eval, help="score a trained model on a corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--classifier", required=True)
    p.add_argument("--report", help="JSONL output path (appended)")
    p.add_argument("--split", default="test")
    p.add_argument("--limit", type=int)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ChaoscrackError, ValueError, OSError) as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
