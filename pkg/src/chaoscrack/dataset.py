"""Corpus construction: IDX ingest, resize, key sampling, paired PNG output.

A corpus is a directory holding a ``manifest.txt`` plus one subdirectory per
split.  Each split contains ``{index}_{replica}_plain.png`` /
``{index}_{replica}_cipher.png`` pairs and a ``records.txt`` with one
key=value line per pair.  The manifest together with the source images is
sufficient to regenerate the corpus bit-exactly: static mode uses the base
key for every pair, dynamic mode re-derives each pair's key from
(seed, source index, replica index) so generation order never matters.
"""

import gzip
import hashlib
import io
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .cipher import STATIC_KEY, CipherKey, GrayImage, decrypt, encrypt
from .errors import FormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

MANIFEST_NAME = "manifest.txt"
RECORDS_NAME = "records.txt"


@dataclass(frozen=True)
class LabeledImage:
    """A grayscale digit image with its class label and source position."""

    image: GrayImage
    label: int
    source_index: int

    def __post_init__(self):
        if not 0 <= self.label <= 9:
            raise ValueError(f"label must be in [0, 9], got {self.label}")
        if self.source_index < 0:
            raise ValueError("source_index must be >= 0")


@dataclass(frozen=True)
class EncryptionRecord:
    """Key bookkeeping for one stored cipher/plain pair."""

    source_index: int
    replica: int
    label: int
    key: CipherKey

    def __post_init__(self):
        if self.replica < 0:
            raise ValueError("replica must be >= 0")


@dataclass
class DatasetManifest:
    """Everything needed to regenerate a corpus from the source images.

    ``base_key`` is the encryption key in static mode; in dynamic mode it
    supplies every field except p and q, which are redrawn per pair from
    ``p_range`` / ``q_range`` (inclusive bounds).
    """

    side: int
    key_mode: str
    replication: int
    seed: int
    base_key: CipherKey = STATIC_KEY
    p_range: tuple = (1, 9)
    q_range: tuple = (1, 9)
    train_pairs: int = 0
    test_pairs: int = 0

    def __post_init__(self):
        if self.side < 1:
            raise ValueError("side must be >= 1")
        if self.key_mode not in ("static", "dynamic"):
            raise ValueError(
                f"key_mode must be 'static' or 'dynamic', got {self.key_mode!r}")
        if self.key_mode == "static" and self.replication != 1:
            raise ValueError("static key mode requires replication == 1")
        if self.replication < 1:
            raise ValueError("replication must be >= 1")
        for name, (lo, hi) in (("p_range", self.p_range),
                               ("q_range", self.q_range)):
            if not (1 <= lo <= hi):
                raise ValueError(f"{name} bounds must satisfy 1 <= lo <= hi")

    def write(self, path):
        k = self.base_key
        lines = [
            "format=chaoscrack-corpus-v1",
            f"side={self.side}",
            f"key_mode={self.key_mode}",
            f"replication={self.replication}",
            f"seed={self.seed}",
            f"train_pairs={self.train_pairs}",
            f"test_pairs={self.test_pairs}",
            f"p_min={self.p_range[0]}",
            f"p_max={self.p_range[1]}",
            f"q_min={self.q_range[0]}",
            f"q_max={self.q_range[1]}",
            f"key_p={k.p}",
            f"key_q={k.q}",
            f"key_n={k.n}",
            f"key_x0={k.x0!r}",
            f"key_y0={k.y0!r}",
            f"key_z0={k.z0!r}",
            f"key_a={k.a!r}",
            f"key_b={k.b!r}",
            f"key_c={k.c!r}",
        ]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def read(cls, path):
        path = Path(path)
        fields = {}
        for ln, line in enumerate(path.read_text().splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{ln}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            fields[key] = value
        if fields.get("format") != "chaoscrack-corpus-v1":
            raise FormatError(
                f"{path}: unknown manifest format {fields.get('format')!r}")
        try:
            key = CipherKey(
                p=int(fields["key_p"]), q=int(fields["key_q"]),
                n=int(fields["key_n"]), x0=float(fields["key_x0"]),
                y0=float(fields["key_y0"]), z0=float(fields["key_z0"]),
                a=float(fields["key_a"]), b=float(fields["key_b"]),
                c=float(fields["key_c"]))
            return cls(
                side=int(fields["side"]), key_mode=fields["key_mode"],
                replication=int(fields["replication"]),
                seed=int(fields["seed"]), base_key=key,
                p_range=(int(fields["p_min"]), int(fields["p_max"])),
                q_range=(int(fields["q_min"]), int(fields["q_max"])),
                train_pairs=int(fields["train_pairs"]),
                test_pairs=int(fields["test_pairs"]))
        except KeyError as exc:
            raise FormatError(f"{path}: missing manifest field {exc}") from None
        except ValueError as exc:
            raise FormatError(f"{path}: bad manifest value: {exc}") from None


# ---------------------------------------------------------------------------
# IDX ingestion

def _read_file_bytes(path):
    """Read a file, transparently decompressing gzip."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except OSError as exc:
            raise FormatError(f"{path}: bad gzip stream: {exc}") from exc
    return raw


def _parse_idx_images(path):
    data = _read_file_bytes(path)
    if len(data) < 16:
        raise FormatError(
            f"{path}: truncated IDX image header: expected 16 bytes at "
            f"offset 0, found {len(data)}")
    magic, count, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(
            f"{path}: bad IDX image magic 0x{magic:08x} "
            f"(expected 0x{IDX_IMAGES_MAGIC:08x})")
    expected = count * rows * cols
    if len(data) - 16 != expected:
        raise FormatError(
            f"{path}: truncated IDX image file: expected {expected} data "
            f"bytes at offset 16, found {len(data) - 16}")
    if rows != cols:
        raise FormatError(f"{path}: non-square images {rows}x{cols}")
    images = np.frombuffer(data, dtype=np.uint8, offset=16)
    return images.reshape(count, rows, cols)


def _parse_idx_labels(path):
    data = _read_file_bytes(path)
    if len(data) < 8:
        raise FormatError(
            f"{path}: truncated IDX label header: expected 8 bytes at "
            f"offset 0, found {len(data)}")
    magic, count = struct.unpack(">II", data[:8])
    if magic != IDX_LABELS_MAGIC:
        raise FormatError(
            f"{path}: bad IDX label magic 0x{magic:08x} "
            f"(expected 0x{IDX_LABELS_MAGIC:08x})")
    if len(data) - 8 != count:
        raise FormatError(
            f"{path}: truncated IDX label file: expected {count} data bytes "
            f"at offset 8, found {len(data) - 8}")
    return np.frombuffer(data, dtype=np.uint8, offset=8)


def load_idx(images_path, labels_path):
    """Load a paired IDX image/label file set into LabeledImages."""
    images = _parse_idx_images(images_path)
    labels = _parse_idx_labels(labels_path)
    if len(images) != len(labels):
        raise FormatError(
            f"image/label count mismatch: {images_path} has {len(images)}, "
            f"{labels_path} has {len(labels)}")
    return [LabeledImage(GrayImage(img), int(lab), i)
            for i, (img, lab) in enumerate(zip(images, labels))]


# ---------------------------------------------------------------------------
# Resizing and normalization

def resize_array(pixels, side):
    """Nearest-neighbor square resize, index map floor(i * src / dst)."""
    if side < 1:
        raise ValueError("target side must be >= 1")
    src = pixels.shape[0]
    if src == side:
        return pixels.copy()
    idx = (np.arange(side) * src) // side
    return pixels[np.ix_(idx, idx)]


def resize(image, side):
    """Nearest-neighbor resize of a GrayImage to a new square side."""
    return GrayImage(resize_array(image.pixels, side))


def to_unit(pixels):
    """Map uint8 pixels to float32 in [0, 1] by v / 255."""
    return pixels.astype(np.float32) / np.float32(255.0)


def from_unit(values):
    """Map [0, 1] reals back to uint8 by round-half-up after scaling."""
    scaled = np.floor(np.clip(values, 0.0, 1.0) * 255.0 + 0.5)
    return scaled.astype(np.uint8)


# ---------------------------------------------------------------------------
# Key sampling

def sample_dynamic_key(rng, base, p_range=(1, 9), q_range=(1, 9)):
    """Draw p and q uniformly from their ranges; keep every other field."""
    p = int(rng.integers(p_range[0], p_range[1] + 1))
    q = int(rng.integers(q_range[0], q_range[1] + 1))
    return replace(base, p=p, q=q)


def pair_key(manifest, source_index, replica):
    """The key for one (source index, replica) pair under a manifest.

    Dynamic keys come from a generator seeded with (seed, index, replica),
    so any pair's key is recomputable in isolation.
    """
    if manifest.key_mode == "static":
        return manifest.base_key
    rng = np.random.default_rng((manifest.seed, source_index, replica))
    return sample_dynamic_key(rng, manifest.base_key,
                              manifest.p_range, manifest.q_range)


# ---------------------------------------------------------------------------
# PNG round trip

def png_bytes(image, compress_level=1):
    """Encode a GrayImage as 8-bit grayscale PNG bytes."""
    buf = io.BytesIO()
    Image.fromarray(image.pixels, mode="L").save(
        buf, format="PNG", compress_level=compress_level)
    return buf.getvalue()


def image_from_png_bytes(data):
    """Decode PNG bytes into a GrayImage; rejects non-grayscale input."""
    try:
        with Image.open(io.BytesIO(data)) as img:
            if img.mode != "L":
                raise FormatError(
                    f"expected 8-bit grayscale PNG (mode L), got mode "
                    f"{img.mode!r}")
            pixels = np.asarray(img, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise FormatError(f"malformed PNG: {exc}") from exc
    return GrayImage(pixels)


def write_png(path, image, compress_level=1):
    Path(path).write_bytes(png_bytes(image, compress_level))


def read_png(path):
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    try:
        return image_from_png_bytes(data)
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# Per-pair record lines

def record_line(record):
    k = record.key
    return (f"index={record.source_index} replica={record.replica} "
            f"label={record.label} p={k.p} q={k.q} n={k.n} "
            f"x0={k.x0!r} y0={k.y0!r} z0={k.z0!r} "
            f"a={k.a!r} b={k.b!r} c={k.c!r}")


def parse_record(line):
    fields = {}
    for token in line.split():
        if "=" not in token:
            raise FormatError(f"bad record token {token!r} in {line!r}")
        key, _, value = token.partition("=")
        fields[key] = value
    try:
        key = CipherKey(
            p=int(fields["p"]), q=int(fields["q"]), n=int(fields["n"]),
            x0=float(fields["x0"]), y0=float(fields["y0"]),
            z0=float(fields["z0"]), a=float(fields["a"]),
            b=float(fields["b"]), c=float(fields["c"]))
        return EncryptionRecord(
            source_index=int(fields["index"]),
            replica=int(fields["replica"]),
            label=int(fields["label"]), key=key)
    except KeyError as exc:
        raise FormatError(f"record missing field {exc}: {line!r}") from None
    except ValueError as exc:
        raise FormatError(f"bad record value: {exc}: {line!r}") from None


def load_records(corpus_dir, split):
    path = Path(corpus_dir) / split / RECORDS_NAME
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    return [parse_record(line) for line in text.splitlines() if line.strip()]


def pair_paths(corpus_dir, split, source_index, replica):
    base = Path(corpus_dir) / split
    stem = f"{source_index}_{replica}"
    return base / f"{stem}_plain.png", base / f"{stem}_cipher.png"


# ---------------------------------------------------------------------------
# Corpus build / load / verify

def build_corpus(manifest, plain, out_dir, split="train"):
    """Encrypt and persist every pair for one split; returns the pair count.

    The manifest's pair count for the split is updated and the manifest
    file rewritten, so the on-disk corpus always describes itself.
    """
    out_dir = Path(out_dir)
    split_dir = out_dir / split
    split_dir.mkdir(parents=True, exist_ok=True)

    lines = []
    written = 0
    for item in plain:
        resized = resize(item.image, manifest.side) \
            if item.image.side != manifest.side else item.image
        plain_png = png_bytes(resized)
        for replica in range(manifest.replication):
            key = pair_key(manifest, item.source_index, replica)
            cipher = encrypt(resized, key)
            plain_path, cipher_path = pair_paths(
                out_dir, split, item.source_index, replica)
            plain_path.write_bytes(plain_png)
            cipher_path.write_bytes(png_bytes(cipher))
            lines.append(record_line(EncryptionRecord(
                item.source_index, replica, item.label, key)))
            written += 1

    (split_dir / RECORDS_NAME).write_text("\n".join(lines) + "\n")
    if split == "train":
        manifest.train_pairs = written
    elif split == "test":
        manifest.test_pairs = written
    manifest.write(out_dir / MANIFEST_NAME)
    return written


def load_manifest(corpus_dir):
    return DatasetManifest.read(Path(corpus_dir) / MANIFEST_NAME)


def load_pairs(corpus_dir, split, limit=None):
    """Load a split's images as stacked uint8 arrays in record order.

    Returns (plain, cipher, records) with plain/cipher shaped (M, N, N).
    """
    records = load_records(corpus_dir, split)
    if limit is not None:
        records = records[:limit]
    plains, ciphers = [], []
    for rec in records:
        plain_path, cipher_path = pair_paths(
            corpus_dir, split, rec.source_index, rec.replica)
        plains.append(read_png(plain_path).pixels)
        ciphers.append(read_png(cipher_path).pixels)
    side = plains[0].shape[0] if plains else 0
    return (np.array(plains, dtype=np.uint8).reshape(-1, side, side),
            np.array(ciphers, dtype=np.uint8).reshape(-1, side, side),
            records)


def verify_pairs(corpus_dir, split, sample=None, seed=0):
    """Check stored pairs decrypt bit-exactly; returns the count checked.

    Each checked record must (a) carry the same key the manifest would
    re-derive for its (index, replica) slot and (b) have its cipher image
    decrypt exactly to its plain image.  ``sample`` limits the check to a
    deterministic random subset.
    """
    manifest = load_manifest(corpus_dir)
    records = load_records(corpus_dir, split)
    expected = {"train": manifest.train_pairs,
                "test": manifest.test_pairs}.get(split)
    if expected is not None and expected != len(records):
        raise FormatError(
            f"{split}: manifest says {expected} pairs, records file has "
            f"{len(records)}")
    if sample is not None and sample < len(records):
        picks = np.random.default_rng(seed).choice(
            len(records), size=sample, replace=False)
        records = [records[i] for i in picks]
    for rec in records:
        derived = pair_key(manifest, rec.source_index, rec.replica)
        if derived != rec.key:
            raise FormatError(
                f"{split} pair ({rec.source_index},{rec.replica}): stored "
                f"key does not match manifest derivation")
        plain_path, cipher_path = pair_paths(
            corpus_dir, split, rec.source_index, rec.replica)
        plain = read_png(plain_path)
        cipher = read_png(cipher_path)
        recovered = decrypt(cipher, rec.key)
        if recovered != plain:
            raise FormatError(
                f"{split} pair ({rec.source_index},{rec.replica}): cipher "
                f"does not decrypt to stored plain image")
    return len(records)


def corpus_digest(corpus_dir):
    """SHA-256 over every file's (relative path, bytes), path-sorted."""
    corpus_dir = Path(corpus_dir)
    digest = hashlib.sha256()
    paths = sorted(p for p in corpus_dir.rglob("*") if p.is_file())
    for path in paths:
        rel = path.relative_to(corpus_dir).as_posix()
        digest.update(rel.encode())
        digest.update(b"\0")
        digest.update(path.read_bytes())
    return digest.hexdigest()
