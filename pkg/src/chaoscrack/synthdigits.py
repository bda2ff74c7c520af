"""Deterministic synthetic digit images in standard IDX file format.

Renders 28x28 grayscale digits from a 5x7 glyph font with per-image scale,
position, and intensity variation plus a box blur for soft edges.  Output
files use the standard IDX layout (big-endian magics 0x803 / 0x801) so they
feed the normal ingestion path; drop-in stand-ins when the real handwritten
digit files are unavailable.  Every image is derived from (seed, index), so
regeneration is bit-exact and order-independent.
"""

import struct
from pathlib import Path

import numpy as np

SIDE = 28

# 5x7 bitmap font, one string row per scanline, "1" = stroke.
_GLYPHS = {
    0: ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    1: ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    2: ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    3: ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    4: ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    5: ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    6: ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    7: ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    8: ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    9: ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
}

_GLYPH_ARRAYS = {
    digit: np.array([[int(ch) for ch in row] for row in rows],
                    dtype=np.float64)
    for digit, rows in _GLYPHS.items()
}


def _box_blur(canvas):
    """One 3x3 box-filter pass with zero padding."""
    padded = np.zeros((canvas.shape[0] + 2, canvas.shape[1] + 2))
    padded[1:-1, 1:-1] = canvas
    out = np.zeros_like(canvas)
    for dr in range(3):
        for dc in range(3):
            out += padded[dr:dr + canvas.shape[0], dc:dc + canvas.shape[1]]
    return out / 9.0


def render_digit(digit, rng):
    """Render one 28x28 uint8 image of a digit with random variation."""
    glyph = _GLYPH_ARRAYS[digit]
    height = int(rng.integers(16, 23))
    width = int(np.clip(round(height * 5 / 7 * rng.uniform(0.85, 1.15)),
                        8, 20))
    rows = (np.arange(height) * glyph.shape[0]) // height
    cols = (np.arange(width) * glyph.shape[1]) // width
    scaled = glyph[np.ix_(rows, cols)]

    canvas = np.zeros((SIDE, SIDE))
    top_margin = SIDE - height
    left_margin = SIDE - width
    top = int(np.clip(top_margin // 2 + rng.integers(-3, 4), 0, top_margin))
    left = int(np.clip(left_margin // 2 + rng.integers(-3, 4),
                       0, left_margin))
    intensity = float(rng.integers(180, 256))
    canvas[top:top + height, left:left + width] = scaled * intensity
    return np.clip(_box_blur(canvas), 0, 255).astype(np.uint8)


def generate_arrays(count, seed):
    """Render ``count`` images; labels cycle 0..9 so classes stay balanced."""
    images = np.zeros((count, SIDE, SIDE), dtype=np.uint8)
    labels = np.zeros(count, dtype=np.uint8)
    for i in range(count):
        label = i % 10
        labels[i] = label
        images[i] = render_digit(label, np.random.default_rng((seed, i)))
    return images, labels


def write_idx_images(path, images):
    count, rows, cols = images.shape
    header = struct.pack(">IIII", 0x00000803, count, rows, cols)
    Path(path).write_bytes(header + images.tobytes())


def write_idx_labels(path, labels):
    header = struct.pack(">II", 0x00000801, len(labels))
    Path(path).write_bytes(header + labels.astype(np.uint8).tobytes())


def generate(out_dir, n_train=60000, n_test=10000, seed=20260821):
    """Write a full train/test IDX file set; returns the four file paths.

    Train and test draw from disjoint seed streams so the splits never
    share an image.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_images, train_labels = generate_arrays(n_train, seed)
    test_images, test_labels = generate_arrays(n_test, seed + 1)
    paths = {
        "train_images": out_dir / "train-images-idx3-ubyte",
        "train_labels": out_dir / "train-labels-idx1-ubyte",
        "test_images": out_dir / "t10k-images-idx3-ubyte",
        "test_labels": out_dir / "t10k-labels-idx1-ubyte",
    }
    write_idx_images(paths["train_images"], train_images)
    write_idx_labels(paths["train_labels"], train_labels)
    write_idx_images(paths["test_images"], test_images)
    write_idx_labels(paths["test_labels"], test_labels)
    return paths
