"""Chaos-based image cipher: cat-map pixel shuffle plus chaotic XOR keystream.

Encryption runs in two stages.  First the pixel positions of a square
grayscale image are permuted by an integer cat map iterated n times mod N.
Second the shuffled pixels, scanned row-major, are XORed with a byte
keystream derived from a three-variable chaotic flow integrated with
classical RK4 at step 0.001.

Coordinate convention (fixed, arbitrary): x is the column index, y the row
index, both in [0, N-1]; images are stored row-major, so the flat index of
(x, y) is y*N + x.

Keystream bytes read digits 13-14 of the trajectory's fractional parts, so
they depend on every bit of the float state.  The RK4 arithmetic is written
in a pinned order (matching the frozen golden-vector oracle in the test
tree); do not reorder the expressions in _rk4_step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import DivergenceError

STEP_SIZE = 0.001

__all__ = [
    "STEP_SIZE",
    "CipherKey",
    "CatMapMatrix",
    "GrayImage",
    "ChenState",
    "cat_map_matrix",
    "shuffle",
    "unshuffle",
    "shuffle_indices",
    "unshuffle_indices",
    "chen_derivatives",
    "chen_rk4_step",
    "keystream",
    "xor_bytes",
    "encrypt",
    "decrypt",
]


@dataclass(frozen=True)
class CipherKey:
    """Secret tuple driving both cipher stages.

    p, q, n parameterize the cat map; (x0, y0, z0) seed the chaotic flow
    with system parameters (a, b, c).
    """

    p: int
    q: int
    n: int
    x0: float
    y0: float
    z0: float
    a: float = 35.0
    b: float = 3.0
    c: float = 28.0

    def __post_init__(self):
        if self.p < 1 or self.q < 1:
            raise ValueError(f"p and q must be >= 1, got p={self.p} q={self.q}")
        if self.n < 0:
            raise ValueError(f"iteration count n must be >= 0, got {self.n}")

    @property
    def chaotic_regime(self) -> bool:
        """True iff the system parameters sit in the known chaotic band."""
        return self.a == 35.0 and self.b == 3.0 and 20.0 <= self.c <= 28.4


# Static key used throughout the experiments.
STATIC_KEY = CipherKey(p=4, q=7, n=5, x0=-10.058, y0=0.368, z0=37.368,
                       a=35.0, b=3.0, c=28.0)


@dataclass(frozen=True)
class CatMapMatrix:
    """2x2 integer matrix mod N with unit determinant."""

    m1: int
    m2: int
    m3: int
    m4: int
    modulus: int

    def __post_init__(self):
        if self.modulus < 2:
            raise ValueError(f"modulus must be >= 2, got {self.modulus}")
        for name in ("m1", "m2", "m3", "m4"):
            v = getattr(self, name)
            object.__setattr__(self, name, v % self.modulus)
        det = (self.m1 * self.m4 - self.m2 * self.m3) % self.modulus
        if det != 1:
            raise ValueError(
                f"matrix determinant must be 1 mod {self.modulus}, got {det}")

    def inverse(self) -> "CatMapMatrix":
        # det == 1, so the adjugate is the inverse.
        return CatMapMatrix(self.m4, -self.m2, -self.m3, self.m1, self.modulus)


class ChenState(NamedTuple):
    x: float
    y: float
    z: float


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Square 8-bit grayscale raster, row-major, immutable."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"image must be square 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise ValueError("image side must be >= 1")
        if arr.dtype != np.uint8:
            raise ValueError(f"image dtype must be uint8, got {arr.dtype}")
        arr = np.ascontiguousarray(arr).copy()
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    @property
    def side(self) -> int:
        return self.pixels.shape[0]

    def flat(self) -> np.ndarray:
        """Row-major 1-D view (left to right, then top to bottom)."""
        return self.pixels.reshape(-1)

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()

    @classmethod
    def from_flat(cls, data, side: int) -> "GrayImage":
        arr = np.frombuffer(bytes(data), dtype=np.uint8)
        if arr.size != side * side:
            raise ValueError(
                f"expected {side * side} bytes for side {side}, got {arr.size}")
        return cls(arr.reshape(side, side))

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    __hash__ = None

    def __repr__(self):
        return f"GrayImage(side={self.side})"


def cat_map_matrix(p: int, q: int, n: int, side: int) -> CatMapMatrix:
    """n-th power of [[1, p], [q, p*q + 1]] with entries reduced mod side."""
    if side < 2:
        raise ValueError(f"side must be >= 2, got {side}")
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    a, b, c, d = 1, 0, 0, 1
    e, f, g, h = 1 % side, p % side, q % side, (p * q + 1) % side
    k = n
    while k:  # square-and-multiply in Z_side
        if k & 1:
            a, b, c, d = ((a * e + b * g) % side, (a * f + b * h) % side,
                          (c * e + d * g) % side, (c * f + d * h) % side)
        e, f, g, h = ((e * e + f * g) % side, (e * f + f * h) % side,
                      (g * e + h * g) % side, (g * f + h * h) % side)
        k >>= 1
    return CatMapMatrix(a, b, c, d, side)


@lru_cache(maxsize=2048)
def _perm_pair(m1: int, m2: int, m3: int, m4: int, side: int):
    """Gather index arrays (forward, inverse) for the cat-map permutation.

    forward satisfies out_flat = in_flat[forward]; inverse undoes it.
    """
    xs, ys = np.meshgrid(np.arange(side), np.arange(side))  # xs varies fastest
    xp = (m1 * xs + m2 * ys) % side
    yp = (m3 * xs + m4 * ys) % side
    src = (ys * side + xs).reshape(-1)
    dst = (yp * side + xp).reshape(-1)
    forward = np.empty(side * side, dtype=np.intp)
    forward[dst] = src
    inverse = np.empty_like(forward)
    inverse[src] = dst
    forward.flags.writeable = False
    inverse.flags.writeable = False
    return forward, inverse


def shuffle_indices(matrix: CatMapMatrix) -> np.ndarray:
    """Flat gather indices g with shuffled_flat = plain_flat[g]."""
    return _perm_pair(matrix.m1, matrix.m2, matrix.m3, matrix.m4,
                      matrix.modulus)[0]


def unshuffle_indices(matrix: CatMapMatrix) -> np.ndarray:
    return _perm_pair(matrix.m1, matrix.m2, matrix.m3, matrix.m4,
                      matrix.modulus)[1]


def _check_modulus(image: GrayImage, matrix: CatMapMatrix):
    if matrix.modulus != image.side:
        raise ValueError(
            f"matrix modulus {matrix.modulus} does not match image side "
            f"{image.side}")


def shuffle(image: GrayImage, matrix: CatMapMatrix) -> GrayImage:
    """Move the pixel at (x, y) to (x', y') = M (x, y)^T mod N."""
    _check_modulus(image, matrix)
    g = shuffle_indices(matrix)
    return GrayImage(image.flat()[g].reshape(image.side, image.side))


def unshuffle(image: GrayImage, matrix: CatMapMatrix) -> GrayImage:
    """Exact inverse of shuffle with the same matrix."""
    _check_modulus(image, matrix)
    g = unshuffle_indices(matrix)
    return GrayImage(image.flat()[g].reshape(image.side, image.side))


def chen_derivatives(state, a: float, b: float, c: float) -> ChenState:
    """Right-hand side of the chaotic flow at the given state."""
    x, y, z = state
    dx = a * (y - x)
    dy = (c - a) * x - x * z + c * y
    dz = x * y - b * z
    return ChenState(dx, dy, dz)


def _rk4_step(x, y, z, a, b, c, h):
    # Operation order pinned; the golden keystream fixture depends on it.
    hh = 0.5 * h
    s = h / 6.0

    k1x = a * (y - x)
    k1y = (c - a) * x - x * z + c * y
    k1z = x * y - b * z

    x2 = x + hh * k1x
    y2 = y + hh * k1y
    z2 = z + hh * k1z
    k2x = a * (y2 - x2)
    k2y = (c - a) * x2 - x2 * z2 + c * y2
    k2z = x2 * y2 - b * z2

    x3 = x + hh * k2x
    y3 = y + hh * k2y
    z3 = z + hh * k2z
    k3x = a * (y3 - x3)
    k3y = (c - a) * x3 - x3 * z3 + c * y3
    k3z = x3 * y3 - b * z3

    x4 = x + h * k3x
    y4 = y + h * k3y
    z4 = z + h * k3z
    k4x = a * (y4 - x4)
    k4y = (c - a) * x4 - x4 * z4 + c * y4
    k4z = x4 * y4 - b * z4

    nx = x + s * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    ny = y + s * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
    nz = z + s * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
    return nx, ny, nz


def chen_rk4_step(state, a: float, b: float, c: float, h: float) -> ChenState:
    """One classical 4th-order Runge-Kutta step of the chaotic flow."""
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    x, y, z = state
    if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
        raise DivergenceError(f"non-finite input state ({x}, {y}, {z})")
    nx, ny, nz = _rk4_step(x, y, z, a, b, c, h)
    if not (math.isfinite(nx) and math.isfinite(ny) and math.isfinite(nz)):
        raise DivergenceError(
            f"trajectory diverged: step from ({x}, {y}, {z}) produced "
            f"({nx}, {ny}, {nz})")
    return ChenState(nx, ny, nz)


@lru_cache(maxsize=64)
def _keystream_cached(x0: float, y0: float, z0: float,
                      a: float, b: float, c: float, n_bytes: int) -> bytes:
    x, y, z = x0, y0, z0
    h = STEP_SIZE
    out = bytearray()
    steps = -(-n_bytes // 3)  # ceil: one step emits three bytes
    for i in range(steps):
        x, y, z = _rk4_step(x, y, z, a, b, c, h)
        if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
            raise DivergenceError(
                f"trajectory diverged at step {i + 1} of {steps}")
        for v in (x, y, z):
            av = abs(v)
            frac = av - math.floor(av)
            out.append(int(math.floor(frac * 1e14)) % 256)
    return bytes(out[:n_bytes])


def keystream(key: CipherKey, side: int) -> bytes:
    """side*side keystream bytes from the chaotic trajectory of key.

    The flow starts at (x0, y0, z0) and advances ceil(side^2 / 3) RK4
    steps of size 0.001; after each step the fractional parts of |x|,
    |y|, |z| yield one byte each via floor(frac * 1e14) mod 256.
    """
    if side < 2:
        raise ValueError(f"side must be >= 2, got {side}")
    return _keystream_cached(key.x0, key.y0, key.z0, key.a, key.b, key.c,
                             side * side)


def xor_bytes(data, ks) -> bytes:
    """Element-wise XOR of two equal-length byte sequences."""
    data = bytes(data)
    ks = bytes(ks)
    if len(data) != len(ks):
        raise ValueError(
            f"length mismatch: data has {len(data)} bytes, keystream "
            f"{len(ks)}")
    return (np.frombuffer(data, dtype=np.uint8)
            ^ np.frombuffer(ks, dtype=np.uint8)).tobytes()


def encrypt(image: GrayImage, key: CipherKey, *,
            keystream_override: bytes | None = None) -> GrayImage:
    """Shuffle with the cat map, then XOR the row-major scan with the
    keystream and reshape row-major.

    keystream_override is a test hook; pass side*side bytes to replace the
    chaotic keystream.
    """
    side = image.side
    m = cat_map_matrix(key.p, key.q, key.n, side)
    shuffled = shuffle(image, m)
    ks = keystream(key, side) if keystream_override is None else keystream_override
    enc = xor_bytes(shuffled.tobytes(), ks)
    return GrayImage.from_flat(enc, side)


def decrypt(image: GrayImage, key: CipherKey, *,
            keystream_override: bytes | None = None) -> GrayImage:
    """Exact inverse of encrypt: XOR with the regenerated keystream, then
    undo the cat-map permutation."""
    side = image.side
    ks = keystream(key, side) if keystream_override is None else keystream_override
    dec = xor_bytes(image.tobytes(), ks)
    m = cat_map_matrix(key.p, key.q, key.n, side)
    return unshuffle(GrayImage.from_flat(dec, side), m)
