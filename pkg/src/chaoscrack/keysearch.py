"""Known-plaintext brute force over the shuffle parameter space.

Because encryption is shuffle-then-XOR, any candidate (p, q, n) yields a
candidate keystream K = shuffle(P1) xor C1 from the first pair; a wrong
permutation almost surely fails to explain a second pair, so candidates
are verified against every remaining pair and only an exact validator is
returned.  The recovered keystream is an opaque byte string — the chaotic
initial conditions behind it are never reconstructed, and are not needed
to decrypt under the same key.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

from .cipher import (GrayImage, cat_map_matrix, shuffle_indices,
                     unshuffle_indices, xor_bytes)


@dataclass(frozen=True)
class SearchBounds:
    """Inclusive integer intervals for the (p, q, n) exhaustive search."""

    p_range: tuple = (1, 9)
    q_range: tuple = (1, 9)
    n_range: tuple = (1, 8)

    def __post_init__(self):
        for name, (lo, hi) in (("p_range", self.p_range),
                               ("q_range", self.q_range),
                               ("n_range", self.n_range)):
            if lo > hi:
                raise ValueError(f"{name} is empty: ({lo}, {hi})")
            if lo < 1:
                raise ValueError(f"{name} lower bound must be >= 1")

    @property
    def size(self):
        return ((self.p_range[1] - self.p_range[0] + 1)
                * (self.q_range[1] - self.q_range[0] + 1)
                * (self.n_range[1] - self.n_range[0] + 1))

    def candidates(self):
        """Deterministic enumeration order: ascending n, then p, then q."""
        for n in range(self.n_range[0], self.n_range[1] + 1):
            for p in range(self.p_range[0], self.p_range[1] + 1):
                for q in range(self.q_range[0], self.q_range[1] + 1):
                    yield p, q, n


@dataclass(frozen=True)
class RecoveredKey:
    """A validated equivalent key: shuffle parameters plus raw keystream."""

    p: int
    q: int
    n: int
    keystream: bytes
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("score must be in [0, 1]")

    @property
    def keystream_digest(self):
        return hashlib.sha256(self.keystream).hexdigest()


def recover(pairs, bounds=None):
    """Search bounds for a key explaining every (plain, cipher) pair.

    ``pairs`` is a sequence of (plain GrayImage, cipher GrayImage) sharing
    one unknown key.  The first pair derives each candidate keystream; all
    remaining pairs validate it.  Returns a RecoveredKey (validation score
    1.0 by construction) or None when nothing in bounds validates.
    """
    if bounds is None:
        bounds = SearchBounds()
    pairs = list(pairs)
    if len(pairs) < 2:
        raise ValueError(
            f"key search needs >= 2 known pairs (one to derive, one or "
            f"more to validate), got {len(pairs)}")
    side = pairs[0][0].side
    for plain, cipher in pairs:
        if plain.side != side or cipher.side != side:
            raise ValueError("all pairs must share one image side")

    plains = [np.frombuffer(p.tobytes(), dtype=np.uint8) for p, _ in pairs]
    ciphers = [np.frombuffer(c.tobytes(), dtype=np.uint8) for _, c in pairs]

    for p, q, n in bounds.candidates():
        fw = shuffle_indices(cat_map_matrix(p, q, n, side))
        ks = plains[0][fw] ^ ciphers[0]
        if all(np.array_equal(plain[fw] ^ ks, cipher)
               for plain, cipher in zip(plains[1:], ciphers[1:])):
            return RecoveredKey(p=p, q=q, n=n, keystream=ks.tobytes(),
                                score=1.0)
    return None


def decrypt_with(recovered, cipher):
    """Decrypt one cipher image using a recovered equivalent key."""
    matrix = cat_map_matrix(recovered.p, recovered.q, recovered.n,
                            cipher.side)
    mixed = xor_bytes(cipher.tobytes(), recovered.keystream)
    flat = np.frombuffer(mixed, dtype=np.uint8)
    inv = unshuffle_indices(matrix)
    return GrayImage(flat[inv].reshape(cipher.side, cipher.side))
