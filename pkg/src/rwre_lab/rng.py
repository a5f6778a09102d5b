"""Counter-based keyed randomness.

Every random quantity in this package is a pure function of a 64-bit key
and a tuple of integer counters (site coordinates, replica index, step
index, ...).  Nothing is ever drawn from mutable generator state, so any
value can be recomputed in isolation: environments need no storage, and
results do not depend on batching or worker count.

The word mixer is the splitmix64 finalizer; words are folded into the
state one at a time through a fixed bijection.  Scalar (python int) and
vectorized (numpy uint64) implementations are kept in lockstep and tested
for exact agreement.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

# Domain-separation salts.  Values are arbitrary but frozen: changing any
# of them changes every simulation keyed off a given master seed.
SALT_ENV = 0xE1
SALT_STEP = 0x57
SALT_ANNEAL = 0xA2
SALT_WALK = 0x3B
SALT_STRIP = 0x5C
SALT_PSI = 0x9D
SALT_SAMPLE = 0xC4
SALT_GEN = 0x6F

_U = np.uint64
_G = _U(GOLDEN)
_UM1 = _U(_M1)
_UM2 = _U(_M2)
_S30, _S27, _S31, _S11 = _U(30), _U(27), _U(31), _U(11)
_INV53 = 2.0 ** -53


def mix64(x: int) -> int:
    """splitmix64 finalizer on a 64-bit word."""
    x &= MASK64
    x ^= x >> 30
    x = (x * _M1) & MASK64
    x ^= x >> 27
    x = (x * _M2) & MASK64
    return x ^ (x >> 31)


def fold(h: int, w: int) -> int:
    """Absorb one word into the hash state (a bijection of h for fixed w)."""
    return mix64((h + GOLDEN + mix64(((w & MASK64) * _M1 + GOLDEN) & MASK64)) & MASK64)


def hash_words(*words: int) -> int:
    """Hash an ordered tuple of integers to a 64-bit value."""
    h = GOLDEN
    for w in words:
        h = fold(h, w)
    return h


def uniform64(h: int) -> float:
    """Map a 64-bit hash to a float in [0, 1)."""
    return (h >> 11) * _INV53


def hash_uniform(*words: int) -> float:
    return uniform64(hash_words(*words))


def derive_key(*words: int) -> int:
    """Derive a subkey; identical to hash_words, named for intent."""
    return hash_words(*words)


def np_generator(*words: int) -> np.random.Generator:
    """A numpy Generator seeded from a derived key (resampling plumbing only).

    Anything simulated step-by-step uses the pure hashes above instead.
    """
    return np.random.Generator(np.random.PCG64(hash_words(*words, SALT_GEN)))


# -- vectorized counterparts -------------------------------------------------

def vmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = x.astype(np.uint64, copy=True)
        x ^= x >> _S30
        x *= _UM1
        x ^= x >> _S27
        x *= _UM2
        x ^= x >> _S31
    return x


def vfold(h: np.ndarray | int, w: np.ndarray | int) -> np.ndarray:
    w = np.asarray(w).astype(np.uint64)
    h = np.asarray(h).astype(np.uint64)
    with np.errstate(over="ignore"):
        inner = w * _UM1 + _G
        return vmix64(h + _G + vmix64(inner))


def vhash_words(*words: np.ndarray | int) -> np.ndarray:
    """Vectorized hash_words; broadcasting applies across word arguments."""
    h: np.ndarray | int = GOLDEN
    for w in words:
        h = vfold(h, w)
    return np.asarray(h, dtype=np.uint64)


def vuniform64(h: np.ndarray) -> np.ndarray:
    return (h >> _S11).astype(np.float64) * _INV53
