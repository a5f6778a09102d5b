"""Site kernels, site laws and lazily generated i.i.d. environments.

An environment assigns to every lattice site a nearest-neighbour transition
kernel drawn independently from a finitely supported mixture Q.  Sites are
never stored: the kernel at z is a pure function of (master seed, z), so an
"infinite" environment costs O(1) memory and replays bit-exactly.

Move indexing convention, used everywhere in the package: for dimension d
the 2d moves are ordered (+e_1, -e_1, +e_2, -e_2, ..., +e_d, -e_d).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import EllipticityViolated, NegativeEntry, NotNormalized
from .rng import SALT_ENV, SALT_SAMPLE, hash_uniform, vfold, vhash_words, vuniform64

NORMALIZATION_TOL = 1e-12


def move_vectors(d: int) -> np.ndarray:
    """(2d, d) int array of moves in the package ordering."""
    mv = np.zeros((2 * d, d), dtype=np.int64)
    for j in range(d):
        mv[2 * j, j] = 1
        mv[2 * j + 1, j] = -1
    return mv


@dataclass(frozen=True)
class SiteKernel:
    """Probability vector over the 2d signed unit moves at one site."""

    d: int
    probs: tuple[float, ...]

    @cached_property
    def cum_probs(self) -> np.ndarray:
        c = np.cumsum(np.asarray(self.probs, dtype=np.float64))
        c[-1] = 1.0
        return c

    def drift(self) -> np.ndarray:
        """Mean displacement per step, sum of p(e) * e."""
        return np.asarray(self.probs, dtype=np.float64) @ move_vectors(self.d).astype(np.float64)


def make_kernel(d: int, probs, epsilon: float) -> SiteKernel:
    """Validate and build a site kernel.

    Raises NegativeEntry, NotNormalized or EllipticityViolated; the input is
    never silently repaired.
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    probs = tuple(float(p) for p in probs)
    if len(probs) != 2 * d:
        raise ValueError(f"expected {2 * d} probabilities, got {len(probs)}")
    if any(p < 0.0 for p in probs):
        raise NegativeEntry(f"negative transition probability in {probs}")
    total = sum(probs)
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise NotNormalized(f"probabilities sum to {total!r}, off by more than {NORMALIZATION_TOL}")
    if any(p < epsilon for p in probs):
        raise EllipticityViolated(f"entry below ellipticity floor {epsilon}: {min(probs)}")
    return SiteKernel(d=d, probs=probs)


@dataclass(frozen=True)
class SiteLaw:
    """Finitely supported mixture of site kernels with ellipticity floor epsilon."""

    d: int
    epsilon: float
    atoms: tuple[tuple[float, SiteKernel], ...]

    def __post_init__(self):
        if not self.atoms:
            raise ValueError("site law needs at least one atom")
        weights = [w for w, _ in self.atoms]
        if any(w < 0.0 for w in weights):
            raise NegativeEntry(f"negative mixture weight in {weights}")
        if abs(sum(weights) - 1.0) > NORMALIZATION_TOL:
            raise NotNormalized(f"mixture weights sum to {sum(weights)!r}")
        for _, kernel in self.atoms:
            if kernel.d != self.d:
                raise ValueError("atom dimension mismatch")
            if any(p < self.epsilon for p in kernel.probs):
                raise EllipticityViolated(
                    f"atom entry below floor {self.epsilon}: {min(kernel.probs)}")

    @cached_property
    def cum_weights(self) -> np.ndarray:
        c = np.cumsum(np.asarray([w for w, _ in self.atoms], dtype=np.float64))
        c[-1] = 1.0
        return c

    @cached_property
    def atom_cum_probs(self) -> np.ndarray:
        """(n_atoms, 2d) cumulative probability rows, one per atom."""
        rows = np.stack([np.asarray(k.probs, dtype=np.float64) for _, k in self.atoms])
        c = np.cumsum(rows, axis=1)
        c[:, -1] = 1.0
        return c

    @cached_property
    def atom_probs(self) -> np.ndarray:
        return np.stack([np.asarray(k.probs, dtype=np.float64) for _, k in self.atoms])

    def mean_drift(self) -> np.ndarray:
        """Annealed one-step drift: mixture average of the atom drifts."""
        return sum(w * k.drift() for w, k in self.atoms)


def make_law(d: int, epsilon: float, atoms) -> SiteLaw:
    """Build a site law from (weight, probs) pairs, validating each kernel."""
    built = tuple((float(w), make_kernel(d, p, epsilon)) for w, p in atoms)
    return SiteLaw(d=d, epsilon=epsilon, atoms=built)


def mirror_law(law: SiteLaw) -> SiteLaw:
    """Swap the +e_1 and -e_1 entries of every atom; an involution."""
    atoms = []
    for w, k in law.atoms:
        p = list(k.probs)
        p[0], p[1] = p[1], p[0]
        atoms.append((w, SiteKernel(d=k.d, probs=tuple(p))))
    return SiteLaw(d=law.d, epsilon=law.epsilon, atoms=tuple(atoms))


def sample_site(law: SiteLaw, rng_key: int) -> SiteKernel:
    """Draw one atom of the law; deterministic in rng_key."""
    u = hash_uniform(rng_key, SALT_SAMPLE)
    idx = int(np.searchsorted(law.cum_weights, u, side="right"))
    return law.atoms[min(idx, len(law.atoms) - 1)][1]


@dataclass(frozen=True)
class Environment:
    """Lazy i.i.d. environment: kernel at z is a pure function of (seed, z)."""

    law: SiteLaw
    seed: int


def atom_index_at(seed: int, law: SiteLaw, z) -> int:
    """Index of the mixture atom assigned to site z under the given seed."""
    u = hash_uniform(seed, SALT_ENV, *(int(c) for c in z))
    idx = int(np.searchsorted(law.cum_weights, u, side="right"))
    return min(idx, len(law.atoms) - 1)


def env_at(env: Environment, z) -> SiteKernel:
    """The kernel at site z; repeated queries return the identical object."""
    return env.law.atoms[atom_index_at(env.seed, env.law, z)][1]


def atom_indices_at(seeds, law: SiteLaw, sites: np.ndarray) -> np.ndarray:
    """Vectorized atom assignment.

    seeds: scalar or (R,) uint64-compatible; sites: (R, d) integer array.
    Matches atom_index_at exactly, element by element.
    """
    sites = np.asarray(sites, dtype=np.int64)
    h = vhash_words(seeds, SALT_ENV)
    for j in range(sites.shape[1]):
        h = vfold(h, sites[:, j])
    u = vuniform64(h)
    idx = np.searchsorted(law.cum_weights, u, side="right")
    return np.minimum(idx, len(law.atoms) - 1)
