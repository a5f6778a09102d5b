"""Gluing slab streams into a doubly infinite path and its environment.

Finitely many slabs, indexed n in [n_lo, n_hi), are chained through
anchors Y_n with Y_0 = 0; their level strips tile the covered level range
exactly.  The glued environment serves the stored (path-conditioned)
kernels on the path set T and lazily generated fresh draws elsewhere.  A
coupled world additionally re-randomizes every on-path kernel with an
independent draw psi, yielding a jointly sampled (omega, omega_tilde, T)
where omega is i.i.d., agrees with omega_tilde off T, and carries no
information about T.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .env_model import SiteKernel, SiteLaw, atom_index_at, atom_indices_at, move_vectors
from .errors import OutsideCoveredRegion, TilingViolation
from .regeneration import Slab
from .rng import SALT_PSI, derive_key
from .walker import Trajectory, step_uniform

OMEGA_TILDE = "omega_tilde"
OMEGA = "omega"


@dataclass
class GluedWorld:
    """Finitely many glued slabs with explicit anchors and path set."""

    law: SiteLaw
    slabs: list[Slab]
    origin_index: int
    anchors: np.ndarray        # (K + 1, d); anchors[j] = Y_{j - origin_index}
    bases: np.ndarray          # (K + 1,) strip base levels, strictly increasing
    path_rows: dict[tuple[int, ...], int]
    onpath_atoms: np.ndarray   # (M,) atom index per path site (omega_tilde)
    psi_atoms: np.ndarray | None = field(default=None, repr=False)

    @property
    def d(self) -> int:
        return self.law.d

    @property
    def n_lo(self) -> int:
        return -self.origin_index

    @property
    def n_hi(self) -> int:
        return len(self.slabs) - self.origin_index

    @property
    def level_lo(self) -> int:
        return int(self.bases[0])

    @property
    def level_hi(self) -> int:
        """One past the last covered level."""
        return int(self.bases[-1])

    @property
    def coupled(self) -> bool:
        return self.psi_atoms is not None

    def anchor(self, n: int) -> np.ndarray:
        """Y_n for n in [n_lo, n_hi]."""
        return self.anchors[n + self.origin_index]

    def path_sites(self) -> np.ndarray:
        """(M, d) path sites owned by the covered strips, in row order."""
        out = np.empty((len(self.path_rows), self.d), dtype=np.int64)
        for site, row in self.path_rows.items():
            out[row] = site
        return out

    def path_set(self) -> set[tuple[int, ...]]:
        """The full path set T, including the top boundary anchor (whose
        level lies one strip past the covered range)."""
        s = set(self.path_rows)
        s.add(tuple(int(c) for c in self.anchors[-1]))
        return s

    def slab_of_level(self, level: int) -> int:
        """Global slab index j whose strip contains the level."""
        if level < self.level_lo or level >= self.level_hi:
            raise OutsideCoveredRegion(
                f"level {level} outside [{self.level_lo}, {self.level_hi})")
        return int(np.searchsorted(self.bases, level, side="right") - 1)


def glue_slabs(slabs: list[Slab], origin_index: int, law: SiteLaw) -> GluedWorld:
    """Chain slabs through anchors; slab j anchors index n = j - origin_index.

    Verifies the strip tiling invariant: each slab's displacement level must
    equal its width L, so consecutive strips abut with no gap or overlap.
    """
    if not slabs:
        raise ValueError("need at least one slab")
    if not 0 <= origin_index <= len(slabs):
        raise ValueError("origin_index out of range")
    d = slabs[0].d
    k = len(slabs)
    anchors = np.zeros((k + 1, d), dtype=np.int64)
    for j, s in enumerate(slabs):
        disp = s.displacement
        if s.L < 1 or int(disp[0]) != s.L or not s.check_interior():
            raise TilingViolation(f"slab {j} violates its interior-level invariant")
        anchors[j + 1] = anchors[j] + disp
    anchors -= anchors[origin_index].copy()
    bases = anchors[:, 0].copy()

    path_rows: dict[tuple[int, ...], int] = {}
    atoms: list[np.ndarray] = []
    row = 0
    for j, s in enumerate(slabs):
        if s.atom_idx is None:
            raise ValueError("slab lacks atom identities; extract or load with a law")
        abs_sites = s.sites + anchors[j]
        for site in abs_sites:
            key = tuple(int(c) for c in site)
            if key in path_rows:
                raise TilingViolation(f"duplicate path site {key} across slabs")
            path_rows[key] = row
            row += 1
        atoms.append(s.atom_idx)
    return GluedWorld(
        law=law,
        slabs=slabs,
        origin_index=origin_index,
        anchors=anchors,
        bases=bases,
        path_rows=path_rows,
        onpath_atoms=np.concatenate(atoms),
    )


def couple(slabs: list[Slab], law: SiteLaw, rng_key: int,
           origin_index: int | None = None) -> GluedWorld:
    """Glue and re-randomize: every on-path kernel of omega is a fresh draw.

    The psi draws are keyed by absolute site and fixed at glue time, so
    (omega, omega_tilde, T) is one consistent joint sample.
    """
    if origin_index is None:
        origin_index = len(slabs) // 2
    world = glue_slabs(slabs, origin_index, law)
    psi_seed = derive_key(rng_key, SALT_PSI)
    sites = world.path_sites()
    world.psi_atoms = atom_indices_at(psi_seed, law, sites).astype(np.int64)
    return world


def _strip_atom(world: GluedWorld, j: int, z: tuple[int, ...]) -> int:
    rel = tuple(int(c) - int(a) for c, a in zip(z, world.anchors[j]))
    return atom_index_at(world.slabs[j].strip_seed, world.law, rel)


def glued_env_at(world: GluedWorld, z, which: str = OMEGA_TILDE) -> SiteKernel:
    """Kernel at site z in the glued environment.

    On-path sites return the stored conditioned kernel (omega_tilde) or the
    re-randomized psi kernel (omega); off-path sites return the lazily
    generated strip kernel, identical for both environments.
    """
    if which not in (OMEGA, OMEGA_TILDE):
        raise ValueError(f"unknown environment selector {which!r}")
    z = tuple(int(c) for c in z)
    j = world.slab_of_level(z[0])
    row = world.path_rows.get(z)
    if row is None:
        atom = _strip_atom(world, j, z)
    elif which == OMEGA:
        if world.psi_atoms is None:
            raise ValueError("world is not coupled; no omega kernels")
        atom = int(world.psi_atoms[row])
    else:
        atom = int(world.onpath_atoms[row])
    return world.law.atoms[atom][1]


def glued_atoms_bulk(world: GluedWorld, sites: np.ndarray, which: str = OMEGA_TILDE,
                     ) -> np.ndarray:
    """Vectorized atom lookup for many sites (used by the statistical tests)."""
    sites = np.asarray(sites, dtype=np.int64)
    n = len(sites)
    out = np.empty(n, dtype=np.int64)
    levels = sites[:, 0]
    if levels.min() < world.level_lo or levels.max() >= world.level_hi:
        raise OutsideCoveredRegion("bulk query outside covered levels")
    js = np.searchsorted(world.bases, levels, side="right") - 1
    strip_mask = np.ones(n, dtype=bool)
    for i in range(n):
        row = world.path_rows.get(tuple(int(c) for c in sites[i]))
        if row is not None:
            strip_mask[i] = False
            if which == OMEGA:
                out[i] = int(world.psi_atoms[row])
            else:
                out[i] = int(world.onpath_atoms[row])
    if strip_mask.any():
        idx = np.flatnonzero(strip_mask)
        seeds = np.asarray([world.slabs[int(j)].strip_seed for j in js[idx]], dtype=np.uint64)
        rel = sites[idx] - world.anchors[js[idx]]
        out[idx] = atom_indices_at(seeds, world.law, rel)
    return out


@dataclass(frozen=True)
class GluedWalkResult:
    trajectory: Trajectory
    exit_side: str | None  # 'top', 'bottom', or None if steps exhausted
    exit_time: int | None
    min_level: int


def walk_on_glued(world: GluedWorld, start, steps: int, rng_key: int,
                  which: str = OMEGA_TILDE) -> GluedWalkResult:
    """Walk on the selected glued environment until exit or step budget.

    The walk stops after the move that first leaves the covered level range
    and reports which side it exited; the minimum level reached (including
    the exit point) is recorded.
    """
    start = tuple(int(c) for c in start)
    if not world.level_lo <= start[0] < world.level_hi:
        raise OutsideCoveredRegion(f"start level {start[0]} outside covered range")
    d = world.d
    mv = move_vectors(d)
    pos = np.asarray(start, dtype=np.int64)
    moves = np.empty(steps, dtype=np.int8)
    min_level = start[0]
    exit_side = None
    exit_time = None
    t = 0
    while t < steps:
        kernel = glued_env_at(world, pos, which)
        u = step_uniform(rng_key, 0, t)
        m = int(np.searchsorted(kernel.cum_probs, u, side="right"))
        m = min(m, 2 * d - 1)
        moves[t] = m
        pos = pos + mv[m]
        t += 1
        lev = int(pos[0])
        min_level = min(min_level, lev)
        if lev < world.level_lo:
            exit_side, exit_time = "bottom", t
            break
        if lev >= world.level_hi:
            exit_side, exit_time = "top", t
            break
    traj = Trajectory(start=start, moves=moves[:t].copy())
    return GluedWalkResult(trajectory=traj, exit_side=exit_side,
                           exit_time=exit_time, min_level=min_level)
