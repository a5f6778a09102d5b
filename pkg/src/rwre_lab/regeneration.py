"""Regeneration times, slab extraction, and i.i.d. slab streams.

A time t regenerates in direction +e_1 when every earlier level is strictly
below and every later level strictly above the level at t.  In a finite run
the future quantifier is censored: only times with at least `margin` steps
of confirming lookahead are kept.  Consecutive confirmed times bound slabs;
concatenating slabs from independent runs (first slab of each run dropped)
yields an approximately i.i.d. stream of slab draws.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .env_model import Environment, SiteLaw, atom_indices_at, move_vectors
from .errors import BallisticityDoubtful
from .rng import SALT_STRIP, derive_key
from .walker import Trajectory, annealed_ensemble, annealed_env_seed

STREAM_BATCH = 16  # runs per batch; fixed so streams never depend on scheduling


@dataclass(frozen=True)
class RegenRecord:
    """Confirmed regeneration times of one trajectory."""

    times: np.ndarray  # increasing int64 indices
    censor_margin: int

    def __len__(self) -> int:
        return len(self.times)


def find_regenerations(traj: Trajectory, censor_margin: int) -> RegenRecord:
    """All indices whose level strictly separates past from future.

    Single O(n) pass using a running past-maximum and future-minimum of the
    level sequence.  Times within `censor_margin` of the horizon are dropped
    as unconfirmed.
    """
    n = traj.steps
    if censor_margin >= n + 1:
        raise ValueError(f"margin {censor_margin} must be < trajectory length {n + 1}")
    lev = traj.levels
    past_max = np.empty(n + 1, dtype=np.int64)
    past_max[0] = np.iinfo(np.int64).min
    if n:
        np.maximum.accumulate(lev[:-1], out=past_max[1:])
    fut_min = np.empty(n + 1, dtype=np.int64)
    fut_min[n] = np.iinfo(np.int64).max
    if n:
        fut_min[:-1] = np.minimum.accumulate(lev[::-1][:-1])[::-1]
    ok = (past_max < lev) & (fut_min > lev)
    ok[n - censor_margin + 1:] = False
    return RegenRecord(times=np.flatnonzero(ok).astype(np.int64), censor_margin=censor_margin)


@dataclass(frozen=True)
class Slab:
    """One regeneration slab: level width, duration, relative path, kernels.

    `sites` are the visited sites relative to the slab anchor whose levels
    lie in [0, L); the slab's endpoint (level L) belongs to the next slab.
    Off-path strip sites are not stored: they regenerate lazily from
    strip_seed as fresh i.i.d. draws of the law, which leaves the slab's
    distribution unchanged because off-path kernels are independent of the
    path that avoided them.
    """

    L: int
    u: int
    moves: np.ndarray  # (u,) int8
    sites: np.ndarray  # (k, d) int64, relative, levels in [0, L)
    kernels: np.ndarray  # (k, 2d) float64 rows aligned with sites
    strip_seed: int
    atom_idx: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def d(self) -> int:
        return self.sites.shape[1]

    @cached_property
    def displacement(self) -> np.ndarray:
        """K(u), the anchor-to-anchor displacement; its level equals L."""
        return move_vectors(self.d)[self.moves].sum(axis=0)

    def path_positions(self) -> np.ndarray:
        """(u + 1, d) relative path K(0..u), starting at the origin."""
        mv = move_vectors(self.d)
        out = np.zeros((self.u + 1, self.d), dtype=np.int64)
        if self.u:
            np.cumsum(mv[self.moves], axis=0, out=out[1:])
        return out

    def check_interior(self) -> bool:
        """Interior levels in [1, L-1], K(0) = 0, level of K(u) = L."""
        lev = self.path_positions()[:, 0]
        if lev[0] != 0 or lev[-1] != self.L:
            return False
        if self.u > 1 and (lev[1:-1].min() < 1 or lev[1:-1].max() > self.L - 1):
            return False
        return True


def extract_slabs(traj: Trajectory, env: Environment, record: RegenRecord) -> list[Slab]:
    """One slab per consecutive pair of confirmed times.

    The segment before the first confirmed time is not a slab and is
    discarded.  On-path kernels are read from the environment at the visited
    absolute sites; each slab gets its own strip seed for lazy off-path
    generation.
    """
    if len(record) < 2:
        raise ValueError("need at least 2 confirmed regeneration times")
    pos = traj.positions
    law = env.law
    times = record.times
    pieces = []
    for a, b in zip(times[:-1], times[1:]):
        a, b = int(a), int(b)
        anchor = pos[a]
        rel = pos[a:b + 1] - anchor
        L = int(rel[-1, 0])
        sites = np.unique(rel[rel[:, 0] < L], axis=0)
        pieces.append((a, b, L, anchor, sites))
    # one keyed-hash pass over every visited site of the trajectory
    all_atoms = atom_indices_at(
        env.seed, law, np.concatenate([anchor + sites for _, _, _, anchor, sites in pieces]))
    out: list[Slab] = []
    at = 0
    for a, b, L, anchor, sites in pieces:
        atoms = all_atoms[at:at + len(sites)].astype(np.int64)
        at += len(sites)
        out.append(Slab(
            L=L,
            u=b - a,
            moves=traj.moves[a:b].astype(np.int8),
            sites=sites,
            kernels=law.atom_probs[atoms],
            strip_seed=derive_key(env.seed, SALT_STRIP, *(int(c) for c in anchor)),
            atom_idx=atoms,
        ))
    return out


def check_ballistic(law: SiteLaw, rng_key: int, reps: int = 256, steps: int = 400) -> float:
    """Empirical velocity pre-check; raises unless drift in +e_1 clears 3 sigma.

    Returns the estimated first-coordinate velocity.
    """
    moves = annealed_ensemble(law, np.zeros(law.d, dtype=np.int64), steps, rng_key, reps)
    lev = move_vectors(law.d)[:, 0][moves].sum(axis=1) / steps
    mean = float(lev.mean())
    sd = float(lev.std(ddof=1)) / np.sqrt(reps)
    if mean - 3.0 * sd <= 0.0:
        raise BallisticityDoubtful(
            f"velocity estimate {mean:.4f} +/- {3 * sd:.4f} does not clear zero")
    return mean


def _batch_slabs(law: SiteLaw, rng_key: int, first_run: int, runs: int,
                 horizon: int, margin: int) -> list[Slab]:
    """Slabs from a contiguous block of runs, first slab of each run dropped."""
    moves = annealed_ensemble(law, np.zeros(law.d, dtype=np.int64), horizon, rng_key,
                              reps=runs, rep_offset=first_run)
    out: list[Slab] = []
    origin = tuple([0] * law.d)
    for i in range(runs):
        traj = Trajectory(start=origin, moves=moves[i])
        record = find_regenerations(traj, margin)
        if len(record) < 3:
            continue
        env = Environment(law=law, seed=annealed_env_seed(rng_key, first_run + i))
        out.extend(extract_slabs(traj, env, record)[1:])
    return out


def sample_slab_stream(
    law: SiteLaw,
    count: int,
    horizon: int,
    margin: int,
    rng_key: int,
    skip_ballistic_check: bool = False,
) -> list[Slab]:
    """Exactly `count` slab draws from independent annealed runs.

    Each run contributes its slabs in order, minus the first slab (whose law
    differs from the stationary slab law) and the censored tail.  The stream
    is a pure function of (law, count, horizon, margin, rng_key).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if margin >= horizon:
        raise ValueError("margin must be < horizon")
    if not skip_ballistic_check:
        check_ballistic(law, derive_key(rng_key, 0xB0))
    out: list[Slab] = []
    run_id = 0
    while len(out) < count:
        out.extend(_batch_slabs(law, rng_key, run_id, STREAM_BATCH, horizon, margin))
        run_id += STREAM_BATCH
        if run_id > 2 * STREAM_BATCH and not out:
            raise BallisticityDoubtful(
                f"no slabs confirmed in {run_id} runs at horizon {horizon}")
    return out[:count]


def slab_array(slabs: list[Slab], what: str) -> np.ndarray:
    """Column view of a slab stream: 'L', 'u', or 'disp' (displacements)."""
    if what == "L":
        return np.asarray([s.L for s in slabs], dtype=np.int64)
    if what == "u":
        return np.asarray([s.u for s in slabs], dtype=np.int64)
    if what == "disp":
        return np.stack([s.displacement for s in slabs])
    raise ValueError(f"unknown column {what!r}")


# -- line-oriented slab records ------------------------------------------------

def save_slab_records(slabs: list[Slab], path) -> None:
    """One JSON record per line: L, u, moves, on-path kernel table, strip seed."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in slabs:
            rec = {
                "L": s.L,
                "u": s.u,
                "moves": s.moves.tolist(),
                "kernels": [
                    {"site": site.tolist(), "probs": row.tolist()}
                    for site, row in zip(s.sites, s.kernels)
                ],
                "strip_seed": s.strip_seed,
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_slab_records(path, law: SiteLaw | None = None) -> list[Slab]:
    """Inverse of save_slab_records.

    When `law` is given, atom identities are recovered by exact probability
    match (JSON round-trips floats exactly).
    """
    out: list[Slab] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            sites = np.asarray([k["site"] for k in rec["kernels"]], dtype=np.int64)
            kernels = np.asarray([k["probs"] for k in rec["kernels"]], dtype=np.float64)
            atom_idx = None
            if law is not None:
                rows = law.atom_probs
                atom_idx = np.asarray(
                    [int(np.flatnonzero((rows == row).all(axis=1))[0]) for row in kernels],
                    dtype=np.int64,
                )
            out.append(Slab(
                L=int(rec["L"]),
                u=int(rec["u"]),
                moves=np.asarray(rec["moves"], dtype=np.int8),
                sites=sites,
                kernels=kernels,
                strip_seed=int(rec["strip_seed"]),
                atom_idx=atom_idx,
            ))
    return out
