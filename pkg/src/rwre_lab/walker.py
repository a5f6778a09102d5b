"""Trajectory simulation: quenched, annealed, conditioned, and exact.

The ensemble engine advances many replicas in lockstep with numpy.  Each
replica's step uniforms are keyed by (walk seed, replica id, step index)
and each replica's environment by its own env seed, so a trajectory is a
pure function of its keys: batching, chunking and worker counts cannot
change any result.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .env_model import Environment, SiteLaw, move_vectors
from .errors import AcceptanceTooLow, HorizonTooLarge
from .rng import (
    SALT_ANNEAL,
    SALT_ENV,
    SALT_STEP,
    derive_key,
    hash_uniform,
    vfold,
    vhash_words,
    vuniform64,
)

STAY_POSITIVE = "stay_positive"
STAY_BELOW_START = "stay_below_start"
ENUM_MAX_HORIZON = 12


@dataclass(frozen=True)
class Trajectory:
    """A lattice path: start site plus a sequence of move indices."""

    start: tuple[int, ...]
    moves: np.ndarray  # (steps,) int8 move indices

    @property
    def d(self) -> int:
        return len(self.start)

    @property
    def steps(self) -> int:
        return len(self.moves)

    @cached_property
    def positions(self) -> np.ndarray:
        """(steps + 1, d) visited sites, positions[0] == start."""
        mv = move_vectors(self.d)
        out = np.empty((self.steps + 1, self.d), dtype=np.int64)
        out[0] = self.start
        if self.steps:
            np.cumsum(mv[self.moves], axis=0, out=out[1:])
            out[1:] += out[0]
        return out

    @cached_property
    def levels(self) -> np.ndarray:
        """First coordinate of every visited site."""
        return self.positions[:, 0]


@dataclass(frozen=True)
class ConditionEvent:
    """Conditioning event evaluated over a full finite horizon.

    tag: STAY_POSITIVE keeps every level after step 0 strictly above zero;
    STAY_BELOW_START keeps it strictly below the start level; None accepts
    everything.
    """

    tag: str | None
    horizon: int

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.tag not in (None, STAY_POSITIVE, STAY_BELOW_START):
            raise ValueError(f"unknown condition tag {self.tag!r}")


@dataclass(frozen=True)
class AcceptanceStats:
    attempts: int
    accepted: int

    @property
    def rate(self) -> float:
        return self.accepted / self.attempts if self.attempts else 0.0


def _step_keys(walk_seed: int, rep_ids: np.ndarray) -> np.ndarray:
    """Per-replica key prefix for the step-uniform stream."""
    return vhash_words(walk_seed, SALT_STEP, rep_ids)


def step_uniform(walk_seed: int, rep_id: int, t: int) -> float:
    """Scalar step uniform; the vector engine reproduces this exactly."""
    return hash_uniform(walk_seed, SALT_STEP, rep_id, t)


def ensemble_moves(
    law: SiteLaw,
    env_seeds: np.ndarray,
    walk_seed: int,
    rep_ids: np.ndarray,
    starts: np.ndarray,
    steps: int,
) -> np.ndarray:
    """Advance R replicas for `steps` steps; returns (R, steps) int8 moves.

    env_seeds: (R,) uint64 environment seeds (equal entries = quenched,
    distinct = annealed).  starts: (R, d) int64.
    """
    r = len(rep_ids)
    d = law.d
    pos = np.array(starts, dtype=np.int64, copy=True)
    mv = move_vectors(d)
    cumw = law.cum_weights
    cum_rows = law.atom_cum_probs
    single_atom = len(law.atoms) == 1
    skeys = _step_keys(walk_seed, np.asarray(rep_ids, dtype=np.int64))
    out = np.empty((r, steps), dtype=np.int8)
    env_h0 = vhash_words(np.asarray(env_seeds, dtype=np.uint64), SALT_ENV)
    for t in range(steps):
        if single_atom:
            rows = cum_rows[np.zeros(r, dtype=np.int64)]
        else:
            h = env_h0
            for j in range(d):
                h = vfold(h, pos[:, j])
            u_env = vuniform64(h)
            atom = np.minimum(np.searchsorted(cumw, u_env, side="right"), len(law.atoms) - 1)
            rows = cum_rows[atom]
        u = vuniform64(vfold(skeys, t))
        move = (rows <= u[:, None]).sum(axis=1, dtype=np.int64)
        np.minimum(move, 2 * d - 1, out=move)
        out[:, t] = move
        pos += mv[move]
    return out


def simulate_quenched(env: Environment, start, steps: int, rng_key: int) -> Trajectory:
    """One walk on a fixed environment, drawn step by step from env_at."""
    if steps < 0:
        raise ValueError("steps must be >= 0")
    start = tuple(int(c) for c in start)
    moves = ensemble_moves(
        env.law,
        np.asarray([env.seed], dtype=np.uint64),
        derive_key(rng_key, SALT_STEP),
        np.asarray([0], dtype=np.int64),
        np.asarray([start], dtype=np.int64),
        steps,
    )[0]
    return Trajectory(start=start, moves=moves)


def annealed_env_seed(rng_key: int, rep_id: int) -> int:
    return derive_key(rng_key, SALT_ANNEAL, rep_id)


def simulate_annealed(law: SiteLaw, start, steps: int, rng_key: int) -> Trajectory:
    """One walk in a freshly seeded environment (one annealed replica)."""
    env = Environment(law=law, seed=annealed_env_seed(rng_key, 0))
    return simulate_quenched(env, start, steps, rng_key)


def annealed_ensemble(
    law: SiteLaw, start, steps: int, rng_key: int, reps: int, rep_offset: int = 0
) -> np.ndarray:
    """(reps, steps) moves of independent annealed replicas.

    Replica i uses global id rep_offset + i for both its environment seed
    and its step stream, so results are invariant under chunking.
    """
    ids = np.arange(rep_offset, rep_offset + reps, dtype=np.int64)
    env_seeds = vhash_words(rng_key, SALT_ANNEAL, ids.view(np.uint64))
    starts = np.broadcast_to(np.asarray(start, dtype=np.int64), (reps, law.d))
    return ensemble_moves(law, env_seeds, derive_key(rng_key, SALT_STEP), ids, starts, steps)


def quenched_ensemble(
    env: Environment, start, steps: int, rng_key: int, reps: int, rep_offset: int = 0
) -> np.ndarray:
    """(reps, steps) moves of independent walks on one fixed environment."""
    ids = np.arange(rep_offset, rep_offset + reps, dtype=np.int64)
    env_seeds = np.full(reps, np.uint64(env.seed & ((1 << 64) - 1)), dtype=np.uint64)
    starts = np.broadcast_to(np.asarray(start, dtype=np.int64), (reps, env.law.d))
    return ensemble_moves(env.law, env_seeds, derive_key(rng_key, SALT_STEP), ids, starts, steps)


def ensemble_positions(start, moves: np.ndarray, d: int) -> np.ndarray:
    """(R, steps + 1, d) positions for a block of move sequences."""
    mv = move_vectors(d)
    r, steps = moves.shape
    out = np.empty((r, steps + 1, d), dtype=np.int64)
    out[:, 0, :] = np.asarray(start, dtype=np.int64)
    if steps:
        np.cumsum(mv[moves], axis=1, out=out[:, 1:, :])
        out[:, 1:, :] += out[:, :1, :]
    return out


# -- exact small-horizon oracle ----------------------------------------------

@dataclass(frozen=True)
class ExactDistribution:
    """Exact endpoint and visit probabilities from summing path weights."""

    horizon: int
    endpoint_probs: dict[tuple[int, ...], float]
    visit_probs: dict[tuple[int, ...], float]

    def total_endpoint_mass(self) -> float:
        return float(sum(self.endpoint_probs.values()))


def _kernel_cache(env: Environment):
    from .env_model import env_at

    cache: dict[tuple[int, ...], tuple[float, ...]] = {}

    def probs_at(z: tuple[int, ...]) -> tuple[float, ...]:
        k = cache.get(z)
        if k is None:
            k = env_at(env, z).probs
            cache[z] = k
        return k

    return probs_at


def enumerate_exact(
    env: Environment, start, horizon: int, visit_targets=None
) -> ExactDistribution:
    """Exact endpoint distribution and per-site visit probabilities.

    Sums quenched path weights by dynamic programming over occupation
    measures; visit probabilities use one absorbing pass per target site.
    Feasible only for small horizons: raises HorizonTooLarge beyond 12.
    """
    if horizon > ENUM_MAX_HORIZON:
        raise HorizonTooLarge(f"horizon {horizon} exceeds {ENUM_MAX_HORIZON}")
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    d = env.law.d
    mv = [tuple(int(x) for x in v) for v in move_vectors(d)]
    start = tuple(int(c) for c in start)
    probs_at = _kernel_cache(env)

    def push(front: dict) -> dict:
        nxt: dict[tuple[int, ...], float] = {}
        for z, p in front.items():
            kp = probs_at(z)
            for e, q in zip(mv, kp):
                if q == 0.0:
                    continue
                z2 = tuple(a + b for a, b in zip(z, e))
                nxt[z2] = nxt.get(z2, 0.0) + p * q
        return nxt

    front = {start: 1.0}
    for _ in range(horizon):
        front = push(front)
    endpoint = dict(front)

    if visit_targets is None:
        visit_targets = [start]
    visit: dict[tuple[int, ...], float] = {}
    for target in visit_targets:
        target = tuple(int(c) for c in target)
        if target == start:
            visit[target] = 1.0
            continue
        alive = {start: 1.0}
        absorbed = 0.0
        for _ in range(horizon):
            nxt = push(alive)
            hit = nxt.pop(target, 0.0)
            absorbed += hit
            alive = nxt
        visit[target] = absorbed
    return ExactDistribution(horizon=horizon, endpoint_probs=endpoint, visit_probs=visit)


# -- conditioned sampling by rejection ----------------------------------------

def _event_mask(event: ConditionEvent, levels: np.ndarray, start_level: int) -> np.ndarray:
    """(R,) bool acceptance per replica; levels is (R, steps + 1)."""
    if event.tag is None:
        return np.ones(levels.shape[0], dtype=bool)
    if event.tag == STAY_POSITIVE:
        return (levels[:, 1:] > 0).all(axis=1)
    return (levels[:, 1:] < start_level).all(axis=1)


def _candidate_wave(law_or_env, start, horizon, rng_key, offset, wave):
    if isinstance(law_or_env, Environment):
        moves = quenched_ensemble(law_or_env, start, horizon, rng_key, wave, offset)
        law = law_or_env.law
    else:
        moves = annealed_ensemble(law_or_env, start, horizon, rng_key, wave, offset)
        law = law_or_env
    mvlev = move_vectors(law.d)[:, 0]
    levels = np.concatenate(
        [
            np.zeros((wave, 1), dtype=np.int64),
            np.cumsum(mvlev[moves], axis=1),
        ],
        axis=1,
    ) + int(start[0])
    return moves, levels


def sample_conditioned(
    law_or_env,
    start,
    event: ConditionEvent,
    rng_key: int,
    rate_floor: float = 1e-4,
    max_attempts: int | None = None,
    wave: int = 64,
) -> tuple[Trajectory, AcceptanceStats]:
    """Rejection-sample one trajectory satisfying the event over its horizon.

    Returns the first accepted candidate (in candidate order, so the result
    is independent of wave size) together with acceptance statistics over
    every candidate simulated.  The retry budget defaults to 10/rate_floor
    attempts; exhausting it raises AcceptanceTooLow, which signals an
    ill-chosen law/event pair rather than a transient failure.
    """
    start = tuple(int(c) for c in start)
    if max_attempts is None:
        max_attempts = int(np.ceil(10.0 / rate_floor))
    attempts = 0
    accepted = 0
    first: Trajectory | None = None
    while attempts < max_attempts:
        w = min(wave, max_attempts - attempts)
        moves, levels = _candidate_wave(law_or_env, start, event.horizon, rng_key, attempts, w)
        ok = _event_mask(event, levels, start[0])
        accepted += int(ok.sum())
        attempts += w
        if first is None and ok.any():
            first = Trajectory(start=start, moves=moves[int(np.argmax(ok))].copy())
            break
    if first is None:
        rate = accepted / attempts if attempts else 0.0
        raise AcceptanceTooLow(
            f"no acceptance in {attempts} attempts (rate floor {rate_floor}, observed {rate})")
    return first, AcceptanceStats(attempts=attempts, accepted=accepted)


def sample_conditioned_many(
    law_or_env,
    start,
    event: ConditionEvent,
    count: int,
    rng_key: int,
    max_attempts: int = 2_000_000,
    wave: int = 256,
) -> tuple[list[tuple[Trajectory, Environment]], AcceptanceStats]:
    """Collect `count` accepted (trajectory, environment) pairs, in candidate
    order; under a law, each candidate owns the environment it was run in."""
    start = tuple(int(c) for c in start)
    fixed_env = law_or_env if isinstance(law_or_env, Environment) else None
    law = law_or_env.law if fixed_env is not None else law_or_env
    out: list[tuple[Trajectory, Environment]] = []
    attempts = 0
    accepted = 0
    while len(out) < count:
        if attempts >= max_attempts:
            raise AcceptanceTooLow(
                f"{len(out)}/{count} accepted after {attempts} attempts")
        w = min(wave, max_attempts - attempts)
        moves, levels = _candidate_wave(law_or_env, start, event.horizon, rng_key, attempts, w)
        ok = _event_mask(event, levels, start[0])
        for i in np.flatnonzero(ok):
            if len(out) < count:
                env = fixed_env or Environment(
                    law=law, seed=annealed_env_seed(rng_key, attempts + int(i)))
                out.append((Trajectory(start=start, moves=moves[int(i)].copy()), env))
        accepted += int(ok.sum())
        attempts += w
    return out, AcceptanceStats(attempts=attempts, accepted=accepted)
