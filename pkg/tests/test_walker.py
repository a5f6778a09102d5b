import numpy as np
import pytest

from rwre_lab import laws
from rwre_lab.env_model import Environment, make_law, move_vectors
from rwre_lab.errors import AcceptanceTooLow, HorizonTooLarge
from rwre_lab.walker import (
    STAY_BELOW_START,
    STAY_POSITIVE,
    ConditionEvent,
    annealed_ensemble,
    ensemble_positions,
    enumerate_exact,
    sample_conditioned,
    sample_conditioned_many,
    simulate_annealed,
    simulate_quenched,
)


def test_deterministic_walk_marches_right():
    env = Environment(law=laws.deterministic_right(2), seed=1)
    traj = simulate_quenched(env, (0, 0), 5, rng_key=3)
    expect = np.asarray([[t, 0] for t in range(6)])
    assert (traj.positions == expect).all()


def test_quenched_determinism_and_unit_steps():
    env = Environment(law=laws.d2_random(), seed=11)
    a = simulate_quenched(env, (2, -1), 500, rng_key=7)
    b = simulate_quenched(env, (2, -1), 500, rng_key=7)
    assert (a.moves == b.moves).all()
    steps = np.abs(np.diff(a.positions, axis=0)).sum(axis=1)
    assert (steps == 1).all()


def test_d1_drift_mean_velocity():
    # drift 2p - 1 = 0.2; the contract band 0.012 is far above the CLT noise
    law = laws.d1_drift(0.6)
    moves = annealed_ensemble(law, (0,), 10_000, rng_key=5, reps=10_000)
    levels = move_vectors(1)[:, 0][moves].sum(axis=1) / 10_000
    assert abs(levels.mean() - 0.2) < 0.012


def test_annealed_point_mass_equals_quenched():
    law = laws.deterministic_right(1)
    env = Environment(law=law, seed=909)
    a = simulate_annealed(law, (0,), 50, rng_key=13)
    b = simulate_quenched(env, (0,), 50, rng_key=13)
    assert (a.moves == b.moves).all()


def test_annealed_two_atom_first_step_probability():
    # mixture of p(+) in {0.7, 0.9} gives annealed right-step probability 0.8
    law = make_law(1, 0.1, [(0.5, (0.7, 0.3)), (0.5, (0.9, 0.1))])
    moves = annealed_ensemble(law, (0,), 1, rng_key=17, reps=10_000)
    frac = (moves[:, 0] == 0).mean()
    assert abs(frac - 0.8) < 0.012


def test_symmetric_law_zero_drift():
    law = make_law(2, 0.25, [(1.0, (0.25, 0.25, 0.25, 0.25))])
    moves = annealed_ensemble(law, (0, 0), 1000, rng_key=19, reps=2000)
    lev = move_vectors(2)[:, 0][moves].sum(axis=1)
    band = 3 * lev.std(ddof=1) / np.sqrt(len(lev))
    assert abs(lev.mean()) < band + 1e-9


def test_enumerate_exact_binomial():
    env = Environment(law=laws.d1_drift(0.6), seed=2)
    ex = enumerate_exact(env, (0,), 2)
    assert abs(ex.endpoint_probs[(2,)] - 0.36) < 1e-12
    assert abs(ex.endpoint_probs[(0,)] - 0.48) < 1e-12
    assert abs(ex.endpoint_probs[(-2,)] - 0.16) < 1e-12
    assert abs(ex.total_endpoint_mass() - 1.0) < 1e-10


def test_enumerate_normalization_random_env():
    env = Environment(law=laws.d2_random(), seed=3)
    ex = enumerate_exact(env, (1, 1), 7)
    assert abs(ex.total_endpoint_mass() - 1.0) < 1e-10


def test_enumerate_horizon_cap():
    env = Environment(law=laws.d1_drift(), seed=4)
    with pytest.raises(HorizonTooLarge):
        enumerate_exact(env, (0,), 13)


def _brute_force(env, start, horizon, targets):
    """Independent oracle: literally sum the weight of every path."""
    from rwre_lab.env_model import env_at

    d = env.law.d
    mv = [tuple(int(x) for x in v) for v in move_vectors(d)]
    ends = {}
    visits = {t: 0.0 for t in targets}

    def rec(z, w, left, seen):
        if left == 0:
            ends[z] = ends.get(z, 0.0) + w
            for t in targets:
                if t in seen:
                    visits[t] += w
            return
        probs = env_at(env, z).probs
        for e, q in zip(mv, probs):
            if q == 0.0:
                continue
            z2 = tuple(a + b for a, b in zip(z, e))
            rec(z2, w * q, left - 1, seen | {z2})

    start = tuple(start)
    rec(start, 1.0, horizon, {start})
    return ends, visits


@pytest.mark.parametrize("law,start,h", [
    (laws.d1_drift(0.6), (0,), 5),
    (laws.d2_random(), (0, 0), 4),
])
def test_enumeration_against_path_sum(law, start, h):
    env = Environment(law=law, seed=21)
    targets = [tuple(int(x) for x in v) for v in move_vectors(law.d)] + [tuple(start)]
    ex = enumerate_exact(env, start, h, visit_targets=targets)
    ends, visits = _brute_force(env, start, h, targets)
    assert set(ends) == set(ex.endpoint_probs)
    for z, p in ends.items():
        assert abs(p - ex.endpoint_probs[z]) < 1e-12
    for t in targets:
        assert abs(visits[t] - ex.visit_probs[t]) < 1e-12


def test_mc_matches_enumeration_3sigma():
    env = Environment(law=laws.d2_random(), seed=31)
    h, reps = 6, 20_000
    ex = enumerate_exact(env, (0, 0), h)
    from rwre_lab.walker import quenched_ensemble
    mv = quenched_ensemble(env, (0, 0), h, rng_key=33, reps=reps)
    pos = ensemble_positions((0, 0), mv, 2)
    ends = pos[:, -1, :]
    bad = 0
    checked = 0
    for z, p in ex.endpoint_probs.items():
        if p * reps < 25:
            continue
        checked += 1
        c = ((ends == np.asarray(z)).all(axis=1)).sum()
        if abs(c - reps * p) > 3 * np.sqrt(reps * p * (1 - p)):
            bad += 1
    assert checked > 10
    assert bad <= max(1, int(0.01 * checked))


# -- conditioned sampling -------------------------------------------------------


def test_stay_below_start_acceptance_rate():
    # strict stay-below for p(+)=0.4: first step down, then never return,
    # which the gambler's-ruin computation puts at q - p = 0.2
    law = laws.d1_drift(0.4)
    event = ConditionEvent(tag=STAY_BELOW_START, horizon=1000)
    attempts = 0
    accepted = 0
    key = 0
    while attempts < 10_000:
        _, stats = sample_conditioned(law, (0,), event, rng_key=key, wave=64)
        attempts += stats.attempts
        accepted += stats.accepted
        key += 1
    rate = accepted / attempts
    assert abs(rate - 0.2) < 0.015


def test_stay_below_matches_exact_finite_horizon():
    # exact finite-horizon probability by dynamic programming on the level,
    # keeping only the mass that has stayed strictly below the start
    p = 0.4
    h = 12
    probs = {0: 1.0}
    for _ in range(h):
        nxt = {}
        for lev, w in probs.items():
            for mv, q in ((1, p), (-1, 1 - p)):
                l2 = lev + mv
                if l2 >= 0:
                    continue
                nxt[l2] = nxt.get(l2, 0.0) + w * q
        probs = nxt
    exact = sum(probs.values())

    law = laws.d1_drift(p)
    event = ConditionEvent(tag=STAY_BELOW_START, horizon=h)
    attempts = accepted = 0
    key = 1000
    while attempts < 20_000:
        _, stats = sample_conditioned(law, (0,), event, rng_key=key, wave=128)
        attempts += stats.attempts
        accepted += stats.accepted
        key += 1
    rate = accepted / attempts
    band = 3 * np.sqrt(exact * (1 - exact) / attempts)
    assert abs(rate - exact) < band + 0.002


def test_deterministic_stay_positive_always_accepts():
    law = laws.deterministic_right(1)
    traj, stats = sample_conditioned(law, (0,), ConditionEvent(STAY_POSITIVE, 100), 3)
    assert stats.rate == 1.0
    assert (traj.levels[1:] > 0).all()


def test_impossible_event_raises():
    law = laws.deterministic_right(1)
    event = ConditionEvent(tag=STAY_BELOW_START, horizon=50)
    with pytest.raises(AcceptanceTooLow):
        sample_conditioned(law, (0,), event, rng_key=5, max_attempts=200)


def test_acceptance_rate_consistent_across_seed_ranges():
    law = laws.d1_drift(0.4)
    event = ConditionEvent(tag=STAY_BELOW_START, horizon=500)

    def measure(key):
        runs, stats = sample_conditioned_many(law, (0,), event, 200, key)
        return stats

    a = measure(111)
    b = measure(222)
    ra, rb = a.rate, b.rate
    se = np.sqrt(ra * (1 - ra) / a.attempts + rb * (1 - rb) / b.attempts)
    assert abs(ra - rb) < 3 * se + 1e-9


def test_conditioned_many_returns_envs_and_satisfies_event():
    law = laws.d2_random()
    mirror_free = ConditionEvent(tag=STAY_POSITIVE, horizon=300)
    runs, stats = sample_conditioned_many(law, (0, 0), mirror_free, 20, rng_key=9)
    assert len(runs) == 20
    for traj, env in runs:
        assert (traj.levels[1:] > 0).all()
        assert env.law is law
    assert stats.accepted >= 20


def test_condition_event_validation():
    with pytest.raises(ValueError):
        ConditionEvent(tag="bogus", horizon=10)
    with pytest.raises(ValueError):
        ConditionEvent(tag=None, horizon=0)


def test_walk_draws_from_site_kernels():
    # group observed moves by the atom assigned to the current site; the
    # empirical step law per group must match that atom's kernel
    from rwre_lab.env_model import atom_index_at

    law = make_law(2, 0.10, [(0.5, (0.60, 0.10, 0.15, 0.15)),
                             (0.5, (0.10, 0.14, 0.38, 0.38))])
    env = Environment(law=law, seed=5151)
    traj = simulate_quenched(env, (0, 0), 20_000, rng_key=66)
    pos = traj.positions
    up = {0: [0, 0], 1: [0, 0]}  # atom -> [up-steps, total]
    for t in range(traj.steps):
        atom = atom_index_at(env.seed, law, pos[t])
        up[atom][1] += 1
        if traj.moves[t] == 0:
            up[atom][0] += 1
    for atom, p_up in ((0, 0.60), (1, 0.10)):
        k, n = up[atom]
        assert n > 2000
        assert abs(k / n - p_up) < 3 * np.sqrt(p_up * (1 - p_up) / n) + 0.01
