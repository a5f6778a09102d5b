import numpy as np
import pytest

from rwre_lab import laws
from rwre_lab.env_model import mirror_law
from rwre_lab.errors import InsufficientMass, TailNotEstimable
from rwre_lab.regeneration import Slab, sample_slab_stream, slab_array
from rwre_lab.rng import derive_key
from rwre_lab.stats import (
    backward_forward_consistency,
    backward_prefix,
    certify_nonintersection,
    chi2_gof,
    chi2_independence,
    descending_path_sets,
    displacement_profile,
    fit_decay,
    hitting_profile,
    intersection_expectation,
    ks_uniform,
    slab_iid_test,
    tail_flatten_ratio,
    transience_profile,
    two_sample_slab_test,
    velocity_estimate,
)
from rwre_lab.walker import (
    STAY_BELOW_START,
    ConditionEvent,
    sample_conditioned_many,
)


def _synthetic_slab(moves, d):
    moves = np.asarray(moves, dtype=np.int8)
    return Slab(
        L=1, u=len(moves), moves=moves,
        sites=np.zeros((1, d), dtype=np.int64),
        kernels=np.ones((1, 2 * d)) / (2 * d),
        strip_seed=0,
        atom_idx=np.zeros(1, dtype=np.int64),
    )


# -- decay fits ------------------------------------------------------------------


def test_fit_decay_recovers_exact_power_law():
    xs = [2, 4, 8, 16]
    ys = [3.0 * x ** -1.5 for x in xs]
    fit = fit_decay(xs, ys)
    assert abs(fit.slope + 1.5) < 1e-12
    assert fit.stderr < 1e-10
    assert abs(np.exp(fit.intercept) - 3.0) < 1e-9


def test_fit_decay_validation():
    with pytest.raises(ValueError):
        fit_decay([1, 2], [1.0, 0.5])
    with pytest.raises(ValueError):
        fit_decay([1, 2, 4], [1.0, 0.0, 0.5])


# -- velocity --------------------------------------------------------------------


def test_velocity_deterministic_law():
    rep = velocity_estimate(laws.deterministic_right(1), steps=100, reps=10,
                            rng_key=1, slab_count=50, horizon=300, margin=20)
    assert rep.direct == (1.0,)
    assert rep.renewal == (1.0,)
    assert rep.agree


def test_velocity_d5_hits_analytic_drift():
    rep = velocity_estimate(laws.d5_homogeneous(), steps=2000, reps=400,
                            rng_key=2, slab_count=2000, horizon=3000, margin=300)
    assert abs(rep.direct[0] - 0.2) <= rep.direct_radius[0] + 0.005
    assert rep.agree


def test_velocity_two_estimators_agree_random_law():
    rep = velocity_estimate(laws.d2_random(), steps=2000, reps=400,
                            rng_key=3, slab_count=3000, horizon=2500, margin=250)
    assert rep.agree


# -- displacement profile -----------------------------------------------------------


def test_displacement_profile_deterministic_point_mass():
    slabs = [_synthetic_slab([0], 1) for _ in range(600)]
    prof = displacement_profile(slabs, [2, 4, 8], reps=3000, rng_key=4)
    assert prof.sup_table[0][1] == 1.0
    assert prof.sup_table[-1][1] == 1.0
    assert abs(prof.sup_fit.slope) < 1e-12
    # collisions are certain as well: ell^2 norm 1, slope 0
    assert prof.l2_table[0][1] == 1.0
    assert abs(prof.l2_fit.slope) < 1e-12


def test_displacement_profile_hypergeometric_oracle():
    # synthetic pool: half the entries move (1,1), half (1,-1); the sum of a
    # random n-subset is pinned by its hypergeometric type count, giving an
    # exact oracle for both resampling estimators
    from scipy.stats import hypergeom

    P, n, reps = 240, 8, 150_000
    a = _synthetic_slab([0, 2], 2)   # displacement (1, 1)
    b = _synthetic_slab([0, 3], 2)   # displacement (1, -1)
    pool = [a] * (P // 2) + [b] * (P // 2)
    prof = displacement_profile(pool, [4, n, 16], reps=reps, rng_key=5)
    got = dict((row[0], row[1]) for row in prof.sup_table)

    pmf = hypergeom(P, P // 2, n).pmf(np.arange(n + 1))
    sup_exact = float(pmf.max())
    se = np.sqrt(sup_exact * (1 - sup_exact) / reps)
    assert abs(got[n] - sup_exact) < 4 * se

    # exact collision probability of two disjoint n-subsets of the pool
    coll = 0.0
    for k1 in range(n + 1):
        p1 = hypergeom(P, P // 2, n).pmf(k1)
        p2 = hypergeom(P - n, P // 2 - k1, n).pmf(k1)
        coll += p1 * p2
    got_l2 = dict((row[0], row[1]) for row in prof.l2_table)[n]
    se = np.sqrt(coll * (1 - coll) / reps)
    assert abs(got_l2 ** 2 - coll) < 4 * se


def test_displacement_profile_insufficient_mass():
    law = laws.d3_random()
    pool = sample_slab_stream(law, 20_000, 2500, 250, rng_key=6)
    with pytest.raises(InsufficientMass):
        displacement_profile(pool, [16, 32, 64], reps=20_000, rng_key=7)


def test_d3_l2_slope_near_quarter_power():
    # sqrt of the summed squared mass of the n-slab sum decays like n^(-d/4)
    # on the window where the collision counts stay estimable
    law = laws.d3_random()
    pool = sample_slab_stream(law, 60_000, 3000, 300, rng_key=8)
    prof = displacement_profile(pool, [8, 16, 24], reps=600_000, rng_key=9,
                                l2_reps=1_000_000)
    assert -0.95 <= prof.l2_fit.slope <= -0.55


# -- overlap -----------------------------------------------------------------------


def test_backward_prefix_geometry():
    slabs = [_synthetic_slab([0], 2) for _ in range(3)]
    per, union = backward_prefix(slabs)
    assert per[0] == {(0, 0), (-1, 0)}
    assert per[1] == {(-1, 0), (-2, 0)}
    assert union == {(0, 0), (-1, 0), (-2, 0), (-3, 0)}


def test_hitting_profile_deterministic_degenerate():
    slabs = [_synthetic_slab([0], 1) for _ in range(400)]
    rep = hitting_profile(slabs[:200], slabs[200:], n_max=4, reps=50)
    # identical half-lines: every per_n is exactly 2 with zero variance
    assert all(v == 2.0 for v in rep.per_n)
    assert all(v == 0.0 for v in rep.per_n_stderr)
    assert rep.M_hat == 5.0
    # flat increments signal a diverging overlap sum
    assert tail_flatten_ratio(rep.per_n) >= 0.05


def test_hitting_profile_insufficient_stream():
    slabs = [_synthetic_slab([0], 1) for _ in range(10)]
    with pytest.raises(ValueError):
        hitting_profile(slabs, slabs, n_max=4, reps=5)


def test_hitting_profile_q0_stable_across_halves():
    law = laws.d5_homogeneous()
    n_max, reps = 4, 400
    sa = sample_slab_stream(law, reps * n_max, 3000, 300, rng_key=10)
    sb = sample_slab_stream(law, reps * n_max, 3000, 300, rng_key=11)
    rep = hitting_profile(sa, sb, n_max, reps)
    sizes = np.asarray([len(s.sites) + 1 for s in sa])
    u = slab_array(sa, "u")
    revisits = (u + 1) - sizes
    assert np.allclose(rep.q0_mean, sizes.mean())
    assert (revisits >= 0).all()
    half = len(sizes) // 2
    m1, m2 = sizes[:half].mean(), sizes[half:].mean()
    se = np.sqrt(sizes[:half].var() / half + sizes[half:].var() / half)
    assert abs(m1 - m2) <= 3 * se


def test_per_n_decreasing_for_ballistic_law():
    law = laws.d5_homogeneous()
    n_max, reps = 4, 500
    sa = sample_slab_stream(law, reps * n_max, 3000, 300, rng_key=12)
    sb = sample_slab_stream(law, reps * n_max, 3000, 300, rng_key=13)
    rep = hitting_profile(sa, sb, n_max, reps)
    assert rep.per_n[0] >= 1.0          # shared origin anchor is certain
    assert rep.per_n[0] > rep.per_n[1] > rep.per_n[2]
    assert all(a <= b + 1e-12 for a, b in
               zip(rep.partial_sums[:-1], rep.partial_sums[1:]))


# -- intersections ------------------------------------------------------------------


def test_intersection_disjoint_supports_is_exactly_zero():
    # the descending walk from deep below never reaches the backward path
    law = laws.d5_homogeneous()
    rep = intersection_expectation(law, (-120, 0, 0, 0, 0), reps=60,
                                   rng_key=14, n_max=3, horizon=2500,
                                   margin=250, tilde_horizons=(60,))
    assert rep.direct_mean == 0.0
    assert rep.product_mean == 0.0
    assert rep.empty_prob == 1.0
    assert rep.estimates_agree


def test_intersection_d5_far_offset_mostly_empty():
    law = laws.d5_homogeneous()
    rep = intersection_expectation(law, (-4, 28, 28, 4, 0), reps=400,
                                   rng_key=15, n_max=6, horizon=3000,
                                   margin=300, tilde_horizons=(300,))
    assert rep.empty_prob > 0.2
    assert rep.direct_mean < 1.0
    assert rep.estimates_agree


def test_intersection_rejects_nonnegative_level_offset():
    with pytest.raises(ValueError):
        intersection_expectation(laws.d5_homogeneous(), (4, 0, 0, 0, 0),
                                 reps=50, rng_key=16)


@pytest.mark.slow
def test_d2_deep_window_paths_intersect():
    # low-dimensional contrast: with a window thousands of levels deep, an
    # independent descending walk almost surely hits the backward path
    law = laws.d2_random()
    z0 = (-40, 0)
    n_max, pairs = 1600, 250
    horizons = (4000, 9000, 19000)
    stream = sample_slab_stream(law, pairs * n_max, 2500, 250, rng_key=901)
    runs, _ = sample_conditioned_many(
        mirror_law(law), (0, 0),
        ConditionEvent(STAY_BELOW_START, horizons[-1]), pairs,
        derive_key(902), wave=64)
    per_h = np.zeros((pairs, len(horizons)))
    for r in range(pairs):
        _, union = backward_prefix(stream[r * n_max:(r + 1) * n_max])
        pos = runs[r][0].positions
        seen = set()
        hits = 0
        hi = 0
        for i in range(1, horizons[-1] + 1):
            w = (int(pos[i][0]), int(pos[i][1]))
            if w not in seen:
                seen.add(w)
                if (w[0] + z0[0], w[1] + z0[1]) in union:
                    hits += 1
            while hi < len(horizons) and i == horizons[hi]:
                per_h[r, hi] = hits
                hi += 1
    empty = float((per_h[:, -1] == 0).mean())
    assert empty < 0.05
    means = per_h.mean(axis=0)
    assert means[0] < means[1] < means[2]


# -- certificate --------------------------------------------------------------------


def _mini_overlap_report(law, reps, n_max, key, tilde_horizon=200):
    sa = sample_slab_stream(law, reps * n_max, 3000, 300, derive_key(key, 1))
    sb = sample_slab_stream(law, reps * n_max, 3000, 300, derive_key(key, 2))
    ta = descending_path_sets(law, reps, tilde_horizon, derive_key(key, 3))
    tb = descending_path_sets(law, reps, tilde_horizon, derive_key(key, 4))
    return hitting_profile(sa, sb, n_max, reps, tilde_pairs=list(zip(ta, tb)))


def test_certificate_zero_tail_passes():
    law = laws.d5_homogeneous()
    rep = _mini_overlap_report(law, 150, 4, key=17)
    big_r = float(rep.common_norms.max() if len(rep.common_norms) else 0) + \
        float(rep.tilde_norms.max() if len(rep.tilde_norms) else 0) + 10
    z0 = tuple([-(2 * int(big_r) + 5)] + [0] * 4)
    cert = certify_nonintersection(rep, z0=z0, R=big_r)
    assert cert.lambda_cs == 0.0
    assert cert.certificate == 0.0
    assert not cert.diverged
    assert cert.passed
    assert rep.certificate == 0.0 and rep.R == big_r


def test_certificate_requires_tilde_side():
    law = laws.d5_homogeneous()
    n_max, reps = 4, 120
    sa = sample_slab_stream(law, reps * n_max, 3000, 300, rng_key=18)
    sb = sample_slab_stream(law, reps * n_max, 3000, 300, rng_key=19)
    rep = hitting_profile(sa, sb, n_max, reps)
    with pytest.raises(TailNotEstimable):
        certify_nonintersection(rep, (-4, 0, 0, 0, 0), R=5.0)


def test_certificate_too_few_pairs():
    law = laws.d5_homogeneous()
    rep = _mini_overlap_report(law, 60, 3, key=20)
    with pytest.raises(TailNotEstimable):
        certify_nonintersection(rep, (-4, 0, 0, 0, 0), R=5.0)


def test_certificate_requires_offset_beyond_2r():
    law = laws.d5_homogeneous()
    rep = _mini_overlap_report(law, 150, 4, key=21)
    cert = certify_nonintersection(rep, z0=(-4, 0, 0, 0, 0), R=12.0)
    assert not cert.passed  # |z0| = 4 < 2R


# -- i.i.d. diagnostics ---------------------------------------------------------------


def test_iid_degenerate_stream_passes():
    slabs = [_synthetic_slab([0], 1) for _ in range(1500)]
    rep = slab_iid_test(slabs)
    assert rep.degenerate and rep.passed()


def test_iid_planted_copy_violation_fails():
    law = laws.d2_random()
    stream = sample_slab_stream(law, 1000, 2500, 250, rng_key=22)
    doubled = [s for s in stream for _ in (0, 1)]
    rep = slab_iid_test(doubled)
    assert not rep.passed()
    assert rep.autocorr["u"][0] > 0.3


def test_iid_requires_thousand_slabs():
    with pytest.raises(ValueError):
        slab_iid_test([_synthetic_slab([0], 1)] * 100)


def test_iid_honest_stream_passes():
    law = laws.d3_random()
    stream = sample_slab_stream(law, 3000, 2500, 250, rng_key=23)
    assert slab_iid_test(stream).passed()


# -- transience -------------------------------------------------------------------------


def test_transience_profile_monotone_and_high():
    law = laws.d5_homogeneous()
    rep = transience_profile(law, [1, 2, 5], walks=120, rng_key=24,
                             horizon=2500, margin=300, step_cap=20_000)
    assert all(a <= b for a, b in zip(rep.estimates[:-1], rep.estimates[1:]))
    assert rep.estimates[-1] >= 0.95
    assert rep.top_exits + rep.capped <= rep.walks


# -- backward vs conditioned forward slabs ------------------------------------------------


@pytest.mark.slow
def test_backward_slabs_match_conditioned_forward():
    rep = backward_forward_consistency(laws.d2_random(), [1, 2], reps=400,
                                       rng_key=25, horizon=700, margin=300,
                                       stream_horizon=2500, stream_margin=250)
    assert rep.passed(0.01)


# -- helpers ----------------------------------------------------------------------------


def test_chi2_gof_detects_bias():
    counts = np.asarray([700, 300])
    assert chi2_gof(counts, np.asarray([0.5, 0.5])) < 1e-6
    assert chi2_gof(np.asarray([500, 500]), np.asarray([0.5, 0.5])) == 1.0


def test_chi2_independence_on_independent_table():
    table = np.asarray([[400, 410], [395, 405]])
    assert chi2_independence(table) > 0.01


def test_ks_uniform():
    u = (np.arange(200) + 0.5) / 200
    assert ks_uniform(u) > 0.5
    assert ks_uniform(u * 0.5) < 1e-6


def test_two_sample_same_law_accepts():
    law = laws.d2_random()
    a = sample_slab_stream(law, 2000, 2500, 250, rng_key=26)
    b = sample_slab_stream(law, 2000, 2500, 250, rng_key=27)
    assert two_sample_slab_test(a, b) > 0.01


def test_two_sample_different_laws_rejects():
    a = sample_slab_stream(laws.d2_random(), 2000, 2500, 250, rng_key=28)
    b = sample_slab_stream(
        mirror_law(mirror_law(laws.d2_random())), 2000, 2500, 250, rng_key=29)
    # identical law after double mirror: sanity that the test is calibrated
    assert two_sample_slab_test(a, b) > 0.01
    c = sample_slab_stream(laws.d5_fast(), 2000, 1500, 150, rng_key=30)
    d = sample_slab_stream(laws.d5_homogeneous(), 2000, 3000, 300, rng_key=31)
    assert two_sample_slab_test(c, d) < 1e-6
