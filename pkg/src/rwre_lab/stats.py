"""Estimators and hypothesis tests for the quantitative claims.

Second moments of visit indicators (the ell^2 quantities) are always
estimated by counting common sites of two independent sample sets, never by
squaring a single empirical distribution; the split-sample estimators are
unbiased by construction.  Decay exponents come from unweighted least
squares on log-log grids, with tolerances calibrated per experiment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .backward_path import (
    OMEGA,
    OMEGA_TILDE,
    GluedWorld,
    couple,
    glue_slabs,
    glued_atoms_bulk,
    glued_env_at,
    walk_on_glued,
)
from .env_model import SiteLaw, mirror_law, move_vectors
from .errors import InsufficientMass, TailNotEstimable
from .regeneration import (
    Slab,
    check_ballistic,
    extract_slabs,
    find_regenerations,
    sample_slab_stream,
    slab_array,
)
from .rng import derive_key, np_generator
from .walker import (
    ConditionEvent,
    STAY_BELOW_START,
    STAY_POSITIVE,
    annealed_ensemble,
    sample_conditioned_many,
)


# -- chi-square and related helpers --------------------------------------------

def chi2_gof(counts: np.ndarray, probs: np.ndarray) -> float:
    """Goodness-of-fit p-value of observed counts against cell probabilities."""
    counts = np.asarray(counts, dtype=np.float64)
    expected = probs * counts.sum()
    keep = expected > 0
    stat = ((counts[keep] - expected[keep]) ** 2 / expected[keep]).sum()
    dof = int(keep.sum()) - 1
    if dof < 1:
        return 1.0
    return float(sps.chi2.sf(stat, dof))


def chi2_independence(table: np.ndarray) -> float:
    """Independence p-value for a contingency table (no continuity correction)."""
    table = np.asarray(table, dtype=np.float64)
    table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
    if table.shape[0] < 2 or table.shape[1] < 2:
        return 1.0
    stat, p, _, _ = sps.chi2_contingency(table, correction=False)
    return float(p)


def ks_uniform(pvalues) -> float:
    """KS p-value for the hypothesis that the inputs are U(0, 1)."""
    return float(sps.kstest(np.asarray(pvalues, dtype=np.float64), "uniform").pvalue)


def _joint_bins(l_a, u_a, l_b, u_b, max_u_bins: int = 6):
    """Bin (L, u) pairs of two samples on a shared grid; returns two count rows."""
    l_cap = 3
    pooled_u = np.concatenate([u_a, u_b])
    qs = np.unique(np.quantile(pooled_u, np.linspace(0, 1, max_u_bins + 1)[1:-1]))
    def cell(lv, uv):
        li = np.minimum(lv, l_cap)
        ui = np.searchsorted(qs, uv, side="right")
        return li * (len(qs) + 1) + ui
    ca = np.bincount(cell(l_a, u_a), minlength=(l_cap + 1) * (len(qs) + 1))
    cb = np.bincount(cell(l_b, u_b), minlength=(l_cap + 1) * (len(qs) + 1))
    keep = (ca + cb) >= 10
    if keep.sum() < 2:
        return None
    other = ~keep
    rows = np.stack([
        np.concatenate([ca[keep], [ca[other].sum()]]),
        np.concatenate([cb[keep], [cb[other].sum()]]),
    ])
    return rows[:, rows.sum(axis=0) > 0]


def two_sample_slab_test(slabs_a: list[Slab], slabs_b: list[Slab]) -> float:
    """Homogeneity p-value for the (L, u) law of two slab samples."""
    table = _joint_bins(
        slab_array(slabs_a, "L"), slab_array(slabs_a, "u"),
        slab_array(slabs_b, "L"), slab_array(slabs_b, "u"),
    )
    if table is None:
        return 1.0
    return chi2_independence(table)


# -- decay fits -----------------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    """Least-squares slope of log y against log x."""

    xs: tuple[int, ...]
    ys: tuple[float, ...]
    slope: float
    stderr: float
    intercept: float


def fit_decay(xs, ys) -> DecayFit:
    xs = [int(x) for x in xs]
    ys = [float(y) for y in ys]
    if len(xs) < 3:
        raise ValueError("need at least 3 points for a decay fit")
    if any(y <= 0 for y in ys):
        raise ValueError("all estimates must be positive for a log-log fit")
    lx = np.log(np.asarray(xs, dtype=np.float64))
    ly = np.log(np.asarray(ys, dtype=np.float64))
    n = len(xs)
    sxx = ((lx - lx.mean()) ** 2).sum()
    slope = float(((lx - lx.mean()) * (ly - ly.mean())).sum() / sxx)
    intercept = float(ly.mean() - slope * lx.mean())
    resid = ly - (intercept + slope * lx)
    dof = max(n - 2, 1)
    stderr = float(np.sqrt((resid ** 2).sum() / dof / sxx))
    return DecayFit(xs=tuple(xs), ys=tuple(ys), slope=slope, stderr=stderr,
                    intercept=intercept)


# -- velocity ---------------------------------------------------------------------

@dataclass(frozen=True)
class VelocityReport:
    direct: tuple[float, ...]
    direct_radius: tuple[float, ...]   # 3 sigma per coordinate
    renewal: tuple[float, ...]
    renewal_radius: tuple[float, ...]
    agree: bool
    reps: int
    steps: int
    slab_count: int


def velocity_estimate(
    law: SiteLaw,
    steps: int,
    reps: int,
    rng_key: int,
    slab_count: int = 5000,
    horizon: int = 10_000,
    margin: int = 1_000,
) -> VelocityReport:
    """Direct X_n/n estimator plus the renewal (slab) estimator.

    The two estimate the same limiting velocity; `agree` checks them against
    each other at combined 3 sigma, coordinate by coordinate.
    """
    if steps < 1 or reps < 1:
        raise ValueError("steps and reps must be >= 1")
    moves = annealed_ensemble(law, np.zeros(law.d, dtype=np.int64), steps,
                              derive_key(rng_key, 0xD1), reps)
    ends = move_vectors(law.d)[moves].sum(axis=1).astype(np.float64) / steps
    direct = ends.mean(axis=0)
    direct_rad = 3.0 * ends.std(axis=0, ddof=1) / np.sqrt(reps)

    slabs = sample_slab_stream(law, slab_count, horizon, margin,
                               derive_key(rng_key, 0xD2))
    disp = slab_array(slabs, "disp").astype(np.float64)
    dur = slab_array(slabs, "u").astype(np.float64)
    renewal = disp.sum(axis=0) / dur.sum()
    resid = disp - renewal[None, :] * dur[:, None]
    renewal_rad = 3.0 * resid.std(axis=0, ddof=1) / (dur.mean() * np.sqrt(len(slabs)))

    agree = bool(np.all(np.abs(direct - renewal)
                        <= np.sqrt(direct_rad ** 2 + renewal_rad ** 2)))
    return VelocityReport(
        direct=tuple(float(v) for v in direct),
        direct_radius=tuple(float(v) for v in direct_rad),
        renewal=tuple(float(v) for v in renewal),
        renewal_radius=tuple(float(v) for v in renewal_rad),
        agree=agree,
        reps=reps,
        steps=steps,
        slab_count=len(slabs),
    )


# -- displacement decay (heat-kernel profile) --------------------------------------

def _block_sums(pool: np.ndarray, n: int, reps: int,
                rng: np.random.Generator) -> np.ndarray:
    """(reps, d) sums of n distinct pool rows each.

    Blocks inside one permutation are disjoint, so every sum is an exact
    n-fold sum of independent draws of the pool's generating law; reuse
    across permutations only correlates distinct replicas mildly.
    """
    p, d = pool.shape
    if p < n:
        raise ValueError(f"pool of {p} too small for block size {n}")
    out = np.empty((reps, d), dtype=np.int64)
    filled = 0
    while filled < reps:
        perm = rng.permutation(p)
        k = min(p // n, reps - filled)
        idx = perm[: k * n].reshape(k, n)
        out[filled:filled + k] = pool[idx].sum(axis=1)
        filled += k
    return out


def _pair_collisions(pool: np.ndarray, n: int, reps: int,
                     rng: np.random.Generator) -> np.ndarray:
    """(reps,) bool: whether two independent n-fold sums coincide."""
    p, d = pool.shape
    if p < 2 * n:
        raise ValueError(f"pool of {p} too small for paired blocks of {2 * n}")
    out = np.empty(reps, dtype=bool)
    filled = 0
    while filled < reps:
        perm = rng.permutation(p)
        k = min(p // (2 * n), reps - filled)
        idx = perm[: k * 2 * n].reshape(k, 2, n)
        sums = pool[idx].sum(axis=2)
        out[filled:filled + k] = (sums[:, 0, :] == sums[:, 1, :]).all(axis=1)
        filled += k
    return out


@dataclass(frozen=True)
class DisplacementProfile:
    sup_fit: DecayFit
    l2_fit: DecayFit                     # sqrt of the collision probability
    sup_table: tuple[tuple[int, float, float], ...]   # (n, estimate, stderr)
    l2_table: tuple[tuple[int, float, float], ...]
    reps: int
    pool_size: int


def displacement_profile(slab_stream: list[Slab], n_values, reps: int,
                         rng_key: int, min_cell: int = 30,
                         l2_n_values=None, l2_reps: int | None = None,
                         ) -> DisplacementProfile:
    """Decay of the n-slab displacement sum: sup of the mass function and the
    square root of its ell^2 norm, each fitted on a log-log grid.

    The sup is the largest cell frequency over `reps` draws; the ell^2 norm
    is the probability that two independent draws collide, by default on the
    same grid (the collision estimator may need its own grid and replica
    budget, since its counts thin out faster).  Raises InsufficientMass when
    the decisive cell count drops below `min_cell`.
    """
    n_values = sorted(int(n) for n in n_values)
    if len(n_values) < 3:
        raise ValueError("need at least 3 grid points")
    l2_n_values = sorted(int(n) for n in (l2_n_values or n_values))
    if len(l2_n_values) < 3:
        raise ValueError("need at least 3 collision grid points")
    l2_reps = reps if l2_reps is None else int(l2_reps)
    pool = slab_array(slab_stream, "disp")
    rng = np_generator(rng_key, 0xDE)
    sup_rows = []
    l2_rows = []
    for n in n_values:
        sums = _block_sums(pool, n, reps, rng)
        _, counts = np.unique(sums, axis=0, return_counts=True)
        top = int(counts.max())
        if top < min_cell:
            raise InsufficientMass(
                f"max cell count {top} < {min_cell} at n={n}; raise reps or shrink n")
        sup = top / reps
        sup_rows.append((n, sup, float(np.sqrt(sup * (1 - sup) / reps))))
    for n in l2_n_values:
        hits = _pair_collisions(pool, n, l2_reps, rng)
        c = int(hits.sum())
        if c < min_cell:
            raise InsufficientMass(
                f"collision count {c} < {min_cell} at n={n}; raise reps or shrink n")
        p_hat = c / l2_reps
        se = float(np.sqrt(p_hat * (1 - p_hat) / l2_reps))
        l2_rows.append((n, float(np.sqrt(p_hat)), se / (2 * np.sqrt(p_hat))))

    sup_fit = fit_decay([r[0] for r in sup_rows], [r[1] for r in sup_rows])
    l2_fit = fit_decay([r[0] for r in l2_rows], [r[1] for r in l2_rows])
    return DisplacementProfile(
        sup_fit=sup_fit,
        l2_fit=l2_fit,
        sup_table=tuple(sup_rows),
        l2_table=tuple(l2_rows),
        reps=reps,
        pool_size=len(pool),
    )


# -- backward-path overlap ----------------------------------------------------------

def backward_prefix(slabs: list[Slab]) -> tuple[list[set], set]:
    """Visit sets of the first len(slabs) backward regenerations.

    Slab j (0-based) is placed as the (j+1)-th backward slab: its visit set
    is anchored at the running anchor sum and expressed relative to its own
    top endpoint, which the previous slab's bottom anchor pins to the path.
    Returns (per-slab visit sets, their union).
    """
    d = slabs[0].d
    anchor = np.zeros(d, dtype=np.int64)
    per: list[set] = []
    union: set = set()
    for s in slabs:
        disp = s.displacement
        v = {tuple(int(c) for c in row) for row in (s.sites - disp + anchor)}
        v.add(tuple(int(c) for c in anchor))
        per.append(v)
        union |= v
        anchor = anchor - disp
    return per, union


@dataclass
class OverlapReport:
    """Split-sample overlap estimates for the backward half-path."""

    n_max: int
    reps: int
    per_n: tuple[float, ...]
    per_n_stderr: tuple[float, ...]
    partial_sums: tuple[float, ...]
    M_hat: float
    M_stderr: float
    q0_mean: float                       # mean visited-set size of one slab
    M_tilde_hat: float | None = None
    M_tilde_stderr: float | None = None
    tilde_reps: int | None = None
    lambda_cs: float | None = None
    R: float | None = None
    certificate: float | None = None
    common_norms: np.ndarray = field(default=None, repr=False)
    tilde_norms: np.ndarray = field(default=None, repr=False)

    def tail_mass(self, radius: float, side: str = "backward") -> float:
        """Empirical sum beyond `radius` of squared visit probabilities."""
        if side == "backward":
            norms, reps = self.common_norms, self.reps
        else:
            norms, reps = self.tilde_norms, self.tilde_reps
        if norms is None or reps in (None, 0):
            raise TailNotEstimable(f"no samples recorded for side {side!r}")
        return float((norms > radius).sum() / reps)


def hitting_profile(
    stream_a: list[Slab],
    stream_b: list[Slab],
    n_max: int,
    reps: int,
    rng_key: int = 0,
    tilde_pairs: list[tuple[set, set]] | None = None,
) -> OverlapReport:
    """Overlap structure of two independent backward half-paths.

    Consumes reps * n_max slabs from each stream in order (the estimator is
    deterministic given the streams; rng_key is accepted for interface
    symmetry).  per_n[k] is the mean number of sites shared by the (k+1)-th
    backward slabs of the two copies, an unbiased estimate of the summed
    squared single-slab hitting probabilities; M_hat counts sites shared by
    the whole truncated half-paths.  Optional `tilde_pairs` (independent
    site-set pairs of the descending conditioned walk) fill the tilde-side
    totals the same way.
    """
    if n_max < 1 or reps < 1:
        raise ValueError("n_max and reps must be >= 1")
    need = reps * n_max
    if len(stream_a) < need or len(stream_b) < need:
        raise ValueError(f"streams must hold at least reps*n_max = {need} slabs")
    per_counts = np.zeros((reps, n_max), dtype=np.int64)
    m_counts = np.zeros(reps, dtype=np.int64)
    norms: list[float] = []
    for r in range(reps):
        sa = stream_a[r * n_max:(r + 1) * n_max]
        sb = stream_b[r * n_max:(r + 1) * n_max]
        per_a, union_a = backward_prefix(sa)
        per_b, union_b = backward_prefix(sb)
        for k in range(n_max):
            per_counts[r, k] = len(per_a[k] & per_b[k])
        common = union_a & union_b
        m_counts[r] = len(common)
        norms.extend(float(np.sqrt(sum(c * c for c in z))) for z in common)
    per_n = per_counts.mean(axis=0)
    per_se = per_counts.std(axis=0, ddof=1) / np.sqrt(reps)
    q0 = float(np.mean([len(s.sites) + 1 for s in stream_a[:need]]))

    report = OverlapReport(
        n_max=n_max,
        reps=reps,
        per_n=tuple(float(v) for v in per_n),
        per_n_stderr=tuple(float(v) for v in per_se),
        partial_sums=tuple(float(v) for v in np.cumsum(per_n)),
        M_hat=float(m_counts.mean()),
        M_stderr=float(m_counts.std(ddof=1) / np.sqrt(reps)),
        q0_mean=q0,
        common_norms=np.asarray(norms, dtype=np.float64),
    )
    if tilde_pairs is not None:
        t_counts = np.zeros(len(tilde_pairs), dtype=np.int64)
        t_norms: list[float] = []
        for i, (ta, tb) in enumerate(tilde_pairs):
            common = ta & tb
            t_counts[i] = len(common)
            t_norms.extend(float(np.sqrt(sum(c * c for c in z))) for z in common)
        report.M_tilde_hat = float(t_counts.mean())
        report.M_tilde_stderr = float(t_counts.std(ddof=1) / np.sqrt(len(tilde_pairs)))
        report.tilde_reps = len(tilde_pairs)
        report.tilde_norms = np.asarray(t_norms, dtype=np.float64)
    return report


def descending_path_sets(
    law: SiteLaw,
    count: int,
    horizon: int,
    rng_key: int,
    wave: int = 256,
) -> list[set]:
    """Site sets {X_1..X_horizon} of walks conditioned to stay strictly below
    their start level, simulated under the mirrored law from the origin."""
    mlaw = mirror_law(law)
    event = ConditionEvent(tag=STAY_BELOW_START, horizon=horizon)
    runs, _ = sample_conditioned_many(mlaw, np.zeros(law.d, dtype=np.int64),
                                      event, count, rng_key, wave=wave)
    out = []
    for run, _env in runs:
        pos = run.positions[1:]
        out.append({tuple(int(c) for c in row) for row in pos})
    return out


# -- intersection of independent structures ------------------------------------------

@dataclass(frozen=True)
class IntersectionReport:
    z0: tuple[int, ...]
    reps: int
    direct_mean: float
    direct_stderr: float
    product_mean: float
    product_stderr: float
    estimates_agree: bool
    empty_prob: float
    empty_stderr: float
    horizon_means: tuple[tuple[int, float], ...]   # E |intersection| per horizon


def intersection_expectation(
    law: SiteLaw,
    z0,
    reps: int,
    rng_key: int,
    n_max: int = 16,
    horizon: int = 10_000,
    margin: int = 1_000,
    tilde_horizons: tuple[int, ...] = (400,),
    batches: int = 10,
) -> IntersectionReport:
    """Expected overlap of a backward half-path with an independent descending
    walk started at z0, plus the frequency of an empty intersection.

    Two estimates of the expectation must agree: direct pair counting, and
    the summed product of the two empirical marginals; their agreement is
    itself a check that the two structures are sampled independently.
    Counts are over distinct shared sites; per-horizon means use the walk's
    first visit to each site, so they are nondecreasing pair by pair.
    """
    z0 = tuple(int(c) for c in z0)
    if z0[0] >= 0:
        raise ValueError("offset z0 must have negative level")
    tilde_horizons = tuple(sorted(int(h) for h in tilde_horizons))
    h_max = tilde_horizons[-1]
    if batches < 2 or reps < batches:
        raise ValueError("need reps >= batches >= 2")

    stream = sample_slab_stream(law, reps * n_max, horizon, margin,
                                derive_key(rng_key, 0x1A))
    mlaw = mirror_law(law)
    event = ConditionEvent(tag=STAY_BELOW_START, horizon=h_max)
    runs, _ = sample_conditioned_many(mlaw, np.zeros(law.d, dtype=np.int64),
                                      event, reps, derive_key(rng_key, 0x1B))

    set_counts = np.zeros(reps, dtype=np.int64)
    per_h = np.zeros((reps, len(tilde_horizons)), dtype=np.int64)
    batch_p: list[dict[tuple[int, ...], int]] = [{} for _ in range(batches)]
    batch_q: list[dict[tuple[int, ...], int]] = [{} for _ in range(batches)]
    batch_of = (np.arange(reps, dtype=np.int64) * batches) // reps
    for r in range(reps):
        _, union_a = backward_prefix(stream[r * n_max:(r + 1) * n_max])
        traj, _env = runs[r]
        pos = traj.positions
        seen: set[tuple[int, ...]] = set()
        hits = 0
        hi = 0
        for i in range(1, h_max + 1):
            w = tuple(int(c) for c in pos[i])
            if w not in seen:
                seen.add(w)
                z = tuple(a + b for a, b in zip(w, z0))
                if z in union_a:
                    hits += 1
            while hi < len(tilde_horizons) and i == tilde_horizons[hi]:
                per_h[r, hi] = hits
                hi += 1
        set_counts[r] = hits
        b = int(batch_of[r])
        pb, qb = batch_p[b], batch_q[b]
        for z in union_a:
            pb[z] = pb.get(z, 0) + 1
        for w in seen:
            qb[w] = qb.get(w, 0) + 1

    direct = float(set_counts.mean())
    # Poisson floor keeps the 3-sigma agreement test meaningful in the
    # near-empty regime, where the sample deviation collapses to zero
    direct_se = float(max(set_counts.std(ddof=1) / np.sqrt(reps),
                          np.sqrt(set_counts.sum() + 1.0) / reps))
    empty_p = float((set_counts == 0).mean())
    empty_se = float(np.sqrt(empty_p * (1 - empty_p) / reps))

    # product of marginals, globally and per batch for the spread
    p_all: dict[tuple[int, ...], int] = {}
    q_all: dict[tuple[int, ...], int] = {}
    bvals = []
    for b in range(batches):
        bsize = int((batch_of == b).sum())
        val = 0.0
        for z, c in batch_p[b].items():
            p_all[z] = p_all.get(z, 0) + c
            w = tuple(a - o for a, o in zip(z, z0))
            qc = batch_q[b].get(w)
            if qc:
                val += (c / bsize) * (qc / bsize)
        for w, c in batch_q[b].items():
            q_all[w] = q_all.get(w, 0) + c
        bvals.append(val)
    prod = 0.0
    for z, c in p_all.items():
        w = tuple(a - o for a, o in zip(z, z0))
        qc = q_all.get(w)
        if qc:
            prod += (c / reps) * (qc / reps)
    product_se = float(max(np.std(bvals, ddof=1) / np.sqrt(batches),
                           np.sqrt(prod / reps + 1.0 / reps ** 2)))

    agree = abs(direct - prod) <= 3.0 * float(np.hypot(direct_se, product_se))
    h_means = tuple((h, float(per_h[:, i].mean()))
                    for i, h in enumerate(tilde_horizons))
    return IntersectionReport(
        z0=z0,
        reps=reps,
        direct_mean=direct,
        direct_stderr=direct_se,
        product_mean=float(prod),
        product_stderr=product_se,
        estimates_agree=bool(agree),
        empty_prob=empty_p,
        empty_stderr=empty_se,
        horizon_means=h_means,
    )


# -- non-intersection certificate -----------------------------------------------------

def tail_flatten_ratio(per_n) -> float:
    """Last-quarter increment of the overlap partial sums, relative to the
    mass beyond the first term (which is inflated by the certain overlap at
    the shared origin anchor)."""
    per = np.asarray(per_n, dtype=np.float64)
    if len(per) < 2:
        return 0.0
    tail = per[1:].sum()
    if tail <= 0:
        return 0.0
    cut = int(np.ceil(0.75 * len(per)))
    return float(per[cut:].sum() / tail)


@dataclass(frozen=True)
class CertificateResult:
    lambda_cs: float
    R: float
    certificate: float          # lambda*(M + M_tilde) + lambda^2
    bound_sqrt: float           # sqrt(lambda*M) + sqrt(lambda*M_tilde) + lambda
    passed: bool
    diverged: bool
    flatten_ratio: float
    z0_norm: float


def certify_nonintersection(report: OverlapReport, z0, R: float,
                            min_pairs: int = 100) -> CertificateResult:
    """Evaluate the small-overlap certificate from an overlap report.

    lambda_cs is the larger of the two empirical tail masses beyond radius R.
    The certificate value lambda*(M + M_tilde) + lambda^2 passes when it is
    below 1, the offset satisfies |z0| > 2R, and the per-slab overlap partial
    sums have flattened (tail_flatten_ratio below 5%); a non-flattening sum
    marks a diverging overlap and refuses certification.  bound_sqrt reports
    the more conservative combination sqrt(lambda*M) + sqrt(lambda*M_tilde)
    + lambda of the same estimates.
    """
    if report.M_tilde_hat is None:
        raise TailNotEstimable("report lacks the descending-walk overlap totals")
    if report.reps < min_pairs or (report.tilde_reps or 0) < min_pairs:
        raise TailNotEstimable(
            f"need at least {min_pairs} pairs per side to bound tails")
    lam = max(report.tail_mass(R, "backward"), report.tail_mass(R, "tilde"))
    # Divergence diagnosis on the tail sums: the first term carries the
    # structurally certain origin overlap and would dilute the signal, so
    # the last-quarter increment is taken relative to the n >= 2 mass.
    flatten_ratio = tail_flatten_ratio(report.per_n)
    diverged = flatten_ratio >= 0.05
    cert = lam * (report.M_hat + report.M_tilde_hat) + lam * lam
    bound_sqrt = (float(np.sqrt(lam * report.M_hat))
                  + float(np.sqrt(lam * report.M_tilde_hat)) + lam)
    z0_norm = float(np.linalg.norm(np.asarray(z0, dtype=np.float64)))
    passed = (not diverged) and cert < 1.0 and z0_norm > 2.0 * R
    report.lambda_cs = float(lam)
    report.R = float(R)
    report.certificate = float(cert)
    return CertificateResult(
        lambda_cs=float(lam),
        R=float(R),
        certificate=float(cert),
        bound_sqrt=float(bound_sqrt),
        passed=bool(passed),
        diverged=bool(diverged),
        flatten_ratio=flatten_ratio,
        z0_norm=z0_norm,
    )


# -- coupling checks -------------------------------------------------------------------

@dataclass(frozen=True)
class CouplingReport:
    marginal_p: float | None
    independence_p: float | None
    offpath_agree: bool
    n_sites: int
    n_path_sites: int
    degenerate: bool

    def passed(self, significance: float = 0.01) -> bool:
        if not self.offpath_agree:
            return False
        if self.degenerate:
            return True
        return self.marginal_p > significance and self.independence_p > significance


def _distinct_box_sites(rng: np.random.Generator, lo: np.ndarray, hi: np.ndarray,
                        want: int) -> np.ndarray:
    """Up to `want` distinct lattice sites of the box [lo, hi], uniformly.

    Distinctness matters: duplicated sites would repeat whole kernels and
    overdisperse the chi-square counts.
    """
    dims = (hi - lo + 1).astype(np.int64)
    vol = int(dims.prod())
    if vol > max(4_000_000, 50 * want):
        # huge boxes: collisions are rare, so dedup a with-replacement draw
        # instead of materializing the population
        flat = np.unique(rng.integers(0, vol, size=want))
        flat = flat[rng.permutation(len(flat))]
    else:
        flat = rng.choice(vol, size=min(want, vol), replace=False)
    out = np.empty((len(flat), len(lo)), dtype=np.int64)
    rem = flat
    for j in range(len(lo) - 1, -1, -1):
        out[:, j] = lo[j] + rem % dims[j]
        rem = rem // dims[j]
    return out


def coupling_tests(world: GluedWorld, sites: int, rng_key: int) -> CouplingReport:
    """Bundled checks of the re-randomized environment.

    Marginal: atom frequencies of omega at distinct uniform sites in the
    covered box match the mixture weights (chi-square).  Independence: atom
    distribution on path sites matches that off the path (chi-square
    homogeneity on a stratified sample, valid because under the construction
    the kernels are i.i.d. regardless of the path).  Off-path: omega and
    omega_tilde are bit-identical at every queried off-path site.
    """
    if not world.coupled:
        raise ValueError("coupling tests need a coupled world")
    law = world.law
    rng = np_generator(rng_key, 0xC0)
    path = world.path_sites()
    lo = path.min(axis=0)
    hi = path.max(axis=0)
    lo[0] = max(lo[0], world.level_lo)
    hi[0] = min(hi[0], world.level_hi - 1)
    box = _distinct_box_sites(rng, lo, hi, sites)

    degenerate = len(law.atoms) < 2
    marginal_p = None
    independence_p = None
    if not degenerate:
        atoms_box = glued_atoms_bulk(world, box, OMEGA)
        counts = np.bincount(atoms_box, minlength=len(law.atoms))
        marginal_p = chi2_gof(counts, np.asarray([w for w, _ in law.atoms]))

        k = min(len(path), sites // 2)
        pick = rng.choice(len(path), size=k, replace=False)
        on_atoms = glued_atoms_bulk(world, path[pick], OMEGA)
        path_set = world.path_rows
        off_mask = np.asarray([tuple(int(c) for c in z) not in path_set for z in box])
        off_atoms = glued_atoms_bulk(world, box[off_mask][:k], OMEGA)
        table = np.stack([
            np.bincount(on_atoms, minlength=len(law.atoms)),
            np.bincount(off_atoms, minlength=len(law.atoms)),
        ])
        independence_p = chi2_independence(table)

    agree = True
    checked = 0
    for z in box[:2000]:
        zt = tuple(int(c) for c in z)
        if zt in world.path_rows:
            continue
        checked += 1
        ka = glued_env_at(world, zt, OMEGA)
        kb = glued_env_at(world, zt, OMEGA_TILDE)
        if ka.probs != kb.probs:
            agree = False
            break
    return CouplingReport(
        marginal_p=marginal_p,
        independence_p=independence_p,
        offpath_agree=agree and checked > 0,
        n_sites=sites,
        n_path_sites=len(path),
        degenerate=degenerate,
    )


def adjacent_site_association(world: GluedWorld, pairs: int, rng_key: int) -> float:
    """Chi-square p-value for association of omega atoms at adjacent sites.

    Base sites are distinct and taken on the even sublattice of a transverse
    coordinate, so the (base, base + e) pairs are pairwise disjoint and the
    contingency table has genuinely independent rows under the null.
    """
    law = world.law
    if len(law.atoms) < 2 or world.d < 2:
        return 1.0
    rng = np_generator(rng_key, 0xC1)
    path = world.path_sites()
    lo, hi = path.min(axis=0), path.max(axis=0)
    lo[0] = max(lo[0], world.level_lo)
    hi[0] = min(hi[0], world.level_hi - 1)
    half_lo, half_hi = lo.copy(), hi.copy()
    half_lo[1] = (lo[1] + 1) // 2
    half_hi[1] = (hi[1] - 1) // 2
    if (half_hi < half_lo).any():
        return 1.0
    base = _distinct_box_sites(rng, half_lo, half_hi, pairs)
    base[:, 1] *= 2
    nbr = base.copy()
    nbr[:, 1] += 1
    a = glued_atoms_bulk(world, base, OMEGA)
    b = glued_atoms_bulk(world, nbr, OMEGA)
    k = len(law.atoms)
    table = np.zeros((k, k))
    for i, j in zip(a, b):
        table[int(i), int(j)] += 1
    return chi2_independence(table)


# -- slab stream i.i.d. diagnostics ------------------------------------------------------

@dataclass(frozen=True)
class IIDReport:
    n: int
    band: float                          # 3/sqrt(N)
    autocorr: dict[str, tuple[float, float]]   # (lag1, lag2) per column
    halves_p: float
    degenerate: bool

    def passed(self, significance: float = 0.01) -> bool:
        if self.degenerate:
            return True
        ok = all(abs(v) < self.band for pair in self.autocorr.values() for v in pair)
        return ok and self.halves_p > significance


def _autocorr(x: np.ndarray, lag: int) -> float:
    a, b = x[:-lag], x[lag:]
    sa, sb = a.std(), b.std()
    if sa == 0 or sb == 0:
        return 0.0
    return float(((a - a.mean()) * (b - b.mean())).mean() / (sa * sb))


def slab_iid_test(slabs: list[Slab]) -> IIDReport:
    """Autocorrelation and two-sample diagnostics of a slab stream.

    Lag-1/2 autocorrelations of L and u against the 3/sqrt(N) band, and a
    first-half vs second-half chi-square on the binned joint (L, u) law.
    Zero-variance streams are reported as degenerate passes.
    """
    n = len(slabs)
    if n < 1000:
        raise ValueError("need at least 1000 slabs")
    larr = slab_array(slabs, "L").astype(np.float64)
    uarr = slab_array(slabs, "u").astype(np.float64)
    if larr.std() == 0 and uarr.std() == 0:
        return IIDReport(n=n, band=3.0 / np.sqrt(n), autocorr={}, halves_p=1.0,
                         degenerate=True)
    ac = {
        "L": (_autocorr(larr, 1), _autocorr(larr, 2)),
        "u": (_autocorr(uarr, 1), _autocorr(uarr, 2)),
    }
    halves_p = two_sample_slab_test(slabs[: n // 2], slabs[n // 2:])
    return IIDReport(n=n, band=3.0 / np.sqrt(n), autocorr=ac, halves_p=halves_p,
                     degenerate=False)


# -- transience of the glued environment ---------------------------------------------------

@dataclass(frozen=True)
class TransienceReport:
    n_values: tuple[int, ...]
    estimates: tuple[float, ...]         # fraction of walks satisfying B_N
    stderrs: tuple[float, ...]
    walks: int
    top_exits: int
    capped: int                          # walks that exhausted the step budget


def transience_profile(
    law: SiteLaw,
    n_values,
    walks: int,
    rng_key: int,
    slabs_above: int | None = None,
    walks_per_world: int = 10,
    step_cap: int = 50_000,
    horizon: int = 10_000,
    margin: int = 1_000,
) -> TransienceReport:
    """Estimate the never-backtrack-beyond-Y_{-N} probabilities on fresh worlds.

    Each world glues N_max slabs below the origin and `slabs_above` above;
    each walk runs on omega_tilde until it exits the covered levels.  A walk
    satisfies the level-N event when it exits at the top without ever going
    below the level of Y_{-N}; the estimates are nondecreasing in N pair by
    pair.  Walks hitting the step cap count as failures for every N.
    """
    n_values = sorted(int(v) for v in n_values)
    n_max = n_values[-1]
    if slabs_above is None:
        slabs_above = max(2 * n_max, 24)
    check_ballistic(law, derive_key(rng_key, 0xB1))
    worlds = int(np.ceil(walks / walks_per_world))
    ok = np.zeros((walks, len(n_values)), dtype=bool)
    top_exits = 0
    capped = 0
    w_i = 0
    for w in range(worlds):
        stream = sample_slab_stream(law, n_max + slabs_above, horizon, margin,
                                    derive_key(rng_key, 0xB2, w),
                                    skip_ballistic_check=True)
        world = glue_slabs(stream, origin_index=n_max, law=law)
        thresholds = [int(world.anchor(-nv)[0]) for nv in n_values]
        for i in range(walks_per_world):
            if w_i >= walks:
                break
            res = walk_on_glued(world, np.zeros(law.d, dtype=np.int64), step_cap,
                                derive_key(rng_key, 0xB3, w, i), OMEGA_TILDE)
            if res.exit_side == "top":
                top_exits += 1
                for k, thr in enumerate(thresholds):
                    ok[w_i, k] = res.min_level >= thr
            elif res.exit_side is None:
                capped += 1
            w_i += 1
    est = ok.mean(axis=0)
    se = np.sqrt(est * (1 - est) / walks)
    return TransienceReport(
        n_values=tuple(n_values),
        estimates=tuple(float(v) for v in est),
        stderrs=tuple(float(v) for v in se),
        walks=walks,
        top_exits=top_exits,
        capped=capped,
    )


# -- backward slabs vs conditioned forward slabs ----------------------------------------------

@dataclass(frozen=True)
class SlabMatchReport:
    i_values: tuple[int, ...]
    pvalues: tuple[float, ...]
    reps: int

    def passed(self, significance: float = 0.01) -> bool:
        return all(p > significance for p in self.pvalues)


def backward_forward_consistency(
    law: SiteLaw,
    i_values,
    reps: int,
    rng_key: int,
    horizon: int = 800,
    margin: int = 300,
    stream_horizon: int = 10_000,
    stream_margin: int = 1_000,
) -> SlabMatchReport:
    """Compare glued backward slabs with forward slabs of conditioned runs.

    The slab at backward index -i of a glued world should look like the i-th
    forward regeneration slab of a run conditioned to keep every level
    strictly positive.  Summary laws (L, u) are compared by two-sample
    chi-square, one p-value per requested i.
    """
    i_values = sorted(int(i) for i in i_values)
    i_max = i_values[-1]
    stream = sample_slab_stream(law, reps * (i_max + 1), stream_horizon,
                                stream_margin, derive_key(rng_key, 0x33))
    backward: dict[int, list[Slab]] = {i: [] for i in i_values}
    for r in range(reps):
        chunk = stream[r * (i_max + 1):(r + 1) * (i_max + 1)]
        world = glue_slabs(chunk, origin_index=i_max, law=law)
        for i in i_values:
            backward[i].append(world.slabs[world.origin_index - i])

    event = ConditionEvent(tag=STAY_POSITIVE, horizon=horizon)
    runs, _ = sample_conditioned_many(law, np.zeros(law.d, dtype=np.int64),
                                      event, reps, derive_key(rng_key, 0x34))
    forward: dict[int, list[Slab]] = {i: [] for i in i_values}
    for traj, env in runs:
        record = find_regenerations(traj, margin)
        if len(record) < i_max + 1:
            continue
        slabs = extract_slabs(traj, env, record)
        for i in i_values:
            forward[i].append(slabs[i - 1])

    pvals = tuple(two_sample_slab_test(backward[i], forward[i]) for i in i_values)
    return SlabMatchReport(i_values=tuple(i_values), pvalues=pvals, reps=reps)
