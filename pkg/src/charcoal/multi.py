"""Multiple-changepoint estimation by narrowest-over-threshold recursion.

Random intervals are drawn once; within any segment still under
consideration, the test is run on every interval contained in the segment
(after trimming a burn-in margin from both ends), the narrowest rejecting
interval nominates a candidate via the single-changepoint estimator, and the
recursion continues to the left and right of that candidate.

The raw candidate set is post-processed in two stages: a pruning pass that
re-tests each candidate on the widest interval in which it is the only
candidate, and a two-step location refinement (midpoint slices first, then
burn-in-trimmed full inter-neighbor slices).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .sketch import RegressionData, estimate_sigma_mad, q_matrix, sketch
from .single import detect_single, estimate_lasso_bic, soft_norm_trace


@dataclass(frozen=True)
class Interval:
    """Half-open time interval (s, e]."""

    s: int
    e: int

    def __post_init__(self):
        if not 0 <= self.s < self.e:
            raise ValueError(f"need 0 <= s < e (got s={self.s}, e={self.e})")

    @property
    def length(self) -> int:
        return self.e - self.s


@dataclass(frozen=True)
class MultiConfig:
    """Tuning for the interval recursion and its post-processing.

    ``T`` is the rejection threshold of the existence test, normally obtained
    from :func:`charcoal.single.calibrate_threshold` at level ``0.01 / M``.
    """

    T: float
    M: int = 200
    varpi: float = 0.0
    alpha: float = 0.05
    lam_coef: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be at least 1")
        if not 0.0 <= self.varpi < 0.5 or not 0.0 <= self.alpha < 0.5:
            raise ValueError("burn-in fractions must lie in [0, 1/2)")
        if self.T <= 0:
            raise ValueError("T must be positive")


@dataclass(frozen=True)
class CandidateRecord:
    """Provenance of one raw candidate: source interval and test statistic."""

    candidate: int
    interval: Interval
    stat: float


@dataclass
class MultiResult:
    """Changepoint estimates after each pipeline stage."""

    raw: list[int]
    pruned: list[int]
    refined: list[int]
    per_candidate: list[CandidateRecord] = field(default_factory=list)


def generate_intervals(n: int, M: int, seed: int = 0) -> list[Interval]:
    """Draw M intervals uniformly from all integer pairs 0 <= a < b <= n."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if M < 1:
        raise ValueError("M must be at least 1")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    out = []
    while len(out) < M:
        a = int(rng.integers(0, n + 1))
        b = int(rng.integers(0, n + 1))
        if a == b:
            continue
        out.append(Interval(min(a, b), max(a, b)))
    return out


def default_test_fn(cfg: MultiConfig):
    """Existence test on a data slice: (decision, max statistic).

    Uses the soft-thresholded column-norm scan with a per-slice noise scale,
    lam = lam_coef * sigma_tilde * ln p, and burn-in ``cfg.alpha``.  Returns
    ``(0, 0.0)`` when the slice is too short to sketch.
    """

    def test(chunk: RegressionData) -> tuple[int, float]:
        if chunk.n - chunk.p < 2:
            return 0, 0.0
        sk = sketch(chunk)
        Q = q_matrix(chunk, sk, cfg.alpha, "diag")
        lam = cfg.lam_coef * estimate_sigma_mad(Q) * math.log(chunk.p)
        h_max = float(soft_norm_trace(Q, lam).max())
        return int(h_max >= cfg.T), h_max

    return test


def default_est_fn(cfg: MultiConfig):
    """Projection estimator on a data slice, returning the local location."""

    def est(chunk: RegressionData) -> int:
        if chunk.n - chunk.p < 2:
            return 0
        res = detect_single(chunk, "proj", alpha=cfg.alpha, lam_coef=cfg.lam_coef, seed=cfg.seed)
        return res.estimate.location

    return est


def lasso_est_fn(alpha: float, seed: int = 0):
    """Lasso-BIC estimator on a data slice (used for the refinement steps)."""

    def est(chunk: RegressionData) -> int:
        if chunk.n - chunk.p < 2:
            return 0
        return estimate_lasso_bic(chunk, alpha=alpha, lam_strategy="scaled", seed=seed).location

    return est


def not_segment(
    data: RegressionData,
    cfg: MultiConfig,
    est_fn,
    test_fn,
    intervals: list[Interval] | None = None,
    on_test=None,
    on_accept=None,
) -> list[CandidateRecord]:
    """Narrowest-over-threshold recursion; returns candidates sorted by time.

    ``test_fn`` is applied to each interval after trimming ``floor(n*varpi)``
    from both ends (intervals too short to sketch after trimming count as
    non-rejecting); ``est_fn`` is applied to the untrimmed selected interval.
    Ties for the narrowest rejecting interval go to the smallest interval
    index.  ``on_test(segment_s, segment_e, interval_index)`` and
    ``on_accept(candidate)`` are instrumentation hooks fired when an interval
    is considered inside the current segment and when a candidate is added.
    """
    n = data.n
    if intervals is None:
        intervals = generate_intervals(n, cfg.M, cfg.seed)
    trim = int(math.floor(n * cfg.varpi))
    cache: dict[int, tuple[int, float]] = {}

    def psi(mi: int) -> tuple[int, float]:
        if mi not in cache:
            iv = intervals[mi]
            s_t, e_t = iv.s + trim, iv.e - trim
            if e_t - s_t - data.p < 2:
                cache[mi] = (0, 0.0)
            else:
                cache[mi] = test_fn(data.slice(s_t, e_t))
        return cache[mi]

    records: list[CandidateRecord] = []

    def recurse(s: int, e: int) -> None:
        rejecting = []
        for mi, iv in enumerate(intervals):
            if s <= iv.s and iv.e <= e:
                if on_test is not None:
                    on_test(s, e, mi)
                if psi(mi)[0]:
                    rejecting.append(mi)
        if not rejecting:
            return
        m0 = min(rejecting, key=lambda mi: (intervals[mi].length, mi))
        iv = intervals[m0]
        b = iv.s + est_fn(data.slice(iv.s, iv.e))
        if not iv.s < b < iv.e:
            # infeasible estimate on a rejecting interval; terminate branch
            return
        if on_accept is not None:
            on_accept(b)
        records.append(CandidateRecord(candidate=b, interval=iv, stat=psi(m0)[1]))
        recurse(s, b)
        recurse(b, e)

    recurse(0, n)
    records.sort(key=lambda r: r.candidate)
    return records


def prune_candidates(data: RegressionData, candidates, test_fn) -> list[int]:
    """Drop candidates whose widest own interval fails the test.

    Candidates are scanned left to right; each is tested on the interval
    bounded by its current surviving neighbors (with 0 and n as sentinels)
    and removed immediately when the test does not reject.
    """
    surviving = sorted(candidates)
    i = 0
    while i < len(surviving):
        left = surviving[i - 1] if i > 0 else 0
        right = surviving[i + 1] if i + 1 < len(surviving) else data.n
        decision, _ = test_fn(data.slice(left, right))
        if decision:
            i += 1
        else:
            del surviving[i]
    return surviving


def refine_midpoint(data: RegressionData, candidates, est_fn) -> list[int]:
    """Re-estimate each candidate on the slice between neighbor midpoints.

    Midpoints are floored to integers.  Slices too short to sketch leave the
    candidate unchanged, so the output always has the input's cardinality.
    """
    cands = sorted(candidates)
    ext = [0] + cands + [data.n]
    out = []
    for i in range(1, len(ext) - 1):
        lo = (ext[i - 1] + ext[i]) // 2
        hi = (ext[i] + ext[i + 1]) // 2
        if hi - lo - data.p < 2:
            out.append(ext[i])
            continue
        loc = est_fn(data.slice(lo, hi))
        out.append(lo + loc if loc > 0 else ext[i])
    return sorted(out)


def refine_full(data: RegressionData, refined_once, alpha: float, est_fn) -> list[int]:
    """Second refinement on burn-in-trimmed inter-neighbor slices.

    Each candidate is re-estimated on ``(left_neighbor + floor(alpha*n),
    right_neighbor - floor(alpha*n)]``; infeasible slices leave it unchanged.
    """
    cands = sorted(refined_once)
    n = data.n
    trim = int(math.floor(alpha * n))
    ext = [0] + cands + [n]
    out = []
    for i in range(1, len(ext) - 1):
        lo = ext[i - 1] + trim
        hi = ext[i + 1] - trim
        if hi - lo - data.p < 2:
            out.append(ext[i])
            continue
        loc = est_fn(data.slice(lo, hi))
        out.append(lo + loc if loc > 0 else ext[i])
    return sorted(out)


def detect_multiple(
    data: RegressionData,
    cfg: MultiConfig,
    est_fn=None,
    test_fn=None,
) -> MultiResult:
    """Full pipeline: intervals -> recursion -> pruning -> two refinements.

    By default the recursion uses the projection estimator and the
    soft-norm test; both refinement passes use the Lasso-BIC estimator (the
    midpoint pass with inner burn-in ``cfg.alpha``, the second pass with no
    inner burn-in since its slices are already trimmed by ``alpha * n``).
    Deterministic given ``(data, cfg)``.
    """
    est_fn = est_fn if est_fn is not None else default_est_fn(cfg)
    test_fn = test_fn if test_fn is not None else default_test_fn(cfg)
    records = not_segment(data, cfg, est_fn, test_fn)
    raw = [r.candidate for r in records]
    pruned = prune_candidates(data, raw, test_fn)
    mid = refine_midpoint(data, pruned, lasso_est_fn(cfg.alpha, cfg.seed))
    refined = refine_full(data, mid, cfg.alpha, lasso_est_fn(0.0, cfg.seed))
    return MultiResult(raw=raw, pruned=pruned, refined=refined, per_candidate=records)
