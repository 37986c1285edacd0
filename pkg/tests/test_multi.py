import numpy as np
import pytest

from charcoal import (
    Interval,
    MultiConfig,
    MultiSpec,
    RegressionData,
    SimConfig,
    calibrate_threshold,
    detect_multiple,
    generate_intervals,
    generate_multi,
    generate_single,
    multi,
    not_segment,
    prune_candidates,
    refine_full,
    refine_midpoint,
)


def null_data(rng, n, p):
    X = rng.standard_normal((n, p))
    beta = rng.standard_normal(p)
    return RegressionData(X, X @ beta + rng.standard_normal(n))


class TestGenerateIntervals:
    def test_uniform_on_three_pairs(self):
        counts = {(0, 1): 0, (0, 2): 0, (1, 2): 0}
        for iv in generate_intervals(2, 30_000, seed=1):
            counts[(iv.s, iv.e)] += 1
        expect = 10_000
        sigma = np.sqrt(30_000 * (1 / 3) * (2 / 3))
        for pair, c in counts.items():
            assert abs(c - expect) < 3 * sigma, (pair, c)

    def test_deterministic(self):
        assert generate_intervals(50, 30, seed=9) == generate_intervals(50, 30, seed=9)

    def test_single_interval_bounds(self):
        (iv,) = generate_intervals(100, 1, seed=2)
        assert 0 <= iv.s < iv.e <= 100

    def test_invalid_interval_rejected(self):
        with pytest.raises(ValueError):
            Interval(5, 5)


class TestNotSegment:
    def test_no_rejection_gives_empty(self):
        rng = np.random.default_rng(300)
        data = null_data(rng, 60, 5)
        cfg = MultiConfig(T=10.0, M=20, seed=0)
        records = not_segment(data, cfg, est_fn=lambda d: 1, test_fn=lambda d: (0, 0.0))
        assert records == []

    def test_candidates_strictly_inside_source_interval(self):
        rng = np.random.default_rng(301)
        data, _ = generate_multi(
            MultiSpec(n=300, p=20, changepoints=(100, 200), magnitudes=(4.0, 4.0), k=3, seed=4)
        )
        cfg = MultiConfig(T=8.0, M=60, alpha=0.05, seed=4)
        records = not_segment(data, cfg, multi.default_est_fn(cfg), multi.default_test_fn(cfg))
        assert records
        for rec in records:
            assert rec.interval.s < rec.candidate < rec.interval.e
            assert rec.stat >= cfg.T

    def test_tested_intervals_nested_in_current_segments(self):
        # no segment may be examined (and hence no interval tested) while a
        # previously accepted candidate lies strictly inside it
        data, _ = generate_multi(
            MultiSpec(n=240, p=15, changepoints=(80, 160), magnitudes=(5.0, 5.0), k=2, seed=5)
        )
        cfg = MultiConfig(T=8.0, M=50, alpha=0.05, seed=5)
        intervals = generate_intervals(data.n, cfg.M, cfg.seed)
        log = []

        def on_test(s, e, mi):
            iv = intervals[mi]
            assert s <= iv.s and iv.e <= e
            log.append(("test", s, e))

        def on_accept(b):
            log.append(("accept", b))

        records = not_segment(
            data,
            cfg,
            multi.default_est_fn(cfg),
            multi.default_test_fn(cfg),
            intervals=intervals,
            on_test=on_test,
            on_accept=on_accept,
        )
        assert records, "instrumentation test needs at least one candidate"
        accepted = []
        for event in log:
            if event[0] == "accept":
                accepted.append(event[1])
            else:
                _, s, e = event
                assert not any(s < b < e for b in accepted)

    def test_single_change_monte_carlo(self):
        T = calibrate_threshold(600, 100, alpha=0.05, lam_coef=0.5, B=200, M=100, seed=77)
        seeds = np.random.SeedSequence(303).generate_state(40, dtype=np.uint64)
        good = 0
        for s in seeds:
            data, truth = generate_single(
                SimConfig(n=600, p=100, k=3, rho=4.0, tau=0.3, seed=int(s))
            )
            cfg = MultiConfig(T=T, M=100, varpi=0.0, alpha=0.05, seed=int(s))
            records = not_segment(data, cfg, multi.default_est_fn(cfg), multi.default_test_fn(cfg))
            cands = [r.candidate for r in records]
            good += len(cands) == 1 and abs(cands[0] - truth.z) <= 10
        assert good >= 34  # 85% of 40; spec regime expects ~90%


class TestPrune:
    def test_empty_input(self):
        rng = np.random.default_rng(310)
        data = null_data(rng, 50, 5)
        assert prune_candidates(data, [], lambda d: (1, 1.0)) == []

    def test_spurious_candidate_removed_under_null(self):
        T = calibrate_threshold(200, 20, alpha=0.05, lam_coef=0.5, B=150, M=50, seed=88)
        cfg = MultiConfig(T=T, M=50, alpha=0.05, seed=0)
        test_fn = multi.default_test_fn(cfg)
        removed = 0
        seeds = np.random.SeedSequence(311).generate_state(30, dtype=np.uint64)
        for s in seeds:
            rng = np.random.default_rng(int(s))
            data = null_data(rng, 200, 20)
            removed += prune_candidates(data, [100], test_fn) == []
        assert removed >= 28  # level 0.01/M leaves ~no rejections under the null

    def test_true_candidates_survive_strong_signal(self):
        T = calibrate_threshold(400, 40, alpha=0.05, lam_coef=0.5, B=150, M=50, seed=89)
        cfg = MultiConfig(T=T, M=50, alpha=0.05, seed=0)
        test_fn = multi.default_test_fn(cfg)
        kept = 0
        seeds = np.random.SeedSequence(312).generate_state(20, dtype=np.uint64)
        for s in seeds:
            data, truth = generate_single(
                SimConfig(n=400, p=40, k=3, rho=6.0, tau=0.5, seed=int(s))
            )
            kept += prune_candidates(data, [truth.z], test_fn) == [truth.z]
        assert kept >= 19

    def test_neighbors_update_as_candidates_drop(self):
        calls = []

        def test_fn(chunk):
            calls.append(chunk.n)
            return (0, 0.0) if len(calls) == 1 else (1, 5.0)

        rng = np.random.default_rng(313)
        data = null_data(rng, 100, 4)
        survivors = prune_candidates(data, [30, 60], test_fn)
        # first call sees (0, 60]; after dropping 30, second sees (0, 100]
        assert calls == [60, 100]
        assert survivors == [60]


class TestRefine:
    def test_midpoint_slices(self):
        seen = []

        def est(chunk):
            seen.append(chunk.n)
            return chunk.n // 2

        rng = np.random.default_rng(320)
        data = null_data(rng, 100, 2)
        out = refine_midpoint(data, [40], est)
        # single candidate: slice is (20, 70], length 50
        assert seen == [50]
        assert out == [20 + 25]

    def test_midpoint_infeasible_slice_unchanged(self):
        rng = np.random.default_rng(321)
        data = null_data(rng, 30, 25)
        assert refine_midpoint(data, [15], lambda d: 1) == [15]

    def test_full_refine_alpha_zero_spans(self):
        seen = []

        def est(chunk):
            seen.append(chunk.n)
            return 10

        rng = np.random.default_rng(322)
        data = null_data(rng, 90, 2)
        out = refine_full(data, [30, 60], 0.0, est)
        assert seen == [60, 60]  # (0,60] and (30,90]
        assert out == [10, 40]

    def test_full_refine_overtrimmed_slice_unchanged(self):
        rng = np.random.default_rng(323)
        data = null_data(rng, 40, 6)
        out = refine_full(data, [20], 0.45, est_fn=lambda d: 1)
        assert out == [20]

    def test_refinement_not_degrading_on_strong_signal(self):
        improved = 0
        seeds = np.random.SeedSequence(324).generate_state(20, dtype=np.uint64)
        for s in seeds:
            data, truth = generate_single(
                SimConfig(n=400, p=60, k=3, rho=6.0, tau=0.45, seed=int(s))
            )
            start = truth.z  # already exact
            refined = refine_midpoint(data, [start], multi.lasso_est_fn(0.05, seed=int(s)))
            improved += abs(refined[0] - truth.z) <= abs(start - truth.z)
        assert improved >= 16


class TestDetectMultiple:
    def test_two_changes_end_to_end(self):
        spec = MultiSpec(n=400, p=30, changepoints=(130, 260), magnitudes=(5.0, 5.0), k=3, seed=12)
        data, _ = generate_multi(spec)
        T = calibrate_threshold(400, 30, alpha=0.05, B=150, M=60, seed=13)
        cfg = MultiConfig(T=T, M=60, alpha=0.05, seed=13)
        result = detect_multiple(data, cfg)
        assert len(result.refined) == 2
        assert abs(result.refined[0] - 130) <= 12
        assert abs(result.refined[1] - 260) <= 12

    def test_stage_invariants(self):
        spec = MultiSpec(n=300, p=20, changepoints=(150,), magnitudes=(4.0,), k=2, seed=14)
        data, _ = generate_multi(spec)
        cfg = MultiConfig(T=9.0, M=50, alpha=0.05, seed=14)
        result = detect_multiple(data, cfg)
        assert set(result.pruned) <= set(result.raw)
        assert len(result.refined) == len(result.pruned)
        assert all(0 < z < data.n for z in result.raw + result.pruned + result.refined)
        assert result.raw == sorted(result.raw)

    def test_deterministic(self):
        spec = MultiSpec(n=250, p=15, changepoints=(120,), magnitudes=(4.0,), k=2, seed=15)
        data, _ = generate_multi(spec)
        cfg = MultiConfig(T=8.5, M=40, alpha=0.05, seed=15)
        r1 = detect_multiple(data, cfg)
        r2 = detect_multiple(data, cfg)
        assert r1.raw == r2.raw and r1.pruned == r2.pruned and r1.refined == r2.refined

    def test_null_data_mostly_empty(self):
        T = calibrate_threshold(200, 15, alpha=0.05, B=150, M=40, seed=16)
        empties = 0
        seeds = np.random.SeedSequence(330).generate_state(15, dtype=np.uint64)
        for s in seeds:
            rng = np.random.default_rng(int(s))
            data = null_data(rng, 200, 15)
            cfg = MultiConfig(T=T, M=40, alpha=0.05, seed=int(s))
            empties += detect_multiple(data, cfg).refined == []
        assert empties >= 14
