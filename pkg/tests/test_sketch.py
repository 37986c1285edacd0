import numpy as np
import pytest

from charcoal import (
    DimensionError,
    QMatrix,
    RegressionData,
    SketchedData,
    estimate_sigma_mad,
    g_expected,
    gamma_oracle,
    q_matrix,
    scan_window,
    sketch,
)


def make_single_change(rng, n, p, k, rho, z, sigma):
    X = rng.standard_normal((n, p))
    theta = np.zeros(p)
    support = rng.choice(p, size=k, replace=False)
    vals = rng.standard_normal(k)
    theta[support] = vals * rho / np.linalg.norm(vals)
    beta_pre = rng.standard_normal(p)
    beta_post = beta_pre - 2 * theta
    Y = np.empty(n)
    Y[:z] = X[:z] @ beta_pre
    Y[z:] = X[z:] @ beta_post
    Y += sigma * rng.standard_normal(n)
    return RegressionData(X, Y), theta


def naive_q_columns(data, sk, variant):
    """Materialize every W_t from scratch (the slow reference computation)."""
    n = data.n
    cols = []
    for t in range(1, n):
        W = 2.0 * sk.A[:t].T @ data.X[:t]
        u = W.T @ sk.Z
        if variant == "diag":
            d = np.sum(W * W, axis=0)
            cols.append(u / np.sqrt(d))
        else:
            cols.append(np.sqrt(n / (t * (n - t))) * u)
    return np.column_stack(cols)


class TestSketch:
    def test_noiseless_change_matches_sketched_design(self):
        rng = np.random.default_rng(100)
        n, p, z = 30, 6, 12
        data, theta = make_single_change(rng, n, p, 3, 2.0, z, sigma=0.0)
        sk = sketch(data)
        W_z = 2.0 * sk.A[:z].T @ data.X[:z]
        assert np.abs(sk.Z - W_z @ theta).max() < 1e-8 * (1.0 + np.abs(sk.Z).max())

    def test_response_in_column_space_gives_zero(self):
        rng = np.random.default_rng(101)
        X = rng.standard_normal((15, 4))
        data = RegressionData(X, X @ rng.standard_normal(4))
        assert np.abs(sketch(data).Z).max() < 1e-8

    def test_sketch_norm_equals_residual_norm(self):
        rng = np.random.default_rng(102)
        X = rng.standard_normal((12, 4))
        Y = rng.standard_normal(12)
        data = RegressionData(X, Y)
        sk = sketch(data)
        resid = Y - X @ np.linalg.lstsq(X, Y, rcond=None)[0]
        assert np.linalg.norm(sk.Z) ** 2 == pytest.approx(np.linalg.norm(resid) ** 2, rel=1e-8)

    def test_too_short_raises(self):
        rng = np.random.default_rng(103)
        X = rng.standard_normal((4, 4))
        with pytest.raises(DimensionError):
            sketch(RegressionData(X, np.zeros(4)))


class TestQMatrix:
    @pytest.mark.parametrize("variant", ["diag", "primed"])
    def test_streaming_matches_naive(self, variant):
        rng = np.random.default_rng(110)
        for _ in range(5):
            n = int(rng.integers(8, 31))
            p = int(rng.integers(1, min(6, n - 2) + 1))
            X = rng.standard_normal((n, p))
            Y = rng.standard_normal(n)
            data = RegressionData(X, Y)
            sk = sketch(data)
            Q = q_matrix(data, sk, 0.0, variant)
            ref = naive_q_columns(data, sk, variant)
            assert np.abs(Q.stats - ref).max() < 1e-8

    def test_primed_at_change_noiseless(self):
        rng = np.random.default_rng(111)
        n, p, z = 24, 4, 10
        data, theta = make_single_change(rng, n, p, 2, 3.0, z, sigma=0.0)
        sk = sketch(data)
        Q = q_matrix(data, sk, 0.0, "primed")
        W_z = 2.0 * sk.A[:z].T @ data.X[:z]
        expected = np.sqrt(n / (z * (n - z))) * (W_z.T @ W_z @ theta)
        assert np.abs(Q.stats[:, z - 1] - expected).max() < 1e-8 * (1 + np.abs(expected).max())

    def test_window_arithmetic(self):
        assert scan_window(100, 0.1) == (10, 90)
        assert scan_window(100, 0.0) == (1, 99)
        Q_times = q_matrix(
            *(lambda d: (d, sketch(d)))(
                RegressionData(np.random.default_rng(1).standard_normal((100, 3)),
                               np.zeros(100))
            ),
            alpha=0.1,
        ).times
        assert Q_times[0] == 10 and Q_times[-1] == 90

    def test_degenerate_column_guard(self):
        rng = np.random.default_rng(112)
        X = rng.standard_normal((12, 3))
        X[0, 2] = 0.0  # (W_1)_3 = 0, so d_{1,3} = 0 at the first scan time
        data = RegressionData(X, rng.standard_normal(12))
        Q = q_matrix(data, sketch(data), 0.0, "diag")
        assert Q.degenerate_count >= 1
        assert Q.stats[2, 0] == 0.0
        assert np.isfinite(Q.stats).all()

    def test_sign_flip_of_basis_leaves_q_unchanged(self):
        rng = np.random.default_rng(113)
        X = rng.standard_normal((18, 5))
        Y = rng.standard_normal(18)
        data = RegressionData(X, Y)
        sk = sketch(data)
        flips = np.where(rng.integers(0, 2, sk.m) == 0, -1.0, 1.0)
        flipped = SketchedData(A=sk.A * flips, Z=flips * sk.Z, projector=None)
        for variant in ("diag", "primed"):
            q0 = q_matrix(data, sk, 0.0, variant).stats
            q1 = q_matrix(data, flipped, 0.0, variant).stats
            assert np.abs(q0 - q1).max() < 1e-10

    def test_cross_product_identity(self):
        # W_t^T W_z = 4 * S_{0,t} S_{0,n}^{-1} S_{z,n} for t <= z
        rng = np.random.default_rng(114)
        n, p, z = 20, 5, 12
        X = rng.standard_normal((n, p))
        data = RegressionData(X, rng.standard_normal(n))
        A = sketch(data).A
        S0n_inv = np.linalg.inv(X.T @ X)
        Szn = X[z:].T @ X[z:]
        for t in range(1, z + 1):
            W_t = 2.0 * A[:t].T @ X[:t]
            W_z = 2.0 * A[:z].T @ X[:z]
            lhs = W_t.T @ W_z
            rhs = 4.0 * X[:t].T @ X[:t] @ S0n_inv @ Szn
            assert np.abs(lhs - rhs).max() <= 1e-6 * max(1.0, np.abs(rhs).max())


class TestSigmaMad:
    def _qm(self, entries):
        arr = np.atleast_2d(np.asarray(entries, dtype=float))
        return QMatrix(stats=arr, t_lo=1, t_hi=arr.shape[1], variant="diag")

    def test_constant_entries(self):
        assert estimate_sigma_mad(self._qm([[2.5, 2.5, 2.5]])) == 0.0

    def test_hand_computed(self):
        assert estimate_sigma_mad(self._qm([[-1.0, 0.0, 1.0]])) == pytest.approx(1.4826)

    def test_consistent_for_normal(self):
        rng = np.random.default_rng(120)
        entries = rng.standard_normal((100, 1000))
        sigma = estimate_sigma_mad(QMatrix(stats=entries, t_lo=1, t_hi=1000, variant="diag"))
        assert 0.98 <= sigma <= 1.02


class TestOracles:
    def test_g_direct_value(self):
        assert g_expected(180, 180, 600, 200) == pytest.approx(336.0)

    def test_g_branch_continuity(self):
        n, p, z = 100, 20, 37
        left = 4 * z * (n - z) * (n - p) / n**2
        right = 4 * z * (n - z) * (n - p) / n**2
        assert g_expected(z, z, n, p) == pytest.approx(left) == pytest.approx(right)

    def test_g_linear_in_n_minus_p(self):
        assert g_expected(10, 20, 50, 49) == pytest.approx(g_expected(10, 20, 50, 0) / 50)

    def test_gamma_value_at_change(self):
        val = gamma_oracle(180, 180, 600, 200)
        assert val == pytest.approx(4 * 400 * np.sqrt(180 * 420) / 600**1.5, rel=1e-12)
        assert val == pytest.approx(29.93, abs=0.01)

    def test_gamma_argmax_at_change(self):
        n, p, z = 600, 200, 180
        vals = [gamma_oracle(t, z, n, p) for t in range(1, n)]
        assert int(np.argmax(vals)) + 1 == z

    def test_gamma_unimodal(self):
        n, p, z = 240, 40, 100
        vals = np.array([gamma_oracle(t, z, n, p) for t in range(1, n)])
        assert np.all(np.diff(vals[: z - 1]) > 0)
        assert np.all(np.diff(vals[z - 1 :]) < 0)
