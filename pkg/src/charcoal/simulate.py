"""Synthetic data generation, evaluation metrics, and the benchmark runner.

All generators draw from a Philox counter-based generator seeded through
``numpy.random.SeedSequence``, so streams are reproducible across platforms.
Draw order within a generator call is fixed and documented per function;
changing it would silently change every seeded result downstream.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .multi import MultiConfig, detect_multiple
from .sketch import RegressionData
from .single import calibrate_threshold, detect_single

DESIGNS = ("gauss-iid", "ar-toeplitz", "rademacher")
NOISES = ("gauss", "t4", "t6", "exp-centered", "rademacher")
SINGLE_ESTIMATORS = ("soft", "hard", "proj", "lasso-bic")
AR_COEF = 0.7


@dataclass(frozen=True)
class SimConfig:
    """One single-changepoint generation setting."""

    n: int
    p: int
    k: int
    rho: float
    tau: float
    sigma: float = 1.0
    design: str = "gauss-iid"
    noise: str = "gauss"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie strictly between 0 and 1")
        if not 1 <= self.k <= self.p:
            raise ValueError("need 1 <= k <= p")
        if self.rho < 0 or self.sigma < 0:
            raise ValueError("rho and sigma must be non-negative")
        if self.design not in DESIGNS:
            raise ValueError(f"design must be one of {DESIGNS}")
        if self.noise not in NOISES:
            raise ValueError(f"noise must be one of {NOISES}")


@dataclass(frozen=True)
class MultiSpec:
    """One multiple-changepoint generation setting (Gaussian design/noise)."""

    n: int
    p: int
    changepoints: tuple[int, ...]
    magnitudes: tuple[float, ...]
    k: int
    seed: int = 0

    def __post_init__(self):
        cps = tuple(int(z) for z in self.changepoints)
        mags = tuple(float(r) for r in self.magnitudes)
        object.__setattr__(self, "changepoints", cps)
        object.__setattr__(self, "magnitudes", mags)
        if len(cps) != len(mags):
            raise ValueError("changepoints and magnitudes must have equal length")
        if any(z2 <= z1 for z1, z2 in zip(cps, cps[1:])):
            raise ValueError("changepoints must be strictly increasing")
        if cps and not (0 < cps[0] and cps[-1] < self.n):
            raise ValueError("changepoints must lie strictly inside (0, n)")
        if not 1 <= self.k <= self.p:
            raise ValueError("need 1 <= k <= p")


@dataclass(frozen=True)
class SingleTruth:
    z: int
    theta: np.ndarray
    beta_pre: np.ndarray


@dataclass(frozen=True)
class MultiTruth:
    changepoints: tuple[int, ...]
    thetas: list[np.ndarray]
    beta_first: np.ndarray


def _draw_design(rng: np.random.Generator, n: int, p: int, design: str) -> np.ndarray:
    if design == "gauss-iid":
        return rng.standard_normal((n, p))
    if design == "ar-toeplitz":
        cov = AR_COEF ** np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
        return rng.standard_normal((n, p)) @ np.linalg.cholesky(cov).T
    if design == "rademacher":
        return rng.integers(0, 2, size=(n, p)).astype(np.float64) * 2.0 - 1.0
    raise ValueError(f"unknown design {design!r}")


def _draw_noise(rng: np.random.Generator, n: int, noise: str) -> np.ndarray:
    """Unit-variance noise draws (heavier-tailed laws are standardized)."""
    if noise == "gauss":
        return rng.standard_normal(n)
    if noise == "t4":
        return rng.standard_t(4, size=n) / math.sqrt(2.0)
    if noise == "t6":
        return rng.standard_t(6, size=n) / math.sqrt(1.5)
    if noise == "exp-centered":
        return rng.exponential(1.0, size=n) - 1.0
    if noise == "rademacher":
        return rng.integers(0, 2, size=n).astype(np.float64) * 2.0 - 1.0
    raise ValueError(f"unknown noise {noise!r}")


def _draw_sparse_change(rng: np.random.Generator, p: int, k: int, rho: float) -> np.ndarray:
    """k-sparse vector with uniform support and norm rho (zero when rho=0)."""
    theta = np.zeros(p)
    if rho > 0:
        support = rng.choice(p, size=k, replace=False)
        vals = rng.standard_normal(k)
        theta[support] = vals * (rho / np.linalg.norm(vals))
    return theta


def generate_single(cfg: SimConfig) -> tuple[RegressionData, SingleTruth]:
    """Single-change regression sample; change at z = round(tau * n).

    Draw order: design, change vector (support then values), pre-change
    coefficients, noise.  The post-change coefficients are
    ``beta_pre - 2 * theta`` so that theta = (beta_pre - beta_post) / 2.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed)))
    n, p = cfg.n, cfg.p
    z = int(round(cfg.tau * n))
    X = _draw_design(rng, n, p, cfg.design)
    theta = _draw_sparse_change(rng, p, cfg.k, cfg.rho)
    beta_pre = max(1.0, cfg.rho) * rng.standard_normal(p)
    beta_post = beta_pre - 2.0 * theta
    eps = cfg.sigma * _draw_noise(rng, n, cfg.noise)
    Y = np.empty(n)
    Y[:z] = X[:z] @ beta_pre + eps[:z]
    Y[z:] = X[z:] @ beta_post + eps[z:]
    return RegressionData(X, Y), SingleTruth(z=z, theta=theta, beta_pre=beta_pre)


def generate_multi(spec: MultiSpec) -> tuple[RegressionData, MultiTruth]:
    """Piecewise-constant regression sample with sparse coefficient jumps.

    Gaussian iid design and unit Gaussian noise.  Draw order: design, the
    change vectors in time order, initial coefficients, noise.  Consecutive
    coefficient vectors satisfy ``beta_{r+1} = beta_r - 2 * theta_r``.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(spec.seed)))
    n, p = spec.n, spec.p
    X = rng.standard_normal((n, p))
    thetas = [_draw_sparse_change(rng, p, spec.k, rho) for rho in spec.magnitudes]
    rho_max = max(spec.magnitudes, default=0.0)
    beta = max(1.0, rho_max) * rng.standard_normal(p)
    beta_first = beta.copy()
    eps = rng.standard_normal(n)
    Y = np.empty(n)
    bounds = [0, *spec.changepoints, n]
    for r in range(len(bounds) - 1):
        lo, hi = bounds[r], bounds[r + 1]
        Y[lo:hi] = X[lo:hi] @ beta + eps[lo:hi]
        if r < len(thetas):
            beta = beta - 2.0 * thetas[r]
    return RegressionData(X, Y), MultiTruth(
        changepoints=spec.changepoints, thetas=thetas, beta_first=beta_first
    )


def hausdorff(a, b, n: int | None = None) -> float:
    """Hausdorff distance between two changepoint sets.

    When exactly one set is empty the convention is the worst case ``n``
    (required as the third argument in that case); two empty sets are at
    distance zero.
    """
    xs = np.asarray(sorted(a), dtype=np.float64)
    ys = np.asarray(sorted(b), dtype=np.float64)
    if xs.size == 0 and ys.size == 0:
        return 0.0
    if xs.size == 0 or ys.size == 0:
        if n is None:
            raise ValueError("n is required for the empty-set convention")
        return float(n)
    gaps = np.abs(xs[:, None] - ys[None, :])
    return float(max(gaps.min(axis=1).max(), gaps.min(axis=0).max()))


def _comb2(x: np.ndarray) -> np.ndarray:
    return x * (x - 1.0) / 2.0


def adjusted_rand_index(cp_a, cp_b, n: int) -> float:
    """Adjusted Rand index of the segmentations induced by two changepoint sets.

    Changepoint z means segments split between times z and z + 1; labels are
    compared over {1, ..., n}.  Two identical (including trivial) partitions
    score 1.
    """
    za = np.asarray(sorted(set(cp_a)), dtype=np.int64)
    zb = np.asarray(sorted(set(cp_b)), dtype=np.int64)
    ts = np.arange(1, n + 1)
    la = np.searchsorted(za, ts, side="left")
    lb = np.searchsorted(zb, ts, side="left")
    contingency = np.zeros((za.size + 1, zb.size + 1))
    np.add.at(contingency, (la, lb), 1.0)
    sum_ij = _comb2(contingency).sum()
    sum_a = _comb2(contingency.sum(axis=1)).sum()
    sum_b = _comb2(contingency.sum(axis=0)).sum()
    total = _comb2(np.array([float(n)]))[0]
    expected = sum_a * sum_b / total
    denom = 0.5 * (sum_a + sum_b) - expected
    if denom == 0.0:
        return 1.0
    return float((sum_ij - expected) / denom)


@dataclass(frozen=True)
class MultiScenario:
    """A multiple-changepoint benchmark setting plus pipeline tuning."""

    spec: MultiSpec
    M: int = 200
    varpi: float = 0.0
    alpha: float = 0.05
    lam_coef: float = 0.5
    level: float | None = None
    calib_b: int = 500


def _rep_seeds(seed: int, count: int) -> np.ndarray:
    """Derived per-task seeds, stable across platforms and thread counts."""
    return np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)


def _run_single_rep(args) -> list[dict]:
    name, cfg, estimators, rep, rep_seed = args
    data, truth = generate_single(replace(cfg, seed=int(rep_seed)))
    rows = []
    for est_name in estimators:
        start = time.perf_counter()
        res = detect_single(data, method=est_name, alpha=0.0, lam_coef=0.5, seed=int(rep_seed))
        elapsed = time.perf_counter() - start
        rows.append(
            {
                "scenario": name,
                "rep": rep,
                "estimator": est_name,
                "loss": abs(res.estimate.location - truth.z),
                "wall_time": elapsed,
            }
        )
    return rows


def _run_multi_rep(args) -> list[dict]:
    name, scenario, T, rep, rep_seed = args
    spec = replace(scenario.spec, seed=int(rep_seed))
    data, truth = generate_multi(spec)
    cfg = MultiConfig(
        T=T,
        M=scenario.M,
        varpi=scenario.varpi,
        alpha=scenario.alpha,
        lam_coef=scenario.lam_coef,
        seed=int(rep_seed),
    )
    start = time.perf_counter()
    result = detect_multiple(data, cfg)
    elapsed = time.perf_counter() - start
    true_cps = set(truth.changepoints)
    found = result.refined
    return [
        {
            "scenario": name,
            "rep": rep,
            "estimator": "not-pipeline",
            "nu_hat": len(found),
            "nu_err": len(found) - len(true_cps),
            "hausdorff": hausdorff(true_cps, found, n=spec.n),
            "ari": adjusted_rand_index(true_cps, found, spec.n),
            "wall_time": elapsed,
        }
    ]


def _pool_map(worker, jobs, threads: int):
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(worker, jobs))
    return [worker(job) for job in jobs]


def run_benchmark(
    scenario,
    estimators=None,
    reps: int = 100,
    seed: int = 0,
    threads: int = 1,
    name: str | None = None,
) -> tuple[list[dict], dict]:
    """Run a scenario for ``reps`` replicates and aggregate the losses.

    ``scenario`` is a :class:`SimConfig` (single change; ``estimators`` picks
    from soft/hard/proj/lasso-bic) or a :class:`MultiScenario` (full
    pipeline; the test threshold is calibrated once per call).  Returns
    ``(rows, summary)`` where ``rows`` has one record per rep and estimator.
    Replicates use per-rep derived seeds, so results are independent of
    ``threads``.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    if isinstance(scenario, SimConfig):
        estimators = tuple(estimators) if estimators else ("proj", "lasso-bic")
        unknown = set(estimators) - set(SINGLE_ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators: {sorted(unknown)}")
        label = name or "single"
        seeds = _rep_seeds(seed, reps)
        jobs = [(label, scenario, estimators, r, seeds[r]) for r in range(reps)]
        nested = _pool_map(_run_single_rep, jobs, threads)
        rows = [row for chunk in nested for row in chunk]
        summary = {"scenario": label, "reps": reps, "seed": seed, "estimators": {}}
        for est_name in estimators:
            losses = np.array([r["loss"] for r in rows if r["estimator"] == est_name], dtype=float)
            summary["estimators"][est_name] = {
                "mean_abs_loss": float(losses.mean()),
                "rmse": float(np.sqrt(np.mean(losses**2))),
            }
        return rows, summary
    if isinstance(scenario, MultiScenario):
        label = name or "multi"
        seeds = _rep_seeds(seed, reps + 1)
        level = scenario.level if scenario.level is not None else 0.01 / scenario.M
        T = calibrate_threshold(
            scenario.spec.n,
            scenario.spec.p,
            alpha=scenario.alpha,
            lam_coef=scenario.lam_coef,
            B=scenario.calib_b,
            M=scenario.M,
            level=level,
            seed=int(seeds[0]),
            threads=threads,
        )
        jobs = [(label, scenario, T, r, seeds[r + 1]) for r in range(reps)]
        nested = _pool_map(_run_multi_rep, jobs, threads)
        rows = [row for chunk in nested for row in chunk]
        nu_errs = [r["nu_err"] for r in rows]
        summary = {
            "scenario": label,
            "reps": reps,
            "seed": seed,
            "threshold_T": T,
            "nu_err_counts": {str(v): nu_errs.count(v) for v in sorted(set(nu_errs))},
            "mean_hausdorff": float(np.mean([r["hausdorff"] for r in rows])),
            "mean_ari": float(np.mean([r["ari"] for r in rows])),
        }
        return rows, summary
    raise TypeError(f"unsupported scenario type {type(scenario).__name__}")


def preset_scenarios(preset: str, rho_min: float = 1.6, k: int | None = None) -> list[tuple[str, object, tuple]]:
    """Named benchmark presets: (label, scenario, estimators) triples."""
    if preset == "table1":
        cfg = SimConfig(n=600, p=200, k=3, rho=4.0, tau=0.3)
        return [("table1", cfg, ("soft", "proj", "lasso-bic"))]
    if preset == "table2-charcoal":
        cfg = SimConfig(n=1200, p=400, k=3, rho=4.0, tau=0.3)
        return [("table2-charcoal", cfg, ("proj", "lasso-bic"))]
    if preset == "table3-M1":
        spec = MultiSpec(
            n=1200,
            p=200,
            changepoints=(240, 540, 900),
            magnitudes=tuple(rho_min * np.array([1.0, 1.5, 2.0])),
            k=k if k is not None else 3,
        )
        return [("table3-M1", MultiScenario(spec=spec), ())]
    if preset == "table3-M2":
        spec = MultiSpec(
            n=2400,
            p=400,
            changepoints=(720, 1320, 1800, 2160),
            magnitudes=tuple(rho_min * np.array([1.0, 1.15, 1.45, 2.18])),
            k=k if k is not None else 3,
        )
        return [("table3-M2", MultiScenario(spec=spec), ())]
    if preset == "robustness":
        out = []
        for exponent in range(9):
            cfg = SimConfig(
                n=1200,
                p=400,
                k=k if k is not None else 20,
                rho=1.5**exponent,
                tau=0.3,
                design="ar-toeplitz",
                noise="t4",
            )
            out.append((f"robustness-rho1.5e{exponent}", cfg, ("lasso-bic",)))
        return out
    raise ValueError(f"unknown preset {preset!r}")


PRESETS = ("table1", "table2-charcoal", "table3-M1", "table3-M2", "robustness")


def config_dict(obj) -> dict:
    """JSON-friendly echo of a scenario/config dataclass."""
    d = asdict(obj)
    for key, value in list(d.items()):
        if isinstance(value, tuple):
            d[key] = list(value)
    return d
