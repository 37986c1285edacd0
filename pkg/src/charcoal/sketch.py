"""Complementary sketching of a regression sample.

Given ``(X, Y)`` with more observations than covariates, the sketch projects
the response through an orthonormal basis ``A`` of the orthogonal complement
of the column space of ``X``.  The projected response ``Z = A^T Y`` no longer
depends on any coefficient vector shared by the whole sample, so a change in
the coefficients shows up as a sparse signal in ``Z`` relative to the
time-indexed sketched designs ``W_t = 2 A_{(0,t]}^T X_{(0,t]}``.

The per-time correlation statistics ``Q_t`` are accumulated with the rank-one
recursion ``W_t = W_{t-1} + 2 a_t x_t^T`` carried implicitly: only the running
inner products ``u_t = W_t^T Z`` and the running column norms ``d_t`` are
kept, never the ``W_t`` history.  The per-step cross terms
``a_t^T (W_{t-1})_j`` are batched into a single matrix product against the
residual projector ``A A^T``, so the stream itself is O(p) per step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import DimensionError, complement_projector

DIAG_GUARD = 1e-12


@dataclass(frozen=True)
class RegressionData:
    """A design matrix paired with its response vector."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        Y = np.ascontiguousarray(self.Y, dtype=np.float64)
        if X.ndim != 2 or Y.ndim != 1:
            raise DimensionError("X must be 2-d and Y 1-d")
        if X.shape[0] != Y.shape[0]:
            raise DimensionError(f"X has {X.shape[0]} rows but Y has length {Y.shape[0]}")
        if not (np.isfinite(X).all() and np.isfinite(Y).all()):
            raise ValueError("design and response must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def slice(self, s: int, e: int) -> "RegressionData":
        """Rows with time index in the half-open interval (s, e]."""
        return RegressionData(self.X[s:e], self.Y[s:e])


@dataclass(frozen=True)
class SketchedData:
    """Complement basis ``A`` (n x m) and sketched response ``Z = A^T Y``.

    ``projector`` caches ``A A^T`` (the residual projector of the design),
    which the statistic streams use to batch their per-step inner products.
    """

    A: np.ndarray
    Z: np.ndarray
    projector: np.ndarray | None = None

    @property
    def m(self) -> int:
        return self.A.shape[1]

    def full_projector(self) -> np.ndarray:
        if self.projector is not None:
            return self.projector
        return self.A @ self.A.T


@dataclass
class QMatrix:
    """Per-time statistics ``Q_t`` over a burn-in-restricted window.

    ``stats`` is p x T with column ``j`` holding ``Q_{t_lo + j}``.  The
    ``variant`` tag records the normalization: ``"diag"`` divides by the
    column norms of ``W_t``, ``"primed"`` scales by sqrt(n / (t (n - t))).
    """

    stats: np.ndarray
    t_lo: int
    t_hi: int
    variant: str
    degenerate_count: int = field(default=0)

    def __post_init__(self):
        if self.variant not in ("diag", "primed"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.stats.shape[1] != self.t_hi - self.t_lo + 1:
            raise ValueError("stats width does not match the time window")

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.t_lo, self.t_hi + 1)

    @property
    def width(self) -> int:
        return self.t_hi - self.t_lo + 1


def scan_window(n: int, alpha: float) -> tuple[int, int]:
    """Burn-in window [max(1, floor(alpha*n)), min(n-1, ceil((1-alpha)*n))]."""
    if not 0.0 <= alpha < 0.5:
        raise ValueError("alpha must lie in [0, 1/2)")
    t_lo = max(1, int(np.floor(alpha * n)))
    t_hi = min(n - 1, int(np.ceil((1.0 - alpha) * n)))
    return t_lo, t_hi


def sketch(data: RegressionData) -> SketchedData:
    """Build the complement basis and project the response through it."""
    if data.n <= data.p:
        raise DimensionError(
            f"sketching needs n > p (got n={data.n}, p={data.p})"
        )
    A, proj = complement_projector(data.X)
    Z = A.T @ data.Y
    return SketchedData(A=A, Z=Z, projector=proj)


def q_matrix(
    data: RegressionData,
    sk: SketchedData,
    alpha: float = 0.0,
    variant: str = "diag",
) -> QMatrix:
    """Stream the statistics ``Q_t`` for every t in the burn-in window.

    ``diag`` variant: ``Q_t = diag(W_t^T W_t)^{-1/2} W_t^T Z``; a column norm
    below ``1e-12`` zeroes that entry instead of dividing by it, and the
    number of such guards taken is reported on the result.

    ``primed`` variant: ``Q_t = sqrt(n / (t(n-t))) W_t^T Z``.
    """
    if variant not in ("diag", "primed"):
        raise ValueError(f"unknown variant {variant!r}")
    X, n, p = data.X, data.n, data.p
    A, Z = sk.A, sk.Z
    t_lo, t_hi = scan_window(n, alpha)
    T = t_hi - t_lo + 1
    stats = np.empty((p, T))
    degenerate = 0

    c = A @ Z  # c[t-1] = a_t . Z
    proj = sk.full_projector()
    pdiag = proj.diagonal()
    # a_t^T (W_{t-1})_j = 2 sum_{i<t} (a_i . a_t) x_ij, batched for all t
    cross = np.tril(proj, -1) @ X
    u = np.zeros(p)
    d = np.zeros(p)
    for t in range(1, t_hi + 1):
        x = X[t - 1]
        if variant == "diag":
            d += 8.0 * x * cross[t - 1] + 4.0 * pdiag[t - 1] * x * x
        u += 2.0 * c[t - 1] * x
        if t < t_lo:
            continue
        col = t - t_lo
        if variant == "diag":
            safe = d >= DIAG_GUARD
            degenerate += int(p - np.count_nonzero(safe))
            q = np.zeros(p)
            q[safe] = u[safe] / np.sqrt(d[safe])
            stats[:, col] = q
        else:
            stats[:, col] = np.sqrt(n / (t * (n - t))) * u
    return QMatrix(stats=stats, t_lo=t_lo, t_hi=t_hi, variant=variant, degenerate_count=degenerate)


def estimate_sigma_mad(Q: QMatrix) -> float:
    """Noise scale from the median absolute deviation of the Q entries.

    Scaled by 1.4826 so the estimate is consistent for the standard deviation
    when the entries are approximately normal.
    """
    entries = Q.stats.ravel()
    if entries.size == 0:
        raise ValueError("Q matrix is empty")
    med = np.median(entries)
    return 1.4826 * float(np.median(np.abs(entries - med)))


def g_expected(t: int, z: int, n: int, p: int) -> float:
    """Asymptotic mean scale of ``W_t^T W_z`` (a multiple of the identity)."""
    if not (1 <= t <= n - 1 and 1 <= z <= n - 1 and n > p):
        raise ValueError("need 1 <= t, z <= n-1 and n > p")
    if t <= z:
        return 4.0 * t * (n - z) * (n - p) / n**2
    return 4.0 * z * (n - t) * (n - p) / n**2


def gamma_oracle(t: int, z: int, n: int, p: int) -> float:
    """Deterministic CUSUM-shaped scan curve, maximized exactly at t = z."""
    if not (1 <= t <= n - 1 and 1 <= z <= n - 1 and n > p):
        raise ValueError("need 1 <= t, z <= n-1 and n > p")
    lead = 4.0 * (n - p) / n
    if t <= z:
        return lead * np.sqrt(t / (n * (n - t))) * (n - z)
    return lead * np.sqrt((n - t) / (n * t)) * z
