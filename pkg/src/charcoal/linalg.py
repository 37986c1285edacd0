"""Dense linear-algebra kernels: orthogonal-complement bases, entrywise
thresholding, the leading left singular vector by power iteration, and a
KKT-verifiable Lasso solver.

Everything here is a pure function of its inputs.  Matrices are plain
``numpy.ndarray`` objects in float64.
"""

from __future__ import annotations

import warnings

import numpy as np

from . import _kernels

RANK_RTOL = 1e-10
POWER_TOL = 1e-8
POWER_MAX_ITER = 1000
CD_TOL = 1e-8
CD_MAX_SWEEPS = 10_000


class DimensionError(ValueError):
    """Input shapes make the requested operation impossible."""


class RankDeficiencyError(ValueError):
    """Design matrix does not have full column rank."""


class DegenerateInputError(ValueError):
    """Input is degenerate (e.g. all-zero) for the requested operation."""


class ConvergenceError(RuntimeError):
    """Iterative solver failed to converge; carries the last iterate."""

    def __init__(self, message: str, last_iterate: np.ndarray):
        super().__init__(message)
        self.last_iterate = last_iterate


class ConvergenceWarning(RuntimeWarning):
    """Iterative routine hit its iteration cap but returned a usable result."""


def _signed_complete_qr(X: np.ndarray) -> np.ndarray:
    """Full orthogonal factor of X with a non-negative R diagonal."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError("design must be a 2-d array")
    n, p = X.shape
    if n <= p:
        raise DimensionError(f"need more rows than columns to form a complement (n={n}, p={p})")
    Q, R = np.linalg.qr(X, mode="complete")
    rdiag = np.abs(np.diag(R)[:p])
    if rdiag.max() == 0.0 or rdiag.min() < RANK_RTOL * rdiag.max():
        raise RankDeficiencyError(
            f"design appears rank deficient (min |R_ii| = {rdiag.min():.3e}, max = {rdiag.max():.3e})"
        )
    signs = np.sign(np.diag(R)[:p])
    signs[signs == 0] = 1.0
    Q[:, :p] *= signs
    return Q


def complement_basis(X: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of the column space.

    Parameters
    ----------
    X : (n, p) array with n > p and full column rank.

    Returns
    -------
    A : (n, n - p) array with ``A.T @ A = I`` and ``A.T @ X = 0``.

    The result is deterministic for a given ``X``: it is the trailing
    ``n - p`` columns of the orthogonal factor of a full QR factorization,
    with the sign convention that the R factor has a non-negative diagonal.
    """
    p = np.asarray(X).shape[1]
    Q = _signed_complete_qr(X)
    return np.ascontiguousarray(Q[:, p:])


def complement_projector(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Complement basis A together with the projector P = A A^T.

    Same factorization and error behavior as :func:`complement_basis`; the
    projector is assembled from whichever factor is thinner
    (``P = I - Q1 Q1^T`` when p < n - p).
    """
    n, p = np.asarray(X).shape
    Q = _signed_complete_qr(X)
    A = np.ascontiguousarray(Q[:, p:])
    if p <= n - p:
        Q1 = Q[:, :p]
        P = -(Q1 @ Q1.T)
        P[np.diag_indices(n)] += 1.0
    else:
        P = A @ A.T
    return A, P


def soft_threshold(v: np.ndarray, lam: float) -> np.ndarray:
    """Entrywise shrinkage: sign(v_i) * max(|v_i| - lam, 0)."""
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.maximum(np.abs(v) - lam, 0.0)


def hard_threshold(v: np.ndarray, lam: float) -> np.ndarray:
    """Entrywise keep-or-kill: entries with |v_i| < lam are zeroed."""
    v = np.asarray(v, dtype=np.float64)
    return np.where(np.abs(v) >= lam, v, 0.0)


def leading_left_singular_vector(M: np.ndarray, seed: int = 0) -> np.ndarray:
    """Leading left singular vector of ``M`` by power iteration on ``M M^T``.

    The start vector is drawn from a seeded Philox generator; convergence
    requires both a relative change below ``1e-8`` in the Rayleigh quotient
    and an iterate displacement below ``1e-8`` (the Rayleigh criterion alone
    stalls while the direction is still turning when the top two singular
    values are close).  The sign is normalized so the largest-magnitude
    entry is positive.  If the iteration cap is hit, the last iterate is
    returned and a :class:`ConvergenceWarning` is issued (the downstream
    changepoint scan is sign-invariant and tolerant of near-ties).
    """
    M = np.asarray(M, dtype=np.float64)
    if not np.any(M):
        raise DegenerateInputError("cannot take the leading singular vector of an all-zero matrix")
    p = M.shape[0]
    B = M @ M.T
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    v = rng.standard_normal(p)
    v /= np.linalg.norm(v)
    rayleigh = v @ B @ v
    converged = False
    for _ in range(POWER_MAX_ITER):
        w = B @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            # start vector landed in the null space; redraw
            v = rng.standard_normal(p)
            v /= np.linalg.norm(v)
            rayleigh = v @ B @ v
            continue
        v_new = w / norm
        new_rayleigh = v_new @ B @ v_new
        step = np.linalg.norm(v_new - v)
        v = v_new
        if (
            abs(new_rayleigh - rayleigh) <= POWER_TOL * max(new_rayleigh, np.finfo(float).tiny)
            and step <= POWER_TOL
        ):
            rayleigh = new_rayleigh
            converged = True
            break
        rayleigh = new_rayleigh
    if not converged:
        warnings.warn(
            f"power iteration did not converge in {POWER_MAX_ITER} iterations",
            ConvergenceWarning,
            stacklevel=2,
        )
    idx = int(np.argmax(np.abs(v)))
    if v[idx] < 0:
        v = -v
    return v


def lasso_cd(W: np.ndarray, Z: np.ndarray, lam: float) -> np.ndarray:
    """Lasso solution of min_v (1/2m)||Z - Wv||_2^2 + lam*||v||_1.

    Cyclic coordinate descent from a zero start; a sweep terminates the solve
    once the largest coefficient change drops below ``1e-8``.  The returned
    vector satisfies the KKT conditions of the objective to ~1e-6.

    Raises
    ------
    ConvergenceError
        If ``10_000`` sweeps do not reach the tolerance; the exception
        carries the last iterate in ``last_iterate``.
    """
    W = np.ascontiguousarray(W, dtype=np.float64)
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    if lam <= 0:
        raise ValueError("lam must be positive")
    if W.ndim != 2 or W.shape[0] != Z.shape[0]:
        raise DimensionError("W and Z have incompatible shapes")
    v0 = np.zeros(W.shape[1])
    v, _, converged = _kernels.lasso_cd(W, Z, lam, v0, CD_TOL, CD_MAX_SWEEPS)
    if not converged:
        raise ConvergenceError(f"coordinate descent did not converge in {CD_MAX_SWEEPS} sweeps", v)
    return v
