"""Truncated SVD utilities, per-view projections, and factor alignment.

The aligned factor estimate works in three steps: project each view onto
the column space of its leading singular vectors, average those projections
across views, and rescale the top eigenvectors of the average by sqrt(n).
The averaged operator is never materialized at n x n size; its spectrum
comes from the thin SVD of the scaled horizontal concatenation of the
per-view bases, a problem of size sum(k_m).

A deterministic sign convention is applied to every returned singular or
eigenvector: the entry of largest absolute value within each column is made
positive (ties broken by lowest index), so identical inputs produce
bit-identical outputs.
"""

from dataclasses import dataclass

import numpy as np

from . import _rng
from .errors import ConvergenceFailure, DimensionMismatch, RankTooLarge, UsageError

# Dense LAPACK SVD below this size; seeded randomized range finder above.
DENSE_SVD_MAX = 2048
RANGE_FINDER_OVERSAMPLING = 10
RANGE_FINDER_POWER_ITER = 2


def fix_signs(U, Vt=None):
    """Apply the sign convention column-wise to U (and row-wise to Vt)."""
    anchor = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[anchor, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    if Vt is None:
        return U * signs
    return U * signs, Vt * signs[:, None]


@dataclass
class TruncatedSvd:
    U: np.ndarray
    s: np.ndarray
    Vt: np.ndarray


def assert_truncated_svd_valid(svd, tol=1e-8):
    k = svd.s.shape[0]
    if np.max(np.abs(svd.U.T @ svd.U - np.eye(k))) > tol:
        raise UsageError("left singular vectors are not orthonormal")
    if np.max(np.abs(svd.Vt @ svd.Vt.T - np.eye(k))) > tol:
        raise UsageError("right singular vectors are not orthonormal")
    if np.any(svd.s < 0) or np.any(np.diff(svd.s) > 0):
        raise UsageError("singular values must be non-negative, non-increasing")


def _dense_svd(Y):
    try:
        return np.linalg.svd(Y, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"dense SVD failed: {exc}") from None


def _randomized_svd(Y, k, seed):
    # Halko-style range finder: Gaussian test matrix, fixed oversampling,
    # two power iterations with QR re-orthonormalization.
    n, p = Y.shape
    width = min(k + RANGE_FINDER_OVERSAMPLING, min(n, p))
    rng = _rng.stream(seed, _rng.RANGE_FINDER)
    Omega = rng.standard_normal((p, width))
    Q, _ = np.linalg.qr(Y @ Omega)
    for _ in range(RANGE_FINDER_POWER_ITER):
        Q, _ = np.linalg.qr(Y.T @ Q)
        Q, _ = np.linalg.qr(Y @ Q)
    Ub, s, Vt = _dense_svd(Q.T @ Y)
    return Q @ Ub, s, Vt


def truncated_svd(Y, k, method="auto", seed=0):
    """Top-k singular triplet of ``Y`` with the deterministic sign fix.

    ``method`` selects the backend: "dense" (LAPACK), "randomized"
    (seeded range finder), or "auto" which uses the dense path whenever
    ``min(Y.shape) <= 2048``.
    """
    Y = np.asarray(Y, dtype=float)
    n, p = Y.shape
    if not 1 <= k <= min(n, p):
        raise RankTooLarge(f"k={k} outside [1, min(n, p)] = [1, {min(n, p)}]")
    if method == "auto":
        method = "dense" if min(n, p) <= DENSE_SVD_MAX else "randomized"
    if method == "dense":
        U, s, Vt = _dense_svd(Y)
    elif method == "randomized":
        U, s, Vt = _randomized_svd(Y, k, seed)
    else:
        raise ValueError(f"unknown SVD method {method!r}")
    U, Vt = fix_signs(U[:, :k].copy(), Vt[:k].copy())
    return TruncatedSvd(U=U, s=s[:k].copy(), Vt=Vt)


def view_projection(Y, k, method="auto", seed=0):
    """Orthonormal basis of the leading k-dimensional column space of Y.

    The projection itself is the outer product of the basis with its
    transpose; it is returned factored to keep memory at n x k.
    """
    return truncated_svd(Y, k, method=method, seed=seed).U


@dataclass
class AveragedProjection:
    """Average of per-view projections with spectral access.

    Represents P = (1/M) sum_m B_m B_m^T through ``eigenvectors`` and
    ``singvals`` (equal to the eigenvalues, descending), computed from the
    thin SVD of [B_1 ... B_M] / sqrt(M) without forming an n x n matrix.
    """

    eigenvectors: np.ndarray
    singvals: np.ndarray
    n_views: int

    @property
    def n_samples(self):
        return self.eigenvectors.shape[0]

    def top_eigenpairs(self, k):
        if not 1 <= k <= self.singvals.shape[0]:
            raise RankTooLarge(
                f"k={k} exceeds available rank {self.singvals.shape[0]}")
        return self.singvals[:k], self.eigenvectors[:, :k]

    def dense(self, dense_max=4096):
        n = self.n_samples
        if n > dense_max:
            raise RankTooLarge(
                f"refusing to materialize a {n} x {n} operator (cap {dense_max})")
        return (self.eigenvectors * self.singvals) @ self.eigenvectors.T


def average_projection(bases):
    """Average the factored projections ``bases[m]`` (each n x k_m)."""
    if len(bases) < 1:
        raise DimensionMismatch("at least one projection basis required")
    n = bases[0].shape[0]
    for m, basis in enumerate(bases):
        if basis.shape[0] != n:
            raise DimensionMismatch(
                f"basis {m} has {basis.shape[0]} rows, expected {n}")
    M = len(bases)
    concat = np.concatenate(bases, axis=1) / np.sqrt(M)
    U, s, _ = _dense_svd(concat)
    U = fix_signs(U.copy())
    return AveragedProjection(eigenvectors=U, singvals=s ** 2, n_views=M)


def estimate_factors(avg, k0):
    """Aligned factor estimate: sqrt(n) times the top-k0 eigenvectors."""
    _, vectors = avg.top_eigenpairs(k0)
    return np.sqrt(avg.n_samples) * vectors


def procrustes_distance(A, B):
    """min over orthogonal R of the Frobenius norm of A R - B."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise DimensionMismatch(f"shapes differ: {A.shape} vs {B.shape}")
    U, _, Vt = _dense_svd(A.T @ B)
    R = U @ Vt
    return float(np.linalg.norm(A @ R - B))
