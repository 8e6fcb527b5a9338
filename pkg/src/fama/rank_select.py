"""Latent-dimension selection.

Per-view ranks are chosen by scanning a penalized approximate joint
log-likelihood: for each candidate rank k the factors are the leading left
singular vectors of the view scaled by sqrt(n), loadings come from the
ridge regression with the data-adaptive prior scale, and residual variances
are column-wise mean squared residuals.  The criterion adds the penalty
``k * max(n, p) * log(min(n, p))`` and takes the argmin.

The global rank is the location of the largest spectral gap of the
averaged projection among indices whose successor singular value falls
below ``1/M - tau1``.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateVarianceWarning,
    InvalidRange,
    RankSelectionWarning,
    RankTooLarge,
    ZeroMatrix,
)
from .spectral import truncated_svd

VARIANCE_FLOOR = 1e-12


@dataclass
class JicTrace:
    """Scan record: per-k approximate log-likelihood and criterion values.

    ``floored`` records whether any residual variance hit the numeric
    floor during the scan (a deterministic fact mirrored by the emitted
    warning).
    """

    ks: np.ndarray
    loglik: np.ndarray
    jic: np.ndarray
    chosen_k: int
    floored: bool = False

    def to_dict(self):
        return {
            "ks": [int(k) for k in self.ks],
            "loglik": list(self.loglik),
            "jic": list(self.jic),
            "chosen_k": int(self.chosen_k),
            "floored": bool(self.floored),
        }


def _loglik_at_rank(n, colsq, total_sq, s_all, Vt_all, k):
    """Approximate log-likelihood at rank k from a precomputed SVD of Y.

    Uses the exact identities ||U_k^T Y||_F^2 = sum of the top-k squared
    singular values and F^T Y = sqrt(n) * diag(s_k) Vt_k, so a scan over k
    reuses one decomposition.  Returns (value, floored).
    """
    floored = False
    top = float(np.sum(s_all[:k] ** 2))
    energy = top / n
    resid_energy = max((total_sq - top) / n, 0.0)
    # Prior-scale rule at rank k; the residual floor keeps the criterion
    # finite on (near-)noiseless data instead of failing the scan.
    if resid_energy < VARIANCE_FLOOR:
        floored = True
        resid_energy = VARIANCE_FLOOR
    tau_sq = energy / (k * resid_energy)

    FtY = np.sqrt(n) * (s_all[:k, None] * Vt_all[:k])
    if tau_sq > 0:
        lam = FtY / (n + 1.0 / tau_sq)
    else:
        lam = np.zeros_like(FtY)
    resid = colsq - 2.0 * np.sum(lam * FtY, axis=0) + n * np.sum(lam * lam, axis=0)
    resid = np.maximum(resid, 0.0)
    var = resid / n
    if np.any(var < VARIANCE_FLOOR):
        floored = True
        var = np.maximum(var, VARIANCE_FLOOR)
    value = float(np.sum(-0.5 * n * np.log(2.0 * np.pi * var)
                         - 0.5 * resid / var))
    return value, floored


def approx_loglik(Y, k):
    """Approximate joint log-likelihood of one view at latent dimension k."""
    Y = np.asarray(Y, dtype=float)
    n, p = Y.shape
    if not 1 <= k <= min(n, p):
        raise RankTooLarge(f"k={k} outside [1, {min(n, p)}]")
    svd = truncated_svd(Y, min(n, p))
    value, floored = _loglik_at_rank(n, np.sum(Y * Y, axis=0),
                                     float(np.sum(Y * Y)), svd.s, svd.Vt, k)
    if floored:
        warnings.warn("residual variance floored in rank scan",
                      DegenerateVarianceWarning, stacklevel=2)
    return value


def penalty(n, p, k):
    return k * max(n, p) * np.log(min(n, p))


def select_view_rank(Y, k_max):
    """Rank minimizing the penalized criterion over k = 1..k_max.

    Ties break toward the smallest k.  Returns the chosen rank and the
    full scan trace.
    """
    Y = np.asarray(Y, dtype=float)
    n, p = Y.shape
    if not 1 <= k_max <= min(n, p):
        raise RankTooLarge(f"k_max={k_max} outside [1, {min(n, p)}]")
    svd = truncated_svd(Y, min(n, p))
    colsq = np.sum(Y * Y, axis=0)
    total_sq = float(np.sum(Y * Y))
    ks = np.arange(1, k_max + 1)
    evaluated = [_loglik_at_rank(n, colsq, total_sq, svd.s, svd.Vt, k)
                 for k in ks]
    loglik = np.array([value for value, _ in evaluated])
    floored = any(flag for _, flag in evaluated)
    if floored:
        warnings.warn("residual variance floored in rank scan",
                      DegenerateVarianceWarning, stacklevel=2)
    jic = -2.0 * loglik + penalty(n, p, ks)
    chosen = int(ks[np.argmin(jic)])
    return chosen, JicTrace(ks=ks, loglik=loglik, jic=jic, chosen_k=chosen,
                            floored=floored)


def default_k_max(Y):
    """Smallest rank whose principal components explain 90% of the energy.

    Capped at min(n, p) - 1 so the scan never reaches the saturated rank.
    """
    Y = np.asarray(Y, dtype=float)
    n, p = Y.shape
    s = np.linalg.svd(Y, compute_uv=False)
    total = float(np.sum(s ** 2))
    if total == 0.0:
        raise ZeroMatrix("cannot pick a rank bound for an all-zero view")
    shares = np.cumsum(s ** 2) / total
    k = int(np.searchsorted(shares, 0.90 - 1e-15) + 1)
    return max(1, min(k, min(n, p) - 1))


def select_global_rank(singvals, k_view_hats, M, k0_max, tau1=None):
    """Gap rule for the global rank on the averaged-projection spectrum.

    Scans j from min of the per-view ranks up to ``k0_max``; among j whose
    successor singular value is below ``1/M - tau1`` it returns the j with
    the largest gap ``s_j - s_{j+1}`` (ties to the smallest j).  When no j
    qualifies, returns ``k0_max`` and emits a ``RankSelectionWarning``.
    """
    singvals = np.asarray(singvals, dtype=float)
    if tau1 is None:
        tau1 = 1.0 / (2.0 * M)
    lower = int(min(k_view_hats))
    if lower > k0_max:
        raise InvalidRange(
            f"lower bound {lower} exceeds k0_max {k0_max}")
    if k0_max > singvals.shape[0] - 1:
        raise InvalidRange(
            f"k0_max={k0_max} needs at least {k0_max + 1} singular values")
    threshold = 1.0 / M - tau1
    best_j, best_gap = None, -np.inf
    for j in range(lower, k0_max + 1):
        if singvals[j] < threshold:  # s_{j+1} in 1-based indexing
            gap = singvals[j - 1] - singvals[j]
            if gap > best_gap:
                best_j, best_gap = j, gap
    if best_j is None:
        warnings.warn("k0-constraint-unsatisfied", RankSelectionWarning,
                      stacklevel=2)
        return int(k0_max)
    return int(best_j)
