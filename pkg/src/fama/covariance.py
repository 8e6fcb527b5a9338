"""Covariance point estimates, cross-view prediction, and test likelihood.

All covariance blocks stay factored as loadings plus a diagonal; the
inverse needed for conditioning and log-likelihoods is applied through the
k0 x k0 core via the Woodbury identity and the matching determinant lemma,
so nothing larger than p x k0 is ever formed.
"""

from dataclasses import dataclass

import numpy as np

from ._stats import student_t_cdf
from .errors import (
    DegenerateInput,
    DegenerateNu,
    DimensionMismatch,
    IndexOutOfRange,
    SingularCore,
    UsageError,
)


@dataclass
class CovarianceBlocks:
    """Factored intra- and inter-view covariance estimates.

    ``loadings[m]`` is the p_m x k0 posterior-mean loading matrix and
    ``noise[m]`` the positive diagonal of the residual covariance.  The
    intra block of view m is loadings[m] loadings[m]^T + diag(noise[m]);
    the inter block of (m, m') is loadings[m] loadings[m']^T.
    """

    loadings: list
    noise: list

    @property
    def n_views(self):
        return len(self.loadings)

    def _check(self, m):
        if not 0 <= m < self.n_views:
            raise IndexOutOfRange(f"view index {m} outside [0, {self.n_views})")

    def intra_dense(self, m):
        self._check(m)
        lam = self.loadings[m]
        out = lam @ lam.T
        out[np.arange(lam.shape[0]), np.arange(lam.shape[0])] += self.noise[m]
        return out

    def inter_dense(self, m, m_prime):
        """Cross block; the swapped pair is returned as the exact transpose."""
        self._check(m)
        self._check(m_prime)
        if m == m_prime:
            raise UsageError("use intra_dense for a within-view block")
        if m > m_prime:
            return self.inter_dense(m_prime, m).T
        return self.loadings[m] @ self.loadings[m_prime].T


def point_estimates(fit):
    """Covariance blocks from a fit artifact.

    Residual-variance diagonals use the posterior mean
    ``nu_n * delta_sq / (nu_n - 2)``.
    """
    loadings, noise = [], []
    for post in fit.posteriors:
        if post.nu_n <= 2.0:
            raise DegenerateNu("posterior mean of the residual variance needs nu_n > 2")
        loadings.append(post.lambda_hat)
        noise.append(post.nu_n * post.delta_sq / (post.nu_n - 2.0))
    return CovarianceBlocks(loadings=loadings, noise=noise)


def _core_solve(lam, psi, rhs):
    # Solve (lam lam^T + diag(psi)) x = rhs through the k0 x k0 core.
    psi_inv = 1.0 / psi
    B = psi_inv[:, None] * lam
    core = np.eye(lam.shape[1]) + lam.T @ B
    w = psi_inv * rhs if rhs.ndim == 1 else psi_inv[:, None] * rhs
    try:
        coef = np.linalg.solve(core, lam.T @ w)
    except np.linalg.LinAlgError as exc:
        raise SingularCore(f"k0 x k0 core solve failed: {exc}") from None
    return w - B @ coef


@dataclass
class ConditionalCovariance:
    """Conditional covariance kept factored: lam core lam^T + diag(noise)."""

    loadings: np.ndarray
    core: np.ndarray
    noise: np.ndarray

    def dense(self):
        out = self.loadings @ self.core @ self.loadings.T
        idx = np.arange(self.loadings.shape[0])
        out[idx, idx] += self.noise
        return out


def conditional_prediction(blocks, given_view, y_obs, target_view):
    """Gaussian conditional of the target view given one observed view.

    The mean is the cross block applied to the precision-weighted
    observation; the conditional covariance contracts the target's
    factored covariance by the k0 x k0 matrix
    ``I - lam_g^T (lam_g lam_g^T + Psi_g)^{-1} lam_g``.
    ``y_obs`` may be a single vector or a matrix of rows.
    """
    blocks._check(given_view)
    blocks._check(target_view)
    if given_view == target_view:
        raise UsageError("conditioning view must differ from the target view")
    y_obs = np.asarray(y_obs, dtype=float)
    lam_g = blocks.loadings[given_view]
    psi_g = blocks.noise[given_view]
    if y_obs.shape[-1] != lam_g.shape[0]:
        raise DimensionMismatch(
            f"observation width {y_obs.shape[-1]} differs from view width {lam_g.shape[0]}")
    if not np.all(np.isfinite(y_obs)):
        raise UsageError("observed values must be finite")
    lam_t = blocks.loadings[target_view]

    w = _core_solve(lam_g, psi_g, y_obs.T if y_obs.ndim == 2 else y_obs)
    mean = lam_t @ (lam_g.T @ w)
    if y_obs.ndim == 2:
        mean = mean.T

    contraction = lam_g.T @ _core_solve(lam_g, psi_g, lam_g)
    core = np.eye(lam_t.shape[1]) - contraction
    cov = ConditionalCovariance(loadings=lam_t, core=core,
                                noise=blocks.noise[target_view])
    return mean, cov


def gaussian_loglik(blocks, view_subset, test_views, per_sample=False,
                    means=None):
    """Gaussian log-likelihood of held-out rows under the factored fit.

    ``view_subset`` lists the views whose intra and inter blocks are
    assembled (in the given order); ``test_views`` supplies the matching
    held-out matrices.  The mean is fixed at zero, matching columns
    standardized at ingestion; pass training column means through
    ``means`` (one vector per requested view) to center unstandardized
    data instead.
    """
    views = list(view_subset)
    if not views:
        raise UsageError("view subset must be nonempty")
    for m in views:
        blocks._check(m)
    if len(test_views) != len(views):
        raise DimensionMismatch("one test matrix per requested view")
    if means is not None and len(means) != len(views):
        raise DimensionMismatch("one mean vector per requested view")
    mats = []
    for i, (m, mat) in enumerate(zip(views, test_views)):
        mat = np.asarray(mat, dtype=float)
        if mat.shape[1] != blocks.loadings[m].shape[0]:
            raise DimensionMismatch(
                f"test matrix for view {m} has width {mat.shape[1]}, "
                f"expected {blocks.loadings[m].shape[0]}")
        if means is not None:
            center = np.asarray(means[i], dtype=float)
            if center.shape != (mat.shape[1],):
                raise DimensionMismatch(
                    f"mean vector for view {m} must have length {mat.shape[1]}")
            mat = mat - center[None, :]
        mats.append(mat)
    rows = {mat.shape[0] for mat in mats}
    if len(rows) != 1:
        raise DimensionMismatch("test matrices must share the row count")

    lam = np.concatenate([blocks.loadings[m] for m in views], axis=0)
    psi = np.concatenate([blocks.noise[m] for m in views])
    Y = np.concatenate(mats, axis=1)
    n_t, p = Y.shape

    psi_inv = 1.0 / psi
    B = psi_inv[:, None] * lam
    core = np.eye(lam.shape[1]) + lam.T @ B
    sign, core_logdet = np.linalg.slogdet(core)
    if sign <= 0:
        raise SingularCore("low-rank core is not positive definite")
    logdet = float(np.sum(np.log(psi)) + core_logdet)

    quad_full = np.sum(Y * (psi_inv[None, :] * Y), axis=1)
    V = Y @ B
    try:
        coef = np.linalg.solve(core, V.T)
    except np.linalg.LinAlgError as exc:
        raise SingularCore(f"k0 x k0 core solve failed: {exc}") from None
    quad = quad_full - np.sum(V * coef.T, axis=1)
    rowwise = -0.5 * (p * np.log(2.0 * np.pi) + logdet + quad)
    if per_sample:
        return rowwise
    return float(np.sum(rowwise))


def paired_one_sided_t_test(diffs):
    """Upper-tail p-value of the paired t statistic on per-sample differences."""
    diffs = np.asarray(diffs, dtype=float)
    n = diffs.shape[0]
    if n < 2:
        raise DegenerateInput("need at least two paired differences")
    sd = float(np.std(diffs, ddof=1))
    if sd == 0.0:
        raise DegenerateInput("differences are all equal; the statistic is undefined")
    t_stat = float(np.mean(diffs)) / (sd / np.sqrt(n))
    return 1.0 - student_t_cdf(t_stat, n - 1)
