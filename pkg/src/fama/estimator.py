"""End-to-end fitting: functional pipeline plus a scikit-learn estimator.

``fit_views`` runs the full procedure on a validated dataset: per-view
rank selection (unless overridden), per-view projections, projection
averaging, global-rank selection, factor estimation, prior-scale tuning,
conjugate posteriors, and coverage-correction inflation.  ``FamaEstimator``
wraps it behind the fit/predict/score surface so it composes with
scikit-learn tooling.
"""

import logging
import time
import warnings

import numpy as np
from sklearn.base import BaseEstimator

from . import _rng
from .errors import FamaWarning, UsageError
from .covariance import conditional_prediction, gaussian_loglik, point_estimates
from .posterior import inflation_factors, nig_posterior, sample_posterior, tune_prior_variance
from .preprocess import fit_preprocess
from .rank_select import default_k_max, select_global_rank, select_view_rank
from .spectral import average_projection, estimate_factors, view_projection
from .types import (
    FactorEstimate,
    FitArtifact,
    MultiViewDataset,
    Ranks,
    assert_ranks_valid,
    validate,
)

logger = logging.getLogger("fama")

RHO_MODES = ("mean", "max", "none")


def check_views(views):
    """Coerce a list of matrices (or a dataset) into a validated dataset."""
    if not isinstance(views, MultiViewDataset):
        views = MultiViewDataset(views=list(views))
    validate(views)
    return views


def fit_views(dataset, *, k0=None, k_per_view=None, k_max=None, k0_max=None,
              nu0=1.0, sigma0_sq=1.0, rho_mode="mean", exact_pair_count=False,
              seed=0, keep_bases=True, preprocessing=None):
    """Fit the full model on a dataset and return the artifact.

    Rank overrides skip the information-criterion scan entirely (no trace
    is recorded).  All randomness (only reached by the randomized SVD path
    and very wide inflation scans) derives from ``seed``; stage wall times
    go to the ``fama`` logger and never into the artifact.
    """
    if rho_mode not in RHO_MODES:
        raise UsageError(f"rho_mode must be one of {RHO_MODES}")
    dataset = check_views(dataset)
    n = dataset.n_samples
    M = dataset.n_views

    def stage(name, fn):
        t0 = time.perf_counter()
        result = fn()
        logger.info("stage %s finished in %.3f s", name, time.perf_counter() - t0)
        return result

    # Diagnostic notes come from deterministic facts (never the warning
    # machinery), so artifact bytes are identical at any worker count.
    diagnostics = {}
    notes = []
    if k_per_view is not None:
        if len(k_per_view) != M:
            raise UsageError("one rank override per view required")
        ranks_view = [int(k) for k in k_per_view]
    else:
        def run_jic():
            caps = [k_max if k_max is not None else default_k_max(Y)
                    for Y in dataset.views]
            return _rng.parallel_map(
                lambda args: select_view_rank(*args),
                list(zip(dataset.views, caps)))
        selected = stage("rank-select", run_jic)
        ranks_view = [k for k, _ in selected]
        diagnostics["jic"] = [trace.to_dict() for _, trace in selected]
        notes.extend(f"rank-select view {m}: residual variance floored"
                     for m, (_, trace) in enumerate(selected) if trace.floored)

    bases = stage("projections", lambda: _rng.parallel_map(
        lambda args: view_projection(args[0], args[1], seed=seed),
        list(zip(dataset.views, ranks_view))))

    avg = stage("averaging", lambda: average_projection(bases))
    singvals = avg.singvals
    if k0 is None:
        cap = min(sum(ranks_view), n - 1) if k0_max is None else int(k0_max)
        padded = np.concatenate([singvals, np.zeros(max(0, cap + 1 - singvals.shape[0]))])
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", FamaWarning)
            k0 = stage("global-rank", lambda: select_global_rank(
                padded, ranks_view, M, cap))
        for w in caught:
            notes.append(f"global-rank: {w.message}")
            warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    ranks = Ranks(k0=int(k0), k_per_view=ranks_view)
    assert_ranks_valid(ranks, n, dataset.n_vars)

    factors = stage("factors", lambda: estimate_factors(avg, ranks.k0))

    def fit_view(args):
        m, Y, basis = args
        tau_sq = tune_prior_variance(Y, basis)
        post = nig_posterior(Y, factors, tau_sq, nu0=nu0, sigma0_sq=sigma0_sq)
        if rho_mode == "none":
            post.rho = 1.0
        else:
            report = inflation_factors(post, exact_pair_count=exact_pair_count,
                                       seed=seed, view_index=m)
            post.rho = report.rho_max if rho_mode == "max" else report.rho
        return post

    posteriors = stage("posteriors", lambda: _rng.parallel_map(
        fit_view, [(m, Y, B) for m, (Y, B) in
                   enumerate(zip(dataset.views, bases))]))

    if notes:
        diagnostics["warnings"] = notes
    return FitArtifact(
        ranks=ranks,
        factor_estimate=FactorEstimate(
            factors=factors,
            view_bases=list(bases) if keep_bases else None,
            avg_projection_singvals=singvals),
        posteriors=list(posteriors),
        preprocessing=preprocessing,
        seed=int(seed),
        diagnostics=diagnostics,
    )


class FamaEstimator(BaseEstimator):
    """Multi-view factor model with conjugate posterior inference.

    Parameters mirror :func:`fit_views`; ``preprocess`` selects the
    ingestion transform ("none", "standardize", "rank-normal") that is
    fitted on the training views and replayed on anything passed to
    ``predict`` or ``score``.

    Attributes after ``fit``: ``artifact_`` (the full serializable fit),
    ``factors_`` (n x k0 aligned factor scores), ``ranks_``,
    ``preprocess_spec_``.
    """

    def __init__(self, k0=None, k_per_view=None, k_max=None, k0_max=None,
                 nu0=1.0, sigma0_sq=1.0, rho_mode="mean",
                 exact_pair_count=False, preprocess="none", seed=0):
        self.k0 = k0
        self.k_per_view = k_per_view
        self.k_max = k_max
        self.k0_max = k0_max
        self.nu0 = nu0
        self.sigma0_sq = sigma0_sq
        self.rho_mode = rho_mode
        self.exact_pair_count = exact_pair_count
        self.preprocess = preprocess
        self.seed = seed

    def fit(self, X, y=None):
        dataset = check_views(X)
        spec, transformed = fit_preprocess(dataset, self.preprocess)
        self.preprocess_spec_ = spec
        self.artifact_ = fit_views(
            transformed,
            k0=self.k0,
            k_per_view=self.k_per_view,
            k_max=self.k_max,
            k0_max=self.k0_max,
            nu0=self.nu0,
            sigma0_sq=self.sigma0_sq,
            rho_mode=self.rho_mode,
            exact_pair_count=self.exact_pair_count,
            seed=self.seed,
            preprocessing=spec.to_records(),
        )
        self.factors_ = self.artifact_.factor_estimate.factors
        self.ranks_ = self.artifact_.ranks
        return self

    def fit_transform(self, X, y=None):
        """Fit and return the aligned factor scores of the training samples."""
        return self.fit(X).factors_

    def _require_fit(self):
        if not hasattr(self, "artifact_"):
            raise UsageError("estimator is not fitted")

    def predict(self, y_obs, given_view, target_view):
        """Conditional mean of one view given another, per observed row.

        Observations are mapped through the stored preprocessing of the
        conditioning view first; predictions live on the model
        (preprocessed) scale of the target view.
        """
        self._require_fit()
        y_obs = np.asarray(y_obs, dtype=float)
        single = y_obs.ndim == 1
        rows = y_obs[None, :] if single else y_obs
        if self.preprocess_spec_.mode != "none":
            only = MultiViewDataset(
                views=[rows], view_names=[f"view{given_view}"])
            sub = PreprocessSubset(self.preprocess_spec_, [given_view])
            rows = sub.apply(only).views[0]
        mean, _ = conditional_prediction(
            point_estimates(self.artifact_), given_view, rows, target_view)
        return mean[0] if single else mean

    def sample(self, view_index, n_samples, seed=None):
        """Posterior sample stream for one view (coverage-corrected)."""
        self._require_fit()
        post = self.artifact_.posteriors[view_index]
        return sample_posterior(post, post.rho, n_samples,
                                self.seed if seed is None else seed, view_index)

    def loglik(self, X, view_subset=None, per_sample=False):
        """Held-out zero-mean Gaussian log-likelihood under the fit."""
        self._require_fit()
        dataset = check_views(X)
        if view_subset is None:
            view_subset = list(range(self.artifact_.n_views))
        if dataset.n_views == len(view_subset):
            mats = dataset.views
        elif dataset.n_views == self.artifact_.n_views:
            mats = [dataset.views[m] for m in view_subset]
        else:
            raise UsageError(
                "pass either all views or exactly the requested subset")
        if self.preprocess_spec_.mode != "none":
            sub = PreprocessSubset(self.preprocess_spec_, view_subset)
            mats = sub.apply(MultiViewDataset(views=mats)).views
        return gaussian_loglik(point_estimates(self.artifact_), view_subset,
                               mats, per_sample=per_sample)

    def score(self, X, y=None, view_subset=None):
        """Mean per-sample held-out log-likelihood (higher is better)."""
        rows = self.loglik(X, view_subset=view_subset, per_sample=True)
        return float(np.mean(rows))


class PreprocessSubset:
    """Apply a fitted preprocessing spec to a subset of views."""

    def __init__(self, spec, view_indices):
        from .preprocess import PreprocessSpec

        self._spec = PreprocessSpec(
            mode=spec.mode,
            stats=[spec.stats[m] for m in view_indices] if spec.mode != "none" else
                  [None] * len(view_indices))

    def apply(self, dataset):
        return self._spec.apply(dataset)
