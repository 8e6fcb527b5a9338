"""Domain types shared by every module, their invariants, and artifact I/O.

All containers are plain dataclasses over float64 numpy arrays and are
treated as immutable after construction.  Each documented invariant has a
dedicated ``assert_*`` checker usable from tests; constructors stay cheap
and do not validate.

Fit artifacts serialize to a JSON document with schema tag
``"fama-fit-v1"`` and a fixed field order.  Matrices are written as
row-major nested arrays; floats are printed with 17 significant digits so
the byte stream round-trips exactly.
"""

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyView,
    NonFiniteEntry,
    UsageError,
)

SCHEMA_VERSION = "fama-fit-v1"

# Largest sample count for which an n x n projection may be materialized.
PROJECTION_DENSE_MAX = 4096


@dataclass
class MultiViewDataset:
    """Observed matrices sharing the sample axis: ``views[m]`` is n x p_m."""

    views: list
    view_names: list = None

    def __post_init__(self):
        self.views = [np.asarray(v, dtype=float) for v in self.views]
        if self.view_names is None:
            self.view_names = [f"view{m}" for m in range(len(self.views))]

    @property
    def n_views(self):
        return len(self.views)

    @property
    def n_samples(self):
        return self.views[0].shape[0] if self.views else 0

    @property
    def n_vars(self):
        return [v.shape[1] for v in self.views]


def validate(dataset):
    """Raise unless every structural invariant of the dataset holds.

    Errors: ``EmptyView`` (no views, or a view with no columns),
    ``DimensionMismatch`` (row counts differ or n < 2),
    ``NonFiniteEntry`` (NaN or infinity anywhere).
    """
    if dataset.n_views < 1:
        raise EmptyView("dataset holds no views")
    n = dataset.views[0].shape[0]
    for m, view in enumerate(dataset.views):
        if view.ndim != 2 or view.shape[1] < 1:
            raise EmptyView(f"view {m} has no columns")
        if view.shape[0] != n:
            raise DimensionMismatch(
                f"view {m} has {view.shape[0]} rows, expected {n}")
        if not np.all(np.isfinite(view)):
            raise NonFiniteEntry(f"view {m} contains NaN or infinite entries")
    if n < 2:
        raise DimensionMismatch(f"need at least 2 samples, got {n}")


@dataclass
class Ranks:
    """Global latent dimension and per-view latent dimensions."""

    k0: int
    k_per_view: list


def assert_ranks_valid(ranks, n, p_list):
    if len(ranks.k_per_view) != len(p_list):
        raise DimensionMismatch("one rank per view required")
    for k, p in zip(ranks.k_per_view, p_list):
        if not 1 <= k <= min(n, p):
            raise UsageError(f"view rank {k} outside [1, min(n, p)] = [1, {min(n, p)}]")
    if not max(ranks.k_per_view) <= ranks.k0 <= sum(ranks.k_per_view):
        raise UsageError(
            f"global rank {ranks.k0} outside [max k_m, sum k_m] = "
            f"[{max(ranks.k_per_view)}, {sum(ranks.k_per_view)}]")


@dataclass
class FactorEstimate:
    """Aligned factor matrix plus per-view projection bases.

    ``factors`` is the n x k0 estimate with columns of squared norm n.
    Projections are kept factored as orthonormal bases ``view_bases[m]``
    (n x k_m); the dense n x n form is materialized on demand only.
    ``avg_projection_singvals`` are the singular values of the averaged
    projection operator, descending.
    """

    factors: np.ndarray
    view_bases: list = None
    avg_projection_singvals: np.ndarray = None

    def projection(self, m, dense_max=PROJECTION_DENSE_MAX):
        """Dense projection matrix for view ``m`` (small n only)."""
        if self.view_bases is None:
            raise UsageError("projection bases were not retained in this estimate")
        basis = self.view_bases[m]
        n = basis.shape[0]
        if n > dense_max:
            raise UsageError(
                f"refusing to materialize a {n} x {n} projection (cap {dense_max})")
        return basis @ basis.T


def assert_factor_estimate_valid(estimate, tol_orth=1e-8, tol_sv=1e-10):
    F = estimate.factors
    n, k0 = F.shape
    gram = F.T @ F / n - np.eye(k0)
    if np.max(np.abs(gram)) > tol_orth:
        raise UsageError("factor columns are not orthogonal with squared norm n")
    if estimate.view_bases is not None:
        for m, basis in enumerate(estimate.view_bases):
            km = basis.shape[1]
            if basis.shape[0] <= PROJECTION_DENSE_MAX:
                P = basis @ basis.T
                if np.max(np.abs(P - P.T)) > 1e-12:
                    raise UsageError(f"projection {m} is not symmetric")
                if np.linalg.norm(P @ P - P) > tol_orth:
                    raise UsageError(f"projection {m} is not idempotent")
                if abs(np.trace(P) - km) > tol_orth:
                    raise UsageError(f"projection {m} trace differs from {km}")
            elif np.max(np.abs(basis.T @ basis - np.eye(km))) > tol_orth:
                raise UsageError(f"projection basis {m} is not orthonormal")
    if estimate.avg_projection_singvals is not None:
        sv = np.asarray(estimate.avg_projection_singvals)
        if np.any(sv < -tol_sv) or np.any(sv > 1.0 + tol_sv):
            raise UsageError("averaged-projection singular values outside [0, 1]")
        if np.any(np.diff(sv) > tol_sv):
            raise UsageError("averaged-projection singular values not descending")


@dataclass
class ViewPosterior:
    """Conjugate posterior for one view's loadings and residual variances.

    Row j of ``lambda_hat`` is the posterior mean loading of variable j.
    The loading covariance is ``sigma^2 * k_scalar * I`` with
    ``k_scalar = 1 / (n + 1/tau_sq)``; residual variances follow an
    inverse gamma with shape ``nu_n / 2`` and scale ``nu_n * delta_sq / 2``.
    ``rho`` is the coverage-correction inflation (1.0 when uncorrected).
    """

    lambda_hat: np.ndarray
    k_scalar: float
    nu_n: float
    delta_sq: np.ndarray
    tau_sq: float
    rho: float = 1.0
    nu0: float = 1.0
    sigma0_sq: float = 1.0


def assert_view_posterior_valid(post, n=None):
    if np.any(post.delta_sq <= 0):
        raise UsageError("delta_sq entries must be strictly positive")
    if n is None:
        n = post.nu_n - post.nu0
    if not 0.0 < post.k_scalar <= 1.0 / n:
        raise UsageError("k_scalar outside (0, 1/n]")
    if post.rho < 1.0:
        raise UsageError("rho must be >= 1")
    if abs(post.nu_n - (post.nu0 + n)) > 1e-9:
        raise UsageError("nu_n must equal nu0 + n")


@dataclass
class TrueModel:
    """Ground-truth generative parameters (simulation only).

    ``selectors[m]`` is the k0 x k_m Boolean matrix picking the global
    factors active in view m; ``loadings[m]`` is p_m x k_m.
    """

    loadings: list
    selectors: list
    residual_variances: list
    loading_scales: list
    factors: np.ndarray

    @property
    def n_views(self):
        return len(self.loadings)

    def embedded_loadings(self, m):
        """Loadings mapped into the global factor basis (p_m x k0)."""
        return self.loadings[m] @ self.selectors[m].T


def assert_true_model_valid(model):
    for m, A in enumerate(model.selectors):
        vals = np.unique(A)
        if not np.all(np.isin(vals, (0.0, 1.0))):
            raise UsageError(f"selector {m} is not Boolean")
        if not np.all(A.sum(axis=0) == 1):
            raise UsageError(f"selector {m} must have exactly one 1 per column")
        if np.any(A.sum(axis=1) > 1):
            raise UsageError(f"selector {m} must have at most one 1 per row")
    for m, s2 in enumerate(model.residual_variances):
        if np.any(np.asarray(s2) <= 0):
            raise UsageError(f"residual variances of view {m} must be positive")


@dataclass
class FitArtifact:
    """Serializable result of a full fit."""

    ranks: Ranks
    factor_estimate: FactorEstimate
    posteriors: list
    preprocessing: list = None
    seed: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_views(self):
        return len(self.posteriors)

    @property
    def n_samples(self):
        return self.factor_estimate.factors.shape[0]


def assert_fit_artifact_valid(artifact):
    ranks = artifact.ranks
    if len(artifact.posteriors) != len(ranks.k_per_view):
        raise DimensionMismatch("one posterior per view required")
    n, k0 = artifact.factor_estimate.factors.shape
    if k0 != ranks.k0:
        raise DimensionMismatch("factor matrix width differs from k0")
    for m, post in enumerate(artifact.posteriors):
        if post.lambda_hat.shape[1] != ranks.k0:
            raise DimensionMismatch(f"posterior {m} loading width differs from k0")
        if post.lambda_hat.shape[0] != post.delta_sq.shape[0]:
            raise DimensionMismatch(f"posterior {m} delta_sq length differs from p_m")
        assert_view_posterior_valid(post, n=n)
    if artifact.factor_estimate.view_bases is not None:
        for m, basis in enumerate(artifact.factor_estimate.view_bases):
            if basis.shape != (n, ranks.k_per_view[m]):
                raise DimensionMismatch(f"projection basis {m} has wrong shape")
    if not 0 <= int(artifact.seed) < 2 ** 64:
        raise UsageError("seed must fit in an unsigned 64-bit integer")


# -- JSON serialization ----------------------------------------------------

def _fmt(value, out):
    if isinstance(value, bool):
        out.write("true" if value else "false")
    elif value is None:
        out.write("null")
    elif isinstance(value, (int, np.integer)):
        out.write(str(int(value)))
    elif isinstance(value, (float, np.floating)):
        out.write("%.17g" % value)
    elif isinstance(value, str):
        out.write(json.dumps(value))
    elif isinstance(value, dict):
        out.write("{")
        for i, (key, val) in enumerate(value.items()):
            if i:
                out.write(",")
            out.write(json.dumps(str(key)))
            out.write(":")
            _fmt(val, out)
        out.write("}")
    elif isinstance(value, np.ndarray):
        _fmt(value.tolist(), out)
    elif isinstance(value, (list, tuple)):
        out.write("[")
        for i, val in enumerate(value):
            if i:
                out.write(",")
            _fmt(val, out)
        out.write("]")
    else:
        raise TypeError(f"cannot serialize {type(value)!r}")


def dumps_canonical(obj):
    """Render a JSON document with fixed field order and 17-digit floats."""
    out = io.StringIO()
    _fmt(obj, out)
    return out.getvalue()


def artifact_to_dict(artifact):
    fe = artifact.factor_estimate
    return {
        "schema": SCHEMA_VERSION,
        "seed": int(artifact.seed),
        "ranks": {"k0": int(artifact.ranks.k0),
                  "k_per_view": [int(k) for k in artifact.ranks.k_per_view]},
        "factors": fe.factors,
        "view_bases": None if fe.view_bases is None else list(fe.view_bases),
        "avg_projection_singvals": fe.avg_projection_singvals,
        "posteriors": [
            {
                "lambda_hat": p.lambda_hat,
                "k_scalar": float(p.k_scalar),
                "nu_n": float(p.nu_n),
                "delta_sq": p.delta_sq,
                "tau_sq": float(p.tau_sq),
                "rho": float(p.rho),
                "nu0": float(p.nu0),
                "sigma0_sq": float(p.sigma0_sq),
            }
            for p in artifact.posteriors
        ],
        "preprocessing": artifact.preprocessing,
        "diagnostics": artifact.diagnostics or None,
    }


def artifact_to_bytes(artifact):
    return dumps_canonical(artifact_to_dict(artifact)).encode("ascii")


def artifact_from_dict(doc):
    if doc.get("schema") != SCHEMA_VERSION:
        raise UsageError(f"unsupported artifact schema {doc.get('schema')!r}")
    bases = doc.get("view_bases")
    fe = FactorEstimate(
        factors=np.asarray(doc["factors"], dtype=float),
        view_bases=None if bases is None else [np.asarray(b, dtype=float) for b in bases],
        avg_projection_singvals=(
            None if doc.get("avg_projection_singvals") is None
            else np.asarray(doc["avg_projection_singvals"], dtype=float)),
    )
    posteriors = [
        ViewPosterior(
            lambda_hat=np.asarray(p["lambda_hat"], dtype=float),
            k_scalar=p["k_scalar"],
            nu_n=p["nu_n"],
            delta_sq=np.asarray(p["delta_sq"], dtype=float),
            tau_sq=p["tau_sq"],
            rho=p["rho"],
            nu0=p["nu0"],
            sigma0_sq=p["sigma0_sq"],
        )
        for p in doc["posteriors"]
    ]
    return FitArtifact(
        ranks=Ranks(k0=doc["ranks"]["k0"], k_per_view=list(doc["ranks"]["k_per_view"])),
        factor_estimate=fe,
        posteriors=posteriors,
        preprocessing=doc.get("preprocessing"),
        seed=doc.get("seed", 0),
        diagnostics=doc.get("diagnostics") or {},
    )


def artifact_from_bytes(data):
    return artifact_from_dict(json.loads(data.decode("ascii")))


def save_artifact(artifact, path):
    with open(path, "wb") as fh:
        fh.write(artifact_to_bytes(artifact))


def load_artifact(path):
    with open(path, "rb") as fh:
        return artifact_from_bytes(fh.read())
