"""Seeded generative designs, the replicate runner, and scoring.

Scenario layout follows the experimental setup: per-view loadings have
i.i.d. centered Gaussian entries with view-specific scale, residual
variances are uniform on a positive interval, and each view selects a
subset of the global factors through a Boolean matrix built by dealing
factors round-robin across views and filling leftover capacity at random.

Every replicate derives its own streams from (seed, replicate), so a batch
is reproducible at any worker count and each replicate can be re-run in
isolation.
"""

import time
from configparser import ConfigParser
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .covariance import CovarianceBlocks
from .errors import (
    DimensionMismatch,
    InfeasibleAssignment,
    UsageError,
    ZeroTruth,
)
from .estimator import fit_views
from .intervals import METHOD_BVM, METHOD_CLT, interval_matrix
from .types import MultiViewDataset, TrueModel, dumps_canonical


@dataclass
class SimConfig:
    """Scenario description; defaults give the desk-scale balanced design."""

    n: int = 500
    M: int = 3
    p: list = field(default_factory=lambda: [200, 200, 200])
    k: list = field(default_factory=lambda: [6, 6, 6])
    k0: int = 9
    psi: list = field(default_factory=lambda: [0.5, 0.5, 0.5])
    sigma_range: tuple = (5.0, 10.0)
    reps: int = 50
    seed: int = 0
    alpha: float = 0.05
    submatrix: int = 100
    use_true_ranks: bool = False
    baseline: bool = False

    def check(self):
        if len(self.p) != self.M or len(self.k) != self.M or len(self.psi) != self.M:
            raise UsageError("p, k and psi must each have one entry per view")
        if not max(self.k) <= self.k0 <= sum(self.k):
            raise UsageError("need max(k) <= k0 <= sum(k)")
        if self.sigma_range[0] <= 0 or self.sigma_range[1] < self.sigma_range[0]:
            raise UsageError("sigma_range must be an increasing positive interval")
        return self


def generate_true_model(config, seed):
    """Draw ground-truth parameters for one replicate.

    Factor assignment deals global factors round-robin over views (so
    every factor is active somewhere), then fills remaining per-view
    capacity with distinct randomly chosen factors.
    """
    config.check()
    if sum(config.k) < config.k0:
        raise InfeasibleAssignment("sum of view ranks is below the global rank")
    rng = _rng.stream(seed, _rng.TRUE_MODEL)
    M, k0 = config.M, config.k0

    assigned = [set() for _ in range(M)]
    view = 0
    for f in range(k0):
        hops = 0
        while len(assigned[view % M]) >= config.k[view % M]:
            view += 1
            hops += 1
            if hops > M:
                raise InfeasibleAssignment("ran out of view capacity")
        assigned[view % M].add(f)
        view += 1
    for m in range(M):
        free = np.array(sorted(set(range(k0)) - assigned[m]), dtype=int)
        need = config.k[m] - len(assigned[m])
        if need > 0:
            extra = rng.choice(free, size=need, replace=False)
            assigned[m].update(int(f) for f in extra)

    selectors = []
    for m in range(M):
        A = np.zeros((k0, config.k[m]))
        for col, f in enumerate(sorted(assigned[m])):
            A[f, col] = 1.0
        selectors.append(A)

    loadings = [rng.standard_normal((config.p[m], config.k[m])) * config.psi[m]
                for m in range(M)]
    sigmas = [rng.uniform(config.sigma_range[0], config.sigma_range[1],
                          size=config.p[m]) for m in range(M)]
    factors = rng.standard_normal((config.n, k0))
    return TrueModel(loadings=loadings, selectors=selectors,
                     residual_variances=sigmas,
                     loading_scales=list(config.psi), factors=factors)


def generate_data(model, n, seed, noiseless=False):
    """Observed views under the model; per-column Gaussian noise.

    When ``n`` matches the model's factor rows those factors are used;
    otherwise fresh standard-normal factor rows are drawn (held-out data).
    """
    M = model.n_views
    if n == model.factors.shape[0]:
        factors = model.factors
    else:
        factors = _rng.stream(seed, _rng.DATA_GEN, M).standard_normal(
            (n, model.factors.shape[1]))
    views = []
    for m in range(M):
        signal = factors @ model.selectors[m] @ model.loadings[m].T
        if noiseless:
            views.append(signal)
            continue
        rng = _rng.stream(seed, _rng.DATA_GEN, m)
        noise = rng.standard_normal((n, model.loadings[m].shape[0]))
        views.append(signal + noise * np.sqrt(model.residual_variances[m])[None, :])
    return MultiViewDataset(views=views)


def rel_frobenius_error(estimate, truth):
    """Frobenius norm of the difference over the Frobenius norm of the truth."""
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise DimensionMismatch(f"shapes differ: {estimate.shape} vs {truth.shape}")
    denom = float(np.linalg.norm(truth))
    if denom == 0.0:
        raise ZeroTruth("reference matrix has zero norm")
    return float(np.linalg.norm(estimate - truth)) / denom


def empirical_coverage(fit, model, alpha=0.05, method=METHOD_CLT,
                       submatrix_size=100, seed=0, rho_override=None):
    """Fraction of covered entries on random submatrices of each block.

    Row and column index sets are drawn (seeded) per block in a fixed
    order: intra blocks by view, then inter blocks by pair.  Truth values
    come from the selector-embedded loadings, so intra entries are inner
    products of true loading rows and inter entries route through the
    shared-factor overlap.  ``rho_override`` forces the inflation factor of
    both sides (the probe for the uncorrected posterior).
    """
    M = fit.n_views
    rng = _rng.stream(seed, _rng.COVERAGE_SUBSET)
    intra = []
    embedded = [model.embedded_loadings(m) for m in range(M)]
    for m in range(M):
        p = fit.posteriors[m].lambda_hat.shape[0]
        size = min(submatrix_size, p)
        rows = np.sort(rng.choice(p, size=size, replace=False))
        cols = np.sort(rng.choice(p, size=size, replace=False))
        truth = embedded[m][rows] @ embedded[m][cols].T
        mat = interval_matrix(fit, m, m, alpha, method, rows, cols,
                              rho_m=rho_override, rho_m_prime=rho_override)
        intra.append(float(np.mean(mat.covers(truth))))
    inter = {}
    for m in range(M):
        for mp in range(m + 1, M):
            p_a = fit.posteriors[m].lambda_hat.shape[0]
            p_b = fit.posteriors[mp].lambda_hat.shape[0]
            rows = np.sort(rng.choice(p_a, size=min(submatrix_size, p_a), replace=False))
            cols = np.sort(rng.choice(p_b, size=min(submatrix_size, p_b), replace=False))
            truth = embedded[m][rows] @ embedded[mp][cols].T
            mat = interval_matrix(fit, m, mp, alpha, method, rows, cols,
                                  rho_m=rho_override, rho_m_prime=rho_override)
            inter[(m, mp)] = float(np.mean(mat.covers(truth)))
    return {"intra": intra, "inter": inter}


def concat_pca_baseline(dataset, k0):
    """Concatenated-PCA covariance baseline (not part of the method).

    Stacks all views, takes the top-k0 principal subspace, reads loadings
    off the scaled right singular vectors, and sets per-column noise to
    mean squared residuals.  Returned in the same factored-block form as
    the model estimates for side-by-side scoring.
    """
    from .spectral import truncated_svd

    n = dataset.n_samples
    Y = np.concatenate(dataset.views, axis=1)
    svd = truncated_svd(Y, k0)
    factors = np.sqrt(n) * svd.U
    lam = Y.T @ factors / n
    resid = Y - factors @ lam.T
    noise = np.maximum(np.mean(resid * resid, axis=0), 1e-12)
    loadings, noises, start = [], [], 0
    for view in dataset.views:
        stop = start + view.shape[1]
        loadings.append(lam[start:stop])
        noises.append(noise[start:stop])
        start = stop
    return CovarianceBlocks(loadings=loadings, noise=noises)


@dataclass
class SimReport:
    """Replicate-level metrics plus aggregates.

    ``replicates`` holds one flat metric dict per replicate (deterministic
    content only); ``wall_times`` is kept separate so exports stay
    byte-reproducible across runs.  ``errors`` maps replicate index to the
    failure message for replicates that did not finish.
    """

    config: dict
    replicates: list
    wall_times: list
    errors: dict
    aggregates: dict

    def to_json(self, include_timings=False):
        doc = {
            "config": self.config,
            "replicates": self.replicates,
            "errors": {str(k): v for k, v in self.errors.items()},
            "aggregates": self.aggregates,
        }
        if include_timings:
            doc["wall_times"] = self.wall_times
        return dumps_canonical(doc)


def _replicate_metrics(config, fit, model, rep_seed):
    embedded = [model.embedded_loadings(m) for m in range(config.M)]
    lam = [post.lambda_hat for post in fit.posteriors]
    out = {}
    est_cat = np.concatenate(lam, axis=0)
    truth_cat = np.concatenate(embedded, axis=0)
    out["rel_frob_overall"] = rel_frobenius_error(
        est_cat @ est_cat.T, truth_cat @ truth_cat.T)
    for m in range(config.M):
        out[f"rel_frob_intra_{m}"] = rel_frobenius_error(
            lam[m] @ lam[m].T, embedded[m] @ embedded[m].T)
    for m in range(config.M):
        for mp in range(m + 1, config.M):
            out[f"rel_frob_inter_{m}_{mp}"] = rel_frobenius_error(
                lam[m] @ lam[mp].T, embedded[m] @ embedded[mp].T)
    for method in (METHOD_CLT, METHOD_BVM):
        cov = empirical_coverage(fit, model, alpha=config.alpha, method=method,
                                 submatrix_size=config.submatrix, seed=rep_seed)
        for m, val in enumerate(cov["intra"]):
            out[f"coverage_intra_{method}_{m}"] = val
        for (m, mp), val in cov["inter"].items():
            out[f"coverage_inter_{method}_{m}_{mp}"] = val
    out["factor_multiplicity"] = [
        int(v) for v in sum(A @ A.T for A in model.selectors).diagonal()]
    out["k0_hat"] = int(fit.ranks.k0)
    out["k_hat"] = [int(k) for k in fit.ranks.k_per_view]
    return out


def run_replicate(config, rep):
    """One end-to-end replicate: generate, fit, score.  Pure in (config, rep)."""
    rep_seed = int(_rng.stream(config.seed, _rng.REPLICATE, 0, rep)
                   .integers(0, 2 ** 63))
    model = generate_true_model(config, rep_seed)
    data = generate_data(model, config.n, rep_seed)
    t0 = time.perf_counter()
    fit = fit_views(
        data,
        k0=config.k0 if config.use_true_ranks else None,
        k_per_view=list(config.k) if config.use_true_ranks else None,
        seed=rep_seed,
        keep_bases=False,
    )
    wall = time.perf_counter() - t0
    metrics = _replicate_metrics(config, fit, model, rep_seed)
    if config.baseline:
        base = concat_pca_baseline(data, fit.ranks.k0)
        est = np.concatenate(base.loadings, axis=0)
        truth = np.concatenate(
            [model.embedded_loadings(m) for m in range(config.M)], axis=0)
        metrics["rel_frob_overall_pca_baseline"] = rel_frobenius_error(
            est @ est.T, truth @ truth.T)
    return metrics, wall


def run_experiment(config):
    """Run all replicates and aggregate; failures are recorded, not raised."""
    config.check()

    def one(rep):
        try:
            return rep, run_replicate(config, rep), None
        except Exception as exc:  # noqa: BLE001 - recorded per replicate
            return rep, None, f"{type(exc).__name__}: {exc}"

    results = _rng.parallel_map(one, range(config.reps))
    replicates, wall_times, errors = [], [], {}
    for rep, payload, err in results:
        if err is not None:
            errors[rep] = err
            continue
        metrics, wall = payload
        metrics = dict(metrics)
        metrics["replicate"] = rep
        replicates.append(metrics)
        wall_times.append(wall)

    scalar_keys = sorted({
        key for rep in replicates for key, val in rep.items()
        if isinstance(val, float)})
    aggregates = {"medians": {}, "means": {}}
    for key in scalar_keys:
        vals = np.array([rep[key] for rep in replicates if key in rep])
        aggregates["medians"][key] = float(np.median(vals))
        aggregates["means"][key] = float(np.mean(vals))

    return SimReport(
        config={
            "n": config.n, "M": config.M, "p": list(config.p),
            "k": list(config.k), "k0": config.k0, "psi": list(config.psi),
            "sigma_range": list(config.sigma_range), "reps": config.reps,
            "seed": config.seed, "alpha": config.alpha,
            "submatrix": config.submatrix,
            "use_true_ranks": config.use_true_ranks,
            "baseline": config.baseline,
        },
        replicates=replicates,
        wall_times=wall_times,
        errors=errors,
        aggregates=aggregates,
    )


def report_to_csv(report, path, include_timings=False):
    """Long-format export: one row per replicate per scalar metric."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["replicate", "metric", "value"])
        for rep in report.replicates:
            idx = rep["replicate"]
            for key in sorted(rep):
                if isinstance(rep[key], float):
                    writer.writerow([idx, key, "%.17g" % rep[key]])
        if include_timings:
            for i, wall in enumerate(report.wall_times):
                writer.writerow([report.replicates[i]["replicate"],
                                 "wall_time", "%.17g" % wall])


_LIST_KEYS = {"p", "k", "psi"}
_INT_KEYS = {"n", "M", "k0", "reps", "seed", "submatrix"}
_FLOAT_KEYS = {"alpha", "sigma_lo", "sigma_hi"}
_BOOL_KEYS = {"use_true_ranks", "baseline"}


def read_sim_config(path):
    """Parse a key=value scenario file (a [sim] section header is optional).

    Keys mirror the config fields: n, M, p, k, k0, psi, sigma_lo,
    sigma_hi, reps, seed, alpha, submatrix, use_true_ranks, baseline.
    List values are comma-separated.
    """
    with open(path) as fh:
        text = fh.read()
    parser = ConfigParser()
    if not text.lstrip().startswith("["):
        text = "[sim]\n" + text
    parser.read_string(text)
    section = parser[parser.sections()[0]] if parser.sections() else parser["DEFAULT"]

    kwargs = {}
    sigma = list(SimConfig().sigma_range)
    for key, raw in section.items():
        if key == "m":  # section keys arrive lowercased
            key = "M"
        if key in _LIST_KEYS:
            vals = [v.strip() for v in raw.split(",") if v.strip()]
            kwargs[key] = [int(v) for v in vals] if key != "psi" else [float(v) for v in vals]
        elif key in _INT_KEYS:
            kwargs[key] = int(raw)
        elif key == "sigma_lo":
            sigma[0] = float(raw)
        elif key == "sigma_hi":
            sigma[1] = float(raw)
        elif key in _FLOAT_KEYS:
            kwargs[key] = float(raw)
        elif key in _BOOL_KEYS:
            kwargs[key] = raw.strip().lower() in ("1", "true", "yes", "on")
        else:
            raise UsageError(f"unknown scenario key {key!r}")
    kwargs["sigma_range"] = tuple(sigma)
    return SimConfig(**kwargs).check()
