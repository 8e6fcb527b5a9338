"""Per-variable conjugate surrogate regression.

Conditionally on the aligned factor estimate, every variable j of view m
gets an independent normal-inverse-gamma posterior over its loading row
and residual variance.  This module covers the data-adaptive prior scale,
the closed-form posterior update, the analytic coverage-correction factors,
and schedule-independent posterior sampling.
"""

import struct
from dataclasses import dataclass

import numpy as np

from . import _rng
from .errors import DegenerateVariance, NegativeDelta, NonOrthogonalFactors, UsageError
from .types import ViewPosterior

VARIANCE_FLOOR = 1e-12

# Above this variable count the pairwise inflation mean is estimated from
# a seeded random subsample of index pairs instead of the full scan.
PAIR_EXACT_MAX = 20000
PAIR_SUBSAMPLE = 10_000_000

# Full b-matrix is returned only when it stays reasonably small.
B_STORE_MAX = 4096

_ORTH_TOL = 1e-6


def tune_prior_variance(Y, basis):
    """Data-adaptive prior variance for one view.

    With ``basis`` the orthonormal leading column-space basis of the view,
    the rule divides the per-sample signal energy by the number of factors
    times the total per-sample residual energy.
    """
    Y = np.asarray(Y, dtype=float)
    n, _ = Y.shape
    k = basis.shape[1]
    signal = float(np.sum((basis.T @ Y) ** 2)) / n
    resid = max(float(np.sum(Y * Y)) / n - signal, 0.0)
    if resid < VARIANCE_FLOOR:
        raise DegenerateVariance(
            "residual energy below 1e-12; prior scale rule is undefined")
    return signal / (k * resid)


def nig_posterior(Y, factors, tau_sq, nu0=1.0, sigma0_sq=1.0):
    """Closed-form posterior for all variables of one view.

    Requires the factor columns to be orthogonal with squared norm n
    (checked to 1e-6), which reduces the ridge Gram matrix to the scalar
    ``n + 1/tau_sq``.
    """
    if tau_sq <= 0 or nu0 <= 0 or sigma0_sq <= 0:
        raise UsageError("tau_sq, nu0 and sigma0_sq must be positive")
    Y = np.asarray(Y, dtype=float)
    F = np.asarray(factors, dtype=float)
    n, k0 = F.shape
    if Y.shape[0] != n:
        raise UsageError("factor matrix and view must share the sample axis")
    gram_dev = np.max(np.abs(F.T @ F / n - np.eye(k0)))
    if gram_dev > _ORTH_TOL:
        raise NonOrthogonalFactors(
            f"factor Gram deviates from n I by {gram_dev:.2e} (> {_ORTH_TOL})")

    precision = n + 1.0 / tau_sq
    lam = Y.T @ F / precision
    nu_n = nu0 + n
    delta_sq = (nu0 * sigma0_sq + np.sum(Y * Y, axis=0)
                - precision * np.sum(lam * lam, axis=1)) / nu_n
    if np.any(delta_sq <= 0):
        raise NegativeDelta(
            "non-positive posterior scale; upstream inputs are corrupted")
    return ViewPosterior(
        lambda_hat=lam,
        k_scalar=1.0 / precision,
        nu_n=nu_n,
        delta_sq=delta_sq,
        tau_sq=tau_sq,
        rho=1.0,
        nu0=nu0,
        sigma0_sq=sigma0_sq,
    )


@dataclass
class InflationReport:
    """Pairwise variance-inflation factors and their summaries.

    ``b`` is the symmetric matrix of per-pair factors (None when the view
    is too wide to store it); ``rho`` is the mean over ordered pairs
    j <= j' with the pair-count normalization of the tuning rule;
    ``rho_max`` is the strict-mode maximum over the same range.
    """

    b: np.ndarray
    rho: float
    rho_max: float


def _pair_b(lam_sq_i, lam_sq_j, cross, delta_i, delta_j):
    num = lam_sq_i * lam_sq_j + cross ** 2
    den = delta_i * lam_sq_j + delta_j * lam_sq_i
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(den > 0.0, num / den, 0.0)
    return np.sqrt(1.0 + ratio)


def inflation_factors(post, exact_pair_count=False, seed=0, view_index=0):
    """Coverage-correction factors for one view posterior.

    The mean ``rho`` keeps the published normalization, dividing the sum
    over j <= j' by the number of strict pairs p(p-1)/2; with
    ``exact_pair_count=True`` it divides by the actual term count
    p(p+1)/2 instead.  For a single-variable view the strict-pair count is
    zero, so the exact count is used regardless.  Views wider than 20000
    variables get a seeded 10^7-pair subsample estimate of the mean.
    """
    lam = post.lambda_hat
    delta_sq = post.delta_sq
    p = lam.shape[0]
    lam_sq = np.sum(lam * lam, axis=1)
    diag_b = np.sqrt(1.0 + lam_sq / (2.0 * delta_sq))

    if p <= PAIR_EXACT_MAX:
        total = float(np.sum(diag_b))
        rho_max = float(np.max(diag_b))
        store = p <= B_STORE_MAX
        B = np.zeros((p, p)) if store else None
        block = max(1, min(p, 2 ** 22 // max(p, 1)))
        for start in range(0, p, block):
            stop = min(start + block, p)
            cross = lam[start:stop] @ lam.T
            vals = _pair_b(lam_sq[start:stop, None], lam_sq[None, :], cross,
                           delta_sq[start:stop, None], delta_sq[None, :])
            if store:
                B[start:stop] = vals
            # accumulate strictly-upper part of this row block
            cols = np.arange(p)[None, :]
            rows = np.arange(start, stop)[:, None]
            upper = cols > rows
            total += float(np.sum(vals[upper]))
            if np.any(upper):
                rho_max = max(rho_max, float(np.max(vals[upper])))
        if store:
            B[np.arange(p), np.arange(p)] = diag_b
        strict_pairs = p * (p - 1) // 2
        count = p * (p + 1) // 2
        denom = count if (exact_pair_count or strict_pairs == 0) else strict_pairs
        return InflationReport(b=B, rho=total / denom, rho_max=rho_max)

    # Subsample estimate of the pair mean, rescaled to the requested
    # normalization (mean * count / divisor).
    rng = _rng.stream(seed, _rng.PAIR_SUBSAMPLE, view_index)
    count = p * (p + 1) // 2
    draws = rng.integers(0, count, size=PAIR_SUBSAMPLE)
    # decode triangular index t -> (i <= j) uniformly over the multiset
    jj = np.floor((np.sqrt(8.0 * draws + 1.0) - 1.0) / 2.0).astype(np.int64)
    ii = (draws - jj * (jj + 1) // 2).astype(np.int64)
    cross = np.sum(lam[ii] * lam[jj], axis=1)
    vals = np.where(
        ii == jj,
        diag_b[ii],
        _pair_b(lam_sq[ii], lam_sq[jj], cross, delta_sq[ii], delta_sq[jj]))
    mean_b = float(np.mean(vals))
    denom = count if exact_pair_count else p * (p - 1) // 2
    return InflationReport(b=None, rho=mean_b * count / denom,
                           rho_max=float(np.max(vals)))


@dataclass
class PosteriorSample:
    lambda_tilde: np.ndarray
    sigma_tilde_sq: np.ndarray


_CHUNK = 256  # fixed; part of the reproducibility contract


def sample_posterior(post, rho, n_samples, seed, view_index):
    """Yield coverage-corrected posterior draws for one view.

    Each variable j owns a counter-based stream derived from
    ``(seed, view_index, j)``, with draws consumed in sample order, so the
    emitted values are identical under any thread scheduling.  With
    ``rho=1`` this is exactly the uncorrected conjugate posterior.
    """
    if n_samples < 1:
        raise UsageError("n_samples must be at least 1")
    lam = post.lambda_hat
    p, k0 = lam.shape
    scale = 2.0 / (post.nu_n * post.delta_sq)
    streams = [_rng.stream(seed, _rng.SAMPLING, view_index, j) for j in range(p)]
    std_factor = rho * np.sqrt(post.k_scalar)
    for start in range(0, n_samples, _CHUNK):
        width = min(_CHUNK, n_samples - start)
        sig = np.empty((width, p))
        lam_draw = np.empty((width, p, k0))
        for j, gen in enumerate(streams):
            sig[:, j] = 1.0 / gen.gamma(post.nu_n / 2.0, scale[j], size=width)
            z = gen.standard_normal((width, k0))
            lam_draw[:, j, :] = lam[j] + (std_factor * np.sqrt(sig[:, j]))[:, None] * z
        for t in range(width):
            yield PosteriorSample(lambda_tilde=lam_draw[t], sigma_tilde_sq=sig[t])


def collect_samples(samples):
    """Stack a sample stream into (n_samples, p, k0) and (n_samples, p)."""
    lams, sigs = [], []
    for smp in samples:
        lams.append(smp.lambda_tilde)
        sigs.append(smp.sigma_tilde_sq)
    return np.stack(lams), np.stack(sigs)


_MAGIC = b"FAMASMP1"


def write_samples(path, samples, n_samples, p, k0):
    """Stream samples to disk.

    Layout: 8-byte magic ``FAMASMP1``; three little-endian u64 fields
    (n_samples, p, k0); then per sample the p x k0 loading draw row-major
    followed by the p residual variances, all little-endian f64.
    """
    written = 0
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<QQQ", n_samples, p, k0))
        for smp in samples:
            fh.write(np.ascontiguousarray(smp.lambda_tilde, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(smp.sigma_tilde_sq, dtype="<f8").tobytes())
            written += 1
    if written != n_samples:
        raise UsageError(f"expected {n_samples} samples, wrote {written}")


def read_samples(path):
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise UsageError("not a sample stream file")
        n_samples, p, k0 = struct.unpack("<QQQ", fh.read(24))
        lam = np.empty((n_samples, p, k0))
        sig = np.empty((n_samples, p))
        for t in range(n_samples):
            lam[t] = np.frombuffer(fh.read(8 * p * k0), dtype="<f8").reshape(p, k0)
            sig[t] = np.frombuffer(fh.read(8 * p), dtype="<f8")
    return lam, sig
