"""Interval estimation for entries of the low-rank covariance components.

Two interval families share the plug-in center ``lambda_hat_mj . lambda_hat_m'j'``:

* sampling-theory intervals scale a plug-in standard error ``s_hat`` by the
  normal quantile (valid for the point estimator);
* posterior-approximation intervals use ``t_hat``, which carries the
  coverage-correction inflation factors.

The vectorized matrix path and the scalar path reduce every inner product
with the same fixed-order summation, so a scalar loop reproduces the
matrix results bit-for-bit.

Calibration caveat: the asymptotic coverage guarantees hold in a regime
where the sample count grows slower than the square root of the smallest
view width.  Nothing is enforced at runtime, but interval calibration
should be treated as approximate when n exceeds sqrt(min p_m).
"""

import csv
from dataclasses import dataclass

import numpy as np

from ._stats import norm_ppf
from .errors import IndexOutOfRange, UsageError

METHOD_CLT = "clt"
METHOD_BVM = "bvm"

_CHUNK_ELEMS = 1 << 24  # cap on rows*cols*k0 temporaries


def _row_sq(A):
    return np.sum(A * A, axis=1)


def _cross(A, B):
    """Pairwise inner products with per-element fixed-order reduction."""
    r, k = A.shape
    c = B.shape[0]
    out = np.empty((r, c))
    block = max(1, _CHUNK_ELEMS // max(c * k, 1))
    for start in range(0, r, block):
        stop = min(start + block, r)
        out[start:stop] = np.sum(A[start:stop, None, :] * B[None, :, :], axis=2)
    return out


def _check_view(fit, m):
    if not 0 <= m < fit.n_views:
        raise IndexOutOfRange(f"view index {m} outside [0, {fit.n_views})")


def _check_var(fit, m, j):
    p = fit.posteriors[m].lambda_hat.shape[0]
    if not 0 <= j < p:
        raise IndexOutOfRange(f"variable index {j} outside [0, {p}) in view {m}")


def _s_sq(lam_a, d2_a, lam_b, d2_b, rows, cols, same_view):
    La, Lb = lam_a[rows], lam_b[cols]
    da, db = d2_a[rows], d2_b[cols]
    dna, dnb = _row_sq(La), _row_sq(Lb)
    cross = _cross(La, Lb)
    s_sq = (db[None, :] * dna[:, None] + da[:, None] * dnb[None, :]
            + cross ** 2 + dna[:, None] * dnb[None, :])
    if same_view:
        eq = rows[:, None] == cols[None, :]
        if np.any(eq):
            ri, ci = np.nonzero(eq)
            s_sq[ri, ci] = 4.0 * da[ri] * dna[ri] + 2.0 * dna[ri] ** 2
    return s_sq, cross


def _t_sq(lam_a, d2_a, lam_b, d2_b, rho_a, rho_b, rows, cols, same_view):
    La, Lb = lam_a[rows], lam_b[cols]
    da, db = d2_a[rows], d2_b[cols]
    dna, dnb = _row_sq(La), _row_sq(Lb)
    t_sq = (rho_b ** 2 * db[None, :] * dna[:, None]
            + rho_a ** 2 * da[:, None] * dnb[None, :])
    if same_view:
        eq = rows[:, None] == cols[None, :]
        if np.any(eq):
            ri, ci = np.nonzero(eq)
            t_sq[ri, ci] = 4.0 * rho_a ** 2 * da[ri] * dna[ri]
    return t_sq


def s_hat(fit, m, m_prime, j, j_prime):
    """Plug-in standard-deviation scale of the entry estimator."""
    _check_view(fit, m)
    _check_view(fit, m_prime)
    _check_var(fit, m, j)
    _check_var(fit, m_prime, j_prime)
    pa, pb = fit.posteriors[m], fit.posteriors[m_prime]
    s_sq, _ = _s_sq(pa.lambda_hat, pa.delta_sq, pb.lambda_hat, pb.delta_sq,
                    np.array([j]), np.array([j_prime]), m == m_prime)
    return float(np.sqrt(s_sq[0, 0]))


def t_hat(fit, m, m_prime, j, j_prime, rho_m=None, rho_m_prime=None):
    """Posterior-limit scale with coverage-correction inflation."""
    _check_view(fit, m)
    _check_view(fit, m_prime)
    _check_var(fit, m, j)
    _check_var(fit, m_prime, j_prime)
    pa, pb = fit.posteriors[m], fit.posteriors[m_prime]
    rho_a = pa.rho if rho_m is None else rho_m
    rho_b = pb.rho if rho_m_prime is None else rho_m_prime
    if rho_a < 1.0 or rho_b < 1.0:
        raise UsageError("inflation factors must be >= 1")
    t_sq = _t_sq(pa.lambda_hat, pa.delta_sq, pb.lambda_hat, pb.delta_sq,
                 rho_a, rho_b, np.array([j]), np.array([j_prime]), m == m_prime)
    return float(np.sqrt(t_sq[0, 0]))


@dataclass
class IntervalRequest:
    m: int
    m_prime: int
    j: int
    j_prime: int
    alpha: float = 0.05
    method: str = METHOD_CLT


@dataclass
class IntervalResult:
    center: float
    half_width: float
    se: float
    method: str

    @property
    def lo(self):
        return self.center - self.half_width

    @property
    def hi(self):
        return self.center + self.half_width

    def covers(self, value):
        return abs(self.center - value) <= self.half_width


def _norm_method(method):
    lowered = str(method).lower()
    if lowered not in (METHOD_CLT, METHOD_BVM):
        raise UsageError(f"unknown interval method {method!r}")
    return lowered


def interval(fit, request):
    """Symmetric interval for one covariance-component entry."""
    if not 0.0 < request.alpha < 1.0:
        raise UsageError("alpha must lie strictly inside (0, 1)")
    method = _norm_method(request.method)
    mat = interval_matrix(fit, request.m, request.m_prime, request.alpha,
                          method, [request.j], [request.j_prime])
    return mat.entry(0, 0)


@dataclass
class IntervalMatrix:
    """Vectorized intervals for a block of (j, j') pairs."""

    m: int
    m_prime: int
    rows: np.ndarray
    cols: np.ndarray
    alpha: float
    method: str
    center: np.ndarray
    se: np.ndarray
    half_width: np.ndarray

    @property
    def lo(self):
        return self.center - self.half_width

    @property
    def hi(self):
        return self.center + self.half_width

    def entry(self, i, j):
        return IntervalResult(center=float(self.center[i, j]),
                              half_width=float(self.half_width[i, j]),
                              se=float(self.se[i, j]),
                              method=self.method)

    def covers(self, truth):
        return np.abs(self.center - truth) <= self.half_width


def interval_matrix(fit, m, m_prime, alpha, method, row_subset=None,
                    col_subset=None, rho_m=None, rho_m_prime=None):
    """Intervals for all requested (j, j') pairs of one covariance block."""
    _check_view(fit, m)
    _check_view(fit, m_prime)
    if not 0.0 < alpha < 1.0:
        raise UsageError("alpha must lie strictly inside (0, 1)")
    method = _norm_method(method)
    pa, pb = fit.posteriors[m], fit.posteriors[m_prime]
    p_a, p_b = pa.lambda_hat.shape[0], pb.lambda_hat.shape[0]
    rows = np.arange(p_a) if row_subset is None else np.asarray(row_subset, dtype=int)
    cols = np.arange(p_b) if col_subset is None else np.asarray(col_subset, dtype=int)
    if rows.size and (rows.min() < 0 or rows.max() >= p_a):
        raise IndexOutOfRange(f"row subset outside [0, {p_a}) in view {m}")
    if cols.size and (cols.min() < 0 or cols.max() >= p_b):
        raise IndexOutOfRange(f"column subset outside [0, {p_b}) in view {m_prime}")

    n = fit.n_samples
    z = norm_ppf(1.0 - alpha / 2.0)
    same = m == m_prime
    if method == METHOD_CLT:
        stat_sq, cross = _s_sq(pa.lambda_hat, pa.delta_sq,
                               pb.lambda_hat, pb.delta_sq, rows, cols, same)
    else:
        rho_a = pa.rho if rho_m is None else rho_m
        rho_b = pb.rho if rho_m_prime is None else rho_m_prime
        if rho_a < 1.0 or rho_b < 1.0:
            raise UsageError("inflation factors must be >= 1")
        stat_sq = _t_sq(pa.lambda_hat, pa.delta_sq, pb.lambda_hat, pb.delta_sq,
                        rho_a, rho_b, rows, cols, same)
        cross = _cross(pa.lambda_hat[rows], pb.lambda_hat[cols])
    se = np.sqrt(stat_sq) / np.sqrt(n)
    return IntervalMatrix(m=m, m_prime=m_prime, rows=rows, cols=cols,
                          alpha=alpha, method=method, center=cross,
                          se=se, half_width=z * se)


def write_intervals_csv(path, matrices):
    """Export interval blocks to CSV.

    Columns: m, m_prime, j, j_prime, center, lo, hi, se, method.  Floats
    carry 17 significant digits so values round-trip exactly.
    """
    if isinstance(matrices, IntervalMatrix):
        matrices = [matrices]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["m", "m_prime", "j", "j_prime",
                         "center", "lo", "hi", "se", "method"])
        for mat in matrices:
            lo, hi = mat.lo, mat.hi
            for i, j_idx in enumerate(mat.rows):
                for j, jp_idx in enumerate(mat.cols):
                    writer.writerow([
                        mat.m, mat.m_prime, int(j_idx), int(jp_idx),
                        "%.17g" % mat.center[i, j],
                        "%.17g" % lo[i, j],
                        "%.17g" % hi[i, j],
                        "%.17g" % mat.se[i, j],
                        mat.method,
                    ])
