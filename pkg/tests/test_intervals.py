import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fama import errors
from fama.intervals import (
    IntervalRequest,
    interval,
    interval_matrix,
    s_hat,
    t_hat,
    write_intervals_csv,
)
from fama.types import FactorEstimate, FitArtifact, Ranks, ViewPosterior


def _fit(lam_list, delta_list, n=100, rho_list=None, tau_sq=1.0):
    posts = []
    for i, (lam, d2) in enumerate(zip(lam_list, delta_list)):
        lam = np.asarray(lam, dtype=float)
        posts.append(ViewPosterior(
            lambda_hat=lam,
            k_scalar=1.0 / (n + 1.0 / tau_sq),
            nu_n=1.0 + n,
            delta_sq=np.asarray(d2, dtype=float),
            tau_sq=tau_sq,
            rho=1.0 if rho_list is None else rho_list[i],
        ))
    k0 = posts[0].lambda_hat.shape[1]
    q = np.linalg.qr(np.random.default_rng(0).standard_normal((n, k0)))[0]
    fe = FactorEstimate(factors=np.sqrt(n) * q)
    return FitArtifact(ranks=Ranks(k0=k0, k_per_view=[k0] * len(posts)),
                       factor_estimate=fe, posteriors=posts)


def test_s_hat_zero_loading_diagonal():
    fit = _fit([[[0.0, 0.0], [1.0, 0.0]]], [[1.0, 1.0]])
    assert s_hat(fit, 0, 0, 0, 0) == 0.0


def test_s_hat_orthogonal_unit_loadings():
    fit = _fit([[[1.0, 0.0], [0.0, 1.0]]], [[1.0, 1.0]])
    # distinct variables, same view: 1 + 1 + 0 + 1 = 3
    assert s_hat(fit, 0, 0, 0, 1) ** 2 == pytest.approx(3.0, rel=1e-14)


def test_s_hat_diagonal_case():
    fit = _fit([[[1.0, 0.0]]], [[2.0]])
    # 4 * 2 * 1 + 2 * 1 = 10
    assert s_hat(fit, 0, 0, 0, 0) ** 2 == pytest.approx(10.0, rel=1e-14)


def test_t_hat_cases():
    fit = _fit([[[0.0, 0.0]], [[1.0, 0.0]]], [[1.0], [1.0]])
    assert t_hat(fit, 0, 0, 0, 0, rho_m=1.0, rho_m_prime=1.0) == 0.0

    lam = [[np.sqrt(3.0), 0.0]]
    fit = _fit([lam], [[1.0]])
    assert t_hat(fit, 0, 0, 0, 0, rho_m=2.0, rho_m_prime=2.0) ** 2 == pytest.approx(48.0)

    fit = _fit([[[1.0, 0.0]], [[0.0, 1.0]]], [[1.0], [1.0]])
    assert t_hat(fit, 0, 1, 0, 0, rho_m=1.0, rho_m_prime=1.0) ** 2 == pytest.approx(2.0)


def test_t_hat_uses_fit_rho_by_default():
    fit = _fit([[[1.0, 0.0], [0.0, 1.0]]], [[1.0, 1.0]], rho_list=[1.5])
    manual = t_hat(fit, 0, 0, 0, 1, rho_m=1.5, rho_m_prime=1.5)
    assert t_hat(fit, 0, 0, 0, 1) == manual
    with pytest.raises(errors.UsageError):
        t_hat(fit, 0, 0, 0, 1, rho_m=0.5, rho_m_prime=1.0)


def test_interval_quantile_and_center():
    fit = _fit([[[1.0, 0.0], [0.5, 0.5]]], [[1.0, 2.0]], n=400)
    res = interval(fit, IntervalRequest(m=0, m_prime=0, j=0, j_prime=1,
                                        alpha=0.05, method="clt"))
    assert res.center == pytest.approx(0.5)
    z = res.half_width / res.se
    assert z == pytest.approx(1.959963985, abs=1e-8)
    assert res.se == pytest.approx(s_hat(fit, 0, 0, 0, 1) / 20.0, rel=1e-14)
    assert res.lo <= res.center <= res.hi


def test_interval_degenerate_width():
    fit = _fit([[[0.0, 0.0], [0.0, 0.0]]], [[1.0, 1.0]])
    res = interval(fit, IntervalRequest(m=0, m_prime=0, j=0, j_prime=1))
    assert res.half_width == 0.0
    assert res.lo == res.hi == res.center == 0.0


def test_interval_symmetry_in_indices():
    rng = np.random.default_rng(5)
    fit = _fit([rng.standard_normal((6, 3))], [rng.uniform(0.5, 2.0, 6)])
    for j, jp in [(0, 3), (2, 5), (1, 1)]:
        a = interval(fit, IntervalRequest(0, 0, j, jp))
        b = interval(fit, IntervalRequest(0, 0, jp, j))
        assert a.center == b.center
        assert a.half_width == b.half_width
        assert a.se == b.se


@settings(max_examples=25, deadline=None)
@given(a1=st.floats(0.01, 0.5), a2=st.floats(0.01, 0.5))
def test_half_width_monotone_in_alpha(a1, a2):
    fit = _fit([[[1.0, 0.2], [0.3, -0.4]]], [[1.0, 1.5]])
    lo, hi = sorted([a1, a2])
    wide = interval(fit, IntervalRequest(0, 0, 0, 1, alpha=lo))
    narrow = interval(fit, IntervalRequest(0, 0, 0, 1, alpha=hi))
    assert wide.half_width >= narrow.half_width


def test_matrix_single_entry_reduces_to_interval():
    rng = np.random.default_rng(6)
    fit = _fit([rng.standard_normal((5, 2))], [rng.uniform(0.5, 2.0, 5)])
    mat = interval_matrix(fit, 0, 0, 0.1, "clt", [2], [4])
    res = interval(fit, IntervalRequest(0, 0, 2, 4, alpha=0.1, method="clt"))
    ent = mat.entry(0, 0)
    assert ent.center == res.center
    assert ent.half_width == res.half_width
    assert ent.se == res.se


def test_matrix_diagonal_dispatch_matches_s_hat():
    rng = np.random.default_rng(7)
    fit = _fit([rng.standard_normal((4, 2))], [rng.uniform(0.5, 2.0, 4)])
    mat = interval_matrix(fit, 0, 0, 0.05, "clt")
    n = fit.n_samples
    for j in range(4):
        assert mat.se[j, j] == pytest.approx(
            s_hat(fit, 0, 0, j, j) / np.sqrt(n), rel=1e-14)


def test_matrix_matches_scalar_loop_bitwise():
    rng = np.random.default_rng(8)
    fit = _fit([rng.standard_normal((20, 3)), rng.standard_normal((20, 3))],
               [rng.uniform(0.5, 2.0, 20), rng.uniform(0.5, 2.0, 20)],
               rho_list=[1.2, 1.4])
    for m, mp in [(0, 0), (0, 1)]:
        for method in ("clt", "bvm"):
            mat = interval_matrix(fit, m, mp, 0.05, method)
            for i in range(20):
                for j in range(20):
                    one = interval_matrix(fit, m, mp, 0.05, method, [i], [j])
                    assert mat.center[i, j] == one.center[0, 0]
                    assert mat.half_width[i, j] == one.half_width[0, 0]
                    assert mat.se[i, j] == one.se[0, 0]


def test_matrix_bvm_rho_override():
    rng = np.random.default_rng(9)
    fit = _fit([rng.standard_normal((4, 2))], [rng.uniform(0.5, 2.0, 4)],
               rho_list=[1.5])
    tuned = interval_matrix(fit, 0, 0, 0.05, "bvm")
    forced = interval_matrix(fit, 0, 0, 0.05, "bvm", rho_m=1.0, rho_m_prime=1.0)
    assert np.all(forced.half_width <= tuned.half_width)
    assert np.allclose(tuned.half_width, 1.5 * forced.half_width, rtol=1e-12)


def test_index_and_argument_validation():
    fit = _fit([[[1.0, 0.0]]], [[1.0]])
    with pytest.raises(errors.IndexOutOfRange):
        s_hat(fit, 0, 1, 0, 0)
    with pytest.raises(errors.IndexOutOfRange):
        s_hat(fit, 0, 0, 0, 5)
    with pytest.raises(errors.IndexOutOfRange):
        interval_matrix(fit, 0, 0, 0.05, "clt", [3], None)
    with pytest.raises(errors.UsageError):
        interval(fit, IntervalRequest(0, 0, 0, 0, alpha=1.5))
    with pytest.raises(errors.UsageError):
        interval(fit, IntervalRequest(0, 0, 0, 0, method="mcmc"))


def test_plugin_scale_consistency_ladder():
    # |s_hat - s_0| shrinks along a doubling ladder, with the reference
    # scale computed from the generative truth
    from fama.estimator import fit_views
    from fama.simulate import SimConfig, generate_data, generate_true_model

    def median_gap(n, p, reps=6):
        gaps = []
        for r in range(reps):
            cfg = SimConfig(n=n, M=2, p=[p, p], k=[3, 3], k0=4,
                            psi=[1.0, 1.0], sigma_range=(2.0, 4.0), reps=1,
                            seed=700 + r)
            model = generate_true_model(cfg, cfg.seed)
            data = generate_data(model, n, cfg.seed)
            fit = fit_views(data, k0=4, k_per_view=[3, 3], keep_bases=False)
            emb = model.embedded_loadings(0)
            sig = model.residual_variances[0]
            j, jp = 0, 1
            s0_sq = (sig[jp] * emb[j] @ emb[j] + sig[j] * emb[jp] @ emb[jp]
                     + (emb[j] @ emb[jp]) ** 2
                     + (emb[j] @ emb[j]) * (emb[jp] @ emb[jp]))
            gaps.append(abs(s_hat(fit, 0, 0, j, jp) - np.sqrt(s0_sq)))
        return np.median(gaps)

    assert median_gap(800, 320) < median_gap(200, 80)


def test_csv_export_roundtrip(tmp_path):
    rng = np.random.default_rng(10)
    fit = _fit([rng.standard_normal((3, 2))], [rng.uniform(0.5, 2.0, 3)])
    mat = interval_matrix(fit, 0, 0, 0.05, "clt", [0, 2], [1])
    path = tmp_path / "iv.csv"
    write_intervals_csv(path, mat)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2
    assert rows[0]["method"] == "clt"
    assert int(rows[1]["j"]) == 2
    assert float(rows[0]["center"]) == mat.center[0, 0]
    assert float(rows[0]["lo"]) == mat.lo[0, 0]
