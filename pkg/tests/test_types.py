import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fama import errors
from fama.types import (
    FactorEstimate,
    FitArtifact,
    MultiViewDataset,
    Ranks,
    TrueModel,
    ViewPosterior,
    artifact_from_bytes,
    artifact_to_bytes,
    assert_factor_estimate_valid,
    assert_fit_artifact_valid,
    assert_ranks_valid,
    assert_true_model_valid,
    assert_view_posterior_valid,
    dumps_canonical,
    validate,
)


def test_validate_accepts_consistent_views():
    rng = np.random.default_rng(0)
    ds = MultiViewDataset(views=[rng.standard_normal((100, 5)),
                                 rng.standard_normal((100, 8))])
    validate(ds)


def test_validate_row_count_mismatch():
    rng = np.random.default_rng(0)
    ds = MultiViewDataset(views=[rng.standard_normal((100, 5)),
                                 rng.standard_normal((99, 8))])
    with pytest.raises(errors.DimensionMismatch):
        validate(ds)


def test_validate_nan_entry():
    rng = np.random.default_rng(0)
    bad = rng.standard_normal((10, 3))
    bad[4, 1] = np.nan
    with pytest.raises(errors.NonFiniteEntry):
        validate(MultiViewDataset(views=[bad]))


def test_validate_empty_cases():
    with pytest.raises(errors.EmptyView):
        validate(MultiViewDataset(views=[]))
    with pytest.raises(errors.EmptyView):
        validate(MultiViewDataset(views=[np.zeros((5, 0))]))
    with pytest.raises(errors.DimensionMismatch):
        validate(MultiViewDataset(views=[np.zeros((1, 3))]))


def test_default_view_names():
    ds = MultiViewDataset(views=[np.zeros((3, 2)), np.zeros((3, 2))])
    assert ds.view_names == ["view0", "view1"]


def test_ranks_invariants():
    assert_ranks_valid(Ranks(k0=4, k_per_view=[2, 3]), n=50, p_list=[10, 10])
    with pytest.raises(errors.UsageError):
        assert_ranks_valid(Ranks(k0=6, k_per_view=[2, 3]), n=50, p_list=[10, 10])
    with pytest.raises(errors.UsageError):
        assert_ranks_valid(Ranks(k0=2, k_per_view=[2, 3]), n=50, p_list=[10, 10])
    with pytest.raises(errors.UsageError):
        assert_ranks_valid(Ranks(k0=3, k_per_view=[2, 11]), n=50, p_list=[10, 10])


def _orthonormal(n, k, seed=0):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n, k)))
    return q


def test_factor_estimate_invariants():
    n, k0 = 40, 3
    F = np.sqrt(n) * _orthonormal(n, k0)
    fe = FactorEstimate(factors=F, view_bases=[_orthonormal(n, 2, 1)],
                        avg_projection_singvals=np.array([1.0, 0.5, 0.0]))
    assert_factor_estimate_valid(fe)
    bad = FactorEstimate(factors=F * 1.01)
    with pytest.raises(errors.UsageError):
        assert_factor_estimate_valid(bad)
    with pytest.raises(errors.UsageError):
        assert_factor_estimate_valid(FactorEstimate(
            factors=F, avg_projection_singvals=np.array([1.2, 0.1])))
    with pytest.raises(errors.UsageError):
        assert_factor_estimate_valid(FactorEstimate(
            factors=F, avg_projection_singvals=np.array([0.1, 0.9])))


def test_projection_materialization_cap():
    fe = FactorEstimate(factors=np.zeros((8, 1)), view_bases=[_orthonormal(8, 2)])
    P = fe.projection(0)
    assert np.allclose(P @ P, P, atol=1e-10)
    with pytest.raises(errors.UsageError):
        fe.projection(0, dense_max=4)


def _posterior(n=20, p=4, k0=2, seed=0):
    rng = np.random.default_rng(seed)
    tau_sq = 0.7
    return ViewPosterior(
        lambda_hat=rng.standard_normal((p, k0)),
        k_scalar=1.0 / (n + 1.0 / tau_sq),
        nu_n=1.0 + n,
        delta_sq=rng.uniform(0.5, 2.0, size=p),
        tau_sq=tau_sq,
        rho=1.25,
        nu0=1.0,
        sigma0_sq=1.0,
    )


def test_view_posterior_invariants():
    assert_view_posterior_valid(_posterior(), n=20)
    bad = _posterior()
    bad.delta_sq = bad.delta_sq.copy()
    bad.delta_sq[0] = 0.0
    with pytest.raises(errors.UsageError):
        assert_view_posterior_valid(bad, n=20)
    bad = _posterior()
    bad.rho = 0.5
    with pytest.raises(errors.UsageError):
        assert_view_posterior_valid(bad, n=20)
    bad = _posterior()
    bad.k_scalar = 1.0
    with pytest.raises(errors.UsageError):
        assert_view_posterior_valid(bad, n=20)


def test_true_model_selector_invariants():
    A = np.zeros((3, 2))
    A[0, 0] = 1.0
    A[2, 1] = 1.0
    model = TrueModel(loadings=[np.ones((4, 2))], selectors=[A],
                      residual_variances=[np.ones(4)], loading_scales=[1.0],
                      factors=np.zeros((5, 3)))
    assert_true_model_valid(model)
    emb = model.embedded_loadings(0)
    assert emb.shape == (4, 3)
    assert np.all(emb[:, 1] == 0)

    two_per_col = A.copy()
    two_per_col[1, 0] = 1.0
    with pytest.raises(errors.UsageError):
        assert_true_model_valid(TrueModel(
            loadings=[np.ones((4, 2))], selectors=[two_per_col],
            residual_variances=[np.ones(4)], loading_scales=[1.0],
            factors=np.zeros((5, 3))))
    with pytest.raises(errors.UsageError):
        assert_true_model_valid(TrueModel(
            loadings=[np.ones((4, 2))], selectors=[A],
            residual_variances=[np.zeros(4)], loading_scales=[1.0],
            factors=np.zeros((5, 3))))


def _artifact(seed=0, n=12, p_list=(5, 7), k_list=(2, 3), k0=3):
    rng = np.random.default_rng(seed)
    bases = [_orthonormal(n, k, seed + 1 + m) for m, k in enumerate(k_list)]
    F = np.sqrt(n) * _orthonormal(n, k0, seed + 50)
    posts = []
    for p in p_list:
        tau_sq = float(rng.uniform(0.2, 2.0))
        posts.append(ViewPosterior(
            lambda_hat=rng.standard_normal((p, k0)),
            k_scalar=1.0 / (n + 1.0 / tau_sq),
            nu_n=1.0 + n,
            delta_sq=rng.uniform(0.5, 3.0, size=p),
            tau_sq=tau_sq,
            rho=float(rng.uniform(1.0, 1.5)),
        ))
    sv = np.sort(rng.uniform(0.0, 1.0, size=sum(k_list)))[::-1]
    return FitArtifact(
        ranks=Ranks(k0=k0, k_per_view=list(k_list)),
        factor_estimate=FactorEstimate(factors=F, view_bases=bases,
                                       avg_projection_singvals=sv),
        posteriors=posts,
        preprocessing=[{"mode": "none"}, {"mode": "none"}],
        seed=seed,
        diagnostics={"warnings": ["w"]},
    )


def test_artifact_assertions():
    assert_fit_artifact_valid(_artifact())
    bad = _artifact()
    bad.posteriors = bad.posteriors[:1]
    with pytest.raises(errors.DimensionMismatch):
        assert_fit_artifact_valid(bad)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2 ** 32 - 1))
def test_artifact_roundtrip_bit_exact(seed):
    art = _artifact(seed=seed)
    data = artifact_to_bytes(art)
    back = artifact_from_bytes(data)
    assert back.seed == art.seed
    assert back.ranks == art.ranks
    assert np.array_equal(back.factor_estimate.factors, art.factor_estimate.factors)
    assert np.array_equal(back.factor_estimate.avg_projection_singvals,
                          art.factor_estimate.avg_projection_singvals)
    for a, b in zip(art.posteriors, back.posteriors):
        assert np.array_equal(a.lambda_hat, b.lambda_hat)
        assert np.array_equal(a.delta_sq, b.delta_sq)
        assert a.k_scalar == b.k_scalar
        assert a.tau_sq == b.tau_sq
        assert a.rho == b.rho
    assert artifact_to_bytes(back) == data


def test_artifact_schema_and_field_order():
    data = artifact_to_bytes(_artifact())
    doc = json.loads(data)
    assert doc["schema"] == "fama-fit-v1"
    assert list(doc)[:3] == ["schema", "seed", "ranks"]
    with pytest.raises(errors.UsageError):
        artifact_from_bytes(data.replace(b"fama-fit-v1", b"fama-fit-v9"))


def test_canonical_float_formatting_roundtrips():
    vals = [0.1, 1.0 / 3.0, 1e-300, 12345.678901234567, -2.2250738585072014e-308]
    text = dumps_canonical({"v": vals})
    assert json.loads(text)["v"] == vals
