import math

import mpmath
import numpy as np
import pytest
from scipy import integrate

from fama._stats import betainc_reg, norm_cdf, norm_ppf, student_t_cdf
from fama.errors import UsageError

mpmath.mp.dps = 40


def mp_norm_ppf(p):
    # high-precision series/iteration oracle
    return float(mpmath.sqrt(2) * mpmath.erfinv(mpmath.mpf(2) * p - 1))


def test_norm_ppf_against_high_precision_oracle():
    grid = np.concatenate([
        np.array([1e-12, 1e-9, 1e-6, 0.02425, 0.5, 0.975, 1 - 1e-6, 1 - 1e-12]),
        np.linspace(0.001, 0.999, 97),
    ])
    for p in grid:
        assert norm_ppf(float(p)) == pytest.approx(mp_norm_ppf(p), abs=1e-9)


def test_norm_ppf_standard_quantile():
    assert norm_ppf(0.975) == pytest.approx(1.959963985, abs=1e-8)


def test_norm_ppf_vectorized_matches_scalar():
    p = np.linspace(0.01, 0.99, 23)
    vec = norm_ppf(p)
    assert vec.shape == p.shape
    for i, pi in enumerate(p):
        assert vec[i] == norm_ppf(float(pi))


def test_norm_ppf_domain():
    for bad in (0.0, 1.0, -0.1, 1.1):
        with pytest.raises(UsageError):
            norm_ppf(bad)


def test_norm_cdf_roundtrip():
    for x in (-5.0, -1.0, 0.0, 0.3, 2.5):
        assert norm_ppf(norm_cdf(x)) == pytest.approx(x, abs=1e-9)


def t_density(x, df):
    c = math.gamma((df + 1) / 2) / (math.sqrt(df * math.pi) * math.gamma(df / 2))
    return c * (1 + x * x / df) ** (-(df + 1) / 2)


@pytest.mark.parametrize("df", [1, 2, 5, 9, 30, 120])
def test_student_t_cdf_against_quadrature(df):
    # oracle: numerical integration of the t density over [0, |x|] plus
    # the symmetry of the distribution
    for x in (-3.7, -1.0, -0.2, 0.0, 0.5, 1.96, 4.2):
        body, err = integrate.quad(t_density, 0.0, abs(x), args=(df,),
                                   epsabs=1e-13, epsrel=1e-13)
        assert err < 1e-9
        ref = 0.5 + body if x >= 0 else 0.5 - body
        assert student_t_cdf(x, df) == pytest.approx(ref, abs=1e-8)


def test_student_t_cdf_symmetry():
    for df in (3, 17):
        for x in (0.4, 2.2):
            assert student_t_cdf(-x, df) == pytest.approx(1 - student_t_cdf(x, df), abs=1e-14)


def test_betainc_reg_against_mpmath():
    for a, b, x in [(0.5, 0.5, 0.3), (5.0, 0.5, 0.9), (2.5, 7.0, 0.12)]:
        ref = float(mpmath.betainc(a, b, 0, x, regularized=True))
        assert betainc_reg(a, b, x) == pytest.approx(ref, abs=1e-12)


def test_student_t_cdf_bad_df():
    with pytest.raises(UsageError):
        student_t_cdf(1.0, 0)
