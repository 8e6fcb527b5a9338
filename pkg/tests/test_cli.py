import csv
import json

import numpy as np
import pytest

from fama.cli import export_correlations, main
from fama.covariance import point_estimates
from fama.intervals import interval_matrix
from fama.preprocess import save_views
from fama.simulate import SimConfig, generate_data, generate_true_model
from fama.types import (
    FactorEstimate,
    FitArtifact,
    Ranks,
    ViewPosterior,
    load_artifact,
)


@pytest.fixture()
def view_files(tmp_path):
    cfg = SimConfig(n=90, M=2, p=[15, 20], k=[2, 2], k0=3, psi=[2.0, 2.0],
                    sigma_range=(0.5, 1.0), reps=1, seed=5)
    model = generate_true_model(cfg, 5)
    data = generate_data(model, cfg.n, 5)
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    save_views(data, paths)
    return tmp_path, [str(p) for p in paths]


def _fit_artifact(tmp_path, paths, extra=()):
    out = tmp_path / "fit.json"
    rc = main(["--quiet", "fit", *paths, "--out", str(out),
               "--km", "2,2", "--k0", "3", "--seed", "3", *extra])
    assert rc == 0
    return out


def test_fit_command_writes_loadable_artifact(view_files):
    tmp_path, paths = view_files
    out = _fit_artifact(tmp_path, paths)
    art = load_artifact(out)
    assert art.ranks.k0 == 3
    assert "jic" not in (art.diagnostics or {})


def test_fit_command_is_deterministic(view_files):
    tmp_path, paths = view_files
    a = _fit_artifact(tmp_path, paths)
    data_a = a.read_bytes()
    b_path = tmp_path / "fit2.json"
    rc = main(["--quiet", "fit", *paths, "--out", str(b_path),
               "--km", "2,2", "--k0", "3", "--seed", "3"])
    assert rc == 0
    assert b_path.read_bytes() == data_a


def test_fit_command_auto_ranks_records_trace(view_files):
    tmp_path, paths = view_files
    out = tmp_path / "auto.json"
    rc = main(["--quiet", "fit", *paths, "--out", str(out), "--seed", "1"])
    assert rc == 0
    art = load_artifact(out)
    assert len(art.diagnostics["jic"]) == 2


def test_fit_command_preprocess_recorded(view_files):
    tmp_path, paths = view_files
    out = _fit_artifact(tmp_path, paths, extra=("--preprocess", "rank-normal"))
    art = load_artifact(out)
    assert art.preprocessing[0]["mode"] == "rank-normal"
    assert len(art.preprocessing[0]["sorted"]) == 15


def test_usage_error_exit_code(view_files, capsys):
    tmp_path, paths = view_files
    with pytest.raises(SystemExit) as exc:
        main(["--quiet", "fit", *paths, "--no-such-flag"])
    assert exc.value.code == 2
    rc = main(["--quiet", "fit", *paths])  # missing --out
    assert rc == 2
    # domain usage error surfaces as exit 2 without a traceback
    rc = main(["--quiet", "fit", *paths, "--out", str(tmp_path / "x.json"),
               "--km", "2,2", "--k0", "30"])
    assert rc == 2


def test_fit_config_file(view_files):
    tmp_path, paths = view_files
    cfg = tmp_path / "fit.ini"
    cfg.write_text(
        f"[fit]\nkm = 2,2\nk0 = 3\nseed = 3\nout = {tmp_path / 'cfg_fit.json'}\n"
        f"preprocess = standardize\n"
        f"[view a]\npath = {paths[0]}\n"
        f"[view b]\npath = {paths[1]}\n")
    rc = main(["--quiet", "fit", "--config", str(cfg)])
    assert rc == 0
    art = load_artifact(tmp_path / "cfg_fit.json")
    assert art.ranks.k0 == 3
    assert art.preprocessing[0]["mode"] == "standardize"

    # command line flags take precedence over config values
    rc = main(["--quiet", "fit", "--config", str(cfg), "--k0", "2",
               "--preprocess", "none", "--out", str(tmp_path / "cli_fit.json")])
    assert rc == 0
    art2 = load_artifact(tmp_path / "cli_fit.json")
    assert art2.ranks.k0 == 2
    assert art2.preprocessing[0]["mode"] == "none"

    bad = tmp_path / "bad.ini"
    bad.write_text("[fit]\nwrong_key = 1\n")
    assert main(["--quiet", "fit", "--config", str(bad)]) == 2
    noview = tmp_path / "noview.ini"
    noview.write_text(f"[fit]\nout = {tmp_path / 'x.json'}\n")
    assert main(["--quiet", "fit", "--config", str(noview)]) == 2


def test_data_error_exit_code(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3,NA\n")
    rc = main(["--quiet", "fit", str(bad), "--out", str(tmp_path / "x.json")])
    assert rc == 3
    missing = tmp_path / "nothere.csv"
    rc = main(["--quiet", "fit", str(missing), "--out", str(tmp_path / "x.json")])
    assert rc == 3


def test_numeric_error_exit_code(tmp_path):
    # a noiseless view defeats the prior-scale rule: numeric failure (4)
    rng = np.random.default_rng(0)
    Y = np.outer(rng.standard_normal(30), rng.standard_normal(4))
    path = tmp_path / "v.csv"
    with open(path, "w") as fh:
        for row in Y:
            fh.write(",".join("%.17g" % v for v in row) + "\n")
    rc = main(["--quiet", "fit", str(path), "--out", str(tmp_path / "x.json"),
               "--km", "1", "--k0", "1"])
    assert rc == 4


def test_intervals_command(view_files):
    tmp_path, paths = view_files
    fit_path = _fit_artifact(tmp_path, paths)
    out = tmp_path / "iv.csv"
    rc = main(["--quiet", "intervals", "--fit", str(fit_path), "--view", "0",
               "--rows", "0:3", "--cols", "1,4", "--method", "bvm",
               "--out", str(out)])
    assert rc == 0
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6
    art = load_artifact(fit_path)
    ref = interval_matrix(art, 0, 0, 0.05, "bvm", [0, 1, 2], [1, 4])
    assert float(rows[0]["center"]) == ref.center[0, 0]


def test_predict_command(view_files):
    tmp_path, paths = view_files
    fit_path = _fit_artifact(tmp_path, paths)
    out = tmp_path / "pred.csv"
    rc = main(["--quiet", "predict", "--fit", str(fit_path),
               "--given-view", "0", "--target-view", "1",
               "--data", paths[0], "--out", str(out)])
    assert rc == 0
    pred = np.loadtxt(out, delimiter=",")
    assert pred.shape == (90, 20)


def test_loglik_command(view_files, capsys):
    tmp_path, paths = view_files
    fit_path = _fit_artifact(tmp_path, paths)
    per_sample = tmp_path / "rows.csv"
    rc = main(["--quiet", "loglik", "--fit", str(fit_path), *paths,
               "--per-sample", str(per_sample)])
    assert rc == 0
    total = float(capsys.readouterr().out.strip())
    with open(per_sample, newline="") as fh:
        rows = [float(r["loglik"]) for r in csv.DictReader(fh)]
    assert len(rows) == 90
    assert total == pytest.approx(sum(rows), rel=1e-12)
    # subset form: one CSV for one view
    rc = main(["--quiet", "loglik", "--fit", str(fit_path), paths[1],
               "--subset", "1"])
    assert rc == 0
    assert float(capsys.readouterr().out.strip()) != 0.0


def test_loglik_dimension_error(view_files):
    tmp_path, paths = view_files
    fit_path = _fit_artifact(tmp_path, paths)
    rc = main(["--quiet", "loglik", "--fit", str(fit_path), paths[0],
               "--subset", "1"])
    assert rc == 3


def test_simulate_command(tmp_path, capsys):
    cfg = tmp_path / "sim.ini"
    cfg.write_text("n = 60\nM = 2\np = 12, 12\nk = 2, 2\nk0 = 3\n"
                   "psi = 1.5, 1.5\nsigma_lo = 0.5\nsigma_hi = 1.0\n"
                   "reps = 2\nseed = 4\nsubmatrix = 6\nuse_true_ranks = true\n")
    out_json = tmp_path / "report.json"
    out_csv = tmp_path / "report.csv"
    rc = main(["--quiet", "simulate", "--config", str(cfg),
               "--out-json", str(out_json), "--out-csv", str(out_csv)])
    assert rc == 0
    doc = json.loads(out_json.read_text())
    assert len(doc["replicates"]) == 2
    assert "wall_times" not in doc  # timing kept out of the canonical report
    rc = main(["--quiet", "simulate", "--config", str(cfg),
               "--out-json", str(tmp_path / "again.json")])
    assert rc == 0
    assert (tmp_path / "again.json").read_bytes() == out_json.read_bytes()


def _toy_fit(center_zero=True):
    # one entry with interval straddling zero, the rest clearly away from it
    lam = np.array([[2.0, 0.0], [0.001, 0.0], [0.0, 1.5]])
    posts = [ViewPosterior(lambda_hat=lam, k_scalar=1.0 / 101.0, nu_n=101.0,
                           delta_sq=np.array([0.5, 0.5, 0.5]), tau_sq=1.0,
                           rho=1.0)]
    q = np.linalg.qr(np.random.default_rng(0).standard_normal((100, 2)))[0]
    return FitArtifact(ranks=Ranks(k0=2, k_per_view=[2]),
                       factor_estimate=FactorEstimate(factors=10.0 * q),
                       posteriors=posts)


def test_export_correlations_diagonal_and_threshold():
    fit = _toy_fit()
    corr = export_correlations(fit, 0)
    assert np.all(np.diag(corr) == 1.0)
    assert np.array_equal(corr, corr.T)

    thresholded = export_correlations(fit, 0, threshold_by_interval=True)
    mat = interval_matrix(fit, 0, 0, 0.05, "bvm")
    straddles = (mat.lo <= 0.0) & (0.0 <= mat.hi)
    # variable 1 has a near-zero loading: its off-diagonal entries straddle 0
    assert straddles[0, 1]
    assert thresholded[0, 1] == 0.0
    assert np.all(np.diag(thresholded) == 1.0)
    plain = export_correlations(fit, 0, threshold_by_interval=False)
    assert plain[0, 1] != 0.0


def test_export_corr_command(view_files):
    tmp_path, paths = view_files
    fit_path = _fit_artifact(tmp_path, paths)
    out = tmp_path / "corr.csv"
    rc = main(["--quiet", "export-corr", "--fit", str(fit_path),
               "--view", "0", "--view2", "1", "--threshold", "--out", str(out)])
    assert rc == 0
    corr = np.loadtxt(out, delimiter=",")
    assert corr.shape == (15, 20)
    assert np.max(np.abs(corr)) <= 1.0 + 1e-12
