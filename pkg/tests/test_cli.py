import csv
import json

import numpy as np
import pytest

from arraynormal.cli import main
from arraynormal.io import read_npz, read_tensor


def write_cfg(path, cfg):
    path.write_text(json.dumps(cfg))
    return str(path)


def read_rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def run(*argv):
    return main([str(a) for a in argv])


SIM_FULL = {
    "seed": 3,
    "simulate": {"dims": [4, 3, 2, 10], "modes": ["exp", "imp", "good", "year"],
                 "covariances": [{"type": "ar1", "rho": 0.6}, {"type": "ar1", "rho": 0.4},
                                 {"type": "identity"}, {"type": "identity"}]},
    "sampler": {"iters": 120, "burn_in": 40, "thin": 2},
    "ppc": {"draws": 40},
}


@pytest.fixture
def sim(tmp_path):
    cfg = write_cfg(tmp_path / "cfg.json", SIM_FULL)
    assert run("simulate", "--config", cfg, "--out", tmp_path / "sim") == 0
    return tmp_path, cfg, tmp_path / "sim" / "data.tensor"


class TestSimulate:
    def test_byte_identical(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.json", {"simulate": {"dims": [2, 2]}})
        for d in ("a", "b"):
            assert run("simulate", "--config", cfg, "--seed", 11, "--out", tmp_path / d) == 0
        for f in ("data.tensor", "truth.npz", "metadata.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_missing_fraction(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.json", {"seed": 1, "simulate": {
            "dims": [3, 4, 5], "missing_fraction": 0.1}})
        assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 0
        tf = read_tensor(tmp_path / "o" / "data.tensor")
        assert tf.n_missing == round(0.1 * 60)
        assert "missing: 6\n" in (tmp_path / "o" / "data.tensor").read_text()

    def test_truth_record(self, sim):
        tmp, _, _ = sim
        arrays, meta = read_npz(tmp / "sim" / "truth.npz")
        assert int(arrays["seed"]) == 3 and meta["modes"][0] == "exp"
        np.testing.assert_allclose(arrays["Sigma_0"][0, 1], 0.6)

    def test_seed_required(self, tmp_path):
        assert run("simulate", "--out", tmp_path / "o") == 2

    def test_bad_config(self, tmp_path):
        (tmp_path / "c.json").write_text("{nope")
        assert run("simulate", "--seed", 1, "--config", tmp_path / "c.json",
                   "--out", tmp_path / "o") == 2
        cfg = write_cfg(tmp_path / "d.json", {"bogus": 1})
        assert run("simulate", "--seed", 1, "--config", cfg, "--out", tmp_path / "o") == 2


class TestFitMle:
    def test_pipeline_recovers_correlations(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.json", {"seed": 5, "simulate": {
            "dims": [3, 2, 2000], "covariances": [{"type": "ar1", "rho": 0.7},
                                                  {"type": "exchangeable", "rho": 0.4}, None]}})
        assert run("simulate", "--config", cfg, "--out", tmp_path / "s") == 0
        assert run("fit-mle", "--config", cfg, "--data", tmp_path / "s" / "data.tensor",
                   "--out", tmp_path / "m") == 0
        rep = json.loads((tmp_path / "m" / "report.json").read_text())
        i = np.arange(3)
        np.testing.assert_allclose(rep["correlations"]["mode1"],
                                   0.7 ** np.abs(i[:, None] - i[None, :]), atol=0.05)
        np.testing.assert_allclose(rep["correlations"]["mode2"], [[1, 0.4], [0.4, 1]], atol=0.05)

    def test_identity_data(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.json", {"seed": 2, "simulate": {"dims": [3, 3, 500]}})
        run("simulate", "--config", cfg, "--out", tmp_path / "s")
        assert run("fit-mle", "--data", tmp_path / "s" / "data.tensor", "--out", tmp_path / "m") == 0
        rep = json.loads((tmp_path / "m" / "report.json").read_text())
        for R in rep["correlations"].values():
            np.testing.assert_allclose(R, np.eye(3), atol=0.1)
        trace = [float(r[1]) for r in read_rows(tmp_path / "m" / "loglik_trace.csv")[1:]]
        assert np.all(np.diff(trace) >= -1e-9)

    def test_inits_agree(self, sim):
        tmp, _, data = sim
        covs = []
        for init in ("identity", "sample-moment"):
            cfg = write_cfg(tmp / f"{init}.json", {"mle": {"init": init, "rel_tol": 1e-13}})
            assert run("fit-mle", "--config", cfg, "--data", data, "--out", tmp / init) == 0
            rep = json.loads((tmp / init / "report.json").read_text())
            C = np.array(1.0)
            for name in ("exp", "imp", "good"):
                C = np.kron(np.array(rep["covariances"][name]), C)
            covs.append(C)
        assert np.linalg.norm(covs[0] - covs[1]) / np.linalg.norm(covs[0]) < 1e-6

    def test_missing_data_is_data_error(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.json", {"seed": 1, "simulate": {
            "dims": [3, 40], "missing_fraction": 0.05}})
        run("simulate", "--config", cfg, "--out", tmp_path / "s")
        assert run("fit-mle", "--data", tmp_path / "s" / "data.tensor", "--out", tmp_path / "m") == 3

    def test_bad_data_file(self, tmp_path):
        (tmp_path / "x.tensor").write_text("garbage")
        assert run("fit-mle", "--data", tmp_path / "x.tensor", "--out", tmp_path / "m") == 3


class TestFitBayes:
    def test_fixed_seed_identical(self, sim):
        tmp, cfg, data = sim
        for d in ("a", "b"):
            assert run("fit-bayes", "--config", cfg, "--data", data, "--out", tmp / d) == 0
        for f in ("trace.csv", "chain.npz", "ess.csv", "metadata.json"):
            assert (tmp / "a" / f).read_bytes() == (tmp / "b" / f).read_bytes()
        meta = json.loads((tmp / "a" / "metadata.json").read_text())
        assert meta["seed"] == 3 and "PCG64" in meta["rng"] and len(meta["config_hash"]) == 64

    def test_ess_table(self, sim):
        tmp, cfg, data = sim
        run("fit-bayes", "--config", cfg, "--data", data, "--out", tmp / "f")
        names = [r[0] for r in read_rows(tmp / "f" / "ess.csv")[1:]]
        assert {"gamma0", "gamma_exp", "gamma_imp", "gamma_good"} <= set(names)

    def test_reduced_model_outputs(self, sim):
        tmp, _, data = sim
        cfg = dict(SIM_FULL, model={"identity_modes": [1, "imp"]})
        path = write_cfg(tmp / "red.json", cfg)
        assert run("fit-bayes", "--config", path, "--data", data, "--out", tmp / "r") == 0
        arrays, _ = read_npz(tmp / "r" / "chain.npz")
        assert "Sigma_0" not in arrays and "Sigma_1" not in arrays and "Sigma_2" in arrays
        header = read_rows(tmp / "r" / "trace.csv")[0]
        assert "gamma_exp" not in header and "gamma_imp" not in header
        assert "gamma_good" in header

    def test_flag_overrides_change_hash(self, sim):
        tmp, cfg, data = sim
        run("fit-bayes", "--config", cfg, "--data", data, "--out", tmp / "a")
        run("fit-bayes", "--config", cfg, "--data", data, "--out", tmp / "b", "--iters", 130)
        ha = json.loads((tmp / "a" / "metadata.json").read_text())["config_hash"]
        hb = json.loads((tmp / "b" / "metadata.json").read_text())["config_hash"]
        assert ha != hb

    def test_parallel_chains(self, sim):
        tmp, cfg, data = sim
        assert run("fit-bayes", "--config", cfg, "--data", data, "--out", tmp / "p",
                   "--chains", 2) == 0
        t1 = (tmp / "p" / "chain_1" / "trace.csv").read_bytes()
        t2 = (tmp / "p" / "chain_2" / "trace.csv").read_bytes()
        assert t1 != t2
        run("fit-bayes", "--config", cfg, "--data", data, "--out", tmp / "q", "--chains", 2)
        assert (tmp / "q" / "chain_1" / "trace.csv").read_bytes() == t1

    def test_invalid_sampler_settings(self, sim):
        tmp, cfg, data = sim
        assert run("fit-bayes", "--config", cfg, "--data", data, "--out", tmp / "x",
                   "--burn-in", 500) == 2

    def test_all_identity_rejected(self, sim):
        tmp, _, data = sim
        path = write_cfg(tmp / "c.json", dict(SIM_FULL, model={"identity_modes": [1, 2, 3]}))
        assert run("fit-bayes", "--config", path, "--data", data, "--out", tmp / "x") == 2


class TestPpcAndSummarize:
    def test_ppc_outputs(self, sim):
        tmp, cfg, data = sim
        run("fit-bayes", "--config", cfg, "--data", data, "--out", tmp / "f")
        assert run("ppc", "--config", cfg, "--data", data, "--chain", tmp / "f",
                   "--out", tmp / "p") == 0
        rows = read_rows(tmp / "p" / "ppc_summary.csv")
        assert [r[0] for r in rows[1:]] == ["exp", "imp", "good"]
        pred = read_rows(tmp / "p" / "ppc_predictive.csv")
        assert pred[0] == ["draw", "t_exp", "t_imp", "t_good"] and len(pred) == 41
        for r in rows[1:]:
            assert 0.0 <= float(r[3]) <= 1.0

    def test_ppc_singular_statistic(self, tmp_path):
        # two replicates cannot give a full-rank 4 x 4 scatter
        cfg = write_cfg(tmp_path / "c.json", {"seed": 1, "simulate": {"dims": [4, 1, 2]},
                                              "sampler": {"iters": 30, "burn_in": 10, "thin": 1},
                                              "ppc": {"draws": 5, "modes": [1]}})
        run("simulate", "--config", cfg, "--out", tmp_path / "s")
        data = tmp_path / "s" / "data.tensor"
        assert run("fit-bayes", "--config", cfg, "--data", data, "--out", tmp_path / "f") == 0
        assert run("ppc", "--config", cfg, "--data", data, "--chain", tmp_path / "f",
                   "--out", tmp_path / "p") == 4

    def test_ppc_dims_mismatch(self, sim, tmp_path):
        tmp, cfg, data = sim
        run("fit-bayes", "--config", cfg, "--data", data, "--out", tmp / "f")
        other = write_cfg(tmp_path / "o.json", {"seed": 1, "simulate": {"dims": [2, 5]}})
        run("simulate", "--config", other, "--out", tmp_path / "s2")
        assert run("ppc", "--config", cfg, "--data", tmp_path / "s2" / "data.tensor",
                   "--chain", tmp / "f", "--out", tmp / "p") == 3

    def test_summarize_identity_truth(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.json", {
            "seed": 8, "simulate": {"dims": [3, 400], "modes": ["site", "rep"],
                                    "labels": {"site": ["north", "east", "west"]}},
            "sampler": {"iters": 400, "burn_in": 100, "thin": 2}})
        run("simulate", "--config", cfg, "--out", tmp_path / "s")
        run("fit-bayes", "--config", cfg, "--data", tmp_path / "s" / "data.tensor",
            "--out", tmp_path / "f")
        for d in ("a", "b"):
            assert run("summarize", "--chain", tmp_path / "f", "--out", tmp_path / d) == 0
        eig = [float(r[1]) for r in read_rows(tmp_path / "a" / "eigenvalues_site.csv")[1:]]
        np.testing.assert_allclose(eig, 1.0, atol=0.2)
        corr = read_rows(tmp_path / "a" / "corr_site.csv")
        assert corr[0] == ["", "north", "east", "west"]
        assert [r[0] for r in corr[1:]] == ["north", "east", "west"]
        for f in ("eigenvectors_site.csv", "corr_site.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_summarize_missing_chain(self, tmp_path):
        assert run("summarize", "--chain", tmp_path / "nope", "--out", tmp_path / "o") == 3
