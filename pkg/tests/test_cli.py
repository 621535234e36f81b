import json
import os

import pytest

import constants as const
from errors import InvalidConfig
from main import main

MINIMAL = os.path.join(os.path.dirname(__file__), "..", "config_cases", "minimal.json")
FAST = ["--iters", "60", "--burnin", "20"]


@pytest.fixture
def fit_dir(tmp_path):
    out = str(tmp_path / "fit")
    assert main(["--config", MINIMAL, "fit", "--out", out, *FAST]) == 0
    return out


def read_bytes(path):
    with open(path, "rb") as file:
        return file.read()


class TestFit:
    def test_writes_every_artifact(self, fit_dir):
        for name in (const.P_ESTIMATES_FILE, const.P_DRAWS_FILE, const.P_COUNTERFACTUAL_FILE, const.P_META_FILE):
            assert os.path.isfile(os.path.join(fit_dir, name))
        with open(os.path.join(fit_dir, const.P_META_FILE)) as file:
            meta = json.load(file)
        assert meta["command"] == "fit"
        assert meta["config"]["mcmc"]["iters"] == 60
        assert set(meta["artifacts"]) == {const.P_ESTIMATES_FILE, const.P_DRAWS_FILE, const.P_COUNTERFACTUAL_FILE}

    def test_rerun_is_byte_identical(self, fit_dir, tmp_path):
        again = str(tmp_path / "again")
        assert main(["--config", MINIMAL, "fit", "--out", again, *FAST]) == 0
        for name in (const.P_DRAWS_FILE, const.P_COUNTERFACTUAL_FILE):
            assert read_bytes(os.path.join(fit_dir, name)) == read_bytes(os.path.join(again, name))

    def test_missing_covariates_file(self, tmp_path):
        with open(MINIMAL) as file:
            document = json.load(file)
        data_dir = os.path.abspath(os.path.join(os.path.dirname(MINIMAL), "data"))
        document["data"] = {key: os.path.join(data_dir, os.path.basename(path)) for key, path in document["data"].items()}
        document["data"]["covariates"] = str(tmp_path / "absent.csv")
        config = tmp_path / "run.json"
        config.write_text(json.dumps(document))
        assert main(["--config", str(config), "fit", "--out", str(tmp_path / "fit"), *FAST]) == InvalidConfig.exit_code


class TestEffects:
    def test_writes_tables_next_to_the_fit(self, fit_dir):
        assert main(["--config", MINIMAL, "effects", "--draws", fit_dir]) == 0
        effects_dir = os.path.join(fit_dir, "effects")
        for name in (const.P_ATT_FILE, const.P_FIG_ATT_FILE, const.P_HETERO_FILE, const.P_CLUSTERS_FILE):
            assert os.path.isfile(os.path.join(effects_dir, name))
        with open(os.path.join(effects_dir, const.P_ATT_FILE)) as file:
            lines = file.read().splitlines()
        assert lines[0].startswith("lag,point,lower,upper")
        assert len(lines) == 1 + 7

    def test_without_a_fit(self, tmp_path):
        code = main(["--config", MINIMAL, "effects", "--draws", str(tmp_path / "nothing")])
        assert code == InvalidConfig.exit_code


class TestCheck:
    def test_clean_fit_passes(self, fit_dir):
        assert main(["--config", MINIMAL, "check", "--draws", fit_dir]) == 0
        with open(os.path.join(fit_dir, const.P_CHECK_FILE)) as file:
            report = json.load(file)
        assert report["mask"]["violations"] == []
        assert report["kkt"]["passed"]

    def test_off_mask_draw_fails(self, fit_dir, capsys):
        with open(os.path.join(fit_dir, const.P_DRAWS_FILE), "a") as file:
            file.write("0,A,u1,u3,0.5\n")
        assert main(["--config", MINIMAL, "check", "--draws", fit_dir]) == 4
        assert "off-mask A[u1][u3]" in capsys.readouterr().out


class TestFrontDoor:
    def test_no_command(self):
        assert main([]) == InvalidConfig.exit_code

    def test_print_schema(self, capsys):
        assert main(["--print-schema"]) == 0
        assert "mcmc.iters" in capsys.readouterr().out

    def test_confounder_simulation(self, tmp_path):
        out = str(tmp_path / "sim")
        code = main(["simulate", "--design", "confounder", "--reps", "1", "--out", out])
        assert code == 0
        with open(os.path.join(out, const.P_REPORT_FILE)) as file:
            report = json.load(file)
        assert report["design"] == "confounder"
        assert report["reps"] == 1
        assert len(report["grid"]) == len(report["estimands"]) // 2

    def test_confounder_grid_from_the_config(self, tmp_path):
        config = tmp_path / "confounder.json"
        config.write_text(json.dumps({
            "simulation": {"design": "confounder", "units": 6, "tau": 2.0, "rho_grid": [0.5], "gamma_t_grid": [1.0], "gamma_y_grid": [1.0]},
        }))
        out = str(tmp_path / "sim")
        assert main(["--config", str(config), "simulate", "--reps", "1", "--out", out]) == 0
        with open(os.path.join(out, const.P_REPORT_FILE)) as file:
            report = json.load(file)
        assert len(report["grid"]) == 1
        assert {row["truth"] for row in report["estimands"]} == {2.0}
