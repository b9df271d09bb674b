import json

import numpy as np
import pytest

from fcms.cli import DEFAULT_T_MAX, main
from fcms.config import RunConfig, parse_config
from fcms.core import ReducedState, simulate
from fcms.errors import ParameterError
from fcms.io import EWS_SCHEMA, TRAJECTORY_SCHEMA, emit_csv, emit_json, format_value, read_csv
from fcms.spectral import spectral_report


class TestConfig:
    def test_defaults(self):
        cfg = parse_config()
        assert cfg == RunConfig()
        p = cfg.model_params()
        assert (p.beta, p.gamma, p.eta, p.alpha, p.noise_sigma) == (0.5, 0.1, 0.01, (), 0.0)
        assert spectral_report(p).beta_c == pytest.approx(1.58114, abs=1e-5)

    def test_layering(self, tmp_path):
        f = tmp_path / "run.cfg"
        f.write_text("# comment\nbeta = 1.2\ngamma = 0.2  # inline\nbetas = 0.5, 1.0\n")
        cfg = parse_config(f, {"beta": "1.65", "t-max": "10"})
        assert cfg.beta == 1.65 and cfg.gamma == 0.2 and cfg.t_max == 10
        assert cfg.betas == (0.5, 1.0)

    def test_gamma_bound(self):
        with pytest.raises(ParameterError) as info:
            parse_config(overrides={"gamma": "1.5"})
        assert info.value.field == "gamma" and "0 < gamma < 1" in str(info.value)

    def test_unknown_key(self, tmp_path):
        f = tmp_path / "run.cfg"
        f.write_text("bogus = 1\n")
        with pytest.raises(ParameterError, match="bogus"):
            parse_config(f)

    def test_malformed(self, tmp_path):
        f = tmp_path / "run.cfg"
        f.write_text("beta 1.0\n")
        with pytest.raises(ParameterError):
            parse_config(f)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParameterError):
            parse_config(tmp_path / "nope.cfg")


class TestCsv:
    def test_header_and_roundtrip(self, tmp_path, baseline):
        traj = simulate("reduced", ReducedState(0.1, 2.0), baseline, 300)
        path = emit_csv(traj.records(), TRAJECTORY_SCHEMA, tmp_path / "t.csv")
        text = path.read_text(encoding="utf-8")
        assert text.splitlines()[0] == "t,S,d,G1,G2,L_global"
        assert text.endswith("\n")
        rows = read_csv(path)
        for col, key in zip((traj.s, traj.d, traj.g1, traj.g2, traj.l_global),
                            ("S", "d", "G1", "G2", "L_global")):
            np.testing.assert_array_equal([r[key] for r in rows], col)

    def test_ews_header(self, tmp_path):
        path = emit_csv([], EWS_SCHEMA, tmp_path / "e.csv")
        assert path.read_text() == "beta,variance,lag1_ac,tau_theory,tau_measured\n"

    def test_mismatched_record(self, tmp_path):
        with pytest.raises(ValueError):
            emit_csv([{"t": 0}], TRAJECTORY_SCHEMA, tmp_path / "x.csv")

    @pytest.mark.parametrize("value", [0.1, 1 / 3, 1e-300, -2.5e17, 5e-324, np.float64(0.7)])
    def test_float_roundtrip(self, value):
        assert float(format_value(value)) == value

    def test_special_values(self):
        assert format_value(None) == "" and format_value(True) == "true" and format_value(3) == "3"


class TestJson:
    def test_spectral_keys(self, tmp_path, baseline):
        path = emit_json(spectral_report(baseline).to_dict(), tmp_path / "r.json", {"seed": 1})
        body = json.loads(path.read_text())
        assert list(body) == ["beta_c", "criterion_satisfied", "eigenvalues", "metadata", "rho",
                              "stable", "tau_theory"]

    def test_nonfinite_is_null(self, tmp_path):
        body = json.loads(emit_json({"a": float("nan"), "b": [float("inf"), 1.0]},
                                    tmp_path / "x.json").read_text())
        assert body == {"a": None, "b": [None, 1.0]}

    def test_full_precision(self, tmp_path):
        body = json.loads(emit_json({"x": 0.1 + 0.2}, tmp_path / "x.json").read_text())
        assert body["x"] == 0.1 + 0.2


def _run(tmp_path, *args):
    return main([*args, "--out-dir", str(tmp_path)])


class TestCli:
    def test_eigen(self, tmp_path):
        assert _run(tmp_path, "eigen") == 0
        body = json.loads((tmp_path / "eigen.json").read_text())
        assert body["rho"] == pytest.approx(0.95394, abs=1e-5)
        assert body["beta_c"] == pytest.approx(1.58114, abs=1e-5)
        assert body["stable"] is True
        meta = json.loads((tmp_path / "eigen.meta.json").read_text())
        assert meta["prng"] and "wall_clock_seconds" in meta and meta["config"]["beta"] == 0.5

    def test_simulate(self, tmp_path):
        assert _run(tmp_path, "simulate", "--kind", "reduced", "--d0", "2", "--t-max", "2000") == 0
        rows = read_csv(tmp_path / "trajectory.csv")
        assert len(rows) == 2001 and abs(rows[-1]["d"]) <= 1e-12

    def test_config_error(self, tmp_path):
        assert _run(tmp_path, "eigen", "--gamma", "1.5") == 2
        assert _run(tmp_path, "eigen", "--nope", "1") == 2
        assert _run(tmp_path, "frobnicate") == 2

    def test_divergence_exit(self, tmp_path):
        assert _run(tmp_path, "simulate", "--beta", "1.65", "--t-max", "5000") == 4
        meta = json.loads((tmp_path / "simulate.meta.json").read_text())
        assert meta["diverged"] is True and meta["summary"]["diverged_at"] > 0

    def test_sweep_divergence_is_data(self, tmp_path):
        assert _run(tmp_path, "sweep", "--format", "json") == 0
        body = json.loads((tmp_path / "sweep.json").read_text())
        recs = {r["beta"]: r for r in body["records"]}
        assert recs[1.65]["diverged_at"] is not None and recs[0.5]["diverged_at"] is None
        assert recs[1.65]["regime"] == "supercritical"

    def test_precondition_is_config_error(self, tmp_path):
        assert _run(tmp_path, "ews", "--betas", "1.65", "--t-max", "100", "--burn-in", "10") == 2

    def test_numerical_error_exit(self, tmp_path, monkeypatch):
        from fcms import cli
        from fcms.errors import NoStationarySolutionError

        def boom(cfg, t_max, out):
            raise NoStationarySolutionError("spectral radius 1.004 >= 1")

        monkeypatch.setitem(cli._COMMANDS, "eigen", boom)
        assert _run(tmp_path, "eigen") == 3

    def test_scale(self, tmp_path):
        code = _run(tmp_path, "scale", "--n", "100,1000,10000", "--t-max", "600", "--burn-in", "100")
        assert code == 0
        rows = read_csv(tmp_path / "scale.csv")
        assert [r["N"] for r in rows] == [100, 1000, 10000]
        meta = json.loads((tmp_path / "scale.meta.json").read_text())
        assert meta["summary"]["slope"] == pytest.approx(-1.0, abs=0.2)

    @pytest.mark.parametrize("args", [
        ("ablate", "--variant", "coupling"), ("ablate", "--variant", "persistence"),
        ("ablate", "--variant", "dissipation"), ("ablate", "--variant", "unresponsive_agents"),
        ("ablate", "--variant", "memory_blind_incentives"),
        ("invariance", "--samples", "16", "--t-max", "500"), ("phase", "--grid-n", "5"),
        ("ews", "--betas", "0.5", "--t-max", "3000", "--burn-in", "100"),
    ])
    def test_subcommands(self, tmp_path, args):
        assert _run(tmp_path, *args) == 0
        assert (tmp_path / f"{args[0]}.meta.json").is_file()

    @pytest.mark.parametrize("args, name", [
        (("simulate", "--noise-sigma", "0.01", "--t-max", "500"), "trajectory.csv"),
        (("ews", "--betas", "0.5,1.0", "--t-max", "3000", "--burn-in", "100", "--format", "json"),
         "ews.json"),
    ])
    def test_byte_identical(self, tmp_path, args, name):
        assert _run(tmp_path, *args, "--seed", "42") == 0
        first = (tmp_path / name).read_bytes()
        assert _run(tmp_path, *args, "--seed", "42") == 0
        assert (tmp_path / name).read_bytes() == first
        assert _run(tmp_path, *args, "--seed", "43") == 0
        assert (tmp_path / name).read_bytes() != first

    def test_default_t_max_recorded(self, tmp_path):
        assert _run(tmp_path, "eigen") == 0
        meta = json.loads((tmp_path / "eigen.meta.json").read_text())
        assert meta["config"]["t_max"] == DEFAULT_T_MAX["simulate"]
