import json
import math

import numpy as np
import pytest

from stableheat.cli import (
    EXIT_EXPERIMENT,
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_VALIDATION,
    main,
)

BASE_CONFIG = {
    "version": 1,
    "master_seed": 11,
    "stable": {"alpha": 1.5, "c_plus": 0.5, "c_minus": 0.5},
    "truncation": {"big_cutoff_K": 1.0, "small_cutoff_eps": 0.05},
    "domain": {"horizon_T": 1.0, "length_L": 1.0},
    "grid": {"n_t": 16, "n_x": 8},
    "coefficients": {
        "drift": {"family": "affine", "params": {"a": 0.0, "b": 0.2}},
        "noise_coef": {"family": "clipped_linear", "params": {"slope": 0.4, "cap": 2.0}},
    },
    "initial": {"family": "sine_mode", "params": {"mode": 1, "amplitude": 1.0}},
}


def write_config(tmp_path, overrides=None, name="config.json"):
    cfg = json.loads(json.dumps(BASE_CONFIG))
    for key, value in (overrides or {}).items():
        if value is None:
            cfg.pop(key, None)
        else:
            cfg[key] = value
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


class TestSampleNoise:
    def test_byte_identical_across_runs(self, tmp_path):
        cfg = write_config(tmp_path)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["sample-noise", "--config", str(cfg), "--out", str(out1)]) == EXIT_OK
        assert main(["sample-noise", "--config", str(cfg), "--out", str(out2)]) == EXIT_OK
        f1 = out1 / "noise" / "noise_seed11.txt"
        f2 = out2 / "noise" / "noise_seed11.txt"
        assert f1.read_bytes() == f2.read_bytes()
        meta = json.loads((out1 / "noise" / "noise_seed11.meta.json").read_text())
        assert meta["seed"] == 11
        lines = f1.read_text().splitlines()
        assert lines[0] == "# stableheat-noise v1"
        assert meta["n_jumps"] == len(lines) - 8

    def test_seed_override(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "o"
        assert (
            main(["sample-noise", "--config", str(cfg), "--out", str(out), "--seed", "99"])
            == EXIT_OK
        )
        assert (out / "noise" / "noise_seed99.txt").exists()

    def test_invalid_truncation_exits_validation(self, tmp_path):
        cfg = write_config(
            tmp_path,
            {"truncation": {"big_cutoff_K": 0.5, "small_cutoff_eps": 0.5}},
        )
        assert (
            main(["sample-noise", "--config", str(cfg), "--out", str(tmp_path / "o")])
            == EXIT_VALIDATION
        )


class TestSolve:
    def test_deterministic_config_matches_analytic(self, tmp_path):
        cfg = write_config(
            tmp_path,
            {
                "coefficients": {
                    "drift": {"family": "zero"},
                    "noise_coef": {"family": "zero"},
                },
                "grid": {"n_t": 32, "n_x": 16},
                "solver": {"method": "both", "modes": 4},
            },
        )
        out = tmp_path / "o"
        assert main(["solve", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        rows = (out / "solutions" / "mild.csv").read_text().strip().splitlines()
        data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
        times, vals = data[:, 0], data[:, 1:]
        nodes = np.linspace(0, 1, 17)
        exact = np.exp(-math.pi**2 * times[:, None] / 2) * np.sin(math.pi * nodes)
        assert np.max(np.abs(vals - exact)) < 1e-10
        disc = json.loads((out / "solutions" / "discrepancy.json").read_text())
        assert disc["max_abs_difference"] < 1e-10
        meta = json.loads((out / "solutions" / "mild.meta.json").read_text())
        assert "picard_iterations" in meta and "config_hash" in meta

    @pytest.mark.filterwarnings("ignore:invalid value encountered")
    @pytest.mark.filterwarnings("ignore:overflow encountered")
    def test_blow_up_exits_numerical(self, tmp_path):
        cfg = write_config(
            tmp_path,
            {
                "coefficients": {
                    "drift": {"family": "affine", "params": {"a": 0.0, "b": 1e21}},
                    "noise_coef": {"family": "zero"},
                },
                "solver": {"method": "mild", "window_steps": 1},
            },
        )
        assert (
            main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")])
            == EXIT_NUMERICAL
        )

    def test_missing_family_rejected(self, tmp_path):
        cfg = write_config(
            tmp_path,
            {
                "coefficients": {
                    "drift": {"family": "quadratic", "params": {}},
                    "noise_coef": {"family": "zero"},
                }
            },
        )
        assert (
            main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")])
            == EXIT_VALIDATION
        )


class TestVerify:
    def test_stopping_law_only(self, tmp_path):
        cfg = write_config(
            tmp_path,
            {"experiments": {"stopping_law": {"K": 1.0, "n_paths": 500}}},
        )
        out = tmp_path / "o"
        assert main(["verify", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        report = json.loads((out / "reports" / "stopping_law.json").read_text())
        assert report["pass"] is True
        summary = json.loads((out / "reports" / "summary.json").read_text())
        assert summary["all_passed"] is True
        assert (out / "effective_config.json").exists()

    def test_gate_failure_is_validation_error(self, tmp_path):
        cfg = write_config(
            tmp_path,
            {
                "coefficients": {
                    "drift": {"family": "affine", "params": {"a": 0.0, "b": 0.2}},
                    "noise_coef": {
                        "family": "sine_modulated",
                        "params": {"amplitude": 1.0, "mode": 2, "u_slope": 1.0},
                    },
                },
                "experiments": {
                    "comparison": {
                        "n_paths": 2,
                        "problem_u": {"drift": {"family": "affine", "params": {"a": 0.0, "b": 0.2}}},
                    }
                },
            },
        )
        assert (
            main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")])
            == EXIT_VALIDATION
        )

    def test_failing_experiment_exits_4(self, tmp_path, capsys):
        # pure mode-1 forcing: every mode count shares the same
        # time-integration floor, so the required halving between the
        # first and last mode error fails deterministically
        cfg = write_config(
            tmp_path,
            {
                "coefficients": {
                    "drift": {
                        "family": "sine_modulated",
                        "params": {"amplitude": 0.5, "mode": 1, "u_slope": 0.0},
                    },
                    "noise_coef": {"family": "zero"},
                },
                "grid": {"n_t": 16, "n_x": 16},
                "experiments": {"galerkin_convergence": {"m_list": [2, 4]}},
            },
        )
        assert (
            main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")])
            == EXIT_EXPERIMENT
        )
        assert "galerkin_convergence" in capsys.readouterr().err

    def test_unknown_key_rejected(self, tmp_path):
        cfg = write_config(tmp_path, {"extra_section": {"a": 1}})
        assert (
            main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")])
            == EXIT_VALIDATION
        )

    def test_missing_version_rejected(self, tmp_path):
        cfg = write_config(tmp_path, {"version": None})
        assert (
            main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")])
            == EXIT_VALIDATION
        )

    def test_no_experiments_rejected(self, tmp_path):
        cfg = write_config(tmp_path)
        assert (
            main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")])
            == EXIT_VALIDATION
        )

    def test_effective_config_echoed_with_defaults(self, tmp_path):
        cfg = write_config(
            tmp_path,
            {"experiments": {"stopping_law": {"K": 1.0, "n_paths": 50}}},
        )
        out = tmp_path / "o"
        main(["verify", "--config", str(cfg), "--out", str(out)])
        effective = json.loads((out / "effective_config.json").read_text())
        assert effective["solver"]["method"] == "mild"
        assert effective["truncation"]["gaussian_correction"] is False
