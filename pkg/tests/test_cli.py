import json
from pathlib import Path

import numpy as np

from matspec.cli import EXIT_HYPOTHESIS, EXIT_INVALID, EXIT_OK, main
from matspec.ensemble import save_ensemble
from matspec.ensembles import (
    expanding_1d_deterministic,
    kesten_1d,
    kesten_affine_1d,
)


def write_config(tmp_path: Path, ensemble, name="ens.json", **extra) -> Path:
    save_ensemble(ensemble, tmp_path / name)
    cfg = {
        "ensemble": name,
        "seed": 99,
        "out": str(tmp_path / "out"),
        "mc": {"samples": 50_000, "steps": 300, "paths": 4000},
        "s_grid": {"min": 0.0, "max": 1.5, "count": 4},
    }
    cfg.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


class TestValidateCommand:
    def test_kesten_passes(self, tmp_path, capsys):
        cfg = write_config(tmp_path, kesten_1d())
        assert main(["validate", "--config", str(cfg)]) == EXIT_OK
        report = json.loads((tmp_path / "out" / "validation_report.json").read_text())
        assert report["nonarithmetic"] == "pass"
        assert report["proximality"] == "pass"

    def test_lattice_warns_but_exits_zero(self, tmp_path, capsys):
        from matspec.ensemble import LinearEnsemble

        lattice = LinearEnsemble(1, np.array([[[2.0]], [[0.5]]]),
                                 np.array([0.5, 0.5]))
        cfg = write_config(tmp_path, lattice)
        assert main(["validate", "--config", str(cfg)]) == EXIT_OK
        err = capsys.readouterr().err
        assert "nonarithmetic" in err

    def test_malformed_matrix_exits_two(self, tmp_path):
        (tmp_path / "bad.json").write_text(json.dumps({
            "dimension": 2,
            "atoms": [{"matrix": [1.0, 0.0, 0.0], "weight": 1.0}],
        }))
        (tmp_path / "cfg.json").write_text(json.dumps({
            "ensemble": "bad.json", "seed": 1, "out": str(tmp_path / "o")}))
        assert main(["validate", "--config", str(tmp_path / "cfg.json")]) == EXIT_INVALID

    def test_missing_seed_exits_two(self, tmp_path):
        save_ensemble(kesten_1d(), tmp_path / "e.json")
        (tmp_path / "cfg.json").write_text(json.dumps({
            "ensemble": "e.json", "out": str(tmp_path / "o")}))
        assert main(["validate", "--config", str(tmp_path / "cfg.json")]) == EXIT_INVALID

    def test_manifest_written_on_failure(self, tmp_path):
        # spectrum on an s-grid violating the declared bound fails at parse,
        # before any manifest exists; a failing solve still writes one
        cfg = write_config(tmp_path, kesten_1d(),
                           s_grid={"min": 0.0, "max": 70.0, "count": 3})
        assert main(["spectrum", "--config", str(cfg)]) == EXIT_INVALID


class TestSpectrumCommand:
    def test_kesten_scalars(self, tmp_path):
        cfg = write_config(tmp_path, kesten_1d())
        assert main(["spectrum", "--config", str(cfg)]) == EXIT_OK
        rows = (tmp_path / "out" / "spectral_scalars.csv").read_text().splitlines()
        scalars = dict(line.split(",") for line in rows[1:])
        assert abs(float(scalars["alpha"]) - 1.0) < 1e-8
        assert abs(float(scalars["L_mu_0"]) -
                   (0.4 * np.log(2) - 0.6 * np.log(3))) < 1e-12
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["status"] == "ok"
        assert any(o["file"] == "spectral_curve.csv" for o in manifest["outputs"])

    def test_s_grid_beyond_bound_rejected(self, tmp_path):
        cfg = write_config(tmp_path, kesten_1d(),
                           s_grid={"min": 0.0, "max": 3.0, "count": 3},
                           s_max_bound=2.0)
        assert main(["spectrum", "--config", str(cfg)]) == EXIT_INVALID


class TestTailsCommand:
    def test_zero_translation_rejected(self, tmp_path):
        doc = {
            "dimension": 1,
            "atoms": [
                {"matrix": [2.0], "translation": [0.0], "weight": 0.4},
                {"matrix": [0.3333333333333333], "translation": [0.0],
                 "weight": 0.6},
            ],
        }
        (tmp_path / "zero.json").write_text(json.dumps(doc))
        (tmp_path / "cfg.json").write_text(json.dumps({
            "ensemble": "zero.json", "seed": 5, "out": str(tmp_path / "o")}))
        assert main(["tails", "--config", str(tmp_path / "cfg.json")]) == EXIT_INVALID

    def test_linear_ensemble_rejected_for_tails(self, tmp_path):
        cfg = write_config(tmp_path, kesten_1d())
        assert main(["tails", "--config", str(cfg)]) == EXIT_INVALID

    def test_expanding_ensemble_hypothesis_violation(self, tmp_path):
        from matspec.ensemble import AffineEnsemble

        ae = AffineEnsemble(1, np.array([[[2.0]], [[1.5]]]),
                            np.array([[1.0], [2.0]]), np.array([0.5, 0.5]))
        cfg = write_config(tmp_path, ae)
        assert main(["tails", "--config", str(cfg)]) == EXIT_HYPOTHESIS

    def test_kesten_tails_report(self, tmp_path):
        cfg = write_config(tmp_path, kesten_affine_1d())
        assert main(["tails", "--config", str(cfg)]) == EXIT_OK
        report = json.loads((tmp_path / "out" / "tail_report.json").read_text())
        lo, hi = report["alpha_hill_ci"]
        assert lo <= 1.0 <= hi
        assert report["case_label"] == "II''"

    def test_byte_identical_rerun(self, tmp_path):
        cfg = write_config(tmp_path, kesten_affine_1d())
        assert main(["tails", "--config", str(cfg)]) == EXIT_OK
        first = {
            p.name: p.read_bytes()
            for p in (tmp_path / "out").iterdir() if p.suffix == ".csv"
        }
        assert main(["tails", "--config", str(cfg)]) == EXIT_OK
        second = {
            p.name: p.read_bytes()
            for p in (tmp_path / "out").iterdir() if p.suffix == ".csv"
        }
        assert first == second
        assert "bank.csv" in first


class TestRenewalCommand:
    def test_deterministic_expanding(self, tmp_path):
        cfg = write_config(tmp_path, expanding_1d_deterministic(),
                           mc={"samples": 1000, "steps": 300, "paths": 300})
        assert main(["renewal", "--config", str(cfg)]) == EXIT_OK
        body = (tmp_path / "out" / "renewal_report.csv").read_text().splitlines()
        first = body[1].split(",")
        assert float(first[1]) == 1.0  # measured
        assert float(first[2]) == 1.0  # predicted

    def test_contracting_runs_tilted_profile(self, tmp_path):
        cfg = write_config(tmp_path, kesten_1d(),
                           mc={"samples": 1000, "steps": 300, "paths": 3000})
        assert main(["renewal", "--config", str(cfg)]) == EXIT_OK
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["regime"] == "contracting-tilted"

    def test_no_tail_root_is_hypothesis_violation(self, tmp_path):
        from matspec.ensemble import LinearEnsemble

        shrink = LinearEnsemble(1, np.array([[[0.9]], [[0.5]]]),
                                np.array([0.5, 0.5]))
        cfg = write_config(tmp_path, shrink)
        assert main(["renewal", "--config", str(cfg)]) == EXIT_HYPOTHESIS


class TestCramerDualwalkCommands:
    def test_cramer_kesten(self, tmp_path):
        cfg = write_config(
            tmp_path, kesten_1d(),
            mc={"samples": 1000, "steps": 300, "paths": 5000},
            options={"t_grid": {"min": 10, "max": 100, "count": 3},
                     "directions": 1},
        )
        assert main(["cramer", "--config", str(cfg)]) == EXIT_OK
        body = (tmp_path / "out" / "cramer_table.csv").read_text().splitlines()
        assert body[0].split(",") == ["direction", "t", "method", "estimate",
                                      "stderr", "hits", "flag"]
        assert len(body) == 1 + 2 * 3  # tilted + naive rows per t

    def test_dualwalk_kesten(self, tmp_path):
        cfg = write_config(
            tmp_path, kesten_affine_1d(),
            mc={"samples": 1000, "steps": 200, "paths": 1000},
        )
        assert main(["dualwalk", "--config", str(cfg)]) == EXIT_OK
        rows = (tmp_path / "out" / "dualwalk_report.csv").read_text().splitlines()
        vals = dict(line.split(",") for line in rows[1:])
        assert vals["tau_finite"] == "1000"
        assert vals["sign_preserved"] == "true"


class TestD2Spectrum:
    def test_ip_spectrum_outputs(self, tmp_path):
        from matspec.ensembles import ip_2d

        cfg = write_config(tmp_path, ip_2d(),
                           s_grid={"min": 0.0, "max": 1.5, "count": 3},
                           grid_resolution=96,
                           mc={"samples": 1000, "steps": 100, "paths": 1000})
        assert main(["spectrum", "--config", str(cfg)]) == EXIT_OK
        out = tmp_path / "out"
        assert (out / "grid.csv").exists()
        header = (out / "grid.csv").read_text().splitlines()[0]
        assert header == "node_index,x0,x1,quadrature_weight"
        blk = (out / "spectral_point_scalars.csv").read_text().splitlines()
        assert blk[0].startswith("s,k,p,residual_e,residual_nu")
        assert len(blk) == 4  # header + 3 exponents
