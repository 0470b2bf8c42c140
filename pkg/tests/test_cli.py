import json

import numpy as np
import pytest

from waverom import io
from waverom.cli import local_minima_census, main


def base_config(**overrides):
    cfg = {
        "schema": "waverom-config-v1",
        "model": {"factory": "two_layer", "depth_left": 600.0, "contrast": 2.0},
        "grid": {"nx": 12, "nz": 15, "hx": 100.0, "hz": 100.0},
        "acquisition": {
            "layout": {"kind": "line", "m": 3, "depth": 150.0},
            "pulse": {"freq_hz": 6.0, "bandwidth_hz": 4.0},
        },
        "sampling": {"n": 4},
        "method": "chebyshev",
    }
    cfg.update(overrides)
    return cfg


def write_config(tmp_path, cfg, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


class TestCensus:
    def test_single_minimum(self):
        x, z = np.meshgrid(np.arange(7), np.arange(7), indexing="ij")
        surface = (x - 3.0) ** 2 + (z - 3.0) ** 2
        minima = local_minima_census(surface)
        assert len(minima) == 1
        assert (minima[0]["i"], minima[0]["j"]) == (3, 3)
        assert minima[0]["interior"]

    def test_two_minima_and_border(self):
        surface = np.array(
            [
                [0.0, 2.0, 3.0, 4.0],
                [2.0, 3.0, 4.0, 3.0],
                [3.0, 4.0, 3.0, 1.0],
                [4.0, 5.0, 4.0, 2.0],
            ]
        )
        minima = local_minima_census(surface)
        assert len(minima) == 2
        assert not any(rec["interior"] for rec in minima)

    def test_plateau_merged(self):
        surface = np.full((5, 5), 7.0)
        surface[2, 2] = surface[2, 3] = 1.0  # connected plateau of two cells
        minima = local_minima_census(surface)
        assert len(minima) == 1
        assert minima[0]["interior"]

    def test_degenerate_single_cell(self):
        assert len(local_minima_census(np.array([[3.0]]))) == 1


class TestSynthesize:
    def test_spectral_and_idempotent(self, tmp_path):
        cfg_path = write_config(tmp_path, base_config())
        for out in ("a", "b"):
            rc = main(["synthesize", "--config", str(cfg_path), "--out", str(tmp_path / out)])
            assert rc == 0
        assert (tmp_path / "a/dataset.bin").read_bytes() == (tmp_path / "b/dataset.bin").read_bytes()
        man_a = json.loads((tmp_path / "a/manifest.json").read_text())
        man_b = json.loads((tmp_path / "b/manifest.json").read_text())
        man_a.pop("timestamp"), man_b.pop("timestamp")
        assert man_a == man_b

    def test_timedomain_path_with_traces(self, tmp_path):
        cfg = base_config()
        cfg["record"] = {"dt_factor": 12, "t_factor": 1.3}
        cfg_path = write_config(tmp_path, cfg)
        rc = main([
            "synthesize", "--config", str(cfg_path), "--out", str(tmp_path / "out"),
            "--path", "timedomain", "--traces",
        ])
        assert rc == 0
        assert (tmp_path / "out/traces.csv").exists()
        ds = io.load_dataset(tmp_path / "out/dataset.json")
        assert ds.n == 4

    def test_manifest_reruns_identically(self, tmp_path):
        cfg_path = write_config(tmp_path, base_config())
        assert main(["synthesize", "--config", str(cfg_path), "--out", str(tmp_path / "a")]) == 0
        manifest = json.loads((tmp_path / "a/manifest.json").read_text())
        replay = write_config(tmp_path, manifest["config"], "replay.json")
        assert main(["synthesize", "--config", str(replay), "--out", str(tmp_path / "c")]) == 0
        assert (tmp_path / "a/dataset.bin").read_bytes() == (tmp_path / "c/dataset.bin").read_bytes()


class TestRomCommand:
    def test_builds_and_reports(self, tmp_path):
        cfg_path = write_config(tmp_path, base_config())
        main(["synthesize", "--config", str(cfg_path), "--out", str(tmp_path / "d")])
        rc = main(["rom", "--dataset", str(tmp_path / "d/dataset.json"), "--out", str(tmp_path / "r")])
        assert rc == 0
        rom = io.load_rom(tmp_path / "r/rom.json")
        assert rom.dimension == 3 * 4
        report = json.loads((tmp_path / "r/rom_report.json").read_text())
        assert report["mass_condition_number"] > 1.0

    def test_not_spd_exit_code(self, tmp_path):
        cfg_path = write_config(tmp_path, base_config())
        main(["synthesize", "--config", str(cfg_path), "--out", str(tmp_path / "d")])
        ds = io.load_dataset(tmp_path / "d/dataset.json")
        bad = np.array(ds.d)
        bad[0] = -bad[0]  # negative-definite D_0 cannot be a Gram block
        io.save_dataset(tmp_path / "d/dataset.json", type(ds)(bad, ds.ddot, ds.tau, ds.m, ds.n))
        rc = main(["rom", "--dataset", str(tmp_path / "d/dataset.json"), "--out", str(tmp_path / "r")])
        assert rc == 3

    def test_missing_dataset_io_error(self, tmp_path):
        rc = main(["rom", "--dataset", str(tmp_path / "nope.json"), "--out", str(tmp_path / "r")])
        assert rc == 4


class TestConfigErrors:
    def test_missing_section(self, tmp_path):
        cfg = base_config()
        del cfg["sampling"]
        rc = main(["synthesize", "--config", str(write_config(tmp_path, cfg)), "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_unknown_factory(self, tmp_path):
        cfg = base_config(model={"factory": "marmousi9000"})
        rc = main(["synthesize", "--config", str(write_config(tmp_path, cfg)), "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_sweep_needs_two_axes(self, tmp_path):
        cfg = base_config(sweep={"p1": {"name": "contrast", "min": 1.0, "max": 2.0, "count": 3}})
        rc = main(["sweep", "--config", str(write_config(tmp_path, cfg)), "--out", str(tmp_path / "o")])
        assert rc == 2


class TestSweepCommand:
    def test_tiny_sweep(self, tmp_path):
        cfg = base_config(
            sweep={
                "p1": {"name": "depth_left", "min": 500.0, "max": 700.0, "count": 3},
                "p2": {"name": "contrast", "min": 1.8, "max": 2.2, "count": 3},
            }
        )
        rc = main(["sweep", "--config", str(write_config(tmp_path, cfg)), "--out", str(tmp_path / "o")])
        assert rc == 0
        census = json.loads((tmp_path / "o/census.json").read_text())
        assert census["rom"]["count"] >= 1
        lines = (tmp_path / "o/sweep.csv").read_text().splitlines()
        assert lines[0] == "depth_left,contrast,obj_rom,obj_fwi"
        assert len(lines) == 1 + 9

    def test_degenerate_single_point(self, tmp_path):
        cfg = base_config(
            sweep={
                "p1": {"name": "depth_left", "min": 600.0, "max": 600.0, "count": 1},
                "p2": {"name": "contrast", "min": 2.0, "max": 2.0, "count": 1},
            }
        )
        rc = main(["sweep", "--config", str(write_config(tmp_path, cfg)), "--out", str(tmp_path / "o")])
        assert rc == 0
        census = json.loads((tmp_path / "o/census.json").read_text())
        assert census["rom"]["count"] == 1
        assert census["fwi"]["count"] == 1


@pytest.fixture(scope="module")
def invert_runs(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("invert")
    cfg = base_config(
        search={"background": {"kind": "constant", "c0": 1500.0}, "lattice": [2, 2]},
        schedule={"layers": 1, "q": 2, "d": 4, "k": [4]},
        gn={"gamma": 0.3},
    )
    cfg_path = write_config(tmp, cfg)
    for mode in ("rom", "fwi"):
        rc = main([
            "invert", "--config", str(cfg_path), "--out", str(tmp / mode), "--mode", mode,
        ])
        assert rc == 0
    return tmp


class TestInvertCommand:
    def test_artifacts_written(self, invert_runs):
        man = json.loads((invert_runs / "rom/manifest.json").read_text())
        assert man["mode"] == "rom"
        assert man["metrics"]["iterations"] == 2
        est = io.load_velocity(invert_runs / "rom/estimate.json")
        truth = io.load_velocity(invert_runs / "rom/truth.json")
        assert est.grid == truth.grid
        rows = io.load_state_csv(invert_runs / "rom/state.csv")
        assert len(rows) == 2
        assert rows[0]["k_l"] == 4

    def test_compare(self, invert_runs, tmp_path):
        rc = main([
            "compare",
            "--run-a", str(invert_runs / "rom/manifest.json"),
            "--run-b", str(invert_runs / "fwi/manifest.json"),
            "--out", str(tmp_path),
        ])
        assert rc == 0
        report = json.loads((tmp_path / "compare.json").read_text())
        assert report["winner"] in ("a", "b", "tie")
        assert "curves" in report and "a" in report["curves"]

    def test_compare_identical_runs_tie(self, invert_runs, tmp_path):
        rc = main([
            "compare",
            "--run-a", str(invert_runs / "rom/manifest.json"),
            "--run-b", str(invert_runs / "rom/manifest.json"),
            "--out", str(tmp_path),
        ])
        assert rc == 0
        report = json.loads((tmp_path / "compare.json").read_text())
        assert report["winner"] == "tie"
        assert report["error_difference"] == 0.0

    def test_invert_deterministic(self, invert_runs, tmp_path):
        cfg = base_config(
            search={"background": {"kind": "constant", "c0": 1500.0}, "lattice": [2, 2]},
            schedule={"layers": 1, "q": 2, "d": 4, "k": [4]},
            gn={"gamma": 0.3},
        )
        cfg_path = write_config(tmp_path, cfg)
        rc = main(["invert", "--config", str(cfg_path), "--out", str(tmp_path / "x"), "--mode", "rom"])
        assert rc == 0
        assert (tmp_path / "x/estimate.bin").read_bytes() == (
            invert_runs / "rom/estimate.bin"
        ).read_bytes()
        assert (tmp_path / "x/state.csv").read_text() == (invert_runs / "rom/state.csv").read_text()


class TestHonestReference:
    def test_refined_reference_breaks_inverse_crime(self, tmp_path):
        # with refine > 1 the truth no longer zeroes the objective
        cfg = base_config(
            search={"background": {"kind": "constant", "c0": 1500.0}, "lattice": [2, 2]},
            schedule={"layers": 1, "q": 1, "d": 4, "k": [4]},
            gn={"gamma": 0.3},
            reference={"refine": 2},
        )
        cfg_path = write_config(tmp_path, cfg)
        rc = main(["invert", "--config", str(cfg_path), "--out", str(tmp_path / "o"), "--mode", "fwi"])
        assert rc == 0
        man = json.loads((tmp_path / "o/manifest.json").read_text())
        assert man["config"]["reference"] == {"refine": 2}

    def test_refined_synthesize_differs_from_base(self, tmp_path):
        base = base_config()
        fine = base_config(reference={"refine": 2})
        p1 = write_config(tmp_path, base, "a.json")
        p2 = write_config(tmp_path, fine, "b.json")
        assert main(["synthesize", "--config", str(p1), "--out", str(tmp_path / "a")]) == 0
        assert main(["synthesize", "--config", str(p2), "--out", str(tmp_path / "b")]) == 0
        da = io.load_dataset(tmp_path / "a/dataset.json")
        db = io.load_dataset(tmp_path / "b/dataset.json")
        assert da.d.shape == db.d.shape
        rel = np.max(np.abs(da.d - db.d)) / np.max(np.abs(da.d))
        assert 1e-6 < rel < 1.0  # discretization error visible but bounded


def test_sweep_axis_typo_rejected(tmp_path):
    cfg = base_config(
        sweep={
            "p1": {"name": "depht_left", "min": 500.0, "max": 700.0, "count": 2},
            "p2": {"name": "contrast", "min": 1.8, "max": 2.2, "count": 2},
        }
    )
    rc = main(["sweep", "--config", str(write_config(tmp_path, cfg)), "--out", str(tmp_path / "o")])
    assert rc == 2
