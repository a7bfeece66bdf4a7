"""Artifact loading, comparison tables and figure rendering."""

import json
import os

import numpy as np
import pytest

from scalewave.problems import nagumo_exact
from scalewave.reporting import (MissingArtifacts, format_table, load_run,
                                 oracle_overlay, reference_rows, write_report)


def synth_run(tmp_path, case="nagumo"):
    """Minimal artifact set mimicking a finished run."""
    run = tmp_path / case
    (run / "snapshots").mkdir(parents=True)
    config = {
        "case": case,
        "params": {"a": 0.01} if case == "nagumo" else {},
        "grid": {"space": 11, "tau": 8},
        "tau_end": 20.0,
    }
    (run / "config.resolved").write_text(json.dumps(config))
    summary = {
        "case": case,
        "readings": {"speed": -0.69, "profile_shift": 0.2,
                     "rate_ratio": -0.98, "alpha": 0.5, "beta": -0.49},
        "metrics": {"speed_abs_error": 0.003, "profile_linf": 0.01,
                    "ratio_error": 0.02, "alpha_error": 0.0, "beta_error": 0.01},
    }
    (run / "summary").write_text(json.dumps(summary))
    with open(run / "loss_history.csv", "w") as fh:
        fh.write("iter,e_pde,e_alg,e_bc,e_ic,total,grad_norm,step\n")
        for k in range(4):
            vals = [k, 1.0 / (k + 1), 0.1, 0.01, 0.001, 1.2 / (k + 1), 0.5, 1.0]
            fh.write(",".join(str(v) for v in vals) + "\n")
    with open(run / "rates.csv", "w") as fh:
        fh.write("tau,V\n")
        for t in np.linspace(0, 20, 9):
            fh.write(f"{t},{-0.69}\n")
    y = np.linspace(-30, 30, 25)
    with open(run / "snapshots" / "tau_20.000000.csv", "w") as fh:
        fh.write("y,w\n")
        for yv, wv in zip(y, nagumo_exact(y - 0.2)):
            fh.write(f"{yv},{wv}\n")
    return run


class TestLoadRun:
    def test_loads_complete_run(self, tmp_path):
        run = synth_run(tmp_path)
        data = load_run(str(run))
        assert data["config"]["case"] == "nagumo"
        assert data["loss"][0][0] == "iter"
        assert data["loss"][1].shape == (4, 8)
        assert list(data["snapshots"]) == [20.0]

    def test_missing_artifacts_named(self, tmp_path):
        run = synth_run(tmp_path)
        os.remove(run / "rates.csv")
        os.remove(run / "summary")
        with pytest.raises(MissingArtifacts) as exc:
            load_run(str(run))
        assert set(exc.value.missing) == {"rates.csv", "summary"}

    def test_empty_snapshot_dir_rejected(self, tmp_path):
        run = synth_run(tmp_path)
        os.remove(run / "snapshots" / "tau_20.000000.csv")
        with pytest.raises(MissingArtifacts):
            load_run(str(run))


class TestTables:
    def test_nagumo_rows(self, tmp_path):
        run = synth_run(tmp_path)
        data = load_run(str(run))
        rows = reference_rows("nagumo", data["summary"], data["config"])
        names = [r[0] for r in rows]
        assert "|dc/dt| tail mean" in names[0]
        target = abs(-0.6929646455628166)
        assert rows[0][2] == pytest.approx(target, rel=1e-12)
        assert rows[0][3] == 0.003

    def test_exponent_rows_when_available(self):
        summary = {"readings": {"rate_ratio": -0.98, "alpha": 0.5, "beta": -0.49},
                   "metrics": {"ratio_error": 0.02, "alpha_error": 0.0,
                               "beta_error": 0.01}}
        rows = reference_rows("diffusion1d", summary, {})
        assert len(rows) == 3
        assert rows[1][2] == 0.5 and rows[2][2] == -0.5
        bare = {"readings": {"rate_ratio": -0.9}, "metrics": {"ratio_error": 0.1}}
        assert len(reference_rows("diffusion1d", bare, {})) == 1

    def test_format_table_layout(self):
        text = format_table("nagumo", [("quantity x", 1.23456, 1.0, 0.23)])
        lines = text.splitlines()
        assert lines[0] == "case: nagumo"
        assert "quantity x" in lines[3]
        assert "1.234560" in lines[3]


class TestOverlay:
    def test_nagumo_overlay_shifts_front(self):
        y = np.linspace(-5, 5, 11)
        summary = {"readings": {"profile_shift": 1.0}}
        out = oracle_overlay("nagumo", summary, {}, y)
        np.testing.assert_allclose(out, nagumo_exact(y - 1.0), rtol=1e-14)

    def test_diffusion_overlay_is_template(self):
        y = np.linspace(-2, 2, 5)
        out = oracle_overlay("diffusion1d", {"readings": {}}, {}, y)
        np.testing.assert_allclose(out, np.exp(-y**2), rtol=1e-14)

    def test_no_overlay_for_2d(self):
        assert oracle_overlay("diffusion2d", {"readings": {}}, {}, np.zeros(3)) is None


class TestWriteReport:
    def test_full_render(self, tmp_path):
        run = synth_run(tmp_path)
        table, written = write_report(str(run))
        assert "case: nagumo" in table
        names = {os.path.basename(p) for p in written}
        assert names == {"tables.txt", "loss.dat", "rates.dat", "profile.dat",
                         "plots.gp", "loss_curve.png", "rates.png", "profile.png"}
        for p in written:
            assert os.path.getsize(p) > 0
        # data files are whitespace-delimited with a commented header
        first = open(os.path.join(run, "report", "loss.dat")).readline()
        assert first.startswith("# iter total")
