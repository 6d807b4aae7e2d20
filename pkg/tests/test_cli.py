import json

import numpy as np
import pytest

from fedmix.cli import main

TINY_CONFIG = {
    "federation": {
        "num_clients": 4,
        "scenario": "concept_shift",
        "input_dim": 3,
        "num_classes": 3,
        "samples_per_client": 60,
        "dirichlet_alpha": 0.4,
        "num_clusters": 2,
    },
    "model": {"architecture": "linear"},
    "optimizer": {"learning_rate": 0.1, "momentum": 0.9, "batch_size": 16, "local_epochs": 1},
    "rule": "streamed",
    "num_streams": 2,
    "rounds": 2,
    "val_fraction": 0.25,
    "variance_batches": 5,
    "seeds": {"data": 1, "init": 2, "training": 3, "probe": 4},
}


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(TINY_CONFIG))
    return path


def write_variant(tmp_path, name="variant.json", **updates):
    doc = json.loads(json.dumps(TINY_CONFIG))
    for key, value in updates.items():
        if isinstance(value, dict):
            doc.setdefault(key, {}).update(value)
        else:
            doc[key] = value
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


class TestRunCommand:
    def test_produces_expected_files(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        assert main(["run", "--config", str(tiny_config), "--out", str(out)]) == 0
        names = sorted(p.name for p in out.iterdir())
        assert names == ["manifest.json", "metrics.csv", "streamplan.json", "summary.json"]

    def test_no_streamplan_for_fedavg(self, tmp_path):
        cfg = write_variant(tmp_path, rule="fedavg")
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
        assert not (out / "streamplan.json").exists()

    def test_metrics_byte_identical_across_runs(self, tiny_config, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["run", "--config", str(tiny_config), "--out", str(out1)]) == 0
        assert main(["run", "--config", str(tiny_config), "--out", str(out2)]) == 0
        assert (out1 / "metrics.csv").read_bytes() == (out2 / "metrics.csv").read_bytes()
        assert (out1 / "summary.json").read_bytes() == (out2 / "summary.json").read_bytes()

    def test_malformed_config_exits_1_no_outputs(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"rule": "fedavg"}))  # missing sections
        out = tmp_path / "out"
        assert main(["run", "--config", str(bad), "--out", str(out)]) == 1
        assert not out.exists()

    def test_invalid_field_names_offender(self, tmp_path, capsys):
        cfg = write_variant(tmp_path, val_fraction=1.5)
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == 1
        assert "val_fraction" in capsys.readouterr().err

    def test_not_json_exits_1(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1

    def test_unknown_config_name_exits_1(self, tmp_path):
        assert main(["run", "--config", "no_such_preset", "--out", str(tmp_path)]) == 1

    def test_seed_override_changes_metrics(self, tiny_config, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["run", "--config", str(tiny_config), "--out", str(out1), "--seed-override", "5"])
        main(["run", "--config", str(tiny_config), "--out", str(out2), "--seed-override", "6"])
        assert (out1 / "metrics.csv").read_text() != (out2 / "metrics.csv").read_text()

    def test_streams_flag_forces_streamed(self, tmp_path):
        cfg = write_variant(tmp_path, rule="fedavg")
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg), "--out", str(out), "--streams", "2"]) == 0
        plan = json.loads((out / "streamplan.json").read_text())
        assert plan["m_t"] == 2

    def test_baselines_emitted(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        code = main(
            ["run", "--config", str(tiny_config), "--out", str(out),
             "--baselines", "local", "fedavg", "oracle"]
        )
        assert code == 0
        for name in ("local", "fedavg", "oracle"):
            assert (out / f"metrics_{name}.csv").exists()

    def test_manifest_contents(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        main(["run", "--config", str(tiny_config), "--out", str(out)])
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "run"
        assert len(manifest["config_digest"]) == 64
        assert "metrics.csv" in manifest["output_paths"]
        assert manifest["tool_version"]


class TestSimilarityCommand:
    def test_report_and_silhouette_table(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        assert main(["similarity", "--config", str(tiny_config), "--out", str(out)]) == 0
        doc = json.loads((out / "similarity.json").read_text())
        assert doc["m"] == 4
        ks = [row["k"] for row in doc["silhouette_by_k"]]
        assert ks == [2, 3, 4]
        for row in np.array(doc["w"]):
            assert abs(row.sum() - 1.0) <= 1e-9

    def test_two_clients_single_table_row(self, tmp_path):
        cfg = write_variant(
            tmp_path, federation={"num_clients": 2, "num_clusters": 2}, rule="fedavg"
        )
        out = tmp_path / "out"
        assert main(["similarity", "--config", str(cfg), "--out", str(out)]) == 0
        doc = json.loads((out / "similarity.json").read_text())
        assert [row["k"] for row in doc["silhouette_by_k"]] == [2]

    def test_concept_preset_table_peaks_at_four(self, tmp_path):
        out = tmp_path / "out"
        assert main(["similarity", "--config", "concept_shift_small", "--out", str(out)]) == 0
        doc = json.loads((out / "similarity.json").read_text())
        table = doc["silhouette_by_k"]
        assert [row["k"] for row in table] == list(range(2, 11))
        best = max(table, key=lambda row: row["score"])
        assert best["k"] == 4


class TestTimingCommand:
    def test_curves_for_three_presets(self, tiny_config, tmp_path):
        run_out = tmp_path / "run"
        main(["run", "--config", str(tiny_config), "--out", str(run_out)])
        t_out = tmp_path / "timing"
        code = main(
            ["timing", "--config", str(tiny_config), "--out", str(t_out),
             "--metrics", str(run_out / "metrics.csv")]
        )
        assert code == 0
        for name in ("wireless_slow", "wireless_fast", "wired"):
            assert (t_out / f"timing_{name}.csv").exists()

    def test_wired_per_round_time_formula(self, tiny_config, tmp_path):
        run_out = tmp_path / "run"
        main(["run", "--config", str(tiny_config), "--out", str(run_out)])
        t_out = tmp_path / "timing"
        main(
            ["timing", "--config", str(tiny_config), "--out", str(t_out),
             "--metrics", str(run_out / "metrics.csv")]
        )
        lines = (t_out / "timing_wired.csv").read_text().strip().splitlines()[1:]
        times = [float(line.split(",")[0]) for line in lines]
        # round 0 at t=0, then probe round (1+1+1) plus (m_t + 2) per round
        m_t = 2
        per_round = m_t + 2
        assert times[0] == 0.0
        assert times[1] == pytest.approx(3 + per_round)
        assert times[2] == pytest.approx(3 + 2 * per_round)

    def test_missing_metrics_exits_1(self, tiny_config, tmp_path):
        code = main(
            ["timing", "--config", str(tiny_config), "--out", str(tmp_path / "o"),
             "--metrics", str(tmp_path / "nope.csv")]
        )
        assert code == 1

    def test_custom_comm_model_added(self, tmp_path):
        cfg = write_variant(
            tmp_path, comm={"rho": 3.0, "t_dl": 1.0, "t_min": 0.5, "mu": 2.0}
        )
        run_out = tmp_path / "run"
        main(["run", "--config", str(cfg), "--out", str(run_out)])
        t_out = tmp_path / "timing"
        main(
            ["timing", "--config", str(cfg), "--out", str(t_out),
             "--metrics", str(run_out / "metrics.csv")]
        )
        assert (t_out / "timing_custom.csv").exists()


class TestValidateBoundCommand:
    def test_default_grid_passes(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bound": {"trials": 1500, "deltas": [0.05, 0.1]}}))
        out = tmp_path / "out"
        assert main(["validate-bound", "--config", str(cfg), "--out", str(out)]) == 0
        report = json.loads((out / "bound_report.json").read_text())
        assert report["all_valid"] is True
        assert len(report["records"]) >= 10
        for rec in report["records"]:
            assert rec["violation_rate"] <= rec["delta"]

    def test_too_few_trials_exits_1(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bound": {"trials": 100}}))
        assert main(["validate-bound", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


class TestPresetsCommand:
    def test_list_names(self, capsys):
        assert main(["presets", "list"]) == 0
        out = capsys.readouterr().out
        for name in ("label_shift_small", "covariate_shift_small", "concept_shift_small"):
            assert name in out

    def test_presets_validate(self):
        from fedmix.presets import preset_config, preset_names

        for name in preset_names():
            cfg = preset_config(name)
            assert cfg.federation.num_clients == 20
            assert cfg.optimizer.learning_rate == 0.1
            assert cfg.optimizer.momentum == 0.9
            assert cfg.federation.dirichlet_alpha == 0.4
            if cfg.federation.scenario.value != "label_shift":
                assert cfg.federation.num_clusters == 4
