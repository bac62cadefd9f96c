"""Config parsing, resolved round-trips, and CLI artifact contracts."""

import csv
import math
from pathlib import Path

import pytest

from qflsim import cli
from qflsim.config import (
    ConfigError,
    config_sha256,
    default_fractions,
    parse_config,
    parse_config_text,
    resolved_text,
)

MINIMAL = "dataset.kind = synth\n"

SMOKE = """
dataset.kind = synth
dataset.n_samples = 24
dataset.n_classes = 2
qnn.n_qubits = 2
qnn.n_classes = 2
train.K = 2
train.M = 6
train.T = 1
train.batch_size = 2
train.R = 2
federation.n_clients = 2
seed = 5
"""


def write_cfg(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestParseConfig:
    def test_minimal_defaults(self):
        cfg = parse_config_text(MINIMAL)
        assert cfg.train.eta == 0.1
        assert cfg.train.lam == 0.1
        assert cfg.train.gamma == 1.0
        assert cfg.qnn.n_qubits == 4
        assert cfg.federation.n_clients == 10
        assert len(cfg.federation.fractions) == 10
        assert cfg.dataset.d == 4  # derived from qnn.n_qubits

    def test_three_client_paper_split_accepted(self):
        cfg = parse_config_text(
            MINIMAL + "federation.n_clients = 3\n"
            "federation.fractions = 0.25,0.35,0.40\n"
        )
        assert cfg.federation.fractions == (0.25, 0.35, 0.40)

    def test_class_count_invariant(self):
        with pytest.raises(ConfigError, match="n_classes"):
            parse_config_text(
                "dataset.kind = synth\ndataset.n_classes = 11\n"
                "qnn.n_qubits = 10\nqnn.n_classes = 11\n"
            )

    def test_unknown_key_reports_line(self):
        with pytest.raises(ConfigError, match=":2"):
            parse_config_text("seed = 1\nqnn.depth = 3\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("seed = 1\nseed = 2\n")

    def test_bad_value_reports_key(self):
        with pytest.raises(ConfigError, match="train.K"):
            parse_config_text("train.K = many\n")

    def test_fraction_length_mismatch(self):
        with pytest.raises(ConfigError, match="fractions"):
            parse_config_text(
                MINIMAL + "federation.n_clients = 3\n"
                "federation.fractions = 0.5,0.5\n"
            )

    def test_exact_shots_sentinel(self):
        cfg = parse_config_text(MINIMAL + "train.M = exact\n")
        assert cfg.train.m_shots == "exact"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            parse_config(tmp_path / "absent.cfg")

    def test_resolved_round_trip(self):
        cfg = parse_config_text(SMOKE)
        text = resolved_text(cfg)
        again = parse_config_text(text)
        assert again == cfg
        assert config_sha256(again) == config_sha256(cfg)

    def test_default_fraction_presets(self):
        assert default_fractions(3) == (0.25, 0.35, 0.40)
        assert sum(default_fractions(5)) == pytest.approx(1.0, abs=1e-12)
        assert len(default_fractions(10)) == 10
        assert default_fractions(4) == (0.25, 0.25, 0.25, 0.25)


class TestCmdTrain:
    def test_smoke_artifacts(self, tmp_path):
        import time

        cfg_path = write_cfg(tmp_path, SMOKE)
        out = tmp_path / "run"
        started = time.perf_counter()
        rc = cli.main(["train", "--config", str(cfg_path), "--out", str(out)])
        assert time.perf_counter() - started < 30
        assert rc == 0
        rows = list(csv.reader(open(out / "metrics.csv", encoding="utf-8")))
        assert rows[0] == cli.METRICS_COLUMNS
        assert len(rows) == 3  # header + 2 rounds
        assert (out / "resolved.cfg").exists()
        model_lines = (out / "final_model.txt").read_text().splitlines()
        assert model_lines[0].startswith("# config_sha256 ")
        assert model_lines[1] == "# n_params 4"
        assert len(model_lines) == 2 + 4

    def test_rerun_byte_identical(self, tmp_path):
        cfg_path = write_cfg(tmp_path, SMOKE)
        blobs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert cli.main(["train", "--config", str(cfg_path), "--out", str(out)]) == 0
            blobs.append((
                (out / "metrics.csv").read_bytes(),
                (out / "final_model.txt").read_bytes(),
            ))
        assert blobs[0] == blobs[1]

    def test_worker_count_invariance(self, tmp_path):
        cfg_path = write_cfg(tmp_path, SMOKE)
        blobs = []
        for name, workers in (("w1", "1"), ("w2", "2")):
            out = tmp_path / name
            rc = cli.main(["train", "--config", str(cfg_path), "--out", str(out),
                           "--workers", workers])
            assert rc == 0
            blobs.append((out / "metrics.csv").read_bytes())
        assert blobs[0] == blobs[1]

    def test_missing_dataset_exits_2_without_model(self, tmp_path):
        text = SMOKE.replace("dataset.kind = synth",
                             "dataset.kind = csv\ndataset.path = missing.csv")
        cfg_path = write_cfg(tmp_path, text)
        out = tmp_path / "broken"
        rc = cli.main(["train", "--config", str(cfg_path), "--out", str(out)])
        assert rc == 2
        assert not (out / "final_model.txt").exists()

    def test_k_zero_persists_initial_model(self, tmp_path):
        cfg_path = write_cfg(tmp_path, SMOKE.replace("train.K = 2", "train.K = 0"))
        out = tmp_path / "k0"
        assert cli.main(["train", "--config", str(cfg_path), "--out", str(out)]) == 0
        rows = list(csv.reader(open(out / "metrics.csv", encoding="utf-8")))
        assert len(rows) == 1  # header only
        assert (out / "final_model.txt").exists()

    def test_seed_override_changes_artifacts(self, tmp_path):
        cfg_path = write_cfg(tmp_path, SMOKE)
        outs = []
        for seed in ("5", "6"):
            out = tmp_path / f"s{seed}"
            assert cli.main(["train", "--config", str(cfg_path), "--out", str(out),
                             "--seed", seed]) == 0
            outs.append((out / "metrics.csv").read_bytes())
        assert outs[0] != outs[1]


class TestCmdCompare:
    def test_two_methods_artifacts(self, tmp_path):
        cfg_path = write_cfg(tmp_path, SMOKE)
        out = tmp_path / "cmp"
        rc = cli.main(["compare", "--config", str(cfg_path), "--out", str(out),
                       "--methods", "qfl,spqfl"])
        assert rc == 0
        assert (out / "qfl" / "metrics.csv").exists()
        assert (out / "spqfl" / "metrics.csv").exists()
        rows = list(csv.reader(open(out / "summary.csv", encoding="utf-8")))
        assert rows[0] == ["method", "final_loss", "final_acc",
                           "rounds_to_threshold", "delta_acc_vs_first"]
        assert [r[0] for r in rows[1:]] == ["qfl", "spqfl"]
        # signed delta column: qfl row is the reference, so exactly 0
        assert float(rows[1][4]) == 0.0
        delta = float(rows[2][4])
        assert delta == pytest.approx(float(rows[2][2]) - float(rows[1][2]), abs=1e-12)

    def test_single_method_usage_error(self, tmp_path):
        cfg_path = write_cfg(tmp_path, SMOKE)
        rc = cli.main(["compare", "--config", str(cfg_path),
                       "--out", str(tmp_path / "x"), "--methods", "spqfl"])
        assert rc == 2

    def test_unknown_method(self, tmp_path):
        cfg_path = write_cfg(tmp_path, SMOKE)
        rc = cli.main(["compare", "--config", str(cfg_path),
                       "--out", str(tmp_path / "x"), "--methods", "qfl,fancy"])
        assert rc == 2


class TestCmdSweepShots:
    def test_three_values(self, tmp_path):
        cfg_path = write_cfg(tmp_path, SMOKE)
        out = tmp_path / "sweep"
        rc = cli.main(["sweep-shots", "--config", str(cfg_path), "--out", str(out),
                       "--shots", "6,2,4"])
        assert rc == 0
        for m in (2, 4, 6):
            assert (out / f"M{m}" / "metrics.csv").exists()
        rows = list(csv.reader(open(out / "sweep_summary.csv", encoding="utf-8")))
        assert rows[0] == ["shots", "final_loss"]
        assert [r[0] for r in rows[1:]] == ["2", "4", "6"]  # ascending

    def test_duplicates_rejected(self, tmp_path):
        cfg_path = write_cfg(tmp_path, SMOKE)
        rc = cli.main(["sweep-shots", "--config", str(cfg_path),
                       "--out", str(tmp_path / "x"), "--shots", "4,4"])
        assert rc == 2

    def test_empty_rejected(self, tmp_path):
        cfg_path = write_cfg(tmp_path, SMOKE)
        rc = cli.main(["sweep-shots", "--config", str(cfg_path),
                       "--out", str(tmp_path / "x"), "--shots", ","])
        assert rc == 2


class TestCmdVerifyBounds:
    def test_passes_and_prints_convention(self, tmp_path, capsys):
        import time

        cfg_path = write_cfg(tmp_path, SMOKE)
        started = time.perf_counter()
        rc = cli.main(["verify-bounds", "--config", str(cfg_path),
                       "--out", str(tmp_path / "vb")])
        assert time.perf_counter() - started < 120
        captured = capsys.readouterr().out
        assert rc == 0
        assert "nu=1.0" in captured and "Tr(H^2)=2" in captured
        assert "exact_mode_var" in captured
        assert "FAIL" not in captured
        rows = list(csv.reader(open(tmp_path / "vb" / "bounds.csv", encoding="utf-8")))
        assert rows[0] == ["quantity", "empirical", "bound", "result"]
        assert all(r[3] == "PASS" for r in rows[1:])


class TestMetricsColumns:
    def test_schema(self):
        assert cli.METRICS_COLUMNS == [
            "round", "global_loss", "global_acc", "mean_x",
            "mean_extra_epochs", "mean_local_loss", "wall_ms",
        ]

    def test_every_row_parses(self, tmp_path):
        cfg_path = write_cfg(tmp_path, SMOKE)
        out = tmp_path / "parse"
        assert cli.main(["train", "--config", str(cfg_path), "--out", str(out)]) == 0
        with open(out / "metrics.csv", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                assert int(row["round"]) >= 1
                for col in ("global_loss", "global_acc", "mean_x",
                            "mean_extra_epochs", "mean_local_loss"):
                    assert math.isfinite(float(row[col]))
                assert int(row["wall_ms"]) >= 0
