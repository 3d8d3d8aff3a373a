import hashlib
from pathlib import Path

import pytest

from rembm.cli import main
from rembm.config import ConfigError, RunConfig

SMALL_CONFIG = """\
[scenario]
n_ues = 6
duration_s = 4

[seeds]
channel_seed = 2
traffic_seed = 3
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """One small end-to-end pipeline shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "run.ini"
    cfg.write_text(SMALL_CONFIG)
    assert main(["build-rem", "--config", str(cfg), "--passes", "10",
                 "--out", str(root / "rem.txt")]) == 0
    assert main(["train", "--config", str(cfg), "--rem", str(root / "rem.txt"),
                 "--beta", "1", "--out", str(root / "brmin.pol")]) == 0
    assert main(["train", "--config", str(cfg), "--rem", str(root / "rem.txt"),
                 "--beta", "0", "--out", str(root / "rsmax.pol")]) == 0
    assert main(["simulate", "--config", str(cfg), "--controller", "baseline",
                 "--delta-ho", "5", "--out", str(root / "runs" / "base5")]) == 0
    assert main(["simulate", "--config", str(cfg), "--controller", "policy",
                 "--policy", str(root / "brmin.pol"), "--rem", str(root / "rem.txt"),
                 "--out", str(root / "runs" / "brmin")]) == 0
    assert main(["simulate", "--config", str(cfg), "--controller", "policy",
                 "--policy", str(root / "rsmax.pol"),
                 "--out", str(root / "runs" / "rsmax")]) == 0
    return root


class TestConfig:
    def test_defaults_match_reference_parameters(self):
        cfg = RunConfig.defaults()
        assert cfg.get("channel", "n_beams") == 16
        assert cfg.get("channel", "center_frequency_ghz") == 26.0
        assert cfg.get("scenario", "ssb_period_ms") == 20.0
        assert cfg.get("scenario", "n_ues") == 300
        assert cfg.get("scenario", "delta_th_db") == 8.0
        assert cfg.get("rem", "tile_size_m") == 2.0
        assert cfg.directions() == (0.0, 180.0)

    def test_round_trip_is_canonical(self):
        cfg = RunConfig.from_text(SMALL_CONFIG)
        canonical = cfg.to_text()
        assert RunConfig.from_text(canonical).to_text() == canonical
        assert cfg.get("scenario", "n_ues") == 6

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            RunConfig.from_text("[scenario]\nwarp_speed = 9\n")

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError):
            RunConfig.from_text("[wormhole]\nx = 1\n")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError):
            RunConfig.from_text("[scenario]\nn_ues = lots\n")

    def test_checksum_stable(self):
        a = RunConfig.from_text(SMALL_CONFIG).checksum()
        b = RunConfig.from_text(SMALL_CONFIG + "\n").checksum()
        assert a == b

    def test_grid_must_tile_cell_exactly(self):
        cfg = RunConfig.defaults()
        cfg.values["rem"]["tile_size_m"] = 3.0
        with pytest.raises(ConfigError):
            cfg.build_grid()


class TestBuildRem:
    def test_artifact_header(self, workdir):
        head = (workdir / "rem.txt").read_text().splitlines()[0]
        assert head.startswith("REMv1 g=2 ")

    def test_same_seed_same_checksum(self, workdir, tmp_path):
        cfg = workdir / "run.ini"
        out = tmp_path / "rem_again.txt"
        assert main(["build-rem", "--config", str(cfg), "--passes", "10",
                     "--out", str(out)]) == 0
        assert (hashlib.sha256(out.read_bytes()).hexdigest()
                == hashlib.sha256((workdir / "rem.txt").read_bytes()).hexdigest())

    def test_zero_passes_is_usage_error(self, workdir, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["build-rem", "--config", str(workdir / "run.ini"),
                  "--passes", "0", "--out", "x.txt"])
        assert exc.value.code == 2

    def test_bad_config_exits_2(self, tmp_path):
        bad = tmp_path / "bad.ini"
        bad.write_text("[scenario]\nn_ues = -5\n")
        assert main(["build-rem", "--config", str(bad), "--out",
                     str(tmp_path / "r.txt")]) == 2


class TestTrain:
    def test_beta_bounds_are_usage_errors(self, workdir):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--config", str(workdir / "run.ini"),
                  "--rem", str(workdir / "rem.txt"), "--beta", "1.5",
                  "--out", "x.pol"])
        assert exc.value.code == 2

    def test_retraining_is_byte_identical(self, workdir, tmp_path):
        out = tmp_path / "again.pol"
        assert main(["train", "--config", str(workdir / "run.ini"),
                     "--rem", str(workdir / "rem.txt"), "--beta", "1",
                     "--out", str(out)]) == 0
        assert out.read_bytes() == (workdir / "brmin.pol").read_bytes()

    def test_artifact_headers_carry_intent(self, workdir):
        assert (workdir / "brmin.pol").read_text().startswith("POLv1 beta=1 ")
        assert (workdir / "rsmax.pol").read_text().startswith("POLv1 beta=0 ")


class TestSimulate:
    def test_kpi_row_labeled(self, workdir):
        lines = [l for l in (workdir / "runs" / "base5" / "kpi.csv")
                 .read_text().splitlines() if not l.startswith("#")]
        assert lines[0].startswith("controller,")
        assert lines[1].startswith("baseline,5,,")

    def test_policy_without_artifact_is_usage_error(self, workdir):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--config", str(workdir / "run.ini"),
                  "--controller", "policy", "--out", "x"])
        assert exc.value.code == 2

    def test_rerun_reproduces_outputs(self, workdir, tmp_path):
        out = tmp_path / "again"
        assert main(["simulate", "--config", str(workdir / "run.ini"),
                     "--controller", "baseline", "--delta-ho", "5",
                     "--out", str(out)]) == 0
        for name in ("kpi.csv", "rsrp_samples.csv", "trace.csv", "decisions.csv"):
            assert (out / name).read_bytes() == \
                (workdir / "runs" / "base5" / name).read_bytes()

    def test_outputs_have_comment_headers(self, workdir):
        text = (workdir / "runs" / "base5" / "kpi.csv").read_text()
        assert text.startswith("# rembm ")
        assert "channel_seed=2 traffic_seed=3 config_sha256=" in text

    def test_policy_run_writes_e2_log(self, workdir):
        log = workdir / "runs" / "brmin" / "e2_commands.log"
        assert log.exists()
        for line in log.read_text().splitlines():
            assert line.startswith("E2 ")


class TestReport:
    def test_report_over_runs(self, workdir, capsys):
        assert main(["report", "--in", str(workdir / "runs")]) == 0
        printed = capsys.readouterr().out
        assert "baseline 5dB" in printed
        assert "br-min" in printed and "rsrp-max" in printed
        summary = (workdir / "runs" / "summary.csv").read_text()
        assert summary.startswith("# rembm ")
        header = [l for l in summary.splitlines() if not l.startswith("#")][0]
        assert "p10_rsrp_dbm" in header and "rlf_ratio_vs_brmin" in header
        for fig in ("kpi_rates.png", "rsrp_cdf.png", "rsrp_trace.png"):
            assert (workdir / "runs" / fig).stat().st_size > 0

    def test_ratio_column_uses_brmin_reference(self, workdir):
        summary = (workdir / "runs" / "summary.csv").read_text()
        rows = [l.split(",") for l in summary.splitlines()
                if l and not l.startswith("#")][1:]
        by_label = {r[0]: r for r in rows}
        base = by_label["baseline"]
        brmin = by_label["br-min"]
        expected = float(base[4]) / float(brmin[4])
        assert float(base[6]) == pytest.approx(expected, abs=1e-3)
        assert brmin[6] == ""

    def test_empty_input_dir_exits_1(self, tmp_path):
        assert main(["report", "--in", str(tmp_path)]) == 1

    def test_custom_percentile(self, workdir, tmp_path):
        out = tmp_path / "rep"
        assert main(["report", "--in", str(workdir / "runs"),
                     "--percentile", "0.5", "--out", str(out)]) == 0
        header = [l for l in (out / "summary.csv").read_text().splitlines()
                  if not l.startswith("#")][0]
        assert "p50_rsrp_dbm" in header


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.startswith("rembm ")
