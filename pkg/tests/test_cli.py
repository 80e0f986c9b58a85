import csv
import io
import json

import pytest

from spwitness import cli, fock

SMALL = ["--samples-per-setting", "2000", "--seed", "3"]


def _run(capsys, argv):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_sweep_header_and_rows(capsys):
    code, out, _ = _run(capsys, ["sweep", "--eta-grid", "1,0.5,0.1", "--bounds", "sdp_enhanced,lossy_sym", *SMALL])
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == cli.sweep_header(["sdp_enhanced", "lossy_sym"])
    assert len(rows) == 4
    assert [float(r[0]) for r in rows[1:]] == [1.0, 0.5, 0.1]
    assert float(rows[3][1]) == pytest.approx(50.0)
    assert rows[1][rows[0].index("verdict_sdp_enhanced")] == "witnessed"


def test_sweep_reruns_are_byte_identical(tmp_path):
    paths = [tmp_path / f"run{i}.csv" for i in range(3)]
    base = ["sweep", "--eta-grid", "0.9,0.3", "--source-p1", "0.68", "--source-p2", "0.02", *SMALL]
    assert cli.main(base + ["-o", str(paths[0])]) == 0
    assert cli.main(base + ["-o", str(paths[1])]) == 0
    assert cli.main(base + ["--workers", "2", "-o", str(paths[2])]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes() == paths[2].read_bytes()


def test_sweep_seed_changes_samples(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    cli.main(["sweep", "--eta-grid", "0.5", "--samples-per-setting", "2000", "--seed", "1", "-o", str(a)])
    cli.main(["sweep", "--eta-grid", "0.5", "--samples-per-setting", "2000", "--seed", "2", "-o", str(b)])
    assert a.read_bytes() != b.read_bytes()


def test_tau_schedule_grid():
    cfg = cli.ExperimentConfig(gamma=1.0, taus=[0.0, 0.5])
    assert cfg.grid() == [1.0, pytest.approx(fock.temporal_overlap_efficiency(1.0, 0.5))]
    with pytest.raises(cli.UsageError):
        cli.ExperimentConfig(gamma=1.0).validate()


def test_certify_exit_codes(capsys):
    code, out, _ = _run(capsys, ["certify"])
    report = json.loads(out)
    assert code == 0 and report["all_pass"] and report["schema"] == cli.CERTIFY_SCHEMA
    code, out, _ = _run(capsys, ["certify", "--perturb", "1e-3"])
    assert code == 2 and not json.loads(out)["all_pass"]
    code, _, err = _run(capsys, ["certify", "--grid", "0.7"])
    assert code == 1 and "(0, 0.5]" in err


def test_verdict_ideal_is_witnessed(capsys):
    code, out, _ = _run(capsys, ["verdict", "--eta-ab", "1", *SMALL, "--require-witnessed"])
    report = json.loads(out)
    assert code == 0
    assert report["schema"] == cli.VERDICT_SCHEMA
    assert report["verdicts"]["sdp_enhanced"] == "witnessed"
    assert report["s_exact"] == pytest.approx(1.8006326323142128)
    # Exact local statistics remove the estimation noise that the original bound is sensitive to.
    code, out, _ = _run(capsys, ["verdict", "--eta-ab", "1", *SMALL, "--stats-source", "exact"])
    assert json.loads(out)["verdicts"] == {"sdp_enhanced": "witnessed", "sdp_original": "witnessed"}


def test_verdict_heavy_loss_not_witnessed(capsys):
    argv = ["verdict", "--eta-ab", "0.02", "--loss-mode", "sym", "--samples-per-setting", "10000", "--seed", "0"]
    code, out, _ = _run(capsys, argv)
    report = json.loads(out)
    assert code == 0
    assert report["verdicts"]["sdp_enhanced"] == "not_witnessed"
    assert report["km"] == pytest.approx(fock.km_equivalent(0.02))
    code, _, _ = _run(capsys, argv + ["--require-witnessed"])
    assert code == 2


def test_verdict_needs_single_point(capsys):
    code, _, err = _run(capsys, ["verdict", "--eta-grid", "1,0.5", *SMALL])
    assert code == 1 and "single" in err


@pytest.mark.parametrize("argv, needle", [
    (["sweep", "--bounds", "magic"], "unknown bound"),
    (["sweep", "--loss-mode", "explicit"], "eta_A and eta_B"),
    (["sweep", "--eta-grid", "1.5"], "(0, 1]"),
    (["sweep", "--samples-per-setting", "10"], "at least"),
])
def test_usage_errors(capsys, argv, needle):
    code, _, err = _run(capsys, argv)
    assert code == 1 and needle in err


def test_argparse_errors_exit_with_usage_code(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["sweep", "--eta-grid", "a,b"])
    assert info.value.code == 1


def test_config_file_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"source_p1": 0.68, "source_p2": 0.02, "eta_grid": [0.5], "samples_per_setting": 2000,
                               "bounds": ["qubit"]}))
    code, out, _ = _run(capsys, ["sweep", "--config", str(cfg), "--eta-grid", "0.25"])
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert float(rows[1][0]) == 0.25 and "bound_qubit" in rows[0]
    cfg.write_text(json.dumps({"nonsense": 1}))
    code, _, err = _run(capsys, ["sweep", "--config", str(cfg)])
    assert code == 1 and "unknown config keys" in err


def test_sample_extract_verdict_roundtrip(tmp_path, capsys):
    path = tmp_path / "samples.csv"
    code, _, _ = _run(capsys, ["sample", "--eta-ab", "0.5", "--samples-per-setting", "5000", "--seed", "4",
                               "-o", str(path)])
    assert code == 0
    code, out, _ = _run(capsys, ["extract", str(path)])
    stats = json.loads(out)
    assert code == 0 and stats["schema"] == cli.STATS_SCHEMA
    exact = fock.local_photon_probs(fock.lossy_bell_state(0.5**0.5, 0.5**0.5))
    for key, ex in zip(("stats_A", "stats_B"), exact):
        assert abs(stats[key]["p0"] - ex.p0) < 4 * stats[key]["sigma0"]
    code, out, _ = _run(capsys, ["verdict", "--samples", str(path)])
    report = json.loads(out)
    assert code == 0 and report["eta_ab"] is None
    # The CSV round trip reproduces the simulated witness exactly.
    code, out2, _ = _run(capsys, ["verdict", "--eta-ab", "0.5", "--samples-per-setting", "5000", "--seed", "4"])
    assert json.loads(out2)["witness"]["s"] == report["witness"]["s"]


def test_sample_requires_output(capsys):
    code, _, err = _run(capsys, ["sample", "--eta-ab", "0.5", *SMALL])
    assert code == 1 and "--output" in err


def test_extract_missing_file(capsys, tmp_path):
    code, _, err = _run(capsys, ["extract", str(tmp_path / "none.csv")])
    assert code == 1
