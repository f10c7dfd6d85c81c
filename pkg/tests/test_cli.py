import csv

import pytest

from driftloc.cli import main


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def scenario_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("scenario")
    code = main(["simulate", "--preset", "office-like", "--seed", "5",
                 "--out", str(out),
                 "--width", "9", "--n-aps", "12", "--n-cis", "3",
                 "--rp-spacing", "3", "--fpr", "4", "--removal", "2:0.25"])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def model_path(scenario_dir, tmp_path_factory):
    model = tmp_path_factory.mktemp("model") / "model.stne"
    code = main(["train",
                 "--floorplan", str(scenario_dir / "floorplan.csv"),
                 "--fingerprints", str(scenario_dir / "fingerprints.csv"),
                 "--train-ci", "0", "--fpr", "4", "--embed-dim", "3",
                 "--epochs", "3", "--batch", "16", "--seed", "1",
                 "--out", str(model)])
    assert code == 0
    return model


def test_simulate_writes_three_csvs(scenario_dir):
    for name in ("floorplan.csv", "fingerprints.csv", "ground_truth.csv"):
        assert (scenario_dir / name).exists()


def test_train_then_eval(scenario_dir, model_path, tmp_path, capsys):
    report = tmp_path / "report.csv"
    code, out, err = run(["eval", "--model", str(model_path),
                          "--fingerprints", str(scenario_dir / "fingerprints.csv"),
                          "--k", "3", "--baseline", "--report", str(report)],
                         capsys)
    assert code == 0, err
    rows = list(csv.reader(report.open()))
    assert rows[0] == ["ci", "method", "n", "mean_error_m"]
    methods = {r[1] for r in rows[1:]}
    assert methods == {"embedding-knn", "raw-knn"}
    assert "overall mean error" in out


def test_eval_with_explicit_floorplan(scenario_dir, model_path, tmp_path, capsys):
    report = tmp_path / "report.csv"
    code, _, err = run(["eval", "--model", str(model_path),
                        "--fingerprints", str(scenario_dir / "fingerprints.csv"),
                        "--floorplan", str(scenario_dir / "floorplan.csv"),
                        "--report", str(report)], capsys)
    assert code == 0, err
    assert report.exists()


def test_predict_prints_locations(scenario_dir, model_path, tmp_path, capsys):
    # reuse the fingerprint CSV as a scan file; rp_id/ci columns are skipped
    code, out, err = run(["predict", "--model", str(model_path),
                          "--scan", str(scenario_dir / "fingerprints.csv"),
                          "--k", "3"], capsys)
    assert code == 0, err
    lines = out.strip().splitlines()
    assert lines[0] == "x_m,y_m,rp_id"
    first = lines[1].split(",")
    assert len(first) == 3
    float(first[0]), float(first[1]), int(first[2])


def test_predict_partial_scan(scenario_dir, model_path, tmp_path, capsys):
    # a scan covering a subset of APs plus an unknown AP column
    fps = (scenario_dir / "fingerprints.csv").read_text().splitlines()
    header = fps[0].split(",")
    scan = tmp_path / "scan.csv"
    scan.write_text(f"{header[2]},ap_unknown\n-60,-40\n")
    code, out, err = run(["predict", "--model", str(model_path),
                          "--scan", str(scan), "--k", "1"], capsys)
    assert code == 0, err
    assert len(out.strip().splitlines()) == 2


def test_gradcheck_passes(capsys):
    code, out, _ = run(["gradcheck", "--seed", "3"], capsys)
    assert code == 0
    assert "max relative gradient error" in out


def test_sweep_fpr(scenario_dir, tmp_path, capsys):
    report = tmp_path / "sweep.csv"
    code, out, err = run(["sweep-fpr",
                          "--floorplan", str(scenario_dir / "floorplan.csv"),
                          "--fingerprints", str(scenario_dir / "fingerprints.csv"),
                          "--fprs", "1,2", "--repeats", "1", "--seed", "2",
                          "--embed-dim", "3", "--epochs", "2", "--batch", "16",
                          "--report", str(report)], capsys)
    assert code == 0, err
    rows = list(csv.reader(report.open()))
    assert rows[0] == ["fpr", "ci", "mean_error_m"]
    assert [r for r in rows if r[1] == "overall"]


def test_eval_without_training_ci(scenario_dir, model_path, tmp_path, capsys):
    # fingerprints from later CIs only: eval scores everything, and the
    # baseline (which needs the training partition) is refused
    lines = (scenario_dir / "fingerprints.csv").read_text().splitlines()
    later = [lines[0]] + [l for l in lines[1:] if l.split(",")[1] != "0"]
    fps = tmp_path / "later.csv"
    fps.write_text("\n".join(later) + "\n")

    report = tmp_path / "r.csv"
    code, _, err = run(["eval", "--model", str(model_path),
                        "--fingerprints", str(fps), "--report", str(report)],
                       capsys)
    assert code == 0, err
    rows = list(csv.reader(report.open()))
    assert {r[0] for r in rows[1:]} == {"1", "2"}

    code, _, err = run(["eval", "--model", str(model_path),
                        "--fingerprints", str(fps), "--baseline",
                        "--report", str(report)], capsys)
    assert code == 1
    assert "baseline" in err


def test_missing_file_fails_cleanly(capsys):
    code, _, err = run(["eval", "--model", "nope.stne",
                        "--fingerprints", "nope.csv", "--report", "r.csv"],
                       capsys)
    assert code == 1
    assert "error:" in err


def test_malformed_dataset_fails_cleanly(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("rp_id,x_m\n0,0\n")
    code, _, err = run(["train", "--floorplan", str(bad),
                        "--fingerprints", str(bad), "--seed", "0",
                        "--out", str(tmp_path / "m.stne")], capsys)
    assert code == 1
    assert "error:" in err


def test_determinism_across_runs(scenario_dir, tmp_path):
    m1, m2 = tmp_path / "m1.stne", tmp_path / "m2.stne"
    for m in (m1, m2):
        code = main(["train",
                     "--floorplan", str(scenario_dir / "floorplan.csv"),
                     "--fingerprints", str(scenario_dir / "fingerprints.csv"),
                     "--fpr", "4", "--embed-dim", "3", "--epochs", "2",
                     "--batch", "16", "--seed", "9", "--out", str(m)])
        assert code == 0
    assert m1.read_bytes() == m2.read_bytes()
