import json

import pandas as pd
import pytest

from snh.main import main
from snh.paramselect import write_samples

TINY = ["--depth", "2", "--width", "4", "--epochs", "5", "--k", "2"]


def error_body(capsys) -> dict:
    err = capsys.readouterr().err.strip().splitlines()
    return json.loads(err[-1])["error"]


def run_ok(capsys, *argv) -> dict:
    assert main(list(argv)) == 0
    return json.loads(capsys.readouterr().out)


@pytest.fixture
def dataset(data_dir, capsys) -> str:
    run_ok(capsys, "synth", "dataset", "--n", "2000", "--side", "400", "--seed", "1", "-o", "d.csv")
    return "d.csv"


def test_synth_dataset_writes_sidecar(dataset, data_dir):
    assert (data_dir / "d.csv").is_file()
    meta = json.loads((data_dir / "d.region.json").read_text())
    assert meta["n"] == 2000
    assert meta["region"]["side"] == 400.0


def test_ingest_projects_and_reports_bad_rows(data_dir, capsys):
    (data_dir / "raw.csv").write_text("lat,lon,user\n0.0,0.0,a\n0.0005,0.0005,b\n")
    out = run_ok(capsys, "ingest", "--input", "raw.csv", "--side", "1000", "-o", "p.csv")
    assert out["n"] == 2
    (data_dir / "bad.csv").write_text("lat,lon\n0.0,0.0\nnorth,1.0\n")
    assert main(["ingest", "--input", "bad.csv", "-o", "q.csv"]) == 2
    body = error_body(capsys)
    assert body["code"] == "INVALID_ROWS"
    assert body["lines"] == [3]


def test_missing_dataset_exits_with_user_error(data_dir, capsys):
    assert main(["fit", "--dataset", "nope.csv", "--rho", "50"]) == 2
    assert error_body(capsys)["code"] == "DATASET_NOT_FOUND"


def test_missing_dataset_is_reported_before_paramselect_model(data_dir, capsys):
    assert main(["fit", "--dataset", "nope.csv"]) == 2
    assert error_body(capsys)["code"] == "DATASET_NOT_FOUND"


def test_paramselect_rho_without_model(dataset, capsys):
    assert main(["fit", "--dataset", dataset]) == 2
    assert error_body(capsys)["code"] == "PARAMSELECT_MODEL_REQUIRED"


def test_invalid_config_is_rejected(dataset, capsys):
    assert main(["fit", "--dataset", dataset, "--rho", "50", "--epsilon", "-1"]) == 2
    assert error_body(capsys)["code"] == "INVALID_CONFIG"


def test_config_file_values_are_overridden_by_flags(dataset, data_dir, capsys):
    (data_dir / "run.json").write_text(json.dumps({"rho": 80.0, "epsilon": 0.5, "ladder": {"k": 1}}))
    out = run_ok(capsys, "fit", "--config", "run.json", "--dataset", dataset, "--rho", "50",
                 "--depth", "2", "--width", "4", "--epochs", "5", "-o", "m")
    assert out["rho"] == 50.0
    assert out["epsilon"] == 0.5
    assert len(out["sizes"]) == 1


def test_fit_answer_audit_eval(dataset, data_dir, capsys):
    out = run_ok(capsys, "fit", "--dataset", dataset, "--rho", "50", "--epsilon", "1.0", *TINY, "-o", "m")
    manifest = json.loads((data_dir / "m" / "manifest.json").read_text())
    assert len(manifest["models"]) == 2
    for entry in manifest["models"]:
        assert (data_dir / "m" / entry["file"]).is_file()
    resolved = json.loads((data_dir / "m" / "config.resolved.json").read_text())
    assert resolved["rho"] == 50.0
    assert out["audit"]["post_collection_reads"] == 0

    pd.DataFrame({"cx": [0.0, 100.0], "cy": [0.0, 50.0], "r": [50.0, 80.0]}).to_csv(data_dir / "q.csv", index=False)
    assert main(["answer", "--model", "m", "--queries", "q.csv"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "cx,cy,r,answer"
    assert len(lines) == 3
    assert main(["answer", "--model", "m", "--queries", "q.csv", "--identity", "-o", "a.csv"]) == 0
    capsys.readouterr()
    assert (pd.read_csv(data_dir / "a.csv")["answer"] >= 0).all()

    report = run_ok(capsys, "audit", "--model", "m")
    assert report["compliant"] is True
    assert report["point_reads"] == 2000

    summaries = run_ok(capsys, "eval", "--model", "m", "--dataset", dataset, "--workload-count", "50",
                       "-o", "ev")
    assert set(summaries) == {"snh", "identity"}
    assert (data_dir / "ev" / "snh.csv").is_file()
    assert (data_dir / "ev" / "summary.json").is_file()


def test_audit_reports_violation(dataset, data_dir, capsys):
    run_ok(capsys, "fit", "--dataset", dataset, "--rho", "50", *TINY, "-o", "m")
    audit_path = data_dir / "m" / "audit.json"
    audit = json.loads(audit_path.read_text())
    audit["post_collection_reads"] = 5
    audit_path.write_text(json.dumps(audit))
    assert main(["audit", "--model", "m"]) == 3
    body = error_body(capsys)
    assert body["code"] == "AUDIT_VIOLATION"
    assert body["audit"]["compliant"] is False


def test_synth_workload(data_dir, capsys):
    out = run_ok(capsys, "synth", "workload", "--side", "400", "--workload-count", "25", "-o", "w.csv")
    assert out["count"] == 25
    frame = pd.read_csv(data_dir / "w.csv")
    assert list(frame.columns) == ["cx", "cy", "r"]
    assert frame["r"].between(25.0, 100.0).all()


def test_sweep_writes_results(dataset, data_dir, capsys):
    out = run_ok(capsys, "sweep", "--dataset", dataset, "--methods", "identity", "ug", "--epsilons", "0.5", "1.0",
                 "--rho", "40", "--workload-count", "30", "-o", "sw")
    assert out["rows"] == 2 * 2 * 3
    assert out["failed_rows"] == 0
    frame = pd.read_csv(data_dir / "sw" / "results.csv")
    assert set(frame["method"]) == {"identity", "ug"}
    assert (data_dir / "sw" / "config.resolved.json").is_file()


def test_paramselect_train_and_predict(data_dir, capsys, param_samples):
    write_samples(param_samples(), data_dir / "samples.csv")
    out = run_ok(capsys, "paramselect-train", "--samples", "samples.csv", "--no-entropy", "--n-trees", "20",
                 "--side", "20000", "-o", "ps")
    assert out["features"] == ["n", "epsilon", "inv_ne", "inv_sqrt_ne"]
    assert set(out["rho_selection_error"]) == {"ug", "paramselect"}
    model = str(data_dir / "ps" / "paramselect.json")
    first = run_ok(capsys, "paramselect-predict", "--paramselect-model", model, "--n", "100000",
                   "--epsilon", "0.2")
    second = run_ok(capsys, "paramselect-predict", "--paramselect-model", model, "--n", "100000",
                    "--epsilon", "0.2")
    assert first["rho"] == second["rho"] > 0


def test_paramselect_predict_needs_model(data_dir, capsys):
    assert main(["paramselect-predict", "--n", "1000", "--paramselect-model", "missing.json"]) == 2
    assert error_body(capsys)["code"] == "PARAMSELECT_MODEL_REQUIRED"
