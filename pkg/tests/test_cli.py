import json

import pytest

from backend.cli import EXIT_API, EXIT_LOCAL, EXIT_OK, EXIT_USAGE, run_command
from backend.formats import parse_arff
from backend.tasks import parse_task_document
from factories import TWO_ROW_ARFF, blobs_arff, classification_csv, flow_spec

SERVER = "http://testserver"


@pytest.fixture
def expdb(client):
    def invoke(*argv):
        return run_command(list(argv), server_url=SERVER, session=client)

    return invoke


@pytest.fixture
def blobs_file(tmp_path):
    path = tmp_path / "blobs.arff"
    path.write_text(blobs_arff(), encoding="utf-8")
    return path


def test_search_with_empty_store(expdb):
    code, out, err = expdb("search", "iris")
    assert code == EXIT_OK, err
    assert out.strip() == "(no rows)"


def test_search_finds_dataset(expdb, client):
    client.post(
        "/api/v1/datasets", params={"name": "iris", "target": "c"}, content=TWO_ROW_ARFF.encode("utf-8")
    )
    code, out, err = expdb("search", "iris")
    assert code == EXIT_OK, err
    lines = out.strip().splitlines()
    assert len(lines) == 2
    assert lines[1].split() == ["dataset", "1", "iris", "name"]


def test_usage_errors(expdb):
    assert expdb("dataset")[0] == EXIT_USAGE
    assert expdb("frobnicate")[0] == EXIT_USAGE
    code, _, err = expdb("dataset", "get", "seven")
    assert code == EXIT_USAGE
    assert "error:" in err


def test_help_exits_cleanly(expdb):
    code, out, _ = expdb("--help")
    assert code == EXIT_OK
    assert "dataset" in out


def test_api_errors_exit_two(expdb):
    code, out, err = expdb("dataset", "get", "999")
    assert code == EXIT_API
    assert out == ""
    assert "unknown_dataset" in err


def test_unreachable_server():
    code, _, err = run_command(["search", "x"], server_url="http://127.0.0.1:9")
    assert code == EXIT_API
    assert "cannot reach" in err


def test_missing_predictions_file(expdb, tmp_path):
    code, _, err = expdb("run", "submit", str(tmp_path / "absent.csv"), "--task", "1", "--flow", "1")
    assert code == EXIT_LOCAL
    assert "cannot read" in err


def test_upload_and_json_output_matches_api(expdb, client, blobs_file):
    code, out, err = expdb("dataset", "upload", str(blobs_file), "--name", "blobs", "--target", "class")
    assert code == EXIT_OK, err
    assert out.strip() == "dataset 1 blobs v1 registered"

    code, out, _ = expdb("dataset", "upload", str(blobs_file), "--name", "blobs")
    assert out.strip() == "dataset 1 blobs v1 already registered"

    code, out, _ = expdb("--json", "dataset", "get", "1")
    assert code == EXIT_OK
    assert out == client.get("/api/v1/datasets/1").text

    code, out, _ = expdb("dataset", "get", "1")
    assert "default accuracy" in out
    assert "0.4" in out


def test_binary_download_needs_output(expdb, client, blobs_file, tmp_path):
    expdb("dataset", "upload", str(blobs_file), "--name", "blobs")
    code, out, _ = expdb("dataset", "file", "1", "--format", "mld")
    assert code == EXIT_USAGE
    assert out == ""

    target = tmp_path / "blobs.mld"
    code, out, _ = expdb("dataset", "file", "1", "--format", "mld", "--output", str(target))
    assert code == EXIT_OK
    assert target.read_bytes() == client.get("/api/v1/datasets/1/file", params={"format": "mld"}).content

    code, out, _ = expdb("dataset", "file", "1", "--format", "csv")
    assert out.startswith("width,height,depth,class\n")


def test_offline_convert(tmp_path):
    source = tmp_path / "tiny.arff"
    source.write_text(TWO_ROW_ARFF, encoding="utf-8")
    target = tmp_path / "tiny.csv"
    code, out, err = run_command(["convert", str(source), str(target)], server_url="http://127.0.0.1:9")
    assert code == EXIT_OK, err
    assert target.read_bytes() == b"a,c\n1.0,x\n2.0,y\n"
    assert "wrote" in out


def test_offline_convert_rejects_csv_input(tmp_path):
    source = tmp_path / "tiny.csv"
    source.write_text("a,c\n1.0,x\n", encoding="utf-8")
    code, _, _ = run_command(["convert", str(source), str(tmp_path / "tiny.arff")])
    assert code == EXIT_USAGE


def test_offline_convert_of_broken_file(tmp_path):
    source = tmp_path / "broken.arff"
    source.write_text("@relation broken\n@attribute a numeric\n", encoding="utf-8")
    code, _, err = run_command(["convert", str(source), str(tmp_path / "out.csv")])
    assert code == EXIT_LOCAL
    assert "error:" in err


def test_offline_summarize(blobs_file):
    code, out, err = run_command(["dataset", "summarize", str(blobs_file), "--target", "class"])
    assert code == EXIT_OK, err
    assert out.startswith("relation: blobs\n")
    assert "shape: 150 instances x 4 attributes" in out
    assert "default accuracy: 0.4000" in out

    code, out, _ = run_command(["dataset", "summarize", str(blobs_file), "--target", "class", "--json"])
    body = json.loads(out)
    assert body["meta_features"]["n_classes"] == 3


def test_experiment_round_trip(expdb, blobs_file, tmp_path):
    expdb("dataset", "upload", str(blobs_file), "--name", "blobs", "--target", "class")

    flow_file = tmp_path / "flow.json"
    flow_file.write_text(json.dumps(flow_spec()), encoding="utf-8")
    code, out, err = expdb("flow", "register", str(flow_file))
    assert code == EXIT_OK, err
    assert out.strip() == "flow 1 dtree 1.0 registered"

    code, out, err = expdb("--json", "task", "create", "--dataset", "1", "--folds", "5", "--seed", "17")
    assert code == EXIT_OK, err
    task = parse_task_document(out)
    assert (task.procedure.folds, task.procedure.seed) == (5, 17)

    predictions = tmp_path / "predictions.csv"
    predictions.write_text(classification_csv(task, parse_arff(blobs_arff())), encoding="utf-8")
    code, out, err = expdb(
        "run", "submit", str(predictions), "--task", "1", "--flow", "1", "--set", "max_depth=3"
    )
    assert code == EXIT_OK, err
    assert "predictive_accuracy" in out
    code, out, _ = expdb("run", "get", "1")
    assert "max_depth=3" in out

    code, out, _ = expdb("run", "submit", str(predictions), "--task", "1", "--flow", "1", "--set", "depth=3")
    assert code == EXIT_API

    code, out, _ = expdb("dataset", "leaderboard", "1", "--measure", "predictive_accuracy")
    assert code == EXIT_OK
    assert "dtree 1.0" in out

    code, out, _ = expdb("flow", "param-impact", "1", "--param", "max_depth", "--measure", "predictive_accuracy")
    assert code == EXIT_OK
    assert "mean_score" in out

    code, out, _ = expdb("compare", "--flows", "1", "--datasets", "1", "--measure", "predictive_accuracy", "--format", "csv")
    assert out.splitlines()[0] == "flow,blobs v1"

    code, out, err = expdb("challenge", "create", "--name", "cup", "--tasks", "1")
    assert code == EXIT_OK, err
    code, out, _ = expdb("challenge", "leaderboard", "1")
    assert "dtree 1.0" in out
    assert expdb("challenge", "create", "--name", "cup", "--tasks", "one")[0] == EXIT_USAGE
