import csv

import pytest

from dppred.cli import main


@pytest.fixture(scope="module")
def medical_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("medical")
    train, test, schema = root / "train.csv", root / "test.csv", root / "schema.csv"
    code = main(["synth", "--kind", "medical", "--n-train", "1200", "--n-test", "600",
                 "--noise", "0.001", "--seed", "5",
                 "--out-train", str(train), "--out-test", str(test),
                 "--out-schema", str(schema)])
    assert code == 0
    return {"train": train, "test": test, "schema": schema, "root": root}


@pytest.fixture(scope="module")
def sweep_files(tmp_path_factory):
    # the k-sweep shape needs enough data that test accuracy is not
    # dominated by small-sample noise
    root = tmp_path_factory.mktemp("sweep_data")
    train, test, schema = root / "train.csv", root / "test.csv", root / "schema.csv"
    code = main(["synth", "--kind", "medical", "--n-train", "2500", "--n-test", "1250",
                 "--noise", "0.001", "--seed", "5",
                 "--out-train", str(train), "--out-test", str(test),
                 "--out-schema", str(schema)])
    assert code == 0
    return {"train": train, "test": test, "schema": schema}


@pytest.fixture(scope="module")
def subtyped_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("subtyped")
    train, test, schema = root / "train.csv", root / "test.csv", root / "schema.csv"
    code = main(["synth", "--kind", "subtyped", "--groups", "3",
                 "--n-train", "1500", "--n-test", "600", "--seed", "6",
                 "--out-train", str(train), "--out-test", str(test),
                 "--out-schema", str(schema)])
    assert code == 0
    return {"train": train, "test": test, "schema": schema, "root": root}


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestTrainCommand:
    def test_train_writes_model_with_default_k(self, medical_files, tmp_path, capsys):
        out = tmp_path / "m.model"
        code = main(["train", "--data", str(medical_files["train"]),
                     "--schema", str(medical_files["schema"]),
                     "--out", str(out), "--trees", "30", "--seed", "2"])
        assert code == 0
        text = out.read_text()
        assert text.startswith("dppred model format 1")
        assert text.count("\n# ") <= 20  # default k for classification
        printed = capsys.readouterr().out
        assert "train accuracy" in printed

    def test_missing_data_flag_is_usage_error(self):
        assert main(["train", "--schema", "s", "--out", "m"]) == 2

    def test_zero_k_is_usage_error(self, medical_files, tmp_path):
        code = main(["train", "--data", str(medical_files["train"]),
                     "--schema", str(medical_files["schema"]),
                     "--out", str(tmp_path / "m.model"), "--k", "0"])
        assert code == 2

    def test_missing_file_is_runtime_error(self, medical_files, tmp_path):
        code = main(["train", "--data", str(tmp_path / "nope.csv"),
                     "--schema", str(medical_files["schema"]),
                     "--out", str(tmp_path / "m.model")])
        assert code == 1

    def test_byte_identical_model_files(self, medical_files, tmp_path):
        a, b = tmp_path / "a.model", tmp_path / "b.model"
        args = ["train", "--data", str(medical_files["train"]),
                "--schema", str(medical_files["schema"]),
                "--trees", "25", "--seed", "9"]
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_trace_file(self, medical_files, tmp_path):
        out, trace = tmp_path / "m.model", tmp_path / "trace.csv"
        code = main(["train", "--data", str(medical_files["train"]),
                     "--schema", str(medical_files["schema"]),
                     "--out", str(out), "--trees", "25", "--seed", "3",
                     "--k", "8", "--trace", str(trace)])
        assert code == 0
        rows = read_csv(trace)
        assert rows[0] == ["round", "pattern_index", "metric"]
        assert len(rows) == 9


class TestPredictEvaluate:
    def test_predict_then_evaluate(self, medical_files, tmp_path, capsys):
        model = tmp_path / "m.model"
        assert main(["train", "--data", str(medical_files["train"]),
                     "--schema", str(medical_files["schema"]),
                     "--out", str(model), "--trees", "30", "--seed", "2"]) == 0
        preds = tmp_path / "preds.csv"
        assert main(["predict", "--model", str(model),
                     "--data", str(medical_files["test"]), "--out", str(preds)]) == 0
        rows = read_csv(preds)
        assert rows[0] == ["row_index", "prediction", "probability"]
        assert len(rows) == 601
        assert rows[1][1] in ("yes", "no")

        capsys.readouterr()
        assert main(["evaluate", "--predictions", str(preds),
                     "--data", str(medical_files["test"]),
                     "--schema", str(medical_files["schema"])]) == 0
        printed = capsys.readouterr().out
        acc = float(printed.split("accuracy:")[1].strip())
        assert acc >= 0.97

    def test_regression_predictions_numeric(self, subtyped_files, tmp_path):
        model = tmp_path / "m.model"
        assert main(["train", "--data", str(subtyped_files["train"]),
                     "--schema", str(subtyped_files["schema"]),
                     "--out", str(model), "--trees", "30", "--seed", "4",
                     "--k", "15"]) == 0
        preds = tmp_path / "preds.csv"
        assert main(["predict", "--model", str(model),
                     "--data", str(subtyped_files["test"]), "--out", str(preds)]) == 0
        rows = read_csv(preds)
        assert rows[0] == ["row_index", "prediction"]
        float(rows[1][1])  # parses as a number


class TestSynthCommand:
    def test_files_exist_and_parse(self, medical_files):
        rows = read_csv(medical_files["train"])
        assert rows[0] == ["age", "gender", "blood_type", "lab_score", "disease"]
        assert len(rows) == 1201

    def test_deterministic_output(self, tmp_path):
        args = lambda d: ["synth", "--n-train", "50", "--n-test", "20", "--seed", "3",
                          "--out-train", str(d / "tr.csv"), "--out-test", str(d / "te.csv"),
                          "--out-schema", str(d / "s.csv")]
        d1, d2 = tmp_path / "a", tmp_path / "b"
        d1.mkdir(), d2.mkdir()
        assert main(args(d1)) == 0
        assert main(args(d2)) == 0
        assert (d1 / "tr.csv").read_bytes() == (d2 / "tr.csv").read_bytes()

    def test_bad_noise_rate(self, tmp_path):
        assert main(["synth", "--noise", "0.7", "--n-train", "10", "--n-test", "5",
                     "--out-train", str(tmp_path / "a"), "--out-test", str(tmp_path / "b"),
                     "--out-schema", str(tmp_path / "c")]) == 1


class TestSweepCommand:
    def test_k_sweep_metric_not_degrading(self, sweep_files, tmp_path):
        out = tmp_path / "sweep.csv"
        code = main(["sweep", "--data", str(sweep_files["train"]),
                     "--schema", str(sweep_files["schema"]),
                     "--test", str(sweep_files["test"]),
                     "--param", "k", "--values", "1,5,20",
                     "--trees", "50", "--seed", "2", "--out", str(out)])
        assert code == 0
        rows = read_csv(out)
        assert rows[0] == ["value", "train_metric", "test_metric"]
        assert len(rows) == 4
        test_metrics = {int(r[0]): float(r[2]) for r in rows[1:]}
        assert test_metrics[20] >= test_metrics[5]

    def test_tree_sweep_single_tree_is_no_better(self, sweep_files, tmp_path):
        out = tmp_path / "sweep.csv"
        code = main(["sweep", "--data", str(sweep_files["train"]),
                     "--schema", str(sweep_files["schema"]),
                     "--test", str(sweep_files["test"]),
                     "--param", "trees", "--values", "1,100",
                     "--seed", "2", "--out", str(out)])
        assert code == 0
        rows = read_csv(out)
        metrics = {int(r[0]): float(r[2]) for r in rows[1:]}
        assert metrics[1] <= metrics[100]

    def test_empty_values_usage_error(self, medical_files, tmp_path):
        assert main(["sweep", "--data", str(medical_files["train"]),
                     "--schema", str(medical_files["schema"]),
                     "--test", str(medical_files["test"]),
                     "--param", "k", "--values", ",",
                     "--out", str(tmp_path / "s.csv")]) == 2


class TestStratifyCommands:
    def test_stratify_train_predict_importance(self, subtyped_files, tmp_path):
        model = tmp_path / "strat.model"
        code = main(["stratify-train", "--data", str(subtyped_files["train"]),
                     "--schema", str(subtyped_files["schema"]),
                     "--out", str(model), "--trees", "40", "--seed", "3",
                     "--global-patterns", "12", "--local-patterns", "5",
                     "--groups", "3", "--gibbs-iterations", "120"])
        assert code == 0
        assert model.read_text().startswith("dppred stratified model format 1")

        preds = tmp_path / "preds.csv"
        assert main(["stratify-predict", "--model", str(model),
                     "--data", str(subtyped_files["test"]), "--out", str(preds)]) == 0
        assert len(read_csv(preds)) == 601

        imp = tmp_path / "importance.csv"
        assert main(["importance", "--model", str(model), "--out", str(imp)]) == 0
        rows = read_csv(imp)
        assert rows[0] == ["variable", "cluster", "frequency"]
        assert any(r[1] == "global" for r in rows[1:])

    def test_negative_seed_rejected(self, subtyped_files, tmp_path):
        assert main(["stratify-train", "--data", str(subtyped_files["train"]),
                     "--schema", str(subtyped_files["schema"]),
                     "--out", str(tmp_path / "m"), "--seed", "-1"]) == 2


class TestThreadsFlag:
    def test_threads_env_default_and_flag(self, medical_files, tmp_path, monkeypatch):
        monkeypatch.setenv("DPPRED_THREADS", "2")
        out = tmp_path / "m.model"
        assert main(["train", "--data", str(medical_files["train"]),
                     "--schema", str(medical_files["schema"]),
                     "--out", str(out), "--trees", "20", "--seed", "1"]) == 0
        assert main(["train", "--data", str(medical_files["train"]),
                     "--schema", str(medical_files["schema"]),
                     "--out", str(out), "--trees", "20", "--seed", "1",
                     "--threads", "0"]) == 2
