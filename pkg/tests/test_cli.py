import csv
import json
import os

import pytest

from explaindga import features
from explaindga.cli import atomic_output, main


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["gen", "--out", str(d / "corpus.csv"), "--per-family", "60", "--seed", "3"]) == 0
    assert main(["train", "--input", str(d / "corpus.csv"), "--model", str(d / "model.json"),
                 "--n-estimators", "30", "--seed", "3"]) == 0
    return d


def _stderr_json(capsys):
    lines = [ln for ln in capsys.readouterr().err.splitlines() if ln.strip()]
    assert lines
    return json.loads(lines[-1])


def test_gen_output(workdir):
    rows = list(csv.DictReader(open(workdir / "corpus.csv")))
    assert len(rows) == 300
    assert {r["label"] for r in rows} == {"benign", "conso", "hexa", "wordy", "xxhex"}


def test_extract_header(workdir, tmp_path):
    out = tmp_path / "x.csv"
    assert main(["extract", "--input", str(workdir / "corpus.csv"), "--out", str(out)]) == 0
    with open(out) as fh:
        header = next(csv.reader(fh))
        first = next(csv.reader(fh))
    assert len(header) == 77 and header[-1] == "label"
    assert header[:-1] == list(features.UNION.member_ids)
    assert len(first) == 77


def test_extract_named_and_unlabeled(tmp_path):
    src = tmp_path / "d.txt"
    src.write_text("google.com\nexample.co.uk\n")
    out = tmp_path / "x.csv"
    assert main(["extract", "--input", str(src), "--out", str(out), "--selection", "intersection"]) == 0
    rows = list(csv.reader(open(out)))
    assert len(rows) == 3 and len(rows[0]) == 11 and "label" not in rows[0]


def test_classify_csv_with_bad_line(workdir, tmp_path):
    src = tmp_path / "in.txt"
    src.write_text("mwkwhvkdpp.info\nnot a domain!\nxxa1b2c3d4.com\n")
    out = tmp_path / "out.csv"
    assert main(["classify", "--model", str(workdir / "model.json"), "--input", str(src), "--out", str(out),
                 "--top-k", "8"]) == 0
    rows = list(csv.reader(open(out)))
    assert rows[0][:4] == ["domain", "status", "predicted", "probability"] and len(rows[0]) == 12
    assert len(rows) == 4
    conso, bad, _ = rows[1:]
    assert conso[1] == "ok" and conso[2] == "conso"
    assert 0.0 < float(conso[3]) <= 1.0
    # correlated consonant features share the credit, so check the family
    names = [c.split("=")[0] for c in conso[4:]]
    assert sum("conson" in n or "vowel" in n or n == "weighted-streaks" for n in names[:5]) >= 3
    assert bad[1].startswith("error:") and bad[2] == "" and bad[3] == ""


def test_classify_jsonl(workdir, tmp_path):
    src = tmp_path / "in.csv"
    src.write_text("domain,label\nmwkwhvkdpp.info,conso\nwww.google.com,benign\n")
    out = tmp_path / "out.jsonl"
    args = ["classify", "--model", str(workdir / "model.json"), "--input", str(src), "--out", str(out),
            "--format", "jsonl", "--top-k", "3"]
    assert main(args) == 0
    recs = [json.loads(ln) for ln in open(out)]
    assert [r["domain"] for r in recs] == ["mwkwhvkdpp.info", "www.google.com"]
    assert all(r["status"] == "ok" and len(r["explanation"]) == 3 for r in recs)
    first = open(out).read()
    assert main(args + ["--threads", "2"]) == 0
    assert open(out).read() == first


def test_classify_zero_top_k_stdout(workdir, tmp_path, capsys):
    src = tmp_path / "in.txt"
    src.write_text("mwkwhvkdpp.info\n")
    assert main(["classify", "--model", str(workdir / "model.json"), "--input", str(src), "--top-k", "0"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "domain,status,predicted,probability"
    assert out[1].startswith("mwkwhvkdpp.info,ok,conso,")


def test_usage_errors(tmp_path, capsys):
    assert main(["frobnicate"]) == 1
    assert _stderr_json(capsys)["error"] == "usage"
    assert main(["train", "--input", str(tmp_path / "missing.csv"), "--model", str(tmp_path / "m.json")]) == 1
    err = _stderr_json(capsys)
    assert err["error"] == "usage" and err["type"] == "FileNotFoundError"
    assert main(["gen", "--out", str(tmp_path / "c.csv"), "--threads", "0"]) == 1
    assert main(["extract", "--input", str(tmp_path / "c.csv"), "--out", str(tmp_path / "x"),
                 "--selection", "nonsense"]) == 1
    assert not (tmp_path / "m.json").exists()


def test_bad_hyperparameter_is_usage_error(workdir, tmp_path, capsys):
    rc = main(["train", "--input", str(workdir / "corpus.csv"), "--model", str(tmp_path / "m.json"),
               "--class-weight", "gamma(2)"])
    assert rc == 1 and _stderr_json(capsys)["error"] == "usage"
    assert not (tmp_path / "m.json").exists()


def test_atomic_output_keeps_previous_file(tmp_path):
    target = tmp_path / "f.txt"
    target.write_text("old")
    with pytest.raises(RuntimeError):
        with atomic_output(target) as tmp:
            open(tmp, "w").write("partial")
            raise RuntimeError
    assert target.read_text() == "old"
    assert os.listdir(tmp_path) == ["f.txt"]


def test_eval_and_compare(workdir, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    common = ["--input", str(workdir / "corpus.csv"), "--repetitions", "1", "--folds", "3", "--n-estimators", "10"]
    assert main(["eval", "--out-dir", str(a), *common]) == 0
    assert sorted(os.listdir(a)) == ["confusion.csv", "metrics.csv", "timing.csv"]
    assert main(["eval", "--out-dir", str(b), "--mode", "rf", "--compare", str(a / "confusion.csv"), *common]) == 0
    rows = list(csv.DictReader(open(b / "combined_confusion.csv")))
    assert len(rows) == 25
    assert {"share_model_a", "share_model_b"} <= set(rows[0])


def test_select_single_method(workdir, tmp_path):
    out = tmp_path / "relief.json"
    assert main(["select", "--input", str(workdir / "corpus.csv"), "--out", str(out), "--method", "relieff"]) == 0
    rep = json.load(open(out))
    assert rep["selected_ids"]
    out2 = tmp_path / "x.csv"
    assert main(["extract", "--input", str(workdir / "corpus.csv"), "--out", str(out2), "--selection", str(out)]) == 0
    assert next(csv.reader(open(out2)))[:-1] == rep["selected_ids"]


def test_tune_and_train_from_hparams(workdir, tmp_path):
    best, log = tmp_path / "best.json", tmp_path / "trials.csv"
    assert main(["tune", "--input", str(workdir / "corpus.csv"), "--out", str(best), "--log", str(log),
                 "--trials", "2", "--folds", "2", "--mode", "rf", "--selection", "intersection"]) == 0
    assert len(list(csv.DictReader(open(log)))) == 2
    hp = json.load(open(best))["hyperparams"]
    assert set(hp) >= {"n_estimators", "max_depth", "class_weight"}
    model = tmp_path / "m.json"
    assert main(["train", "--input", str(workdir / "corpus.csv"), "--model", str(model), "--mode", "rf",
                 "--selection", "intersection", "--hparams", str(best), "--n-estimators", "7"]) == 0
    saved = json.load(open(model))
    assert len(saved["feature_ids"]) == 11
    assert saved["hyperparams"]["n_estimators"] == 7
    assert saved["hyperparams"]["max_depth"] == hp["max_depth"]


def test_bench(workdir, tmp_path):
    out = tmp_path / "bench.csv"
    assert main(["bench", "--model", str(workdir / "model.json"), "--out", str(out), "--samples", "1000"]) == 0
    rows = dict(csv.reader(open(out)))
    assert rows["n_samples"] == "1000" and rows["pass"] in ("0", "1")
