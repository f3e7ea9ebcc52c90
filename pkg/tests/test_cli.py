import json
import subprocess
import sys

import numpy as np
import pytest

from mlquant.cli import main
from mlquant.dataset import load_dataset, save_dataset
from mlquant.synth import synth_generate


@pytest.fixture
def files(tmp_path):
    ds = synth_generate(3, 800, 6, correlation=0.3, separation=2.0, seed=1)
    save_dataset(ds.subset(np.arange(500)), tmp_path / "train.txt")
    save_dataset(ds.subset(np.arange(500, 800)), tmp_path / "test.txt")
    return tmp_path


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_stats_on_three_row_file(tmp_path, capsys):
    (tmp_path / "d.txt").write_text("3 2 2\n0 0:1.0\n1 1:0.5\n0,1 0:2.0\n")
    code, out, _ = run(["stats", tmp_path / "d.txt"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 2 and lines[1].split(",")[1] == "3"
    code, out, _ = run(["stats", tmp_path / "d.txt", "--no-header"], capsys)
    assert len(out.splitlines()) == 1


def test_sample_larger_than_pool_is_a_data_error(files, capsys):
    code, _, err = run(["sample", files / "test.txt", "--k", 5000], capsys)
    assert code == 2 and "5000" in err


def test_usage_errors(files, capsys):
    assert run(["stats", files / "train.txt", "--bogus"], capsys)[0] == 1
    assert run([], capsys)[0] == 1
    assert run(["frobnicate"], capsys)[0] == 1
    assert run(["sample", files / "test.txt", "--k", 0], capsys)[0] == 1
    code, _, err = run(["stats", files / "missing.txt"], capsys)
    assert code == 2 and "no such file" in err


def test_version_and_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "mlquant", "--version"], capture_output=True,
                         text=True, check=True).stdout
    assert out.strip() == "mlquant 0.1.0"


def test_split_writes_parts(files, capsys):
    code, out, _ = run(["split", files / "train.txt", "--fractions", 0.6, 0.4,
                        "--out", files / "parts"], capsys)
    assert code == 0
    a = load_dataset(files / "parts" / "train.part0.txt")
    b = load_dataset(files / "parts" / "train.part1.txt")
    assert a.n_rows + b.n_rows == 500 and abs(a.n_rows - 300) <= 10
    assert run(["split", files / "train.txt", "--fractions", 0.5, 0.6,
                "--out", files / "p2"], capsys)[0] == 2


def test_train_sample_quantify_evaluate_round_trip(files, capsys):
    model = files / "model.json"
    code, out, _ = run(["train", files / "train.txt", "--spec",
                        '{"family": "mlc_mla", "rq_mlapp": {"k": 50}}', "--out", model],
                       capsys)
    assert code == 0 and "mlc_mla+pcc+rq-ridge" in out
    code, _, _ = run(["sample", files / "test.txt", "--k", 50, "--grid-step", 0.25,
                      "--reference", files / "train.txt", "--out", files / "s.csv"], capsys)
    assert code == 0
    code, _, _ = run(["quantify", files / "test.txt", "--model", model,
                      "--samples", files / "s.csv", "--out", files / "est.csv"], capsys)
    assert code == 0
    est = (files / "est.csv").read_text().splitlines()
    assert est[0] == "sample_id,y0,y1,y2"
    code, out, _ = run(["evaluate", files / "test.txt", "--estimates", files / "est.csv",
                        "--samples", files / "s.csv", "--reference", files / "train.txt"],
                       capsys)
    assert code == 0
    rows = out.splitlines()
    assert rows[0] == "bin,mean_ae,mean_rae,n_samples"
    assert sum(int(r.split(",")[3]) for r in rows[1:]) == len(est) - 1
    code, out, _ = run(["quantify", files / "test.txt", "--model", model], capsys)
    assert code == 0 and out.splitlines()[1].startswith("all,")


def test_evaluate_whole_file_estimate(files, capsys):
    (files / "e.csv").write_text("sample_id,a,b,c\nall,0.3,0.3,0.3\n")
    code, out, _ = run(["evaluate", files / "test.txt", "--estimates", files / "e.csv"], capsys)
    assert code == 0 and out.splitlines()[1].startswith("all,")
    (files / "e2.csv").write_text("sample_id,a\nall,0.3\n")
    assert run(["evaluate", files / "test.txt", "--estimates", files / "e2.csv"], capsys)[0] == 2


def test_gridsearch(files, capsys):
    code, out, _ = run(["gridsearch", files / "train.txt", "--grid", '{"c": [0.1, 10]}',
                        "--k", 40, "--out", files / "g.json"], capsys)
    assert code == 0
    assert len([ln for ln in out.splitlines() if not ln.startswith("#")]) == 3
    assert json.loads((files / "g.json").read_text())["spec"]["c"] in (0.1, 10)


def test_bad_spec_is_a_data_error(files, capsys):
    code, _, err = run(["train", files / "train.txt", "--spec", '{"family": "xx"}',
                        "--out", files / "m.json"], capsys)
    assert code == 2 and "family" in err


def test_synth(tmp_path, capsys):
    code, _, err = run(["synth", "--n-classes", 4, "--rows", 50, "--d", 3, "--rho", 0.2,
                        "--seed", 5, "--out", tmp_path / "s.txt"], capsys)
    assert code == 0 and "planted prevalence" in err
    ds = load_dataset(tmp_path / "s.txt")
    assert ds.n_rows == 50 and ds.n_classes == 4
    code, _, _ = run(["synth", "--config", '{"n_classes": 2, "correlation": {"copies": {"1": 0}}}',
                      "--rows", 30, "--d", 2, "--out", tmp_path / "c.txt"], capsys)
    ds = load_dataset(tmp_path / "c.txt")
    assert code == 0 and np.array_equal(ds.labels[:, 0], ds.labels[:, 1])
    assert run(["synth", "--rho", 1.5, "--out", tmp_path / "x.txt"], capsys)[0] == 2


def test_experiment_subcommand(tmp_path, capsys):
    cfg = {"seed": 1, "datasets": [{"name": "t", "synthetic": {
        "n_classes": 2, "n_train": 300, "n_test": 300, "d": 4}}],
        "test_protocol": {"k": 40, "grid_step": 0.2}, "methods": [{"family": "bc_ba"}]}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    code, out, _ = run(["experiment", "--config", tmp_path / "c.json", "--out", tmp_path / "o",
                        "--markdown", "--threads", 2], capsys)
    assert code == 0 and "result rows" in out
    assert (tmp_path / "o" / "results.md").exists()
    (tmp_path / "bad.json").write_text('{"datasets": []}')
    assert run(["experiment", "--config", tmp_path / "bad.json"], capsys)[0] == 2
