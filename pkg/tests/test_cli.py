import csv
import json
import subprocess
import sys

import pytest

from vicsample.cli import main
from vicsample.nn import load_checkpoint

TINY_INI = """\
[run]
seed = 2

[sbm]
nodes_per_block = 40
num_blocks = 2
p_intra = 0.3
p_inter = 0.05
feature_dim = 8

[model]
hidden_dim = 8
rep_dim = 8
expander_dim = 16

[sampling]
node_grid = 0.5,1.0
dim_grid = 0.5,1.0

[train]
epochs = 3
patience = 0

[probe]
trials = 2
"""


@pytest.fixture
def ini(tmp_path):
    p = tmp_path / "tiny.ini"
    p.write_text(TINY_INI)
    return p


def test_pretrain_writes_artifacts(ini, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["pretrain", "--config", str(ini), "--out", str(out), "--epochs", "4"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert len(report["epochs"]) == 4 and report["config"]["seed"] == 2
    assert set(load_checkpoint(out / "encoder.npz")) >= {"encoder.w1", "encoder.w2",
                                                         "expander.w1"}
    assert "epochs = 4" in (out / "config.ini").read_text()
    assert "probe accuracy" in capsys.readouterr().out


def test_sweep_writes_tables(ini, tmp_path):
    out = tmp_path / "sw"
    rc = main(["sweep", "--config", str(ini), "--out", str(out),
               "--modes", "node_sampled,dim_sampled_cov_only,joint"])
    assert rc == 0
    rows = list(csv.DictReader(open(out / "sweep.csv")))
    assert len(rows) == 1 + 2 + 2 + 4
    assert (out / "sweep_node_sampled.csv").exists()
    assert len((out / "joint_heatmap.csv").read_text().splitlines()) == 3


def test_bench_small(tmp_path, capsys):
    out = tmp_path / "b"
    assert main(["bench", "--n", "500,1000", "--m", "16,32", "--d", "64", "--reps", "3",
                 "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "scaling.csv")))
    assert len(rows) == 4
    text = capsys.readouterr().out
    assert "time(32)/time(16)" in text and "reference loss costs" in text


def test_ricci_dump(ini, tmp_path):
    out = tmp_path / "r"
    assert main(["ricci", "--config", str(ini), "--out", str(out)]) == 0
    nodes = list(csv.DictReader(open(out / "ricci_nodes.csv")))
    assert len(nodes) == 80
    assert sum(float(r["prob"]) for r in nodes) == pytest.approx(1.0)


def test_verify(tmp_path, capsys):
    assert main(["verify", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "trajectory.csv").exists()
    assert "nystrom_relative_error" in capsys.readouterr().out


def test_bad_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[sampling]\nmode = random_projection\n")
    assert main(["pretrain", "--config", str(bad)]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["pretrain", "--config", str(tmp_path / "missing.ini")]) == 2
    bad.write_text("[sbm]\np_intra = 2\n")
    assert main(["pretrain", "--config", str(bad)]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "vicsample.cli", "--help"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "pretrain" in proc.stdout and "bench" in proc.stdout
