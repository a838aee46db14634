import json

import numpy as np
import pytest

from nnreduce import acc
from nnreduce.cli import main
from nnreduce.network import Layer, Network, random_network, save_network, load_network


@pytest.fixture
def nets(tmp_path):
    rng = np.random.default_rng(0)
    paths = {}
    for name, widths in {"big": [2, 4, 3, 1], "small": [2, 2, 1], "wide_in": [3, 2, 1],
                         "deep": [2, 2, 2, 2, 1]}.items():
        paths[name] = tmp_path / f"{name}.json"
        save_network(random_network(widths, rng), paths[name])
    paths["two"] = tmp_path / "two.json"
    save_network(Network([Layer([[2.0]], [0.0], "linear")]), paths["two"])
    paths["one"] = tmp_path / "one.json"
    save_network(Network([Layer([[1.0]], [0.0], "linear")]), paths["one"])
    return paths


def test_augment_writes_network(nets, tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["augment", str(nets["big"]), str(nets["small"]), "--out", str(out)])
    assert code == 0
    aug = load_network(out / "augmented.json")
    assert aug.widths == [2, 6, 5, 2, 1]
    assert json.loads((out / "augmented.json").read_text())["format"] == 2
    assert "layer" in capsys.readouterr().out
    assert json.loads((out / "manifest.json").read_text())["subcommand"] == "augment"


def test_augment_input_mismatch(nets, tmp_path, capsys):
    code = main(["augment", str(nets["big"]), str(nets["wide_in"]), "--out", str(tmp_path)])
    assert code == 2
    assert "number of inputs" in capsys.readouterr().err


def test_augment_small_deeper(nets, tmp_path):
    assert main(["augment", str(nets["big"]), str(nets["deep"]), "--out", str(tmp_path)]) == 2


def test_precision_toy_pair(nets, tmp_path):
    code = main(["precision", str(nets["two"]), str(nets["one"]), "--lower", "-1", "--upper", "1",
                 "--out", str(tmp_path)])
    assert code == 0
    report = json.loads((tmp_path / "precision.json").read_text())
    assert report["rho"] == 3.0
    assert report["cell_count"] == 1
    assert report["sampled_lower_bound"] == 1.0


def test_precision_identical(nets, tmp_path):
    main(["precision", str(nets["big"]), str(nets["big"]), "--lower", "0", "0", "--upper", "1", "1",
          "--splits", "4", "--out", str(tmp_path)])
    report = json.loads((tmp_path / "precision.json").read_text())
    assert report["sampled_lower_bound"] == 0.0
    assert report["cell_count"] == 16


def test_precision_budget(nets, tmp_path):
    code = main(["precision", str(nets["big"]), str(nets["small"]), "--lower", "0", "0", "--upper", "1", "1",
                 "--splits", "5000", "--out", str(tmp_path)])
    assert code == 3


def test_precision_reproducible(nets, tmp_path):
    docs = []
    for d in ("a", "b"):
        main(["precision", str(nets["big"]), str(nets["small"]), "--lower", "0", "0", "--upper", "1", "1",
              "--splits", "3,5", "--seed", "7", "--out", str(tmp_path / d)])
        doc = json.loads((tmp_path / d / "precision.json").read_text())
        doc.pop("wall_time")
        docs.append(doc)
    assert docs[0] == docs[1]


def test_env_out_dir(nets, tmp_path, monkeypatch):
    monkeypatch.setenv("NNREDUCE_OUT", str(tmp_path / "env"))
    assert main(["augment", str(nets["big"]), str(nets["small"])]) == 0
    assert (tmp_path / "env" / "augmented.json").exists()


def test_verify_acc(tmp_path, capsys):
    code = main(["verify", "acc", "--out", str(tmp_path)])
    assert code == 0
    verdict = json.loads((tmp_path / "verdict.json").read_text())
    assert verdict["verdict"] == "safe" and verdict["decided_by"] == "reduced"
    runs = verdict["runs"]
    assert runs["reduced"]["stats"]["controller_reach_time"] < runs["original"]["stats"]["controller_reach_time"]
    table = (tmp_path / "timing.txt").read_text().splitlines()
    assert table[0] == "Comparison of ACC reachable set calculation times"
    assert len(table) == 5
    assert (tmp_path / "tube_reduced.csv").exists() and (tmp_path / "tube_original.csv").exists()
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["resolved"]["inflation"] == "sound_full_rho"


def zero_rho_config(tmp_path, big):
    save_network(big, tmp_path / "big.json")
    doc = {"plant": "acc", "controller": "big.json", "reduced": "big.json", "precision": 0.0,
           "intervals": 50, "partition": {"splits": [1, 1, 4, 4, 4]}}
    (tmp_path / "zero.json").write_text(json.dumps(doc))
    return tmp_path / "zero.json"


def test_verify_zero_rho_byte_identical(acc_nets, tmp_path):
    cfg = zero_rho_config(tmp_path, acc_nets[0])
    assert main(["verify", str(cfg), "--out", str(tmp_path / "o")]) == 0
    a = (tmp_path / "o" / "tube_original.csv").read_bytes()
    b = (tmp_path / "o" / "tube_reduced.csv").read_bytes()
    assert a == b


def test_verify_malformed_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"plant": "acc", "x0": {"lower": [1, 2]}}))
    assert main(["verify", str(bad), "--out", str(tmp_path)]) == 4
    assert "x0.lower" in capsys.readouterr().err
    bad.write_text("{not json")
    assert main(["verify", str(bad), "--out", str(tmp_path)]) == 4
    bad.write_text(json.dumps({"plant": "acc", "speed": 3}))
    assert main(["verify", str(bad), "--out", str(tmp_path)]) == 4


def test_simulate_needs_trajectories(tmp_path):
    assert main(["simulate", "acc", "--n", "0", "--out", str(tmp_path)]) == 2


def test_simulate_sound_mode(tmp_path):
    code = main(["simulate", "acc", "--n", "40", "--save", "2", "--out", str(tmp_path)])
    assert code == 0
    audit = json.loads((tmp_path / "audit.json").read_text())
    assert audit["violation_count"] == 0
    assert audit["inflation"] == "sound_full_rho"
    assert "never certify" in audit["note"]
    assert len(list((tmp_path / "trajectories").glob("*.csv"))) == 2


def test_simulate_paper_mode_flags(tmp_path):
    code = main(["simulate", "acc", "--n", "20", "--inflation", "paper", "--out", str(tmp_path)])
    assert code == 0
    audit = json.loads((tmp_path / "audit.json").read_text())
    assert audit["inflation"] == "paper_half_rho"
    assert "warning" in audit


def test_simulate_against_saved_tube(tmp_path):
    assert main(["verify", "acc", "--splits", "1,1,4,4,4", "--out", str(tmp_path)]) == 0
    code = main(["simulate", "acc", "--n", "10", "--tube", str(tmp_path / "tube_reduced.csv"),
                 "--out", str(tmp_path)])
    assert code == 0
    assert json.loads((tmp_path / "audit.json").read_text())["violation_count"] == 0
