import csv
import json

import numpy as np
import pytest

from obsprune import read_tensor, write_manifest, write_tensor
from obsprune.cli import main
from obsprune.synth import gen_activations, gen_uniform


def run(argv):
    try:
        return main(argv)
    except SystemExit as e:
        return e.code


def test_prune_rose_columnar_report(tmp_path):
    code = run([
        "prune", "--method", "rose", "--synth", "columnar",
        "--rows", "32", "--cols", "128", "--blocksize", "64",
        "--sparsity", "0.7", "--seed", "3", "--out", str(tmp_path),
    ])
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["method"] == "rose"
    assert report["was_reordered"] is True
    assert report["R_rel"] > 0.5
    assert sorted(report["permutation"]) == list(range(128))
    assert report["block_error_trajectory"][-1] == pytest.approx(
        report["absolute_error"]
    )
    w = read_tensor(tmp_path / "pruned_weights.rtns")
    assert w.shape == (32, 128)
    zero_frac = np.mean(w == 0.0)
    assert zero_frac == pytest.approx(0.7, abs=0.01)


def test_prune_zero_sparsity_round_trip(tmp_path):
    code = run([
        "prune", "--method", "sparsegpt", "--synth", "uniform",
        "--rows", "8", "--cols", "32", "--blocksize", "16",
        "--sparsity", "0.0", "--seed", "1", "--out", str(tmp_path),
    ])
    assert code == 0
    w = read_tensor(tmp_path / "pruned_weights.rtns")
    np.testing.assert_allclose(w, gen_uniform(8, 32, seed=1), rtol=1e-6)


def test_prune_from_files(tmp_path):
    w = gen_uniform(8, 32, seed=5)
    x = gen_activations(64, 32, 0.0, seed=6)
    wpath = tmp_path / "w.rtns"
    write_tensor(wpath, w)
    write_tensor(tmp_path / "x0.rtns", x)
    manifest = tmp_path / "acts.json"
    write_manifest(manifest, [tmp_path / "x0.rtns"])
    out = tmp_path / "out"
    code = run([
        "prune", "--method", "magnitude", "--weights", str(wpath),
        "--acts", str(manifest), "--sparsity", "0.5",
        "--blocksize", "16", "--out", str(out),
    ])
    assert code == 0
    pruned = read_tensor(out / "pruned_weights.rtns")
    assert np.count_nonzero(pruned) == 128


def test_prune_semi_structured_pattern(tmp_path):
    code = run([
        "prune", "--method", "sparsegpt", "--synth", "uniform",
        "--rows", "8", "--cols", "32", "--pattern", "2:4",
        "--seed", "2", "--out", str(tmp_path),
    ])
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["config"]["pattern"] == "2:4"
    assert report["config"]["blocksize"] == 4
    w = read_tensor(tmp_path / "pruned_weights.rtns")
    groups = (w.reshape(8, 8, 4) != 0.0).sum(axis=2)
    assert np.all(groups == 2)


def test_compare_csv_schema(tmp_path):
    code = run([
        "compare", "--methods", "magnitude,wanda,sparsegpt,rose",
        "--synth", "columnar", "--rows", "32", "--cols", "128",
        "--blocksize", "64", "--sparsity", "0.5,0.7",
        "--seed", "4", "--out", str(tmp_path),
    ])
    assert code == 0
    with open(tmp_path / "compare.csv", newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = list(reader)
    assert header == ["method", "sparsity", "relative_error", "r_rel",
                      "was_reordered", "wall_ms"]
    assert len(rows) == 8
    by_key = {(r[0], r[1]): r for r in rows}
    for s in ("0.5", "0.7"):
        for m in ("magnitude", "wanda", "sparsegpt", "rose"):
            assert float(by_key[(m, s)][2]) > 0.0
            assert float(by_key[(m, s)][3]) > 0.5  # columnar fixture
        assert by_key[("rose", s)][4] == "True"  # columnar gate fired


def test_detect_columnar_and_uniform(tmp_path, capsys):
    code = run([
        "detect", "--synth", "columnar", "--rows", "32", "--cols", "128",
        "--blocksize", "64", "--seed", "8", "--out", str(tmp_path / "a"),
    ])
    assert code == 0
    doc = json.loads((tmp_path / "a" / "detect.json").read_text())
    assert doc["layers"][0]["columnar"] is True
    assert doc["layers"][0]["R_rel"] > 0.5

    code = run([
        "detect", "--synth", "uniform", "--rows", "32", "--cols", "128",
        "--blocksize", "64", "--seed", "8", "--out", str(tmp_path / "b"),
    ])
    assert code == 0
    doc = json.loads((tmp_path / "b" / "detect.json").read_text())
    assert doc["layers"][0]["columnar"] is False


def test_detect_multiple_weight_files(tmp_path):
    for i, name in enumerate(("l0.rtns", "l1.rtns")):
        write_tensor(tmp_path / name, gen_uniform(8, 32, seed=i))
    code = run([
        "detect", "--weights", str(tmp_path / "l0.rtns"),
        str(tmp_path / "l1.rtns"), "--blocksize", "16",
        "--sparsity", "0.7", "--out", str(tmp_path),
    ])
    assert code == 0
    doc = json.loads((tmp_path / "detect.json").read_text())
    assert len(doc["layers"]) == 2


def test_verify_subcommand_passes():
    assert run(["verify", "--seed", "0"]) == 0


def test_verify_flag_rewrite():
    assert run(["--verify"]) == 0


def test_missing_inputs_exit_2():
    assert run(["prune", "--method", "rose", "--sparsity", "0.5"]) == 2


def test_empty_sparsity_list_rejected(capsys):
    code = run(["compare", "--synth", "uniform", "--sparsity", ","])
    assert code == 2


def test_bad_pattern_rejected():
    code = run(["prune", "--synth", "uniform", "--pattern", "banana"])
    assert code == 2


def test_corrupt_weights_file_exit_1(tmp_path):
    bad = tmp_path / "bad.rtns"
    bad.write_bytes(b"NOPE" + b"\x00" * 32)
    code = run([
        "prune", "--method", "magnitude", "--weights", str(bad),
        "--sparsity", "0.5", "--out", str(tmp_path),
    ])
    assert code == 1


def test_hidden_block_order_flag(tmp_path):
    code = run([
        "prune", "--method", "sparsegpt", "--synth", "columnar",
        "--rows", "16", "--cols", "64", "--blocksize", "16",
        "--hot-block", "3", "--sparsity", "0.7", "--seed", "9",
        "--block-order", "3,0,1,2", "--out", str(tmp_path),
    ])
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["was_reordered"] is True
