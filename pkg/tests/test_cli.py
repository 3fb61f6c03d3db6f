import json
import math
from pathlib import Path

import pytest

from robustcover import __version__
from robustcover.cli import main

FIX = Path(__file__).parent / "fixtures"


def run(tmp_path, *args, name="out.json"):
    out = tmp_path / name
    code = main([*map(str, args), "--out", str(out)])
    report = json.loads(out.read_text()) if out.exists() else None
    return code, report


def test_bounds_one_layer_hand_computation(tmp_path):
    code, rep = run(tmp_path, "bounds", "--network", FIX / "one_layer.json", "--data", FIX / "one_layer.csv",
                    "--p", "inf", "--eps", "0.1", "--gamma", "0.5", "--delta", "0.05")
    assert code == 0 and rep["passed"]
    r = rep["result"]
    layer = r["layers"][0]
    assert layer["spectral"] == pytest.approx(4.0)
    assert layer["l1"] == 7.0 and layer["frobenius"] == pytest.approx(5.0)
    assert r["B"] == pytest.approx(1.0)
    bt = 1.0 + 0.1 * math.sqrt(2)
    assert r["B_tilde"] == pytest.approx(bt)
    assert r["rho"] == 4.0
    assert r["xiao_bound"] == pytest.approx(bt * 2 * 1 * 4 / math.sqrt(3))
    assert r["confidence_term"] == pytest.approx(math.sqrt(math.log(20) / 3))
    assert rep["version"] == __version__ and rep["config"]["p"] == "inf"


def test_bounds_report_is_byte_identical_on_rerun(tmp_path):
    args = ["bounds", "--network", FIX / "two_layer.json", "--data", FIX / "two_layer.csv"]
    run(tmp_path, *args)
    first = (tmp_path / "out.json").read_bytes()
    run(tmp_path, *args)
    assert (tmp_path / "out.json").read_bytes() == first


def test_missing_file_exit_2(tmp_path, capsys):
    code, rep = run(tmp_path, "bounds", "--network", tmp_path / "nope.json", "--data", FIX / "one_layer.csv")
    assert code == 2 and rep is None
    assert "not found" in capsys.readouterr().err


@pytest.mark.parametrize("delta", ["0", "1", "1.5", "-0.2"])
def test_delta_out_of_range_exit_2(tmp_path, delta):
    code, _ = run(tmp_path, "bounds", "--network", FIX / "one_layer.json", "--data", FIX / "one_layer.csv",
                  "--delta", delta)
    assert code == 2


def test_json_parse_error_has_line_and_column(tmp_path, capsys):
    code, _ = run(tmp_path, "bounds", "--network", FIX / "bad_syntax.json", "--data", FIX / "one_layer.csv")
    err = capsys.readouterr().err
    assert code == 2 and "bad_syntax.json:2:" in err


def test_csv_parse_error_has_line_and_column(tmp_path, capsys):
    code, _ = run(tmp_path, "bounds", "--network", FIX / "one_layer.json", "--data", FIX / "bad_row.csv")
    err = capsys.readouterr().err
    assert code == 2 and "bad_row.csv:3:2:" in err and "abc" in err


def test_config_file_and_unknown_keys(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"network": str(FIX / "one_layer.json"), "data": str(FIX / "one_layer.csv"),
                               "eps": 0.2, "p": "2"}))
    code, rep = run(tmp_path, "bounds", "--config", cfg, "--eps", "0.05")
    assert code == 0
    assert rep["config"]["eps"] == 0.05 and rep["config"]["p"] == 2.0   # flag beats file
    cfg.write_text(json.dumps({"network": "x", "frobnicate": 1}))
    assert run(tmp_path, "bounds", "--config", cfg)[0] == 2


def test_bad_p_is_usage_error(tmp_path):
    assert run(tmp_path, "bounds", "--network", FIX / "one_layer.json", "--data", FIX / "one_layer.csv",
               "--p", "3")[0] == 2


def test_lemma_check_identical_networks(tmp_path):
    code, rep = run(tmp_path, "lemma-check", "--network", FIX / "two_layer.json", "--network2",
                    FIX / "two_layer.json", "--data", FIX / "two_layer.csv", "--resolution", "41", "--samples", "5")
    assert code == 0 and rep["passed"]
    r = rep["result"]
    assert r["intermediate_adversarial_example"]["max_gap"] == 0.0
    assert r["intermediate_adversarial_example"]["slack"] > 0
    assert r["layer_recursion"]["max_delta"] == 0.0 and r["layer_recursion"]["samples"] == 20


def test_lemma_check_constructed_cover(tmp_path):
    code, rep = run(tmp_path, "lemma-check", "--network", FIX / "two_layer.json", "--data",
                    FIX / "two_layer.csv", "--resolution", "41", "--samples", "3", "--restarts", "8")
    assert code == 0
    assert rep["result"]["cover_network"]["converged"]
    assert rep["result"]["final_cover_distance"]["passed"]


def test_lemma_check_corrupted_fixture_fails(tmp_path):
    code, rep = run(tmp_path, "lemma-check", "--network", FIX / "two_layer.json", "--network2",
                    FIX / "two_layer.json", "--data", FIX / "two_layer.csv", "--resolution", "11",
                    "--robust-override", FIX / "corrupted_override.json")
    assert code == 1 and not rep["passed"]
    inter = rep["result"]["intermediate_adversarial_example"]
    assert inter["violations"] == 4 and inter["oracle"] == "override"


def test_rademacher_reproducible_bytes(tmp_path):
    args = ["rademacher", "--data", FIX / "two_layer.csv", "--eps", "0.1", "--trials", "50", "--seed", "3"]
    c1, r1 = run(tmp_path, *args)
    first = (tmp_path / "out.json").read_bytes()
    c2, _ = run(tmp_path, *args)
    assert c1 == c2 == 0
    assert (tmp_path / "out.json").read_bytes() == first
    assert r1["result"]["sandwich"]["contained"]


def test_rademacher_eps_zero(tmp_path):
    code, rep = run(tmp_path, "rademacher", "--data", FIX / "two_layer.csv", "--eps", "0", "--trials", "20")
    assert code == 0 and rep["result"]["eps_zero_identical"]


def test_rademacher_network_kind(tmp_path):
    code, rep = run(tmp_path, "rademacher", "--kind", "network", "--network", FIX / "two_layer.json",
                    "--data", FIX / "two_layer.csv", "--trials", "2")
    assert code == 0 and "sandwich" not in rep["result"]


def test_train_writes_network_and_data(tmp_path):
    code, rep = run(tmp_path, "train", "--n-train", "40", "--n-test", "40", "--epochs", "5",
                    "--out-network", tmp_path / "net.json", "--out-data", tmp_path / "train.csv")
    assert code == 0 and rep["result"]["gap_within_bound"]
    code2, _ = run(tmp_path, "bounds", "--network", tmp_path / "net.json", "--data", tmp_path / "train.csv",
                   name="b.json")
    assert code2 == 0


def test_train_invalid_dataset_exit_2(tmp_path):
    assert run(tmp_path, "train", "--dataset", "spiral")[0] == 2


def test_cover_verify(tmp_path):
    code, rep = run(tmp_path, "cover-verify", "--samples", "50", "--restarts", "8")
    assert code == 0 and rep["passed"]
    assert run(tmp_path, "cover-verify", "--eps", "0", name="x.json")[0] == 2


def test_missing_required_option(tmp_path):
    assert main(["bounds", "--out", str(tmp_path / "o.json")]) == 2
    assert main(["bounds"]) == 2
