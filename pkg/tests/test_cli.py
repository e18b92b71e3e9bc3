import json

import pytest

from allpay.cli import run, validate


def _run(tmp_path, *argv, name="out.json"):
    out = tmp_path / name
    code = run([*argv, "--out", str(out)])
    doc = json.loads(out.read_text()) if out.exists() else None
    return code, doc


def _scenario(tmp_path, doc, name="scenario.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_bounds_lambda_writes_csv(tmp_path):
    csv = tmp_path / "curve.csv"
    code, doc = _run(tmp_path, "bounds", "lambda", "--csv", str(csv))
    assert code == 0 and doc["ok"]
    assert doc["results"]["min"] == pytest.approx(1.8204, abs=1e-3)
    lines = csv.read_text().splitlines()
    assert lines[0] == "lambda,poa_bound" and len(lines) == 201
    validate(doc, "result.schema.json")


def test_single_poa_analytic(tmp_path):
    code, doc = _run(tmp_path, "single-item", "poa", "--v", "0.5", "--n", "2")
    assert code == 0
    assert doc["results"]["poa"] == pytest.approx(8 / 7, abs=1e-6)
    assert doc["seed"] is None


def test_single_poa_monte_carlo_needs_seed(tmp_path, capsys):
    code, doc = _run(tmp_path, "single-item", "poa", "--samples", "1000")
    assert code == 1 and doc is None
    assert "seed" in capsys.readouterr().err


def test_output_is_deterministic(tmp_path):
    argv = ("single-item", "revenue", "--v", "0.1", "--q1", "0.8", "--q2", "0.2", "--samples", "2e4", "--seed", "11")
    c1, _ = _run(tmp_path, *argv, name="a.json")
    c2, _ = _run(tmp_path, *argv, name="b.json")
    assert c1 == c2 == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_revenue_q_needs_both_prizes(tmp_path):
    assert _run(tmp_path, "single-item", "revenue", "--q1", "0.8")[0] == 1


def test_psam_default_instance(tmp_path):
    code, doc = _run(tmp_path, "psam", "solve")
    assert code == 0
    assert doc["results"]["efficiency"] == pytest.approx(0.7525, abs=1e-3)


def test_psam_scenario_with_brute_force(tmp_path):
    sc = _scenario(tmp_path, {"mechanism": "psam", "valuations": [[0, 1, 1.5, 1.8], [0, 2, 2.5, 2.6], [0, 0.5, 1, 1.2]]})
    code, doc = _run(tmp_path, "psam", "solve", "--scenario", sc)
    assert code == 0
    inv = doc["invariants"]
    assert inv["greedy_matches_brute_force"] and inv["zero_regret"]
    assert len(doc["scenario_sha256"]) == 64
    assert sum(e["probability"] for e in doc["results"]["lottery"]) == pytest.approx(1.0)


def test_schema_error_reports_pointer(tmp_path, capsys):
    sc = _scenario(tmp_path, {"mechanism": "psam", "run": {"samples": -3}})
    assert _run(tmp_path, "psam", "solve", "--scenario", sc)[0] == 1
    assert "/run/samples" in capsys.readouterr().err


def test_unknown_key_rejected(tmp_path):
    sc = _scenario(tmp_path, {"mechanism": "psam", "colour": "red"})
    assert _run(tmp_path, "psam", "solve", "--scenario", sc)[0] == 1


def test_non_submodular_is_input_error(tmp_path):
    sc = _scenario(tmp_path, {"mechanism": "psam", "valuations": [[0, 1, 3], [0, 1, 2]]})
    assert _run(tmp_path, "psam", "solve", "--scenario", sc)[0] == 1


def test_verify_first_price_exact(tmp_path):
    sc = _scenario(tmp_path, {"mechanism": "first-price", "values": [1.0, 0.6, 0.3]})
    code, doc = _run(tmp_path, "verify", "--scenario", sc)
    assert code == 0
    assert doc["results"]["certificate"]["regrets"] == [0.0, 0.0, 0.0]


def test_verify_refuted_bids_exit_2(tmp_path):
    sc = _scenario(tmp_path, {"mechanism": "first-price", "values": [1.0, 0.6], "params": {"bids": [0.9, 0.6]}})
    code, doc = _run(tmp_path, "verify", "--scenario", sc)
    assert code == 2 and not doc["ok"]
    assert doc["results"]["certificate"]["verdict"] == "refuted"


def test_verify_psam_off_equilibrium(tmp_path):
    sc = _scenario(tmp_path, {"mechanism": "psam", "valuations": [[0, 1], [0, 2]], "params": {"bids": [0.1, 0.1]}})
    assert _run(tmp_path, "verify", "--scenario", sc)[0] == 2
    sc = _scenario(tmp_path, {"mechanism": "psam", "valuations": [[0, 1], [0, 2]]}, name="ne.json")
    assert _run(tmp_path, "verify", "--scenario", sc)[0] == 0


def test_verify_single_item_seed_from_scenario(tmp_path):
    sc = _scenario(tmp_path, {"mechanism": "single-allpay", "values": [1.0, 0.5],
                              "run": {"samples": 50000, "seed": 3}})
    code, doc = _run(tmp_path, "verify", "--scenario", sc)
    assert code == 0 and doc["seed"] == 3
    assert doc["results"]["atom_diagnostic"]["clean"]


def test_simul_validate_small(tmp_path):
    code, doc = _run(tmp_path, "simul", "validate", "--samples", "20000", "--seed", "1")
    assert code == 0
    assert doc["invariants"] == {"inequality_1": True, "inequality_2": True}


def test_bounds_rfv(tmp_path):
    code, doc = _run(tmp_path, "bounds", "rfv", "--samples", "50")
    assert code == 0
    assert abs(doc["results"]["tight_family_gap"]) <= 1e-9


def test_bad_seed_rejected():
    with pytest.raises(SystemExit):
        run(["bounds", "rfv", "--seed", "-1"])
