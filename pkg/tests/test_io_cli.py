"""Document round trips, fingerprints, bundled data and the CLI."""

import json

import pytest

from metroplan.bnb import BnbOptions
from metroplan.cli import main
from metroplan.heuristic import HeuristicOptions, optimize_network
from metroplan.io import (bundled_scenario_names, canonical_json, fingerprint,
                          load_bundled_scenario, load_scenario, save_document,
                          solution_from_document, solution_to_document)

from conftest import tiny_scenario_raw


EXPECTED_BUNDLES = {"case_study", "case_study_nost"} | {
    f"{base}{suffix}"
    for base in ("2l0t", "4l1t", "4l2t", "6l1t", "6l2t", "6l3t",
                 "8l3t", "8l4t")
    for suffix in ("", "_st")
}


def _solve(raw):
    from metroplan.domain import validate_scenario
    scen = validate_scenario(raw)
    return scen, optimize_network(
        scen, HeuristicOptions(bnb=BnbOptions(deterministic=True)))


def test_canonical_json_is_order_insensitive():
    assert canonical_json({"b": 1, "a": [1, 2]}) == '{"a":[1,2],"b":1}'
    assert fingerprint({"a": 1, "b": 2}) == fingerprint({"b": 2, "a": 1})


def test_document_roundtrip(tmp_path):
    raw = tiny_scenario_raw()
    scen, sol = _solve(raw)
    doc = solution_to_document(raw, sol)
    path = tmp_path / "sol.json"
    save_document(doc, str(path))
    loaded = json.loads(path.read_text())
    back = solution_from_document(loaded, raw)
    assert back.objective == sol.objective
    for lid in sol.lines:
        assert back.lines[lid].trips == sol.lines[lid].trips


def test_fingerprint_mismatch_detected():
    raw = tiny_scenario_raw()
    scen, sol = _solve(raw)
    doc = solution_to_document(raw, sol)
    other = tiny_scenario_raw()
    other["horizon_minutes"] = 11.0
    with pytest.raises(ValueError, match="different scenario"):
        solution_from_document(doc, other)


def test_bundled_scenarios_all_load():
    names = set(bundled_scenario_names())
    assert names == EXPECTED_BUNDLES
    for name in sorted(names):
        raw, scen = load_bundled_scenario(name)
        assert scen.lines


def test_bundled_short_turn_variants_differ_only_in_sections():
    plain, _ = load_bundled_scenario("4l1t")
    st, _ = load_bundled_scenario("4l1t_st")
    for a, b in zip(plain["lines"], st["lines"]):
        assert "short_turn" not in a
        assert "short_turn" in b
        assert a["p"] == b["p"] and a["d"] == b["d"]


def _write_scenario(tmp_path, raw):
    p = tmp_path / "scen.json"
    p.write_text(json.dumps(raw))
    return str(p)


def test_cli_validate_ok_and_bad(tmp_path, capsys):
    path = _write_scenario(tmp_path, tiny_scenario_raw())
    assert main(["validate", path]) == 0
    assert "ok:" in capsys.readouterr().out
    bad = tiny_scenario_raw()
    bad["horizon_minutes"] = -5
    path = _write_scenario(tmp_path, bad)
    assert main(["validate", path]) == 1
    assert "horizon" in capsys.readouterr().err


def test_cli_solve_verify_report_diagram(tmp_path, capsys):
    scen_path = _write_scenario(tmp_path, tiny_scenario_raw(short=True))
    sol_path = str(tmp_path / "sol.json")
    rc = main(["solve", scen_path, "--seedless-deterministic", "-q",
               "-o", sol_path])
    assert rc == 0
    assert main(["verify", scen_path, sol_path]) == 0
    assert "verified" in capsys.readouterr().out

    assert main(["report", scen_path, sol_path]) == 0
    out = capsys.readouterr().out
    assert "network objective" in out
    assert "07:3" in out          # clock times counted from 07:30:00

    assert main(["report", scen_path, sol_path, "--format", "csv"]) == 0
    header = capsys.readouterr().out.splitlines()[0]
    assert header.startswith("line,trip,")

    svg_path = str(tmp_path / "d.svg")
    assert main(["diagram", scen_path, sol_path, "-o", svg_path]) == 0
    svg = open(svg_path).read()
    assert svg.startswith("<?xml") and "<svg" in svg


def test_cli_solve_deterministic_byte_identical(tmp_path):
    scen_path = _write_scenario(tmp_path, tiny_scenario_raw(short=True))
    outs = []
    for name in ("a.json", "b.json"):
        p = tmp_path / name
        assert main(["solve", scen_path, "--seedless-deterministic", "-q",
                     "-o", str(p)]) == 0
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]


def test_cli_verify_rejects_mismatched_pair(tmp_path, capsys):
    scen_path = _write_scenario(tmp_path, tiny_scenario_raw())
    sol_path = str(tmp_path / "sol.json")
    assert main(["solve", scen_path, "--seedless-deterministic", "-q",
                 "-o", sol_path]) == 0
    other = tiny_scenario_raw()
    other["mu1"] = 0.9
    other_path = _write_scenario(tmp_path, other)
    assert main(["verify", other_path, sol_path]) == 1


def test_cli_dump_model_lp_text(tmp_path, capsys):
    scen_path = _write_scenario(tmp_path, tiny_scenario_raw())
    assert main(["dump-model", scen_path, "--line", "A"]) == 0
    out = capsys.readouterr().out
    assert "Minimize" in out and "Subject To" in out and "Binaries" in out


def test_cli_joint_refuses_oversized(tmp_path, capsys):
    scen_path = _write_scenario(tmp_path, tiny_scenario_raw())
    assert main(["solve", scen_path, "--joint", "--binary-cap", "1",
                 "-q", "-o", str(tmp_path / "x.json")]) == 1
    assert "binar" in capsys.readouterr().err.lower()


def test_load_scenario_validates(tmp_path):
    p = tmp_path / "bad.json"
    bad = tiny_scenario_raw()
    bad["alpha"] = 7
    p.write_text(json.dumps(bad))
    from metroplan.domain import ScenarioError
    with pytest.raises(ScenarioError):
        load_scenario(str(p))
