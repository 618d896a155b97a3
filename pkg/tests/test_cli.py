import json

import pytest

from qcompose.cli import EXIT_FAIL, EXIT_PASS, EXIT_USAGE, main
from qcompose.scenario import shipped_scenarios
from qcompose.suite import load_report, validate_report


def test_list(capsys):
    assert main(["verify", "--list"]) == EXIT_PASS
    assert capsys.readouterr().out.split() == shipped_scenarios()


def test_verify_passing_scenario(capsys):
    assert main(["verify", "--scenario", "ident_basic"]) == EXIT_PASS
    out = capsys.readouterr().out
    assert "PASS verify/ideal" in out
    assert out.rstrip().endswith("2 passed, 0 failed")


def test_negative_control_exits_one(capsys):
    assert main(["verify", "--scenario", "ot_leaky"]) == EXIT_FAIL
    assert "FAIL verify/leaky" in capsys.readouterr().out


def test_usage_errors(capsys):
    assert main([]) == EXIT_USAGE
    assert main(["prove"]) == EXIT_USAGE
    assert main(["verify"]) == EXIT_USAGE
    assert main(["verify", "--scenario", "ident_basic", "--jobs", "0"]) == EXIT_USAGE
    assert main(["verify", "--scenario", "ident_basic", "--tol", "-1"]) == EXIT_USAGE
    assert main(["verify", "--scenario", "ident_basic", "--seed", "-3"]) == EXIT_USAGE


def test_verb_without_matching_checks(capsys):
    assert main(["compose", "--scenario", "ident_basic"]) == EXIT_USAGE
    assert "no compose checks" in capsys.readouterr().err


def test_parse_and_schema_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["verify", "--scenario", str(bad)]) == EXIT_USAGE
    bad.write_text(json.dumps({"schema_version": 1, "name": "x"}))
    assert main(["verify", "--scenario", str(bad)]) == EXIT_USAGE
    assert main(["verify", "--scenario", str(tmp_path / "absent.json")]) == EXIT_USAGE


def test_json_report_file(tmp_path, capsys):
    path = tmp_path / "out.json"
    assert main(["fixed-point", "--scenario", "fixed_point_toy", "--report", str(path)]) == EXIT_PASS
    data = json.loads(path.read_text())
    validate_report(data)
    assert data["scenario"]["name"] == "fixed_point_toy"
    assert data["summary"]["all_passed"] is True
    assert "seconds" not in data["results"][0]
    bundle = load_report(path)
    assert bundle.passed


def test_text_report_file_and_timing(tmp_path):
    path = tmp_path / "out.txt"
    rc = main(["fixed-point", "--scenario", "fixed_point_toy", "--report", str(path), "--format", "text"])
    assert rc == EXIT_PASS
    assert path.read_text().startswith("scenario fixed_point_toy")
    jpath = tmp_path / "t.json"
    main(["fixed-point", "--scenario", "fixed_point_toy", "--report", str(jpath), "--timing"])
    assert all("seconds" in r for r in json.loads(jpath.read_text())["results"])


def test_json_to_stdout(capsys):
    assert main(["fixed-point", "--scenario", "fixed_point_toy", "--format", "json"]) == EXIT_PASS
    assert json.loads(capsys.readouterr().out)["tool"] == "qcompose"


def test_overrides_reach_the_report(tmp_path):
    path = tmp_path / "o.json"
    main(["fixed-point", "--scenario", "fixed_point_toy", "--seed", "11", "--tol", "1e-6",
          "--budget", "1000", "--report", str(path)])
    settings = json.loads(path.read_text())["settings"]
    assert (settings["seed"], settings["tolerance"], settings["budget"]) == (11, 1e-6, 1000)


def test_default_lemma_run_with_small_override(monkeypatch, capsys):
    from qcompose import cli, suite

    monkeypatch.setattr(cli, "default_lemma_scenario",
                        lambda seed, tol: suite.default_lemma_scenario(seed, tol, states=20))
    assert main(["lemmas"]) == EXIT_PASS
    assert "PASS lemmas/" in capsys.readouterr().out


def test_unwritable_report(tmp_path):
    target = tmp_path / "missing-dir" / "r.json"
    assert main(["fixed-point", "--scenario", "fixed_point_toy", "--report", str(target)]) == EXIT_USAGE


@pytest.mark.parametrize("jobs", ["1", "3"])
def test_job_count_does_not_change_reports(tmp_path, jobs):
    ref = tmp_path / "ref.json"
    out = tmp_path / "out.json"
    main(["verify", "--scenario", "tables_demo", "--report", str(ref)])
    main(["verify", "--scenario", "tables_demo", "--report", str(out), "--jobs", jobs])
    assert ref.read_bytes() == out.read_bytes()
