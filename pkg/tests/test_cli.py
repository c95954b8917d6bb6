"""Command-line interface: exit codes, JSON output, witness round trips."""

import json

import pytest

from sesmon import cli

from conftest import PROCS


def path(name: str) -> str:
    return str(PROCS / f"{name}.proc")


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_run_exit_codes(capsys):
    code, _, _ = run_cli(capsys, "run", path("medical"),
                         "--choice", "simple=true", "--choice",
                         "gooduse=true")
    assert code == 0  # clean
    code, _, _ = run_cli(capsys, "run", path("servicelevels"))
    assert code == 3  # stuck by design: only one service is initiated


def test_mrun_exit_codes_and_dagger(capsys):
    code, out, _ = run_cli(capsys, "mrun", path("medical"),
                           "--choice", "simple=false", "--choice",
                           "gooduse=false")
    assert code == 5
    assert "error (dagger)" in out
    code, _, _ = run_cli(capsys, "mrun", path("medical"),
                         "--choice", "simple=false", "--choice",
                         "gooduse=true")
    assert code == 0


def test_check_exit_codes(capsys):
    code, _, _ = run_cli(capsys, "check-secure", path("example3"),
                         "--levels", "bot", "--queue-bound", "1")
    assert code == 0
    code, _, _ = run_cli(capsys, "check-secure", path("example2"),
                         "--levels", "bot", "--queue-bound", "1")
    assert code == 1
    code, _, _ = run_cli(capsys, "check-safe", path("example2"),
                         "--queue-bound", "1")
    assert code == 1
    code, _, _ = run_cli(capsys, "check-noerr", path("sibling"))
    assert code == 0


def test_bad_input_exit_code(capsys):
    assert run_cli(capsys, "run", "no-such-file.proc")[0] == 65
    assert run_cli(capsys, "check-secure", path("example2"),
                   "--levels", "top")[0] == 65  # not downward closed
    assert run_cli(capsys, "run", path("medical"),
                   "--choice", "bogus")[0] == 65
    assert run_cli(capsys, "run", path("medical"),
                   "--scheduler", "random")[0] == 65  # seed required


def test_bundled_program_loads_by_bare_name(capsys):
    code, _, _ = run_cli(capsys, "run", "nil.proc")
    assert code == 0


def test_json_shape(capsys):
    code, out, _ = run_cli(capsys, "check-secure", path("example2"),
                           "--levels", "bot", "--queue-bound", "1",
                           "--json")
    assert code == 1
    doc = json.loads(out)
    assert doc["command"] == "check-secure"
    assert doc["overall"] == "fails"
    assert {"elements", "order", "bottom", "top"} <= set(doc["lattice"])
    assert doc["verdicts"][0]["L"] == ["bot"]
    assert doc["witness"]["kind"] == "leaf"
    assert {"rule", "step", "qset_left", "qset_right"} <= set(doc["witness"])


def test_witness_out_and_replay_round_trip(tmp_path, capsys):
    wfile = tmp_path / "w.json"
    code, _, _ = run_cli(capsys, "check-secure", path("example2"),
                         "--levels", "bot", "--queue-bound", "1",
                         "--witness-out", str(wfile))
    assert code == 1 and wfile.exists()
    code, out, _ = run_cli(capsys, "check-secure", path("example2"),
                           "--replay", str(wfile))
    assert code == 1
    assert "disagreement reproduced" in out


def test_mrun_json_reports_error_witness(capsys):
    code, out, _ = run_cli(capsys, "mrun", path("servicelevels"), "--json")
    assert code == 5
    doc = json.loads(out)
    assert doc["verdicts"] == [{"status": "error"}]
    assert doc["witness"][0]["monitor"] == "top"
    assert doc["witness"][0]["level"] == "bot"
