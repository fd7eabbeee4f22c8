import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from omfmea import cli, dsl

DATA = Path(__file__).parent / "data"
MODELS = dsl.shipped("stdlib.omdl").parent
FUEL = [str(MODELS / "fuel.omdl"), "--scenario", str(MODELS / "fuel.omsc")]


def run(*argv, stdin=""):
    out, err = io.StringIO(), io.StringIO()
    code = cli.main([str(a) for a in argv], stdout=out, stdin=io.StringIO(stdin), stderr=err)
    return code, out.getvalue(), err.getvalue()


def test_solve_single_resistor():
    code, out, _ = run("solve", DATA / "single.omdl")
    assert code == cli.EXIT_OK
    assert "R1.e     f<1       u         p<1" in out


def test_solve_bridge_needs_star_mesh():
    code, out, _ = run("solve", DATA / "bridge.omdl", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["solution"]["F"]["R5.e"] == "-f"
    assert doc["solution"]["labels"] == {"n": "0", "p": "u", "a": "u>1", "b": "u"}


def test_solve_csv():
    code, out, _ = run("solve", DATA / "single.omdl", "--format", "csv")
    assert out.splitlines() == ["element,kind,F,E,P", "R1.e,edge,f<1,u,p<1", "B.cell,source,f<1,u,p<1"]


def test_solve_short_exit_code():
    code, out, _ = run("solve", DATA / "short.omdl")
    assert code == cli.EXIT_SHORT
    assert "short circuit across source" in out


def test_solve_with_fault():
    code, out, _ = run("solve", DATA / "single.omdl", "--faults", "R1.open")
    assert code == 0
    assert "R1.e     0" in out


def test_missing_file_exit_code():
    code, _, err = run("solve", DATA / "nope.omdl")
    assert code == cli.EXIT_PARSE
    assert "nope.omdl" in err


def test_parse_error_exit_code(tmp_path):
    bad = tmp_path / "bad.omdl"
    bad.write_text("system s\n  instance X\n")
    code, _, err = run("solve", bad)
    assert code == cli.EXIT_PARSE
    assert "line 2" in err


def test_bad_constraint_exit_code():
    code, _, _ = run("simulate", DATA / "opposed.omdl", "--constraint", "B1 >> ")
    assert code == cli.EXIT_PARSE


def test_unknown_fault_exit_code():
    code, _, err = run("fmea", *FUEL, "--faults", "Engine.melted")
    assert code == cli.EXIT_FAULT
    assert "Engine.melted" in err


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        cli.main(["simulate", "x.omdl", "--max-depth", "many"])
    assert exc.value.code == cli.EXIT_USAGE
    code, _, _ = run("simulate", DATA / "opposed.omdl", "--max-depth", "0")
    assert code == cli.EXIT_USAGE


def test_simulate_pumped_two_branches():
    code, out, _ = run("simulate", MODELS / "pumped.omdl", "--system", "pumped")
    assert code == 0
    assert out.count("  path ") == 2
    assert out.count("Choose> ") == 2


def test_simulate_quiescent_start_one_leaf(tmp_path):
    code, out, _ = run("simulate", DATA / "single.omdl")
    assert code == 0
    assert out.count("  path ") == 1
    assert "path 1: quiescent" in out


def test_simulate_records_ambiguity_stop_by_default():
    code, out, err = run("simulate", DATA / "opposed.omdl")
    assert code == 0
    assert "path 1: ambiguity-stop" in out
    assert "stopped: indeterminate trigger L.light" in out
    assert "Resolve>" not in err


def test_interactive_resolution_resumes():
    code, out, err = run("simulate", DATA / "opposed.omdl", "--interactive", stdin="B1>B2\n")
    assert code == 0
    assert "ambiguity stop at run: indeterminate trigger L.light" in err
    assert "Resolve> " in err
    assert "path 1: quiescent" in out
    assert "L=lit" in out


def test_interactive_gives_up_on_empty_input():
    code, out, _ = run("simulate", DATA / "opposed.omdl", "--interactive", stdin="\n")
    assert code == 0
    assert "ambiguity-stop" in out


def test_constraint_file(tmp_path):
    f = tmp_path / "c.txt"
    f.write_text("# ordering\nB2>B1\n")
    code, out, _ = run("simulate", DATA / "opposed.omdl", "--constraints", f)
    assert code == 0 and "L=lit" in out


def test_simulate_formats_are_stable():
    a = run("simulate", MODELS / "pumped.omdl", "--system", "pumped", "--format", "json")[1]
    b = run("simulate", MODELS / "pumped.omdl", "--system", "pumped", "--format", "json")[1]
    assert a == b
    assert len(json.loads(a)["steps"][0]["paths"]) == 2
    csv_out = run("simulate", MODELS / "pumped.omdl", "--system", "pumped", "--format", "csv")[1]
    assert csv_out.splitlines()[0].startswith("step,path,leaf,node,time,fired,TankA")


def test_depth_limit_flag():
    code, out, _ = run("simulate", MODELS / "pumped.omdl", "--system", "pumped", "--max-depth", "2")
    assert code == 0
    assert "(incomplete)" in out


def test_concurrent_slots_flag():
    code, out, _ = run("simulate", MODELS / "pumped.omdl", "--system", "pumped", "--concurrent-slots", "0,t>1")
    assert code == 0
    assert out.count("  path ") == 1


def test_fmea_text_report():
    code, out, _ = run("fmea", *FUEL)
    assert code == 0
    assert out.startswith("FMEA fuel / engine_run\n")
    assert "ReturnPipe - blocked" in out


def test_fmea_fault_list_and_pairs_file(tmp_path):
    code, out, _ = run("fmea", *FUEL, "--faults", "ReturnPipe.blocked,SupplyPipe.fracture", "--format", "json")
    assert [r["cause"] for r in json.loads(out)["rows"]] == ["SupplyPipe - fracture", "ReturnPipe - blocked"]
    pairs = tmp_path / "pairs.txt"
    pairs.write_text("Pump.fails_off + ReturnValve.stuck_closed\n")
    code, out, _ = run("fmea", *FUEL, "--faults", "pairs", pairs, "--format", "json")
    assert [r["cause"] for r in json.loads(out)["rows"]] == ["Pump - fails_off + ReturnValve - stuck_closed"]


def test_fmea_against_identical_report_is_empty(tmp_path):
    report = tmp_path / "old.json"
    report.write_text(run("fmea", *FUEL, "--format", "json")[1])
    code, out, _ = run("fmea", *FUEL, "--against", report)
    assert code == 0
    assert out == "Incremental FMEA: 0 added, 0 removed, 0 changed\n"


def test_fmea_against_changed_model(tmp_path):
    report = tmp_path / "old.csv"
    report.write_text(run("fmea", *FUEL, "--format", "csv")[1])
    changed = tmp_path / "fuel2.omdl"
    changed.write_text((MODELS / "fuel.omdl").read_text().replace("severity 6", "severity 7"))
    code, out, _ = run("fmea", changed, "--scenario", MODELS / "fuel.omsc", "--against", report)
    assert code == 0
    assert "severity 6 -> 7" in out


def test_fmea_against_garbage(tmp_path):
    report = tmp_path / "old.json"
    report.write_text("{}")
    code, _, _ = run("fmea", *FUEL, "--against", report)
    assert code == cli.EXIT_PARSE


def test_fmea_parallel_output_identical():
    assert run("fmea", *FUEL, "--jobs", "4")[1] == run("fmea", *FUEL)[1]


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "omfmea.cli", "solve", str(DATA / "short.omdl")],
                          capture_output=True, text=True)
    assert proc.returncode == cli.EXIT_SHORT
