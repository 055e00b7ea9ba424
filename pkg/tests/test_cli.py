import io
import json

import pytest

from rssigest.cli import EXIT_INVALID, EXIT_IO, EXIT_OK, main
from rssigest.simulate import Gesture, Preamble, ScenarioScript, save_scenario


def _call(*argv):
    out = io.StringIO()
    code = main(list(argv), out)
    return code, out.getvalue()


@pytest.fixture
def scenario(tmp_path):
    script = ScenarioScript(18.0, (-45.0, -50.0, -55.0), 0.5, (Preamble(3.0, 10.0), Gesture("Up-Down", 8.5)), seed=1)
    path = tmp_path / "one.scenario"
    save_scenario(script, path)
    return path


def test_generate_then_run(tmp_path, scenario):
    """[DERIVED] generate writes a trace and truth; run recognises the gesture and its action."""
    code, _ = _call("generate", str(scenario), "-o", str(tmp_path / "g"))
    assert code == EXIT_OK
    assert (tmp_path / "g" / "trace.csv").exists() and (tmp_path / "g" / "truth.jsonl").exists()
    code, text = _call("run", str(tmp_path / "g" / "trace.csv"))
    assert code == EXIT_OK
    recs = [json.loads(line) for line in text.splitlines()]
    assert [(r["type"], r.get("family"), r.get("action")) for r in recs] == [
        ("gesture", "Up-Down", None),
        ("action", "Up-Down", "play"),
    ]


def test_dump_stages(tmp_path, scenario):
    """[TRIVIAL] per-AP signal, primitive and encoding files plus the fused encoding."""
    _call("generate", str(scenario), "-o", str(tmp_path / "g"))
    code, _ = _call("run", str(tmp_path / "g" / "trace.csv"), "--dump-stages", str(tmp_path / "d"))
    assert code == EXIT_OK
    d = tmp_path / "d"
    assert (d / "AP1_signal.csv").exists() and (d / "AP1_primitives.csv").exists()
    assert (d / "fused_encoded.txt").read_text() == "session 0: +-\n"


def test_evaluate_command(tmp_path, scenario):
    """[TRIVIAL]"""
    code, text = _call("evaluate", str(scenario.parent), "-o", str(tmp_path / "rep"))
    assert code == EXIT_OK
    assert "gesture accuracy: 1.000" in text
    assert (tmp_path / "rep" / "report.txt").exists()


def test_calibrate_sigma_command():
    """[TRIVIAL] prints a noise level in the searched range."""
    code, text = _call("calibrate-sigma", "--trials", "30")
    assert code == EXIT_OK
    sigma = float(text.split("=")[1].split()[0])
    assert 0.0 <= sigma <= 8.0


def test_seed_override_changes_trace(tmp_path, scenario):
    """[TRIVIAL]"""
    _call("generate", str(scenario), "-o", str(tmp_path / "a"))
    _call("--seed", "99", "generate", str(scenario), "-o", str(tmp_path / "b"))
    assert (tmp_path / "a" / "trace.csv").read_text() != (tmp_path / "b" / "trace.csv").read_text()


def test_exit_codes(tmp_path):
    """[TRIVIAL] 2 for unreadable files, 1 for invalid input or usage."""
    assert _call("run", str(tmp_path / "missing.csv"))[0] == EXIT_IO
    bad = tmp_path / "bad.csv"
    bad.write_text("time_s,ap_id,rssi_dbm\n0.0,AP1,oops\n")
    assert _call("run", str(bad))[0] == EXIT_INVALID
    assert _call("calibrate-sigma", "--trials", "1")[0] == EXIT_INVALID
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == EXIT_INVALID
