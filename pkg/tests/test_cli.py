import json

import pytest

from frontend_cli.app import EXIT_INPUT, EXIT_SAFE, EXIT_UNSAFE, main
from tdlmc import config
from tdlmc.msr import parse_spec
from tests.test_simulator import SESSION

CHALLENGE = str(config.CORPUS_DIR / "challenge_response.tdl")
SMALL = "thread T(a) { s -go-> t; u -go-> t; } init { T(bot) }"


@pytest.fixture
def small(tmp_path):
    path = tmp_path / "small.tdl"
    path.write_text(SMALL, encoding="utf-8")
    return path


def _unsafe(tmp_path, text):
    path = tmp_path / "bad.spec"
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_missing_file(capsys):
    assert main(["compile", "nowhere.tdl"]) == EXIT_INPUT
    assert "no such file" in capsys.readouterr().err


def test_compile_to_stdout(capsys):
    assert main(["compile", CHALLENGE]) == 0
    spec = parse_spec(capsys.readouterr().out)
    assert len(spec.rules) == 10


def test_compile_to_file(tmp_path):
    out = tmp_path / "out.spec"
    assert main(["compile", CHALLENGE, "-o", str(out)]) == 0
    assert parse_spec(out.read_text(encoding="utf-8")).rule("init").name == "init"


def test_compile_monadic_rejects_binary_program(capsys):
    assert main(["compile", CHALLENGE, "--monadic"]) == EXIT_INPUT
    assert "not monadic" in capsys.readouterr().err


def test_simulate_zero_steps(capsys):
    assert main(["simulate", CHALLENGE, "--steps", "0"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("0: ")
    assert "stop: step limit reached" in out


def test_simulate_script_reaches_unsafe(tmp_path, capsys):
    script = tmp_path / "session.txt"
    script.write_text(SESSION, encoding="utf-8")
    bad = _unsafe(tmp_path, "unsafe { stop_A(a, b, c) : true }")
    code = main(["simulate", CHALLENGE, "--script", str(script), "--unsafe", bad, "--format", "json"])
    assert code == EXIT_UNSAFE
    data = json.loads(capsys.readouterr().out)
    assert data["unsafe_hit"] == len(data["steps"]) - 1
    assert data["stop_reason"] == "script finished"


def test_check_safe(small, tmp_path, capsys):
    bad = _unsafe(tmp_path, "unsafe { u(a) : true }")
    assert main(["check", str(small), bad, "--format", "json"]) == EXIT_SAFE
    data = json.loads(capsys.readouterr().out)
    assert data["verdict"] == "SAFE"
    assert data["trace"] == []


def test_check_unsafe_prints_concrete_run(small, tmp_path, capsys):
    bad = _unsafe(tmp_path, "unsafe { t(a) : true }")
    assert main(["check", str(small), bad]) == EXIT_UNSAFE
    out = capsys.readouterr().out
    assert "verdict: UNSAFE" in out
    assert "concrete run:" in out


def test_empty_unsafe_set(small, tmp_path, capsys):
    bad = _unsafe(tmp_path, "unsafe { }")
    assert main(["check", str(small), bad]) == EXIT_INPUT
    assert "empty unsafe set" in capsys.readouterr().err


def test_bad_option_value(small, tmp_path, capsys):
    bad = _unsafe(tmp_path, "unsafe { t(a) : true }")
    assert main(["check", str(small), bad, "--max-iterations", "0"]) == EXIT_INPUT
    assert "max_iterations" in capsys.readouterr().err


def test_oracle_agrees_with_verdict_file(small, tmp_path, capsys):
    bad = _unsafe(tmp_path, "unsafe { t(a) : true }")
    verdict = tmp_path / "verdict.json"
    assert main(["check", str(small), bad, "--format", "json"]) == EXIT_UNSAFE
    verdict.write_text(capsys.readouterr().out, encoding="utf-8")
    assert main(["oracle", str(small), bad, "--verdict-file", str(verdict), "--format", "json"]) == EXIT_UNSAFE
    data = json.loads(capsys.readouterr().out)
    assert data["bad_found"] and data["agreement"] is True


def test_syntax_error_reports_file_position(tmp_path, capsys):
    path = tmp_path / "broken.tdl"
    path.write_text("thread T(a) {\n  s -go t;\n}\n", encoding="utf-8")
    assert main(["compile", str(path)]) == EXIT_INPUT
    err = capsys.readouterr().err.strip()
    assert err.startswith(f"{path}:2:")
    assert "error:" not in err


def test_simulate_text_lines(tmp_path, capsys):
    script = tmp_path / "session.txt"
    script.write_text(SESSION, encoding="utf-8")
    assert main(["simulate", CHALLENGE, "--script", str(script)]) == 0
    lines = capsys.readouterr().out.splitlines()
    first = lines[1]
    # номер шага: правило @ экземпляр : новая конфигурация
    assert first.startswith("1: ") and " @ " in first and " : " in first
    assert "=>" not in first
