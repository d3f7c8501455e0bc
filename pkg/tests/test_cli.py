import io
import json

import pytest

from nodalkit.api import reports
from nodalkit.api.cli import EXIT_OK, EXIT_USAGE, RunConfig, run


def test_constants_report(settings, capsys):
    code = run(["constants", "--dim", "3"])
    out = capsys.readouterr().out
    assert code == EXIT_OK
    document = json.loads(out)
    assert document["schema"] == 1
    assert document["kind"] == "constants"
    assert document["report"]["b0"] / document["report"]["a0"] == pytest.approx(0.5, rel=1e-12)
    assert document["metadata"]["command"] == "constants"


def test_constants_without_metadata_is_deterministic(settings, capsys):
    assert run(["constants", "--eps", "0.1", "--no-metadata"]) == EXIT_OK
    first = capsys.readouterr().out
    assert run(["constants", "--eps", "0.1", "--no-metadata"]) == EXIT_OK
    second = capsys.readouterr().out
    assert "metadata" not in json.loads(first)
    assert first == second


def test_eps_and_p_are_exclusive(settings, capsys):
    code = run(["constants", "--eps", "0.1", "--p", "4.9"])
    err = capsys.readouterr().err
    assert code == EXIT_USAGE
    assert "usage" in err


def test_unknown_flag_is_usage_error(settings, capsys):
    code = run(["solve", "--eps", "0.1", "--bogus"])
    captured = capsys.readouterr()
    assert code == EXIT_USAGE
    assert "usage" in captured.err
    assert captured.out == ""


def test_missing_exponent_is_usage_error(settings, capsys):
    stderr = io.StringIO()
    code = run(["solve", "--nodes", "0"], stderr=stderr)
    assert code == EXIT_USAGE
    assert "--eps" in stderr.getvalue()


def test_run_config_validation():
    config = RunConfig(command="constants", N=4, eps=0.2)
    assert config.params().N == 4
    assert RunConfig(command="constants").params().beta == 0.0
    with pytest.raises(ValueError):
        RunConfig(command="reduce")
    with pytest.raises(ValueError):
        RunConfig(command="constants", N=2)


def test_run_config_overrides_settings(settings):
    config = RunConfig(command="solve", eps=0.1, rtol=1e-9, tau=0.8, workers=3)
    applied = config.apply(settings)
    assert applied.rtol == 1e-9
    assert applied.tau_for(3) == applied.tau_for(5) == 0.8
    assert applied.workers == 3
    assert applied.atol == settings.atol


def test_sweep_writes_csv(settings, capsys):
    argv = ["sweep", "--eps", "0.1", "--alpha-min", "0.2", "--alpha-max", "0.9", "--samples", "4"]
    assert run(argv) == EXIT_OK
    out = capsys.readouterr().out
    assert out.splitlines()[0] == ",".join(reports.SWEEP_COLUMNS)
    intervals = reports.read_sweep_csv(out)
    assert [item.tag for item in intervals] == ["BlowUpPositive(0)"]
    assert intervals[0].alpha_lo == 0.2


def test_solve_writes_file_and_reuses_cache(settings, tmp_path, capsys):
    out = tmp_path / "ground.json"
    argv = ["solve", "--eps", "0.1", "--nodes", "0", "--out", str(out)]
    assert run(argv) == EXIT_OK
    first = out.read_text(encoding="utf-8")
    document = json.loads(first)
    assert document["kind"] == "solve"
    assert document["report"]["nodes"] == []
    assert max(document["report"]["residual"]["identities"].values()) < 1e-5
    assert list(settings.cache_path.glob("*.json"))

    assert run(argv) == EXIT_OK
    second = out.read_text(encoding="utf-8")
    assert reports.deterministic_part(first) == reports.deterministic_part(second)
    assert capsys.readouterr().out == ""


def test_verify_identities_suite(settings, capsys):
    code = run(["verify", "--suite", "identities"])
    out = capsys.readouterr().out
    assert code == EXIT_OK
    assert out.splitlines()[0].split()[:3] == ["estado", "suite", "chequeo"]
    assert "identities" in out


def test_verify_rejects_unknown_suite(settings, capsys):
    assert run(["verify", "--suite", "inexistente"]) == EXIT_USAGE
