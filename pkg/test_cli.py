import orjson
import pytest
import yaml
from jsonschema import Draft202012Validator
from typer.testing import CliRunner

from app import cli
from config import EXIT_OK, EXIT_USAGE, EXIT_VERIFICATION, TOOL_VERSION
from nlqc.errors import ReportSchemaError
from run_config import report_schema
from utils import write_report

runner = CliRunner()


@pytest.fixture
def run_lab(tmp_path):
    def _run(document, *extra):
        config = tmp_path / "config.yaml"
        config.write_text(yaml.safe_dump(document))
        out = tmp_path / "report.json"
        result = runner.invoke(cli, ["run", "--config", str(config), "--out", str(out), *extra])
        report = orjson.loads(out.read_bytes()) if out.exists() else None
        return result, report

    return _run


def test_teleport_normal_run(run_lab):
    result, report = run_lab({"subcommand": "teleport", "teleport": {"mode": "normal", "trials": 50}})
    assert result.exit_code == EXIT_OK
    assert report["status"] == "ok"
    assert report["tool"] == "nlqc-lab"
    assert sum(report["result"]["outcome_counts"].values()) == 50
    assert report["result"]["min_fidelity"] == pytest.approx(1.0)


def test_seed_override_is_echoed(run_lab):
    result, report = run_lab({"subcommand": "teleport", "teleport": {"mode": "normal", "trials": 5}}, "--seed", "11")
    assert result.exit_code == EXIT_OK
    assert report["seed"] == 11
    assert report["config"]["seed"] == 11
    assert len(report["config_hash"]) == 16


def test_certify_compose(run_lab):
    document = {
        "subcommand": "certify",
        "certify": {"mode": "compose", "eps_enc": 0.1, "eps_rec": 0.2, "eps_dyn": 0.0, "eps_spread": 0.05},
    }
    result, report = run_lab(document)
    assert result.exit_code == EXIT_OK
    assert report["result"]["total"] == pytest.approx(0.35)


def test_spread_run(run_lab):
    document = {"subcommand": "spread", "spread": {"model": {"kind": "brickwork", "n_sites": 6, "depth": 1}}}
    result, report = run_lab(document)
    assert result.exit_code == EXIT_OK
    assert report["result"]["spread_hops"] == 1
    assert report["result"]["n_sites"] == 6


def test_locality_fault_exits_with_verification_status(run_lab):
    document = {
        "subcommand": "holocode",
        "holocode": {"n_blocks": 2, "n_targets": 1, "word_length": 2, "fault": "early_post"},
    }
    result, report = run_lab(document)
    assert result.exit_code == EXIT_VERIFICATION
    assert report["status"] == "locality_violation"
    assert report["exit_code"] == EXIT_VERIFICATION
    assert report["result"]["witness"]


@pytest.mark.parametrize(
    "document",
    [
        {"subcommand": "spread", "spread": {"model": {"kind": "brickwork", "n_sites": 7}}},
        {"subcommand": "teleport"},
        {"subcommand": "teleport", "teleport": {"mode": "normal", "colour": "blue"}},
        {"subcommand": "nope"},
        {"subcommand": "decompose", "decompose": {"model": {"kind": "tfim"}, "method": "circuit"}},
    ],
)
def test_bad_configs_are_usage_errors(run_lab, document):
    result, report = run_lab(document)
    assert result.exit_code == EXIT_USAGE
    assert report is None


def test_missing_config_file(tmp_path):
    result = runner.invoke(cli, ["run", "--config", str(tmp_path / "absent.yaml")])
    assert result.exit_code == EXIT_USAGE


def test_schema_command():
    result = runner.invoke(cli, ["schema"])
    assert result.exit_code == EXIT_OK
    schema = orjson.loads(result.stdout)
    assert schema["$schema"].endswith("2020-12/schema")
    assert "subcommand" in schema["properties"]


def test_version_command():
    result = runner.invoke(cli, ["version"])
    assert result.exit_code == EXIT_OK
    assert TOOL_VERSION in result.stdout


@pytest.mark.parametrize(
    "document",
    [
        {"subcommand": "teleport", "teleport": {"mode": "normal", "trials": 5}},
        {
            "subcommand": "certify",
            "certify": {"mode": "compose", "eps_enc": 0.1, "eps_rec": 0, "eps_dyn": 0, "eps_spread": 0},
        },
        {"subcommand": "spread", "spread": {"model": {"kind": "brickwork", "n_sites": 6, "depth": 1}}},
        {"subcommand": "holocode", "holocode": {"n_blocks": 2, "n_targets": 1, "word_length": 2, "fault": "early_post"}},
    ],
)
def test_reports_match_the_published_schema(run_lab, document):
    _, report = run_lab(document)
    errors = list(Draft202012Validator(report_schema()).iter_errors(report))
    assert errors == []


def test_report_schema_command():
    result = runner.invoke(cli, ["schema", "--report"])
    assert result.exit_code == EXIT_OK
    schema = orjson.loads(result.stdout)
    assert schema["title"] == "nlqc-lab run report"
    assert "wall_time_s" in schema["required"]


def test_malformed_report_is_rejected(tmp_path):
    report = {"tool": "nlqc-lab", "status": "fine"}
    with pytest.raises(ReportSchemaError):
        write_report(tmp_path / "bad.json", report)
    assert not (tmp_path / "bad.json").exists()


def test_same_config_gives_identical_reports(tmp_path):
    config = tmp_path / "config.yaml"
    document = {"subcommand": "spread", "seed": 3, "spread": {"model": {"kind": "brickwork", "n_sites": 6, "depth": 2}}}
    config.write_text(yaml.safe_dump(document))
    payloads = []
    for name in ("first.json", "second.json"):
        out = tmp_path / name
        result = runner.invoke(cli, ["run", "--config", str(config), "--out", str(out)])
        assert result.exit_code == EXIT_OK
        lines = out.read_bytes().splitlines()
        payloads.append(b"\n".join(line for line in lines if b'"wall_time_s"' not in line))
    assert payloads[0] == payloads[1]
