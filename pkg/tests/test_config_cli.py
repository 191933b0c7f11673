import json

import pytest

from acflow.cli import main
from acflow.config import RunConfig, load_config_text, parse_config, serialize_config
from acflow.errors import ConfigError
from acflow.measure import read_csv
from acflow.phasefield import load_checkpoint, save_checkpoint
from acflow.manifold import ChartGrid

MINIMAL = "metric: {kind: flat-torus}\neps: 0.05\nT: 0.1\n"


def write(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_minimal_config_fills_defaults(tmp_path):
    cfg = parse_config(write(tmp_path, MINIMAL))
    assert cfg.h_ratio == 4.0 and cfg.cadence == 0.005 and cfg.anchors == "auto"
    assert cfg.grid_n(0.05) == 160 and cfg.grid_h(0.05) == pytest.approx(0.0125)
    assert cfg.dt(0.05) <= 0.5 * 0.05**2
    assert cfg.steps_per_sample(0.05) * cfg.dt(0.05) == pytest.approx(cfg.cadence)


def test_resolution_violation_names_both_fields(tmp_path):
    with pytest.raises(ConfigError) as info:
        parse_config(write(tmp_path, "metric: {kind: flat-torus, n: 40}\neps: 0.05\nT: 0.1\n"))
    assert any("eps" in p and "metric.n" in p for p in info.value.problems)


def test_unsorted_eps_list_gets_suggestion(tmp_path):
    with pytest.raises(ConfigError) as info:
        parse_config(write(tmp_path, "eps: [0.04, 0.08, 0.02]\nT: 0.1\n"))
    assert any("[0.08, 0.04, 0.02]" in p for p in info.value.problems)


def test_all_problems_reported_together(tmp_path):
    text = "eps: [0.04, 0.08]\nT: 0.1\ndt_ratio: 0.9\ninterface: {kind: cap}\nanchors: [{y: [1, 1], s: 0.5}]\n"
    with pytest.raises(ConfigError) as info:
        parse_config(write(tmp_path, text))
    probs = " ".join(info.value.problems)
    for key in ("eps:", "dt_ratio", "interface.kind", "anchors[0].s"):
        assert key in probs


def test_unknown_key_has_line_number(tmp_path):
    with pytest.raises(ConfigError) as info:
        parse_config(write(tmp_path, "eps: 0.05\nT: 0.1\nmetric:\n  kind: flat-torus\n  sidee: 2\n"))
    assert any("metric.sidee" in p and "line 5" in p for p in info.value.problems)


def test_yaml_syntax_error_has_position(tmp_path):
    with pytest.raises(ConfigError) as info:
        parse_config(write(tmp_path, "eps: [0.05\nT: 0.1\n"))
    assert "line" in info.value.problems[0] and "column" in info.value.problems[0]


def test_missing_file():
    with pytest.raises(ConfigError):
        parse_config("/nonexistent/run.yaml")


@pytest.mark.parametrize("text", [MINIMAL, "metric: {kind: sphere}\ninterface: {kind: cap}\neps: 0.1\nT: 0.05\n",
                                  "eps: [0.08, 0.04]\nT: 0.1\nanchors: [{y: [1.0, 1.5], s: 0.1}]\n"
                                  "ledger: {kappa2: 0.5}\n"])
def test_serialize_round_trip(text):
    cfg = load_config_text(text)
    assert load_config_text(serialize_config(cfg)) == cfg


def test_config_is_frozen():
    cfg = load_config_text(MINIMAL)
    with pytest.raises(Exception):
        cfg.T = 1.0
    assert isinstance(cfg, RunConfig)


def test_cli_config_error_exit(tmp_path, capsys):
    p = write(tmp_path, "eps: 0.05\n")
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["ok"] is False and err["failures"]


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    cfg = out / "run.yaml"
    cfg.write_text(MINIMAL)
    code = main(["simulate", "--config", str(cfg), "--out", str(out)])
    return code, out, cfg


def test_cli_simulate_writes_artifacts(simulated):
    code, out, _ = simulated
    assert code == 0
    kind, rows = read_csv(out / "diagnostics_eps0.05.csv")
    assert kind == "run-diagnostics" and len(rows) == 21
    assert len(list((out / "checkpoints").glob("*.acf"))) == 5
    summary = json.loads((out / "summary.json").read_text())
    assert summary["ok"] and all(summary["checks"].values())
    assert "kappa2" in (out / "constants.txt").read_text()


def test_cli_verify_passes_on_clean_checkpoints(simulated):
    _, out, cfg = simulated
    assert main(["verify", "--config", str(cfg), "--out", str(out)]) == 0
    kind, rows = read_csv(out / "verify.csv")
    assert kind == "verify-report" and len(rows) == 5


def test_cli_verify_fails_on_scaled_checkpoint(simulated, tmp_path):
    _, out, cfg = simulated
    bad = tmp_path / "bad"
    (bad / "checkpoints").mkdir(parents=True)
    src = sorted((out / "checkpoints").glob("*.acf"))[2]
    c = load_config_text(MINIMAL)
    g = ChartGrid(c.metric_spec(0.05))
    s = load_checkpoint(src, g)
    save_checkpoint(bad / "checkpoints" / src.name, s.with_u(1.5 * s.u))
    assert main(["verify", "--config", str(cfg), "--out", str(bad)]) == 1
    manifest = json.loads((bad / "failure.json").read_text())
    text = " ".join(manifest["failures"])
    assert "equipartition" in text and "dissipation" in text


def test_cli_verify_without_checkpoints(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    assert main(["verify", "--config", str(cfg), "--out", str(tmp_path / "empty")]) == 1


def test_cli_sweep_exit_matches_clauses(tmp_path):
    cfg = write(tmp_path, "eps: [0.1, 0.05]\nT: 0.05\n")
    code = main(["sweep", "--config", str(cfg), "--out", str(tmp_path), "--threads", "2"])
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert (code == 0) == summary["ok"]
    assert [r["eps"] for r in summary["rows"]] == [0.1, 0.05]
    assert (tmp_path / "sweep.csv").read_text().startswith("# acflow-csv/1 sweep-report")


def test_cli_scan_report_only_and_strict(tmp_path):
    cfg = write(tmp_path, "eps: 0.1\nT: 0.05\nscan: {lattice: 4, s_values: 2, density_probes: 20}\n")
    assert main(["scan", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "scan.json").read_text())
    failing = report["clearing_out_violations"] or report["support_off_violations"] \
        or report["support_on_violations"] or report["D0"] > report["D0_cap"]
    strict = main(["scan", "--config", str(cfg), "--out", str(tmp_path), "--strict"])
    assert strict == (1 if failing else 0)
    assert read_csv(tmp_path / "clearing_out.csv")[0] == "clearing-out-scan"
