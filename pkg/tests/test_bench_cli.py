import csv
import json
import subprocess
import sys

import pytest

from cryptomaze.bench import (
    CSV_COLUMNS, ConfigError, ExperimentConfig, load_graph, run_experiment, shared_edge_report,
    shared_edge_stats,
)
from cryptomaze.cli import main
from cryptomaze.pcn import coins
from cryptomaze.routing import PathSet


def test_diamond_contract_counts(tmp_path):
    out = tmp_path / "rows.csv"
    rc = main(["run", "--graph", "fixture:diamond", "--amounts", "5.1", "--protocols",
               "cryptomaze,amp,mhhtlc,htlc", "--out", str(out)])
    assert rc == 0
    with open(out) as fh:
        reader = csv.DictReader(fh)
        assert tuple(reader.fieldnames) == CSV_COLUMNS
        rows = {r["protocol"]: r for r in reader}
    assert rows["cryptomaze"]["n_contracts"] == "6"
    assert rows["amp"]["n_contracts"] == "8"
    assert rows["mhhtlc"]["n_contracts"] == "8"
    assert rows["htlc"]["outcome"] == "multi-path-unsupported"
    assert all(rows[p]["outcome"] == "success" for p in ("cryptomaze", "amp", "mhhtlc"))


def test_run_to_stdout(capsys):
    assert main(["run", "--graph", "fixture:chain:3", "--pair", "0,3", "--amounts", "1"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].split(",") == list(CSV_COLUMNS)
    assert len(lines) == 2


@pytest.mark.parametrize("argv", [
    ["run", "--graph", "fixture:diamond", "--amounts", "1", "--trials", "0"],
    ["run", "--graph", "fixture:diamond", "--amounts", "abc"],
    ["run", "--graph", "fixture:diamond", "--amounts", "1", "--protocols", "lightning"],
    ["run", "--graph", "missing.json", "--amounts", "1"],
    ["run", "--graph", "ba:10", "--amounts", "1"],
    ["run", "--graph", "fixture:diamond", "--amounts", "1", "--delta", "0"],
    ["attack", "--kind", "wormhole", "--colluders", "2,3"],
    ["attack", "--kind", "linkability", "--trials", "3"],
    ["shared-edges", "--graph", "fixture:diamond", "--amounts", "1", "--trials", "0"],
    ["frobnicate"],
])
def test_config_errors_exit_1(argv):
    with pytest.raises(SystemExit) as exc:
        sys.exit(main(argv))
    assert exc.value.code == 1


def test_runtime_error_exit_2(tmp_path):
    assert main(["run", "--graph", "fixture:diamond", "--amounts", "1",
                 "--out", str(tmp_path / "no" / "such" / "dir.csv")]) == 2


def test_attack_reports(tmp_path):
    out = tmp_path / "r.json"
    assert main(["attack", "--kind", "wormhole", "--protocol", "htlc", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["pass"] is False
    assert main(["attack", "--kind", "wormhole", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["pass"] is True
    assert main(["attack", "--kind", "linkability", "--trials", "100", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert set(rep) == {"test", "trials", "statistic", "threshold", "pass"}


def test_shared_edges_cli(capsys):
    assert main(["shared-edges", "--graph", "fixture:diamond", "--amounts", "5.1", "--trials", "3"]) == 0


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "cryptomaze.cli", "--help"], capture_output=True)
    assert proc.returncode == 0 and b"shared-edges" in proc.stdout


def test_shared_edge_stats_diamond():
    paths = PathSet(0, 5, 2, ((0, 1, 2, 4, 5), (0, 1, 3, 4, 5)), (1, 1))
    stats = shared_edge_stats(paths)
    assert stats["path_contracts"] == 8 and stats["unique_edges"] == 6
    assert stats["savings"] == 0.25
    assert stats["extra_contracts"] == pytest.approx(1 / 3)


def test_shared_edge_report_counts():
    rep = shared_edge_report(load_graph("ba:100,3", 0), coins("0.05"), 10, seed=0)
    assert rep.routed + rep.failed == 10
    assert 0 <= rep.sharing_fraction <= 1
    with pytest.raises(ConfigError):
        shared_edge_report(load_graph("fixture:diamond"), 1, 0)


def test_experiment_parallel_matches_serial():
    kw = dict(graph="ba:60,2", amounts=[coins("0.02")], trials=4, protocols=("cryptomaze", "amp"))
    serial = run_experiment(ExperimentConfig(**kw))
    parallel = run_experiment(ExperimentConfig(workers=2, **kw))
    strip = lambda rows: [(r.protocol, r.trial, r.outcome, r.n_contracts, r.bytes_total) for r in rows]
    assert strip(serial) == strip(parallel)
