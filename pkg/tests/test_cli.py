import csv
import json

import pytest

from slotmesh.cli import main
from slotmesh.network import concentric_topology
from slotmesh.schedule import (load_schedule, save_schedule, save_topology,
                               schedule_to_dict)
from slotmesh.schedulers import schedule_orchestra_sbd


@pytest.fixture
def files(tmp_path, three_node_schedule, path_topology):
    sched = tmp_path / "sched.json"
    topo = tmp_path / "topo.json"
    save_schedule(three_node_schedule, sched)
    save_topology(path_topology, topo)
    return tmp_path, str(sched), str(topo)


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_validate_ok(files, capsys):
    _, sched, topo = files
    assert main(["validate", "--schedule", sched, "--topology", topo]) == 0
    assert "conflict-free" in capsys.readouterr().out


def test_validate_reports_violation(files, capsys):
    tmp_path, _, topo = files
    bad = {
        "slotframe_length": 2,
        "slot_duration_s": 0.01,
        "nodes": [
            {"id": 0, "tx": [], "rx": [{"slot": 0, "peer": 1, "channel": 11}]},
            {"id": 1,
             "tx": [{"slot": 0, "peer": 0, "channel": 11}],
             "rx": [{"slot": 1, "peer": 0, "channel": 11}]},
            {"id": 2, "tx": [], "rx": []},
        ],
    }
    # slot 1 appears in node 1 rx without a matching transmitter
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    code = main(["validate", "--schedule", str(path), "--topology", topo])
    assert code == 1
    assert "link_consistency" in capsys.readouterr().out


def test_validate_tx_rx_overlap_names_invariant(files, capsys):
    tmp_path, _, topo = files
    bad = {
        "slotframe_length": 2,
        "slot_duration_s": 0.01,
        "nodes": [
            {"id": 0, "tx": [], "rx": [{"slot": 0, "peer": 1, "channel": 11}]},
            {"id": 1,
             "tx": [{"slot": 0, "peer": 0, "channel": 11}],
             "rx": [{"slot": 0, "peer": 0, "channel": 11}]},
            {"id": 2, "tx": [], "rx": []},
        ],
    }
    path = tmp_path / "overlap.json"
    path.write_text(json.dumps(bad))
    code = main(["validate", "--schedule", str(path), "--topology", topo])
    assert code == 1
    assert "tx_rx_overlap" in capsys.readouterr().out


def test_malformed_json_is_input_error(files, capsys):
    tmp_path, _, topo = files
    path = tmp_path / "broken.json"
    path.write_text("{ not json")
    code = main(["validate", "--schedule", str(path), "--topology", topo])
    assert code == 2
    err = capsys.readouterr().err
    assert "line" in err and "column" in err


def test_schedule_generation(tmp_path, capsys):
    out = tmp_path / "generated.json"
    topo_out = tmp_path / "topo.json"
    code = main(["schedule", "--algorithm", "ta-mc", "--rings", "2",
                 "--out", str(out), "--topology-out", str(topo_out)])
    assert code == 0
    text = capsys.readouterr().out
    assert "slotframe_length=19" in text
    assert "root_rx_slots=18" in text
    sched = load_schedule(out)
    assert sched.slotframe_length == 19
    assert main(["validate", "--schedule", str(out),
                 "--topology", str(topo_out)]) == 0


def test_schedule_prints_ta_sc_length(tmp_path, capsys):
    out = tmp_path / "tasc.json"
    main(["schedule", "--algorithm", "ta-sc", "--rings", "2", "--out", str(out)])
    assert "slotframe_length=31" in capsys.readouterr().out


def test_schedule_prints_sbd_shape(tmp_path, capsys):
    out = tmp_path / "sbd.json"
    main(["schedule", "--algorithm", "sbd", "--rings", "2", "--out", str(out)])
    text = capsys.readouterr().out
    assert "slotframe_length=19" in text
    assert "root_rx_slots=6" in text


def test_schedule_trace(tmp_path):
    out = tmp_path / "s.json"
    trace = tmp_path / "trace.log"
    main(["schedule", "--algorithm", "ta-sc", "--rings", "1",
          "--out", str(out), "--trace", str(trace)])
    lines = trace.read_text().splitlines()
    assert lines
    assert all(line.split()[0] in ("track", "assign_rx") for line in lines)


def test_analyze_csv(files, tmp_path):
    _, sched, topo = files
    out = tmp_path / "analysis.csv"
    marg = tmp_path / "marginals.csv"
    code = main(["analyze", "--schedule", sched, "--topology", topo,
                 "--rate", "0.02", "--queue", "6", "--out", str(out),
                 "--marginals", str(marg)])
    assert code == 0
    rows = _read_csv(out)
    assert rows[0] == list(("node", "paccept", "delay_slots", "delay_seconds",
                            "pdr", "e2e_delay_slots", "e2e_delay_seconds"))
    assert rows[1][0] == "0"
    assert float(rows[1][1]) == 1.0 and float(rows[1][5]) == 0.0
    assert rows[-1][0] == "throughput_pps"
    mrows = _read_csv(marg)
    assert mrows[0] == ["node", "q", "probability"]
    assert len(mrows) == 1 + 3 * 7  # three nodes, K+1 levels each


def test_analyze_deterministic(files, tmp_path):
    _, sched, topo = files
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    for out in (a, b):
        main(["analyze", "--schedule", sched, "--topology", topo,
              "--rate", "0.01", "--queue", "4", "--out", str(out)])
    assert a.read_bytes() == b.read_bytes()


def test_analyze_interval_flag(files, tmp_path):
    _, sched, topo = files
    out = tmp_path / "by_interval.csv"
    code = main(["analyze", "--schedule", sched, "--topology", topo,
                 "--interval", "1.0", "--queue", "4", "--out", str(out)])
    assert code == 0


def test_analyze_single_node_reference_point(tmp_path):
    # one node feeding the sink through one slot of a five-slot frame at
    # one packet per frame: acceptance lands at the known 0.95
    sched = {
        "slotframe_length": 5,
        "slot_duration_s": 0.01,
        "nodes": [
            {"id": 0, "tx": [], "rx": [{"slot": 2, "peer": 1, "channel": 11}]},
            {"id": 1, "tx": [{"slot": 2, "peer": 0, "channel": 11}], "rx": []},
        ],
    }
    topo = {"nodes": 2, "edges": [[0, 1]], "parents": [None, 0]}
    sched_path = tmp_path / "s.json"
    topo_path = tmp_path / "t.json"
    sched_path.write_text(json.dumps(sched))
    topo_path.write_text(json.dumps(topo))
    out = tmp_path / "ref.csv"
    code = main(["analyze", "--schedule", str(sched_path),
                 "--topology", str(topo_path), "--rate", "0.2",
                 "--queue", "10", "--out", str(out)])
    assert code == 0
    rows = _read_csv(out)
    assert abs(float(rows[2][1]) - 0.95) <= 0.005  # node 1 paccept


def test_sweep(tmp_path):
    spec = {
        "parameter": "p_gen",
        "grid": {"min": 0.0, "max": 0.02, "count": 3, "scale": "linear"},
        "queue_capacities": [4, 8],
        "schedules": ["sbd", "ta-mc"],
        "topology": {"rings": 1},
    }
    spec_path = tmp_path / "sweep.json"
    spec_path.write_text(json.dumps(spec))
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--spec", str(spec_path), "--out", str(out)]) == 0
    rows = _read_csv(out)
    assert rows[0] == list(("schedule", "variant", "K", "rate", "metric", "value"))
    body = rows[1:]
    assert len(body) == 2 * 2 * 3 * 4  # schedules x K x grid x metrics
    zero = [r for r in body if float(r[3]) == 0.0 and r[4] == "throughput_pps"]
    assert zero and all(float(r[5]) == 0.0 for r in zero)


def test_sweep_rejects_bad_grid(tmp_path, capsys):
    spec_path = tmp_path / "sweep.json"
    spec_path.write_text(json.dumps({
        "grid": {"min": 0.1, "max": 0.01, "count": 3},
        "topology": {"rings": 1},
    }))
    assert main(["sweep", "--spec", str(spec_path)]) == 2


def test_simulate_csv_shape(tmp_path, capsys):
    topo = concentric_topology(1)
    sched = schedule_orchestra_sbd(topo)
    topo_path = tmp_path / "t.json"
    sched_path = tmp_path / "s.json"
    save_topology(topo, topo_path)
    save_schedule(sched, sched_path)
    out = tmp_path / "sim.csv"
    code = main(["simulate", "--schedule", str(sched_path),
                 "--topology", str(topo_path), "--rate", "0.02",
                 "--queue", "4", "--seed", "1", "--runs", "5",
                 "--packets", "50", "--warmup-slots", "500",
                 "--out", str(out), "--compare-model"])
    assert code == 0
    rows = _read_csv(out)
    per_run = [r for r in rows[1:] if r[0] != "agg"]
    agg = [r for r in rows[1:] if r[0] == "agg"]
    assert len(per_run) == 5 * 3  # five runs, three metrics
    assert len(agg) == 3
    printed = capsys.readouterr().out
    assert printed.count("inside CI:") == 3


def test_simulate_deterministic(tmp_path):
    topo = concentric_topology(1)
    sched = schedule_orchestra_sbd(topo)
    topo_path = tmp_path / "t.json"
    sched_path = tmp_path / "s.json"
    save_topology(topo, topo_path)
    save_schedule(sched, sched_path)
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    for out in (a, b):
        main(["simulate", "--schedule", str(sched_path),
              "--topology", str(topo_path), "--rate", "0.02",
              "--queue", "4", "--seed", "3", "--runs", "2",
              "--packets", "30", "--warmup-slots", "300", "--out", str(out)])
    assert a.read_bytes() == b.read_bytes()


def test_missing_file_is_input_error(capsys):
    assert main(["validate", "--schedule", "nope.json",
                 "--topology", "alsono.json"]) == 2
