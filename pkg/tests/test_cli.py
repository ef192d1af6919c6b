from __future__ import annotations

import json

import pandas as pd
import pytest

from main import build_parser, main
from router.common import EXIT_INVALID_INPUT, EXIT_IO_ERROR, int_list
from service.graph_service import load_edge_list, load_partition
from tests.helpers import record

GENERATE = [
    "generate", "--n", "120", "--avg-degree", "8", "--k-max", "20", "--s-min", "20", "--s-max", "40",
    "--mu", "0.1", "--tolerance", "0.05", "--sigma-c", "5", "--d", "8", "--seed", "7",
]


@pytest.fixture(scope="module")
def bench(tmp_path_factory):
    prefix = tmp_path_factory.mktemp("cli") / "bench"
    assert main([*GENERATE, "--out-prefix", str(prefix)]) == 0
    return prefix


def _sibling(prefix, suffix):
    return prefix.with_name(prefix.name + suffix)


def test_generate_writes_benchmark(bench):
    graph = load_edge_list(_sibling(bench, ".edges"))
    partition = load_partition(_sibling(bench, ".partition"), n=graph.n)
    assert graph.n == 120
    assert partition.k >= 2
    assert _sibling(bench, ".features.csv").exists()


def test_perturb_writes_ledger(bench, tmp_path):
    out = tmp_path / "hidden"
    code = main([
        "perturb", "--graph", str(_sibling(bench, ".edges")), "--partition", str(_sibling(bench, ".partition")),
        "--features", str(_sibling(bench, ".features.csv")), "--method", "fcom-dice", "--target", "0",
        "--beta", "0.5", "--p", "0.5", "--seed", "3", "--out-prefix", str(out),
    ])
    assert code == 0
    ledger = json.loads(_sibling(out, ".ledger.json").read_text(encoding="utf-8"))
    assert ledger["method"] == "fcom-dice"
    assert _sibling(out, ".edges").exists() and _sibling(out, ".features.csv").exists()


def test_cluster_and_evaluate(bench, tmp_path):
    detected = tmp_path / "detected.partition"
    trace = tmp_path / "trace.csv"
    code = main([
        "cluster", "--graph", str(_sibling(bench, ".edges")), "--features", str(_sibling(bench, ".features.csv")),
        "--k", "4", "--hidden", "8", "--epochs", "5", "--seed", "1", "--out", str(detected), "--trace", str(trace),
    ])
    assert code == 0
    assert len(pd.read_csv(trace)) == 5

    table = tmp_path / "eval.csv"
    code = main([
        "evaluate", "--graph", str(_sibling(bench, ".edges")), "--truth", str(_sibling(bench, ".partition")),
        "--detected", str(detected), "--target", "0,1", "--metrics", "q,m1,m2", "--out", str(table),
    ])
    assert code == 0
    frame = pd.read_csv(table)
    assert frame["target"].tolist() == [0, 1]
    assert {"q_truth", "q_detected", "m1", "m2"} <= set(frame.columns)


def test_cluster_writes_trace_next_to_partition_by_default(bench, tmp_path):
    detected = tmp_path / "dmon.partition"
    code = main([
        "cluster", "--graph", str(_sibling(bench, ".edges")), "--features", str(_sibling(bench, ".features.csv")),
        "--k", "4", "--hidden", "8", "--epochs", "3", "--seed", "2", "--out", str(detected),
    ])
    assert code == 0
    trace = pd.read_csv(tmp_path / "dmon.partition.trace.csv")
    assert trace.columns.tolist() == ["epoch", "loss"]
    assert trace["epoch"].tolist() == [0, 1, 2]


def test_consensus(bench, tmp_path):
    out = tmp_path / "consensus.partition"
    assert main(["consensus", "--graph", str(_sibling(bench, ".edges")), "--runs", "3", "--out", str(out)]) == 0
    assert load_partition(out, n=120).k >= 2


def test_invalid_budget_exits_with_input_error(bench, tmp_path):
    code = main([
        "perturb", "--graph", str(_sibling(bench, ".edges")), "--partition", str(_sibling(bench, ".partition")),
        "--method", "dice", "--target", "0", "--beta", "1.5", "--out-prefix", str(tmp_path / "x"),
    ])
    assert code == EXIT_INVALID_INPUT


def test_missing_file_exits_with_io_error(tmp_path):
    code = main(["consensus", "--graph", str(tmp_path / "absent.edges"), "--out", str(tmp_path / "p")])
    assert code == EXIT_IO_ERROR


def test_bad_config_exits_with_input_error(tmp_path):
    config = tmp_path / "sweep.json"
    config.write_text(json.dumps({"realizations": 0}), encoding="utf-8")
    assert main(["experiment", "--config", str(config), "--out-dir", str(tmp_path / "run")]) == EXIT_INVALID_INPUT


def test_report_without_plots(tmp_path):
    rows = [
        record(method=method, beta_b=beta_b, sigma_c=sigma_c, m1=0.1 + beta_b + bonus, m2=0.2 + beta_b + bonus)
        for method, bonus in (("dice", 0.0), ("fcom-dice", 0.05))
        for beta_b in (0.2, 0.6)
        for sigma_c in (1.0, 5.0)
    ]
    records = tmp_path / "records.csv"
    pd.DataFrame([r.as_row() for r in rows]).to_csv(records, index=False)
    out = tmp_path / "report"
    assert main(["report", "--in", str(records), "--out-dir", str(out), "--no-plots"]) == 0
    for name in ("improvement_m1.csv", "rate_of_change_m2.csv", "trend.json", "descriptors.csv"):
        assert (out / name).exists()
    assert not (out / "plots").exists()
    assert set(json.loads((out / "trend.json").read_text(encoding="utf-8"))) == {"m1", "m2"}


def test_ingest_toy_network(tmp_path):
    edges = tmp_path / "toy.tsv"
    edges.write_text("a\tb\nb\tc\na\tc\nc\td\nd\te\ne\tf\nd\tf\n", encoding="utf-8")
    out = tmp_path / "toy"
    code = main(["ingest", "--edges", str(edges), "--sigma-c", "1.0", "--runs", "3", "--d", "4",
                 "--out-prefix", str(out)])
    assert code == 0
    for suffix in (".edges", ".partition", ".features.csv", ".ids"):
        assert _sibling(out, suffix).exists()


def test_ingest_rejects_missing_feature_source(tmp_path):
    edges = tmp_path / "toy.tsv"
    edges.write_text("a\tb\n", encoding="utf-8")
    assert main(["ingest", "--edges", str(edges), "--out-prefix", str(tmp_path / "t")]) == EXIT_INVALID_INPUT


def test_list_parsers():
    assert int_list("1,2, 3") == [1, 2, 3]


def test_log_level_is_case_insensitive():
    args = build_parser().parse_args(["--log-level", "debug", "consensus", "--graph", "g", "--out", "p"])
    assert args.log_level == "DEBUG"
