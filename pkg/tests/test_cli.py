import json


from porlab import cli
from porlab.report import SCHEMA_VERSION, TIMESTAMP_KEY, dumps, report_schema_version, strip_timestamp

SMALL = ["--space", "cross:Tmax=8,h=1/16", "--n-balls", "30", "--samples", "16"]


def run(tmp_path, *args):
    return cli.main([*args, "--out", str(tmp_path)])


def load(tmp_path, name):
    return json.loads((tmp_path / name).read_text())


def test_schema_version():
    assert report_schema_version() == "1" == SCHEMA_VERSION
    assert json.loads(json.dumps(report_schema_version())) == "1"


def test_build_dyadic(tmp_path):
    assert run(tmp_path, "build-dyadic", *SMALL) == 0
    doc = load(tmp_path, "dyadic.json")
    assert doc["schema_version"] == "1"
    assert doc["config"]["space"] == "cross:Tmax=8,h=1/16"
    for key in ("a", "A", "C_mu", "h", "seed"):
        assert key in doc["measured"]
    assert not doc["result"]["invariants"]["failures"]
    assert (tmp_path / "cubes.csv").read_text().startswith("t,k,index")


def test_fault_injection_exits_2(tmp_path):
    assert run(tmp_path, "build-dyadic", *SMALL, "--inject-fault", "partition") == 2


def test_empty_set_weight_exits_1(tmp_path):
    assert run(tmp_path, "check-weight", *SMALL, "--set", "empty") == 1


def test_bad_space_exits_1(tmp_path):
    assert run(tmp_path, "build-dyadic", "--space", "torus:n=3") == 1
    assert run(tmp_path, "build-dyadic", "--space", "segment:N=4") == 1


def test_bad_config_exits_1(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"nonsense": 1}))
    assert run(tmp_path, "build-dyadic", "--config", str(cfg)) == 1


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"space": "segment:N=2,h=1/32", "theta": 0.5, "T": 2}))
    assert run(tmp_path, "build-dyadic", "--config", str(cfg), "--T", "1") == 0
    doc = load(tmp_path, "dyadic.json")
    assert doc["config"]["theta"] == 0.5 and doc["config"]["T"] == 1


def test_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv("PORLAB_THREADS", "2")
    assert run(tmp_path, "build-dyadic", *SMALL) == 0
    assert load(tmp_path, "dyadic.json")["config"]["threads"] == 2


def test_keysum_segment_ok(tmp_path):
    code = run(tmp_path, "keysum", "--space", "segment:N=16,h=1/32,span=16", "--theta", "0.5")
    assert code == 0
    roots = load(tmp_path, "keysum.json")["result"]["roots"]
    assert all(r["holds"] for r in roots)


def test_keysum_forced_small_m_exits_3(tmp_path):
    code = run(tmp_path, "keysum", "--space", "cross:Tmax=64,h=1/16", "--theta", "0.5", "--T", "1",
               "--m", "1")
    assert code == 3


def test_porosity_scan_frontier(tmp_path):
    assert run(tmp_path, "porosity-scan", *SMALL, "--delta", "0.25", "0.5") == 0
    rows = (tmp_path / "porosity_frontier.csv").read_text().splitlines()
    assert rows[0] == "delta,worst_c,witness_center,witness_R" and len(rows) == 3


def test_exponent_and_weight(tmp_path):
    assert run(tmp_path, "exponent", "--space", "segment:N=8,h=1/64", "--samples", "8") == 0
    res = load(tmp_path, "exponent.json")["result"]
    assert res["classification"] in ("inside", "outside", "boundary")
    assert run(tmp_path, "check-weight", "--space", "segment:N=4,h=1/32", "--n-balls", "20") == 0
    assert len(load(tmp_path, "weight.json")["result"]["resolution_trend"]) == 3


def test_analyze_and_report(tmp_path):
    assert run(tmp_path, "analyze", *SMALL, "--analyses", "dyadic-check", "holes", "porosity") == 0
    res = load(tmp_path, "analyze.json")["result"]
    assert set(res) == {"dyadic-check", "holes", "porosity"}
    assert run(tmp_path, "report") == 0
    files = [e["file"] for e in load(tmp_path, "report.json")["result"]["reports"]]
    assert files == ["analyze.json"]


def test_example71(tmp_path):
    assert run(tmp_path, "example71", "--n-balls", "60") == 0
    claims = load(tmp_path, "example71.json")["result"]["claims"]
    assert len(claims) == 4 and all(c["ok"] for c in claims.values())


def test_deterministic_reports(tmp_path):
    docs, tables = [], []
    for _ in range(2):
        assert run(tmp_path, "analyze", *SMALL) == 0
        docs.append(load(tmp_path, "analyze.json"))
        tables.append((tmp_path / "cubes.csv").read_bytes())
    assert TIMESTAMP_KEY in docs[0]
    assert dumps(strip_timestamp(docs[0])) == dumps(strip_timestamp(docs[1]))
    assert tables[0] == tables[1]
