import json

from offsim.cli import main
from offsim.config import config_to_dict, load_config, save_config, SimConfig
from offsim.metrics import read_report
from offsim.trace import read_header, read_trace


def run_cli(*argv):
    return main(list(argv))


def test_gen_stream_and_header(tmp_path):
    out = tmp_path / "s.trace"
    rc = run_cli("gen", "stream", "--array-bytes", "4096", "--element-size", "4",
                 "--passes", "2", "--out", str(out))
    assert rc == 0
    hdr = read_header(out)
    assert hdr.record_count == 2 * 4096 // 4
    assert "stream" in hdr.generator


def test_gen_chase_deterministic(tmp_path):
    a, b = tmp_path / "a.trace", tmp_path / "b.trace"
    for p in (a, b):
        rc = run_cli("gen", "chase", "--working-set-bytes", str(1 << 16),
                     "--node-count", "128", "--seed", "9", "--out", str(p))
        assert rc == 0
    assert a.read_bytes() == b.read_bytes()


def test_gen_mixed_requires_components(tmp_path):
    rc = run_cli("gen", "mixed", "--out", str(tmp_path / "m.trace"))
    assert rc == 2


def test_gen_mixed(tmp_path):
    out = tmp_path / "m.trace"
    rc = run_cli(
        "gen", "mixed", "--records", "5000", "--seed", "3",
        "--component", "stream=0.6", "--component", "chase=0.4",
        "--array-bytes", "16384", "--working-set-bytes", str(1 << 18),
        "--node-count", "256", "--out", str(out),
    )
    assert rc == 0
    assert read_header(out).record_count == 5000


def small_config(tmp_path):
    cfg = {
        "hierarchy": {
            "l1": {"capacity_bytes": 1024, "ways": 2, "latency": 5, "mshrs": 16},
            "l2": {"capacity_bytes": 2048, "ways": 4, "latency": 15, "mshrs": 48},
            "llc": {"capacity_bytes": 8192, "ways": 4, "latency": 55, "mshrs": 64},
        }
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_run_appends_rows(tmp_path, capsys):
    trace = tmp_path / "t.trace"
    run_cli("gen", "stream", "--array-bytes", "16384", "--out", str(trace))
    cfg = small_config(tmp_path)
    out = tmp_path / "metrics.csv"
    for predictor, hermes in (("never", "off"), ("popet", "on"), ("oracle", "on")):
        rc = run_cli("run", "--trace", str(trace), "--config", str(cfg),
                     "--predictor", predictor, "--hermes", hermes,
                     "--out", str(out))
        assert rc == 0
    rows = read_report(out)
    assert len(rows) == 3
    assert [r.predictor for r in rows] == ["never", "popet", "oracle"]
    assert rows[0].trace == "t.trace"
    assert rows[2].fp == 0 and rows[2].fn == 0


def test_run_ideal_mode(tmp_path):
    trace = tmp_path / "t.trace"
    run_cli("gen", "chase", "--working-set-bytes", str(1 << 16),
            "--node-count", "256", "--out", str(trace))
    cfg = small_config(tmp_path)
    out = tmp_path / "m.csv"
    rc = run_cli("run", "--trace", str(trace), "--config", str(cfg),
                 "--hermes", "ideal", "--out", str(out))
    assert rc == 0
    row = read_report(out)[0]
    assert row.predictor == "oracle"
    assert row.hermes == "ideal"
    assert row.issue_latency == 0


def test_run_dump_state(tmp_path):
    trace = tmp_path / "t.trace"
    run_cli("gen", "stream", "--array-bytes", "8192", "--out", str(trace))
    cfg = small_config(tmp_path)
    blob = tmp_path / "state.bin"
    rc = run_cli("run", "--trace", str(trace), "--config", str(cfg),
                 "--predictor", "popet", "--hermes", "on",
                 "--out", str(tmp_path / "m.csv"), "--dump-state", str(blob))
    assert rc == 0
    assert blob.read_bytes()[:4] == b"OFPW"


def test_report_summary_and_figures(tmp_path):
    trace = tmp_path / "t.trace"
    run_cli("gen", "mixed", "--records", "3000", "--seed", "1",
            "--component", "stream=0.5", "--component", "chase=0.5",
            "--array-bytes", "16384", "--working-set-bytes", str(1 << 17),
            "--node-count", "512", "--out", str(trace))
    cfg = small_config(tmp_path)
    out = tmp_path / "m.csv"
    for predictor, hermes in (("never", "off"), ("popet", "on"), ("ttp", "on")):
        run_cli("run", "--trace", str(trace), "--config", str(cfg),
                "--predictor", predictor, "--hermes", hermes, "--out", str(out))
    outdir = tmp_path / "report"
    rc = run_cli("report", str(out), "--out-dir", str(outdir))
    assert rc == 0
    assert (outdir / "summary.csv").exists()
    for fig in ("accuracy_coverage.png", "speedup.png", "memory_overhead.png"):
        assert (outdir / fig).stat().st_size > 0


def test_select_features_cli(tmp_path):
    trace = tmp_path / "t.trace"
    run_cli("gen", "stream", "--array-bytes", str(24 * 1024), "--out", str(trace))
    cfg = small_config(tmp_path)
    out_csv = tmp_path / "sel.csv"
    out_cfg = tmp_path / "win.json"
    rc = run_cli("select-features", "--trace", str(trace), "--config", str(cfg),
                 "--beam-width", "1", "--out-csv", str(out_csv),
                 "--out-config", str(out_cfg))
    assert rc == 0
    assert out_csv.exists()
    win = load_config(out_cfg)
    assert len(win.popet.features) >= 1


def test_tune_cli(tmp_path):
    traces = []
    for seed in (1, 2):
        t = tmp_path / f"t{seed}.trace"
        run_cli("gen", "chase", "--working-set-bytes", str(1 << 16),
                "--node-count", "128", "--seed", str(seed), "--passes", "2",
                "--out", str(t))
        traces.append(str(t))
    cfgpath = tmp_path / "cfg.json"
    save_config(SimConfig(), cfgpath)
    # shrink the hierarchy for speed
    cfg = json.loads(cfgpath.read_text())
    cfg["hierarchy"]["l1"] = {"capacity_bytes": 1024, "ways": 2, "latency": 5, "mshrs": 16}
    cfg["hierarchy"]["l2"] = {"capacity_bytes": 2048, "ways": 4, "latency": 15, "mshrs": 48}
    cfg["hierarchy"]["llc"] = {"capacity_bytes": 4096, "ways": 4, "latency": 55, "mshrs": 64}
    cfgpath.write_text(json.dumps(cfg))
    out_csv = tmp_path / "tune.csv"
    out_cfg = tmp_path / "tuned.json"
    rc = run_cli("tune", "--param", "tau_act", "--trace", traces[0],
                 "--trace", traces[1], "--config", str(cfgpath),
                 "--out-csv", str(out_csv), "--out-config", str(out_cfg))
    assert rc == 0
    tuned = load_config(out_cfg)
    assert -80 <= tuned.popet.tau_act <= 75
    assert (tuned.popet.tau_act + 80) % 5 == 0


def test_run_missing_trace_errors(tmp_path):
    rc = run_cli("run", "--trace", str(tmp_path / "nope.trace"),
                 "--out", str(tmp_path / "m.csv"))
    assert rc == 2


def test_config_roundtrip(tmp_path):
    cfg = SimConfig()
    path = tmp_path / "c.json"
    save_config(cfg, path)
    assert load_config(path) == cfg
    assert config_to_dict(cfg)["hierarchy"]["llc"]["latency"] == 55
