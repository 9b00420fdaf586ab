import json

import numpy as np
import pytest

from moirekit import io
from moirekit.cli import run_command
from moirekit.errors import SchemaViolation, ValidationError


def test_pgm_roundtrip(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, (7, 11)).astype(np.uint8)
    io.write_pgm(tmp_path / "a.pgm", img)
    assert (tmp_path / "a.pgm").read_bytes().startswith(b"P5\n11 7\n255\n")
    assert np.array_equal(io.read_pgm(tmp_path / "a.pgm"), img)


def test_pgm_header_comments(tmp_path):
    body = bytes(range(6))
    (tmp_path / "c.pgm").write_bytes(b"P5\n# made by hand\n3 2\n255\n" + body)
    assert io.read_pgm(tmp_path / "c.pgm").tolist() == [[0, 1, 2], [3, 4, 5]]
    (tmp_path / "d.pgm").write_bytes(b"P2\n3 2\n255\n0 1 2 3 4 5")
    with pytest.raises(ValidationError):
        io.read_pgm(tmp_path / "d.pgm")


def test_canonical_json():
    s = io.canonical_json({"b": np.float64(0.1), "a": [np.int64(3), float("nan")], "c": np.arange(2)})
    assert s == '{\n  "a": [\n    3,\n    null\n  ],\n  "b": 0.1,\n  "c": [\n    0,\n    1\n  ]\n}\n'
    x = 0.123456789012345678
    assert json.loads(io.canonical_json([x]))[0] == x


def test_manifest_roundtrip(tmp_path, short_authentic):
    _, frames, m = short_authentic
    io.write_sequence(tmp_path / "seq", frames, m)
    path = tmp_path / "seq" / "manifest.json"
    first = path.read_bytes()
    again = io.manifest_roundtrip(path)
    assert io.canonical_json(again).encode() == first
    f2, m2 = io.read_sequence(tmp_path / "seq")
    assert np.array_equal(f2, frames) and m2 == json.loads(io.canonical_json(m))


def test_manifest_schema_violations(tmp_path, short_authentic):
    _, _, m = short_authentic
    bad = json.loads(io.canonical_json(m))
    bad["frames"][3]["corners_px"] = bad["frames"][3]["corners_px"][:3]
    io.write_json(tmp_path / "bad.json", bad)
    with pytest.raises(SchemaViolation) as ei:
        io.manifest_roundtrip(tmp_path / "bad.json")
    assert ei.value.path == "/frames/3/corners_px"
    bad = json.loads(io.canonical_json(m))
    bad["version"] = "moirekit.sequence/99"
    io.write_json(tmp_path / "v.json", bad)
    with pytest.raises(SchemaViolation) as ei:
        io.manifest_roundtrip(tmp_path / "v.json")
    assert ei.value.path == "/version"


def test_write_sequence_leaves_nothing_on_failure(tmp_path, short_authentic):
    _, frames, m = short_authentic
    with pytest.raises(ValidationError):
        io.write_sequence(tmp_path / "seq", frames[:-1], m)
    assert list(tmp_path.iterdir()) == []


def test_config_rejects_unknown_fields():
    with pytest.raises(SchemaViolation) as ei:
        io.validate({"scenario": {"distance_z": 1000, "colour": "red"}}, io.CONFIG_SCHEMA)
    assert ei.value.path == "/scenario"
    io.validate({"scenario": {"distance_z": 1000}, "seeds": [1, 2]}, io.CONFIG_SCHEMA)


# ----------------------------------------------------------------------- CLI

@pytest.fixture(scope="module")
def cli_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = {"scenario": {"n_frames": 40, "distance_z": 1200.0, "rotation_jitter_deg": 2.0}}
    (d / "cfg.json").write_text(json.dumps(cfg))
    assert run_command(["simulate", "--config", str(d / "cfg.json"), "--out", str(d / "seq"), "--seed", "3"]) == 0
    return d


def test_cli_simulate_verify(cli_dir):
    out = cli_dir / "report.json"
    assert run_command(["verify", "--in", str(cli_dir / "seq"), "--mode", "tracked", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["best_correlation"] >= 0.98 and rep["decision"] is None and rep["tau"] is None
    io.validate(rep, io.REPORT_SCHEMA)


def test_cli_attack_evaluate(cli_dir):
    d = cli_dir
    assert run_command(["attack", "--in", str(d / "seq"), "--kind", "frozen", "--out", str(d / "fz")]) == 0
    assert run_command(["verify", "--in", str(d / "seq"), "--tau", "0.9", "--out", str(d / "r" / "seq.json")]) == 0
    assert run_command(["verify", "--in", str(d / "fz"), "--tau", "0.9", "--out", str(d / "r" / "fz.json")]) == 0
    assert json.loads((d / "r" / "fz.json").read_text())["decision"] == "fake"
    (d / "labels.csv").write_text("source_id,label\nseq,1\nfz,0\n")
    assert run_command(["evaluate", "--reports", str(d / "r" / "*.json"), "--labels", str(d / "labels.csv"),
                        "--out", str(d / "metrics.json")]) == 0
    m = json.loads((d / "metrics.json").read_text())
    assert m["auc"] == 1.0 and m["n_included"] == 2


def test_cli_inputs_unchanged(cli_dir):
    before = {p.name: p.read_bytes() for p in (cli_dir / "seq").iterdir()}
    run_command(["verify", "--in", str(cli_dir / "seq"), "--out", str(cli_dir / "again.json")])
    run_command(["attack", "--in", str(cli_dir / "seq"), "--kind", "gain", "--param", "0.5",
                 "--out", str(cli_dir / "gain")])
    after = {p.name: p.read_bytes() for p in (cli_dir / "seq").iterdir()}
    assert before == after


def test_cli_repeatable(cli_dir, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run_command(["verify", "--in", str(cli_dir / "seq"), "--out", str(a)])
    run_command(["verify", "--in", str(cli_dir / "seq"), "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_cli_missing_manifest(tmp_path):
    (tmp_path / "empty").mkdir()
    out = tmp_path / "rep.json"
    assert run_command(["verify", "--in", str(tmp_path / "empty"), "--out", str(out)]) == 2
    assert not out.exists()


def test_cli_bad_flags_and_config(tmp_path, capsys):
    assert run_command(["attack", "--in", "x", "--kind", "bogus", "--out", "y"]) == 2
    (tmp_path / "cfg.json").write_text(json.dumps({"scenario": {"n_frames": 1}}))
    out = tmp_path / "seq"
    assert run_command(["simulate", "--config", str(tmp_path / "cfg.json"), "--out", str(out)]) == 2
    assert "/scenario/n_frames" in capsys.readouterr().err
    assert not out.exists()


def test_cli_pipeline_error_exit_code(tmp_path):
    cfg = {"scenario": {"n_frames": 3, "start_offset": [3000.0, 0.0]}}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    out = tmp_path / "seq"
    assert run_command(["simulate", "--config", str(tmp_path / "cfg.json"), "--out", str(out)]) == 3
    assert not out.exists()
