import json
from pathlib import Path

import pytest

from mixot.cli import EXIT_ASSERT, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main

SNAPSHOTS = Path(__file__).parent / "snapshots"

TWO_GAUSSIANS = {
    "kernel": {"family": "gaussian-location", "cov": 1.0},
    "G": {"atoms": [[-1.0], [1.0]], "weights": [0.5, 0.5]},
    "H": {"atoms": [[-0.8], [1.3]], "weights": [0.4, 0.6]},
}

SMALL_BENCH = {
    "scenario": "cli-small",
    "kernel": {"family": "gaussian-location"},
    "truth": {"atoms": [[-1.0], [1.0]], "weights": [0.5, 0.5]},
    "estimator": {"estimator": "gmm", "k": 2, "n_starts": 2},
    "metric": {"kind": "W", "r": 1},
    "ladder": [100, 200, 400, 800],
    "replicates": 3,
    "smoke": True,
}


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def parse_kv(text):
    out = {}
    for line in text.splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k] = v
    return out


@pytest.mark.parametrize("cmd", ["", "distance", "estimate", "probe", "rate-bench", "catalog"])
def test_help_snapshot(cmd, capsys, monkeypatch):
    monkeypatch.setenv("COLUMNS", "80")
    argv = ([cmd] if cmd else []) + ["--help"]
    assert main(argv) == EXIT_OK
    name = f"help-{cmd}.txt" if cmd else "help.txt"
    assert capsys.readouterr().out == (SNAPSHOTS / name).read_text()


def test_help_lists_everything(capsys, monkeypatch):
    monkeypatch.setenv("COLUMNS", "80")
    main(["--help"])
    out = capsys.readouterr().out
    for word in ("distance", "estimate", "probe", "rate-bench", "catalog", "--config", "--output",
                 "--seed", "--scale", "--threads", "--assert", "--scenario", "--probe",
                 "MIXOT_THREADS"):
        assert word in out


def test_distance(tmp_path, capsys):
    cfg = write(tmp_path, "two.json", TWO_GAUSSIANS)
    out_json = tmp_path / "d.json"
    assert main(["distance", "--config", cfg, "--seed", "4", "--output", str(out_json)]) == EXIT_OK
    kv = parse_kv(capsys.readouterr().out)
    assert kv["seed"] == "4"
    assert float(kv["W1"]) == pytest.approx(0.46)
    for key in ("W2", "KS", "MMD"):
        assert float(kv[key]) > 0
    assert json.loads(out_json.read_text())["seed"] == 4


def test_estimate(tmp_path, capsys):
    cfg = write(tmp_path, "est.json", {
        "kernel": {"family": "gaussian-location"},
        "estimator": {"estimator": "em", "k": 2, "em_restarts": 2},
        "truth": {"atoms": [[-2.0], [2.0]], "weights": [0.5, 0.5]},
        "n": 400,
    })
    assert main(["estimate", "--config", cfg, "--seed", "3"]) == EXIT_OK
    kv = parse_kv(capsys.readouterr().out)
    assert kv["seed"] == "3"
    est = json.loads(kv["estimate"])
    assert sorted(round(a[0]) for a in est["atoms"]) == [-2, 2]


def test_estimate_from_data_file(tmp_path, capsys):
    data = tmp_path / "x.txt"
    data.write_text("\n".join(str(v) for v in [0.1, -0.2, 0.3, 0.05]))
    cfg = write(tmp_path, "est.json", {"kernel": "gaussian-location",
                                       "estimator": {"estimator": "em", "k": 1, "em_restarts": 1},
                                       "data": str(data)})
    assert main(["estimate", "--config", cfg]) == EXIT_OK
    kv = parse_kv(capsys.readouterr().out)
    assert json.loads(kv["estimate"])["atoms"][0][0] == pytest.approx(0.0625)


def test_probe_heat(capsys):
    assert main(["probe", "--probe", "heat-pde"]) == EXIT_OK
    kv = parse_kv(capsys.readouterr().out)
    assert float(kv["residual"]) < 1e-8
    assert kv["seed"] == "0"


def test_probe_unknown(capsys):
    assert main(["probe", "--probe", "nope"]) == EXIT_CONFIG


def test_rate_bench_deterministic(tmp_path, capsys):
    cfg = write(tmp_path, "bench.json", SMALL_BENCH)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["rate-bench", "--config", cfg, "--seed", "7", "--output", str(a)]) == EXIT_OK
    assert main(["rate-bench", "--config", cfg, "--seed", "7", "--output", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    out = capsys.readouterr().out
    assert "seed=7" in out
    summary = json.loads((tmp_path / "a.summary.json").read_text())
    assert summary["seed"] == 7 and summary["rungs"] == 4


def test_rate_bench_assert(tmp_path):
    cfg = write(tmp_path, "bench.json", dict(SMALL_BENCH, expected_slope={"W1": [5.0, 6.0]}))
    assert main(["rate-bench", "--config", cfg, "--assert"]) == EXIT_ASSERT
    assert main(["rate-bench", "--config", cfg]) == EXIT_OK


def test_rate_bench_needs_one_source(tmp_path):
    assert main(["rate-bench"]) == EXIT_CONFIG
    cfg = write(tmp_path, "bench.json", SMALL_BENCH)
    assert main(["rate-bench", "--config", cfg, "--scenario", "ks-exactfit-gauss"]) == EXIT_CONFIG


def test_catalog(capsys):
    assert main(["catalog"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "ks-exactfit-gauss" in out and "seed=0" in out


def test_usage_errors(capsys):
    assert main(["distance", "--bogus"]) == EXIT_CONFIG
    assert "usage:" in capsys.readouterr().err
    assert main(["frobnicate"]) == EXIT_CONFIG
    assert main([]) == EXIT_CONFIG
    assert main(["distance", "--seed", "-1"]) == EXIT_CONFIG


def test_config_errors(tmp_path):
    assert main(["distance", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["distance", "--config", str(bad)]) == EXIT_CONFIG
    cfg = write(tmp_path, "partial.json", {"kernel": "gaussian-location"})
    assert main(["distance", "--config", cfg]) == EXIT_CONFIG


def test_runtime_error(tmp_path):
    cfg = write(tmp_path, "g.json", {"G0": {"atoms": [[2.0, 1.5], [3.0, 1.8]], "weights": [0.5, 0.5]}})
    assert main(["probe", "--probe", "gamma-path", "--config", cfg]) == EXIT_RUNTIME
