import hashlib
import math
import subprocess
import sys

import numpy as np
import pytest

from albama import outputs
from albama.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main, parse_args
from albama.evaluation import EvaluationReport
from albama.simulation import ScenarioSpec, generate, signal

SMALL = ["--trees", "8", "--min-leaf", "5", "--warmup", "10"]


def run(*argv):
    return main([str(a) for a in argv])


def digest(paths):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in paths}


def test_simulate(tmp_path):
    assert run("simulate", "--scenario", "combined", "--T", 300, "--sigma", 0.5, "--seed", 42,
               "--output-dir", tmp_path) == EXIT_OK
    dates, sig, noisy = outputs.read_simulation(tmp_path / "combined.csv")
    assert len(dates) == 300 and dates[0] == "2000-01"
    spec = ScenarioSpec("combined")
    np.testing.assert_array_equal(sig, signal(spec))
    np.testing.assert_array_equal(noisy, generate(spec).values)


def test_simulate_sigma_zero(tmp_path):
    assert run("simulate", "--scenario", "abrupt", "--sigma", 0, "--output-dir", tmp_path) == EXIT_OK
    _, sig, noisy = outputs.read_simulation(tmp_path / "abrupt.csv")
    np.testing.assert_array_equal(sig, noisy)


def test_simulate_odd_T_is_data_error(tmp_path, capsys):
    assert run("simulate", "--scenario", "abrupt", "--T", 301, "--output-dir", tmp_path) == EXIT_DATA
    assert "even" in capsys.readouterr().err


def test_usage_errors(tmp_path, capsys):
    assert run("simulate", "--nonsense") == EXIT_USAGE
    assert run() == EXIT_USAGE
    assert run("fit", "--output-dir", tmp_path) == EXIT_USAGE  # no input
    assert run("fit", "--scenario", "abrupt", "--input", "x.csv", "--output-dir", tmp_path) == EXIT_USAGE
    assert run("evaluate", "--scenario", "abrupt", "--methods", "MA(9)", "--output-dir", tmp_path) == EXIT_USAGE
    assert run("simulate", "--help") == EXIT_OK


def test_fit_four_files_round_trip(tmp_path):
    assert run("fit", "--scenario", "combined", *SMALL, "--output-dir", tmp_path) == EXIT_OK
    fitted = outputs.read_fitted(tmp_path / "fitted.csv")
    modes = {r.mode for r in fitted}
    assert modes == {"one-sided", "two-sided"}
    assert sum(r.mode == "one-sided" for r in fitted) == 300 - 9
    dense = outputs.read_weights_dense(tmp_path / "weights_dense.csv")
    assert set(dense) == modes
    rows, cols, W2 = dense["two-sided"]
    assert W2.shape == (300, 300) and len(cols) == 300
    np.testing.assert_allclose(W2.sum(axis=1), 1.0, atol=1e-10)
    y = generate(ScenarioSpec("combined")).values
    two = np.array([r.value for r in fitted if r.mode == "two-sided"])
    np.testing.assert_allclose(W2 @ y, two, atol=1e-8)
    rows1, _, W1 = dense["one-sided"]
    assert rows1[0] == "2000-10"
    assert np.all(np.triu(W1[:, 9:], k=1) == 0)
    long = outputs.read_weights_long(tmp_path / "weights_long.csv")
    assert all(r.lag >= 0 for r in long if r.mode == "one-sided")
    total = {}
    for r in long:
        total[(r.mode, r.date)] = total.get((r.mode, r.date), 0.0) + r.weight
    assert all(abs(v - 1) < 1e-10 for v in total.values())
    buckets = outputs.read_buckets(tmp_path / "buckets.csv")
    assert {b.bucket for b in buckets if b.mode == "one-sided"} == {"y_t", "y_t-1:t-2", "y_t-3:t-5", "y_t-6:end"}


def test_fit_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run("fit", "--scenario", "abrupt", *SMALL, "--output-dir", d) == EXIT_OK
    files = ["fitted.csv", "weights_dense.csv", "weights_long.csv", "buckets.csv"]
    assert digest([a / f for f in files]) == digest([b / f for f in files])


def test_fit_short_series_errors(tmp_path):
    src = tmp_path / "short.csv"
    src.write_text("date,value\n" + "".join(f"2000-{m:02d},{m}\n" for m in range(1, 13)) +
                   "".join(f"2001-{m:02d},{m}\n" for m in range(1, 9)))
    assert run("fit", "--input", src, "--transform", "none", "--mode", "one-sided", "--warmup", 24,
               "--output-dir", tmp_path) == EXIT_DATA


def test_fit_csv_input_with_transform(tmp_path):
    src = tmp_path / "cpi.csv"
    level = 100 * np.exp(np.cumsum(np.random.default_rng(0).normal(0.002, 0.003, size=61)))
    src.write_text("date,value\n" + "".join(f"{2000 + i // 12}-{i % 12 + 1:02d},{float(v)!r}\n" for i, v in enumerate(level)))
    assert run("fit", "--input", src, "--mode", "two-sided", "--trees", 5, "--min-leaf", 5,
               "--output-dir", tmp_path / "o") == EXIT_OK
    fitted = outputs.read_fitted(tmp_path / "o" / "fitted.csv")
    assert len(fitted) == 60 and fitted[0].date == "2000-02"


def test_missing_input_file(tmp_path):
    assert run("fit", "--input", tmp_path / "nope.csv", "--output-dir", tmp_path) == EXIT_DATA


def test_benchmark(tmp_path):
    args = ["benchmark", "--scenario", "gradual", "--T", 120, "--l1-grid", "1,10,100", "--output-dir", tmp_path]
    assert run(*args) == EXIT_OK
    recs = outputs.read_benchmark(tmp_path / "benchmark.csv")
    methods = list(dict.fromkeys(r.method for r in recs))
    assert methods == ["MA(3) 1s", "MA(3) 2s", "MA(6) 1s", "MA(6) 2s", "MA(12) 1s", "MA(12) 2s", "EMA(12)",
                       "SG(11,3) 1s", "SG(11,3) 2s", "L1(0.1l)", "L1(1l)", "L1(4l)",
                       "bHP(0.1)", "bHP(1)", "bHP(100)"]
    assert all(sum(r.method == m for r in recs) == 120 for m in methods)
    ma12 = [r for r in recs if r.method == "MA(12) 1s"]
    assert [r.defined for r in ma12[:12]] == [False] * 11 + [True]
    assert all(math.isnan(r.value) for r in ma12[:11])
    assert {r.status for r in recs if not r.method.startswith("L1")} == {"ok"}
    assert {r.status for r in recs if r.method.startswith("L1")} <= {"ok", "not_converged"}
    first = digest([tmp_path / "benchmark.csv", tmp_path / "benchmark_info.json"])
    assert run(*args) == EXIT_OK
    assert digest([tmp_path / "benchmark.csv", tmp_path / "benchmark_info.json"]) == first


def test_benchmark_method_failure_is_per_row(tmp_path):
    # MA(50) cannot fit a 40-point series; the run carries on
    assert run("benchmark", "--scenario", "gradual", "--T", 40, "--ma", "3,50", "--l1-lambda", 5,
               "--output-dir", tmp_path) == EXIT_OK
    recs = outputs.read_benchmark(tmp_path / "benchmark.csv")
    bad = [r for r in recs if r.method == "MA(50) 1s"]
    assert bad and all(r.status.startswith("error") and not r.defined for r in bad)
    assert all(r.status == "ok" for r in recs if r.method == "MA(3) 1s")


def test_evaluate_seven_rows_and_determinism(tmp_path):
    args = ["evaluate", "--scenario", "combined", *SMALL, "--windows", "full"]
    assert run(*args, "--output-dir", tmp_path / "a") == EXIT_OK
    assert run(*args, "--output-dir", tmp_path / "b") == EXIT_OK
    rep = EvaluationReport.read_csv(tmp_path / "a" / "report.csv")
    assert len(rep.rows) == 7 and all(not r.error for r in rep.rows)
    files = ["report.csv", "summary.json"]
    assert digest([tmp_path / "a" / f for f in files]) == digest([tmp_path / "b" / f for f in files])


def test_evaluate_constant_input(tmp_path):
    src = tmp_path / "flat.csv"
    src.write_text("date,value\n" + "".join(f"{2000 + i // 12}-{i % 12 + 1:02d},5\n" for i in range(60)))
    assert run("evaluate", "--input", src, "--transform", "none", *SMALL, "--output-dir", tmp_path) == EXIT_OK
    rep = EvaluationReport.read_csv(tmp_path / "report.csv")
    assert len(rep.rows) == 7
    assert all(r.error.startswith("ZeroVarianceError") for r in rep.rows)


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# forest\ntrees = 8\nmin-leaf = 5\nwarmup=10\nscenario = gradual\nT = 60\n")
    args = parse_args(["evaluate", "--config", str(cfg), "--trees", "3"])
    assert args.trees == 3 and args.min_leaf == 5 and args.scenario == ["gradual"] and args.T == 60
    assert run("simulate", "--config", cfg, "--output-dir", tmp_path) == EXIT_USAGE  # trees is not a simulate key
    cfg.write_text("scenario = abrupt\nT = 20\n")
    assert run("simulate", "--config", cfg, "--output-dir", tmp_path) == EXIT_OK
    assert len(outputs.read_simulation(tmp_path / "abrupt.csv")[0]) == 20
    cfg.write_text("just words\n")
    assert run("simulate", "--config", cfg) == EXIT_USAGE


def test_output_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv("ALBAMA_OUTPUT_DIR", str(tmp_path / "env"))
    assert run("simulate", "--T", 10, "--scenario", "gradual") == EXIT_OK
    assert (tmp_path / "env" / "gradual.csv").exists()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "albama", "simulate", "--T", "12", "--output-dir", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert (tmp_path / "combined.csv").exists()
