import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from cfgof import __version__, cli

DATA = Path(__file__).parent / "data" / "ultrasonic.csv"

TEST_KEYS = {
    "schema_version", "command", "test", "statistic", "p_value", "critical_value", "alpha",
    "reject", "theta_hat", "weights", "diagnostics", "seed", "version",
}


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv)
    assert code == cli.EXIT_OK, err
    return json.loads(out)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow(header)
        w.writerows(rows)
    return path


@pytest.fixture
def linear_normal(tmp_path):
    """y = 1 + 2x + N(0, 1): exactly normal errors for the untransformed model."""
    def make(seed, n=80):
        rng = np.random.default_rng([seed])
        x = rng.uniform(0, 1, n)
        y = 1 + 2 * x + rng.standard_normal(n)
        return write_csv(tmp_path / f"normal{seed}.csv", ["y", "x"], zip(y, x))
    return make


def test_gof_test_json_schema(capsys):
    doc = run_json(capsys, "gof-test", DATA, "--transform", "box-cox", "--B", 20, "--seed", 4)
    assert set(doc) == TEST_KEYS
    assert doc["schema_version"] == cli.SCHEMA_VERSION
    assert doc["test"] == "independence" and doc["version"] == __version__
    assert 0 < doc["p_value"] <= 1 and doc["reject"] in (True, False)
    assert doc["diagnostics"]["n"] == 214 and doc["diagnostics"]["B_used"] == 20
    assert doc["weights"] == {"kind": "product-kernel", "family": "stable", "gamma": 2.0, "c": 1.0}


def test_summary_on_stderr(capsys):
    code, out, err = run(capsys, "gof-test", DATA, "--transform", "none", "--B", 10)
    assert code == 0
    assert "theta_hat=n/a" in err and "p-value=" in err
    assert json.loads(out)["theta_hat"] is None


def test_same_seed_same_output(capsys):
    args = ("gof-test", DATA, "--transform", "none", "--B", 15, "--seed", 8)
    a = run_json(capsys, *args)
    b = run_json(capsys, *args)
    assert a == b


def test_config_file_and_flag_precedence(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\ntransform = none\nB = 12\nseed = 5\nhomoskedastic = true\n")
    doc = run_json(capsys, "gof-test", DATA, "--config", cfg)
    assert doc["diagnostics"]["B_used"] == 12 and doc["seed"] == 5
    assert doc["diagnostics"]["homoskedastic"] is True
    doc = run_json(capsys, "gof-test", DATA, "--config", cfg, "--B", 7)
    assert doc["diagnostics"]["B_used"] == 7


@pytest.mark.parametrize("text", ["colour = red\n", "B = many\n", "transform = tukey\n",
                                  "no equals sign\n"])
def test_bad_config_is_input_error(capsys, tmp_path, text):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    code, _, err = run(capsys, "gof-test", DATA, "--config", cfg)
    assert code == cli.EXIT_INPUT and "config" in err


def test_parse_error_names_row_and_column(capsys, tmp_path):
    path = write_csv(tmp_path / "bad.csv", ["y", "x"], [[1, 2], [3, "oops"], [5, 6]])
    code, _, err = run(capsys, "gof-test", path)
    assert code == cli.EXIT_INPUT
    assert "row 3" in err and "'x'" in err and "oops" in err


@pytest.mark.parametrize("rows, message", [
    ([[1, 2], [3]], "expected 2 fields"),
    ([[1, 2], [3, "inf"]], "not finite"),
])
def test_malformed_rows(capsys, tmp_path, rows, message):
    path = write_csv(tmp_path / "bad.csv", ["y", "x"], rows)
    code, _, err = run(capsys, "gof-test", path)
    assert code == cli.EXIT_INPUT and message in err


def test_missing_file_and_column(capsys, tmp_path):
    assert run(capsys, "gof-test", tmp_path / "nope.csv")[0] == cli.EXIT_INPUT
    code, _, err = run(capsys, "gof-test", DATA, "--covariates", "depth")
    assert code == cli.EXIT_INPUT and "depth" in err
    code, _, _ = run(capsys, "gof-test", DATA, "--response", "response",
                     "--covariates", "response")
    assert code == cli.EXIT_INPUT


def test_no_header_and_delimiter(capsys, tmp_path):
    rng = np.random.default_rng(0)
    x = rng.uniform(size=40)
    path = tmp_path / "plain.txt"
    path.write_text("".join(f"{2 + x_:.6f};{x_:.6f}\n" for x_ in x))
    doc = run_json(capsys, "gof-test", path, "--no-header", "--delimiter", ";",
                   "--response", 0, "--covariates", 1, "--transform", "none", "--B", 5)
    assert doc["diagnostics"]["n"] == 40


def test_numerical_failure_exit_code(capsys, tmp_path):
    # constant response: zero residual spread, the bootstrap cannot run
    path = write_csv(tmp_path / "const.csv", ["y", "x"], [[1.0, i / 20] for i in range(20)])
    code, _, err = run(capsys, "gof-test", path, "--transform", "none", "--B", 5)
    assert code == cli.EXIT_NUMERIC and err


def test_box_cox_needs_positive_responses(capsys, tmp_path):
    path = write_csv(tmp_path / "neg.csv", ["y", "x"], [[-1.0 + i, i / 20] for i in range(20)])
    code, _, _ = run(capsys, "estimate-theta", path, "--transform", "box-cox")
    assert code == cli.EXIT_INPUT


def test_manifest(capsys, tmp_path):
    man = tmp_path / "m.json"
    run_json(capsys, "gof-test", DATA, "--transform", "none", "--B", 5, "--manifest", man)
    doc = json.loads(man.read_text())
    assert doc["command"] == "gof-test" and doc["seed"] == 0 and doc["version"] == __version__
    assert doc["config"]["B"] == 5 and doc["started"] and doc["finished"]
    assert "clip_events" in doc["diagnostics"]


def test_ultrasonic_heteroskedastic_box_cox(capsys):
    doc = run_json(capsys, "gof-test", DATA, "--transform", "box-cox", "--B", 200, "--seed", 2)
    assert abs(doc["theta_hat"] - (-0.436)) <= 0.15
    assert not doc["reject"]


def test_ultrasonic_untransformed_homoskedastic_rejects(capsys):
    doc = run_json(capsys, "gof-test", DATA, "--transform", "none", "--homoskedastic",
                   "--c", 1, "--B", 200, "--seed", 2)
    assert doc["reject"] and doc["p_value"] < 0.05


def test_estimate_theta_curve(capsys, tmp_path):
    curve = tmp_path / "curve.csv"
    doc = run_json(capsys, "estimate-theta", DATA, "--transform", "box-cox", "--curve", curve)
    assert abs(doc["theta_hat"] - (-0.436)) <= 0.15
    with open(curve) as fh:
        rows = [(float(r["theta"]), float(r["loglik"])) for r in csv.DictReader(fh)]
    finite = [r for r in rows if math.isfinite(r[1])]
    best = max(finite, key=lambda r: r[1])
    assert best[0] == pytest.approx(doc["theta_hat"])
    assert best[1] == pytest.approx(doc["loglik"])


def test_estimate_theta_rejects_none(capsys):
    assert run(capsys, "estimate-theta", DATA, "--transform", "none")[0] == cli.EXIT_INPUT


SIM = ("simulate", "--model", "A", "--n", 50, "--M", 100, "--c", 1, 2, "--seed", 3)


def test_simulate_csv_is_byte_identical(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(capsys, *SIM, "--output", a)[0] == 0
    assert run(capsys, *SIM, "--output", b, "--table", tmp_path / "t.txt")[0] == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0] == ",".join(cli.simulation.STUDY_COLUMNS)
    assert len(lines) == 3
    assert (tmp_path / "t.txt").read_text().startswith("model")


def test_simulate_alpha_one(capsys):
    code, out, _ = run(capsys, *SIM, "--alpha", 1.0)
    assert code == 0
    rates = [float(r["rejection_rate"]) for r in csv.DictReader(out.splitlines())]
    assert rates == [100.0, 100.0]


@pytest.mark.parametrize("extra", [("--M", 10), ("--n", 20), ("--model", "C", "--kappa", 0),
                                   ("--test", "normality", "--kernel", "laplace")])
def test_simulate_config_errors(capsys, extra):
    code, _, _ = run(capsys, *SIM, *extra)
    assert code == cli.EXIT_INPUT


def test_simulate_requires_seed(capsys):
    assert run(capsys, "simulate", "--n", 50)[0] == cli.EXIT_INPUT


def test_emit_data_roundtrip(capsys, tmp_path):
    out = tmp_path / "sample.csv"
    assert run(capsys, "simulate", "--emit-data", out, "--n", 60, "--seed", 1)[0] == 0
    first = out.read_bytes()
    run(capsys, "simulate", "--emit-data", out, "--n", 60, "--seed", 1)
    assert out.read_bytes() == first
    sample = cli.read_data(cli.DataFile(out))
    assert sample.n == 60 and sample.p == 1


def test_emitted_null_data_gives_calibrated_p_values(capsys, tmp_path):
    small = 0
    for seed in range(50):
        path = tmp_path / f"null{seed}.csv"
        run(capsys, "simulate", "--emit-data", path, "--n", 100, "--seed", seed)
        doc = run_json(capsys, "gof-test", path, "--B", 100, "--seed", seed,
                       "--grid-points", 31)
        small += doc["p_value"] < 0.05
    assert 1 <= small <= 8


def test_normal_errors_rarely_rejected(capsys, linear_normal):
    rejections = 0
    for seed in range(50):
        doc = run_json(capsys, "normality-test", linear_normal(seed), "--transform", "none",
                       "--B", 100, "--seed", seed)
        assert set(doc) == TEST_KEYS and doc["test"] == "normality"
        rejections += doc["reject"]
    assert rejections <= 5


def test_skewed_heavy_tailed_errors_fail_normality(capsys, tmp_path):
    rejected = 0
    runs = 10
    for seed in range(runs):
        path = tmp_path / f"alt{seed}.csv"
        run(capsys, "simulate", "--emit-data", path, "--model", "A", "--eta", 100,
            "--nu", 2.1, "--n", 200, "--seed", seed)
        doc = run_json(capsys, "normality-test", path, "--B", 50, "--seed", seed,
                       "--grid-points", 21, "--c", 0.1)
        rejected += doc["p_value"] < 0.05
    assert rejected >= 0.4 * runs


def test_mirrored_data_symmetry_p_value_one(capsys, tmp_path):
    x = np.repeat(np.linspace(0.1, 1.0, 15), 2)
    offsets = np.tile([1.0, -1.0], 15) * np.linspace(0.5, 1.5, 30)
    path = write_csv(tmp_path / "mirror.csv", ["y", "x"], zip(3.0 + x + offsets, x))
    doc = run_json(capsys, "symmetry-test", path, "--transform", "none", "--homoskedastic",
                   "--bandwidth", 0.001, "--B", 50)
    assert doc["statistic"] == pytest.approx(0.0, abs=1e-12)
    assert doc["p_value"] == 1.0 and not doc["reject"]


def test_version_and_help(capsys):
    assert cli.main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out
    assert cli.main(["gof-test", "--help"]) == 0
