import csv
import subprocess
import sys

import pytest

from mhrsim.cli import (
    CURVES_HEADER,
    ESTIMATES_HEADER,
    METRICS_HEADER,
    ConfigError,
    format_tables,
    main,
    parse_config_text,
    parse_tables,
    read_metrics,
)
from mhrsim.balance import METHODS

MINIMAL = """\
# one scenario, two replicates
settings = observational
sizes = 400
mhrs = 1.0
censor_dists = uniform
censor_rates = 0.3
replicates = 2
"""


def _write_cfg(tmp_path, body, out="out"):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(body + f"output_dir = {tmp_path / out}\n")
    return cfg


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_config_parser():
    kv = parse_config_text("a = 1  # note\n\n b=x, y\n")
    assert kv == {"a": "1", "b": "x, y"}
    with pytest.raises(ConfigError):
        parse_config_text("no equals sign")


def test_run_minimal(tmp_path):
    cfg = _write_cfg(tmp_path, MINIMAL)
    assert main(["run", str(cfg)]) == 0
    est = _rows(tmp_path / "out" / "estimates.csv")
    met = _rows(tmp_path / "out" / "metrics.csv")
    assert est[0] == ESTIMATES_HEADER and len(est) == 1 + 2 * 6
    assert met[0] == METRICS_HEADER and len(met) == 1 + 6
    assert [r[6] for r in met[1:]] == list(METHODS)


def test_rerun_is_byte_identical(tmp_path):
    cfg = _write_cfg(tmp_path, MINIMAL)
    main(["run", str(cfg)])
    first = [(tmp_path / "out" / f).read_bytes() for f in ("estimates.csv", "metrics.csv")]
    main(["run", str(cfg)])
    second = [(tmp_path / "out" / f).read_bytes() for f in ("estimates.csv", "metrics.csv")]
    assert first == second


def test_replicates_flag_and_thread_env(tmp_path, monkeypatch):
    cfg = _write_cfg(tmp_path, MINIMAL)
    main(["run", str(cfg)])
    serial = (tmp_path / "out" / "estimates.csv").read_bytes()
    monkeypatch.setenv("MHRSIM_THREADS", "2")
    assert main(["run", str(cfg), "--replicates", "3"]) == 0
    est = _rows(tmp_path / "out" / "estimates.csv")
    assert len(est) == 1 + 3 * 6
    # the first two replicates are unchanged by the extra one and by threading
    assert "\n".join(",".join(r) for r in est[:13]) + "\n" == serial.decode()


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.cfg")]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("sizes = lots\n")
    assert main(["run", str(bad)]) == 2
    bad.write_text("colour = blue\n")
    assert main(["run", str(bad)]) == 2
    bad.write_text("sizes =\n")
    assert main(["run", str(bad)]) == 2


def test_unwritable_output_exit_3(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = tmp_path / "run.cfg"
    cfg.write_text(MINIMAL + f"output_dir = {blocker / 'sub'}\n")
    assert main(["run", str(cfg)]) == 3


def test_curve_small(tmp_path):
    cfg = tmp_path / "curve.cfg"
    cfg.write_text(f"n = 2000\nmhr = 1.0\ngrid = 0.5, 1.0\noutput_dir = {tmp_path}\n")
    assert main(["curve", str(cfg)]) == 0
    rows = _rows(tmp_path / "curves.csv")
    assert rows[0] == CURVES_HEADER
    assert {r[0] for r in rows[1:]} == {"marginal_unweighted", "conditional_unweighted", "marginal_psweighted"}


def test_curve_empty_grid(tmp_path):
    cfg = tmp_path / "curve.cfg"
    cfg.write_text(f"grid =\noutput_dir = {tmp_path}\n")
    assert main(["curve", str(cfg)]) == 2


def _fake_metrics(tmp_path):
    path = tmp_path / "metrics.csv"
    rows = []
    for sid, (n, rate) in enumerate([(6000, 0.8), (6000, 0.3), (2000, 0.3)]):
        for m in reversed(METHODS):
            rows.append([sid, "counterfactual", n, 2.0, "uniform", rate, m,
                         0.1487, 0.05, 0.1569, -0.004, 0.95, 0])
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_HEADER)
        w.writerows(rows)
    return path


def test_tables_rounding_and_order(tmp_path, capsys):
    path = _fake_metrics(tmp_path)
    assert main(["tables", str(path), "--filter", "n=6000"]) == 0
    out = capsys.readouterr().out
    assert out.count("== ") == 1
    body = [l.split() for l in out.splitlines()[2:] if l.strip()]
    assert [r[0] for r in body] == list(METHODS) * 2
    assert [r[1] for r in body] == ["0.3"] * 6 + ["0.8"] * 6
    assert body[0][2] == "0.15" and body[0][5] == "-0.00"


def test_tables_round_trip(tmp_path):
    rows = read_metrics(_fake_metrics(tmp_path))
    parsed = parse_tables(format_tables(rows))
    assert len(parsed) == len(rows)
    for p in parsed:
        assert (p["bias"], p["sd"], p["rmse"], p["rel_bias"], p["coverage"]) == (0.15, 0.05, 0.16, -0.0, 0.95)


def test_tables_missing_columns(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("scenario_id,method\n0,IPTW\n")
    assert main(["tables", str(path)]) == 2
    assert main(["tables", str(tmp_path / "nope.csv")]) == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "mhrsim", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "run" in proc.stdout
