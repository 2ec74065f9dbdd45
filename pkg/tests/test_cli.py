import csv
import xml.etree.ElementTree as ET

import pytest

from byzregret import cli
from byzregret.results import ENSEMBLE_CSV, HEADER, METADATA, TRIALS_CSV, CsvFormatError, read_csv


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def example1_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("ex1")
    assert run("run", "--preset", "example1", "--out", out) == 0
    return out


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_example1_preset_run(example1_run, capsys):
    rows = _rows(example1_run / ENSEMBLE_CSV)
    assert tuple(rows[0]) == HEADER
    final_mean = [r for r in rows if r[0] == "mean"][-1]
    assert final_mean[1] == "1000" and float(final_mean[3]) == 500.0
    trials = _rows(example1_run / TRIALS_CSV)
    assert len(trials) == 1 + 1000
    assert all(len(r) == len(HEADER) for r in trials)


def test_csv_uses_full_precision(tmp_path):
    assert run("run", "--preset", "example3", "--set", "trials=1", "--set", "horizon=50", "--out", tmp_path) == 0
    last = _rows(tmp_path / TRIALS_CSV)[-1]
    assert float(last[4]) == float(f"{float(last[4]):.17g}")
    assert len(last[4].replace("-", "").replace(".", "").lstrip("0")) >= 15


def test_stochastic_column_blank_when_undefined(tmp_path):
    args = ["run", "--preset", "noniid-ogd-constant-none-mean", "--set", "horizon=20", "--set", "trials=1"]
    assert run(*args, "--out", tmp_path) == 0
    assert all(r[4] == "" for r in _rows(tmp_path / TRIALS_CSV)[1:])
    assert read_csv(tmp_path / TRIALS_CSV)[0].stochastic is None


def test_repeated_runs_are_byte_identical(tmp_path):
    args = ["run", "--preset", "iid-momentum-constant-gaussian-geomed", "--set", "horizon=200", "--set", "trials=2"]
    assert run(*args, "--out", tmp_path / "a", "--workers", 1) == 0
    assert run(*args, "--out", tmp_path / "b", "--workers", 2) == 0
    for name in (TRIALS_CSV, ENSEMBLE_CSV, METADATA):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_metadata_replays_bit_identically(example1_run, tmp_path):
    meta = (example1_run / METADATA).read_text()
    assert "# audit.sigma2" in meta and "cohort.byzantine_ids = 3" in meta
    assert run("run", "--config", example1_run / METADATA, "--out", tmp_path) == 0
    for name in (TRIALS_CSV, ENSEMBLE_CSV, METADATA):
        assert (tmp_path / name).read_bytes() == (example1_run / name).read_bytes()


def test_config_errors_exit_2(tmp_path, capsys):
    assert run("run", "--preset", "example1", "--set", "cohort.n=30", "--set", "cohort.byzantine_count=16",
               "--set", "cohort.byzantine_ids=", "--out", tmp_path) == 2
    assert "cohort.byzantine_count" in capsys.readouterr().err
    assert run("run", "--preset", "no-such-preset", "--out", tmp_path) == 2
    assert run("run", "--config", tmp_path / "missing.cfg", "--out", tmp_path) == 2
    assert run("run", "--preset", "example1", "--set", "horizon", "--out", tmp_path) == 2


def test_certify_outcomes(tmp_path, capsys):
    assert run("certify", "--rule", "geomed", "--n", 30, "--b", 5, "--dim", 10, "--cases", 200, "--out", tmp_path) == 0
    rows = _rows(tmp_path / cli.CERTIFY_CSV)
    assert rows[0] == ["case", "attack", "magnitude", "lhs", "zeta2", "bound", "pass"]
    assert len(rows) == 201 and all(r[-1] == "1" for r in rows[1:])
    assert run("certify", "--rule", "mean", "--n", 30, "--b", 5, "--dim", 10, "--cases", 100, "--out", tmp_path) == 0
    assert "non-robust" in capsys.readouterr().out
    assert run("certify", "--rule", "faba", "--n", 9, "--b", 3, "--dim", 1, "--cases", 10, "--out", tmp_path) == 2


def test_certify_failure_exit_code(tmp_path, monkeypatch):
    from byzregret import aggregators

    monkeypatch.setattr(aggregators, "CERTIFY_RTOL", -1.0)
    assert run("certify", "--rule", "coomed", "--n", 7, "--b", 1, "--dim", 2, "--cases", 20, "--out", tmp_path) == 3


def test_replicate_reports(tmp_path, capsys):
    assert run("replicate", "--example", 1, "--rules", "geomed,coomed,trimean", "--out", tmp_path) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 3
    rows = _rows(tmp_path / "replication.csv")
    assert [r[1] for r in rows[1:]] == ["geomed", "coomed", "trimean"]
    assert all(float(r[7]) == 0.5 for r in rows[1:])


def test_replicate_failure_exit_code(tmp_path, monkeypatch):
    from byzregret import replicate

    monkeypatch.setattr(replicate, "EXACT_RTOL", -1.0)
    assert run("replicate", "--example", 1, "--rules", "geomed", "--out", tmp_path) == 4


def _svg_lines(path):
    root = ET.parse(path).getroot()
    return [el for el in root.iter() if el.tag.endswith("path") and "clip-path" in el.attrib]


def test_plot_two_identical_curves(example1_run, tmp_path, capsys):
    src = example1_run / ENSEMBLE_CSV
    out = tmp_path / "fig.svg"
    assert run("plot", "--in", f"{src},{src}", "--out", out) == 0
    assert out.stat().st_size > 0
    ET.parse(out)
    text = capsys.readouterr().out
    slopes = [float(line.split("slope ")[1].split()[0]) for line in text.splitlines() if "slope" in line]
    assert len(slopes) == 4 and all(abs(s - 0.5) <= 1e-6 for s in slopes)
    again = tmp_path / "again.svg"
    assert run("plot", "--in", f"{src},{src}", "--out", again) == 0
    assert again.read_bytes() == out.read_bytes()
    assert run("plot", "--in", src, "--out", tmp_path / "log.svg", "--logy") == 0


def test_plot_rejects_bad_input(example1_run, tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    out = tmp_path / "fig.svg"
    assert run("plot", "--in", empty, "--out", out) == 2
    assert not out.exists()
    header_only = tmp_path / "header.csv"
    header_only.write_text(",".join(HEADER) + "\n")
    assert run("plot", "--in", header_only, "--out", out) == 2
    ragged = tmp_path / "ragged.csv"
    ragged.write_text(",".join(HEADER) + "\n0,1,2\n")
    assert run("plot", "--in", ragged, "--out", out) == 2
    no_sto = tmp_path / "nosto.csv"
    no_sto.write_text(",".join(HEADER) + "\n0,1,0.5,0.25,\n0,2,1.0,0.5,\n")
    assert run("plot", "--in", no_sto, "--out", out, "--metric", "stochastic") == 2
    assert run("plot", "--in", f"{no_sto},{example1_run / ENSEMBLE_CSV}", "--out", out) == 2
    assert not out.exists()
    with pytest.raises(CsvFormatError):
        read_csv(ragged)


def test_presets_command(tmp_path, capsys):
    assert run("presets") == 0
    names = capsys.readouterr().out.split()
    assert "example1" in names and "iid-momentum-diminishing-dup-faba" in names
    assert run("presets", "--out", tmp_path) == 0
    assert len(list(tmp_path.glob("*.cfg"))) == len(names)
