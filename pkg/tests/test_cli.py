import csv

import pytest

from elrp.cli import EXIT_OK, EXIT_USAGE, main
from elrp.instance import bundled_path


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestSolve:
    def test_solve_writes_outputs(self, tmp_path):
        out = tmp_path / "run"
        rc = main(["solve", "--instance", str(bundled_path("toy")),
                   "--fee", "0.4", "--out", str(out)])
        assert rc == EXIT_OK
        for name in ("solution.csv", "summary.csv", "iterations.csv", "solution.png"):
            assert (out / name).exists(), name
        summary = _rows(out / "summary.csv")[0]
        assert summary["stations_built"] == "F1"
        assert float(summary["UB"]) == pytest.approx(-164.95425, abs=1e-4)
        assert summary["fleet_type1"] == "1"

    def test_solution_rows_track_visits(self, tmp_path):
        out = tmp_path / "run"
        main(["solve", "--instance", str(bundled_path("toy")),
              "--fee", "0.4", "--out", str(out)])
        rows = _rows(out / "solution.csv")
        assert rows[0]["kind"] == "depot"
        assert rows[-1]["kind"] == "depot_sink"
        dummies = [r for r in rows if r["kind"] == "station_dummy"]
        assert dummies and dummies[0]["node"] == "F1"
        assert dummies[0]["port"] == "1"

    def test_missing_instance_exit_2(self, tmp_path, capsys):
        rc = main(["solve", "--instance", str(tmp_path / "missing.json"),
                   "--out", str(tmp_path / "o")])
        assert rc == EXIT_USAGE

    def test_invalid_instance_exit_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{\"schema\": 1}")
        rc = main(["solve", "--instance", str(bad), "--out", str(tmp_path / "o")])
        assert rc == EXIT_USAGE


class TestSweep:
    def test_small_grid(self, tmp_path):
        out = tmp_path / "sweep"
        rc = main(["sweep", "--instance", str(bundled_path("toy")),
                   "--fees", "0.3,0.45", "--out", str(out)])
        assert rc == EXIT_OK
        rows = _rows(out / "sweep.csv")
        assert [r["fee"] for r in rows] == ["0.300000", "0.450000"]
        assert rows[0]["stations_built"] == "none"
        assert rows[1]["stations_built"] == "F1"
        # entering the market at the higher fee can lower the operator's
        # cost; within one build regime the cost is non-decreasing (checked
        # in the acceptance sweep)
        assert (out / "sweep.png").exists()

    def test_fee_range_parsing(self, tmp_path):
        out = tmp_path / "sweep"
        rc = main(["sweep", "--instance", str(bundled_path("toy")),
                   "--fees", "0.40:0.45:0.05", "--out", str(out)])
        assert rc == EXIT_OK
        assert [r["fee"] for r in _rows(out / "sweep.csv")] == ["0.400000", "0.450000"]

    def test_single_entity_columns_present(self, tmp_path):
        out = tmp_path / "sweep"
        main(["sweep", "--instance", str(bundled_path("toy")),
              "--fees", "0.4", "--out", str(out)])
        row = _rows(out / "sweep.csv")[0]
        assert row["single_fo_cost"] != ""
        assert float(row["single_total"]) == pytest.approx(
            float(row["single_fo_cost"]) + float(row["single_csp_cost"]), abs=1e-5)


class TestRates:
    def test_rate_rows(self, tmp_path):
        out = tmp_path / "rates"
        rc = main(["rates", "--instance", str(bundled_path("toy")),
                   "--rates", "10,10", "--station", "F1", "--fee", "0.4",
                   "--out", str(out)])
        assert rc == EXIT_OK
        rows = _rows(out / "rates.csv")
        assert len(rows) == 2
        # identical rates give identical rows
        assert rows[0] == {**rows[1], "rate": rows[0]["rate"]}
        assert (out / "rates.png").exists()

    def test_unknown_station_exit_2(self, tmp_path):
        rc = main(["rates", "--instance", str(bundled_path("toy")),
                   "--rates", "10", "--station", "ZZ", "--out", str(tmp_path / "o")])
        assert rc == EXIT_USAGE


class TestOracleCheck:
    def test_toy_passes(self, tmp_path, capsys):
        rc = main(["oracle-check", "--instance", str(bundled_path("toy")),
                   "--fee", "0.4", "--out", str(tmp_path / "o")])
        assert rc == EXIT_OK
        assert "PASS" in capsys.readouterr().out


class TestDumpGraph:
    def test_dump(self, capsys, tmp_path):
        rc = main(["dump-graph", "--instance", str(bundled_path("toy")),
                   "--out", str(tmp_path / "o")])
        assert rc == EXIT_OK
        out = capsys.readouterr().out
        assert "node D0 kind=depot" in out
        assert "kind=internal" in out
