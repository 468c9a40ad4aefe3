import json

import pytest

from pricebench.cli import main
from tests.test_transactions import HEADER, synthetic_records


def _experiment_file(tmp_path, config_id="A", episodes=1, weeks=6, seed=9):
    path = tmp_path / "experiment.json"
    path.write_text(
        json.dumps(
            {
                "config_id": config_id,
                "n_runs": 1,
                "market": {"episodes": episodes, "weeks_per_episode": weeks, "seed": seed},
            }
        )
    )
    return path


class TestSimulate:
    def test_end_to_end(self, tmp_path, capsys):
        config = _experiment_file(tmp_path)
        out = tmp_path / "runs"
        code = main(["simulate", "--config", str(config), "--out", str(out)])
        assert code == 0
        assert list(out.glob("*/history.csv"))
        assert "wrote 1 run(s)" in capsys.readouterr().out

    def test_overrides(self, tmp_path):
        config = _experiment_file(tmp_path)
        out = tmp_path / "runs"
        code = main(
            ["simulate", "--config", str(config), "--out", str(out),
             "--runs", "2", "--weeks", "4", "--episodes", "1", "--seed", "77"]
        )
        assert code == 0
        assert len(list(out.glob("*/metrics.json"))) == 2

    def test_invalid_config_id_exits_1(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"config_id": "Z"}))
        assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "o")]) == 1

    def test_missing_flag_exits_1(self):
        assert main(["simulate", "--out", "/tmp/x"]) == 1

    def test_jobs_parallel_matches_serial(self, tmp_path):
        config = _experiment_file(tmp_path, weeks=4)
        serial = tmp_path / "serial"
        parallel = tmp_path / "parallel"
        assert main(["simulate", "--config", str(config), "--out", str(serial), "--runs", "2"]) == 0
        assert main(
            ["simulate", "--config", str(config), "--out", str(parallel), "--runs", "2",
             "--jobs", "2"]
        ) == 0
        for run_dir in serial.iterdir():
            twin = parallel / run_dir.name
            assert (run_dir / "history.csv").read_bytes() == (twin / "history.csv").read_bytes()


class TestCalibrate:
    def test_fit_from_csv(self, tmp_path, capsys):
        # one transaction per week, dated to match the synthetic aggregates
        import datetime

        rows = [HEADER]
        start = datetime.datetime(2010, 1, 4)
        for t, rec in enumerate(synthetic_records(weeks=80)):
            date = start + datetime.timedelta(weeks=t)
            rows.append(
                f"i,prodX,DESC,{rec.total_quantity},{date:%Y-%m-%d %H:%M:%S},"
                f"{rec.mean_price},c1,UK"
            )
        csv_path = tmp_path / "tx.csv"
        csv_path.write_text("\n".join(rows) + "\n")
        out = tmp_path / "params.json"
        assert main(["calibrate", "--csv", str(csv_path), "--out", str(out)]) == 0
        params = json.loads(out.read_text())
        assert params["elasticity"] == pytest.approx(-0.3, abs=0.01)

    def test_missing_column_exits_1(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("InvoiceNo,StockCode\n1,2\n")
        assert main(["calibrate", "--csv", str(bad), "--out", str(tmp_path / "p.json")]) == 1


class TestElasticity:
    def test_curve_and_value(self, tmp_path, capsys):
        params_path = tmp_path / "params.json"
        params_path.write_text(json.dumps({"elasticity": -0.072, "noise_sigma": 0.0}))
        out = tmp_path / "curve.csv"
        assert main(["elasticity", "--params", str(params_path), "--out", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 42
        assert "-0.072" in capsys.readouterr().out


class TestReport:
    def test_summary_from_runs(self, tmp_path):
        config = _experiment_file(tmp_path, weeks=5)
        runs = tmp_path / "runs"
        assert main(["simulate", "--config", str(config), "--out", str(runs), "--runs", "2"]) == 0
        out = tmp_path / "report"
        assert main(["report", "--in", str(runs), "--out", str(out)]) == 0
        assert (out / "summary_returns.csv").exists()
        assert (out / "final_market_share.csv").exists()

    def test_empty_dir_exits_1(self, tmp_path):
        assert main(["report", "--in", str(tmp_path), "--out", str(tmp_path / "o")]) == 1


class TestWilcoxonCommand:
    def test_paired_files(self, tmp_path, capsys):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        a.write_text("value\n1\n2\n3\n4\n")
        b.write_text("value\n0\n1\n2\n3\n")
        assert main(["wilcoxon", "--a", str(a), "--b", str(b)]) == 0
        assert "p=0.125" in capsys.readouterr().out

    def test_unknown_subcommand_exits_1(self):
        assert main(["frobnicate"]) == 1
