import json
import math

import pydot
import pytest

from thermoperf.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr()


def files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.json"}


class TestSimulate:
    ARGS = ["simulate", "--effusivity", "1000", "--tsens0", "35", "--tamb", "25",
            "--duration", "2", "--trials", "5", "--seed", "7"]

    def test_writes_traces(self, tmp_path, capsys):
        code, _ = run(capsys, *self.ARGS, "--out", tmp_path / "a")
        assert code == 0
        assert len(list((tmp_path / "a").glob("trace_*.csv"))) == 5
        assert len(list((tmp_path / "a").glob("trace_*.json"))) == 5
        m = json.loads((tmp_path / "a" / "manifest.json").read_text())
        assert m["command"] == "simulate" and m["seed"] == 7

    def test_rerun_is_identical(self, tmp_path, capsys):
        run(capsys, *self.ARGS, "--out", tmp_path / "a")
        run(capsys, *self.ARGS, "--out", tmp_path / "b")
        assert files(tmp_path / "a") == files(tmp_path / "b")

    def test_zero_duration_is_usage_error(self, tmp_path, capsys):
        args = list(self.ARGS)
        args[args.index("--duration") + 1] = "0"
        code, cap = run(capsys, *args, "--out", tmp_path)
        assert code == 2 and "duration" in cap.err

    def test_material_from_db(self, tmp_path, capsys):
        code, _ = run(capsys, "simulate", "--material", "Glass", "--trials", "2", "--out", tmp_path)
        assert code == 0
        meta = json.loads((tmp_path / "trace_000.json").read_text())
        assert meta["effusivity"] == 1433.31

    def test_unknown_material(self, tmp_path, capsys):
        code, _ = run(capsys, "simulate", "--material", "Unobtainium", "--out", tmp_path)
        assert code == 2

    def test_env_default_out(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("THERMOPERF_OUT", str(tmp_path))
        code, _ = run(capsys, *self.ARGS)
        assert code == 0
        assert len(list((tmp_path / "simulate").glob("trace_*.csv"))) == 5


class TestPredict:
    def predict(self, capsys, *extra):
        code, cap = run(capsys, "predict", *extra)
        assert code == 0
        return json.loads(cap.out)

    def test_equal_is_half(self, capsys):
        assert self.predict(capsys, "--e1", 900, "--e2", 900)["f1"] == pytest.approx(0.5, abs=1e-12)

    def test_symmetric(self, capsys):
        a = self.predict(capsys, "--e1", 900, "--e2", 1200)
        b = self.predict(capsys, "--e1", 1200, "--e2", 900)
        assert a["f1"] == pytest.approx(b["f1"], abs=1e-12)
        assert a["n"] == 400

    def test_foam_vs_copper(self, capsys):
        assert self.predict(capsys, "--e1", 100, "--e2", 30000)["f1"] > 0.999

    def test_varied_initial_temperature(self, capsys):
        r = self.predict(capsys, "--e1", 900, "--e2", 1200, "--tsens0-range", "30,40")
        assert r["sigma"] == pytest.approx(0.05 * math.log(15 / 5) / 10, rel=1e-12)
        assert 0.5 < r["f1"] <= 1.0

    def test_missing_argument(self, capsys):
        code, _ = run(capsys, "predict", "--e1", 900)
        assert code == 2


@pytest.fixture(scope="module")
def model_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("matrix")
    assert main(["matrix", "--intervals", "50", "--stride", "10", "--out", str(out)]) == 0
    return out


class TestMatrixCompare:
    def test_matrix_outputs(self, model_dir):
        for name in ("f1_matrix.csv", "f1_matrix.json", "binary_map.csv", "binary_map.json"):
            assert (model_dir / name).exists()
        assert "indistinguishable_percent" in json.loads((model_dir / "binary_map.json").read_text())

    def test_compare_reports_match(self, model_dir, tmp_path, capsys):
        code, cap = run(capsys, "compare", "--model", model_dir / "f1_matrix.json", "--trials", "6",
                        "--epochs", "50", "--out", tmp_path)
        assert code == 0
        report = json.loads((tmp_path / "match_report.json").read_text())
        assert 0.0 <= report["match_percent"] <= 100.0
        assert report["cells"] == 5
        assert json.loads(cap.out) == report

    def test_compare_rejects_binary_map(self, model_dir, tmp_path, capsys):
        code, _ = run(capsys, "compare", "--model", model_dir / "binary_map.json", "--out", tmp_path)
        assert code == 2

    def test_graph_from_matrix(self, model_dir, tmp_path, capsys):
        code, _ = run(capsys, "graph", "--matrix", model_dir / "f1_matrix.json", "--out", tmp_path)
        assert code == 0
        assert pydot.graph_from_dot_data((tmp_path / "graph.dot").read_text())


def test_delta_csv(tmp_path, capsys):
    code, _ = run(capsys, "delta", "--e", 500, 5000, 30000, "--out", tmp_path)
    assert code == 0
    lines = (tmp_path / "delta.csv").read_text().splitlines()
    assert lines[0] == "e,delta,direction" and len(lines) == 4


def test_graph_builtin(tmp_path, capsys):
    code, cap = run(capsys, "graph", "--db", "builtin", "--intervals", "100", "--out", tmp_path)
    assert code == 0
    (g,) = pydot.graph_from_dot_data((tmp_path / "graph.dot").read_text())
    assert json.loads(cap.out)["n_materials"] == 12
    assert len([n for n in g.get_nodes() if n.get_name() not in ("node", "edge", "graph")]) == 12


class TestFit:
    @pytest.fixture
    def copper(self, tmp_path):
        d = tmp_path / "cu"
        assert main(["simulate", "--effusivity", "23049.18", "--trials", "100", "--seed", "4",
                     "--offset=-0.5", "--out", str(d)]) == 0
        return d

    def test_recovers_copper(self, copper, tmp_path, capsys):
        code, cap = run(capsys, "fit", "--traces", copper, "--bounds", "30.5,40000", "--out", tmp_path / "fit")
        assert code == 0
        res = json.loads((tmp_path / "fit" / "fit_result.json").read_text())
        assert abs(res["e_obj"] - 23049.18) / 23049.18 <= 0.05
        assert res["n_traces"] == 100

    def test_missing_directory(self, tmp_path, capsys):
        code, cap = run(capsys, "fit", "--traces", tmp_path / "nope", "--out", tmp_path / "fit")
        assert code == 1 and "nope" in cap.err

    def test_empty_directory(self, tmp_path, capsys):
        (tmp_path / "empty").mkdir()
        code, _ = run(capsys, "fit", "--traces", tmp_path / "empty", "--out", tmp_path / "fit")
        assert code == 2

    def test_bad_bounds(self, copper, tmp_path, capsys):
        code, _ = run(capsys, "fit", "--traces", copper, "--bounds", "40000,30", "--out", tmp_path / "fit")
        assert code == 2


def test_replay_is_bit_identical(tmp_path, capsys):
    run(capsys, "simulate", "--effusivity", "700", "--trials", "3", "--seed", "11", "--out", tmp_path / "a")
    code, _ = run(capsys, "replay", tmp_path / "a" / "manifest.json", "--out", tmp_path / "b")
    assert code == 0
    assert files(tmp_path / "a") == files(tmp_path / "b")


class TestDb:
    def test_export_stdout(self, capsys):
        code, cap = run(capsys, "db", "export")
        assert code == 0
        assert cap.out.startswith("name,category") and "Copper" in cap.out

    def test_export_validate_round_trip(self, tmp_path, capsys):
        run(capsys, "db", "export", "--out", tmp_path)
        code, cap = run(capsys, "db", "validate", tmp_path / "materials.csv")
        assert code == 0 and "12 records ok" in cap.out
        assert "MDF" in cap.err

    def test_validate_missing_file(self, tmp_path, capsys):
        code, _ = run(capsys, "db", "validate", tmp_path / "none.csv")
        assert code == 1


def test_version(capsys):
    code, cap = run(capsys, "--version")
    assert code == 0 and "0.1.0" in cap.out
