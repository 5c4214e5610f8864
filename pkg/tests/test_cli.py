"""End-to-end command-line checks, run in process through cli.main."""
import json

import pytest

import hybridsim as hs
from hybridsim import cli


def run(*argv):
    return cli.main(list(argv))


def simulate_to(path, *extra):
    return run(
        "simulate",
        "--system",
        "planar",
        "--xi=-1,1",
        "--T",
        "3",
        "--J",
        "1",
        "--out",
        str(path),
        *extra,
    )


class TestSimulate:
    def test_writes_csv_and_reruns_identically(self, tmp_path):
        f1, f2 = tmp_path / "a.csv", tmp_path / "b.csv"
        assert simulate_to(f1) == 0
        assert simulate_to(f2) == 0
        assert f1.read_bytes() == f2.read_bytes()
        with open(f1) as fh:
            arc = hs.HybridArc.from_csv(fh)
        assert len(arc.jump_times) == 1
        assert arc.jump_times[0] == pytest.approx(1.0, abs=1e-9)

    def test_stdout_when_no_out(self, capsys):
        assert run("simulate", "--xi=-1,1", "--T", "3", "--J", "1") == 0
        captured = capsys.readouterr()
        assert captured.out.splitlines()[0].startswith("t,j,")
        assert "jumps at" in captured.err

    def test_flowing_first_strategy(self, tmp_path):
        f = tmp_path / "c.csv"
        assert simulate_to(f, "--strategy", "flowing-first") == 0
        with open(f) as fh:
            arc = hs.HybridArc.from_csv(fh)
        assert arc.jump_times == ()
        assert arc.t_max == pytest.approx(3.0, abs=1e-12)

    def test_scripted_jump_times(self, tmp_path):
        f = tmp_path / "d.csv"
        code = run(
            "simulate", "--xi=-1,1", "--T", "3", "--J", "1",
            "--jump-at", "1.0", "--out", str(f),
        )
        assert code == 0
        with open(f) as fh:
            arc = hs.HybridArc.from_csv(fh)
        assert arc.jump_times == (1.0,)

    def test_scripted_times_must_be_nondecreasing(self):
        assert run("simulate", "--xi=-1,2", "--jump-at", "1.0,0.5") == 2

    def test_perturbed_simulation(self, tmp_path):
        f = tmp_path / "e.csv"
        code = simulate_to(f, "--delta", "0.1", "--signal", "n1b",
                           "--strategy", "flowing-first")
        assert code == 0
        with open(f) as fh:
            arc = hs.HybridArc.from_csv(fh)
        assert arc.jump_times == ()

    def test_delta_requires_signal(self):
        assert run("simulate", "--xi=-1,1", "--delta", "0.1") == 2

    def test_enumerate_all_requires_out_directory(self):
        assert run("simulate", "--xi=-1,1", "--strategy", "enumerate-all") == 2

    def test_enumerate_all_writes_one_file_per_arc(self, tmp_path, capsys):
        out = tmp_path / "arcs"
        code = run(
            "simulate", "--xi=-1,1", "--T", "3", "--J", "1",
            "--strategy", "enumerate-all", "--out", str(out),
        )
        assert code == 0
        files = sorted(p.name for p in out.glob("*.csv"))
        assert files == ["arc_000.csv", "arc_001.csv"]
        assert "2 solutions" in capsys.readouterr().out

    def test_config_file_system(self, tmp_path):
        cfg = {
            "schema": "hybridsim/1",
            "n": 2,
            "flow_set": {"complement": True},
            "jump_set": {
                "combine": "max",
                "terms": [{"a": [1.0, -1.0], "b": -1.0}, {"a": [-1.0, -1.0], "b": -1.0}],
            },
            "flow_map": {"A": [[0.0, 0.0], [0.0, 0.0]], "b": [1.0, 0.0]},
            "jump_map": {"A": [[0.0, 0.0], [0.0, 0.0]], "b": [0.0, 0.0]},
            "name": "planar-from-config",
        }
        cfg_path = tmp_path / "system.json"
        cfg_path.write_text(json.dumps(cfg))
        f = tmp_path / "f.csv"
        code = run(
            "simulate", "--config", str(cfg_path), "--xi=-1,2",
            "--T", "2", "--J", "1", "--out", str(f),
        )
        assert code == 0
        with open(f) as fh:
            arc = hs.HybridArc.from_csv(fh)
        assert arc.jump_times == (0.0,)


class TestUsageErrors:
    def test_bad_vector(self):
        assert run("simulate", "--xi", "a,b") == 2

    def test_unknown_system(self):
        assert run("simulate", "--system", "nope", "--xi", "0,0") == 2

    def test_unknown_signal(self):
        assert run("simulate", "--xi=-1,1", "--delta", "0.1", "--signal", "nope") == 2

    def test_missing_required_argument(self):
        assert run("simulate") == 2

    def test_unknown_subcommand(self):
        assert run("frobnicate") == 2


class TestCompare:
    @pytest.fixture()
    def pair(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert simulate_to(a) == 0
        assert simulate_to(b, "--strategy", "flowing-first") == 0
        return a, b

    def test_not_close_prints_witness(self, pair, capsys):
        a, b = pair
        code = run("compare", "--a", str(a), "--b", str(b),
                   "--T", "3", "--J", "1", "--eps", "0.5")
        assert code == 0
        out = capsys.readouterr().out
        assert "close: false" in out
        assert "witness:" in out

    def test_identical_files_are_close(self, pair, capsys):
        a, _ = pair
        code = run("compare", "--a", str(a), "--b", str(a),
                   "--T", "3", "--J", "1", "--eps", "0.01", "--margin")
        assert code == 0
        out = capsys.readouterr().out
        assert "close: true" in out
        margin = float(out.split("margin:")[1].strip())
        assert margin < 1e-6


class TestProbe:
    ARGS = (
        "--T", "3", "--J", "1",
        "--signals", "n1a",
        "--queries", "3:1:0.5",
        "--delta-grid", "0.01,0.1",
    )

    def test_counterexample_exits_one(self, tmp_path, capsys):
        report_path = tmp_path / "report.json"
        code = run(
            "probe", "--kind", "strong", "--xi=-1,1",
            "--out", str(report_path), *self.ARGS,
        )
        assert code == 1
        payload = json.loads(report_path.read_text())
        assert payload["verdict"] == "counterexample_found"
        ce = payload["counterexample"]
        assert ce["kind"] == "strong-robustness"
        assert ce["signal"] == "n1a"
        assert ce["delta_threshold"] == 0.1
        assert json.loads(capsys.readouterr().out) == payload

    def test_clean_start_exits_zero(self, capsys):
        code = run("probe", "--kind", "strong", "--xi=-2.5,0.5", *self.ARGS)
        assert code == 0
        assert json.loads(capsys.readouterr().out)["verdict"] == "no_counterexample_found"

    def test_derived_implementation_probe(self, capsys):
        code = run(
            "probe", "--kind", "robustness", "--impl", "flowing-first",
            "--xi=-1,1", *self.ARGS,
        )
        assert code == 1
        payload = json.loads(capsys.readouterr().out)
        assert payload["counterexample"]["kind"] == "robustness"


class TestVerifyImpl:
    def test_flowing_first_passes(self, capsys):
        code = run(
            "verify-impl", "--system", "planar", "--impl", "flowing-first",
            "--samples", "10", "--seed", "0", "--T", "3", "--J", "1",
        )
        assert code == 0
        assert "ok: true" in capsys.readouterr().out


class TestListAndBundle:
    def test_list(self, capsys):
        assert run("list") == 0
        out = capsys.readouterr().out
        assert "planar" in out
        assert "n1a" in out
        assert "planar-fig2" in out

    def test_bundle_single_experiment(self, tmp_path, capsys):
        code = run("bundle", "--out", str(tmp_path), "planar-fig2")
        assert code == 0
        bundle_dir = tmp_path / "planar-fig2"
        assert bundle_dir.is_dir()
        assert list(bundle_dir.glob("*.csv"))
        assert "planar-fig2" in capsys.readouterr().out

    def test_bundle_unknown_name(self, tmp_path):
        assert run("bundle", "--out", str(tmp_path), "nope") == 2
