import json

import numpy as np
import pytest

from sinkhorn_mpc.cli import (
    canonical_json,
    load_scenario,
    main,
    materialize,
    parse_scenario,
)
from sinkhorn_mpc.errors import ScenarioError

TRIVIAL = {
    "schema_version": 1,
    "name": "unit",
    "seed": 5,
    "dynamics": {"kind": "discrete", "A": [[1.0]], "B": [[0.1]]},
    "agents": 1,
    "horizon": 20,
    "epsilon": 0.5,
    "targets": {"kind": "explicit", "points": [[0.25]]},
    "initial_states": {"kind": "explicit", "points": [[1.5]]},
    "marginals": {"kind": "uniform"},
    "sinkhorn": {"kind": "fixed", "count": 1},
    "steps": 600,
}


def write_scenario(tmp_path, doc, name="scenario.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


class TestScenarioParsing:
    @pytest.mark.parametrize("name", ["ex2d", "ex1d", "sweep-1d", "bench-template"])
    def test_shipped_scenarios_roundtrip_canonically(self, name):
        sf = load_scenario(name)
        once = canonical_json(sf)
        twice = canonical_json(parse_scenario(once))
        assert once == twice

    def test_unknown_field_rejected(self, tmp_path):
        doc = dict(TRIVIAL, bogus=1)
        with pytest.raises(ScenarioError) as err:
            parse_scenario((write_scenario(tmp_path, doc)).read_text())
        assert "bogus" in str(err.value)

    def test_negative_epsilon_rejected(self):
        doc = dict(TRIVIAL, epsilon=-1.0)
        with pytest.raises(ScenarioError) as err:
            parse_scenario(json.dumps(doc))
        assert "epsilon" in str(err.value)

    def test_missing_field_names_it(self):
        doc = {k: v for k, v in TRIVIAL.items() if k != "horizon"}
        with pytest.raises(ScenarioError) as err:
            parse_scenario(json.dumps(doc))
        assert "horizon" in str(err.value)

    def test_materialize_is_seed_deterministic(self):
        sf = load_scenario("ex1d")
        a = materialize(sf)
        b = materialize(sf)
        np.testing.assert_array_equal(a.x0, b.x0)
        np.testing.assert_array_equal(a.targets, b.targets)
        c = materialize(sf, seed=999)
        assert not np.array_equal(a.x0, c.x0)


class TestRunCommand:
    def test_trivial_run_artifacts(self, tmp_path):
        p = write_scenario(tmp_path, TRIVIAL)
        out = tmp_path / "out"
        assert main(["run", "--scenario", str(p), "--out", str(out)]) == 0
        traj = (out / "trajectories.csv").read_text().splitlines()
        assert traj[0] == "step,agent,x1,u1,t1"
        assert len(traj) == 1 + 600
        metrics = (out / "metrics.csv").read_text().splitlines()
        last = metrics[-1].split(",")
        assert float(last[4]) < 1e-9  # equilibrium residual column
        summary = json.loads((out / "summary.json").read_text())
        assert summary["final_equilibrium_residual"] < 1e-9
        assert summary["steps"] == 600

    def test_float_format_roundtrips(self, tmp_path):
        doc = dict(TRIVIAL, steps=3)
        p = write_scenario(tmp_path, doc)
        out = tmp_path / "out"
        main(["run", "--scenario", str(p), "--out", str(out)])
        rows = (out / "trajectories.csv").read_text().splitlines()[1:]
        x0 = float(rows[0].split(",")[2])
        assert x0 == 1.5

    def test_malformed_epsilon_exits_2(self, tmp_path):
        p = write_scenario(tmp_path, dict(TRIVIAL, epsilon=-1.0))
        assert main(["run", "--scenario", str(p), "--out", str(tmp_path / "o")]) == 2

    def test_numerical_abort_exits_3(self, tmp_path):
        doc = dict(
            TRIVIAL,
            epsilon=1e-3,
            targets={"kind": "explicit", "points": [[1e4]]},
            steps=5,
        )
        p = write_scenario(tmp_path, doc)
        assert main(["run", "--scenario", str(p), "--out", str(tmp_path / "o")]) == 3

    def test_baseline_mode_writes_assignment_flag(self, tmp_path):
        doc = dict(
            TRIVIAL,
            agents=2,
            targets={"kind": "explicit", "points": [[0.2], [0.8]]},
            initial_states={"kind": "explicit", "points": [[1.0], [0.0]]},
            steps=5,
        )
        p = write_scenario(tmp_path, doc)
        out = tmp_path / "out"
        assert (
            main(
                [
                    "run", "--scenario", str(p), "--mode", "hungarian-baseline",
                    "--out", str(out),
                ]
            )
            == 0
        )
        header = (out / "metrics.csv").read_text().splitlines()[0]
        assert header.endswith("assignment_changed")
        summary = json.loads((out / "summary.json").read_text())
        assert summary["hungarian_seconds_median"] is not None


class TestSweepCommand:
    def test_two_point_grid_single_agent(self, tmp_path):
        doc = dict(TRIVIAL, steps=2000)
        p = write_scenario(tmp_path, doc)
        out = tmp_path / "out"
        assert (
            main(["sweep", "--scenario", str(p), "--eps", "0.5,5.0", "--out", str(out)])
            == 0
        )
        rows = (out / "sweep.csv").read_text().splitlines()
        assert len(rows) == 3
        s1 = float(rows[1].split(",")[-1])
        s2 = float(rows[2].split(",")[-1])
        assert abs(s1 - 0.25) < 1e-6 and abs(s2 - 0.25) < 1e-6

    def test_empty_grid_exits_2(self, tmp_path):
        p = write_scenario(tmp_path, TRIVIAL)
        assert main(["sweep", "--scenario", str(p), "--out", str(tmp_path / "o")]) == 2


class TestBenchCommand:
    def test_small_sizes_produce_table(self, tmp_path):
        out = tmp_path / "out"
        code = main(
            [
                "bench", "--scenario", "bench-template", "--sizes", "1,8,16",
                "--eps", "0.5,1.0", "--out", str(out),
            ]
        )
        assert code == 0
        rows = (out / "bench.csv").read_text().splitlines()
        assert rows[0] == "agents,epsilon,sinkhorn_iteration_seconds,sbar0,hungarian_seconds"
        assert len(rows) == 7
        for row in rows[1:]:
            n, eps, t_iter, sbar0, t_hung = row.split(",")
            assert float(t_iter) > 0 and int(sbar0) >= 1 and float(t_hung) > 0
            if n == "1":
                assert int(sbar0) == 1  # a single agent converges in one pass


class TestValidateCommand:
    def test_ok_scenario(self, capsys):
        assert main(["validate", "--scenario", "ex2d"]) == 0
        body = capsys.readouterr().out
        assert json.loads(body)["name"] == "ex2d"

    def test_missing_file_exits_2(self):
        assert main(["validate", "--scenario", "missing.json"]) == 2
