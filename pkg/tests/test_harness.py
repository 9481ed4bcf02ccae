import json
import os

import numpy as np
import pytest

from qopt import cli, harness
from qopt.harness import ConfigError, config_from_dict, load_config, read_trace
from qopt.problems import make_case

BASE = {"problem": "case1", "noise": "normal", "algorithm": "spqo", "phi": 0.6, "eval_budget": 3000}


def cfg(**kw):
    return config_from_dict({**BASE, **kw})


def test_defaults():
    c = cfg()
    assert c.runs == 40
    assert c.base_seed == 0
    assert c.evals_per_iter == 3
    assert c.max_iter == 1000
    assert c.label == "case1-normal_spqo_phi0.6"


def test_bad_phi_names_field():
    with pytest.raises(ConfigError, match="phi"):
        cfg(phi=1.2)


def test_sdqo_evals_per_iteration():
    c = cfg(problem="case3", algorithm="sdqo", eval_budget=300_000)
    assert c.evals_per_iter == 41
    assert c.max_iter == 7317
    assert c.gain_schedule().shift == 732


def test_unknown_field_rejected():
    with pytest.raises(ConfigError, match="unknown"):
        cfg(learning_rate=0.1)


def test_missing_field_rejected():
    with pytest.raises(ConfigError, match="missing"):
        config_from_dict({"problem": "case1"})


def test_noise_rules():
    with pytest.raises(ConfigError):
        cfg(noise=None)
    with pytest.raises(ConfigError):
        config_from_dict({**BASE, "problem": "mm1"})


def test_schedule_override():
    c = cfg(schedule={"a": 1.0})
    assert c.gain_schedule().a == 1.0
    with pytest.raises(ConfigError):
        cfg(schedule={"alpha": 2.0})


def test_json_error_reports_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "problem": "case1",\n  "phi": ,\n}\n')
    with pytest.raises(ConfigError, match=r"bad.json:3:"):
        load_config(p)


def test_hash_ignores_runs_and_out():
    assert cfg(runs=2, out="a").hash() == cfg(runs=9, out="b").hash()
    assert cfg().hash() != cfg(base_seed=1).hash()


def test_mm1_block():
    c = config_from_dict({"problem": "mm1", "algorithm": "spqo-crn", "phi": 0.95, "eval_budget": 1800,
                          "mm1": {"A": [1, 0.5, 0.5, 0.5, 0.5, 1, 0.5, 0.5, 0.5, 0.5, 1, 0.5,
                                        0.5, 0.5, 0.5, 1]}})
    assert harness.build_problem(c).dim == 4
    with pytest.raises(ConfigError):
        config_from_dict({"problem": "mm1", "algorithm": "spqo", "phi": 0.5, "eval_budget": 1800,
                          "mm1": {"mu": 3}})


def _strip_wall(path):
    lines = path.read_text().splitlines()
    return [ln.rsplit(",", 1)[0] for ln in lines]


def test_rerun_is_reproducible(tmp_path):
    a = cfg(runs=2, out=str(tmp_path / "a"))
    b = cfg(runs=2, out=str(tmp_path / "b"))
    harness.run_experiment(a)
    harness.run_experiment(b)
    for j in range(2):
        name = f"{a.label}_run{j}.csv"
        assert _strip_wall(tmp_path / "a" / name) == _strip_wall(tmp_path / "b" / name)
    assert not (tmp_path / "a" / "INCOMPLETE").exists()


def test_run_subset_matches_full(tmp_path):
    full, _ = harness.run_experiment(cfg(runs=3), write=False)
    one, _ = harness.run_experiment(cfg(runs=1), write=False)
    np.testing.assert_array_equal(full[0].theta, one[0].theta)


def test_trace_round_trip_and_oracle(tmp_path):
    c = cfg(runs=2, out=str(tmp_path))
    traces, summary = harness.run_experiment(c)
    back = read_trace(tmp_path / f"{c.label}_run1.csv")
    np.testing.assert_array_equal(back.theta, traces[1].theta)
    np.testing.assert_array_equal(back.k, traces[1].k)
    p = make_case(1, "normal")
    for i in (0, len(back.k) // 2, -1):
        assert back.true_q[i] == pytest.approx(p.true_quantile(back.theta[i], 0.6), rel=1e-12)
    assert back.evals[-1] <= c.eval_budget
    data = json.loads((tmp_path / "summary.json").read_text())
    assert data["runs"] == 2
    assert data["complete"] is True
    assert data["config_hash"] == c.hash()


def test_single_run_has_nan_stderr():
    _, s = harness.run_experiment(cfg(runs=1), write=False)
    assert np.isnan(s.stderr_final)


def test_parallel_equals_sequential(monkeypatch):
    seq, _ = harness.run_experiment(cfg(runs=3), write=False)
    monkeypatch.setenv("QOPT_THREADS", "2")
    par, _ = harness.run_experiment(cfg(runs=3), write=False)
    for a, b in zip(seq, par):
        np.testing.assert_array_equal(a.theta, b.theta)


def test_qg_config_resolves():
    c = config_from_dict({"problem": "mm1", "algorithm": "qg", "phi": 0.5, "eval_budget": 1800})
    assert c.max_iter == 8
    traces, _ = harness.run_experiment(config_from_dict({**c.to_dict(), "runs": 2}), write=False)
    assert all(t.iterations == 8 for t in traces)


# --- CLI ---


def test_cli_no_args_exits_2():
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 2


def test_cli_missing_config(tmp_path):
    assert cli.main(["run", "--config", str(tmp_path / "nope.json")]) == 2


def test_cli_bad_config(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({**BASE, "phi": 1.5}))
    assert cli.main(["run", "--config", str(p)]) == 2


def test_cli_list_problems(capsys):
    assert cli.main(["list-problems"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert "case3 d=20 box=[-20,20] q*(normal,0.6)=-717.25" in out[2]
    assert len(out) == 7


def test_cli_run_and_table(tmp_path, capsys):
    p = tmp_path / "c.json"
    for alg in ("spqo", "sdqo"):
        p.write_text(json.dumps({**BASE, "algorithm": alg, "runs": 2, "out": str(tmp_path / alg)}))
        assert cli.main(["run", "--config", str(p)]) == 0
    capsys.readouterr()
    assert cli.main(["table", "--dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "| problem | spqo | sdqo |" in out
    assert out.count("| case1 |") == 1
    assert cli.main(["table", "--dir", str(tmp_path), "--format", "csv"]) == 0
    assert capsys.readouterr().out.startswith("noise,phi,problem,spqo,sdqo")


def test_cli_rate(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({**BASE, "eval_budget": 30_000, "runs": 2, "trace_stride": 10,
                             "out": str(tmp_path / "r")}))
    assert cli.main(["run", "--config", str(p)]) == 0
    assert cli.main(["rate", "--dir", str(tmp_path / "r"), "--window", "100", "10000"]) == 0
    assert capsys.readouterr().out.strip().splitlines()[-1].startswith("slope ")


def test_shipped_configs_load():
    root = os.path.join(os.path.dirname(__file__), "..", "configs")
    for name in sorted(os.listdir(root)):
        load_config(os.path.join(root, name))
