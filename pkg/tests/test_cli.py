import json
import socket
from pathlib import Path

import numpy as np
import pytest

from theratwin.cli import main
from theratwin.dss import build_mdp
from theratwin.pbpk import CohortSpec, Trajectory

from conftest import small_spec, unit_patient


@pytest.fixture
def workdir(tmp_path, patient):
    (tmp_path / "p.json").write_text(json.dumps(patient.to_dict()))
    spec = small_spec(max_cycles=3)
    (tmp_path / "mdp.json").write_text(json.dumps(
        {"patient": patient.to_dict(), "mdp": spec.to_dict()}))
    cohort = CohortSpec(n=4, base=patient, variability={}, seed=3)
    (tmp_path / "cohort.json").write_text(json.dumps(cohort.to_dict()))
    train_cfg = {
        "patient": patient.to_dict(),
        "initial": [2.0, 0.0, 0.0, 0.0],
        "total_dose": 10.0,
        "config": {"t_batch": np.linspace(0, 10, 16).tolist(),
                   "tolerance": 1e-9, "max_iters": 25, "seed": 7,
                   "hidden_sizes": [6, 6]},
    }
    (tmp_path / "train.json").write_text(json.dumps(train_cfg))
    return tmp_path, spec


def manifest_of(path: Path) -> dict:
    return json.loads(Path(f"{path}.manifest.json").read_text())


class TestSimulate:
    def test_row_count_and_manifest(self, workdir):
        tmp, _ = workdir
        out = tmp / "traj.csv"
        code = main(["simulate", "--patient", str(tmp / "p.json"),
                     "--t-end", "72", "--dt", "0.1", "--out", str(out)])
        assert code == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 722  # header + 721 grid points
        m = manifest_of(out)
        assert str(out) in m["outputs"]

    def test_missing_patient_file_exit_2(self, workdir, capsys):
        tmp, _ = workdir
        code = main(["simulate", "--patient", str(tmp / "absent.json"),
                     "--t-end", "1", "--dt", "0.1",
                     "--out", str(tmp / "x.csv")])
        assert code == 2
        assert "absent.json" in capsys.readouterr().err

    def test_rerun_identical_checksums(self, workdir):
        tmp, _ = workdir
        out1, out2 = tmp / "a.csv", tmp / "b.csv"
        for out in (out1, out2):
            assert main(["simulate", "--patient", str(tmp / "p.json"),
                         "--t-end", "24", "--dt", "0.5",
                         "--out", str(out)]) == 0
        assert manifest_of(out1)["outputs"][str(out1)] \
            == manifest_of(out2)["outputs"][str(out2)]

    def test_invalid_config_exit_2(self, workdir):
        tmp, _ = workdir
        bad = tmp / "bad.json"
        bad.write_text(json.dumps({"k_p_l": -1.0}))
        code = main(["simulate", "--patient", str(bad), "--t-end", "1",
                     "--dt", "0.1", "--out", str(tmp / "x.csv")])
        assert code == 2

    def test_numeric_failure_exit_3(self, workdir, patient, capsys):
        # a wildly stiff rate at this step size destabilizes rk4 into
        # negative concentrations, which is a numeric failure, not a config one
        tmp, _ = workdir
        stiff = patient.to_dict()
        stiff["k_p_l"] = 500.0
        (tmp / "stiff.json").write_text(json.dumps(stiff))
        code = main(["simulate", "--patient", str(tmp / "stiff.json"),
                     "--t-end", "24", "--dt", "0.1",
                     "--out", str(tmp / "x.csv")])
        assert code == 3
        assert "numeric failure" in capsys.readouterr().err


class TestDose:
    def test_zero_trajectory_zero_doses(self, workdir):
        tmp, _ = workdir
        traj = Trajectory(times=np.linspace(0, 5, 6), states=np.zeros((6, 4)))
        (tmp / "traj.csv").write_text(traj.to_csv())
        out = tmp / "dose.json"
        code = main(["dose", "--traj", str(tmp / "traj.csv"),
                     "--patient", str(tmp / "p.json"), "--out", str(out)])
        assert code == 0
        assert all(v == 0.0 for v in json.loads(out.read_text())["dose_gy"].values())

    def test_unit_s_factor_identity(self, workdir):
        tmp, _ = workdir
        p = unit_patient(s_factors=np.array([[1.0, 0, 0, 0]] * 3))
        (tmp / "unit.json").write_text(json.dumps(p.to_dict()))
        traj = Trajectory(times=np.linspace(0, 5, 6),
                          states=np.tile([2.0, 0, 0, 0], (6, 1)))
        (tmp / "traj.csv").write_text(traj.to_csv())
        out = tmp / "dose.json"
        assert main(["dose", "--traj", str(tmp / "traj.csv"),
                     "--patient", str(tmp / "unit.json"),
                     "--out", str(out)]) == 0
        assert json.loads(out.read_text())["dose_gy"]["liver"] == pytest.approx(10.0)

    def test_exponential_tail_closed_form(self, workdir):
        tmp, _ = workdir
        p = unit_patient()
        (tmp / "unit.json").write_text(json.dumps(p.to_dict()))
        times = np.linspace(0, 40, 401)
        states = np.tile((10.0 * np.exp(-0.2 * times))[:, None], (1, 4))
        (tmp / "traj.csv").write_text(Trajectory(times=times, states=states).to_csv())
        out = tmp / "dose.json"
        assert main(["dose", "--traj", str(tmp / "traj.csv"),
                     "--patient", str(tmp / "unit.json"),
                     "--tail", "mono-exp", "--out", str(out)]) == 0
        tia = json.loads(out.read_text())["tia_mbq_h"]
        assert tia["plasma"] == pytest.approx(50.0, rel=0.01)


class TestTrainSurrogate:
    def test_outputs_and_determinism(self, workdir):
        tmp, _ = workdir
        out1, rep1 = tmp / "ck1.json", tmp / "hist1.csv"
        out2, rep2 = tmp / "ck2.json", tmp / "hist2.csv"
        for out, rep in ((out1, rep1), (out2, rep2)):
            code = main(["train-surrogate", "--config", str(tmp / "train.json"),
                         "--out", str(out), "--report", str(rep)])
            assert code == 0
        assert out1.read_bytes() == out2.read_bytes()
        assert rep1.read_bytes() == rep2.read_bytes()
        assert rep1.read_text().splitlines()[0] == "iter,loss"
        ck = json.loads(out1.read_text())
        assert ck["layer_sizes"] == [1, 6, 6, 4]
        m = manifest_of(out1)
        assert m["seed"] == 7
        assert len(m["outputs"]) == 2


class TestSolvePolicy:
    def test_policy_file_is_bellman_optimal(self, workdir, patient):
        tmp, spec = workdir
        out = tmp / "policy.json"
        assert main(["solve-policy", "--config", str(tmp / "mdp.json"),
                     "--out", str(out)]) == 0
        saved = json.loads(out.read_text())
        assert set(saved) == {"actions", "v", "q"}

        # the saved value function must be a Bellman-optimality fixed point
        # of the independently rebuilt model, with a greedy action table
        model = build_mdp(patient, spec)
        n_s, n_a = model.n_states, model.n_actions
        v = np.array(saved["v"])
        q = model.reward + spec.gamma * (model.transition @ v).reshape(n_s, n_a)
        assert np.max(np.abs(q.max(axis=1) - v)) < 1e-6
        assert np.array_equal(np.argmax(q, axis=1), np.array(saved["actions"]))

    def test_identical_seeds_identical_policy_files(self, workdir):
        tmp, _ = workdir
        out1, out2 = tmp / "pol1.json", tmp / "pol2.json"
        for out in (out1, out2):
            assert main(["solve-policy", "--config", str(tmp / "mdp.json"),
                         "--out", str(out)]) == 0
        assert out1.read_bytes() == out2.read_bytes()


class TestEvaluate:
    def test_zero_variability_returns_equal(self, workdir):
        tmp, _ = workdir
        pol = tmp / "policy.json"
        assert main(["solve-policy", "--config", str(tmp / "mdp.json"),
                     "--out", str(pol)]) == 0
        out = tmp / "eval.json"
        eps = tmp / "episodes.csv"
        code = main(["evaluate", "--policy", str(pol),
                     "--cohort", str(tmp / "cohort.json"),
                     "--config", str(tmp / "mdp.json"),
                     "--out", str(out), "--episodes", str(eps)])
        assert code == 0
        data = json.loads(out.read_text())
        returns = data["policy"]["returns"]
        assert len(returns) == 4
        assert max(returns) == min(returns)
        assert "baseline" in data
        header = eps.read_text().splitlines()[0]
        assert header == "cycle,state,action_mbq,reward,tumor_gy,kidney_gy,liver_gy"


class TestServe:
    def test_port_in_use_exit_4(self):
        with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
            s.bind(("127.0.0.1", 0))
            port = s.getsockname()[1]
            s.listen(1)
            assert main(["serve", "--port", str(port)]) == 4

    def test_help_lists_subcommands(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        for cmd in ("simulate", "dose", "train-surrogate", "solve-policy",
                    "evaluate", "serve"):
            assert cmd in out

    def test_default_binds_loopback(self):
        from theratwin.cli import build_parser
        args = build_parser().parse_args(["serve"])
        assert args.host == "127.0.0.1"
        assert args.port == 8080

    def test_env_var_overrides_default_port(self, monkeypatch):
        from theratwin.cli import build_parser
        monkeypatch.setenv("THERATWIN_PORT", "9999")
        args = build_parser().parse_args(["serve"])
        assert args.port == 9999
        args = build_parser().parse_args(["serve", "--port", "8111"])
        assert args.port == 8111


class TestSeedOverrides:
    def test_solve_policy_seed_flag_changes_output(self, workdir):
        tmp, _ = workdir
        # with per-cycle variability the rollout seed shapes the model
        cfg = json.loads((tmp / "mdp.json").read_text())
        cfg["mdp"]["variability"] = {"k_ex": 1.5}
        cfg["mdp"]["rollouts_per_sa"] = 2
        (tmp / "mdp_var.json").write_text(json.dumps(cfg))
        out_a, out_b, out_c = tmp / "a.json", tmp / "b.json", tmp / "c.json"
        for out, seed in ((out_a, "1"), (out_b, "2"), (out_c, "1")):
            assert main(["solve-policy", "--config", str(tmp / "mdp_var.json"),
                         "--seed", seed, "--out", str(out)]) == 0
        assert out_a.read_bytes() == out_c.read_bytes()
        assert out_a.read_bytes() != out_b.read_bytes()

    def test_train_surrogate_seed_flag(self, workdir):
        tmp, _ = workdir
        out_a, out_b = tmp / "ck_a.json", tmp / "ck_b.json"
        for out, seed in ((out_a, "3"), (out_b, "4")):
            assert main(["train-surrogate", "--config", str(tmp / "train.json"),
                         "--seed", seed, "--out", str(out)]) == 0
        assert out_a.read_bytes() != out_b.read_bytes()
        assert json.loads(f"{(tmp / 'ck_a.json.manifest.json').read_text()}")["seed"] == 3
