import json

import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from theratwin.dosimetry import DoseReport
from theratwin.dss import build_mdp, policy_iteration, recommend
from theratwin.service import PolicyBundle, ServiceState, create_app

from conftest import small_spec, unit_patient

@pytest.fixture
def client():
    return TestClient(create_app(ServiceState()))

@pytest.fixture
def policy_client(patient):
    spec = small_spec()
    policy = policy_iteration(build_mdp(patient, spec), spec)
    state = ServiceState()
    state.load_bundle(PolicyBundle(policy=policy, spec=spec, patient=patient))
    return TestClient(create_app(state)), spec, policy, patient

def simulate_body(patient, **over):
    body = {
        "patient": patient.to_dict(),
        "initial": [10.0, 0.0, 0.0, 0.0],
        "t_end": 72.0,
        "dt": 0.1,
    }
    body.update(over)
    return body

class TestSimulate:
    def test_grid_length(self, client, patient):
        resp = client.post("/simulate", json=simulate_body(patient))
        assert resp.status_code == 200
        data = resp.json()
        assert len(data["time_h"]) == 721
        assert len(data["plasma"]) == 721

    def test_invalid_patient_field_path(self, client, patient):
        body = simulate_body(patient)
        body["patient"]["k_p_l"] = -1.0
        resp = client.post("/simulate", json=body)
        assert resp.status_code == 422
        err = resp.json()
        assert err["path"] == "k_p_l"
        assert "error" in err

    def test_identical_requests_identical_bytes(self, client, patient):
        body = simulate_body(patient, t_end=24.0)
        r1 = client.post("/simulate", json=body)
        r2 = client.post("/simulate", json=body)
        assert r1.content == r2.content

    def test_missing_field(self, client, patient):
        body = simulate_body(patient)
        del body["t_end"]
        resp = client.post("/simulate", json=body)
        assert resp.status_code == 422
        assert resp.json()["path"] == "t_end"

    def test_body_bytes_equal_library_serialization(self, client, patient):
        from theratwin.pbpk import integrate
        resp = client.post("/simulate", json=simulate_body(patient, t_end=12.0))
        expected = integrate(patient, np.array([10.0, 0, 0, 0]), 12.0, 0.1)
        assert resp.content == json.dumps(expected.to_dict()).encode()

class TestDose:
    def test_unit_s_factor_identity(self, client):
        p = unit_patient(s_factors=np.array([[1.0, 0, 0, 0]] * 3))
        times = np.linspace(0.0, 5.0, 6).tolist()
        traj = {"time_h": times, "plasma": [2.0] * 6, "liver": [0.0] * 6,
                "kidney": [0.0] * 6, "tumor": [0.0] * 6}
        resp = client.post("/dose", json={"patient": p.to_dict(),
                                          "trajectory": traj})
        assert resp.status_code == 200
        assert resp.json()["dose_gy"]["liver"] == pytest.approx(10.0)

    def test_linearity_under_doubling(self, client, patient):
        times = np.linspace(0.0, 10.0, 11)
        base = 5.0 * np.exp(-0.3 * times)

        def body(scale):
            return {"patient": patient.to_dict(), "trajectory": {
                "time_h": times.tolist(),
                "plasma": (scale * base).tolist(),
                "liver": [0.0] * 11, "kidney": [0.0] * 11, "tumor": [0.0] * 11}}

        d1 = client.post("/dose", json=body(1.0)).json()["dose_gy"]
        d2 = client.post("/dose", json=body(2.0)).json()["dose_gy"]
        for organ in d1:
            assert d2[organ] == pytest.approx(2.0 * d1[organ], rel=1e-12)

    def test_malformed_inline_trajectory_422(self, client, patient):
        resp = client.post("/dose", json={"patient": patient.to_dict(),
                                          "trajectory": {"time_h": [0, 1]}})
        assert resp.status_code == 422
        assert resp.json()["path"] == "trajectory"

    def test_missing_trajectory_file_422(self, client, patient):
        resp = client.post("/dose", json={"patient": patient.to_dict(),
                                          "trajectory_path": "/nope/t.csv"})
        assert resp.status_code == 422
        assert resp.json()["path"] == "trajectory_path"

    def test_trajectory_path_round_trip(self, client, patient, tmp_path):
        from theratwin.pbpk import integrate
        traj = integrate(patient, np.array([10.0, 0, 0, 0]), 5.0, 0.5)
        csv_file = tmp_path / "t.csv"
        csv_file.write_text(traj.to_csv())
        resp = client.post("/dose", json={"patient": patient.to_dict(),
                                          "trajectory_path": str(csv_file)})
        assert resp.status_code == 200
        from theratwin.dosimetry import dose_from_trajectory
        expected = dose_from_trajectory(traj, patient)
        assert resp.content == json.dumps(expected.to_dict()).encode()

    def test_exponential_tia_with_tail(self, client):
        p = unit_patient()
        times = np.linspace(0.0, 40.0, 401)
        decay = (10.0 * np.exp(-0.2 * times)).tolist()
        traj = {"time_h": times.tolist(), "plasma": decay, "liver": decay,
                "kidney": decay, "tumor": decay}
        resp = client.post("/dose", json={"patient": p.to_dict(),
                                          "trajectory": traj,
                                          "tail": "mono_exp"})
        tia = resp.json()["tia_mbq_h"]
        assert tia["plasma"] == pytest.approx(50.0, rel=0.01)

class TestTrainJobs:
    def test_unknown_job_404(self, client):
        resp = client.get("/surrogate/jobs/nope")
        assert resp.status_code == 404
        assert resp.json()["error"]

    def wait_done(self, client, job_id, timeout=30.0):
        deadline = time.time() + timeout
        while time.time() < deadline:
            data = client.get(f"/surrogate/jobs/{job_id}").json()
            if data["status"] in ("done", "failed"):
                return data
            time.sleep(0.02)
        raise AssertionError("job did not finish")

    def train_body(self, patient, **cfg_over):
        cfg = {"t_batch": np.linspace(0, 10, 16).tolist(), "tolerance": 1e-9,
               "max_iters": 30, "seed": 1, "hidden_sizes": [6, 6]}
        cfg.update(cfg_over)
        return {"patient": patient.to_dict(), "initial": [2.0, 0, 0, 0],
                "total_dose": 10.0, "config": cfg}

    def test_vacuous_tolerance_one_iteration(self, client, patient):
        body = self.train_body(patient, tolerance=1e30)
        resp = client.post("/surrogate/train", json=body)
        assert resp.status_code == 202
        data = self.wait_done(client, resp.json()["job_id"])
        assert data["status"] == "done"
        assert data["report"]["iterations"] == 1
        assert data["report"]["converged"] is True

    def test_fixed_seed_identical_checkpoints(self, client, patient):
        body = self.train_body(patient)
        first = self.wait_done(
            client, client.post("/surrogate/train", json=body).json()["job_id"])
        second = self.wait_done(
            client, client.post("/surrogate/train", json=body).json()["job_id"])
        assert json.dumps(first["checkpoint"]) == json.dumps(second["checkpoint"])

    def test_concurrent_job_409(self, client, patient):
        body = self.train_body(patient, max_iters=4000)
        job = client.post("/surrogate/train", json=body).json()["job_id"]
        resp = client.post("/surrogate/train", json=body)
        assert resp.status_code == 409
        self.wait_done(client, job)

    def test_bad_config_422(self, client, patient):
        body = self.train_body(patient, max_iters=0)
        resp = client.post("/surrogate/train", json=body)
        assert resp.status_code == 422

class TestWhatIf:
    def whatif_body(self, patient, activity, cycle=0, cumulative=None):
        cum = cumulative or DoseReport.zero(cumulative=True).to_dict()
        return {"patient": patient.to_dict(), "cumulative": cum,
                "cycle": cycle, "candidate_activity": activity,
                "horizon_cycles": 2}

    def test_no_policy_409(self, client, patient):
        resp = client.post("/whatif", json=self.whatif_body(patient, 3700.0))
        assert resp.status_code == 409

    def test_zero_candidate_zero_delta(self, policy_client):
        client, spec, policy, patient = policy_client
        resp = client.post("/whatif", json=self.whatif_body(patient, 0.0))
        assert resp.status_code == 200
        data = resp.json()
        assert all(v == 0.0 for v in data["per_cycle"]["dose_gy"].values())
        assert all(v == 0.0 for v in data["cumulative"]["dose_gy"].values())

    def test_q_row_length_and_delegation(self, policy_client):
        client, spec, policy, patient = policy_client
        resp = client.post("/whatif", json=self.whatif_body(patient, 1850.0))
        data = resp.json()
        assert len(data["recommendation"]["q_values"]) == spec.n_actions
        expected = recommend(policy, DoseReport.zero(cumulative=True), 0, spec)
        assert data["recommendation"] == json.loads(json.dumps(expected.to_dict()))

    def test_payload_matches_library_serialization(self, policy_client):
        from theratwin.dss import simulate_cycle
        client, spec, policy, patient = policy_client
        resp = client.post("/whatif", json=self.whatif_body(patient, 3700.0))
        per_cycle = simulate_cycle(patient, 3700.0, spec.cycle_interval,
                                   spec.rollout_dt)
        assert resp.json()["per_cycle"] == json.loads(json.dumps(per_cycle.to_dict()))

    def test_bad_body_422(self, policy_client):
        client, spec, policy, patient = policy_client
        body = self.whatif_body(patient, -5.0)
        assert client.post("/whatif", json=body).status_code == 422

class TestConfig:
    def test_without_policy(self, client):
        data = client.get("/config").json()
        assert data == {"policy_loaded": False}

    def test_with_policy(self, policy_client):
        client, spec, policy, patient = policy_client
        data = client.get("/config").json()
        assert data["policy_loaded"] is True
        assert data["actions_mbq"] == spec.actions.tolist()
        assert data["reward"]["kidney_limit"] == spec.reward.kidney_limit

    def test_cohort_endpoint(self, patient):
        state = ServiceState()
        state.cohort = [patient, patient]
        client = TestClient(create_app(state))
        data = client.get("/cohort").json()
        assert len(data["patients"]) == 2
        assert data["patients"][0]["k_ex"] == patient.k_ex
