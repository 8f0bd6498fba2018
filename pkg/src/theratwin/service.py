"""HTTP facade over simulation, dosimetry, surrogate training, and the DSS.

A thin JSON wrapper: every response body is the canonical serialization of
the corresponding library result, so identical requests produce identical
bytes. The server holds immutable snapshots of the loaded policy bundle and
surrogate checkpoint; a reload swaps the snapshot reference atomically.
Surrogate training runs as a single background job per server.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.exceptions import HTTPException, RequestValidationError
from fastapi.middleware.cors import CORSMiddleware

from . import surrogate
from .dosimetry import DoseReport, dose_from_trajectory
from .dss import MdpSpec, Policy, recommend, reward, simulate_cycle
from .errors import DomainError, IntegrationError, TailFitError, TrainingError
from .pbpk import PatientParams, Trajectory, integrate

DEFAULT_PORT = 8080


@dataclass(frozen=True)
class PolicyBundle:
    """Solved policy plus the context needed to apply it."""

    policy: Policy
    spec: MdpSpec
    patient: PatientParams

    @classmethod
    def from_files(cls, policy_path: str, config_path: str) -> "PolicyBundle":
        policy = Policy.from_dict(json.loads(Path(policy_path).read_text()))
        cfg = json.loads(Path(config_path).read_text())
        return cls(policy=policy, spec=MdpSpec.from_dict(cfg["mdp"]),
                   patient=PatientParams.from_dict(cfg["patient"]))


@dataclass
class TrainJob:
    id: str
    status: str = "queued"  # queued -> running -> done | failed
    report: dict | None = None
    checkpoint: dict | None = None
    error: str | None = None


@dataclass
class ServiceState:
    bundle: PolicyBundle | None = None
    surrogate_params: surrogate.SurrogateParams | None = None
    cohort: list = field(default_factory=list)
    jobs: dict = field(default_factory=dict)
    job_lock: threading.Lock = field(default_factory=threading.Lock)
    active_job: str | None = None

    def load_bundle(self, bundle: PolicyBundle) -> None:
        # single reference assignment: in-flight requests keep their snapshot
        self.bundle = bundle


def _json_response(payload, status_code: int = 200) -> Response:
    return Response(content=json.dumps(payload), status_code=status_code,
                    media_type="application/json")


def _error(status: int, message: str, path: str | None = None) -> Response:
    return _json_response({"error": message, "path": path}, status_code=status)


def _require(body: dict, key: str):
    if key not in body:
        raise DomainError(f"missing field {key!r}", path=key)
    return body[key]


def _parse_initial(raw) -> np.ndarray:
    if isinstance(raw, dict):
        from .pbpk import COMPARTMENTS
        return np.array([float(raw.get(c, 0.0)) for c in COMPARTMENTS])
    return np.asarray(raw, dtype=float)


def create_app(state: ServiceState | None = None) -> FastAPI:
    app = FastAPI(title="theratwin", docs_url=None, redoc_url=None)
    app.state.svc = state or ServiceState()
    # research tool on loopback; the what-if UI is served from another port
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        err = exc.errors()[0] if exc.errors() else {"msg": "invalid body", "loc": ()}
        path = ".".join(str(p) for p in err.get("loc", ()) if p != "body") or None
        return _error(422, str(err.get("msg", "invalid body")), path)

    @app.exception_handler(DomainError)
    async def on_domain_error(request: Request, exc: DomainError):
        return _error(422, str(exc), exc.path)

    @app.exception_handler(TailFitError)
    async def on_tail_error(request: Request, exc: TailFitError):
        return _error(422, str(exc), None)

    @app.exception_handler(IntegrationError)
    async def on_integration_error(request: Request, exc: IntegrationError):
        return _error(500, str(exc), None)

    @app.exception_handler(HTTPException)
    async def on_http_error(request: Request, exc: HTTPException):
        return _error(exc.status_code, str(exc.detail), None)

    @app.post("/simulate")
    async def simulate(body: dict):
        patient = PatientParams.from_dict(_require(body, "patient"))
        initial = _parse_initial(_require(body, "initial"))
        traj = integrate(patient, initial,
                         t_end=float(_require(body, "t_end")),
                         dt=float(_require(body, "dt")),
                         method=body.get("method", "rk4"))
        return _json_response(traj.to_dict())

    @app.post("/dose")
    async def dose(body: dict):
        patient = PatientParams.from_dict(_require(body, "patient"))
        if "trajectory" in body:
            raw = body["trajectory"]
            from .pbpk import COMPARTMENTS
            try:
                states = np.column_stack([np.asarray(raw[c], dtype=float)
                                          for c in COMPARTMENTS])
                times = np.asarray(raw["time_h"], dtype=float)
            except (KeyError, TypeError, ValueError) as e:
                raise DomainError(f"malformed inline trajectory: {e}",
                                  path="trajectory")
            traj = Trajectory(times=times, states=states)
        elif "trajectory_path" in body:
            csv_path = Path(body["trajectory_path"])
            if not csv_path.exists():
                raise DomainError(f"no such trajectory file: {csv_path}",
                                  path="trajectory_path")
            traj = Trajectory.from_csv(csv_path.read_text())
        else:
            raise DomainError("provide 'trajectory' inline or 'trajectory_path'",
                              path="trajectory")
        report = dose_from_trajectory(traj, patient,
                                      tail=body.get("tail", "none"),
                                      cumulative=bool(body.get("cumulative", False)))
        return _json_response(report.to_dict())

    @app.post("/surrogate/train")
    async def train_surrogate(body: dict):
        svc = app.state.svc
        patient = PatientParams.from_dict(_require(body, "patient"))
        initial = _parse_initial(_require(body, "initial"))
        total_dose = float(body.get("total_dose", float(initial @ patient.volumes)))
        cfg = surrogate.TrainConfig.from_dict(_require(body, "config"))
        with svc.job_lock:
            if svc.active_job is not None and \
                    svc.jobs[svc.active_job].status in ("queued", "running"):
                raise HTTPException(409, "a training job is already active")
            job = TrainJob(id=uuid.uuid4().hex)
            svc.jobs[job.id] = job
            svc.active_job = job.id

        def run():
            job.status = "running"
            try:
                params, report = surrogate.train(patient, initial, total_dose, cfg)
                job.checkpoint = params.to_dict()
                job.report = {
                    "final_loss": report.final_loss,
                    "iterations": report.iterations,
                    "converged": report.converged,
                    "loss_history": report.loss_history.tolist(),
                }
                job.status = "done"
            except (TrainingError, DomainError) as e:
                job.error = str(e)
                job.status = "failed"

        threading.Thread(target=run, daemon=True).start()
        return _json_response({"job_id": job.id}, status_code=202)

    @app.get("/surrogate/jobs/{job_id}")
    async def job_status(job_id: str):
        job = app.state.svc.jobs.get(job_id)
        if job is None:
            raise HTTPException(404, f"unknown job {job_id!r}")
        return _json_response({
            "job_id": job.id,
            "status": job.status,
            "report": job.report,
            "checkpoint": job.checkpoint,
            "error": job.error,
        })

    @app.get("/config")
    async def config():
        svc = app.state.svc
        if svc.bundle is None:
            return _json_response({"policy_loaded": False})
        spec = svc.bundle.spec
        return _json_response({
            "policy_loaded": True,
            "actions_mbq": spec.actions.tolist(),
            "max_cycles": spec.max_cycles,
            "cycle_interval_h": spec.cycle_interval,
            "reward": spec.reward.to_dict(),
            "patient": svc.bundle.patient.to_dict(),
        })

    @app.get("/cohort")
    async def cohort():
        svc = app.state.svc
        return _json_response({
            "patients": [p.to_dict() for p in svc.cohort],
        })

    @app.post("/whatif")
    async def whatif(body: dict):
        svc = app.state.svc
        bundle = svc.bundle  # snapshot
        if bundle is None:
            raise HTTPException(409, "no policy loaded")
        spec = bundle.spec
        patient = PatientParams.from_dict(_require(body, "patient"))
        cumulative = DoseReport.from_dict(_require(body, "cumulative"))
        cycle = int(_require(body, "cycle"))
        candidate = float(_require(body, "candidate_activity"))
        horizon = int(body.get("horizon_cycles", 1))
        if candidate < 0:
            raise DomainError("candidate_activity must be >= 0",
                              path="candidate_activity")
        if horizon < 1:
            raise DomainError("horizon_cycles must be >= 1", path="horizon_cycles")

        if candidate > 0:
            per_cycle = simulate_cycle(patient, candidate, spec.cycle_interval,
                                       spec.rollout_dt)
        else:
            per_cycle = DoseReport.zero()
        updated = cumulative + per_cycle
        step_reward = reward(cumulative, updated, spec.reward,
                             terminal=cycle + 1 >= spec.max_cycles)
        if cycle + 1 >= spec.max_cycles:
            next_state = spec.terminal_state
            terminal = True
        else:
            bins, _ = spec.dose_bins(updated.dose)
            next_state = spec.state_index(*bins, cycle + 1)
            terminal = False
        rec = recommend(bundle.policy, cumulative, cycle, spec)

        projection = []
        cum = cumulative
        for i in range(horizon):
            cum = cum + per_cycle
            projection.append({"cycle": cycle + 1 + i,
                               "cumulative": cum.to_dict()})

        return _json_response({
            "per_cycle": per_cycle.to_dict(),
            "cumulative": updated.to_dict(),
            "reward": step_reward,
            "next_state": int(next_state),
            "next_state_terminal": terminal,
            "recommendation": rec.to_dict(),
            "projection": projection,
        })

    return app


def port_available(port: int, host: str = "127.0.0.1") -> bool:
    import socket

    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
        try:
            s.bind((host, port))
            return True
        except OSError:
            return False
