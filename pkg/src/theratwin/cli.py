"""Command-line driver for the simulation, dosimetry, surrogate, and DSS
pipelines.

Every subcommand is deterministic given its config and seed, and records a
run manifest (command, config, seed, sha256 of every output, wall clock)
next to its primary output as ``<out>.manifest.json``.

Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 port in
use.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import surrogate
from .dosimetry import dose_from_trajectory
from .dss import (
    MdpSpec,
    Policy,
    baseline_policy,
    build_mdp,
    evaluate_policy,
    policy_iteration,
)
from .errors import DomainError, IntegrationError, TailFitError, TrainingError
from .pbpk import CohortSpec, PatientParams, Trajectory, integrate, sample_cohort
from .service import DEFAULT_PORT, PolicyBundle, ServiceState, create_app, port_available

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_PORT = 4


def _read_json(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {path}")
    return json.loads(p.read_text())


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(command: str, primary_out: str, outputs, config: str | None,
                    seed, started: float) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "outputs": {str(p): _sha256(Path(p)) for p in outputs},
        "wall_clock_s": time.time() - started,
    }
    Path(f"{primary_out}.manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n")


def _write_text(path: str, text: str) -> None:
    Path(path).write_text(text)


def _write_json(path: str, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    started = time.time()
    patient = PatientParams.from_dict(_read_json(args.patient))
    if args.initial is not None:
        initial = np.array([float(x) for x in args.initial.split(",")])
    else:
        initial = np.zeros(4)
        initial[0] = args.activity_mbq / patient.volumes[0]
    traj = integrate(patient, initial, args.t_end, args.dt, method=args.method)
    _write_text(args.out, traj.to_csv())
    _write_manifest("simulate", args.out, [args.out], args.patient, None, started)
    return EXIT_OK


def cmd_dose(args) -> int:
    started = time.time()
    patient = PatientParams.from_dict(_read_json(args.patient))
    traj = Trajectory.from_csv(Path(args.traj).read_text())
    tail = args.tail.replace("-", "_")
    report = dose_from_trajectory(traj, patient, tail=tail)
    _write_json(args.out, report.to_dict())
    _write_manifest("dose", args.out, [args.out], args.patient, None, started)
    return EXIT_OK


def cmd_train_surrogate(args) -> int:
    started = time.time()
    cfg_raw = _read_json(args.config)
    patient = PatientParams.from_dict(cfg_raw["patient"])
    initial = np.asarray(cfg_raw["initial"], dtype=float)
    total_dose = float(cfg_raw.get("total_dose", initial @ patient.volumes))
    raw_train = dict(cfg_raw.get("config", {}))
    if args.seed is not None:
        raw_train["seed"] = args.seed
    cfg = surrogate.TrainConfig.from_dict(raw_train)
    params, report = surrogate.train(patient, initial, total_dose, cfg)
    _write_json(args.out, params.to_dict())
    outputs = [args.out]
    if args.report:
        _write_text(args.report, report.history_csv())
        outputs.append(args.report)
    _write_manifest("train-surrogate", args.out, outputs, args.config,
                    cfg.seed, started)
    return EXIT_OK


def cmd_solve_policy(args) -> int:
    started = time.time()
    cfg_raw = _read_json(args.config)
    patient = PatientParams.from_dict(cfg_raw["patient"])
    raw_mdp = dict(cfg_raw["mdp"])
    if args.seed is not None:
        raw_mdp["seed"] = args.seed
    spec = MdpSpec.from_dict(raw_mdp)
    model = build_mdp(patient, spec)
    policy = policy_iteration(model, spec)
    _write_json(args.out, policy.to_dict())
    _write_manifest("solve-policy", args.out, [args.out], args.config,
                    spec.seed, started)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    started = time.time()
    cfg_raw = _read_json(args.config)
    spec = MdpSpec.from_dict(cfg_raw["mdp"])
    policy = Policy.from_dict(_read_json(args.policy))
    cohort_spec = CohortSpec.from_dict(_read_json(args.cohort))
    patients = sample_cohort(cohort_spec)
    evaluation = evaluate_policy(policy, patients, spec)

    base_patient = PatientParams.from_dict(cfg_raw["patient"])
    model = build_mdp(base_patient, spec)
    base_eval = evaluate_policy(baseline_policy(model, spec), patients, spec)

    _write_json(args.out, {"policy": evaluation.to_dict(),
                           "baseline": base_eval.to_dict()})
    outputs = [args.out]
    if args.episodes:
        _write_text(args.episodes, evaluation.episodes_csv(spec))
        outputs.append(args.episodes)
    _write_manifest("evaluate", args.out, outputs, args.config,
                    cohort_spec.seed, started)
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    if not port_available(args.port, args.host):
        print(f"port {args.port} is already in use", file=sys.stderr)
        return EXIT_PORT
    state = ServiceState()
    if args.policy and args.config:
        state.load_bundle(PolicyBundle.from_files(args.policy, args.config))
    if args.cohort:
        state.cohort = sample_cohort(CohortSpec.from_dict(_read_json(args.cohort)))
    app = create_app(state)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="theratwin",
        description="Theranostic digital twin: PBPK simulation, dosimetry, "
                    "surrogate training, and dosing-policy optimization.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate the PBPK model to a CSV trajectory")
    p.add_argument("--patient", required=True, help="PatientParams JSON file")
    p.add_argument("--t-end", type=float, required=True, help="horizon, hours")
    p.add_argument("--dt", type=float, required=True, help="grid step, hours")
    p.add_argument("--method", default="rk4", choices=["rk4", "rk45"])
    p.add_argument("--activity-mbq", type=float, default=7400.0,
                   help="administered activity deposited in plasma at t=0")
    p.add_argument("--initial", default=None,
                   help="explicit initial concentrations 'p,l,k,t' (overrides "
                        "--activity-mbq)")
    p.add_argument("--out", required=True, help="output trajectory CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("dose", help="compute TIA and absorbed doses from a trajectory")
    p.add_argument("--traj", required=True, help="trajectory CSV")
    p.add_argument("--patient", required=True)
    p.add_argument("--tail", default="none", choices=["none", "mono-exp"])
    p.add_argument("--out", required=True, help="output DoseReport JSON")
    p.set_defaults(func=cmd_dose)

    p = sub.add_parser("train-surrogate", help="fit the physics-informed surrogate")
    p.add_argument("--config", required=True,
                   help="JSON with patient, initial, total_dose, config")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config file's training seed")
    p.add_argument("--out", required=True, help="output checkpoint JSON")
    p.add_argument("--report", default=None, help="loss history CSV")
    p.set_defaults(func=cmd_train_surrogate)

    p = sub.add_parser("solve-policy", help="build the dosing MDP and solve it")
    p.add_argument("--config", required=True, help="JSON with patient and mdp spec")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config file's rollout seed")
    p.add_argument("--out", required=True, help="output policy JSON")
    p.set_defaults(func=cmd_solve_policy)

    p = sub.add_parser("evaluate",
                       help="evaluate a policy (and the max-dose baseline) on a cohort")
    p.add_argument("--policy", required=True, help="policy JSON")
    p.add_argument("--cohort", required=True, help="CohortSpec JSON")
    p.add_argument("--config", required=True, help="JSON with patient and mdp spec")
    p.add_argument("--out", required=True, help="output evaluation JSON")
    p.add_argument("--episodes", default=None, help="optional episodes CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--port", type=int,
                   default=int(os.environ.get("THERATWIN_PORT", DEFAULT_PORT)),
                   help="listen port (default 8080; THERATWIN_PORT overrides "
                        "the default, the flag overrides both)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--policy", default=None, help="policy JSON to load")
    p.add_argument("--config", default=None, help="mdp config JSON to load")
    p.add_argument("--cohort", default=None, help="CohortSpec JSON to expose")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, KeyError, json.JSONDecodeError, DomainError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, TrainingError, TailFitError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
