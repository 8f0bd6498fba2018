"""Acceptance suite: one test per release criterion, each printing a
pass/fail line (run with ``pytest tests/test_acceptance.py -s`` to stream
them). Tolerances and budgets are fixed here, not calibrated elsewhere.
"""

import json

import time

import numpy as np
import pytest

from theratwin.cli import main
from theratwin.dosimetry import (
    absorbed_dose,
    s_factor_from_energetics,
    time_integrated_activity,
)
from theratwin.dss import (
    baseline_policy,
    build_mdp,
    evaluate_policy,
    policy_iteration,
    q_learning,
)
from theratwin.metrics import RunMatrix, cvar, iqr, performance_profile
from theratwin.pbpk import CohortSpec, Trajectory, integrate, sample_cohort
from theratwin.reference import (
    default_cohort_spec,
    default_mdp_spec,
    reference_patient,
    reference_unit_patient,
)
from theratwin.surrogate import (
    TrainConfig,
    grad_total,
    init_params,
    loss_total,
    predict,
    train,
)

from conftest import make_patient, unit_patient
from test_dss import chain_model, enumerate_optimal_values, random_model
from test_metrics import exhaustive_stratified_bands
from test_surrogate import fd_gradient, max_rel_error

def report_line(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f"  ({detail})" if detail else ""
    print(f"[{status}] {name}{suffix}")
    assert ok, f"{name}{suffix}"

class TestAcceptance:
    def test_conservation_closed_system(self):
        started = time.perf_counter()
        p = make_patient(k_met=0.0, k_ex=0.0, lambda_phys=0.0)
        traj = integrate(p, np.array([10.0, 0.0, 0.0, 0.0]), 72.0, 0.1)
        total = traj.states @ p.volumes
        drift = float(np.max(np.abs(total - total[0])) / total[0])
        elapsed = time.perf_counter() - started
        report_line("conservation: closed-system mass within 1e-6 over 72 h",
                    drift < 1e-6 and elapsed < 1.0,
                    f"drift={drift:.2e}, {elapsed:.2f}s")

    def test_closed_form_ode_oracle(self):
        started = time.perf_counter()
        p = unit_patient(k_ex=0.2)
        traj = integrate(p, np.array([0.0, 0.0, 10.0, 0.0]), 10.0, 0.01)
        exact = 10.0 * np.exp(-0.2 * traj.times)
        rel = float(np.max(np.abs(traj.states[:, 2] - exact) / exact))
        elapsed = time.perf_counter() - started
        report_line("ode oracle: exponential reduction matches to 1e-6 (rk4, dt=0.01)",
                    rel < 1e-6 and elapsed < 1.0, f"rel={rel:.2e}, {elapsed:.2f}s")

    def test_tia_oracle(self):
        started = time.perf_counter()
        p = unit_patient()
        times = np.linspace(0.0, 40.0, 401)
        states = np.tile((10.0 * np.exp(-0.2 * times))[:, None], (1, 4))
        tia = time_integrated_activity(Trajectory(times=times, states=states),
                                       p, tail="mono_exp")
        rel = float(abs(tia[0] - 50.0) / 50.0)
        elapsed = time.perf_counter() - started
        report_line("tia oracle: mono-exp tail reproduces A0/k within 1%",
                    rel < 0.01 and elapsed < 1.0, f"rel={rel:.2e}, {elapsed:.2f}s")

    def test_dose_formula_checks(self):
        p_unit = unit_patient(s_factors=np.array([[1.0, 0, 0, 0]] * 3))
        identity = absorbed_dose(np.array([1.0, 0, 0, 0]), p_unit).dose
        identity_ok = bool(np.all(identity == 1.0))

        p = reference_patient()
        tia = np.array([100.0, 40.0, 25.0, 60.0])
        d1 = absorbed_dose(tia, p).dose
        d2 = absorbed_dose(2.0 * tia, p).dose
        linear_ok = bool(np.max(np.abs(d2 - 2.0 * d1)) <= 1e-12 * np.max(d2))

        s = s_factor_from_energetics(0.5, 0.1, 2.0)
        expanded_ok = (s == 0.5 * 0.1 / 2.0) and \
            absorbed_dose(np.array([100.0, 0, 0, 0]),
                          unit_patient(s_factors=np.array([[s, 0, 0, 0]] * 3))
                          ).dose[0] == 100.0 * s
        report_line("dose formula: unit identity, doubling linearity, a*phi/M",
                    identity_ok and linear_ok and expanded_ok)

    def test_gradient_contract_100_draws(self):
        started = time.perf_counter()
        patient = make_patient()
        initial = np.array([3.0, 0.1, 0.2, 0.05])
        worst = 0.0
        for seed in range(100):
            cfg = TrainConfig(t_batch=np.linspace(0.0, 20.0, 5), tolerance=1e-12,
                              max_iters=1, loss_weights=(1.0, 0.0, 10.0),
                              hidden_sizes=(6, 6), seed=seed)
            p_net = init_params((1, 6, 6, 4), seed, 20.0)
            _, grads = grad_total(p_net, patient, initial, 1.0, cfg)
            flat = np.concatenate([np.concatenate([gw.ravel(), gb])
                                   for gw, gb in grads])
            fd = fd_gradient(p_net,
                             lambda q: loss_total(q, patient, initial, 1.0, cfg))
            worst = max(worst, max_rel_error(flat, fd))
        elapsed = time.perf_counter() - started
        report_line("gradient contract: reverse-mode vs central differences < 1e-4 "
                    "on 100 draws",
                    worst < 1e-4 and elapsed < 30.0,
                    f"worst={worst:.2e}, {elapsed:.1f}s")

    def test_surrogate_fit(self):
        started = time.perf_counter()
        p = reference_unit_patient()
        initial = np.array([10.0, 0.0, 0.0, 0.0])
        n_col = 256
        cfg = TrainConfig(t_batch=np.linspace(0.0, 72.0, n_col), tolerance=1e-9,
                          max_iters=20000, learning_rate=1e-3, seed=0)
        p_net, train_report = train(p, initial, 50.0, cfg)

        # held-out grid: collocation midpoints, which land exactly on the
        # half-step rk4 reference grid
        delta = 72.0 / (n_col - 1)
        ref = integrate(p, initial, 72.0, delta / 2.0)
        hold_idx = np.arange(1, ref.times.size, 2)
        hold_times = ref.times[hold_idx]
        rmse = float(np.sqrt(np.mean(
            (predict(p_net, hold_times) - ref.states[hold_idx]) ** 2)))
        peak_plasma = float(ref.states[:, 0].max())
        elapsed = time.perf_counter() - started
        report_line("surrogate fit: held-out RMSE < 5% of peak plasma "
                    "(256 collocation, <= 20k iters)",
                    rmse < 0.05 * peak_plasma and elapsed < 300.0,
                    f"rmse={rmse:.4f}, bound={0.05 * peak_plasma:.3f}, "
                    f"iters={train_report.iterations}, {elapsed:.0f}s")

    def test_policy_iteration_enumeration_oracle(self):
        started = time.perf_counter()
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(100):
            m = random_model(rng)
            pol = policy_iteration(m, 0.9)
            best = enumerate_optimal_values(m, 0.9)
            worst = max(worst, float(np.max(np.abs(pol.v - best))))
        elapsed = time.perf_counter() - started
        report_line("policy iteration: matches exhaustive policy enumeration "
                    "within 1e-6 on 100 random MDPs",
                    worst < 1e-6 and elapsed < 30.0,
                    f"worst={worst:.2e}, {elapsed:.1f}s")

    def test_q_learning_cross_check(self):
        m = chain_model()
        pi_pol = policy_iteration(m, 0.5)
        ql_pol = q_learning(m, 0.5, episodes=10000, alpha=0.1, epsilon=0.2, seed=5)
        ok = bool(np.array_equal(ql_pol.actions, pi_pol.actions))
        report_line("q-learning: recovers policy iteration's greedy policy on "
                    "the 2-state chain", ok)

    def test_end_to_end_dss(self):
        started = time.perf_counter()
        patient = reference_patient()
        spec = default_mdp_spec(seed=42)
        model = build_mdp(patient, spec)
        optimized = policy_iteration(model, spec)
        baseline = baseline_policy(model, spec)
        cohort = sample_cohort(default_cohort_spec(100, seed=7))
        ev_opt = evaluate_policy(optimized, cohort, spec)
        ev_base = evaluate_policy(baseline, cohort, spec)
        elapsed = time.perf_counter() - started
        better_return = ev_opt.mean_return > ev_base.mean_return
        fewer_violations = ev_opt.kidney_violation_rate <= ev_base.kidney_violation_rate
        report_line("end-to-end DSS: optimized policy beats max-dose baseline on "
                    "a 100-patient cohort",
                    better_return and fewer_violations and elapsed < 600.0,
                    f"return {ev_opt.mean_return:.1f} vs {ev_base.mean_return:.1f}, "
                    f"kidney violations {ev_opt.kidney_violation_rate:.2f} vs "
                    f"{ev_base.kidney_violation_rate:.2f}, {elapsed:.0f}s")

    def test_metrics_oracles(self):
        iqr_ok = iqr([1, 2, 3, 4]) == pytest.approx(1.5)
        cvar_ok = cvar(np.arange(1, 11), 0.2) == pytest.approx(1.5)
        scores = np.array([[0.9, 0.8], [0.9, 0.8], [0.9, 0.8], [0.1, 0.8]])
        lo, hi = exhaustive_stratified_bands(scores, 0.5)
        band = performance_profile(RunMatrix(scores=scores), [0.5],
                                   n_boot=1000, seed=7)
        bands_ok = band.lo[0] == lo and band.hi[0] == hi
        report_line("metrics oracles: IQR=1.5, CVaR=1.5, profile bands match "
                    "exhaustive enumeration",
                    bool(iqr_ok and cvar_ok and bands_ok),
                    f"bands=({band.lo[0]:.4f},{band.hi[0]:.4f}) vs ({lo:.4f},{hi:.4f})")

    def test_cli_determinism(self, tmp_path, patient):
        from conftest import small_spec

        (tmp_path / "p.json").write_text(json.dumps(patient.to_dict()))
        spec = small_spec(max_cycles=3)
        (tmp_path / "mdp.json").write_text(json.dumps(
            {"patient": patient.to_dict(), "mdp": spec.to_dict()}))
        cohort = CohortSpec(n=3, base=patient, variability={"k_ex": 1.2}, seed=3)
        (tmp_path / "cohort.json").write_text(json.dumps(cohort.to_dict()))
        (tmp_path / "train.json").write_text(json.dumps({
            "patient": patient.to_dict(), "initial": [2.0, 0, 0, 0],
            "total_dose": 10.0,
            "config": {"t_batch": np.linspace(0, 10, 16).tolist(),
                       "tolerance": 1e-9, "max_iters": 25, "seed": 7,
                       "hidden_sizes": [6, 6]}}))

        def run_all(tag: str) -> list:
            traj = tmp_path / f"traj-{tag}.csv"
            assert main(["simulate", "--patient", str(tmp_path / "p.json"),
                         "--t-end", "24", "--dt", "0.5", "--out", str(traj)]) == 0
            dose = tmp_path / f"dose-{tag}.json"
            assert main(["dose", "--traj", str(traj), "--patient",
                         str(tmp_path / "p.json"), "--tail", "mono-exp",
                         "--out", str(dose)]) == 0
            ckpt = tmp_path / f"ckpt-{tag}.json"
            hist = tmp_path / f"hist-{tag}.csv"
            assert main(["train-surrogate", "--config", str(tmp_path / "train.json"),
                         "--out", str(ckpt), "--report", str(hist)]) == 0
            pol = tmp_path / f"policy-{tag}.json"
            assert main(["solve-policy", "--config", str(tmp_path / "mdp.json"),
                         "--out", str(pol)]) == 0
            ev = tmp_path / f"eval-{tag}.json"
            eps = tmp_path / f"eps-{tag}.csv"
            assert main(["evaluate", "--policy", str(pol),
                         "--cohort", str(tmp_path / "cohort.json"),
                         "--config", str(tmp_path / "mdp.json"),
                         "--out", str(ev), "--episodes", str(eps)]) == 0
            # checksums recorded in each command's run manifest, in command order
            sums = []
            for primary in (traj, dose, ckpt, pol, ev):
                manifest = json.loads(
                    (tmp_path / f"{primary.name}.manifest.json").read_text())
                sums.extend(manifest["outputs"][k]
                            for k in sorted(manifest["outputs"]))
            return sums

        first = run_all("a")
        second = run_all("b")
        report_line("cli determinism: rerun with identical config+seed gives "
                    "byte-identical outputs (manifest checksums equal)",
                    first == second, f"{len(first)} checksums compared")
