"""Drive the what-if HTTP service through a full treatment course.

Solves a compact dosing problem, loads the optimized policy into an
in-process service, and then plays a clinician's session: at each cycle,
probe every candidate activity through POST /whatif, follow the policy's
recommendation, and commit it. This is the same request/response loop the
browser frontend uses.
"""

import numpy as np
from fastapi.testclient import TestClient

from theratwin.dss import MdpSpec, RewardConfig, build_mdp, policy_iteration
from theratwin.reference import reference_patient
from theratwin.service import PolicyBundle, ServiceState, create_app

patient = reference_patient()
# per-cycle variability with several rollouts per pair makes the solved
# policy risk-aware near the organ limits
spec = MdpSpec(
    tumor_dose_bins=np.linspace(0.0, 120.0, 11),
    kidney_dose_bins=np.linspace(0.0, 30.0, 9),
    liver_dose_bins=np.linspace(0.0, 36.0, 7),
    max_cycles=6,
    actions=np.array([0.0, 3700.0, 7400.0]),
    cycle_interval=8 * 7 * 24.0,
    gamma=0.95,
    reward=RewardConfig(),
    rollouts_per_sa=8,
    seed=0,
    variability={"k_p_k": 1.2, "k_ex": 1.2, "k_p_t": 1.2, "k_t_p": 1.2,
                 "k_p_l": 1.2, "k_l_p": 1.2},
    rollout_dt=1.0,
)
print("solving the dosing problem (8 rollouts per state-action pair) ...")
policy = policy_iteration(build_mdp(patient, spec), spec)

state = ServiceState()
state.load_bundle(PolicyBundle(policy=policy, spec=spec, patient=patient))
client = TestClient(create_app(state))

cfg = client.get("/config").json()
print(f"service ready: actions {cfg['actions_mbq']} MBq, "
      f"kidney limit {cfg['reward']['kidney_limit']} Gy, "
      f"tumor target {cfg['reward']['tumor_target']} Gy\n")

cumulative = {
    "tia_mbq_h": {c: 0.0 for c in ("plasma", "liver", "kidney", "tumor")},
    "dose_gy": {o: 0.0 for o in ("liver", "kidney", "tumor")},
    "cumulative": True,
}
for cycle in range(spec.max_cycles):
    probes = {}
    recommendation = None
    for candidate in cfg["actions_mbq"]:
        resp = client.post("/whatif", json={
            "patient": patient.to_dict(),
            "cumulative": cumulative,
            "cycle": cycle,
            "candidate_activity": candidate,
            "horizon_cycles": spec.max_cycles - cycle,
        })
        resp.raise_for_status()
        probes[candidate] = resp.json()
        recommendation = probes[candidate]["recommendation"]

    chosen = recommendation["action_mbq"]
    outcome = probes[chosen]
    dose = outcome["cumulative"]["dose_gy"]
    q_text = ", ".join(f"{a:.0f}:{q:.1f}" for a, q in
                       zip(cfg["actions_mbq"], recommendation["q_values"]))
    print(f"cycle {cycle}: policy says {chosen:.0f} MBq  (Q {q_text})")
    print(f"  committed -> tumor {dose['tumor']:.1f} Gy, "
          f"kidney {dose['kidney']:.1f} Gy, liver {dose['liver']:.1f} Gy")
    cumulative = outcome["cumulative"]

final = cumulative["dose_gy"]
print("\ncourse complete:")
print(f"  tumor {final['tumor']:.1f} Gy "
      f"(target {cfg['reward']['tumor_target']} Gy "
      f"{'reached' if final['tumor'] >= cfg['reward']['tumor_target'] else 'missed'})")
print(f"  kidney {final['kidney']:.1f} Gy "
      f"(limit {cfg['reward']['kidney_limit']} Gy "
      f"{'respected' if final['kidney'] <= cfg['reward']['kidney_limit'] else 'exceeded'})")
