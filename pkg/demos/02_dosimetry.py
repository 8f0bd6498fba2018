"""Organ dose bookkeeping for one treatment cycle.

Integrates the kinetics, accumulates time-integrated activity per source
compartment (with and without the mono-exponential tail), and applies the
S-factor matrix to get absorbed doses.
"""

import numpy as np

from theratwin.dosimetry import absorbed_dose, time_integrated_activity
from theratwin.pbpk import COMPARTMENTS, TARGET_ORGANS, integrate
from theratwin.reference import reference_patient

patient = reference_patient()
initial = np.array([7400.0 / patient.volumes[0], 0.0, 0.0, 0.0])
traj = integrate(patient, initial, t_end=336.0, dt=0.5)

tia_plain = time_integrated_activity(traj, patient, tail="none")
tia_tailed = time_integrated_activity(traj, patient, tail="mono_exp")

print("time-integrated activity (MBq*h) over 336 h:")
print(f"  {'source':<8} {'trapezoid':>12} {'with tail':>12} {'tail share':>11}")
for i, name in enumerate(COMPARTMENTS):
    share = 1.0 - tia_plain[i] / tia_tailed[i]
    print(f"  {name:<8} {tia_plain[i]:12.1f} {tia_tailed[i]:12.1f} {share:10.2%}")

report = absorbed_dose(tia_tailed, patient)
print("\nabsorbed dose per target organ:")
for i, organ in enumerate(TARGET_ORGANS):
    print(f"  {organ:<7} {report.dose[i]:6.2f} Gy")

print("\nS-factor matrix, Gy/(MBq*h), rows = targets, columns = sources:")
for organ, row in zip(TARGET_ORGANS, patient.s_factors):
    cells = " ".join(f"{v:.3e}" for v in row)
    print(f"  {organ:<7} {cells}")
