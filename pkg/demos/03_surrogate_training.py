"""Train the physics-informed surrogate and compare it to the integrator.

The network never sees solution values: it minimizes the ODE residual at
collocation points plus the initial-condition mismatch. A reduced
iteration budget keeps this demo quick; the acceptance suite runs the full
20k-iteration fit.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from theratwin.pbpk import COMPARTMENTS, integrate
from theratwin.reference import reference_unit_patient
from theratwin.surrogate import TrainConfig, predict, train

patient = reference_unit_patient()
initial = np.array([10.0, 0.0, 0.0, 0.0])

cfg = TrainConfig(
    t_batch=np.linspace(0.0, 72.0, 256),
    tolerance=1e-6,
    max_iters=12000,
    learning_rate=2e-3,
    seed=0,
)
params, report = train(patient, initial, total_dose=10.0, cfg=cfg)
print(f"trained {report.iterations} iterations, final loss "
      f"{report.final_loss:.3e}, converged={report.converged}")

reference = integrate(patient, initial, 72.0, 0.1)
surrogate_curve = predict(params, reference.times)
rmse = float(np.sqrt(np.mean((surrogate_curve - reference.states) ** 2)))
print(f"RMSE vs rk4 reference: {rmse:.4f} MBq/L "
      f"({rmse / reference.states[:, 0].max():.2%} of peak plasma)")

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
for i, name in enumerate(COMPARTMENTS):
    line, = ax1.plot(reference.times, reference.states[:, i], label=f"{name} (rk4)")
    ax1.plot(reference.times, surrogate_curve[:, i], "--", color=line.get_color())
ax1.set_xlabel("time (h)")
ax1.set_ylabel("concentration (MBq/L)")
ax1.set_title("integrator (solid) vs surrogate (dashed)")
ax1.legend(fontsize=8)

ax2.semilogy(np.arange(1, report.iterations + 1), report.loss_history)
ax2.set_xlabel("iteration")
ax2.set_ylabel("total loss")
ax2.set_title("training loss")
fig.tight_layout()
fig.savefig("surrogate_fit.png", dpi=120)
print("wrote surrogate_fit.png")
