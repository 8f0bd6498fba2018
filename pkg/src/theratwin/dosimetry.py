"""Organ-level dosimetry via the S-value formalism.

Absorbed dose to a target organ is the time-integrated activity of each
source compartment weighted by the corresponding S-factor, summed over
sources. Time-integrated activity comes from trapezoidal quadrature of the
activity curves, optionally extended past the last sample with a fitted
mono-exponential tail.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, TailFitError
from .pbpk import COMPARTMENTS, N_COMPARTMENTS, TARGET_ORGANS, PatientParams, Trajectory

# Fraction of trailing grid points used for the mono-exponential tail fit.
TAIL_FRACTION = 0.2


@dataclass(frozen=True)
class DoseReport:
    """Per-source time-integrated activity and per-target absorbed dose.

    ``tia`` is MBq*hour ordered like COMPARTMENTS; ``dose`` is Gy ordered
    like TARGET_ORGANS. ``cumulative`` distinguishes running totals across
    treatment cycles from single-cycle reports.
    """

    tia: np.ndarray
    dose: np.ndarray
    cumulative: bool = False

    def __post_init__(self):
        tia = np.array(self.tia, dtype=float)
        dose = np.array(self.dose, dtype=float)
        if tia.shape != (N_COMPARTMENTS,):
            raise DomainError(f"tia must have shape (4,), got {tia.shape}", path="tia")
        if dose.shape != (len(TARGET_ORGANS),):
            raise DomainError(f"dose must have shape (3,), got {dose.shape}", path="dose")
        if not np.all(np.isfinite(tia)) or np.any(tia < 0):
            raise DomainError("tia must be finite and >= 0", path="tia")
        if not np.all(np.isfinite(dose)) or np.any(dose < 0):
            raise DomainError("dose must be finite and >= 0", path="dose")
        tia.setflags(write=False)
        dose.setflags(write=False)
        object.__setattr__(self, "tia", tia)
        object.__setattr__(self, "dose", dose)

    def to_dict(self) -> dict:
        return {
            "tia_mbq_h": dict(zip(COMPARTMENTS, self.tia.tolist())),
            "dose_gy": dict(zip(TARGET_ORGANS, self.dose.tolist())),
            "cumulative": self.cumulative,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DoseReport":
        try:
            tia = [float(d["tia_mbq_h"][c]) for c in COMPARTMENTS]
            dose = [float(d["dose_gy"][t]) for t in TARGET_ORGANS]
            return cls(tia=np.array(tia), dose=np.array(dose),
                       cumulative=bool(d.get("cumulative", False)))
        except KeyError as e:
            raise DomainError(f"missing dose-report field {e.args[0]!r}", path=str(e.args[0]))

    @classmethod
    def zero(cls, cumulative: bool = False) -> "DoseReport":
        return cls(tia=np.zeros(N_COMPARTMENTS), dose=np.zeros(len(TARGET_ORGANS)),
                   cumulative=cumulative)

    def __add__(self, other: "DoseReport") -> "DoseReport":
        return DoseReport(tia=self.tia + other.tia, dose=self.dose + other.dose,
                          cumulative=True)


def _mono_exp_tail(times: np.ndarray, activity: np.ndarray) -> float:
    """Analytic integral over (t_last, inf) of a log-linear fit to the tail."""
    n_tail = max(2, int(np.ceil(TAIL_FRACTION * times.size)))
    t = times[-n_tail:]
    a = activity[-n_tail:]
    if np.all(a == 0.0):
        return 0.0
    pos = a > 0.0
    if pos.sum() < 2:
        raise TailFitError(
            f"tail fit needs at least 2 positive samples, got {int(pos.sum())}")
    slope, intercept = np.polyfit(t[pos], np.log(a[pos]), 1)
    k = -slope
    if k <= 0:
        raise TailFitError(f"tail is not decaying (fitted rate {k:.3e} 1/h)")
    a_last = np.exp(intercept + slope * times[-1])
    return float(a_last / k)


def time_integrated_activity(traj: Trajectory, params: PatientParams,
                             tail: str = "none") -> np.ndarray:
    """Time-integrated activity (MBq*hour) per source compartment.

    Activity of compartment i is C_i(t) * V_i. With ``tail="mono_exp"`` a
    mono-exponential is fit to the last 20% of grid points per compartment
    and its integral to infinity is added; the fitted decay rate must be
    positive.
    """
    if tail not in ("none", "mono_exp"):
        raise DomainError(f"unknown tail mode {tail!r}", path="tail")
    activities = traj.states * params.volumes  # (n, 4), MBq
    tia = np.trapezoid(activities, traj.times, axis=0)
    if tail == "mono_exp":
        tia = tia + np.array([
            _mono_exp_tail(traj.times, activities[:, i]) for i in range(N_COMPARTMENTS)
        ])
    return tia


def absorbed_dose(tia: np.ndarray, params: PatientParams,
                  cumulative: bool = False) -> DoseReport:
    """Absorbed dose per target: D(T) = sum_S TIA(S) * S(T<-S)."""
    tia = np.asarray(tia, dtype=float)
    if tia.shape != (N_COMPARTMENTS,):
        raise DomainError(f"tia must have shape (4,), got {tia.shape}", path="tia")
    if not np.all(np.isfinite(tia)) or np.any(tia < 0):
        raise DomainError("tia must be finite and >= 0", path="tia")
    dose = params.s_factors @ tia
    return DoseReport(tia=tia, dose=dose, cumulative=cumulative)


def s_factor_from_energetics(a: float, phi: float, mass: float) -> float:
    """S-value a*phi/mass from emitted energy, absorbed fraction and mass.

    ``a`` is the total energy emitted by the source per unit time-integrated
    activity (J per MBq*hour); with mass in kg the result is Gy/(MBq*hour).
    """
    if not (0.0 <= phi <= 1.0):
        raise DomainError(f"phi must be in [0, 1], got {phi}", path="phi")
    if not mass > 0:
        raise DomainError(f"mass must be > 0, got {mass}", path="mass")
    if not a >= 0:
        raise DomainError(f"a must be >= 0, got {a}", path="a")
    return a * phi / mass


def dose_from_trajectory(traj: Trajectory, params: PatientParams,
                         tail: str = "none", cumulative: bool = False) -> DoseReport:
    """Convenience pipeline: trajectory -> TIA -> absorbed dose."""
    return absorbed_dose(time_integrated_activity(traj, params, tail=tail),
                         params, cumulative=cumulative)
