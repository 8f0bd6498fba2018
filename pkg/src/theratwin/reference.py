"""Default virtual patient and decision-problem configuration.

These magnitudes are implementation choices for tests and demos, sized to
a Lu-177-like radionuclide: transport and clearance rates within
[0.01, 1] 1/h, a 6.65-day physical half-life, adult-scale compartment
volumes and organ masses, and S-factors built from the emitted-energy
formula with self-absorption dominating cross-organ terms.
"""

from __future__ import annotations

import numpy as np

from .dosimetry import s_factor_from_energetics
from .dss import MdpSpec, RewardConfig
from .pbpk import CohortSpec, PatientParams

# Energy emitted per unit time-integrated activity, J/(MBq*h): 3.6e9 decays
# times a ~134 keV mean emission.
ENERGY_PER_MBQ_H = 7.7e-5

# Lu-177-like physical decay, 1/h (6.65-day half-life).
LAMBDA_PHYS = 0.00434

DEFAULT_VOLUMES = (5.0, 1.8, 0.31, 0.1)   # plasma, liver, kidney, tumor (L)
DEFAULT_MASSES = (1.8, 0.31, 0.1)         # liver, kidney, tumor (kg)

# Absorbed fractions phi(target <- source): rows liver/kidney/tumor,
# columns plasma/liver/kidney/tumor. Self-absorption dominates; the small
# plasma terms stand in for blood-borne cross-fire.
DEFAULT_ABSORBED_FRACTIONS = (
    (0.02, 0.90, 0.0, 0.0),
    (0.01, 0.0, 0.90, 0.0),
    (0.005, 0.0, 0.0, 0.90),
)


def default_s_factors(masses=DEFAULT_MASSES,
                      fractions=DEFAULT_ABSORBED_FRACTIONS) -> np.ndarray:
    return np.array([
        [s_factor_from_energetics(ENERGY_PER_MBQ_H, phi, mass) for phi in row]
        for mass, row in zip(masses, fractions)
    ])


def reference_patient() -> PatientParams:
    """Nominal virtual patient used throughout tests and demos."""
    return PatientParams(
        k_p_l=0.08,
        k_l_p=0.04,
        k_p_k=0.05,
        k_k_p=0.02,
        k_met=0.02,
        k_ex=0.22,
        k_p_t=0.02,
        k_t_p=0.035,
        lambda_phys=LAMBDA_PHYS,
        volumes=np.array(DEFAULT_VOLUMES),
        masses=np.array(DEFAULT_MASSES),
        s_factors=default_s_factors(),
    )


def reference_unit_patient() -> PatientParams:
    """Reference rates on the unit-volume configuration.

    With all volume ratios equal to 1 the exchange terms act directly on
    concentrations; used as the surrogate-training reference because every
    compartment then shares the plasma concentration scale.
    """
    nominal = reference_patient()
    return PatientParams(
        **nominal.rates(),
        volumes=np.ones(4),
        masses=np.ones(3),
        s_factors=nominal.s_factors,
    )


def default_reward_config() -> RewardConfig:
    return RewardConfig()


def default_mdp_spec(seed: int = 0) -> MdpSpec:
    """Default decision problem: 6 cycles, 8-week interval, 3 activity levels."""
    return MdpSpec(
        tumor_dose_bins=np.linspace(0.0, 120.0, 11),
        kidney_dose_bins=np.linspace(0.0, 30.0, 9),
        liver_dose_bins=np.linspace(0.0, 36.0, 7),
        max_cycles=6,
        actions=np.array([0.0, 3700.0, 7400.0]),
        cycle_interval=8 * 7 * 24.0,
        gamma=0.95,
        reward=default_reward_config(),
        rollouts_per_sa=16,
        seed=seed,
        variability={"k_p_k": 1.2, "k_ex": 1.2, "k_p_t": 1.2, "k_t_p": 1.2,
                     "k_p_l": 1.2, "k_l_p": 1.2},
        rollout_dt=1.0,
    )


def default_cohort_spec(n: int, seed: int = 0) -> CohortSpec:
    """A cohort with moderate log-normal spread on transport and clearance."""
    return CohortSpec(
        n=n,
        base=reference_patient(),
        variability={"k_p_l": 1.3, "k_l_p": 1.3, "k_p_k": 1.3, "k_k_p": 1.3,
                     "k_met": 1.3, "k_ex": 1.3, "k_p_t": 1.3, "k_t_p": 1.3,
                     "volumes": 1.15},
        seed=seed,
    )
