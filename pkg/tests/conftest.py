import numpy as np
import pytest

from theratwin.dss import MdpSpec, RewardConfig
from theratwin.pbpk import PatientParams
from theratwin.reference import default_s_factors, reference_patient


@pytest.fixture
def patient():
    return reference_patient()


@pytest.fixture(scope="session")
def trained_reference_net():
    """Acceptance-quality surrogate on the unit-volume reference system.

    Trained once per test session; returns (net, administered activity).
    """
    from theratwin.reference import reference_unit_patient
    from theratwin.surrogate import TrainConfig, train

    activity = 10.0
    cfg = TrainConfig(t_batch=np.linspace(0.0, 72.0, 256), tolerance=1e-9,
                      max_iters=20000, learning_rate=1e-3, seed=0)
    net, _ = train(reference_unit_patient(),
                   np.array([activity, 0.0, 0.0, 0.0]), activity, cfg)
    return net, activity


def small_spec(**over) -> MdpSpec:
    """Tiny dosing MDP used across the DSS, service, and CLI tests."""
    kw = dict(
        tumor_dose_bins=np.array([0.0, 10.0, 20.0, 40.0]),
        kidney_dose_bins=np.array([0.0, 5.0, 10.0, 20.0]),
        liver_dose_bins=np.array([0.0, 10.0, 20.0]),
        max_cycles=2,
        actions=np.array([0.0, 1850.0, 3700.0]),
        cycle_interval=336.0,
        gamma=0.9,
        reward=RewardConfig(kidney_limit=8.0, liver_limit=15.0, tumor_target=15.0),
        rollouts_per_sa=1,
        seed=0,
        variability={},
        rollout_dt=1.0,
    )
    kw.update(over)
    return MdpSpec(**kw)


def make_patient(**overrides) -> PatientParams:
    """Reference patient with selected fields replaced."""
    base = dict(
        k_p_l=0.08, k_l_p=0.04, k_p_k=0.05, k_k_p=0.02, k_met=0.02,
        k_ex=0.22, k_p_t=0.02, k_t_p=0.035, lambda_phys=0.00434,
        volumes=np.array([5.0, 1.8, 0.31, 0.1]),
        masses=np.array([1.8, 0.31, 0.1]),
        s_factors=default_s_factors(),
    )
    base.update(overrides)
    return PatientParams(**base)


def unit_patient(**overrides) -> PatientParams:
    """All rates zero, unit volumes/masses/s-factors; the no-flux baseline."""
    base = dict(
        k_p_l=0.0, k_l_p=0.0, k_p_k=0.0, k_k_p=0.0, k_met=0.0,
        k_ex=0.0, k_p_t=0.0, k_t_p=0.0, lambda_phys=0.0,
        volumes=np.ones(4),
        masses=np.ones(3),
        s_factors=np.ones((3, 4)),
    )
    base.update(overrides)
    return PatientParams(**base)
