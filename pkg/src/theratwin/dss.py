"""MDP-based decision support for multi-cycle dosing.

The decision state is (binned cumulative tumor dose, binned cumulative
kidney dose, binned cumulative liver dose, cycle index) plus one absorbing
terminal state. Transitions and expected rewards are estimated by Monte
Carlo rollouts of the PBPK + dosimetry simulator over one treatment cycle,
with per-(state, action) sub-seeds so parallel and serial builds agree
bitwise. Solvers are tabular: policy iteration with an exact-evaluation
inner loop, and epsilon-greedy Q-learning as a model-free cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .dosimetry import DoseReport
from .errors import DomainError, IntegrationError
from .pbpk import (
    N_COMPARTMENTS,
    RATE_FIELDS,
    TARGET_ORGANS,
    NEGATIVE_CLAMP,
    PatientParams,
)

LIVER, KIDNEY, TUMOR = 0, 1, 2  # indices into TARGET_ORGANS-ordered vectors

MAX_EVAL_SWEEPS = 1_000_000
MAX_IMPROVEMENT_SWEEPS = 10_000


@dataclass(frozen=True)
class RewardConfig:
    """Weights and limits for the per-cycle reward.

    Reward = w_tumor * dD_tumor - w_kidney * dD_kidney - w_liver * dD_liver,
    minus ``violation_penalty`` the first time any OAR limit is exceeded,
    plus ``completion_bonus`` on the terminal transition when the cumulative
    tumor dose has reached ``tumor_target``.
    """

    w_tumor: float = 1.0
    w_kidney: float = 1.0
    w_liver: float = 0.5
    kidney_limit: float = 23.0
    liver_limit: float = 30.0
    tumor_target: float = 100.0
    violation_penalty: float = 100.0
    completion_bonus: float = 50.0

    def __post_init__(self):
        for name in ("w_tumor", "w_kidney", "w_liver", "violation_penalty",
                     "completion_bonus"):
            if not getattr(self, name) >= 0:
                raise DomainError(f"{name} must be >= 0", path=name)
        for name in ("kidney_limit", "liver_limit", "tumor_target"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be > 0", path=name)

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in (
            "w_tumor", "w_kidney", "w_liver", "kidney_limit", "liver_limit",
            "tumor_target", "violation_penalty", "completion_bonus")}

    @classmethod
    def from_dict(cls, d: dict) -> "RewardConfig":
        return cls(**{k: float(v) for k, v in d.items()})


def _check_edges(edges, name: str) -> np.ndarray:
    e = np.asarray(edges, dtype=float)
    if e.ndim != 1 or e.size < 2:
        raise DomainError(f"{name} needs at least 2 edges", path=name)
    if e[0] != 0.0 or np.any(np.diff(e) <= 0):
        raise DomainError(f"{name} must be strictly increasing from 0", path=name)
    e.setflags(write=False)
    return e


@dataclass(frozen=True)
class MdpSpec:
    """Discretization, action set, and rollout configuration for the MDP.

    ``variability`` uses the same per-parameter log-normal spread convention
    as CohortSpec and models per-cycle patient fluctuation during transition
    estimation. ``rollout_dt`` is the fixed rk4 step (hours) used inside
    rollouts.
    """

    tumor_dose_bins: np.ndarray
    kidney_dose_bins: np.ndarray
    liver_dose_bins: np.ndarray
    max_cycles: int
    actions: np.ndarray
    cycle_interval: float
    gamma: float
    reward: RewardConfig
    rollouts_per_sa: int = 1
    seed: int = 0
    variability: dict = field(default_factory=dict)
    rollout_dt: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "tumor_dose_bins",
                           _check_edges(self.tumor_dose_bins, "tumor_dose_bins"))
        object.__setattr__(self, "kidney_dose_bins",
                           _check_edges(self.kidney_dose_bins, "kidney_dose_bins"))
        object.__setattr__(self, "liver_dose_bins",
                           _check_edges(self.liver_dose_bins, "liver_dose_bins"))
        actions = np.asarray(self.actions, dtype=float)
        if actions.size == 0 or np.any(actions < 0) or not np.all(np.isfinite(actions)):
            raise DomainError("actions must be non-empty with entries >= 0",
                              path="actions")
        actions.setflags(write=False)
        object.__setattr__(self, "actions", actions)
        if self.max_cycles < 1:
            raise DomainError(f"max_cycles must be >= 1, got {self.max_cycles}",
                              path="max_cycles")
        if self.rollouts_per_sa < 1:
            raise DomainError(f"rollouts_per_sa must be >= 1, got {self.rollouts_per_sa}",
                              path="rollouts_per_sa")
        if not (0.0 <= self.gamma <= 1.0):
            raise DomainError(f"gamma must be in [0, 1], got {self.gamma}", path="gamma")
        if not self.cycle_interval > 0:
            raise DomainError("cycle_interval must be > 0", path="cycle_interval")
        if not self.rollout_dt > 0:
            raise DomainError("rollout_dt must be > 0", path="rollout_dt")
        for key, spread in self.variability.items():
            if key not in set(RATE_FIELDS) | {"volumes"}:
                raise DomainError(f"unknown variability key {key!r}",
                                  path=f"variability.{key}")
            if not (math.isfinite(spread) and spread >= 1.0):
                raise DomainError(f"spread for {key!r} must be >= 1",
                                  path=f"variability.{key}")

    # -- state-space helpers ------------------------------------------------

    @property
    def n_bins(self) -> tuple:
        return (self.tumor_dose_bins.size - 1, self.kidney_dose_bins.size - 1,
                self.liver_dose_bins.size - 1)

    @property
    def n_actions(self) -> int:
        return int(self.actions.size)

    @property
    def n_decision_states(self) -> int:
        nt, nk, nl = self.n_bins
        return nt * nk * nl * self.max_cycles

    @property
    def n_states(self) -> int:
        return self.n_decision_states + 1

    @property
    def terminal_state(self) -> int:
        return self.n_decision_states

    def state_index(self, t_bin: int, k_bin: int, l_bin: int, cycle: int) -> int:
        nt, nk, nl = self.n_bins
        return ((t_bin * nk + k_bin) * nl + l_bin) * self.max_cycles + cycle

    def state_tuple(self, s: int) -> tuple:
        nt, nk, nl = self.n_bins
        s, cycle = divmod(s, self.max_cycles)
        s, l_bin = divmod(s, nl)
        t_bin, k_bin = divmod(s, nk)
        return t_bin, k_bin, l_bin, cycle

    def dose_bins(self, doses: np.ndarray):
        """Bin a (liver, kidney, tumor) cumulative dose vector.

        Returns ((t_bin, k_bin, l_bin), clamped) where ``clamped`` reports a
        dose at or beyond the top edge of its axis.
        """
        doses = np.asarray(doses, dtype=float)
        axes = (self.tumor_dose_bins, self.kidney_dose_bins, self.liver_dose_bins)
        values = (doses[TUMOR], doses[KIDNEY], doses[LIVER])
        bins, clamped = [], False
        for edges, v in zip(axes, values):
            idx = int(np.searchsorted(edges, v, side="right")) - 1
            if idx > edges.size - 2:
                idx = edges.size - 2
                clamped = True
            bins.append(max(idx, 0))
        return tuple(bins), clamped

    def dose_bins_batch(self, doses: np.ndarray):
        """Vectorized ``dose_bins`` over a (B, 3) dose matrix.

        Returns ((B,) t_bins, (B,) k_bins, (B,) l_bins) with top-edge clamping.
        """
        out = []
        for edges, col in ((self.tumor_dose_bins, TUMOR),
                           (self.kidney_dose_bins, KIDNEY),
                           (self.liver_dose_bins, LIVER)):
            idx = np.searchsorted(edges, doses[:, col], side="right") - 1
            out.append(np.clip(idx, 0, edges.size - 2))
        return tuple(out)

    def state_index_batch(self, t_bins, k_bins, l_bins, cycle: int) -> np.ndarray:
        nt, nk, nl = self.n_bins
        return ((t_bins * nk + k_bins) * nl + l_bins) * self.max_cycles + cycle

    def representative_doses(self, t_bin: int, k_bin: int, l_bin: int) -> np.ndarray:
        """Bin midpoints as the (liver, kidney, tumor) dose vector of a state.

        The midpoint bounds the representation error by half a bin width in
        either direction; a lower-edge convention systematically understates
        cumulative OAR doses and produces policies that overshoot the limits
        in closed-loop evaluation.
        """
        def mid(edges, b):
            return 0.5 * (edges[b] + edges[b + 1])

        return np.array([mid(self.liver_dose_bins, l_bin),
                         mid(self.kidney_dose_bins, k_bin),
                         mid(self.tumor_dose_bins, t_bin)])

    def to_dict(self) -> dict:
        return {
            "tumor_dose_bins": self.tumor_dose_bins.tolist(),
            "kidney_dose_bins": self.kidney_dose_bins.tolist(),
            "liver_dose_bins": self.liver_dose_bins.tolist(),
            "max_cycles": self.max_cycles,
            "actions": self.actions.tolist(),
            "cycle_interval": self.cycle_interval,
            "gamma": self.gamma,
            "reward": self.reward.to_dict(),
            "rollouts_per_sa": self.rollouts_per_sa,
            "seed": self.seed,
            "variability": dict(self.variability),
            "rollout_dt": self.rollout_dt,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MdpSpec":
        try:
            return cls(
                tumor_dose_bins=np.asarray(d["tumor_dose_bins"], dtype=float),
                kidney_dose_bins=np.asarray(d["kidney_dose_bins"], dtype=float),
                liver_dose_bins=np.asarray(d["liver_dose_bins"], dtype=float),
                max_cycles=int(d["max_cycles"]),
                actions=np.asarray(d["actions"], dtype=float),
                cycle_interval=float(d["cycle_interval"]),
                gamma=float(d["gamma"]),
                reward=RewardConfig.from_dict(d.get("reward", {})),
                rollouts_per_sa=int(d.get("rollouts_per_sa", 1)),
                seed=int(d.get("seed", 0)),
                variability={k: float(v) for k, v in d.get("variability", {}).items()},
                rollout_dt=float(d.get("rollout_dt", 0.5)),
            )
        except KeyError as e:
            raise DomainError(f"missing MDP field {e.args[0]!r}", path=str(e.args[0]))


# ---------------------------------------------------------------------------
# Reward
# ---------------------------------------------------------------------------

def _reward_batch(prev: np.ndarray, nxt: np.ndarray, cfg: RewardConfig,
                  terminal: bool) -> np.ndarray:
    """Vectorized reward; ``prev`` is (3,) or (B, 3) against (B, 3) next doses."""
    prev = np.atleast_2d(prev)
    delta = nxt - prev
    r = (cfg.w_tumor * delta[:, TUMOR] - cfg.w_kidney * delta[:, KIDNEY]
         - cfg.w_liver * delta[:, LIVER])
    prev_viol = ((prev[:, KIDNEY] > cfg.kidney_limit)
                 | (prev[:, LIVER] > cfg.liver_limit))
    next_viol = ((nxt[:, KIDNEY] > cfg.kidney_limit)
                 | (nxt[:, LIVER] > cfg.liver_limit))
    r = r - cfg.violation_penalty * (~prev_viol & next_viol)
    if terminal:
        r = r + cfg.completion_bonus * (nxt[:, TUMOR] >= cfg.tumor_target)
    return r


def reward(prev: DoseReport, nxt: DoseReport, cfg: RewardConfig,
           terminal: bool = False) -> float:
    """Reward for moving from cumulative doses ``prev`` to ``nxt``."""
    if np.any(nxt.dose < prev.dose):
        raise DomainError("dose regression: next doses must be >= prev doses",
                          path="next")
    return float(_reward_batch(prev.dose, nxt.dose[None, :], cfg, terminal)[0])


# ---------------------------------------------------------------------------
# One-cycle rollout engine (batched rk4 with streaming trapezoidal TIA)
# ---------------------------------------------------------------------------

def _batch_coefficients(rates: dict, volumes: np.ndarray) -> tuple:
    """Per-patient nonzero rate-matrix entries, each shaped (B,).

    Mirrors pbpk.rate_matrix entry by entry so a batch of size one matches
    the single-patient system exactly.
    """
    vp, vl, vk, vt = volumes[:, 0], volumes[:, 1], volumes[:, 2], volumes[:, 3]
    lam = rates["lambda_phys"]
    return (
        -(rates["k_p_l"] + rates["k_p_k"] + rates["k_p_t"] + lam),  # P<-P
        rates["k_l_p"] * vl / vp,                                   # P<-L
        rates["k_k_p"] * vk / vp,                                   # P<-K
        rates["k_t_p"] * vt / vp,                                   # P<-T
        rates["k_p_l"] * vp / vl,                                   # L<-P
        -(rates["k_l_p"] + rates["k_met"] + lam),                   # L<-L
        rates["k_p_k"] * vp / vk,                                   # K<-P
        -(rates["k_k_p"] + rates["k_ex"] + lam),                    # K<-K
        rates["k_p_t"] * vp / vt,                                   # T<-P
        -(rates["k_t_p"] + lam),                                    # T<-T
    )


def _batch_rhs(c: np.ndarray, co: tuple) -> np.ndarray:
    p, l, k, t = c[:, 0], c[:, 1], c[:, 2], c[:, 3]
    out = np.empty_like(c)
    out[:, 0] = co[0] * p + co[1] * l + co[2] * k + co[3] * t
    out[:, 1] = co[4] * p + co[5] * l
    out[:, 2] = co[6] * p + co[7] * k
    out[:, 3] = co[8] * p + co[9] * t
    return out


def simulate_cycle_batch(rates: dict, volumes: np.ndarray, s_factors: np.ndarray,
                         activities: np.ndarray, interval: float,
                         dt: float) -> tuple:
    """Simulate one cycle for a batch of patients.

    ``rates`` maps each rate-constant name to a (B,) array; ``volumes`` is
    (B, 4); ``s_factors`` is shared (3, 4) or per-patient (B, 3, 4);
    ``activities`` (B,) is the administered activity in MBq, deposited in
    plasma at t=0. Returns (dose (B, 3), tia (B, 4)) using rk4 steps of
    ``dt`` and a running trapezoidal integral of the activity curves.
    """
    b = activities.size
    c = np.zeros((b, N_COMPARTMENTS))
    c[:, 0] = activities / volumes[:, 0]
    co = _batch_coefficients(rates, volumes)
    n_steps = max(1, int(round(interval / dt)))
    h = interval / n_steps
    tia = np.zeros((b, N_COMPARTMENTS))
    act_prev = c * volumes
    for i in range(n_steps):
        k1 = _batch_rhs(c, co)
        k2 = _batch_rhs(c + 0.5 * h * k1, co)
        k3 = _batch_rhs(c + 0.5 * h * k2, co)
        k4 = _batch_rhs(c + h * k3, co)
        c = c + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        low = c.min(axis=1)
        if low.min() < NEGATIVE_CLAMP:
            bad = int(np.argmin(low))
            raise IntegrationError(
                f"rollout {bad}: concentration {low[bad]:.3e} below round-off clamp",
                time=(i + 1) * h)
        np.maximum(c, 0.0, out=c)
        act = c * volumes
        tia += (0.5 * h) * (act_prev + act)
        act_prev = act
    s = np.asarray(s_factors, dtype=float)
    if s.ndim == 2:
        s = s[None, :, :]
    # elementwise product + reduce keeps single- and batched-call results
    # bitwise identical
    dose = (s * tia[:, None, :]).sum(axis=2)
    return dose, tia


def simulate_cycle(patient: PatientParams, activity_mbq: float, interval: float,
                   dt: float = 0.5) -> DoseReport:
    """Per-cycle dose report for a single patient and administered activity."""
    rates = {name: np.array([getattr(patient, name)]) for name in RATE_FIELDS}
    dose, tia = simulate_cycle_batch(rates, patient.volumes[None, :],
                                     patient.s_factors,
                                     np.array([float(activity_mbq)]),
                                     interval, dt)
    return DoseReport(tia=tia[0], dose=dose[0], cumulative=False)


def surrogate_cycle_batch(net, trained_activity_mbq: float):
    """Rollout backend that replaces the integrator with a trained surrogate.

    Returns a callable matching the ``simulate_cycle_batch`` signature for
    use as ``build_mdp(..., cycle_sim=...)``. The network predicts the
    nominal kinetics for the activity it was trained on; other administered
    activities follow by linearity of the system. Per-rollout rate
    perturbations cannot be honored by a fixed network, so this backend is
    for zero-variability builds, and the cycle interval must stay within the
    surrogate's training horizon.
    """
    from .surrogate import predict

    if not trained_activity_mbq > 0:
        raise DomainError("trained_activity_mbq must be > 0",
                          path="trained_activity_mbq")

    def run(rates, volumes, s_factors, activities, interval, dt):
        if interval > net.t_scale * (1.0 + 1e-9):
            raise DomainError(
                f"cycle interval {interval} h exceeds the surrogate's training "
                f"horizon {net.t_scale} h", path="cycle_interval")
        n_steps = max(1, int(round(interval / dt)))
        times = np.linspace(0.0, interval, n_steps + 1)
        conc = predict(net, times)  # (N, 4) nominal concentration curves
        scale = (activities / trained_activity_mbq)[:, None, None]
        act_curves = scale * conc[None, :, :] * volumes[:, None, :]
        tia = np.trapezoid(act_curves, times, axis=1)
        s = np.asarray(s_factors, dtype=float)
        if s.ndim == 2:
            s = s[None, :, :]
        dose = (s * tia[:, None, :]).sum(axis=2)
        return dose, tia

    return run


# ---------------------------------------------------------------------------
# Model, construction, and solvers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MdpModel:
    """Tabular MDP: row-stochastic transitions and expected immediate rewards.

    ``transition`` is CSR with one row per (state, action) pair (row index
    s * n_actions + a); the last state is absorbing with zero reward.
    """

    n_states: int
    n_actions: int
    transition: sp.csr_matrix
    reward: np.ndarray

    def __post_init__(self):
        if self.transition.shape != (self.n_states * self.n_actions, self.n_states):
            raise DomainError("transition shape mismatch", path="transition")
        if self.reward.shape != (self.n_states, self.n_actions):
            raise DomainError("reward shape mismatch", path="reward")
        sums = np.asarray(self.transition.sum(axis=1)).ravel()
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise DomainError("transition rows must sum to 1", path="transition")
        t = self.terminal_state
        for a in range(self.n_actions):
            row = self.transition.getrow(t * self.n_actions + a)
            if row.nnz != 1 or row.indices[0] != t:
                raise DomainError("terminal state must be absorbing", path="transition")
        if np.any(self.reward[t] != 0.0):
            raise DomainError("terminal state must have zero reward", path="reward")

    @property
    def terminal_state(self) -> int:
        return self.n_states - 1

    @classmethod
    def from_dense(cls, p: np.ndarray, r: np.ndarray) -> "MdpModel":
        """Build from P[s, a, s'] and R[s, a] arrays (last state = terminal)."""
        p = np.asarray(p, dtype=float)
        n_s, n_a = p.shape[0], p.shape[1]
        return cls(n_states=n_s, n_actions=n_a,
                   transition=sp.csr_matrix(p.reshape(n_s * n_a, n_s)),
                   reward=np.asarray(r, dtype=float))

    def transition_row(self, s: int, a: int) -> np.ndarray:
        return np.asarray(self.transition.getrow(s * self.n_actions + a).todense()).ravel()


def _draw_rollout_patients(rng: np.random.Generator, base: PatientParams,
                           variability: dict, n: int) -> tuple:
    """Log-normal per-cycle perturbations of rates and volumes, shaped (n,)."""
    rates = {}
    for name in RATE_FIELDS:
        sigma = math.log(variability.get(name, 1.0))
        rates[name] = getattr(base, name) * np.exp(sigma * rng.standard_normal(n))
    sigma_v = math.log(variability.get("volumes", 1.0))
    volumes = base.volumes * np.exp(sigma_v * rng.standard_normal((n, N_COMPARTMENTS)))
    return rates, volumes


def build_mdp(base: PatientParams, spec: MdpSpec, cycle_sim=None) -> MdpModel:
    """Estimate transitions and rewards by one-cycle Monte Carlo rollouts.

    For every non-terminal (s, a): draw ``rollouts_per_sa`` perturbed
    patients from a SeedSequence(spec.seed, spawn_key=(s, a)) stream,
    simulate one cycle with initial plasma activity ``a / V_p``, add the
    per-cycle dose to the cumulative doses represented by s, and bin the
    result at cycle+1 (or the terminal state after the last cycle).
    Withheld cycles (action 0) contribute an exact zero dose without
    simulation. Mass variability is ignored here: doses come from the fixed
    S-factor matrix.

    ``cycle_sim`` swaps the rollout backend: any callable with the
    ``simulate_cycle_batch`` signature, e.g. ``surrogate_cycle_batch(...)``
    to drive transitions from a trained neural surrogate instead of the
    mechanistic integrator.
    """
    if cycle_sim is None:
        cycle_sim = simulate_cycle_batch
    n_dec = spec.n_decision_states
    n_s = spec.n_states
    n_a = spec.n_actions
    n_r = spec.rollouts_per_sa
    terminal = spec.terminal_state

    # Draw every rollout patient first, batching all simulated cycles into
    # one vectorized integration.
    sim_rates = {name: [] for name in RATE_FIELDS}
    sim_volumes, sim_activities, sim_slices = [], [], {}
    offset = 0
    for s in range(n_dec):
        for ai, act in enumerate(spec.actions):
            rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(s, ai)))
            rates, volumes = _draw_rollout_patients(rng, base, spec.variability, n_r)
            if act == 0.0:
                continue
            for name in RATE_FIELDS:
                sim_rates[name].append(rates[name])
            sim_volumes.append(volumes)
            sim_activities.append(np.full(n_r, act))
            sim_slices[(s, ai)] = slice(offset, offset + n_r)
            offset += n_r

    if offset:
        rates_cat = {name: np.concatenate(v) for name, v in sim_rates.items()}
        volumes_cat = np.concatenate(sim_volumes, axis=0)
        activities_cat = np.concatenate(sim_activities)
        try:
            doses_cat, _ = cycle_sim(rates_cat, volumes_cat,
                                     base.s_factors, activities_cat,
                                     spec.cycle_interval, spec.rollout_dt)
        except IntegrationError as e:
            raise IntegrationError(f"rollout integration failed: {e}", time=e.time)
    else:
        doses_cat = np.zeros((0, len(TARGET_ORGANS)))

    rows, cols, vals = [], [], []
    reward_table = np.zeros((n_s, n_a))
    zero_delta = np.zeros((n_r, len(TARGET_ORGANS)))
    for s in range(n_dec):
        t_bin, k_bin, l_bin, cycle = spec.state_tuple(s)
        prev = spec.representative_doses(t_bin, k_bin, l_bin)
        is_last = cycle + 1 == spec.max_cycles
        for ai in range(n_a):
            delta = doses_cat[sim_slices[(s, ai)]] if (s, ai) in sim_slices else zero_delta
            nxt = prev + delta
            reward_table[s, ai] = float(
                np.mean(_reward_batch(prev, nxt, spec.reward, is_last)))
            row = s * n_a + ai
            if is_last:
                rows.append(row)
                cols.append(terminal)
                vals.append(1.0)
                continue
            next_states = spec.state_index_batch(*spec.dose_bins_batch(nxt), cycle + 1)
            rows.extend([row] * n_r)
            cols.extend(next_states.tolist())
            vals.extend([1.0 / n_r] * n_r)

    for ai in range(n_a):
        rows.append(terminal * n_a + ai)
        cols.append(terminal)
        vals.append(1.0)

    transition = sp.csr_matrix((vals, (rows, cols)),
                               shape=(n_s * n_a, n_s))
    transition.sum_duplicates()
    return MdpModel(n_states=n_s, n_actions=n_a, transition=transition,
                    reward=reward_table)


@dataclass(frozen=True)
class Policy:
    """Deterministic policy with its value function and action values."""

    actions: np.ndarray
    v: np.ndarray
    q: np.ndarray
    sweeps: int = 0

    def __post_init__(self):
        actions = np.asarray(self.actions, dtype=int)
        v = np.asarray(self.v, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if actions.ndim != 1 or v.shape != actions.shape or q.shape[0] != actions.size:
            raise DomainError("policy shape mismatch", path="actions")
        if np.any(actions < 0) or np.any(actions >= q.shape[1]):
            raise DomainError("action indices out of range", path="actions")
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "q", q)

    def to_dict(self) -> dict:
        return {"actions": self.actions.tolist(), "v": self.v.tolist(),
                "q": self.q.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Policy":
        try:
            return cls(actions=np.asarray(d["actions"], dtype=int),
                       v=np.asarray(d["v"], dtype=float),
                       q=np.asarray(d["q"], dtype=float))
        except KeyError as e:
            raise DomainError(f"missing policy field {e.args[0]!r}", path=str(e.args[0]))


def _gamma_of(spec) -> float:
    return spec.gamma if isinstance(spec, MdpSpec) else float(spec)


def policy_evaluation(m: MdpModel, pol, gamma: float, tol: float = 1e-10) -> np.ndarray:
    """Iterative Bellman evaluation of a fixed policy to max-norm ``tol``."""
    if not (0.0 <= gamma < 1.0):
        raise DomainError(f"gamma must be in [0, 1), got {gamma}", path="gamma")
    if not tol > 0:
        raise DomainError(f"tol must be > 0, got {tol}", path="tol")
    actions = np.asarray(getattr(pol, "actions", pol), dtype=int)
    rows = np.arange(m.n_states) * m.n_actions + actions
    p_pi = m.transition[rows]
    r_pi = m.reward[np.arange(m.n_states), actions]
    v = np.zeros(m.n_states)
    for _ in range(MAX_EVAL_SWEEPS):
        v_new = r_pi + gamma * (p_pi @ v)
        if np.max(np.abs(v_new - v)) < tol:
            return v_new
        v = v_new
    raise RuntimeError("policy evaluation did not converge")


def q_from_v(m: MdpModel, v: np.ndarray, gamma: float) -> np.ndarray:
    return m.reward + gamma * (m.transition @ v).reshape(m.n_states, m.n_actions)


def policy_iteration(m: MdpModel, spec, eval_tol: float = 1e-12) -> Policy:
    """Solve the MDP by policy iteration from the maximal-dosing baseline.

    ``spec`` is an MdpSpec (gamma and the action vector are read from it) or
    a bare discount factor, in which case the baseline is the last action
    index. Ties in the improvement step break toward the lower action index;
    iteration stops when the policy no longer changes.
    """
    gamma = _gamma_of(spec)
    if isinstance(spec, MdpSpec):
        baseline = int(np.argmax(spec.actions))
    else:
        baseline = m.n_actions - 1
    actions = np.full(m.n_states, baseline, dtype=int)
    sweeps = 0
    for _ in range(MAX_IMPROVEMENT_SWEEPS):
        sweeps += 1
        v = policy_evaluation(m, actions, gamma, eval_tol)
        q = q_from_v(m, v, gamma)
        greedy = np.argmax(q, axis=1)
        if np.array_equal(greedy, actions):
            return Policy(actions=actions, v=v, q=q, sweeps=sweeps)
        actions = greedy
    raise RuntimeError("policy iteration did not converge")


def baseline_policy(m: MdpModel, spec) -> Policy:
    """Fixed maximal-dosing policy (the regimen the MDP is benchmarked against)."""
    gamma = _gamma_of(spec)
    baseline = int(np.argmax(spec.actions)) if isinstance(spec, MdpSpec) else m.n_actions - 1
    actions = np.full(m.n_states, baseline, dtype=int)
    v = policy_evaluation(m, actions, gamma)
    return Policy(actions=actions, v=v, q=q_from_v(m, v, gamma))


def q_learning(m: MdpModel, spec, episodes: int, alpha: float, epsilon: float,
               *, seed=None, start_state: int = 0, max_steps: int = 1000) -> Policy:
    """Tabular Q-learning over episodes simulated from the model.

    Behavior is epsilon-greedy with ties toward the lower action index;
    episodes start at ``start_state`` and end at the terminal state or after
    ``max_steps``. Deterministic for a fixed seed (default: spec.seed).
    """
    if episodes < 1:
        raise DomainError(f"episodes must be >= 1, got {episodes}", path="episodes")
    if not (0.0 < alpha <= 1.0):
        raise DomainError(f"alpha must be in (0, 1], got {alpha}", path="alpha")
    if not (0.0 <= epsilon <= 1.0):
        raise DomainError(f"epsilon must be in [0, 1], got {epsilon}", path="epsilon")
    gamma = _gamma_of(spec)
    if seed is None:
        seed = spec.seed if isinstance(spec, MdpSpec) else 0
    rng = np.random.default_rng(seed)

    # Pre-extract transition rows for fast categorical sampling.
    rows = []
    for idx in range(m.n_states * m.n_actions):
        row = m.transition.getrow(idx)
        rows.append((row.indices, np.cumsum(row.data)))

    q = np.zeros((m.n_states, m.n_actions))
    terminal = m.terminal_state
    for _ in range(episodes):
        s = start_state
        for _ in range(max_steps):
            if s == terminal:
                break
            if rng.random() < epsilon:
                a = int(rng.integers(m.n_actions))
            else:
                a = int(np.argmax(q[s]))
            indices, cum = rows[s * m.n_actions + a]
            pick = min(np.searchsorted(cum, rng.random() * cum[-1], side="right"),
                       indices.size - 1)
            nxt = int(indices[pick])
            target = m.reward[s, a] + gamma * np.max(q[nxt])
            q[s, a] += alpha * (target - q[s, a])
            s = nxt
    return Policy(actions=np.argmax(q, axis=1), v=np.max(q, axis=1), q=q)


# ---------------------------------------------------------------------------
# Recommendation and cohort evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Recommendation:
    """Policy lookup for a cumulative dose state: action plus the full Q-row."""

    action_mbq: float
    action_index: int
    q_values: np.ndarray
    state: int
    clamped: bool

    def to_dict(self) -> dict:
        return {"action_mbq": self.action_mbq, "action_index": self.action_index,
                "q_values": self.q_values.tolist(), "state": self.state,
                "clamped": self.clamped}


def recommend(pol: Policy, cumulative: DoseReport, cycle: int,
              spec: MdpSpec) -> Recommendation:
    """Bin the cumulative doses and return the policy action with its Q-row.

    Doses past the top bin edge are clamped to the last bin, flagged via
    ``clamped``.
    """
    if not (0 <= cycle < spec.max_cycles):
        raise DomainError(f"cycle must be in [0, {spec.max_cycles}), got {cycle}",
                          path="cycle")
    bins, clamped = spec.dose_bins(cumulative.dose)
    s = spec.state_index(*bins, cycle)
    a = int(pol.actions[s])
    return Recommendation(action_mbq=float(spec.actions[a]), action_index=a,
                          q_values=pol.q[s].copy(), state=s, clamped=clamped)


@dataclass(frozen=True)
class Episode:
    """One simulated treatment course: (state, action, reward, next_state) steps."""

    steps: tuple
    gamma: float
    dose_log: tuple = ()

    @property
    def total_return(self) -> float:
        return float(sum(r * self.gamma ** i for i, (_, _, r, _) in enumerate(self.steps)))


@dataclass(frozen=True)
class CohortEvaluation:
    """Policy performance over a simulated patient cohort."""

    episodes: tuple
    kidney_limit: float
    liver_limit: float
    tumor_target: float

    @property
    def returns(self) -> np.ndarray:
        return np.array([e.total_return for e in self.episodes])

    @property
    def mean_return(self) -> float:
        return float(self.returns.mean())

    def _final_doses(self) -> np.ndarray:
        return np.array([e.dose_log[-1] for e in self.episodes])

    @property
    def kidney_violation_rate(self) -> float:
        return float(np.mean(self._final_doses()[:, KIDNEY] > self.kidney_limit))

    @property
    def liver_violation_rate(self) -> float:
        return float(np.mean(self._final_doses()[:, LIVER] > self.liver_limit))

    @property
    def tumor_target_rate(self) -> float:
        return float(np.mean(self._final_doses()[:, TUMOR] >= self.tumor_target))

    def to_dict(self) -> dict:
        return {
            "mean_return": self.mean_return,
            "returns": self.returns.tolist(),
            "kidney_violation_rate": self.kidney_violation_rate,
            "liver_violation_rate": self.liver_violation_rate,
            "tumor_target_rate": self.tumor_target_rate,
        }

    def episodes_csv(self, spec: MdpSpec) -> str:
        """CSV rows `cycle,state,action_mbq,reward,tumor_gy,kidney_gy,liver_gy`.

        Doses are cumulative after each committed cycle; patients appear in
        cohort order.
        """
        lines = ["cycle,state,action_mbq,reward,tumor_gy,kidney_gy,liver_gy"]
        for e in self.episodes:
            for cycle, ((s, a, r, _), doses) in enumerate(zip(e.steps, e.dose_log)):
                lines.append(
                    f"{cycle},{s},{spec.actions[a]:.17g},{r:.17g},"
                    f"{doses[TUMOR]:.17g},{doses[KIDNEY]:.17g},{doses[LIVER]:.17g}")
        return "\n".join(lines) + "\n"


def evaluate_policy(pol: Policy, patients, spec: MdpSpec) -> CohortEvaluation:
    """Deploy a policy against simulated patients, tracking true doses.

    States are binned only to query the policy; rewards and violation rates
    use the exact cumulative doses from the simulator. Each cycle is
    simulated in one batch across the cohort.
    """
    patients = list(patients)
    n = len(patients)
    all_rates = {name: np.array([getattr(p, name) for p in patients])
                 for name in RATE_FIELDS}
    all_volumes = np.stack([p.volumes for p in patients])
    all_s = np.stack([p.s_factors for p in patients])

    cum = np.zeros((n, len(TARGET_ORGANS)))
    steps = [[] for _ in range(n)]
    dose_log = [[] for _ in range(n)]
    for cycle in range(spec.max_cycles):
        states = spec.state_index_batch(*spec.dose_bins_batch(cum), cycle)
        action_idx = pol.actions[states]
        activities = spec.actions[action_idx]
        delta = np.zeros((n, len(TARGET_ORGANS)))
        active = activities > 0.0
        if active.any():
            rates = {k: v[active] for k, v in all_rates.items()}
            delta[active], _ = simulate_cycle_batch(
                rates, all_volumes[active], all_s[active], activities[active],
                spec.cycle_interval, spec.rollout_dt)
        nxt = cum + delta
        is_last = cycle + 1 == spec.max_cycles
        rewards = _reward_batch(cum, nxt, spec.reward, is_last)
        if is_last:
            next_states = np.full(n, spec.terminal_state)
        else:
            next_states = spec.state_index_batch(*spec.dose_bins_batch(nxt), cycle + 1)
        for i in range(n):
            steps[i].append((int(states[i]), int(action_idx[i]),
                             float(rewards[i]), int(next_states[i])))
            dose_log[i].append(nxt[i].copy())
        cum = nxt

    episodes = tuple(
        Episode(steps=tuple(steps[i]), gamma=spec.gamma, dose_log=tuple(dose_log[i]))
        for i in range(n))
    return CohortEvaluation(episodes=episodes,
                            kidney_limit=spec.reward.kidney_limit,
                            liver_limit=spec.reward.liver_limit,
                            tumor_target=spec.reward.tumor_target)
