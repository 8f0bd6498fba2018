"""Four-compartment PBPK simulator for radiolabeled drug kinetics.

Compartments are plasma, liver, kidney, and tumor. Concentrations are
activity concentrations (MBq/L), so every compartment carries a physical
decay term in addition to first-order exchange, hepatic metabolism, and
renal excretion. Exchange terms are volume-scaled so that the transported
quantity (concentration times volume) is conserved; with unit volumes the
system reduces to the plain three-compartment transport equations plus the
tumor extension.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DomainError, IntegrationError

COMPARTMENTS = ("plasma", "liver", "kidney", "tumor")
TARGET_ORGANS = ("liver", "kidney", "tumor")
N_COMPARTMENTS = len(COMPARTMENTS)

RATE_FIELDS = (
    "k_p_l", "k_l_p", "k_p_k", "k_k_p",
    "k_met", "k_ex", "k_p_t", "k_t_p", "lambda_phys",
)

UNITS = {
    "rate_constants": "1/hour",
    "volumes": "liter",
    "masses": "kilogram",
    "s_factors": "Gy/(MBq*hour)",
    "concentrations": "MBq/liter",
}

# Concentrations this far below zero are treated as integration round-off
# and clamped; anything more negative is a solver failure. Fixed-step rk4
# keeps round-off at machine scale; the adaptive rk45 may excurse to its
# absolute tolerance once the solution decays to that magnitude.
NEGATIVE_CLAMP = -1e-12
RK45_ATOL = 1e-9
RK45_RTOL = 1e-7


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PatientParams:
    """Virtual-patient parameter set.

    Rate constants are 1/hour. ``volumes`` is ordered like COMPARTMENTS,
    ``masses`` like TARGET_ORGANS, and ``s_factors`` has one row per target
    organ and one column per source compartment (Gy per MBq*hour).
    """

    k_p_l: float
    k_l_p: float
    k_p_k: float
    k_k_p: float
    k_met: float
    k_ex: float
    k_p_t: float
    k_t_p: float
    lambda_phys: float
    volumes: np.ndarray
    masses: np.ndarray
    s_factors: np.ndarray

    def __post_init__(self):
        for name in RATE_FIELDS:
            v = float(getattr(self, name))
            if not math.isfinite(v) or v < 0:
                raise DomainError(f"{name} must be finite and >= 0, got {v}", path=name)
            object.__setattr__(self, name, v)
        volumes = _readonly(self.volumes)
        masses = _readonly(self.masses)
        s_factors = _readonly(self.s_factors)
        if volumes.shape != (N_COMPARTMENTS,):
            raise DomainError(f"volumes must have shape (4,), got {volumes.shape}", path="volumes")
        if masses.shape != (len(TARGET_ORGANS),):
            raise DomainError(f"masses must have shape (3,), got {masses.shape}", path="masses")
        if s_factors.shape != (len(TARGET_ORGANS), N_COMPARTMENTS):
            raise DomainError(
                f"s_factors must have shape (3, 4), got {s_factors.shape}", path="s_factors")
        if not np.all(np.isfinite(volumes)) or np.any(volumes <= 0):
            raise DomainError("volumes must be finite and > 0", path="volumes")
        if not np.all(np.isfinite(masses)) or np.any(masses <= 0):
            raise DomainError("masses must be finite and > 0", path="masses")
        if not np.all(np.isfinite(s_factors)) or np.any(s_factors < 0):
            raise DomainError("s_factors must be finite and >= 0", path="s_factors")
        object.__setattr__(self, "volumes", volumes)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "s_factors", s_factors)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PatientParams):
            return NotImplemented
        return (all(getattr(self, n) == getattr(other, n) for n in RATE_FIELDS)
                and np.array_equal(self.volumes, other.volumes)
                and np.array_equal(self.masses, other.masses)
                and np.array_equal(self.s_factors, other.s_factors))

    def rates(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in RATE_FIELDS}

    def to_dict(self) -> dict:
        return {
            **{name: getattr(self, name) for name in RATE_FIELDS},
            "volumes": dict(zip(COMPARTMENTS, self.volumes.tolist())),
            "masses": dict(zip(TARGET_ORGANS, self.masses.tolist())),
            "s_factors": {
                target: dict(zip(COMPARTMENTS, row))
                for target, row in zip(TARGET_ORGANS, self.s_factors.tolist())
            },
            "units": dict(UNITS),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PatientParams":
        try:
            rates = {name: float(d[name]) for name in RATE_FIELDS}
            volumes = [float(d["volumes"][c]) for c in COMPARTMENTS]
            masses = [float(d["masses"][t]) for t in TARGET_ORGANS]
            s_factors = [[float(d["s_factors"][t][c]) for c in COMPARTMENTS]
                         for t in TARGET_ORGANS]
        except KeyError as e:
            raise DomainError(f"missing patient field {e.args[0]!r}", path=str(e.args[0]))
        except (TypeError, ValueError) as e:
            raise DomainError(f"malformed patient parameters: {e}")
        return cls(**rates, volumes=np.array(volumes), masses=np.array(masses),
                   s_factors=np.array(s_factors))


def rate_matrix(params: PatientParams) -> np.ndarray:
    """Linear system matrix M with dC/dt = M @ C.

    Influx terms are scaled by V_source/V_destination so that the exchanged
    amount C*V is conserved for unequal compartment volumes.
    """
    vp, vl, vk, vt = params.volumes
    lam = params.lambda_phys
    m = np.zeros((4, 4))
    m[0, 0] = -(params.k_p_l + params.k_p_k + params.k_p_t + lam)
    m[0, 1] = params.k_l_p * vl / vp
    m[0, 2] = params.k_k_p * vk / vp
    m[0, 3] = params.k_t_p * vt / vp
    m[1, 0] = params.k_p_l * vp / vl
    m[1, 1] = -(params.k_l_p + params.k_met + lam)
    m[2, 0] = params.k_p_k * vp / vk
    m[2, 2] = -(params.k_k_p + params.k_ex + lam)
    m[3, 0] = params.k_p_t * vp / vt
    m[3, 3] = -(params.k_t_p + lam)
    return m


def validate_state(state: np.ndarray, *, name: str = "state") -> np.ndarray:
    state = np.asarray(state, dtype=float)
    if state.shape != (N_COMPARTMENTS,):
        raise DomainError(f"{name} must have shape (4,), got {state.shape}", path=name)
    if not np.all(np.isfinite(state)):
        raise DomainError(f"{name} contains non-finite entries", path=name)
    if np.any(state < 0):
        raise DomainError(f"{name} contains negative concentrations", path=name)
    return state


def derivative(state: np.ndarray, params: PatientParams) -> np.ndarray:
    """Concentration rates (MBq/L/h) for the four compartments."""
    state = validate_state(state)
    return rate_matrix(params) @ state


@dataclass(frozen=True)
class Trajectory:
    """Time grid (hours) plus per-compartment concentration curves.

    ``states`` has one row per time point, columns ordered like COMPARTMENTS.
    """

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        times = _readonly(self.times)
        states = _readonly(self.states)
        if times.ndim != 1 or states.shape != (times.size, N_COMPARTMENTS):
            raise DomainError("trajectory shape mismatch", path="states")
        if times.size == 0 or times[0] != 0.0:
            raise DomainError("times must start at 0", path="times")
        if np.any(np.diff(times) <= 0):
            raise DomainError("times must be strictly increasing", path="times")
        if not np.all(np.isfinite(states)) or np.any(states < 0):
            raise DomainError("concentrations must be finite and >= 0", path="states")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time_h", *COMPARTMENTS])
        for t, row in zip(self.times, self.states):
            w.writerow([f"{t:.17g}", *(f"{v:.17g}" for v in row)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Trajectory":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["time_h", *COMPARTMENTS]:
            raise DomainError("unexpected trajectory CSV header", path="header")
        data = np.array([[float(v) for v in row] for row in rows[1:]])
        return cls(times=data[:, 0], states=data[:, 1:])

    def to_dict(self) -> dict:
        return {
            "time_h": self.times.tolist(),
            **{c: self.states[:, i].tolist() for i, c in enumerate(COMPARTMENTS)},
        }


def _grid(t_end: float, dt: float) -> np.ndarray:
    if not (t_end > 0 and math.isfinite(t_end)):
        raise DomainError(f"t_end must be > 0, got {t_end}", path="t_end")
    if not (dt > 0 and math.isfinite(dt)):
        raise DomainError(f"dt must be > 0, got {dt}", path="dt")
    n_steps = max(1, int(round(t_end / dt)))
    return np.linspace(0.0, t_end, n_steps + 1)


def _check_negative(y: np.ndarray, t: float, clamp: float = NEGATIVE_CLAMP) -> np.ndarray:
    if y.min() < clamp:
        raise IntegrationError(
            f"concentration {y.min():.3e} fell below the round-off clamp", time=t)
    return np.maximum(y, 0.0)


def integrate(params: PatientParams, initial: np.ndarray, t_end: float,
              dt: float, method: str = "rk4") -> Trajectory:
    """Integrate the PBPK system on the uniform grid {0, dt, ..., t_end}.

    ``rk4`` is a fixed-step classical Runge-Kutta; ``rk45`` delegates to an
    adaptive Dormand-Prince solver (atol 1e-9, rtol 1e-7) evaluated on the
    same grid. t_end should be an integer multiple of dt; otherwise the step
    is adjusted to t_end / round(t_end / dt).
    """
    initial = validate_state(initial, name="initial")
    times = _grid(t_end, dt)
    m = rate_matrix(params)

    if method == "rk4":
        h = times[1] - times[0]
        states = np.empty((times.size, N_COMPARTMENTS))
        y = initial.copy()
        states[0] = y
        for i in range(times.size - 1):
            k1 = m @ y
            k2 = m @ (y + 0.5 * h * k1)
            k3 = m @ (y + 0.5 * h * k2)
            k4 = m @ (y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            y = _check_negative(y, times[i + 1])
            states[i + 1] = y
        return Trajectory(times=times, states=states)

    if method == "rk45":
        sol = solve_ivp(lambda t, y: m @ y, (0.0, t_end), initial,
                        method="RK45", t_eval=times, rtol=RK45_RTOL, atol=RK45_ATOL)
        if not sol.success:
            t_fail = float(sol.t[-1]) if sol.t.size else 0.0
            raise IntegrationError(f"rk45 failed: {sol.message}", time=t_fail)
        states = sol.y.T.copy()
        # the adaptive solver's accumulated error can slightly exceed atol
        for i in range(times.size):
            states[i] = _check_negative(states[i], times[i], clamp=-10 * RK45_ATOL)
        return Trajectory(times=times, states=states)

    raise DomainError(f"unknown method {method!r}", path="method")


@dataclass(frozen=True)
class CohortSpec:
    """Virtual cohort description: base patient plus log-normal variability.

    ``variability`` maps a parameter name (any rate-constant field, or
    "volumes"/"masses" for per-entry factors) to a spread factor >= 1. A
    spread of 1 means no variation; s_factors are held fixed.
    """

    n: int
    base: PatientParams
    variability: dict[str, float] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise DomainError(f"n must be >= 1, got {self.n}", path="n")
        allowed = set(RATE_FIELDS) | {"volumes", "masses"}
        for key, spread in self.variability.items():
            if key not in allowed:
                raise DomainError(f"unknown variability key {key!r}", path=f"variability.{key}")
            if not (math.isfinite(spread) and spread >= 1.0):
                raise DomainError(
                    f"spread for {key!r} must be >= 1, got {spread}",
                    path=f"variability.{key}")

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "base": self.base.to_dict(),
            "variability": dict(self.variability),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CohortSpec":
        try:
            return cls(
                n=int(d["n"]),
                base=PatientParams.from_dict(d["base"]),
                variability={k: float(v) for k, v in d.get("variability", {}).items()},
                seed=int(d.get("seed", 0)),
            )
        except KeyError as e:
            raise DomainError(f"missing cohort field {e.args[0]!r}", path=str(e.args[0]))


def _lognormal_factor(rng: np.random.Generator, spread: float, size=None) -> np.ndarray:
    # median 1 by construction; sigma = ln(spread) so spread 1 gives exactly 1
    sigma = math.log(spread)
    return np.exp(sigma * rng.standard_normal(size))


def sample_cohort(spec: CohortSpec) -> list[PatientParams]:
    """Draw ``spec.n`` patients around ``spec.base``; deterministic per seed."""
    rng = np.random.default_rng(spec.seed)
    cohort = []
    for _ in range(spec.n):
        rates = {}
        for name in RATE_FIELDS:
            spread = spec.variability.get(name, 1.0)
            rates[name] = getattr(spec.base, name) * float(_lognormal_factor(rng, spread))
        volumes = spec.base.volumes * _lognormal_factor(
            rng, spec.variability.get("volumes", 1.0), N_COMPARTMENTS)
        masses = spec.base.masses * _lognormal_factor(
            rng, spec.variability.get("masses", 1.0), len(TARGET_ORGANS))
        cohort.append(PatientParams(**rates, volumes=volumes, masses=masses,
                                    s_factors=spec.base.s_factors))
    return cohort
