"""Physics-informed neural surrogate of the PBPK dynamics.

A small dense network maps time (normalized by the training horizon) to the
four compartment concentrations. Hidden layers use tanh; the output passes
through softplus so predicted concentrations stay positive. Training
minimizes a weighted sum of the ODE-residual loss, an optional closed-system
mass-balance loss, and an initial-condition loss, using Adam on gradients
from the in-package reverse-mode tape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import autodiff as ad
from .errors import DomainError, GradientError, TrainingError
from .pbpk import N_COMPARTMENTS, PatientParams, rate_matrix

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

DEFAULT_HIDDEN = (32, 32)
DEFAULT_COLLOCATION = 256


@dataclass(frozen=True)
class SurrogateParams:
    """Network weights plus the fixed architecture description.

    ``weights[l]`` has shape (layer_sizes[l+1], layer_sizes[l]); biases are
    flat. ``t_scale`` is the horizon (hours) used to normalize the time
    input to [0, 1].
    """

    layer_sizes: tuple
    weights: tuple
    biases: tuple
    activation: str = "tanh"
    t_scale: float = 1.0

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or sizes[0] != 1 or sizes[-1] != N_COMPARTMENTS:
            raise DomainError(f"layer_sizes must run 1 -> ... -> 4, got {sizes}",
                              path="layer_sizes")
        if self.activation != "tanh":
            raise DomainError(f"unsupported activation {self.activation!r}",
                              path="activation")
        if not (self.t_scale > 0 and math.isfinite(self.t_scale)):
            raise DomainError(f"t_scale must be > 0, got {self.t_scale}", path="t_scale")
        weights = tuple(np.array(w, dtype=float) for w in self.weights)
        biases = tuple(np.array(b, dtype=float) for b in self.biases)
        if len(weights) != len(sizes) - 1 or len(biases) != len(sizes) - 1:
            raise DomainError("layer count mismatch", path="weights")
        for l, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (sizes[l + 1], sizes[l]) or b.shape != (sizes[l + 1],):
                raise DomainError(f"layer {l} shape mismatch", path=f"weights[{l}]")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise DomainError(f"layer {l} has non-finite entries", path=f"weights[{l}]")
        for a in weights + biases:
            a.setflags(write=False)
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "layers": [{"w": w.tolist(), "b": b.tolist()}
                       for w, b in zip(self.weights, self.biases)],
            "activation": self.activation,
            "t_scale": self.t_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SurrogateParams":
        try:
            return cls(
                layer_sizes=tuple(d["layer_sizes"]),
                weights=tuple(np.array(layer["w"]) for layer in d["layers"]),
                biases=tuple(np.array(layer["b"]) for layer in d["layers"]),
                activation=d.get("activation", "tanh"),
                t_scale=float(d.get("t_scale", 1.0)),
            )
        except KeyError as e:
            raise DomainError(f"missing checkpoint field {e.args[0]!r}", path=str(e.args[0]))


def init_params(layer_sizes, seed: int, t_scale: float) -> SurrogateParams:
    """Seeded uniform init in +-1/sqrt(fan_in) for every weight and bias."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = 1.0 / math.sqrt(n_in)
        weights.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
        biases.append(rng.uniform(-bound, bound, size=n_out))
    return SurrogateParams(layer_sizes=tuple(layer_sizes), weights=tuple(weights),
                           biases=tuple(biases), t_scale=t_scale)


# ---------------------------------------------------------------------------
# Plain-numpy evaluation (prediction and loss values)
# ---------------------------------------------------------------------------

def _forward_tangent(p: SurrogateParams, times: np.ndarray):
    """Network output and its analytic d/dt, both shaped (4, N)."""
    x = np.atleast_1d(np.asarray(times, dtype=float))[None, :] / p.t_scale
    dx = np.full_like(x, 1.0 / p.t_scale)
    h, dh = x, dx
    for w, b in zip(p.weights[:-1], p.biases[:-1]):
        a = w @ h + b[:, None]
        h = np.tanh(a)
        dh = (1.0 - h ** 2) * (w @ dh)
    w, b = p.weights[-1], p.biases[-1]
    a = w @ h + b[:, None]
    out = np.logaddexp(0.0, a)
    dout = expit(a) * (w @ dh)
    return out, dout


def forward(p: SurrogateParams, t: float) -> np.ndarray:
    """Predicted concentrations (MBq/L) at time t (hours)."""
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}", path="t")
    out, _ = _forward_tangent(p, np.array([t]))
    return out[:, 0]


def time_derivative(p: SurrogateParams, t: float) -> np.ndarray:
    """Analytic d/dt of the network output at time t (hours)."""
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}", path="t")
    _, dout = _forward_tangent(p, np.array([t]))
    return dout[:, 0]


def predict(p: SurrogateParams, times: np.ndarray) -> np.ndarray:
    """Predicted concentrations at many times, shaped (N, 4)."""
    out, _ = _forward_tangent(p, times)
    return out.T


def _check_t_batch(t_batch) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t_batch, dtype=float))
    if t.size == 0:
        raise DomainError("t_batch must be non-empty", path="t_batch")
    if not np.all(np.isfinite(t)) or np.any(t < 0):
        raise DomainError("t_batch must be finite and >= 0", path="t_batch")
    return t


def loss_ode(p: SurrogateParams, params: PatientParams, t_batch) -> float:
    """Mean squared ODE residual over the collocation points."""
    t = _check_t_batch(t_batch)
    out, dout = _forward_tangent(p, t)
    resid = dout - rate_matrix(params) @ out
    return float(np.sum(resid ** 2) / t.size)


def _phys_target(params: PatientParams, total_dose: float, t: np.ndarray) -> np.ndarray:
    return total_dose * np.exp(-params.lambda_phys * t)


def loss_phys(p: SurrogateParams, params: PatientParams, total_dose: float,
              t_batch) -> float:
    """Mean squared mass-balance violation against the decaying total dose.

    Only meaningful for closed-system configurations (k_met = k_ex = 0); the
    target is total_dose * exp(-lambda_phys * t).
    """
    if not total_dose > 0:
        raise DomainError(f"total_dose must be > 0, got {total_dose}", path="total_dose")
    t = _check_t_batch(t_batch)
    out, _ = _forward_tangent(p, t)
    imbalance = params.volumes @ out - _phys_target(params, total_dose, t)
    return float(np.sum(imbalance ** 2) / t.size)


def loss_ic(p: SurrogateParams, initial: np.ndarray) -> float:
    """Squared deviation of the prediction at t=0 from the initial state."""
    initial = np.asarray(initial, dtype=float)
    out, _ = _forward_tangent(p, np.array([0.0]))
    return float(np.sum((out[:, 0] - initial) ** 2))


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters.

    ``loss_weights`` is (w_ode, w_phys, w_ic). The mass-balance weight
    defaults to 0 because the balance constraint only holds for closed
    systems; enable it only when k_met = k_ex = 0.
    """

    t_batch: np.ndarray
    tolerance: float
    max_iters: int
    learning_rate: float = 1e-3
    loss_weights: tuple = (1.0, 0.0, 10.0)
    seed: int = 0
    hidden_sizes: tuple = DEFAULT_HIDDEN
    optimizer: str = "adam"

    def __post_init__(self):
        t = _check_t_batch(self.t_batch)
        t.setflags(write=False)
        object.__setattr__(self, "t_batch", t)
        if not self.tolerance > 0:
            raise DomainError(f"tolerance must be > 0, got {self.tolerance}",
                              path="tolerance")
        if self.max_iters < 1:
            raise DomainError(f"max_iters must be >= 1, got {self.max_iters}",
                              path="max_iters")
        w = tuple(float(x) for x in self.loss_weights)
        if len(w) != 3 or any(x < 0 for x in w) or not any(x > 0 for x in w):
            raise DomainError("loss_weights must be 3 non-negative values, not all zero",
                              path="loss_weights")
        object.__setattr__(self, "loss_weights", w)
        if not self.learning_rate > 0:
            raise DomainError(f"learning_rate must be > 0, got {self.learning_rate}",
                              path="learning_rate")
        if self.optimizer not in ("adam", "sgd"):
            raise DomainError(f"unknown optimizer {self.optimizer!r}", path="optimizer")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        if "t_batch" in d:
            t_batch = np.asarray(d["t_batch"], dtype=float)
        else:
            horizon = float(d.get("horizon_h", 72.0))
            n = int(d.get("n_collocation", DEFAULT_COLLOCATION))
            t_batch = np.linspace(0.0, horizon, n)
        weights = d.get("loss_weights", {})
        if isinstance(weights, dict):
            weights = (weights.get("w_ode", 1.0), weights.get("w_phys", 0.0),
                       weights.get("w_ic", 10.0))
        return cls(
            t_batch=t_batch,
            tolerance=float(d.get("tolerance", 1e-6)),
            max_iters=int(d.get("max_iters", 20000)),
            learning_rate=float(d.get("learning_rate", 1e-3)),
            loss_weights=tuple(weights),
            seed=int(d.get("seed", 0)),
            hidden_sizes=tuple(d.get("hidden_sizes", DEFAULT_HIDDEN)),
            optimizer=d.get("optimizer", "adam"),
        )


def loss_total(p: SurrogateParams, params: PatientParams, initial: np.ndarray,
               total_dose: float, cfg: TrainConfig) -> float:
    w_ode, w_phys, w_ic = cfg.loss_weights
    total = 0.0
    if w_ode > 0:
        total += w_ode * loss_ode(p, params, cfg.t_batch)
    if w_phys > 0:
        total += w_phys * loss_phys(p, params, total_dose, cfg.t_batch)
    if w_ic > 0:
        total += w_ic * loss_ic(p, initial)
    return total


@dataclass(frozen=True)
class TrainReport:
    """Outcome of one training run; loss_history has one entry per iteration."""

    final_loss: float
    iterations: int
    loss_history: np.ndarray
    converged: bool

    def history_csv(self) -> str:
        lines = ["iter,loss"]
        lines += [f"{i + 1},{v:.17g}" for i, v in enumerate(self.loss_history)]
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Autodiff graph and training
# ---------------------------------------------------------------------------

def _param_tensors(p: SurrogateParams):
    """Leaf tensors for every layer; biases are lifted to column shape."""
    return [(ad.Tensor(w), ad.Tensor(b[:, None]))
            for w, b in zip(p.weights, p.biases)]


def _graph_forward_tangent(layers, times: np.ndarray, t_scale: float):
    """Tape version of ``_forward_tangent`` over shared parameter leaves."""
    x = ad.Tensor(np.atleast_1d(times)[None, :] / t_scale)
    dx = ad.Tensor(np.full((1, len(np.atleast_1d(times))), 1.0 / t_scale))
    h, dh = x, dx
    for w, b in layers[:-1]:
        a = ad.add(ad.matmul(w, h), b)
        h = ad.tanh(a)
        dh = ad.mul(ad.sub(ad.Tensor(1.0), ad.square(h)), ad.matmul(w, dh))
    w, b = layers[-1]
    a = ad.add(ad.matmul(w, h), b)
    out = ad.softplus(a)
    dout = ad.mul(ad.sigmoid(a), ad.matmul(w, dh))
    return out, dout


def _graph_loss_total(layers, t_scale: float, params: PatientParams,
                      initial: np.ndarray, total_dose: float,
                      cfg: TrainConfig) -> ad.Tensor:
    w_ode, w_phys, w_ic = cfg.loss_weights
    t = cfg.t_batch
    terms = []
    if w_ode > 0 or w_phys > 0:
        out, dout = _graph_forward_tangent(layers, t, t_scale)
        if w_ode > 0:
            resid = ad.sub(dout, ad.matmul(ad.Tensor(rate_matrix(params)), out))
            terms.append(ad.scale(ad.tsum(ad.square(resid)), w_ode / t.size))
        if w_phys > 0:
            balance = ad.matmul(ad.Tensor(params.volumes[None, :]), out)
            target = ad.Tensor(_phys_target(params, total_dose, t)[None, :])
            terms.append(ad.scale(ad.tsum(ad.square(ad.sub(balance, target))),
                                  w_phys / t.size))
    if w_ic > 0:
        out0, _ = _graph_forward_tangent(layers, np.array([0.0]), t_scale)
        diff = ad.sub(out0, ad.Tensor(np.asarray(initial, dtype=float)[:, None]))
        terms.append(ad.scale(ad.tsum(ad.square(diff)), w_ic))
    total = terms[0]
    for term in terms[1:]:
        total = ad.add(total, term)
    return total


def _t_scale(cfg: TrainConfig) -> float:
    top = float(cfg.t_batch.max())
    return top if top > 0 else 1.0


def grad(p: SurrogateParams, loss_fn):
    """Reverse-mode gradient of ``loss_fn`` with respect to every parameter.

    ``loss_fn`` receives the list of (weight, bias) leaf tensors and must
    return a scalar tensor. Returns (loss_value, gradients) where gradients
    mirrors the (weights, biases) layer structure.
    """
    layers = _param_tensors(p)
    loss = loss_fn(layers)
    value = float(loss.value)
    if not math.isfinite(value):
        raise GradientError(f"loss is not finite: {value}")
    ad.backprop(loss)
    grads = []
    for (w, b), (pw, pb) in zip(layers, zip(p.weights, p.biases)):
        gw = w.grad if w.grad is not None else np.zeros_like(pw)
        gb = b.grad[:, 0] if b.grad is not None else np.zeros_like(pb)
        grads.append((np.asarray(gw), np.asarray(gb)))
    return value, grads


def grad_total(p: SurrogateParams, params: PatientParams, initial: np.ndarray,
               total_dose: float, cfg: TrainConfig):
    """Loss value and gradient of the weighted total training loss."""
    return grad(p, lambda layers: _graph_loss_total(
        layers, p.t_scale, params, initial, total_dose, cfg))


def train(params: PatientParams, initial: np.ndarray, total_dose: float,
          cfg: TrainConfig):
    """Fit the surrogate by Adam descent on the total loss.

    Runs until the loss drops to ``cfg.tolerance`` or ``cfg.max_iters`` is
    reached, and returns (best-so-far parameters, TrainReport). Training is
    deterministic for a fixed config seed.
    """
    w_ode, w_phys, w_ic = cfg.loss_weights
    if w_phys > 0:
        if params.k_met != 0 or params.k_ex != 0:
            raise DomainError(
                "mass-balance loss requires a closed system (k_met = k_ex = 0)",
                path="loss_weights")
        if not total_dose > 0:
            raise DomainError(f"total_dose must be > 0, got {total_dose}",
                              path="total_dose")
    initial = np.asarray(initial, dtype=float)
    layer_sizes = (1, *cfg.hidden_sizes, N_COMPARTMENTS)
    p = init_params(layer_sizes, cfg.seed, _t_scale(cfg))

    weights = [w.copy() for w in p.weights]
    biases = [b.copy() for b in p.biases]
    m_w = [np.zeros_like(w) for w in weights]
    v_w = [np.zeros_like(w) for w in weights]
    m_b = [np.zeros_like(b) for b in biases]
    v_b = [np.zeros_like(b) for b in biases]

    def snapshot():
        return SurrogateParams(layer_sizes=layer_sizes,
                               weights=tuple(w.copy() for w in weights),
                               biases=tuple(b.copy() for b in biases),
                               t_scale=p.t_scale)

    best_loss = math.inf
    best = snapshot()
    history = []
    for it in range(1, cfg.max_iters + 1):
        current = SurrogateParams(layer_sizes=layer_sizes, weights=tuple(weights),
                                  biases=tuple(biases), t_scale=p.t_scale)
        try:
            loss, grads = grad_total(current, params, initial, total_dose, cfg)
        except GradientError:
            raise TrainingError("loss became non-finite", iteration=it)
        history.append(loss)
        if loss < best_loss:
            best_loss = loss
            best = snapshot()
        if loss <= cfg.tolerance:
            break
        for l, (gw, gb) in enumerate(grads):
            if cfg.optimizer == "sgd":
                weights[l] -= cfg.learning_rate * gw
                biases[l] -= cfg.learning_rate * gb
                continue
            m_w[l] = ADAM_BETA1 * m_w[l] + (1 - ADAM_BETA1) * gw
            v_w[l] = ADAM_BETA2 * v_w[l] + (1 - ADAM_BETA2) * gw ** 2
            m_b[l] = ADAM_BETA1 * m_b[l] + (1 - ADAM_BETA1) * gb
            v_b[l] = ADAM_BETA2 * v_b[l] + (1 - ADAM_BETA2) * gb ** 2
            c1 = 1 - ADAM_BETA1 ** it
            c2 = 1 - ADAM_BETA2 ** it
            weights[l] -= cfg.learning_rate * (m_w[l] / c1) / (np.sqrt(v_w[l] / c2) + ADAM_EPS)
            biases[l] -= cfg.learning_rate * (m_b[l] / c1) / (np.sqrt(v_b[l] / c2) + ADAM_EPS)

    report = TrainReport(final_loss=best_loss, iterations=len(history),
                         loss_history=np.array(history),
                         converged=bool(best_loss <= cfg.tolerance))
    return best, report
