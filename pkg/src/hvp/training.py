"""Adam with cosine annealing on the Monte-Carlo energy, plus an L-BFGS mixer pass."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.optimize import minimize

from .exceptions import Diverged, InvalidParams
from .geometry import Domain
from .planewave import MIXER, PARAM_NAMES, ObjectiveWeights, PlaneWaveModel, Samples, objective_terms


@dataclass
class Schedule:
    iterations: int = 2000
    n_interior: int = 4096
    n_boundary: int = 1024
    lr: float = 1e-3
    lr_min: float = 1e-5
    horizon: int | None = None        # cosine period; defaults to iterations
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    freeze: tuple = ()
    lbfgs_iters: int = 0
    lbfgs_interior: int = 8192
    lbfgs_boundary: int = 2048
    divergence_factor: float = 1e3

    def __post_init__(self):
        self.freeze = tuple(self.freeze)
        unknown = set(self.freeze) - set(PARAM_NAMES)
        if unknown:
            raise InvalidParams(f"unknown parameters to freeze: {sorted(unknown)}")
        if self.iterations < 0 or self.n_interior < 1 or self.n_boundary < 1:
            raise InvalidParams("iterations >= 0 and positive batch sizes required")

    def learning_rate(self, it: int) -> float:
        T = self.horizon or max(self.iterations, 1)
        t = min(it, T) / T
        return self.lr_min + 0.5 * (self.lr - self.lr_min) * (1.0 + math.cos(math.pi * t))

    def to_dict(self):
        d = asdict(self)
        d["freeze"] = list(self.freeze)
        return d

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidParams(f"unknown schedule keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainState:
    model: PlaneWaveModel
    m: dict
    v: dict
    iteration: int = 0
    seed: int = 0
    loss_history: list = field(default_factory=list)
    term_history: list = field(default_factory=list)
    lbfgs: dict | None = None

    def smoothed_loss(self, window: int = 50):
        """Trailing moving average; entry i averages iterations max(0, i-window+1)..i."""
        x = np.asarray(self.loss_history, dtype=float)
        c = np.concatenate([[0.0], np.cumsum(x)])
        i = np.arange(len(x))
        lo = np.maximum(0, i - window + 1)
        return (c[i + 1] - c[lo]) / (i + 1 - lo)


def _adam_step(state: TrainState, grads, lr, sch: Schedule):
    t = state.iteration + 1
    p = state.model.params
    b1, b2 = sch.beta1, sch.beta2
    for n in PARAM_NAMES:
        if n in sch.freeze:
            continue
        g = grads[n]
        state.m[n] = b1 * state.m[n] + (1 - b1) * g
        state.v[n] = b2 * state.v[n] + (1 - b2) * g * g
        mh = state.m[n] / (1 - b1**t)
        vh = state.v[n] / (1 - b2**t)
        p[n] = p[n] - lr * mh / (np.sqrt(vh) + sch.adam_eps)


def train(model: PlaneWaveModel, f, k: float, weights: ObjectiveWeights, domain: Domain,
          schedule: Schedule | None = None, seed: int = 0, callback=None) -> TrainState:
    """Stochastic minimisation with fresh samples each iteration.

    ``callback(state)`` runs after every iteration (used for field exports).
    The model is updated in place and also returned inside the state.
    """
    sch = schedule or Schedule()
    rng = np.random.default_rng(seed)
    zeros = {n: np.zeros_like(model.params[n]) for n in PARAM_NAMES}
    state = TrainState(model, {n: z.copy() for n, z in zeros.items()}, zeros, 0, seed)
    initial = None
    for it in range(sch.iterations):
        samples = Samples.draw(domain, sch.n_interior, sch.n_boundary, rng)
        loss, terms, grads = objective_terms(model, f, k, weights, samples, with_grad=True)
        if initial is None:
            initial = loss
        if not np.isfinite(loss) or loss > sch.divergence_factor * max(abs(initial), 1e-300):
            raise Diverged(f"loss {loss:.3e} at iteration {it} (initial {initial:.3e})")
        state.loss_history.append(float(loss))
        state.term_history.append(terms)
        _adam_step(state, grads, sch.learning_rate(it), sch)
        state.iteration = it + 1
        if callback is not None:
            callback(state)
    if sch.lbfgs_iters > 0:
        state.lbfgs = lbfgs_mixer(model, f, k, weights, domain, sch, rng)
    return state


def lbfgs_mixer(model, f, k, weights, domain, sch: Schedule, rng) -> dict:
    """Quasi-Newton refinement of the mixer parameters on one frozen batch."""
    samples = Samples.draw(domain, sch.lbfgs_interior, sch.lbfgs_boundary, rng)

    def fun(vec):
        model.set_flat(vec, MIXER)
        loss, _, grads = objective_terms(model, f, k, weights, samples, with_grad=True)
        return loss, np.concatenate([grads[n].ravel() for n in MIXER])

    x0 = model.flat(MIXER)
    before = fun(x0)[0]
    res = minimize(fun, x0, jac=True, method="L-BFGS-B", options={"maxiter": sch.lbfgs_iters})
    model.set_flat(res.x, MIXER)
    return {"before": float(before), "after": float(res.fun), "iterations": int(res.nit),
            "message": str(res.message)}
