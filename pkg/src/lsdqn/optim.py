"""First-order optimizers: Adam (with optional prior pull) and RMSProp.

Parameters and gradients are lists of numpy arrays with matching shapes.
Updates are functional: each step returns fresh parameter arrays and a fresh
state, so identical inputs always produce bitwise-identical trajectories.

Update rules, with g the gradient and t the step counter after increment:

    Adam:    m <- b1*m + (1-b1)*g        v <- b2*v + (1-b2)*g^2
             p <- p - lr * (m/(1-b1^t)) / (sqrt(v/(1-b2^t)) + eps)
    RMSProp: acc <- decay*acc + (1-decay)*g^2
             p <- p - lr * g / sqrt(acc + eps)
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatch

Params = list


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    learning_rate: float = 0.00025
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0


@dataclass
class RmsPropState:
    acc: list[np.ndarray]
    learning_rate: float = 0.00025
    decay: float = 0.95
    epsilon: float = 1e-2


def init_adam(params: Params, **hyper) -> AdamState:
    return AdamState(
        m=[np.zeros_like(p, dtype=np.float64) for p in params],
        v=[np.zeros_like(p, dtype=np.float64) for p in params],
        **hyper,
    )


def init_rmsprop(params: Params, **hyper) -> RmsPropState:
    return RmsPropState(
        acc=[np.zeros_like(p, dtype=np.float64) for p in params], **hyper
    )


def _check_shapes(params: Params, grads: Params, state_arrays: Params) -> None:
    if not (len(params) == len(grads) == len(state_arrays)):
        raise DimensionMismatch(
            f"got {len(params)} params, {len(grads)} grads, {len(state_arrays)} state arrays"
        )
    for p, g, s in zip(params, grads, state_arrays):
        if p.shape != g.shape or p.shape != s.shape:
            raise DimensionMismatch(
                f"shape mismatch: param {p.shape}, grad {g.shape}, state {s.shape}"
            )


def adam_step(state: AdamState, params: Params, grads: Params) -> tuple[Params, AdamState]:
    _check_shapes(params, grads, state.m)
    t = state.step + 1
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if state.weight_decay != 0.0:
            g = g + state.weight_decay * p
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        update = state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
        new_params.append(p - update)
        new_m.append(m)
        new_v.append(v)
    return new_params, replace(state, m=new_m, v=new_v, step=t)


def adam_step_with_prior(
    state: AdamState,
    params: Params,
    grads: Params,
    lam: float,
    prior: Params,
) -> tuple[Params, AdamState]:
    """Adam on the gradients plus the pull lam*(params - prior).

    With lam = 0 this is exactly adam_step on the same inputs.
    """
    if len(prior) != len(params):
        raise DimensionMismatch(f"got {len(params)} params but {len(prior)} prior arrays")
    pulled = [g + lam * (p - q) for g, p, q in zip(grads, params, prior)]
    return adam_step(state, params, pulled)


def rmsprop_step(
    state: RmsPropState, params: Params, grads: Params
) -> tuple[Params, RmsPropState]:
    _check_shapes(params, grads, state.acc)
    new_params, new_acc = [], []
    for p, g, acc in zip(params, grads, state.acc):
        acc = state.decay * acc + (1.0 - state.decay) * g * g
        new_params.append(p - state.learning_rate * g / np.sqrt(acc + state.epsilon))
        new_acc.append(acc)
    return new_params, replace(state, acc=new_acc)
