"""Primal-dual base learner, augmented meta objective, and projected meta update."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .errors import NumericalFailureError
from .model_core import (FairnessSpec, LossSpec, ParamPair, TaskBatch,
                         fairness_grad, fairness_value, loss, loss_grad,
                         loss_hessian)


@dataclass(frozen=True)
class LagrangianConfig:
    delta: float = 50.0
    eta1: float = 0.01
    eta2: float = 0.01
    inner_steps: int = 1
    first_order: bool = True  # False: differentiate through one adaptation step

    def __post_init__(self):
        if self.delta <= 0 or self.eta1 <= 0 or self.eta2 <= 0 or self.inner_steps < 1:
            raise ValueError("LagrangianConfig entries must be positive")

    @property
    def dual_damping(self) -> float:
        return self.delta * (self.eta1 + self.eta2)


@dataclass(frozen=True)
class Ball:
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")


def project_ball(theta: np.ndarray, ball: Ball) -> np.ndarray:
    norm = float(np.linalg.norm(theta))
    if norm <= ball.radius:
        return np.asarray(theta, dtype=float)
    return theta * (ball.radius / norm)


def constraint_values(theta: np.ndarray, batch: TaskBatch,
                      fairness_specs: Sequence[FairnessSpec]) -> np.ndarray:
    return np.array([fairness_value(theta, batch, fs) for fs in fairness_specs])


def interval_lagrangian(pair: ParamPair, batch: TaskBatch, loss_spec: LossSpec,
                        fairness_specs: Sequence[FairnessSpec]) -> float:
    g = constraint_values(pair.theta, batch, fairness_specs)
    return loss(pair.theta, batch, loss_spec) + float(pair.lam @ g)


def interval_lagrangian_theta_grad(pair: ParamPair, batch: TaskBatch, loss_spec: LossSpec,
                                   fairness_specs: Sequence[FairnessSpec]) -> np.ndarray:
    grad = loss_grad(pair.theta, batch, loss_spec)
    for lam_i, fs in zip(pair.lam, fairness_specs):
        grad = grad + lam_i * fairness_grad(pair.theta, batch, fs)
    return grad


def inner_adapt(meta: ParamPair, support: TaskBatch, loss_spec: LossSpec,
                fairness_specs: Sequence[FairnessSpec], eta: float, steps: int) -> ParamPair:
    """Alternating primal-dual gradient steps of the interval Lagrangian.

    The dual step uses the constraint values at the fresh primal iterate and
    is floored at zero.
    """
    theta = meta.theta.copy()
    lam = meta.lam.copy()
    for _ in range(steps):
        pair = ParamPair(theta, lam)
        theta = theta - eta * interval_lagrangian_theta_grad(pair, support, loss_spec,
                                                             fairness_specs)
        lam = np.maximum(lam + eta * constraint_values(theta, support, fairness_specs), 0.0)
        if not (np.isfinite(theta).all() and np.isfinite(lam).all()):
            raise NumericalFailureError("non-finite iterate in inner adaptation")
    return ParamPair(theta, lam)


@dataclass
class ExpertTerm:
    """One expert's contribution to the meta objective."""
    weight: float
    pair: ParamPair
    active: bool
    eta: float = 0.0  # inner stepsize, used by the full-Jacobian mode


def meta_lagrangian(terms: Sequence[ExpertTerm], query: TaskBatch, loss_spec: LossSpec,
                    fairness_specs: Sequence[FairnessSpec],
                    config: LagrangianConfig) -> float:
    c = 0.5 * config.dual_damping
    total = 0.0
    for term in terms:
        g = constraint_values(term.pair.theta, query, fairness_specs)
        total += term.weight * (
            loss(term.pair.theta, query, loss_spec)
            + float(term.pair.lam @ g)
            - c * float(term.pair.lam @ term.pair.lam)
        )
    return total


def meta_gradients(terms: Sequence[ExpertTerm], meta: ParamPair, query: TaskBatch,
                   loss_spec: LossSpec, fairness_specs: Sequence[FairnessSpec],
                   config: LagrangianConfig):
    """Meta-level (grad_theta, grad_lambda) of the augmented objective.

    Active experts are evaluated at their adapted parameters; sleeping
    experts hold frozen primal terms and contribute to the dual gradient
    only through the damping term at the meta dual.
    """
    d = query.dim
    m = len(fairness_specs)
    g_theta = np.zeros(d)
    g_lambda = np.zeros(m)
    damping = config.dual_damping
    for term in terms:
        if term.active:
            grad = interval_lagrangian_theta_grad(term.pair, query, loss_spec, fairness_specs)
            if not config.first_order:
                # chain rule through one inner step: I - eta * hess(F)
                # (the constraint surrogate is piecewise linear, hessian-free)
                jac = np.eye(d) - term.eta * loss_hessian(meta.theta, query, loss_spec)
                grad = jac.T @ grad
            g_theta += term.weight * grad
            g = constraint_values(term.pair.theta, query, fairness_specs)
            g_lambda += term.weight * (g - damping * term.pair.lam)
        else:
            g_lambda += term.weight * (-damping * meta.lam)
    return g_theta, g_lambda


def meta_update(meta: ParamPair, terms: Sequence[ExpertTerm], query: TaskBatch,
                loss_spec: LossSpec, fairness_specs: Sequence[FairnessSpec],
                config: LagrangianConfig, ball: Ball) -> ParamPair:
    g_theta, g_lambda = meta_gradients(terms, meta, query, loss_spec, fairness_specs, config)
    theta = project_ball(meta.theta - config.eta1 * g_theta, ball)
    lam = np.maximum(meta.lam + config.eta2 * g_lambda, 0.0)
    if not (np.isfinite(theta).all() and np.isfinite(lam).all()):
        raise NumericalFailureError("non-finite meta update")
    return ParamPair(theta, lam)
