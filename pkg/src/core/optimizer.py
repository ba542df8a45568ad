"""RMSProp-rescaled stochastic gradient ascent with a decaying step schedule."""

import logging
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from src.core.distributions import constrained_jacobian, to_constrained
from src.core.errors import ArgumentError, DivergenceError
from src.core.estimator import GradientEstimate
from src.core.trace import Address, HyperStore

logger = logging.getLogger(__name__)


@dataclass
class OptimState:
    """
    Optimizer state: per-component mean squares and the step counter.

    Args:
        rho0: Base learning rate
        tau: Schedule delay
        kappa: Schedule exponent
        decay: RMSProp decay of the mean-square accumulator
        epsilon: Added under the square root
    """

    rho0: float = 0.1
    tau: float = 1.0
    kappa: float = 0.5
    decay: float = 0.9
    epsilon: float = 1e-8
    k: int = 0
    v: Dict[Address, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.rho0 <= 0 or self.tau <= 0 or not 0 <= self.kappa <= 1:
            raise ArgumentError(
                f"Invalid schedule rho0={self.rho0}, tau={self.tau}, kappa={self.kappa}"
            )
        if not 0 <= self.decay < 1 or self.epsilon < 0:
            raise ArgumentError(f"Invalid RMSProp decay={self.decay}, epsilon={self.epsilon}")

    def step_size(self, k: int = None) -> float:
        """rho_k = rho0 / (tau + k)^kappa."""
        k = self.k if k is None else k
        return self.rho0 / (self.tau + k) ** self.kappa


def optim_step(state: OptimState, store: HyperStore, grad: GradientEstimate) -> float:
    """
    Apply one ascent step to every store entry.

    The constrained-space gradient is chain-ruled into the unconstrained
    parameters, rescaled by the running root mean square and scaled by the
    schedule. Nothing is modified when any component would become non-finite.

    Args:
        state: Optimizer state, updated in place
        store: Hyperparameter store, updated in place
        grad: Finalized gradient estimate of the batch

    Returns:
        The step size used
    """
    rate = state.step_size()
    updates = {}
    for address, entry in store.items():
        g = grad.gradient(address, entry.family.arity)
        g = g * constrained_jacobian(entry.family, entry.hypers) * entry.family.learn_mask
        v = state.v.get(address)
        if v is None:
            v = np.zeros(entry.family.arity)
        v = state.decay * v + (1.0 - state.decay) * g * g
        rho = entry.rho + rate * g / np.sqrt(v + state.epsilon)
        finite = np.all(np.isfinite(rho)) and np.all(np.isfinite(v))
        if not (finite and np.all(np.isfinite(to_constrained(entry.family, rho)))):
            logger.error(f"Non-finite update at {address} in step {state.k}: g={g}")
            raise DivergenceError(f"Optimizer diverged at {address} in step {state.k}")
        updates[address] = (rho, v)

    for address, (rho, v) in updates.items():
        store.set_rho(address, rho)
        state.v[address] = v
    state.k += 1
    return rate
