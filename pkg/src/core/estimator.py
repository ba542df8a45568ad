"""Score-function gradient estimate of the exponentiated-reward objective."""

import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, Sequence, Tuple

import numpy as np

from src.core.errors import ArgumentError, RewardError
from src.core.trace import Address, Trace

CONTROL_VARIATES = ("log_weight", "weight", "none")


@dataclass
class _Sums:
    """Per-component accumulators of one address."""

    sum_g_logw: np.ndarray
    sum_g: np.ndarray
    sum_g2_logw: np.ndarray
    sum_g2: np.ndarray
    sum_g2_w: np.ndarray
    count: int = 0

    @classmethod
    def zeros(cls, arity: int) -> "_Sums":
        return cls(*(np.zeros(arity) for _ in range(5)))


@dataclass
class GradientEstimate:
    """
    Accumulated statistics of a batch of traces.

    For each learnable address and hyperparameter component i the estimate
    holds sum(g*logw), sum(g), sum(g^2*logw), sum(g^2) and the number of
    traces containing the address, where g is the score of the record (zero on
    frozen components) and logw = beta * R.
    """

    beta: float
    control_variate: str = "log_weight"
    n_traces: int = 0
    sums: Dict[Address, _Sums] = field(default_factory=dict)

    def add(self, trace: Trace):
        if not math.isfinite(trace.reward):
            raise RewardError(f"Non-finite reward {trace.reward}")
        log_w = self.beta * trace.reward
        w = math.exp(log_w) if self.control_variate == "weight" else 0.0
        for record in trace.learnable_records():
            g = record.grad * record.family.learn_mask
            acc = self.sums.get(record.address)
            if acc is None:
                acc = self.sums[record.address] = _Sums.zeros(len(g))
            g2 = g * g
            acc.sum_g_logw += g * log_w
            acc.sum_g += g
            acc.sum_g2_logw += g2 * log_w
            acc.sum_g2 += g2
            acc.sum_g2_w += g2 * w
            acc.count += 1
        self.n_traces += 1

    def baseline(self, address: Address) -> np.ndarray:
        """Control variate b_i of every component (0 where sum g^2 vanishes)."""
        acc = self.sums[address]
        if self.control_variate == "none":
            return np.zeros_like(acc.sum_g2)
        numerator = acc.sum_g2_w if self.control_variate == "weight" else acc.sum_g2_logw
        out = np.zeros_like(acc.sum_g2)
        np.divide(numerator, acc.sum_g2, out=out, where=acc.sum_g2 > 0)
        return out

    def gradient(self, address: Address, arity: int = 0) -> np.ndarray:
        """
        Finalized gradient sum_n g_i (logw_n - b_i) for one address.

        Addresses absent from every trace get an all-zero vector of `arity`.
        """
        acc = self.sums.get(address)
        if acc is None:
            return np.zeros(arity)
        if self.control_variate == "log_weight" and acc.count < 2:
            # b_i equals the only log weight, the residual is identically zero
            return np.zeros_like(acc.sum_g)
        grad = acc.sum_g_logw - self.baseline(address) * acc.sum_g
        grad[acc.sum_g2 == 0] = 0.0
        return grad

    def items(self) -> Iterator[Tuple[Address, np.ndarray]]:
        for address in sorted(self.sums):
            yield address, self.gradient(address)

    def count(self, address: Address) -> int:
        acc = self.sums.get(address)
        return 0 if acc is None else acc.count


def estimate_gradient(traces: Sequence[Trace], beta: float = 1.0,
                      control_variate: str = "log_weight") -> GradientEstimate:
    """
    Score-function estimate of the gradient of log Z with respect to the hypers.

    The proposal equals the prior, so every importance weight reduces to
    log w = beta * R(tau).

    Args:
        traces: Non-empty batch of traces
        beta: Inverse temperature, > 0
        control_variate: 'log_weight', 'weight' or 'none'

    Returns:
        GradientEstimate over all learnable addresses seen in the batch
    """
    if not traces:
        raise ArgumentError("Cannot estimate a gradient from an empty batch")
    if not (beta > 0 and math.isfinite(beta)):
        raise ArgumentError(f"beta must be positive and finite, got {beta}")
    if control_variate not in CONTROL_VARIATES:
        raise ArgumentError(
            f"Unknown control variate {control_variate!r}, expected one of {CONTROL_VARIATES}"
        )
    estimate = GradientEstimate(beta=float(beta), control_variate=control_variate)
    for trace in traces:
        estimate.add(trace)
    return estimate
