"""Distribution families with hyperparameter score gradients."""

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy.special import betaln, digamma, gammaln

from src.core.errors import ArgumentError, SupportError

# Draws closer than this to the boundary of (0, 1) or the simplex are clipped.
_BOUNDARY = 1e-12
_SIMPLEX_TOL = 1e-8
_LOG_2PI = math.log(2.0 * math.pi)


class Kind(Enum):
    """Distribution kinds known to the engine."""

    DIRICHLET = "dirichlet"
    BETA = "beta"
    NORMAL = "normal"
    CATEGORICAL = "categorical"
    BERNOULLI = "bernoulli"

    @property
    def learnable(self) -> bool:
        return self in (Kind.DIRICHLET, Kind.BETA, Kind.NORMAL)


@dataclass(frozen=True)
class DistFamily:
    """
    A distribution family and its hyperparameter arity.

    Learnable families (Dirichlet, Beta, Normal with mean and log-std) expose
    a score gradient with respect to their hyperparameters. Fixed families
    (Categorical, Bernoulli) model world and agent noise.

    Args:
        kind: Distribution kind
        arity: Number of hyperparameters
        frozen: Indices of hyperparameter components held fixed during learning
    """

    kind: Kind
    arity: int
    frozen: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.arity < 1:
            raise ArgumentError(f"Arity must be positive, got {self.arity}")
        if self.kind is Kind.DIRICHLET and self.arity < 2:
            raise ArgumentError("Dirichlet arity must be at least 2")
        if self.kind in (Kind.BETA, Kind.NORMAL) and self.arity != 2:
            raise ArgumentError(f"{self.kind.value} arity must be 2")
        if self.kind is Kind.BERNOULLI and self.arity != 1:
            raise ArgumentError("Bernoulli arity must be 1")
        if self.frozen and not self.learnable:
            raise ArgumentError("Only learnable families can freeze components")
        if any(i < 0 or i >= self.arity for i in self.frozen):
            raise ArgumentError(f"Frozen components {self.frozen} out of range")
        object.__setattr__(self, "frozen", tuple(sorted(set(self.frozen))))

    @classmethod
    def dirichlet(cls, k: int) -> "DistFamily":
        return _family(Kind.DIRICHLET, k)

    @classmethod
    def beta(cls) -> "DistFamily":
        return _family(Kind.BETA, 2)

    @classmethod
    def normal(cls, learn_scale: bool = True) -> "DistFamily":
        """Normal over (mean, log std); the scale is frozen unless `learn_scale`."""
        return _family(Kind.NORMAL, 2, () if learn_scale else (1,))

    @classmethod
    def categorical(cls, k: int) -> "DistFamily":
        return _family(Kind.CATEGORICAL, k)

    @classmethod
    def bernoulli(cls) -> "DistFamily":
        return _family(Kind.BERNOULLI, 1)

    @property
    def learnable(self) -> bool:
        return self.kind.learnable

    @cached_property
    def learn_mask(self) -> np.ndarray:
        """1.0 for components the optimizer may move, 0.0 for frozen ones."""
        mask = np.ones(self.arity)
        mask[list(self.frozen)] = 0.0
        return mask

    def __str__(self):
        return self.kind.value


@lru_cache(maxsize=None)
def _family(kind: Kind, arity: int, frozen: Tuple[int, ...] = ()) -> DistFamily:
    return DistFamily(kind, arity, frozen)


def _check_hypers(family: DistFamily, hypers) -> np.ndarray:
    hypers = np.asarray(hypers, dtype=float)
    if hypers.shape != (family.arity,):
        raise ArgumentError(
            f"{family} expects {family.arity} hyperparameters, got shape {hypers.shape}"
        )
    if not np.all(np.isfinite(hypers)):
        raise ArgumentError(f"Non-finite hyperparameters for {family}: {hypers}")
    if family.kind in (Kind.DIRICHLET, Kind.BETA) and np.any(hypers <= 0):
        raise ArgumentError(f"{family} hyperparameters must be positive: {hypers}")
    if family.kind in (Kind.CATEGORICAL, Kind.BERNOULLI):
        if np.any(hypers < 0):
            raise ArgumentError(f"{family} probabilities must be non-negative: {hypers}")
        if family.kind is Kind.BERNOULLI and hypers[0] > 1:
            raise ArgumentError(f"Bernoulli probability above 1: {hypers[0]}")
        if family.kind is Kind.CATEGORICAL and hypers.sum() <= 0:
            raise ArgumentError("Categorical weights sum to zero")
    return hypers


def to_unconstrained(family: DistFamily, hypers) -> np.ndarray:
    """Map constrained hyperparameters to the optimizer's unconstrained space."""
    hypers = _check_hypers(family, hypers)
    if family.kind in (Kind.DIRICHLET, Kind.BETA):
        return np.log(hypers)
    return hypers.copy()


def to_constrained(family: DistFamily, rho) -> np.ndarray:
    """Inverse of `to_unconstrained`: positive components are exp(rho)."""
    rho = np.asarray(rho, dtype=float)
    if family.kind in (Kind.DIRICHLET, Kind.BETA):
        return np.exp(rho)
    return rho.copy()


def constrained_jacobian(family: DistFamily, hypers) -> np.ndarray:
    """Diagonal of d(lambda)/d(rho), used to chain-rule gradients into rho."""
    hypers = np.asarray(hypers, dtype=float)
    if family.kind in (Kind.DIRICHLET, Kind.BETA):
        return hypers.copy()
    return np.ones_like(hypers)


def score_logpdf_grad(family: DistFamily, hypers, value) -> Tuple[float, Optional[np.ndarray]]:
    """
    Log density of `value` and its gradient with respect to the hyperparameters.

    Args:
        family: Distribution family
        hypers: Constrained hyperparameters
        value: A value in the family's support

    Returns:
        (log density, gradient); the gradient is None for fixed families
    """
    hypers = _check_hypers(family, hypers)
    kind = family.kind

    if kind is Kind.BETA:
        x = float(value)
        if not 0.0 < x < 1.0:
            raise SupportError(f"Beta value {x} outside (0, 1)")
        a, b = hypers
        log_x, log_1mx = math.log(x), math.log1p(-x)
        logp = (a - 1.0) * log_x + (b - 1.0) * log_1mx - float(betaln(a, b))
        psi_ab = digamma(a + b)
        grad = np.array([log_x - digamma(a) + psi_ab, log_1mx - digamma(b) + psi_ab])
        return logp, grad

    if kind is Kind.NORMAL:
        x = float(value)
        if not math.isfinite(x):
            raise SupportError(f"Normal value {x} is not finite")
        mu, log_sigma = hypers
        sigma = math.exp(log_sigma)
        z = (x - mu) / sigma
        logp = -0.5 * _LOG_2PI - log_sigma - 0.5 * z * z
        return logp, np.array([z / sigma, z * z - 1.0])

    if kind is Kind.DIRICHLET:
        x = np.asarray(value, dtype=float)
        if x.shape != hypers.shape or np.any(x <= 0) or abs(x.sum() - 1.0) > _SIMPLEX_TOL:
            raise SupportError(f"Dirichlet value {x} outside the simplex interior")
        log_x = np.log(x)
        total = hypers.sum()
        logp = float(gammaln(total) - gammaln(hypers).sum() + ((hypers - 1.0) * log_x).sum())
        return logp, digamma(total) - digamma(hypers) + log_x

    if kind is Kind.CATEGORICAL:
        index = int(value)
        if not 0 <= index < family.arity:
            raise SupportError(f"Categorical index {index} outside 0..{family.arity - 1}")
        p = hypers[index] / hypers.sum()
        return (math.log(p) if p > 0 else -math.inf), None

    p = hypers[0]
    if not isinstance(value, (bool, np.bool_)):
        raise SupportError(f"Bernoulli value must be boolean, got {value!r}")
    q = p if value else 1.0 - p
    return (math.log(q) if q > 0 else -math.inf), None


def sample(family: DistFamily, hypers, rng: np.random.Generator):
    """
    Draw a value from the family.

    Args:
        family: Distribution family
        hypers: Constrained hyperparameters (Categorical weights need not sum to 1)
        rng: Random stream

    Returns:
        float (Beta, Normal), ndarray (Dirichlet), int (Categorical) or bool (Bernoulli)
    """
    hypers = _check_hypers(family, hypers)
    kind = family.kind

    if kind is Kind.BETA:
        return min(max(float(rng.beta(hypers[0], hypers[1])), _BOUNDARY), 1.0 - _BOUNDARY)
    if kind is Kind.NORMAL:
        return float(rng.normal(hypers[0], math.exp(hypers[1])))
    if kind is Kind.DIRICHLET:
        x = np.maximum(rng.dirichlet(hypers), _BOUNDARY)
        return x / x.sum()
    if kind is Kind.CATEGORICAL:
        cumulative = np.cumsum(hypers)
        index = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
        return min(index, family.arity - 1)
    return bool(rng.random() < hypers[0])

