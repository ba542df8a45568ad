"""Exception hierarchy shared by the engine, the domains and the harness."""


class BBPLError(Exception):
    """Base class for all policy-search errors."""


class SupportError(BBPLError, ValueError):
    """A value lies outside the support of its distribution family."""


class ArgumentError(BBPLError, ValueError):
    """Invalid hyperparameters or arguments."""


class TraceError(BBPLError, RuntimeError):
    """Broken trace contract: duplicate address, family mismatch, agent invariant."""


class RewardError(BBPLError, ValueError):
    """An episode produced a non-finite reward."""


class DivergenceError(BBPLError, ArithmeticError):
    """The optimizer produced a non-finite update."""


class EpisodeCapError(BBPLError, RuntimeError):
    """An episode did not terminate within its step cap."""


class GenerationError(BBPLError, RuntimeError):
    """Instance, field or weather generation failed."""


class ValidationError(BBPLError, ValueError):
    """Invalid configuration, input file or store/domain combination."""


class DegenerateBeliefError(BBPLError, ValueError):
    """A belief update eliminated every candidate."""
