"""
Exception types raised by the verification laboratory.
"""

from typing import Optional


class VerifierError(Exception):
    """Base class for every domain error."""


class InvalidParams(VerifierError):
    """Model parameters outside their admissible range."""


class ConfigError(VerifierError):
    """Malformed run configuration."""


class GrowthViolation(VerifierError):
    """A coupling breaks the growth certificate |J_i| <= r^i."""

    def __init__(self, index: int, value=None, bound=None):
        self.index = index
        self.value = value
        self.bound = bound
        super().__init__(f"|J_{index}| = {value} exceeds r^{index} = {bound}")


class BudgetOverflow(VerifierError):
    """Enumeration would exceed the configured term cap."""

    def __init__(self, term_count: int, term_cap: int, detail: Optional[str] = None):
        self.term_count = term_count
        self.term_cap = term_cap
        message = f"{term_count} admissible terms exceed term cap {term_cap}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class TreeOverflow(VerifierError):
    """Chunk tree grew beyond the configured node cap."""

    def __init__(self, node_cap: int, detail: Optional[str] = None):
        self.node_cap = node_cap
        message = f"chunk tree exceeds node cap {node_cap}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class DomainError(VerifierError):
    """Argument outside the domain of an entropy factor."""


class EmptyResidual(VerifierError):
    """Cap requested for a chunk with no residual indices."""


class QuadratureNonConvergence(VerifierError):
    """Successive quadrature refinements disagree beyond tolerance."""


class PoleProximity(VerifierError):
    """Integrand evaluated too close to a pole of Gamma(-z)."""


class TailNotNegligible(VerifierError):
    """Truncated vertical-line tail is above tolerance."""


class NoRoot(VerifierError):
    """No multiplier solves the Lagrange constraint."""


class PreconditionViolated(VerifierError):
    """Inequality instantiated outside its hypotheses."""


class ExtrapolationUnstable(VerifierError):
    """Finite-size fit residual exceeds tolerance."""
