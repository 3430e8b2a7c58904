"""Exception types raised across helmlab."""

from __future__ import annotations


class HelmlabError(Exception):
    """Base class for all library errors."""


class LossOfPrecision(HelmlabError):
    pass


class ContourFailure(HelmlabError):
    pass


class NoConvergence(HelmlabError):
    pass


class PoleProximity(HelmlabError):
    pass


class DegenerateInput(HelmlabError):
    pass


class NoRoot(HelmlabError):
    pass


class EstimatorDisagreement(HelmlabError):
    pass


class InsufficientData(HelmlabError):
    pass


class IterationDivergence(HelmlabError):
    pass


class UnresolvedWidth(HelmlabError):
    """The oracle's width is below its discretisation noise floor."""


class MonteCarloVariance(HelmlabError):
    pass


class ConfigError(HelmlabError):
    pass


class AssumptionViolation(HelmlabError):
    """Raised when the target cavity eigenpair fails the simplicity/non-vanishing test."""
