"""Exception types shared across the package."""


class FlowotError(Exception):
    """Base class for package errors."""


class FlowDomainError(FlowotError):
    """A clock value or operation fell outside a flow's valid domain."""


class FlowConstructionError(FlowotError):
    """Scale-flow inputs are invalid (nonpositive scale, bad samples, ...)."""


class SuperRicciViolationError(FlowConstructionError):
    """The requested flow violates the lower Ricci-rate bound on its domain."""


class CutLocusError(FlowotError):
    """A point pair is too close to the cut locus for stable constructions."""


class UnderResolvedError(FlowotError):
    """A discretization is too coarse for the requested tolerance."""


class AdmissibilityError(FlowotError):
    """A cost family fails one of its structural conditions."""


class ConvergenceError(FlowotError):
    """An iterative solver failed to reach its stopping criterion."""


class ConfigError(FlowotError):
    """An experiment configuration is malformed or inconsistent."""
