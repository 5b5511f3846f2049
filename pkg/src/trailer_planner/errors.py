"""
Exception hierarchy for the trailer planner.

Validation and programming errors are raised; failures the search tolerates
(infeasible solves, rejected connections, failed plans) are returned as verdicts.
"""


class TrailerPlannerError(Exception):
    """Base class for all planner errors."""


class InvalidParamsError(TrailerPlannerError):
    """Vehicle parameters or a tunable violate their declared invariants."""


class EquilibriumDomainError(TrailerPlannerError):
    """An equilibrium arcsin argument left [-1, 1]."""


class ConstraintViolationError(TrailerPlannerError):
    """A state or control violates the jack-knife or bound constraints."""


class LatticeSpecError(TrailerPlannerError):
    """Invalid lattice bounds or counts."""


class DegenerateRequestError(TrailerPlannerError):
    """A boundary-value request whose start equals its goal."""


class BucketMismatchError(TrailerPlannerError):
    """A motion primitive was applied at a node with a different steering."""


class LibraryFormatError(TrailerPlannerError):
    """A library, net or dataset file is corrupt or malformed."""


class UnsupportedVersionError(LibraryFormatError):
    """A file declares a major format version this build cannot read."""


class ParamsHashMismatchError(TrailerPlannerError):
    """A stored artifact was built for different vehicle parameters."""


class LibraryIntegrityError(TrailerPlannerError):
    """A stored primitive no longer re-simulates to its stored samples."""


class DatasetInfeasibleError(TrailerPlannerError):
    """Too few cost-to-go solves succeeded to build a dataset."""


class TrainingError(TrailerPlannerError):
    """Network training diverged or was given unusable data."""


class GainSynthesisError(TrailerPlannerError):
    """The Riccati recursion became ill-conditioned."""


class ScenarioError(TrailerPlannerError):
    """A scenario file is invalid or references missing artifacts."""
