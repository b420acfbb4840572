"""Exception taxonomy shared across the package."""


class MedGFormulaError(Exception):
    """Base class for all package errors."""


class EstimatorError(MedGFormulaError):
    """Base class for model-fitting and prediction failures.

    ``context`` is set by callers that fit several models (e.g. the engine
    tags the failing model as ``mediator[2]``) so bootstrap diagnostics can
    report where a resample broke.
    """

    def __init__(self, message="", context=None):
        super().__init__(message)
        self.context = context

    def __str__(self):
        base = super().__str__()
        if self.context:
            return f"{self.context}: {base}"
        return base


class InsufficientRows(EstimatorError):
    pass


class RankDeficientDesign(EstimatorError):
    pass


class SingleClassResponse(EstimatorError):
    pass


class SeparationSuspected(EstimatorError):
    pass


class DidNotConverge(EstimatorError):
    pass


class NoEvents(EstimatorError):
    pass


class SingularInformation(EstimatorError):
    pass


class DimensionMismatch(EstimatorError):
    pass


class HorizonBeforeZero(EstimatorError):
    pass


class EventTimeNonPositive(MedGFormulaError):
    pass


class CohortValidationError(MedGFormulaError):
    """Carries the complete list of :class:`~medgformula.cohort.Violation`."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations[:5])
        more = "" if len(self.violations) <= 5 else f" (+{len(self.violations) - 5} more)"
        super().__init__(f"{len(self.violations)} violation(s): {lines}{more}")


class EmptyCohort(MedGFormulaError):
    pass


class EmptyInput(MedGFormulaError):
    pass


class TooManyFailedIterations(MedGFormulaError):
    pass


class HazardNegativityBudgetExceeded(MedGFormulaError):
    pass


class ConfigError(MedGFormulaError):
    pass
