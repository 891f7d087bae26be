"""
Exception hierarchy for the susceptibility pipeline.

Every error knows the stage it came from (``provenance``) and the process
exit code the CLI should use when it surfaces.
"""

EXIT_OK = 0
EXIT_VERIFICATION_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


class UnimodalResponseError(Exception):
    """Base class for all pipeline errors."""

    provenance = "pipeline"
    exit_code = EXIT_NUMERICAL

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details

    def to_dict(self):
        """Machine-readable form used in failure summaries."""
        return {
            "error": type(self).__name__,
            "provenance": self.provenance,
            "message": str(self),
            "details": {k: _plain(v) for k, v in self.details.items()},
        }


def _plain(value):
    try:
        return float(value)
    except (TypeError, ValueError):
        return str(value)


class LinearAlgebraFailure(UnimodalResponseError):
    """A dense solve or eigensolve raised outside the guarded call sites."""

    provenance = "linear_algebra"


class ConfigError(UnimodalResponseError):
    provenance = "config"
    exit_code = EXIT_USAGE


# map_model
class MapModelError(UnimodalResponseError):
    provenance = "map_model"


class NoSignChange(MapModelError):
    pass


class DomainMismatch(MapModelError):
    pass


class OrbitNotFinite(MapModelError):
    pass


class NotMarkov(MapModelError):
    pass


class NotMixing(MapModelError):
    pass


class NotRepelling(MapModelError):
    pass


class UnstableClassification(MapModelError):
    pass


# chart_atlas
class ChartAtlasError(UnimodalResponseError):
    provenance = "chart_atlas"


class ChartSolveFailure(ChartAtlasError):
    pass


class AsymptoticsViolation(ChartAtlasError):
    pass


class BranchInversionFailure(ChartAtlasError):
    pass


class SingularEvaluation(ChartAtlasError):
    pass


class AssumptionAUnverified(ChartAtlasError):
    pass


# transfer_operator
class TransferOperatorError(UnimodalResponseError):
    provenance = "transfer_operator"


class EigensolveFailure(TransferOperatorError):
    pass


class NonPositiveDensity(TransferOperatorError):
    pass


# susceptibility
class SusceptibilityError(UnimodalResponseError):
    provenance = "susceptibility"


class ResidueMismatch(SusceptibilityError):
    pass


class NonPolarCycle(SusceptibilityError):
    pass


class ResolventIllConditioned(SusceptibilityError):
    pass


class DecompositionResidual(SusceptibilityError):
    pass


class SeriesDivergence(SusceptibilityError):
    pass
