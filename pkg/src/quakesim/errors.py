"""Exception hierarchy shared across the package."""


class QuakesimError(Exception):
    """Base class for all domain errors raised by this package."""


# --- geometry ---------------------------------------------------------------

class DuplicateGeneratorError(QuakesimError):
    """Two Voronoi generators coincide exactly."""


class OutOfWindowError(QuakesimError):
    """A point lies outside (or on the boundary of) the spatial window."""


class InvalidRadiusError(QuakesimError):
    """Circle radius must be strictly positive."""


class ZeroAreaRegionError(QuakesimError):
    """Region polygon has (numerically) zero area."""


# --- point process / bandwidths ---------------------------------------------

class ZeroSpreadError(QuakesimError):
    """Sample has no spread; rule-of-thumb bandwidth undefined."""


class IsolatedPointsError(QuakesimError):
    """Every candidate bandwidth leaves some point with zero leave-one-out
    intensity, so the cross-validation score is -inf everywhere."""

    def __init__(self, isolated_indices):
        self.isolated_indices = list(isolated_indices)
        super().__init__(
            f"LCV is -inf for all candidate bandwidths; isolated points: "
            f"{self.isolated_indices}"
        )


class SimulationSetupError(QuakesimError):
    """Intensity majorant cannot be computed for rejection sampling."""


# --- residuals ---------------------------------------------------------------

class ZeroIntensityAtEventError(QuakesimError):
    """Fitted intensity is zero at an observed event location."""

    def __init__(self, index):
        self.index = index
        super().__init__(f"intensity is zero at event index {index}")


# --- hazard -------------------------------------------------------------------

class InvalidSiteError(QuakesimError):
    """Hazard-site quantiles violate monotonicity requirements."""


class FitDivergedError(QuakesimError):
    """Iterative fit failed to converge within the iteration budget."""


class EmptyGridError(QuakesimError):
    """Hazard grid contains no sites."""


class InvalidPgaError(QuakesimError):
    """PGA must be strictly positive."""


class InvalidDistanceError(QuakesimError):
    """Epicentral distance below the 1 km clamp."""


class RadiusOverflowError(QuakesimError):
    """Isoseismal radius exceeds the configured cap."""


class SignificanceUnreachableError(QuakesimError):
    """Site cannot produce a magnitude > 6 sample within the retry budget."""


# --- exposure -----------------------------------------------------------------

class MissingCostError(QuakesimError):
    """Replacement cost missing for a building class."""


class ImputationImpossibleError(QuakesimError):
    """No donor CSD available to fill a square-footage gap."""


class UnknownCategoryError(QuakesimError):
    """Permit category not present in the occupancy mapping."""


class InvalidDpmError(QuakesimError):
    """Damage probability row does not sum to one."""


# --- loss engine ----------------------------------------------------------------

class MissingExposureError(QuakesimError):
    """An affected CSD has no exposure record."""


class InvalidTermsError(QuakesimError):
    """Policy limit must exceed the deductible."""


# --- extreme values --------------------------------------------------------------

class TooFewExceedancesError(QuakesimError):
    """Not enough threshold exceedances for a POT fit."""


class BelowThresholdReturnError(QuakesimError):
    """Requested return level sits at or below the threshold."""


class InsufficientYearsError(QuakesimError):
    """Annual series too short for the requested quantile."""


class LabelMismatchError(QuakesimError):
    """PML vector labels and correlation matrix labels disagree."""


# --- service ----------------------------------------------------------------------

class RunStoreError(QuakesimError):
    """Run artifacts are missing or fail digest verification."""


class UnknownRunError(QuakesimError):
    """No run with the requested id."""
