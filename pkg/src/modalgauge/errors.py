"""Exception hierarchy shared across modalgauge modules."""


class ModalGaugeError(Exception):
    """Base class for all modalgauge errors."""


# --- array / manifest I/O ---

class FormatError(ModalGaugeError):
    """File does not look like the supported binary array format."""


class TruncationError(ModalGaugeError):
    """Payload shorter than the header-declared shape requires."""


class DtypeError(ModalGaugeError):
    """Array dtype outside the supported set (<f4, <f8, <i8)."""


class IntegrityError(ModalGaugeError):
    """Manifest / file cross-validation failed (counts, checksums, norms)."""


class LabelError(ModalGaugeError):
    """Label value outside the valid class range."""


class DegenerateRowError(ModalGaugeError):
    """A row with zero norm cannot be normalized."""

    def __init__(self, row: int):
        super().__init__(f"row {row} has zero norm")
        self.row = row


# --- measures ---

class InsufficientDataError(ModalGaugeError):
    """Too few points for the requested measure or fit."""


class DegenerateGeometryError(ModalGaugeError):
    """Denominator geometry collapsed (coincident centroids etc.)."""


class SingularBandwidthError(ModalGaugeError):
    """KDE bandwidth is zero because the cluster has no spread."""


class ParameterError(ModalGaugeError):
    """User-supplied parameter out of range."""


class UnknownMeasureError(ModalGaugeError):
    """Measure name not in the registry."""


class EmptySelectionError(ModalGaugeError):
    """Measure selection is empty."""


# --- statistics ---

class DataError(ModalGaugeError):
    """Invalid numeric input (NaN, mismatched lengths)."""


class DegenerateDataError(ModalGaugeError):
    """Constant input where variation is required (correlation, OLS x)."""


class DegenerateResponseError(ModalGaugeError):
    """Constant response: R-squared undefined."""


# --- transfer ---

class PerfectZeroShotError(ModalGaugeError):
    """Zero-shot accuracy of 1.0 leaves no error to close."""


class RangeError(ModalGaugeError):
    """Accuracy outside [0, 1]."""


class DuplicateRecordError(ModalGaugeError):
    """Same (train, eval) pair appears twice."""


class MissingRecordError(ModalGaugeError):
    """A train task lacks its in-domain record."""
