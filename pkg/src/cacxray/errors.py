"""Exception types shared across the package.

Every structured failure mode raised by the library maps to one of these, so
callers (and the command-line front end) can distinguish bad input files, bad
configuration, degenerate data, and numerical failure without string matching.
"""


class CacXrayError(Exception):
    """Base class for all library errors."""


# --- DICOM ingestion ---------------------------------------------------------

class MalformedFileError(CacXrayError):
    """Byte stream is not a parseable DICOM part-10 file (bad magic, element
    overruns the buffer, inconsistent lengths, invalid pixel payload)."""


class UnsupportedTransferSyntaxError(CacXrayError):
    """Transfer syntax other than Explicit/Implicit VR Little Endian."""


class MissingRequiredTagError(CacXrayError):
    """A tag required to build an image (Rows, Columns, BitsAllocated,
    PixelData, WindowCenter, WindowWidth) never appeared in the dataset."""


class UnsupportedPhotometricError(CacXrayError):
    """PhotometricInterpretation other than MONOCHROME1/MONOCHROME2."""


# --- preprocessing -----------------------------------------------------------

class NonPositiveWidthError(CacXrayError):
    """Window width must be strictly positive."""


class CropLargerThanImageError(CacXrayError):
    """Requested centre crop exceeds the image extent."""


class DegenerateDatasetError(CacXrayError):
    """Pixel pool has zero variance; standardization is undefined."""


# --- labels ------------------------------------------------------------------

class NegativeScoreError(CacXrayError):
    """Calcium scores are nonnegative by definition."""


class DegenerateLabelsError(CacXrayError):
    """Log-domain labels have zero spread; normalization is undefined."""


# --- model -------------------------------------------------------------------

class InvalidConfigError(CacXrayError):
    """Network or run configuration violates a structural constraint."""


class ShapeMismatchError(CacXrayError):
    """Tensor shape disagrees with what the configuration implies."""


class StaleTraceError(CacXrayError):
    """A forward trace was replayed against different parameters or mode."""


class EmptyDatasetError(CacXrayError):
    """Training requires at least one sample."""


class TrainingFailedError(CacXrayError):
    """Loss or parameters became non-finite during optimization."""


# --- serialization -----------------------------------------------------------

class BadMagicError(CacXrayError):
    """File does not start with the expected format tag."""


class TruncatedFileError(CacXrayError):
    """File ends before the declared payload (or carries trailing bytes)."""


# --- metrics -----------------------------------------------------------------

class OneClassOnlyError(CacXrayError):
    """Both truth classes are required for ranking metrics."""


class NoPositivesError(CacXrayError):
    """Precision-recall needs at least one positive sample."""


class AllGridDegenerateError(CacXrayError):
    """Every threshold on the grid left a single truth class."""


class TooFewSamplesError(CacXrayError):
    """Fewer samples than folds requested."""


# --- survival ----------------------------------------------------------------

class EmptyCohortError(CacXrayError):
    """Survival estimators need a nonempty cohort (per group)."""


class NoEventsError(CacXrayError):
    """No observed events; the statistic is undefined."""


class ConstantCovariateError(CacXrayError):
    """A proportional-hazards covariate with zero variance is unidentifiable."""


class DivergedError(CacXrayError):
    """Newton iteration left the trust region or the information matrix
    became singular (typically perfect separation)."""


class NegativeStatisticError(CacXrayError):
    """Chi-squared statistics are nonnegative by construction."""
