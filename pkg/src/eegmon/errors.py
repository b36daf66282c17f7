"""Exception types shared across the pipeline."""


class EegmonError(Exception):
    """Base class for all pipeline errors."""


class BlockTooShort(EegmonError):
    """Record shorter than one segmentation window."""


class SegmentTooShort(EegmonError):
    """Segment too short for the requested trim or region size."""


class EmptyClass(EegmonError):
    """A subject has no segments of one label."""


class InvalidCorners(EegmonError):
    """Filter corner frequencies violate Nyquist ordering."""


class TooFewSamples(EegmonError):
    """Signal shorter than the analysis window."""


class SignalTooShort(EegmonError):
    """Signal too short for the requested decomposition level."""


class SiftingDiverged(EegmonError):
    """Empirical-mode sifting failed to converge."""


class ZeroTotalPower(EegmonError):
    """Spectrum integrates to zero; relative powers undefined."""


class ManifestMismatch(EegmonError):
    """Segment lacks channels required by the feature manifest."""


class DegenerateData(EegmonError):
    """Training data is missing a class."""


class NonConvergence(EegmonError):
    """Optimizer hit its iteration cap before reaching tolerance."""


class FeatureMismatch(EegmonError):
    """Input vector not aligned with the model's feature list."""


class DegenerateFold(EegmonError):
    """A cross-validation training split lost a class."""


class ZeroMeditation(EegmonError):
    """Meditation score is zero; attention ratio undefined."""


class InvalidConfig(EegmonError):
    """Configuration violates a documented invariant."""


class SourceExhausted(EegmonError):
    """Clean end-of-stream from a replay or generator source."""


class ModelMissing(EegmonError):
    """Streaming engine started without a trained model."""


class EmptySession(EegmonError):
    """Session log contains no classified events."""


class ZeroVariance(EegmonError):
    """Paired differences have zero variance; t statistic undefined."""


class UnpairedLengths(EegmonError):
    """Paired arrays differ in length."""
