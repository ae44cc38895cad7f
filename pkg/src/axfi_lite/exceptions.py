"""Exception classes for axfi-lite."""

from pathlib import Path


class AxfiError(Exception):
    """Base exception for all axfi-lite errors."""


class ConfigurationError(AxfiError):
    """Invalid model, layer, multiplier plan or campaign configuration."""


class ShapeError(ConfigurationError):
    """Tensor shapes do not chain or do not match."""


class QuantizationError(AxfiError):
    """Input or model cannot be executed on the quantized path."""


class LUTFormatError(AxfiError):
    """Base error for malformed multiplier lookup-table files."""

    def __init__(self, message: str, path: str | Path | None = None, offset: int | None = None):
        self.path = str(path) if path is not None else None
        self.offset = offset
        super().__init__(message)


class LUTMagicError(LUTFormatError):
    """LUT file does not start with the expected magic bytes."""


class LUTLengthError(LUTFormatError):
    """LUT file holds the wrong number of entries."""

    def __init__(self, message: str, path: str | Path | None, found: int, expected: int):
        self.found = found
        self.expected = expected
        super().__init__(message, path=path, offset=found)


class LUTRangeError(LUTFormatError):
    """LUT entry outside the signed 16-bit product range."""

    def __init__(self, message: str, path: str | Path | None, index: int, value: int):
        self.index = index
        self.value = value
        super().__init__(message, path=path, offset=index)


class FaultDescriptorError(AxfiError):
    """Fault descriptor is not valid for the target model or site."""


class SamplingError(AxfiError):
    """Invalid statistical sampling parameters."""


class ComparisonError(AxfiError):
    """Golden and faulty data cannot be compared."""


class DatasetError(AxfiError):
    """Base error for dataset ingestion failures."""

    def __init__(self, message: str, path: str | Path | None = None):
        self.path = str(path) if path is not None else None
        super().__init__(message)


class IdxMagicError(DatasetError):
    """IDX file carries an unexpected magic number."""

    def __init__(self, message: str, path: str | Path | None, found: int, expected: int):
        self.found = found
        self.expected = expected
        super().__init__(message, path=path)


class IdxCountMismatchError(DatasetError):
    """Image and label files disagree on the number of items."""

    def __init__(self, message: str, images: int, labels: int):
        self.images = images
        self.labels = labels
        super().__init__(message)


class IdxTruncatedError(DatasetError):
    """IDX payload is shorter than its header declares."""

    def __init__(
        self, message: str, path: str | Path | None, expected_bytes: int, found_bytes: int
    ):
        self.expected_bytes = expected_bytes
        self.found_bytes = found_bytes
        super().__init__(message, path=path)


class EmptyDatasetError(DatasetError):
    """Dataset holds no samples."""


class ManifestError(AxfiError):
    """Model manifest and weight blob are inconsistent."""

    def __init__(self, message: str, path: str | Path | None = None):
        self.path = str(path) if path is not None else None
        super().__init__(message)


class CampaignError(AxfiError):
    """Base error for campaign failures."""


class TrainingDivergedError(CampaignError):
    """Fixture training produced a non-finite loss."""

    def __init__(self, message: str, seed: int, epoch: int, step: int):
        self.seed = seed
        self.epoch = epoch
        self.step = step
        super().__init__(message)
