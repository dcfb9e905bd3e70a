"""Exception taxonomy.

Two families drive CLI exit codes: DataError (bad inputs, malformed files,
contract violations in user data) maps to exit code 2, RuntimeFailure
(training, persistence, service startup) maps to exit code 3.
"""


class ParkwatchError(Exception):
    """Base class for all package errors."""


class DataError(ParkwatchError):
    """Invalid input data: datasets, manifests, geometry, configs."""


class GeometryError(DataError):
    """Spot geometry violates its invariants or exceeds frame bounds."""


class ManifestError(DataError):
    """Manifest file is malformed; message names the offending line."""


class DatasetLayoutError(DataError):
    """Dataset root is missing, empty, or not in the documented layout."""


class SplitError(DataError):
    """Scenario cannot be split as requested (unknown key, too few days)."""


class CrossDatasetViolation(DataError):
    """Evaluation target overlaps the framework's training corpus."""


class RuntimeFailure(ParkwatchError):
    """Operational failure unrelated to input data quality."""


class TrainingDiverged(RuntimeFailure):
    """Loss became non-finite during training."""


class PretrainedWeightsUnavailable(RuntimeFailure):
    """Requested pretrained feature extractor could not be loaded."""


class ModelPersistenceError(RuntimeFailure):
    """Model directory is incomplete or inconsistent with its metadata."""


class PoolSignatureMismatch(RuntimeFailure):
    """Meta-model was trained against a different pool composition."""
