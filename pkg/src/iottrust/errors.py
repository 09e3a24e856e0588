"""Exception types shared across the package."""


class TrustDomainError(ValueError):
    """An argument lies outside the domain of a trust formula."""


class ContractError(ValueError):
    """Inputs violate a structural precondition (arity, ordering, ids)."""


class DataError(ValueError):
    """Input data is inconsistent or incomplete."""


class SchemaError(DataError):
    """A file does not carry the expected columns or fields."""


class EncodingError(DataError):
    """An attribute value could not be turned into a feature."""

    def __init__(self, attribute, message):
        super().__init__(f"{attribute}: {message}")
        self.attribute = attribute


class AugmentationError(DataError):
    """Interpolation cannot proceed for a trust level."""


class TrainingError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, message="non-finite loss"):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch


class ModelLoadError(ValueError):
    """A model file is corrupt, truncated or of an unsupported version."""
