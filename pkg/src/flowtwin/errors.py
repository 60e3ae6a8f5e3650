"""Exception types shared across the package."""


class FlowTwinError(Exception):
    """Base class for all package errors."""


class NoPathError(FlowTwinError):
    """No walkable path exists between the requested anchors."""


class DegenerateDataError(FlowTwinError):
    """Not enough data to fit the requested model."""


class DimensionMismatchError(FlowTwinError):
    """Array shapes do not line up."""


class EmptyDatasetError(FlowTwinError):
    """Training requires at least one record."""


class LabelOutOfRangeError(FlowTwinError):
    """A training label is not in the candidate set."""


class ZeroVectorError(FlowTwinError):
    """Cosine similarity is undefined for an all-zero vector."""


class AllZeroError(FlowTwinError):
    """At least one share must be positive."""


class ValidationError(FlowTwinError):
    """Input file or payload failed schema validation.

    ``path`` names the offending field (dotted/indexed, e.g.
    ``mobility_links[0].speed_kmh``) so callers can emit machine-readable
    errors.
    """

    def __init__(self, message: str, path: str = ""):
        super().__init__(message)
        self.path = path

    def to_dict(self) -> dict:
        return {"error": str(self), "path": self.path}


class UnknownPoIError(ValidationError):
    """A referenced PoI id does not exist in the network."""


class UnknownLinkError(ValidationError):
    """A mobility link references endpoints that cannot be resolved."""
