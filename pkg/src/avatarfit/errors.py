"""Exception hierarchy shared by all avatarfit modules."""


class AvatarFitError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(AvatarFitError):
    pass


class AllFacesDegenerate(AvatarFitError):
    pass


class EmptyResult(AvatarFitError):
    pass


class NonSimpleBoundary(AvatarFitError):
    pass


class IsolatedVertex(AvatarFitError):
    pass


class SingularBlend(AvatarFitError):
    pass


class Diverged(AvatarFitError):
    pass


class NoCorrespondences(AvatarFitError):
    pass


class SingularSystem(AvatarFitError):
    pass


class BehindCamera(AvatarFitError):
    pass


class DegenerateGeometry(AvatarFitError):
    pass


class InsufficientViews(AvatarFitError):
    pass


class NoConsensus(AvatarFitError):
    pass


class EmptyMask(AvatarFitError):
    pass


class MissingUVs(AvatarFitError):
    pass


class ParseError(AvatarFitError):
    def __init__(self, message, path=None, line=None):
        if line is not None:
            message = f"{path or '<input>'}:{line}: {message}"
        super().__init__(message)
        self.path = path
        self.line = line


class ManifestError(AvatarFitError):
    pass


class ShapeMismatch(AvatarFitError):
    pass


class BlobTruncated(AvatarFitError):
    pass


class UnsupportedFeatureWarning(UserWarning):
    """Input used a feature outside the core contract and was coerced."""
