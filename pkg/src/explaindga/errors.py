"""Exception hierarchy shared by all explaindga modules."""


class ExplainDGAError(Exception):
    """Base class for every error raised by this package."""


class NoSubdomain(ExplainDGAError):
    """The domain consists of a public suffix only."""


class InvalidDomain(ExplainDGAError):
    pass


class EmptyInput(ExplainDGAError, ValueError):
    pass


class TooShort(ExplainDGAError, ValueError):
    pass


class AllDegenerate(ExplainDGAError):
    pass


class ClassTooSmall(ExplainDGAError, ValueError):
    pass


class EmptyIntersection(ExplainDGAError):
    pass


class EmptyClass(ExplainDGAError, ValueError):
    pass


class EmptyTraining(ExplainDGAError, ValueError):
    pass


class DegenerateClass(ExplainDGAError, ValueError):
    pass


class DimensionMismatch(ExplainDGAError, ValueError):
    pass


class UntrainedModel(ExplainDGAError):
    pass


class NonSquare(ExplainDGAError, ValueError):
    pass


class InvalidTrials(ExplainDGAError, ValueError):
    pass


class ExhaustedSpace(ExplainDGAError):
    pass


class UnknownFeature(ExplainDGAError, KeyError):
    pass
