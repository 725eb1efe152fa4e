"""Exception types raised across the package."""


class CopscreenError(ValueError):
    """Base class for every domain error raised by copscreen."""


class InsufficientDataError(CopscreenError):
    pass


class DegenerateWindowError(CopscreenError):
    """All kernel weights underflowed to zero."""


class SingularDesignError(CopscreenError):
    pass


class DegenerateVarianceError(CopscreenError):
    """A variance estimate is too small to standardise a statistic."""


class DesignTooLargeError(CopscreenError):
    pass


class SchemaError(CopscreenError):
    pass


class ParseError(CopscreenError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column
