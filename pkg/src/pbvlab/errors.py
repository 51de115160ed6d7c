"""Exception hierarchy shared by all pbvlab modules."""


class PbvlabError(Exception):
    """Base class for every error raised by pbvlab."""


class DomainError(PbvlabError, ValueError):
    """An argument lies outside the domain of a physical relation."""


class InputError(PbvlabError, ValueError):
    """Malformed or invalid input data (CSV rows, configs, series).

    Parameters
    ----------
    message : str
        Human readable description.
    row : int, optional
        1-based data row (header excluded) the problem was found on.
    """

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class FitError(PbvlabError):
    """The least-squares engine could not evaluate the problem."""


class NonFiniteModelError(FitError):
    """The model or its Jacobian produced NaN/inf."""

    def __init__(self, message, params=None, x=None, parameter=None):
        super().__init__(message)
        self.params = params
        self.x = x
        self.parameter = parameter
