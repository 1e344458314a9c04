"""Exception types shared across the package.

The CLI maps these onto exit codes: DataFormatError -> 2 (data/parse),
SingularSystemError -> 3 (numerical failure). Plain ValueError is used for
programming-contract violations (wrong dimensions, empty input where the
caller must guarantee non-empty).
"""


class PostscoreError(Exception):
    """Base class for package errors."""


class DataFormatError(PostscoreError):
    """A file does not match its declared format.

    Carries the path and (1-based) line number when one is known.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = str(path)
            if line is not None:
                prefix += f":{line}"
            prefix += ": "
        super().__init__(prefix + message)


class SingularSystemError(PostscoreError):
    """The normal equations are singular (or numerically indefinite).

    Raised with lambda == 0; the fix is to pass a positive ridge coefficient.
    """

    def __init__(self, message="normal equations are singular"):
        super().__init__(message + "; retry with a ridge coefficient lambda > 0")
