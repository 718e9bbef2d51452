"""Exception hierarchy shared by all modules."""


class PredUpdateError(Exception):
    """Base class for errors raised by this package."""


class DataError(PredUpdateError, ValueError):
    """Malformed input: bad ids, vectors, matrices or files."""


class SnapshotError(DataError):
    """A store snapshot could not be decoded."""


class VersionMismatchError(SnapshotError):
    pass


class DegenerateLikelihoodError(PredUpdateError, ArithmeticError):
    """An observation had zero likelihood under every class with prior mass."""
