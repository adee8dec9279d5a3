# utils/errors.py
"""Exception types shared by the library and the command line front end.

Every exception carries the exit code the CLI reports for it.
"""


class IMCError(Exception):
    """Base class for errors raised by this package."""
    exit_code = 1


class InputDataError(IMCError, ValueError):
    """Bad input: unreadable files, invalid parameters, degenerate series."""
    exit_code = 2


class StatisticalError(IMCError, ArithmeticError):
    """A statistical procedure could not produce a result (nothing to search, degenerate variance...)."""
    exit_code = 1
