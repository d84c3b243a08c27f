"""Exception hierarchy shared by every module."""


class InputError(ValueError):
    """Invalid argument: wrong shape, non-finite value, bad file content."""


class DegenerateInputError(InputError):
    """Input is well formed but the requested quantity is undefined for it."""


class SelectionError(RuntimeError):
    """No candidate bandwidth produced a usable discriminability score."""
