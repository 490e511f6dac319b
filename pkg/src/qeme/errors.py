"""Shared exception types."""


class InputError(Exception):
    """Malformed input or violated data invariant; loaders reject, never repair."""


class FormatError(InputError):
    """Binary or text container does not conform to its format."""
