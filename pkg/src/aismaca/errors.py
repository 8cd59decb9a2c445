"""Exception types shared across the package."""


class AisMacaError(Exception):
    """Base class for all errors raised by aismaca."""


class ContractError(AisMacaError, ValueError):
    """An argument violates an operation's precondition."""


class ResourceLimitError(AisMacaError):
    """An exhaustive operation was asked to exceed its size cap."""


class EncodingError(AisMacaError, ValueError):
    """A sequence or structure string contains a symbol with no encoding."""


class NumericalError(AisMacaError, ArithmeticError):
    """A linear system could not be solved as posed."""


class ParseError(AisMacaError, ValueError):
    """Malformed FASTA-framed input."""


class LoadError(AisMacaError):
    """A dataset, manifest or config file could not be loaded."""
