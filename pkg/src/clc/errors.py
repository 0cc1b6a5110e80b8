"""Exception hierarchy shared by the codec, the dictionary store and the CLI."""


class ClcError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgument(ClcError, ValueError):
    """A caller passed a value outside an operation's domain."""


class ContractViolation(InvalidArgument):
    """An input broke a structural precondition (shape, symmetry, ...)."""


class EmptyCacheError(ClcError):
    pass


class RegimeError(ClcError, ValueError):
    """The spiked-model parameters leave the positive effective-gap regime."""


class MalformedBitstream(ClcError):
    pass


class DictionaryMismatch(ClcError):
    """Bitstream was produced against a dictionary with a different hash."""


class DictionaryFormatError(ClcError):
    code = 10


class BadMagic(DictionaryFormatError):
    code = 11


class VersionMismatch(DictionaryFormatError):
    code = 12


class HashMismatch(DictionaryFormatError):
    code = 13


class TruncatedFile(DictionaryFormatError):
    code = 14


class ImageFormatError(ClcError, ValueError):
    pass
