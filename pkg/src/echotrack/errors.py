"""Exception types raised by the public API."""


class EchotrackError(Exception):
    """Base class for all package-specific errors."""


class DimMismatch(EchotrackError):
    """Two fields that must share grid dimensions do not."""


class TooManyLevels(EchotrackError):
    """A pyramid level would shrink below 2x2 pixels."""


class NonFinite(EchotrackError):
    """An input field contains NaN or infinite entries."""


class Diverged(EchotrackError):
    """Backtracking line search failed to reduce the energy."""


class TooFewDescriptors(EchotrackError):
    """Requested more seeds than there are motion descriptors."""


class ChannelMismatch(EchotrackError):
    """Feature maps with different channel counts cannot be correlated."""


class EmptyDirectory(EchotrackError):
    """A sequence directory contains no readable image files."""


class DimsMismatch(EchotrackError):
    """A sequence frame does not match the dimensions of the first frame."""


class UnsupportedFormat(EchotrackError):
    """An image file is not 8/16-bit grayscale PNG or PGM."""


class ParseError(EchotrackError):
    """An annotation line could not be parsed.  Message names the line."""


class NonMonotoneFrames(EchotrackError):
    """Frame indices decrease within one landmark's annotations."""


class MissingFrame(EchotrackError):
    """A tracklet does not cover an annotated frame."""


class EmptyInput(EchotrackError):
    """A summary was requested over an empty list of errors."""


class BadMagic(EchotrackError):
    """A field file does not start with the LSDF magic bytes."""


class TruncatedFile(EchotrackError):
    """A field file ends before the payload promised by its header."""


class ConfigError(EchotrackError):
    """A configuration file contains an unknown key or a bad value."""
