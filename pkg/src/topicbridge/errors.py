"""Exception types raised across the package.

Every error the engine raises on bad input or a broken contract derives
from :class:`TopicBridgeError`, so callers (notably the CLI) can catch one
base class and turn it into a diagnostic line and a nonzero exit status.
"""


class TopicBridgeError(Exception):
    """Base class for all engine errors."""


class EmptyVocabulary(TopicBridgeError):
    """No token survived vocabulary filtering."""


class ZeroTotal(TopicBridgeError):
    """A bag of words with total count zero cannot be normalized."""


class DimensionMismatch(TopicBridgeError):
    """An embedding-file row has the wrong number of fields."""


class ParseError(TopicBridgeError):
    """A field that should be numeric is not."""


class FileFormatError(TopicBridgeError):
    """A structured input file violates its documented layout."""


class LengthMismatch(TopicBridgeError):
    """Two vectors that must share a length do not."""


class DimMismatch(TopicBridgeError):
    """Matrix shapes incompatible with the requested operation."""


class NotADistribution(TopicBridgeError):
    """A vector expected to lie on the probability simplex does not."""


class EmptyMask(TopicBridgeError):
    """A regularizer was evaluated with no topic masked in."""


class DegenerateColumn(TopicBridgeError):
    """A soft-label column sums to zero, so sharpening is undefined."""


class DegenerateRow(TopicBridgeError):
    """A soft-label row is all zeros, so sharpening is undefined."""


class RenormalizationUnderflow(TopicBridgeError):
    """Restricted document-topic mass is too small to renormalize."""


class NamelessTopic(TopicBridgeError):
    """A surface name embeds to the zero vector, so it cannot guide anything."""


class NonFiniteLoss(TopicBridgeError):
    """The training objective or its gradient became NaN or infinite."""


class InsufficientVocab(TopicBridgeError):
    """The vocabulary is too small for the requested top-word list."""


class CheckpointError(TopicBridgeError):
    """A checkpoint file failed its magic, version, size, or hash check."""
