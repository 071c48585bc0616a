"""Exception taxonomy. Every failure mode named by a module contract gets a class here."""


class MirrorError(Exception):
    """Base class for all errors raised by this package."""


# frame sources
class SourceUnavailable(MirrorError):
    pass


class UnsupportedFormat(MirrorError):
    pass


class SourceClosed(MirrorError):
    pass


class WrongChannelCount(MirrorError):
    pass


class ZeroDimension(MirrorError):
    pass


# cascade / detection
class ParseError(MirrorError):
    pass


class SchemaError(MirrorError):
    pass


class BoundsError(MirrorError):
    pass


class WindowOutOfBounds(MirrorError):
    pass


# tensor container and kernels
class BadMagic(MirrorError):
    pass


class TruncatedTensor(MirrorError):
    pass


class DuplicateName(MirrorError):
    pass


class ShapeMismatch(MirrorError):
    pass


class BadGrouping(MirrorError):
    pass


# classifier
class MissingTensor(MirrorError):
    pass


class ShapeInconsistent(MirrorError):
    pass


class UnknownArchitecture(MirrorError):
    pass


class BoxOutOfBounds(MirrorError):
    pass


# affect mapping
class EmptyBucket(MirrorError):
    pass


# tokenizer / language model
class InconsistentVocab(MirrorError):
    pass


class UnknownToken(MirrorError):
    pass


class ContextOverflow(MirrorError):
    pass


class EmptyGeneration(MirrorError):
    pass


# session engine
class StaleEvent(MirrorError):
    pass


# persistence
class IoFailure(MirrorError):
    pass


class CorruptRecord(MirrorError):
    pass


class DuplicateId(MirrorError):
    pass


# gateway
class BindFailure(MirrorError):
    pass


class ModelLoadFailure(MirrorError):
    pass


class ConfigError(MirrorError):
    pass
