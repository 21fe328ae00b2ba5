"""Exception types shared across the package."""


class EgoposeError(Exception):
    """Base class for all package errors."""


# --- BVH / ingestion ---

class BvhError(EgoposeError):
    pass


class MissingSection(BvhError):
    pass


class ChannelMismatch(BvhError):
    pass


class MalformedHierarchy(BvhError):
    pass


class NonFiniteValue(BvhError):
    pass


# --- skeleton / encoding ---

class UpsampleUnsupported(EgoposeError):
    pass


class NonOrthonormalFrame(EgoposeError):
    pass


class ProfileMismatch(EgoposeError):
    pass


class MissingProfileEntry(EgoposeError):
    pass


# --- training / evaluation ---

class SequenceTooShort(EgoposeError):
    pass


class EmptyCorpus(EgoposeError):
    pass


class EmptyInput(EgoposeError):
    pass


class EmptySubset(EgoposeError):
    pass


class InsufficientData(EgoposeError):
    pass


class LayoutHashMismatch(EgoposeError):
    pass


class TooShort(EgoposeError):
    pass


class NonFiniteJacobian(EgoposeError):
    pass


# --- configuration ---

class ConfigError(EgoposeError):
    pass


class ParseError(ConfigError):
    pass


class UnknownKey(ConfigError):
    pass


class ValidationError(ConfigError):
    pass
