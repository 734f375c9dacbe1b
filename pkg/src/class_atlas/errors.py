"""Exception hierarchy.

Three bases map onto the CLI exit-code contract: ``InputError`` (bad data,
exit 2), ``ConfigError`` (bad parameters or flags, exit 3), and
``InvariantError`` (a broken internal guarantee, exit 4).
"""


class ClassAtlasError(Exception):
    """Base class for all errors raised by this package."""


class InputError(ClassAtlasError):
    """The input data is malformed or inconsistent."""


class ConfigError(ClassAtlasError):
    """A parameter, flag, or configuration value is out of range."""


class InvariantError(ClassAtlasError):
    """An internal invariant was violated; indicates a bug."""


# --- ingest ---

class RaggedRow(InputError):
    pass


class NonNumericCell(InputError):
    pass


class NonFiniteValue(InputError):
    pass


class DuplicateClassName(InputError):
    pass


class RowSumViolation(InputError):
    pass


class BadMagic(InputError):
    pass


class TruncatedPayload(InputError):
    pass


class JSONSchemaError(InputError):
    pass


class EmptyLabelSet(InputError):
    pass


class MalformedRow(InputError):
    pass


class DuplicateLeaf(InputError):
    pass


# --- similarity ---

class WrongKind(ConfigError):
    pass


class TooFewSamples(InputError):
    pass


class UnknownLabel(InputError):
    pass


class MultiLabelInput(InputError):
    pass


class EmptyInput(InputError):
    pass


# --- seriation ---

class AsymmetricInput(InputError):
    pass


class NonZeroDiagonal(InputError):
    pass


class TooFewClasses(InputError):
    pass


class LeafMismatch(InputError):
    pass


class SizeMismatch(InputError):
    pass


class KOutOfRange(ConfigError):
    pass


class NonContiguousPartition(InputError):
    pass


# --- groups ---

class BadClusterCount(ConfigError):
    pass


class BadFuzzifier(ConfigError):
    pass


class SingleBlock(InputError):
    pass


# --- render ---

class OrderingMismatch(InputError):
    pass


class EmptyReport(ConfigError):
    pass


# --- cli / synth ---

class ConfigInvalid(ConfigError):
    pass
