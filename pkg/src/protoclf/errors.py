"""Exception types raised by the engine.

Every error carries a stable ``code`` (its class name) which the HTTP
gateway puts verbatim into ``{"error": code, "detail": ...}`` bodies, so
clients can match on it without parsing messages.
"""


class ProtoclfError(Exception):
    """Base class for all engine errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# ---------------------------------------------------------------------------
# dataset files and embedding providers

class MagicMismatch(ProtoclfError):
    """A binary file does not start with the expected magic bytes."""


class DimMismatch(ProtoclfError):
    """Vector dimensionality disagrees between inputs."""


class CountMismatch(ProtoclfError):
    """Record counts disagree across dataset files."""


class TokenCountMismatch(ProtoclfError):
    """An example's token list length disagrees with its offsets entry."""


class NonFiniteVector(ProtoclfError):
    """An embedding contains NaN or Inf."""


class EmptyInput(ProtoclfError):
    """An operation received an empty token list or empty batch."""


class MaskLengthMismatch(ProtoclfError):
    """A rationale mask length differs from the example's token count."""


class AllTokensRemoved(ProtoclfError):
    """A perturbation would leave no tokens to embed."""


class ProviderCapability(ProtoclfError):
    """The embedding provider cannot serve this request (e.g. novel text)."""


# ---------------------------------------------------------------------------
# similarity and patching

class ZeroVector(ProtoclfError):
    """Cosine similarity of a zero vector is undefined."""


class TooShort(ProtoclfError):
    """The token sequence is too short for the requested patch shape."""


class EnumerationOverflow(ProtoclfError):
    """C(l, k) exceeds the configured patch enumeration cap."""


# ---------------------------------------------------------------------------
# model and losses

class EmptyClass(ProtoclfError):
    """No training candidates exist for some prototype's class."""


class EmptyDataset(ProtoclfError):
    """An operation requires a nonempty dataset."""


class NoOwnClassPrototype(ProtoclfError):
    """An example's class owns no prototype."""


class NoOtherClassPrototype(ProtoclfError):
    """No prototype belongs to a class other than the example's."""


class ZeroProbability(ProtoclfError):
    """A predicted probability underflowed the log floor."""


# ---------------------------------------------------------------------------
# training and interaction

class IndivisibleM(ProtoclfError):
    """Prototype count is not divisible by the number of classes."""


class Diverged(ProtoclfError):
    """Training produced a non-finite loss."""


class FrozenTarget(ProtoclfError):
    """The targeted prototype is frozen."""


class UnknownPrototype(ProtoclfError):
    """No prototype with the given id exists."""


class UnknownExample(ProtoclfError):
    """No example with the given id exists."""


class CertaintyRange(ProtoclfError):
    """Certainty must lie in [0, 1]."""


class InvalidCommand(ProtoclfError):
    """An interaction command violates its schema."""


class ConfigInvalid(ProtoclfError):
    """A config file or request body has an invalid field."""
