"""Exception hierarchy shared by all fastzip modules."""


class FastZipError(Exception):
    """Base class for every error raised by this package."""


class DataError(FastZipError, ValueError):
    """Malformed input data (CSV files, fingerprint dumps, config values)."""


# signal pipeline

class EmptyRecording(FastZipError):
    pass


class GravityEstimateDegenerate(FastZipError):
    pass


class InvalidPressure(FastZipError, ValueError):
    pass


class WindowTooShort(FastZipError):
    pass


# activity filter

class PowerUndefined(FastZipError):
    pass


class SnrUndefined(FastZipError):
    pass


# quantizer

class NoSensors(FastZipError):
    pass


class IncompatibleFingerprints(FastZipError):
    pass


# security calculator

class ThresholdTooLow(FastZipError, ValueError):
    pass


class NoFiniteSize(FastZipError):
    pass


class AttackImpossible(FastZipError):
    pass


# protocol

class InvalidCode(FastZipError, ValueError):
    pass


class ProtocolError(FastZipError):
    """A pairing session ended without a key.

    ``reason`` is one of the names in :data:`fastzip.transport.ABORT_REASONS`.
    """

    def __init__(self, reason, detail=""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


class ProtocolViolation(ProtocolError):
    def __init__(self, detail=""):
        super().__init__("ProtocolViolation", detail)


# transport framing

class FrameError(FastZipError):
    pass


class FrameTooLarge(FrameError):
    pass


class Truncated(FrameError):
    pass


class UnknownType(FrameError):
    pass


# evaluation harness

class NoData(FastZipError):
    pass


class InsufficientContext(FastZipError):
    def __init__(self, elapsed, bits_so_far):
        self.elapsed = elapsed
        self.bits_so_far = bits_so_far
        super().__init__(
            f"stream exhausted after {elapsed:g} s with {bits_so_far} bits"
        )


class InsufficientCorpus(FastZipError):
    pass
