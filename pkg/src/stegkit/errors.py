"""Exception taxonomy. Each class carries the CLI exit code it maps to."""


class StegError(Exception):
    exit_code = 1


class UsageError(StegError):
    exit_code = 1


class FormatError(StegError):
    """Malformed container, missing frame, or unparsable stego text."""

    exit_code = 2


class CapacityError(StegError):
    exit_code = 3

    def __init__(self, needed, available, unit="bytes"):
        self.needed = needed
        self.available = available
        super().__init__(f"needed {needed} {unit}, available {available}")


class IntegrityError(StegError):
    """CRC mismatch, bad padding, missing or wrong passphrase."""

    exit_code = 4


class NumericError(StegError):
    exit_code = 5
