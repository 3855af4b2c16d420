"""Exception types shared across the package."""


class SynwatchError(Exception):
    """Base class for all synwatch errors."""


class ConfigError(SynwatchError):
    """Detector configuration violates a parameter constraint."""


class SequencingError(SynwatchError):
    """Samples were fed to a detector out of order."""


class FormatError(SynwatchError):
    """Input stream does not match the declared or sniffed format."""


class TruncationError(FormatError):
    """Input stream ended mid-record.

    ``offset`` is the byte offset at which the truncation was detected.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class UnsupportedFormatError(FormatError):
    """Recognized but deliberately unsupported input (pcapng, IPv6, VLAN, ...)."""


class ScenarioError(SynwatchError):
    """Synthetic-trace scenario violates an invariant."""


class MetricError(SynwatchError):
    """A metric is undefined for the given trace (no episodes / no benign intervals)."""
