"""Exception hierarchy shared across the pipeline stages."""


class SynthsetError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(SynthsetError):
    """Bad configuration: unknown keys, missing required inputs, invalid ranges."""


class DataError(SynthsetError):
    """Bad or inconsistent data: empty masks, exhausted pools, broken output trees."""


class MattingError(SynthsetError):
    """A single image could not be matted; recorded per image, never fatal for a batch."""
