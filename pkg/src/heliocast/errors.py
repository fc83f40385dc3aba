"""Exception hierarchy shared by all modules."""


class HeliocastError(Exception):
    """Base class for all library errors."""

    kind = "error"


class GeometryError(HeliocastError):
    """Degenerate or unresolvable geometric configuration."""

    kind = "geometry_error"


class RangeError(HeliocastError):
    """Input outside a documented validity window."""

    kind = "range_error"


class DomainError(HeliocastError):
    """Value outside the mathematical domain of an operation."""

    kind = "domain_error"


class FormatError(HeliocastError):
    """Malformed file or inconsistent serialized data."""

    kind = "format_error"


class ParseError(FormatError):
    """Unreadable row or field, with location information."""

    kind = "parse_error"


class ConfigError(HeliocastError):
    """Invalid configuration value."""

    kind = "config_error"
