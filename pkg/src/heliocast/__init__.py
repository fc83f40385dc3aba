"""Forecast solar-panel irradiance from a single hemispherical image.

The pipeline: recover the camera orientation from sun/gravity vectors,
segment the sky aperture from the image, model the sky radiance with the
Perez all-weather model, and add the irradiance reflected off the
surrounding scene.  A synthetic Lambertian canyon simulator provides
ground truth for validation.
"""

from heliocast.errors import (
    ConfigError,
    DomainError,
    FormatError,
    GeometryError,
    HeliocastError,
    RangeError,
)

__version__ = "0.1.0"

__all__ = [
    "HeliocastError",
    "GeometryError",
    "RangeError",
    "DomainError",
    "FormatError",
    "ConfigError",
]
