"""Weather time-series ingestion and synthetic clear-sky fixtures.

Weather CSV schema: header ``timestamp,ghi_wm2,dhi_wm2,dni_wm2`` with an
optional trailing ``ghi_clear_wm2`` column, ISO-8601 UTC timestamps,
UTF-8, LF line endings.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Optional

from heliocast.errors import FormatError, ParseError
from heliocast.frames import GeoTime
from heliocast.solar import solar_position

GHI_CLOSURE_SLACK = 50.0  # W/m^2, measurement-noise allowance

HEADER = "timestamp,ghi_wm2,dhi_wm2,dni_wm2"
HEADER_CLEAR = HEADER + ",ghi_clear_wm2"


@dataclass(frozen=True)
class WeatherRecord:
    instant: datetime
    ghi: float
    dhi: float
    dni: float
    ghi_clear: Optional[float] = None

    def __post_init__(self):
        vals = [self.ghi, self.dhi, self.dni] + (
            [self.ghi_clear] if self.ghi_clear is not None else []
        )
        if any(not math.isfinite(v) or v < 0 for v in vals):
            raise ParseError("irradiances must be finite and >= 0")
        inst = self.instant
        if inst.tzinfo is None:
            inst = inst.replace(tzinfo=timezone.utc)
        object.__setattr__(self, "instant", inst.astimezone(timezone.utc))

    @property
    def consistent(self) -> bool:
        """GHI within the closure slack of DHI + DNI (loose sanity bound)."""
        return self.ghi <= self.dhi + self.dni + GHI_CLOSURE_SLACK


@dataclass
class WeatherSeries:
    records: list[WeatherRecord]
    nominal_step: float = field(default=0.0)  # seconds

    def __post_init__(self):
        times = [r.instant for r in self.records]
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise FormatError("weather timestamps must be strictly increasing")
        if self.nominal_step == 0.0 and len(times) >= 2:
            self.nominal_step = (times[1] - times[0]).total_seconds()

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


def _parse_timestamp(tok: str) -> datetime:
    return datetime.fromisoformat(tok.replace("Z", "+00:00"))


def load_weather(path) -> WeatherSeries:
    """Parse and validate a weather CSV; inconsistent rows produce warnings."""
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file")
    header = lines[0].strip()
    if header not in (HEADER, HEADER_CLEAR):
        raise FormatError(f"{path}: unexpected header {header!r}")
    has_clear = header == HEADER_CLEAR
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != (5 if has_clear else 4):
            raise ParseError(f"{path}:{lineno}: wrong field count")
        try:
            rec = WeatherRecord(
                instant=_parse_timestamp(parts[0]),
                ghi=float(parts[1]),
                dhi=float(parts[2]),
                dni=float(parts[3]),
                ghi_clear=float(parts[4]) if has_clear else None,
            )
        except ParseError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
        if not rec.consistent:
            warnings.warn(
                f"{path}:{lineno}: ghi exceeds dhi + dni + {GHI_CLOSURE_SLACK:g}",
                stacklevel=2,
            )
        records.append(rec)
    return WeatherSeries(records=records)


def save_weather(path, series: WeatherSeries) -> None:
    has_clear = any(r.ghi_clear is not None for r in series)
    with open(path, "w", newline="\n") as fh:
        fh.write((HEADER_CLEAR if has_clear else HEADER) + "\n")
        for r in series:
            row = [
                r.instant.strftime("%Y-%m-%dT%H:%M:%SZ"),
                f"{r.ghi:.6g}",
                f"{r.dhi:.6g}",
                f"{r.dni:.6g}",
            ]
            if has_clear:
                row.append(f"{(r.ghi_clear if r.ghi_clear is not None else r.ghi):.6g}")
            fh.write(",".join(row) + "\n")


# Clear-sky template constants (fixed-turbidity shape; only the shape
# matters for the desk-scale tests that consume this fixture)
CLEAR_DNI_MAX = 950.0
CLEAR_DNI_EXTINCTION = 0.13
CLEAR_DHI_MAX = 110.0


def clear_sky_profile(zenith):
    """(DNI, DHI) of the analytic clear-sky template at a sun zenith (rad).

    Accepts scalars or arrays; zero below the horizon.
    """
    zenith = np.asarray(zenith, dtype=np.float64)
    cos_z = np.cos(zenith)
    up = cos_z > 0.0
    safe = np.where(up, cos_z, 1.0)
    dni = np.where(up, CLEAR_DNI_MAX * np.exp(-CLEAR_DNI_EXTINCTION / safe), 0.0)
    dhi = np.where(up, CLEAR_DHI_MAX * np.sqrt(safe), 0.0)
    if dni.ndim == 0:
        return float(dni), float(dhi)
    return dni, dhi


def synth_clear_year(
    latitude: float,
    longitude: float,
    step_seconds: float = 3600.0,
    year: int = 2025,
) -> WeatherSeries:
    """Deterministic clear-sky year from the analytic template."""
    records = []
    t = datetime(year, 1, 1, tzinfo=timezone.utc)
    end = datetime(year + 1, 1, 1, tzinfo=timezone.utc)
    step = timedelta(seconds=step_seconds)
    while t < end:
        sun = solar_position(GeoTime(latitude, longitude, t))
        dni, dhi = clear_sky_profile(sun.zenith)
        ghi = dni * math.cos(sun.zenith) + dhi if sun.zenith < math.pi / 2 else 0.0
        records.append(
            WeatherRecord(instant=t, ghi=ghi, dhi=dhi, dni=dni, ghi_clear=ghi)
        )
        t += step
    return WeatherSeries(records=records, nominal_step=step_seconds)
