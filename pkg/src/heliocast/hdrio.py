"""File formats: PFM and Radiance HDR images, PGM/PNG masks, metadata sidecars.

PFM files are written little-endian ("PF", dims, negative scale line,
rows bottom-to-top of float32 RGB).  Masks use 8-bit PGM (P5) or PNG with
255 = sky.  An optional sidecar ``<image>.meta`` holds capture metadata
as ``key value`` lines (latitude, longitude, instant, gravity_x/y/z).
"""

from __future__ import annotations

import os
from datetime import datetime

import numpy as np

from heliocast.errors import FormatError
from heliocast.frames import GeoTime
from heliocast.imaging import HdrImage, SkyAperture, projection_for_shape


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic not in (b"PF", b"Pf"):
            raise FormatError(f"{path}: not a PFM file (magic {magic!r})")
        dims = fh.readline().split()
        if len(dims) != 2:
            raise FormatError(f"{path}: malformed PFM dimension line")
        width, height = int(dims[0]), int(dims[1])
        scale = float(fh.readline().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        channels = 3 if magic == b"PF" else 1
        count = width * height * channels
        data = np.frombuffer(fh.read(count * 4), dtype=dtype, count=count)
    data = data.reshape(height, width, channels) if channels == 3 else data.reshape(height, width)
    data = np.flipud(data).astype(np.float64) * abs(scale)
    if channels == 1:
        data = np.repeat(data[..., None], 3, axis=2)
    return np.ascontiguousarray(data)


def write_pfm(path, data: np.ndarray) -> None:
    data = np.asarray(data, dtype=np.float32)
    if data.ndim != 3 or data.shape[2] != 3:
        raise FormatError("PFM writer expects (H, W, 3) data")
    with open(path, "wb") as fh:
        fh.write(b"PF\n")
        fh.write(f"{data.shape[1]} {data.shape[0]}\n".encode())
        fh.write(b"-1.0\n")
        fh.write(np.flipud(data).astype("<f4").tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        tokens: list[bytes] = []
        while len(tokens) < 4:
            line = fh.readline()
            if not line:
                raise FormatError(f"{path}: truncated PGM header")
            line = line.split(b"#", 1)[0]
            tokens.extend(line.split())
        if tokens[0] != b"P5":
            raise FormatError(f"{path}: not a binary PGM")
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
        if maxval != 255:
            raise FormatError(f"{path}: PGM maxval must be 255")
        data = np.frombuffer(fh.read(width * height), dtype=np.uint8)
    return data.reshape(height, width).copy()


def write_pgm(path, data: np.ndarray) -> None:
    data = np.asarray(data, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode())
        fh.write(data.tobytes())


def read_mask(path) -> np.ndarray:
    """Binary mask from PGM or PNG; 255 (or any nonzero) = sky."""
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".pgm":
        raw = read_pgm(path)
    elif ext == ".png":
        import cv2

        raw = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
        if raw is None:
            raise FormatError(f"{path}: unreadable PNG")
    else:
        raise FormatError(f"{path}: masks must be .pgm or .png")
    return (raw > 127).astype(np.uint8)


def read_metadata(path):
    """Parse a sidecar metadata file; returns (GeoTime or None, gravity or None)."""
    kv = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise FormatError(f"{path}:{lineno}: expected 'key value'")
            kv[parts[0]] = parts[1].strip()
    geo = None
    if {"latitude", "longitude", "instant"} <= kv.keys():
        geo = GeoTime(
            latitude=float(kv["latitude"]),
            longitude=float(kv["longitude"]),
            instant=datetime.fromisoformat(kv["instant"].replace("Z", "+00:00")),
        )
    gravity = None
    if {"gravity_x", "gravity_y", "gravity_z"} <= kv.keys():
        gravity = np.array(
            [float(kv["gravity_x"]), float(kv["gravity_y"]), float(kv["gravity_z"])]
        )
    return geo, gravity


def load_image(path) -> HdrImage:
    """Load a PFM or Radiance HDR image plus its optional .meta sidecar."""
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".pfm":
        data = read_pfm(path)
    elif ext == ".hdr":
        import cv2

        bgr = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
        if bgr is None or bgr.ndim != 3:
            raise FormatError(f"{path}: unreadable Radiance HDR")
        data = bgr[..., ::-1].astype(np.float64)
    else:
        raise FormatError(f"{path}: HDR input must be .pfm or .hdr")
    geo = gravity = None
    meta_path = str(path) + ".meta"
    if os.path.exists(meta_path):
        geo, gravity = read_metadata(meta_path)
    return HdrImage(data=data, geo=geo, gravity=gravity)


def load_aperture(path) -> SkyAperture:
    mask = read_mask(path)
    proj = projection_for_shape(mask.shape[1], mask.shape[0])
    return SkyAperture(mask=mask, projection=proj)


def save_aperture(path, aperture: SkyAperture) -> None:
    write_pgm(path, aperture.mask * 255)
