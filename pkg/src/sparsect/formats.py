"""Versioned on-disk formats: sinogram binary, raw image, PGM export,
network weights, and the flat key=value experiment manifest.

All binary formats are little-endian.

Sinogram (.sino):  magic "SPCTSINO", u32 version=1, u32 n_views, u32 n_bins,
    f64 det_spacing, u32 image_side, f64 pixel_spacing, f64 angles[n_views],
    f64 values[n_views*n_bins] row-major.
Image (.img):      magic "SPCTIMG1", u32 side, f64 pixel_spacing,
    f64 values[side*side] row-major.
Weights (.net):    magic "SPCTNET1", u32 depth, u32 base_channels,
    u32 n_arrays, then per array: u16 name length, name utf-8, u8 ndim,
    u32 dims[ndim], f32 data.
"""

import struct

import numpy as np

from .net import NetworkParams
from .projector import Geometry, Image, Sinogram

SINO_MAGIC = b"SPCTSINO"
IMG_MAGIC = b"SPCTIMG1"
NET_MAGIC = b"SPCTNET1"


def save_sinogram(sino: Sinogram, path):
    g = sino.geometry
    with open(path, "wb") as fh:
        fh.write(SINO_MAGIC)
        fh.write(struct.pack("<III", 1, g.n_views, g.n_bins))
        fh.write(struct.pack("<d", g.det_spacing))
        fh.write(struct.pack("<I", g.image_side))
        fh.write(struct.pack("<d", g.pixel_spacing))
        fh.write(np.asarray(g.angles, "<f8").tobytes())
        fh.write(np.ascontiguousarray(sino.values, "<f8").tobytes())


def load_sinogram(path) -> Sinogram:
    with open(path, "rb") as fh:
        if fh.read(8) != SINO_MAGIC:
            raise ValueError(f"{path}: not a sinogram file")
        version, n_views, n_bins = struct.unpack("<III", fh.read(12))
        if version != 1:
            raise ValueError(f"{path}: unsupported sinogram version {version}")
        det_spacing, = struct.unpack("<d", fh.read(8))
        image_side, = struct.unpack("<I", fh.read(4))
        pixel_spacing, = struct.unpack("<d", fh.read(8))
        angles = np.frombuffer(fh.read(8 * n_views), "<f8")
        values = np.frombuffer(fh.read(8 * n_views * n_bins), "<f8") \
                   .reshape(n_views, n_bins)
        geom = Geometry(tuple(angles), n_bins, det_spacing, image_side, pixel_spacing)
        return Sinogram(geometry=geom, values=values.copy())


def save_image(image: Image, path):
    with open(path, "wb") as fh:
        fh.write(IMG_MAGIC)
        fh.write(struct.pack("<Id", image.side, image.pixel_spacing))
        fh.write(np.ascontiguousarray(image.values, "<f8").tobytes())


def load_image(path) -> Image:
    with open(path, "rb") as fh:
        if fh.read(8) != IMG_MAGIC:
            raise ValueError(f"{path}: not an image file")
        side, pixel_spacing = struct.unpack("<Id", fh.read(12))
        values = np.frombuffer(fh.read(8 * side * side), "<f8").reshape(side, side)
        return Image(values=values.copy(), pixel_spacing=pixel_spacing)


def save_pgm(values, path, bits=16, window=None):
    """Binary PGM (P5) with linear windowing; window defaults to (min, max)."""
    v = np.asarray(values, dtype=np.float64)
    if window is None:
        window = (float(v.min()), float(v.max()))
    lo, hi = window
    span = hi - lo if hi > lo else 1.0
    maxval = (1 << bits) - 1
    q = np.clip(np.rint((v - lo) / span * maxval), 0, maxval)
    q = q.astype(">u2" if bits == 16 else "u1")
    with open(path, "wb") as fh:
        fh.write(f"P5\n# window {lo!r} {hi!r}\n{v.shape[1]} {v.shape[0]}\n{maxval}\n"
                 .encode())
        fh.write(q.tobytes())


def save_weights(params: NetworkParams, path):
    with open(path, "wb") as fh:
        fh.write(NET_MAGIC)
        fh.write(struct.pack("<III", params.depth, params.base_channels,
                             len(params.weights)))
        for name in sorted(params.weights):
            arr = np.ascontiguousarray(params.weights[name], "<f4")
            nb = name.encode()
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_weights(path) -> NetworkParams:
    with open(path, "rb") as fh:
        if fh.read(8) != NET_MAGIC:
            raise ValueError(f"{path}: not a weights file")
        depth, base_channels, n_arrays = struct.unpack("<III", fh.read(12))
        weights = {}
        for _ in range(n_arrays):
            nlen, = struct.unpack("<H", fh.read(2))
            name = fh.read(nlen).decode()
            ndim, = struct.unpack("<B", fh.read(1))
            dims = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            count = int(np.prod(dims))
            weights[name] = np.frombuffer(fh.read(4 * count), "<f4") \
                              .reshape(dims).copy()
        return NetworkParams(depth, base_channels, weights)


def write_manifest(entries: dict, path):
    with open(path, "w") as fh:
        for key in entries:
            fh.write(f"{key} = {entries[key]}\n")


def read_manifest(path) -> dict:
    entries = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"bad manifest line: {line!r}")
            key, _, value = line.partition("=")
            entries[key.strip()] = value.strip()
    return entries


def write_csv(rows, header, path):
    """Deterministic CSV: floats via repr, fixed row order."""
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(c)) if isinstance(c, (float, np.floating))
                              else str(c) for c in row) + "\n")
