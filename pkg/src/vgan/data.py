"""Cube and image I/O, normalisation, patch sampling, stitching, synthetic data.

Spectral cubes are stored as ``SPC1`` files::

    b"SPC1" | u32 height | u32 width | u32 bands   (little-endian)
    | height*width*bands float32, band-sequential (band-major, then rows)

RGB images are 8-bit PNGs.
"""

import json
import os
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import DimensionError, FormatError

SPC_MAGIC = b"SPC1"
_SPC_HEADER = struct.Struct("<4sIII")
MAX_CUBE_VALUES = 1 << 34


@dataclass
class SpectralCube:
    """An ``H x W x B`` radiance array (channel-last in memory)."""

    values: np.ndarray
    wavelengths: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 3:
            raise DimensionError(f"cube must be H x W x B, got shape {self.values.shape}")
        if self.bands < 4:
            raise DimensionError(f"a spectral cube needs at least 4 bands, got {self.bands}")
        if not np.all(np.isfinite(self.values)):
            raise FormatError("cube contains NaN or Inf")

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def bands(self):
        return self.values.shape[2]

    @property
    def shape(self):
        return self.values.shape


@dataclass
class RgbImage:
    """Three-channel image tagged with its value range.

    ``"byte"`` images hold uint8 in [0, 255]; ``"normalized"`` images hold
    floats in [-1, 1].
    """

    pixels: np.ndarray
    range: str = "byte"

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim != 3 or p.shape[2] != 3:
            raise DimensionError(f"RGB image must be H x W x 3, got {p.shape}")
        if self.range == "byte":
            if p.dtype != np.uint8:
                if p.size and (p.min() < 0 or p.max() > 255):
                    raise ValueError("byte image values outside [0, 255]")
                p = p.astype(np.uint8)
        elif self.range == "normalized":
            p = p.astype(np.float32)
            if p.size and (p.min() < -1.0 or p.max() > 1.0):
                raise ValueError("normalized image values outside [-1, 1]")
        else:
            raise ValueError(f"unknown range tag {self.range!r}")
        self.pixels = p

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    def normalized(self):
        if self.range == "normalized":
            return self
        return RgbImage(self.pixels.astype(np.float32) / np.float32(127.5) - np.float32(1.0), "normalized")

    def to_bytes(self):
        if self.range == "byte":
            return self
        return RgbImage(to_byte_range(self.pixels), "byte")


def to_byte_range(values):
    """Map [-1, 1] floats to uint8 with rounding and clipping."""
    v = (np.asarray(values, dtype=np.float64) + 1.0) * 127.5
    return np.clip(np.rint(v), 0, 255).astype(np.uint8)


# --------------------------------------------------------------------------
# files


def _atomic_write(path, data):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def cube_bytes(cube):
    h, w, b = cube.shape
    payload = np.ascontiguousarray(cube.values.transpose(2, 0, 1), dtype="<f4").tobytes()
    return _SPC_HEADER.pack(SPC_MAGIC, h, w, b) + payload


def save_cube(cube, path):
    _atomic_write(path, cube_bytes(cube))


def parse_cube(data):
    if len(data) < _SPC_HEADER.size:
        raise FormatError("cube file is truncated (incomplete header)")
    magic, h, w, b = _SPC_HEADER.unpack_from(data)
    if magic != SPC_MAGIC:
        raise FormatError("not an SPC1 cube (bad magic)")
    count = h * w * b
    if count == 0 or count > MAX_CUBE_VALUES:
        raise FormatError(f"implausible cube dimensions {h}x{w}x{b}")
    need = _SPC_HEADER.size + 4 * count
    if len(data) < need:
        raise FormatError(f"cube payload is truncated: {len(data)} of {need} bytes")
    if len(data) > need:
        raise FormatError("trailing bytes after cube payload")
    bsq = np.frombuffer(data, dtype="<f4", count=count, offset=_SPC_HEADER.size).reshape(b, h, w)
    return SpectralCube(bsq.transpose(1, 2, 0).astype(np.float32))


def load_cube(path):
    with open(path, "rb") as fh:
        return parse_cube(fh.read())


def read_png(path):
    with Image.open(path) as im:
        return RgbImage(np.asarray(im.convert("RGB"), dtype=np.uint8), "byte")


def png_bytes(img, text=None):
    """Encode as 8-bit RGB PNG; ``text`` entries become tEXt chunks."""
    import io

    from PIL.PngImagePlugin import PngInfo

    info = None
    if text:
        info = PngInfo()
        for k, v in text.items():
            info.add_text(k, v)
    buf = io.BytesIO()
    Image.fromarray(img.to_bytes().pixels, mode="RGB").save(buf, format="PNG", pnginfo=info)
    return buf.getvalue()


def write_png(img, path, text=None):
    _atomic_write(path, png_bytes(img, text))


# --------------------------------------------------------------------------
# normalisation


@dataclass
class NormalizationStats:
    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        self.low = np.asarray(self.low, dtype=np.float64)
        self.high = np.asarray(self.high, dtype=np.float64)
        if self.low.shape != self.high.shape:
            raise DimensionError("low/high shapes differ")

    @property
    def degenerate(self):
        return ~(self.high > self.low)

    @classmethod
    def identity(cls, bands):
        return cls(-np.ones(bands), np.ones(bands))

    def to_dict(self):
        return {"low": self.low.tolist(), "high": self.high.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["low"], d["high"])


def compute_stats(cube, low_pct=1.0, high_pct=99.0):
    values = cube.values.reshape(-1, cube.bands).astype(np.float64)
    low, high = np.percentile(values, [low_pct, high_pct], axis=0)
    return NormalizationStats(low, high)


def normalize_cube(cube, stats):
    """Clip each band to [low, high] and map affinely onto [-1, 1].

    Bands with ``low == high`` carry no information; they become 0 and a
    warning names them.
    """
    if stats.low.shape != (cube.bands,):
        raise DimensionError(f"stats cover {stats.low.size} bands, cube has {cube.bands}")
    bad = stats.degenerate
    span = np.where(bad, 1.0, stats.high - stats.low)
    v = np.clip(cube.values.astype(np.float64), stats.low, stats.high)
    out = 2.0 * (v - stats.low) / span - 1.0
    if bad.any():
        warnings.warn(f"degenerate bands mapped to 0: {np.flatnonzero(bad).tolist()}", stacklevel=2)
        out[..., bad] = 0.0
    return SpectralCube(out.astype(np.float32), cube.wavelengths, dict(cube.meta))


def denormalize_cube(values, stats):
    v = np.asarray(values, dtype=np.float64)
    return stats.low + (v + 1.0) * 0.5 * (stats.high - stats.low)


# --------------------------------------------------------------------------
# patches


def dihedral(patch, k):
    """One of the 8 symmetries of the square: rotate by ``k % 4`` quarter
    turns, then mirror left-right when ``k >= 4``."""
    out = np.rot90(patch, k % 4, axes=(0, 1))
    if k >= 4:
        out = out[:, ::-1]
    return np.ascontiguousarray(out)


def inverse_dihedral(patch, k):
    out = patch[:, ::-1] if k >= 4 else patch
    return np.ascontiguousarray(np.rot90(out, -(k % 4), axes=(0, 1)))


def patch_at(sources, size, seed, index, augment=True):
    """The ``index``-th patch of the stream defined by ``seed``.

    Each draw uses its own generator seeded by ``(seed, index)``, so any
    stretch of the stream can be reproduced without replaying the rest.
    """
    rng = np.random.default_rng([seed, index])
    src = sources[int(rng.integers(len(sources)))] if len(sources) > 1 else sources[0]
    h, w = src.shape[:2]
    top = int(rng.integers(h - size + 1))
    left = int(rng.integers(w - size + 1))
    patch = src[top:top + size, left:left + size]
    if augment:
        patch = dihedral(patch, int(rng.integers(8)))
    return np.ascontiguousarray(patch)


def sample_patches(sources, size=128, count=None, seed=0, augment=True, start=0):
    """Yield ``count`` patches (endless when ``count`` is None).

    ``sources`` are ``H x W x C`` arrays, each at least ``size`` on a side.
    Corners are uniform over all valid positions; overlap is allowed.
    """
    sources = [np.asarray(s) for s in sources]
    if not sources:
        raise ValueError("no sources to sample from")
    for s in sources:
        if s.shape[0] < size or s.shape[1] < size:
            raise DimensionError(f"source {s.shape[:2]} smaller than patch size {size}")
    i = start
    while count is None or i < start + count:
        yield patch_at(sources, size, seed, i, augment)
        i += 1


# --------------------------------------------------------------------------
# stitching


def _pad_mode(n):
    return "reflect" if n > 1 else "edge"


def stitch_tiles(cube, model, tile=128):
    """Visualise a whole (normalised) cube tile by tile.

    The cube is reflect-padded up to multiples of ``tile``, cut into
    non-overlapping tiles, each tile is passed through ``model`` (an
    ``H x W x B`` -> ``H x W x 3`` callable returning values in [-1, 1]),
    and the padding is cropped from the reassembled image.
    """
    values = cube.values if isinstance(cube, SpectralCube) else np.asarray(cube, dtype=np.float32)
    h, w, _ = values.shape
    ph = (-h) % tile
    pw = (-w) % tile
    padded = values
    if ph:
        padded = np.pad(padded, ((0, ph), (0, 0), (0, 0)), mode=_pad_mode(h))
    if pw:
        padded = np.pad(padded, ((0, 0), (0, pw), (0, 0)), mode=_pad_mode(w))
    out = np.zeros(padded.shape[:2] + (3,), dtype=np.float32)
    for top in range(0, padded.shape[0], tile):
        for left in range(0, padded.shape[1], tile):
            block = np.ascontiguousarray(padded[top:top + tile, left:left + tile])
            out[top:top + tile, left:left + tile] = model(block)
    return RgbImage(to_byte_range(out[:h, :w]), "byte")


# --------------------------------------------------------------------------
# synthetic data


@dataclass
class SyntheticLift:
    """Linear RGB -> spectrum map used to fabricate cubes with known colours.

    ``matrix`` is ``bands x 3``, non-negative, each column summing to 1.
    """

    matrix: np.ndarray
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[1] != 3:
            raise DimensionError(f"lift matrix must be bands x 3, got {self.matrix.shape}")
        if np.any(self.matrix < 0):
            raise ValueError("lift matrix must be non-negative")

    @property
    def bands(self):
        return self.matrix.shape[0]

    def to_dict(self):
        return {"matrix": self.matrix.tolist(), "sigma": self.sigma, "seed": self.seed,
                "rgb_scale": "byte/255"}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["matrix"]), float(d["sigma"]), int(d["seed"]))


def make_lift(bands, sigma=0.0, seed=0):
    """Smooth, overlapping Gaussian band responses to the B, G and R primaries."""
    if bands <= 0:
        raise ValueError(f"band count must be positive, got {bands}")
    centers = np.linspace(0.0, 1.0, bands)
    peaks = np.array([0.8, 0.5, 0.2])  # R, G, B along a normalised wavelength axis
    m = np.exp(-((centers[:, None] - peaks[None, :]) ** 2) / (2 * 0.18 ** 2)) + 0.02
    return SyntheticLift(m / m.sum(axis=0, keepdims=True), sigma, seed)


def save_lift(lift, path):
    _atomic_write(path, json.dumps(lift.to_dict(), indent=2, sort_keys=True).encode())


def load_lift(path):
    with open(path) as fh:
        return SyntheticLift.from_dict(json.load(fh))


def synthesize_cube(rgb, lift):
    """Spectrum of each pixel = ``lift.matrix @ (rgb / 255)`` plus N(0, sigma) noise."""
    if lift.bands < 4:
        raise ValueError(f"synthetic cubes need at least 4 bands, got {lift.bands}")
    unit = rgb.to_bytes().pixels.astype(np.float64) / 255.0
    spectra = unit @ lift.matrix.T
    if lift.sigma > 0:
        rng = np.random.default_rng(lift.seed)
        spectra = spectra + rng.normal(0.0, lift.sigma, size=spectra.shape)
    return SpectralCube(spectra.astype(np.float32), meta={"lift": lift.to_dict()})


def recover_rgb(cube, lift):
    """Least-squares inverse of the lift; returns unit-range RGB floats."""
    return cube.values.astype(np.float64) @ np.linalg.pinv(lift.matrix).T


_PALETTE = np.array([
    [62, 104, 48],     # vegetation
    [96, 132, 70],     # grass
    [44, 72, 104],     # water
    [150, 86, 66],     # roofs
    [168, 166, 158],   # concrete
    [140, 122, 94],    # bare soil
], dtype=np.float64)


def make_scene(size=64, seed=0, regions=12):
    """A small land-cover-like RGB image: patchy regions in natural colours,
    with shading and mild texture."""
    from scipy.ndimage import gaussian_filter

    rng = np.random.default_rng(seed)
    h, w = (size, size) if np.isscalar(size) else size
    pts = rng.uniform(0, 1, size=(regions, 2)) * (h, w)
    labels = rng.integers(len(_PALETTE), size=regions)
    yy, xx = np.mgrid[0:h, 0:w]
    d = (yy[..., None] - pts[:, 0]) ** 2 + (xx[..., None] - pts[:, 1]) ** 2
    region = np.argmin(d, axis=-1)
    img = _PALETTE[labels[region]]
    shade = gaussian_filter(rng.normal(0, 1, size=(h, w)), sigma=size / 8)
    shade = 1.0 + 0.25 * shade / (np.abs(shade).max() + 1e-12)
    texture = rng.normal(0, 6, size=(h, w, 3))
    img = gaussian_filter(img, sigma=(0.7, 0.7, 0)) * shade[..., None] + texture
    return RgbImage(np.clip(np.rint(img), 0, 255).astype(np.uint8), "byte")
