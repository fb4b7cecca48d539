"""Core data containers (images, sinograms, masks) and their file formats.

Conventions used across the package:

* every multi-dimensional quantity is stored as a flat float64 vector in
  row-major order; 2-D views are derived, never authoritative
* images are ``height x width``, sinograms are ``angles x detectors``
* masks are boolean over the image grid, ``True`` marks a member pixel

File formats:

* "RAWJ": a JSON header (``<base>.json``) next to a binary file
  (``<base>.raw``) of little-endian 64-bit floats. Image headers carry
  ``height``/``width``; sinogram headers carry ``angles``/``detectors``.
  Both carry ``dtype: "f64"`` and ``order: "row-major"``.
* masks: 8-bit binary PGM (P5), nonzero bytes are members.
* mask wire format: run-length encoding of the row-major boolean vector,
  ``[count_false, count_true, count_false, ...]`` starting with the
  (possibly zero) leading run of ``False``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Image",
    "Sinogram",
    "Mask",
    "save_rawj",
    "load_rawj",
    "load_image",
    "load_sinogram",
    "save_mask_pgm",
    "load_mask_pgm",
    "rle_encode",
    "rle_decode",
]


def _as_f64_vector(values, expected, what):
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size != expected:
        raise ValueError(f"{what}: got {v.size} values, expected {expected}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{what}: values must be finite")
    return v


@dataclass(frozen=True)
class Image:
    """A 2-D grayscale image, flattened row-major into ``values``."""

    height: int
    width: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0:
            raise ValueError("image dimensions must be positive")
        object.__setattr__(
            self, "values",
            _as_f64_vector(self.values, self.height * self.width, "Image"))

    @property
    def size(self) -> int:
        return self.height * self.width

    @property
    def grid(self) -> np.ndarray:
        """2-D (height, width) view of the pixel values."""
        return self.values.reshape(self.height, self.width)

    @classmethod
    def from_grid(cls, arr) -> "Image":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D array, got shape {arr.shape}")
        return cls(arr.shape[0], arr.shape[1], arr.ravel())


@dataclass(frozen=True)
class Sinogram:
    """Projection data: one row of detector readings per angle."""

    angles: int
    detectors: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.angles <= 0 or self.detectors <= 0:
            raise ValueError("sinogram dimensions must be positive")
        object.__setattr__(
            self, "values",
            _as_f64_vector(self.values, self.angles * self.detectors,
                           "Sinogram"))

    @property
    def size(self) -> int:
        return self.angles * self.detectors

    @property
    def grid(self) -> np.ndarray:
        return self.values.reshape(self.angles, self.detectors)

    @classmethod
    def from_grid(cls, arr) -> "Sinogram":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D array, got shape {arr.shape}")
        return cls(arr.shape[0], arr.shape[1], arr.ravel())


@dataclass(frozen=True)
class Mask:
    """Boolean pixel-membership map over an image grid."""

    height: int
    width: int
    membership: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.membership)
        if m.dtype != np.bool_:
            m = m != 0
        m = m.ravel()
        if m.size != self.height * self.width:
            raise ValueError(
                f"Mask: got {m.size} entries, expected "
                f"{self.height * self.width}")
        object.__setattr__(self, "membership", m)

    @property
    def size(self) -> int:
        return self.height * self.width

    @property
    def cardinality(self) -> int:
        return int(np.count_nonzero(self.membership))

    @property
    def grid(self) -> np.ndarray:
        return self.membership.reshape(self.height, self.width)

    @classmethod
    def from_grid(cls, arr) -> "Mask":
        arr = np.asarray(arr)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D array, got shape {arr.shape}")
        return cls(arr.shape[0], arr.shape[1], arr.ravel() != 0)

    def indices(self) -> np.ndarray:
        """Row-major flat indices of the member pixels."""
        return np.flatnonzero(self.membership)


# ---------------------------------------------------------------------------
# RAWJ image / sinogram files


def _rawj_base(path) -> Path:
    p = Path(path)
    if p.suffix in (".json", ".raw"):
        p = p.with_suffix("")
    return p


def save_rawj(path, obj) -> Path:
    """Write an Image or Sinogram as a JSON header plus a .raw binary.

    ``path`` may be the base name or either of the two file names; returns
    the header path.
    """
    base = _rawj_base(path)
    if isinstance(obj, Image):
        header = {"height": obj.height, "width": obj.width}
    elif isinstance(obj, Sinogram):
        header = {"angles": obj.angles, "detectors": obj.detectors}
    else:
        raise TypeError(f"cannot save {type(obj).__name__} as RAWJ")
    header["dtype"] = "f64"
    header["order"] = "row-major"
    base.parent.mkdir(parents=True, exist_ok=True)
    base.with_suffix(".json").write_text(json.dumps(header, sort_keys=True))
    obj.values.astype("<f8").tofile(base.with_suffix(".raw"))
    return base.with_suffix(".json")


def load_rawj(path):
    """Read a RAWJ pair back into an Image or Sinogram (by header keys)."""
    base = _rawj_base(path)
    header_path = base.with_suffix(".json")
    raw_path = base.with_suffix(".raw")
    if not header_path.exists():
        raise FileNotFoundError(f"missing RAWJ header {header_path}")
    header = json.loads(header_path.read_text())
    if header.get("dtype", "f64") != "f64":
        raise ValueError(f"unsupported dtype {header['dtype']!r}")
    if header.get("order", "row-major") != "row-major":
        raise ValueError(f"unsupported order {header['order']!r}")
    values = np.fromfile(raw_path, dtype="<f8")
    if "height" in header:
        return Image(int(header["height"]), int(header["width"]), values)
    if "angles" in header:
        return Sinogram(int(header["angles"]), int(header["detectors"]),
                        values)
    raise ValueError(
        "RAWJ header needs height/width or angles/detectors keys")


def load_image(path) -> Image:
    obj = load_rawj(path)
    if not isinstance(obj, Image):
        raise ValueError(f"{path} holds a {type(obj).__name__}, not an Image")
    return obj


def load_sinogram(path) -> Sinogram:
    obj = load_rawj(path)
    if not isinstance(obj, Sinogram):
        raise ValueError(
            f"{path} holds a {type(obj).__name__}, not a Sinogram")
    return obj


# ---------------------------------------------------------------------------
# mask run-length wire codec


def rle_encode(mask: Mask) -> list:
    """Run lengths of the row-major membership vector.

    The first entry counts leading ``False`` pixels and may be 0; runs
    alternate strictly afterwards, so every entry past the first is
    positive and the counts sum to ``mask.size``.
    """
    m = mask.membership
    if m.size == 0:
        return []
    boundaries = np.flatnonzero(m[1:] != m[:-1]) + 1
    edges = np.concatenate(([0], boundaries, [m.size]))
    runs = np.diff(edges).tolist()
    if m[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def rle_decode(height: int, width: int, runs) -> Mask:
    """Inverse of :func:`rle_encode`; validates totals and alternation."""
    n = height * width
    counts = list(runs)
    if any((not isinstance(c, (int, np.integer))) or c < 0 for c in counts):
        raise ValueError("rle: counts must be nonnegative integers")
    if any(c == 0 for c in counts[1:]):
        raise ValueError("rle: only the leading false-run may be zero")
    if sum(counts) != n:
        raise ValueError(
            f"rle: counts sum to {sum(counts)}, expected {n}")
    m = np.zeros(n, dtype=bool)
    pos, value = 0, False
    for c in counts:
        if value:
            m[pos:pos + c] = True
        pos += c
        value = not value
    return Mask(height, width, m)


# ---------------------------------------------------------------------------
# PGM mask files


def save_mask_pgm(path, mask: Mask) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    header = f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii")
    body = np.where(mask.membership, 255, 0).astype(np.uint8).tobytes()
    p.write_bytes(header + body)
    return p


def load_mask_pgm(path) -> Mask:
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary (P5) PGM file")
    # header = magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comment lines allowed
    tokens, pos = [], 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = (int(t) for t in tokens)
    if maxval > 255:
        raise ValueError(f"{path}: 16-bit PGM not supported")
    body = np.frombuffer(data, dtype=np.uint8, count=width * height,
                         offset=pos)
    return Mask(height, width, body != 0)
