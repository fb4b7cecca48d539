"""Synthetic chest-slice phantoms with an optional vessel-occlusion blob.

A phantom is a list of additive ellipse primitives (body, lungs, one
bright vessel) plus an optional low-intensity disk inside the vessel that
models a filling defect. Rendering clips to [0, 1]. The disk overwrites
the vessel intensity rather than adding to it, so the with-blob and
without-blob variants differ exactly on the disk pixels.

Coordinates are normalized: centers and axes are fractions of the image
side, with (0, 0) the top-left corner and x running along columns.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .grid import Image, Mask

__all__ = [
    "Ellipse",
    "Blob",
    "Phantom",
    "render_phantom",
    "structure_mask",
    "disk_mask",
    "pe_phantom",
    "save_phantom",
    "load_phantom",
    "phantom_from_doc",
]


@dataclass(frozen=True)
class Ellipse:
    center: tuple  # (cx, cy), fractions of the side
    axes: tuple    # semi-axes (ax, ay), fractions of the side
    angle_deg: float
    intensity: float  # additive, may be negative (cavities)


@dataclass(frozen=True)
class Blob:
    """Disk that replaces the underlying intensity (the probed structure)."""

    center: tuple
    radius: float
    intensity: float


@dataclass(frozen=True)
class Phantom:
    side: int
    ellipses: tuple
    blob: Blob | None = None
    artifact_free: bool = False  # render without the blob when True

    def without_blob(self) -> "Phantom":
        return replace(self, artifact_free=True)


def _pixel_centers(side: int):
    # pixel (i, j) has center ((j+0.5)/side, (i+0.5)/side) in unit coords
    c = (np.arange(side) + 0.5) / side
    return np.meshgrid(c, c)  # xx varies along columns, yy along rows


def _inside_ellipse(e: Ellipse, xx, yy):
    phi = np.deg2rad(e.angle_deg)
    dx = xx - e.center[0]
    dy = yy - e.center[1]
    u = dx * np.cos(phi) + dy * np.sin(phi)
    v = -dx * np.sin(phi) + dy * np.cos(phi)
    return (u / e.axes[0]) ** 2 + (v / e.axes[1]) ** 2 <= 1.0


def _check_in_grid(e: Ellipse):
    # half-extent of the rotated ellipse's bounding box
    phi = np.deg2rad(e.angle_deg)
    bx = np.hypot(e.axes[0] * np.cos(phi), e.axes[1] * np.sin(phi))
    by = np.hypot(e.axes[0] * np.sin(phi), e.axes[1] * np.cos(phi))
    tol = 1e-9
    if (e.center[0] - bx < -tol or e.center[0] + bx > 1 + tol
            or e.center[1] - by < -tol or e.center[1] + by > 1 + tol):
        raise ValueError(
            f"ellipse at {e.center} with axes {e.axes} extends outside "
            f"the unit grid")


def _blob_member(blob: Blob, xx, yy):
    return (xx - blob.center[0]) ** 2 + (yy - blob.center[1]) ** 2 \
        <= blob.radius ** 2


def render_phantom(ph: Phantom) -> Image:
    xx, yy = _pixel_centers(ph.side)
    img = np.zeros((ph.side, ph.side))
    for e in ph.ellipses:
        _check_in_grid(e)
        img[_inside_ellipse(e, xx, yy)] += e.intensity
    img = np.clip(img, 0.0, 1.0)
    if ph.blob is not None and not ph.artifact_free:
        img[_blob_member(ph.blob, xx, yy)] = ph.blob.intensity
    return Image.from_grid(img)


def structure_mask(ph: Phantom) -> Mask:
    """Mask of the blob disk (the ground-truth structure location)."""
    if ph.blob is None:
        raise ValueError("phantom has no blob to mask")
    xx, yy = _pixel_centers(ph.side)
    return Mask.from_grid(_blob_member(ph.blob, xx, yy))


def disk_mask(side: int, center: tuple, radius: float) -> Mask:
    """Disk-shaped probe mask in the normalized coordinates of a phantom.

    Used to probe locations where no structure exists (streak artifacts,
    flat tissue) with the same footprint as a real blob mask.
    """
    xx, yy = _pixel_centers(side)
    member = (xx - center[0]) ** 2 + (yy - center[1]) ** 2 <= radius ** 2
    if not member.any():
        raise ValueError("disk mask is empty at this size")
    return Mask.from_grid(member)


def pe_phantom(side: int = 128, artifact_free: bool = False) -> Phantom:
    """Default chest slice: body, two air cavities, one bright vessel
    carrying a dark blob. Proportions chosen so the blob's ring
    neighborhood lies entirely inside the vessel."""
    ellipses = (
        Ellipse((0.50, 0.52), (0.42, 0.34), 0.0, 0.24),   # body
        Ellipse((0.33, 0.49), (0.17, 0.25), -7.0, -0.16),  # left cavity
        Ellipse((0.67, 0.49), (0.17, 0.25), 7.0, -0.16),   # right cavity
        Ellipse((0.655, 0.49), (0.085, 0.16), 12.0, 0.87),  # vessel
    )
    blob = Blob((0.655, 0.49), 0.05, 0.15)
    return Phantom(side, ellipses, blob, artifact_free)


def save_phantom(path, ph: Phantom) -> Path:
    p = Path(path)
    doc = {
        "side": ph.side,
        "ellipses": [asdict(e) for e in ph.ellipses],
        "blob": asdict(ph.blob) if ph.blob is not None else None,
        "artifact_free": ph.artifact_free,
    }
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(doc, indent=2))
    return p


def phantom_from_doc(doc: dict) -> Phantom:
    """Build a phantom from its JSON document form (see save_phantom)."""
    ellipses = tuple(
        Ellipse(tuple(e["center"]), tuple(e["axes"]), e["angle_deg"],
                e["intensity"]) for e in doc["ellipses"])
    blob = doc.get("blob")
    if blob is not None:
        blob = Blob(tuple(blob["center"]), blob["radius"],
                    blob["intensity"])
    return Phantom(int(doc["side"]), ellipses, blob,
                   bool(doc.get("artifact_free", False)))


def load_phantom(path) -> Phantom:
    return phantom_from_doc(json.loads(Path(path).read_text()))
