"""Sequence/annotation ingestion and on-disk formats.

Formats owned by this module:

* image sequences: a directory of 8/16-bit grayscale PNG or PGM files,
  frames ordered by file name, intensities mapped linearly to [0, 1];
* annotations: whitespace-separated lines ``landmark_id frame x y`` with
  1-based frame indices in files (0-based in memory), ``#`` comments and
  blank lines ignored;
* tracklets: CSV ``sequence,landmark_id,frame,x,y`` with 1-based frames
  and 4 decimal places;
* fields: "LSDF" binary -- magic bytes ``LSDF``, then height, width and
  channel count (1 or 2) as 32-bit little-endian unsigned integers, then
  the channels one after another as row-major 32-bit little-endian
  floats.  Channel 0 is the x component, channel 1 the y component.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    BadMagic,
    DimsMismatch,
    EmptyDirectory,
    NonMonotoneFrames,
    ParseError,
    TruncatedFile,
    UnsupportedFormat,
)

_IMAGE_SUFFIXES = {".png", ".pgm"}

# PIL modes accepted as grayscale, with the divisor that maps them to [0, 1].
_MODE_SCALE = {"L": 255.0, "I;16": 65535.0, "I;16B": 65535.0, "I": 65535.0}


def load_image(path: str | Path) -> np.ndarray:
    """Load one grayscale frame as a float64 array in [0, 1]."""
    path = Path(path)
    with Image.open(path) as im:
        if im.mode not in _MODE_SCALE:
            raise UnsupportedFormat(f"{path.name}: mode {im.mode!r} is not 8/16-bit grayscale")
        scale = _MODE_SCALE[im.mode]
        arr = np.asarray(im, dtype=np.float64)
    return arr / scale


@dataclass
class SequenceDataset:
    """Lazy view of an on-disk image sequence (frames loaded per access)."""

    name: str
    frame_paths: list[Path]
    height: int
    width: int
    _cache: dict[int, np.ndarray] = field(default_factory=dict, repr=False)
    _cache_slots: int = 8

    def __len__(self) -> int:
        return len(self.frame_paths)

    def __getitem__(self, index: int) -> np.ndarray:
        if index in self._cache:
            return self._cache[index]
        frame = load_image(self.frame_paths[index])
        if len(self._cache) >= self._cache_slots:
            # keep frame 0 (the exemplar template) resident, evict the rest
            for k in list(self._cache):
                if k != 0:
                    del self._cache[k]
                    break
        self._cache[index] = frame
        return frame


def load_sequence(directory: str | Path) -> SequenceDataset:
    """Scan a directory into a SequenceDataset.

    Frames are the lexicographically sorted PNG/PGM files; the result is
    independent of filesystem enumeration order.  All frames must share
    dimensions.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise EmptyDirectory(f"{directory} is not a directory")
    paths = sorted(
        (p for p in directory.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES),
        key=lambda p: p.name,
    )
    if not paths:
        raise EmptyDirectory(f"no PNG/PGM files in {directory}")
    dims: tuple[int, int] | None = None
    for p in paths:
        with Image.open(p) as im:
            if im.mode not in _MODE_SCALE:
                raise UnsupportedFormat(f"{p.name}: mode {im.mode!r} is not 8/16-bit grayscale")
            size = (im.size[1], im.size[0])  # (H, W)
        if dims is None:
            dims = size
        elif size != dims:
            raise DimsMismatch(
                f"{p.name}: {size[0]}x{size[1]} does not match first frame {dims[0]}x{dims[1]}"
            )
    return SequenceDataset(name=directory.name, frame_paths=paths, height=dims[0], width=dims[1])


@dataclass
class AnnotationSet:
    """Per-landmark lists of (frame, x, y), frames 0-based and nondecreasing."""

    landmarks: dict[int, list[tuple[int, float, float]]] = field(default_factory=dict)

    def ids(self) -> list[int]:
        return sorted(self.landmarks)

    def at_frame(self, landmark_id: int, frame: int) -> tuple[float, float] | None:
        for f, x, y in self.landmarks.get(landmark_id, []):
            if f == frame:
                return (x, y)
        return None


def load_annotations(path: str | Path) -> AnnotationSet:
    """Parse an annotation file (see module docstring for the grammar)."""
    path = Path(path)
    out = AnnotationSet()
    last_frame: dict[int, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ParseError(f"{path.name}:{lineno}: expected 'id frame x y', got {raw!r}")
            try:
                lid = int(parts[0])
                frame_1based = int(parts[1])
                x = float(parts[2])
                y = float(parts[3])
            except ValueError as exc:
                raise ParseError(f"{path.name}:{lineno}: {exc}") from None
            if frame_1based < 1:
                raise ParseError(f"{path.name}:{lineno}: frame index must be >= 1")
            frame = frame_1based - 1
            if lid in last_frame and frame < last_frame[lid]:
                raise NonMonotoneFrames(
                    f"{path.name}:{lineno}: landmark {lid} frame {frame_1based} "
                    f"after frame {last_frame[lid] + 1}"
                )
            last_frame[lid] = frame
            out.landmarks.setdefault(lid, []).append((frame, x, y))
    return out


def write_tracklets(tracklets, path: str | Path) -> None:
    """Write tracklets as CSV with 1-based frames and 4 decimal places."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("sequence,landmark_id,frame,x,y\n")
        for tr in tracklets:
            for frame, x, y in tr.points:
                fh.write(f"{tr.sequence},{tr.landmark_id},{frame + 1},{x:.4f},{y:.4f}\n")


def read_tracklets(path: str | Path):
    """Inverse of :func:`write_tracklets` at 1e-4 px precision."""
    from .tracker import Tracklet

    path = Path(path)
    by_key: dict[tuple[str, int], Tracklet] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "sequence,landmark_id,frame,x,y":
            raise ParseError(f"{path.name}: unexpected header {header!r}")
        for lineno, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise ParseError(f"{path.name}:{lineno}: expected 5 fields")
            try:
                seq = parts[0]
                lid = int(parts[1])
                frame = int(parts[2]) - 1
                x = float(parts[3])
                y = float(parts[4])
            except ValueError as exc:
                raise ParseError(f"{path.name}:{lineno}: {exc}") from None
            key = (seq, lid)
            if key not in by_key:
                by_key[key] = Tracklet(landmark_id=lid, sequence=seq)
            by_key[key].points.append((frame, x, y))
    return list(by_key.values())


_LSDF_MAGIC = b"LSDF"


def write_field(arr: np.ndarray, path: str | Path) -> None:
    """Write a scalar or 2-channel field in the LSDF binary format.

    Values are stored as float32; callers holding float64 data lose the
    excess precision on write.
    """
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim == 2:
        channels = [a]
    elif a.ndim == 3 and a.shape[2] in (1, 2):
        channels = [a[..., c] for c in range(a.shape[2])]
    else:
        raise ValueError("field must be (H, W) or (H, W, C) with C in {1, 2}")
    h, w = a.shape[:2]
    with open(path, "wb") as fh:
        fh.write(_LSDF_MAGIC)
        fh.write(struct.pack("<III", h, w, len(channels)))
        for ch in channels:
            fh.write(np.ascontiguousarray(ch, dtype="<f4").tobytes())


def read_field(path: str | Path) -> np.ndarray:
    """Read an LSDF field.  Returns (H, W) or (H, W, 2) float64."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _LSDF_MAGIC:
            raise BadMagic(f"{path.name}: expected magic {_LSDF_MAGIC!r}, got {magic!r}")
        header = fh.read(12)
        if len(header) != 12:
            raise TruncatedFile(f"{path.name}: truncated header")
        h, w, nch = struct.unpack("<III", header)
        if nch not in (1, 2):
            raise TruncatedFile(f"{path.name}: channel count {nch} not in (1, 2)")
        payload = fh.read(h * w * nch * 4)
        if len(payload) != h * w * nch * 4:
            raise TruncatedFile(f"{path.name}: payload shorter than header promises")
    data = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    if nch == 1:
        return data.reshape(h, w)
    return data.reshape(nch, h, w).transpose(1, 2, 0)
