"""File formats: GRF1 binary grids, CSV grids, grayscale images, JSON and run manifests.

GRF1 layout (all little-endian): b"GRF1", u32 rows, u32 cols, f64 dx,
f64 dy, then rows * cols f64 values in row-major order.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import PreconditionError
from .field_sim import FieldGrid

MAGIC = b"GRF1"
_HEADER = struct.Struct("<4sIIdd")


def write_grf1(path, grid: FieldGrid) -> None:
    v = np.ascontiguousarray(grid.values, dtype="<f8")
    rows, cols = v.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, rows, cols, float(grid.dx), float(grid.dy)))
        fh.write(v.tobytes(order="C"))


def read_grf1(path) -> FieldGrid:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise PreconditionError(f"{path}: too short for a GRF1 header")
    magic, rows, cols, dx, dy = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise PreconditionError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + rows * cols * 8
    if len(data) != expected:
        raise PreconditionError(f"{path}: payload is {len(data) - _HEADER.size} bytes, "
                                f"expected {rows * cols * 8}")
    v = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(rows, cols)
    return FieldGrid(v.astype(np.float64), dx=dx, dy=dy)


def write_csv_grid(path, grid: FieldGrid) -> None:
    with open(path, "w") as fh:
        for row in grid.values:
            fh.write(",".join(repr(float(x)) for x in row))
            fh.write("\n")


def read_csv_grid(path, dx: float = 1.0, dy: float = 1.0) -> FieldGrid:
    try:
        v = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise PreconditionError(f"{path}: not a numeric CSV grid ({exc})") from exc
    return FieldGrid(v, dx=dx, dy=dy)


def read_image(path, dx: float = 1.0, dy: float = 1.0) -> FieldGrid:
    """8-bit grayscale image as a field with values 0..255.

    The image's top row becomes the last grid row, so that the second
    coordinate points up the picture.
    """
    from PIL import Image

    with Image.open(path) as im:
        if im.mode not in ("L", "1", "P"):
            raise PreconditionError(f"{path}: expected an 8-bit grayscale image, got mode {im.mode}")
        v = np.asarray(im.convert("L"), dtype=np.float64)
    return FieldGrid(np.flipud(v).copy(), dx=dx, dy=dy)


def write_image(path, values) -> None:
    from PIL import Image

    v = np.clip(np.rint(np.asarray(values, dtype=np.float64)), 0, 255).astype(np.uint8)
    Image.fromarray(np.flipud(v)).save(path)


def load_field(path, dx: float = 1.0, dy: float = 1.0) -> FieldGrid:
    """Read a grid from GRF1, CSV or PNG/PGM by content and extension."""
    p = Path(path)
    if not p.exists():
        raise PreconditionError(f"{path}: no such file")
    with open(p, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return read_grf1(p)
    ext = p.suffix.lower()
    if ext in (".png", ".pgm", ".pnm", ".tif", ".tiff", ".bmp"):
        return read_image(p, dx, dy)
    if ext in (".csv", ".txt"):
        return read_csv_grid(p, dx, dy)
    raise PreconditionError(f"{path}: unrecognised grid format")


def save_field(path, grid: FieldGrid) -> None:
    ext = Path(path).suffix.lower()
    if ext in (".csv", ".txt"):
        write_csv_grid(path, grid)
    else:
        write_grf1(path, grid)


def to_jsonable(obj):
    """Recursively convert numpy and dataclass values to JSON-ready objects.

    Non-finite floats become null, since JSON has no representation for them.
    """
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps(obj, indent: int | None = 2) -> str:
    # float repr is the shortest string that round-trips exactly
    return json.dumps(to_jsonable(obj), indent=indent, sort_keys=False) + "\n"


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    tool_version: str
    timestamp: str = ""
    argv: list = field(default_factory=list)
    inputs: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.timestamp:
            self.timestamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, path) -> None:
        Path(path).write_text(dumps(self.to_dict()))

    @classmethod
    def read(cls, path) -> "RunManifest":
        try:
            d = json.loads(Path(path).read_text())
            return cls(**d)
        except (OSError, ValueError, TypeError) as exc:
            raise PreconditionError(f"{path}: not a run manifest ({exc})") from exc
