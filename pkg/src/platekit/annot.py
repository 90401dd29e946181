"""Detection annotation model and format converters.

Parses Pascal VOC XML and YOLO-normalized text into a common in-memory
representation and writes YOLO text, VOC XML and binary pixel masks (PGM)
back out.

Conventions
-----------
* Boxes are continuous, axis-aligned, origin top-left, half-open in the
  rasterization sense: a box (0, 0, 10, 10) covers exactly the 100 pixels
  whose centres fall in [0, 10) x [0, 10).
* VOC's 1-based inclusive corners are mapped by subtracting 1 from the min
  corners and keeping the max corners, so width = xmax - xmin + 1 stays the
  pixel count.
* Out-of-bounds coordinates are clipped on ingest with an
  :class:`AnnotationWarning`; boxes that degenerate after clipping are
  dropped with a warning.  Inverted or zero-area boxes in the raw input are
  errors, never silently clamped.
"""
from __future__ import annotations

import math
import warnings
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from platekit import kernels
from platekit.errors import AnnotationError


class AnnotationWarning(UserWarning):
    """Issued when an annotation is clipped or dropped on ingest."""


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned rectangle in pixel coordinates, min corner inclusive."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        vals = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(v) for v in vals):
            raise AnnotationError(f"non-finite box coordinates {vals}")
        if min(vals) < 0:
            raise AnnotationError(f"negative box coordinates {vals}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise AnnotationError(f"box has non-positive area {vals}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


def clip_box(raw, width, height):
    """Clip a raw (x0, y0, x1, y1) tuple to image bounds.

    Returns a BoundingBox, or None when nothing with positive area is left.
    """
    x0 = min(max(raw[0], 0.0), float(width))
    y0 = min(max(raw[1], 0.0), float(height))
    x1 = min(max(raw[2], 0.0), float(width))
    y1 = min(max(raw[3], 0.0), float(height))
    if x0 >= x1 or y0 >= y1:
        return None
    return BoundingBox(x0, y0, x1, y1)


@dataclass(frozen=True)
class AnnotatedImage:
    """Image dimensions plus labeled boxes; the converters' common currency."""

    width: int
    height: int
    boxes: tuple[tuple[BoundingBox, int], ...] = ()
    source_id: str = ""
    class_names: tuple[str, ...] = ("plate",)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise AnnotationError(
                f"image dimensions must be positive, got {self.width}x{self.height}"
            )
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        for box, class_id in self.boxes:
            if box.x_max > self.width or box.y_max > self.height:
                raise AnnotationError(
                    f"box {box.as_tuple()} outside {self.width}x{self.height} image"
                )
            if not 0 <= class_id < len(self.class_names):
                raise AnnotationError(f"class id {class_id} not in declared class table")


@dataclass(frozen=True)
class YoloRecord:
    """One YOLO text line: class id plus normalized centre/size."""

    class_id: int
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if self.class_id < 0:
            raise AnnotationError(f"negative class id {self.class_id}")
        for name in ("cx", "cy", "w", "h"):
            v = getattr(self, name)
            if not (math.isfinite(v) and 0.0 <= v <= 1.0):
                raise AnnotationError(f"field {name}={v} outside [0, 1]")
        if self.w == 0.0 or self.h == 0.0:
            raise AnnotationError("zero-size box (w and h must be > 0)")


class PixelMask:
    """Row-major binary occupancy: 1 where a pixel centre is inside a box."""

    def __init__(self, width, height, bits):
        self.width = int(width)
        self.height = int(height)
        self.bits = np.asarray(bits, dtype=np.uint8)
        if self.bits.shape != (self.height, self.width):
            raise AnnotationError(
                f"mask bits shape {self.bits.shape} != ({self.height}, {self.width})"
            )

    @property
    def popcount(self) -> int:
        return int(self.bits.sum())

    def to_pgm(self) -> bytes:
        """Binary PGM (P5), 0/255, for visual inspection."""
        header = f"P5\n{self.width} {self.height}\n255\n".encode("ascii")
        return header + (self.bits * 255).astype(np.uint8).tobytes()

    def __eq__(self, other):
        return (
            isinstance(other, PixelMask)
            and self.width == other.width
            and self.height == other.height
            and bool(np.array_equal(self.bits, other.bits))
        )


def _findtext(node, path, where):
    child = node.find(path)
    if child is None or child.text is None or not child.text.strip():
        raise AnnotationError("missing element", where=f"{where}/{path}")
    return child.text.strip()


def _number(text, where):
    try:
        return float(text)
    except ValueError:
        raise AnnotationError(f"non-numeric value {text!r}", where=where) from None


def parse_voc(xml_document: str, class_table=None) -> AnnotatedImage:
    """Parse a Pascal VOC annotation document.

    Reads annotation/size/{width,height} and every
    annotation/object/{name,bndbox/{xmin,ymin,xmax,ymax}}.  Unknown class
    names are appended to the table in order of appearance unless an
    explicit ``class_table`` pins it.
    """
    try:
        root = ET.fromstring(xml_document)
    except ET.ParseError as exc:
        raise AnnotationError(f"malformed XML: {exc}") from exc
    size = root.find("size")
    if size is None:
        raise AnnotationError("missing element", where="annotation/size")
    width = int(_number(_findtext(size, "width", "annotation/size"), "annotation/size/width"))
    height = int(_number(_findtext(size, "height", "annotation/size"), "annotation/size/height"))

    names = list(class_table) if class_table is not None else []
    frozen_table = class_table is not None
    boxes = []
    for idx, obj in enumerate(root.findall("object")):
        where = f"annotation/object[{idx}]"
        name = _findtext(obj, "name", where)
        bnd = obj.find("bndbox")
        if bnd is None:
            raise AnnotationError("missing element", where=f"{where}/bndbox")
        xmin = _number(_findtext(bnd, "xmin", where), f"{where}/bndbox/xmin")
        ymin = _number(_findtext(bnd, "ymin", where), f"{where}/bndbox/ymin")
        xmax = _number(_findtext(bnd, "xmax", where), f"{where}/bndbox/xmax")
        ymax = _number(_findtext(bnd, "ymax", where), f"{where}/bndbox/ymax")
        # VOC 1-based inclusive corners -> continuous coordinates.
        raw = (xmin - 1.0, ymin - 1.0, xmax, ymax)
        if raw[0] >= raw[2] or raw[1] >= raw[3]:
            raise AnnotationError(
                f"box has non-positive area ({xmin}, {ymin}, {xmax}, {ymax})",
                where=f"{where}/bndbox",
            )
        if name not in names:
            if frozen_table:
                raise AnnotationError(f"unknown class {name!r}", where=f"{where}/name")
            names.append(name)
        box = clip_box(raw, width, height)
        if box is None:
            warnings.warn(
                f"{where}: box {raw} entirely outside image, dropped", AnnotationWarning
            )
            continue
        if box.as_tuple() != raw:
            warnings.warn(f"{where}: box {raw} clipped to image bounds", AnnotationWarning)
        boxes.append((box, names.index(name)))

    if not names:
        names = ["plate"]
    filename = root.findtext("filename") or ""
    return AnnotatedImage(
        width=width,
        height=height,
        boxes=tuple(boxes),
        source_id=filename.strip(),
        class_names=tuple(names),
    )


def parse_yolo(lines: str, width: int, height: int, class_names=("plate",),
               source_id: str = "") -> AnnotatedImage:
    """Parse YOLO-normalized text ("class cx cy w h" per line) and denormalize."""
    boxes = []
    max_class = -1
    for lineno, line in enumerate(lines.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 5:
            raise AnnotationError(
                f"expected 5 fields, got {len(fields)}", where=f"line {lineno}"
            )
        where = f"line {lineno}"
        try:
            class_id = int(fields[0])
        except ValueError:
            raise AnnotationError(f"non-numeric class id {fields[0]!r}", where=where) from None
        values = [_number(f, where) for f in fields[1:]]
        try:
            rec = YoloRecord(class_id, *values)
        except AnnotationError as exc:
            raise AnnotationError(str(exc), where=where) from None
        raw = (
            (rec.cx - rec.w / 2.0) * width,
            (rec.cy - rec.h / 2.0) * height,
            (rec.cx + rec.w / 2.0) * width,
            (rec.cy + rec.h / 2.0) * height,
        )
        box = clip_box(raw, width, height)
        if box is None:
            warnings.warn(f"{where}: box degenerate after clipping, dropped", AnnotationWarning)
            continue
        if box.as_tuple() != raw:
            warnings.warn(f"{where}: box clipped to image bounds", AnnotationWarning)
        max_class = max(max_class, class_id)
        boxes.append((box, class_id))

    names = tuple(class_names)
    if max_class >= len(names):
        names = names + tuple(f"class{i}" for i in range(len(names), max_class + 1))
    return AnnotatedImage(width, height, tuple(boxes), source_id, names)


def emit_yolo(image: AnnotatedImage) -> str:
    """Render an AnnotatedImage as YOLO text, 6-decimal fixed precision."""
    lines = []
    for box, class_id in image.boxes:
        cx = (box.x_min + box.x_max) / 2.0 / image.width
        cy = (box.y_min + box.y_max) / 2.0 / image.height
        w = box.width / image.width
        h = box.height / image.height
        cx, cy = min(max(cx, 0.0), 1.0), min(max(cy, 0.0), 1.0)
        w, h = min(w, 1.0), min(h, 1.0)
        lines.append(f"{class_id} {cx:.6f} {cy:.6f} {w:.6f} {h:.6f}")
    return "\n".join(lines) + ("\n" if lines else "")


def emit_voc(image: AnnotatedImage) -> str:
    """Render as Pascal VOC XML (inverse of parse_voc: +1 on the min corners)."""
    parts = [
        "<annotation>",
        f"  <filename>{escape(image.source_id)}</filename>",
        "  <size>",
        f"    <width>{image.width}</width>",
        f"    <height>{image.height}</height>",
        "    <depth>3</depth>",
        "  </size>",
    ]
    for box, class_id in image.boxes:
        parts += [
            "  <object>",
            f"    <name>{escape(image.class_names[class_id])}</name>",
            "    <bndbox>",
            f"      <xmin>{box.x_min + 1:g}</xmin>",
            f"      <ymin>{box.y_min + 1:g}</ymin>",
            f"      <xmax>{box.x_max:g}</xmax>",
            f"      <ymax>{box.y_max:g}</ymax>",
            "    </bndbox>",
            "  </object>",
        ]
    parts.append("</annotation>")
    return "\n".join(parts) + "\n"


def rasterize_mask(image: AnnotatedImage) -> PixelMask:
    """Binary mask with a 1 wherever a pixel centre is inside any box."""
    boxes = np.array([box.as_tuple() for box, _ in image.boxes], dtype=np.float64)
    bits = kernels.rasterize_boxes(image.height, image.width, boxes)
    return PixelMask(image.width, image.height, bits)
