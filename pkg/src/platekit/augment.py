"""Deterministic, seedable augmentation with bounding-box propagation.

Implements the two phase presets (spatially aggressive stage 1, photometric
stage 2) plus the individual transforms: center affine warp, horizontal
flip, HSV jitter, 4-image mosaic, mixup blending and copy-paste
transplantation.  Vertical flip and perspective warp deliberately do not
exist in this API — they destroy license-plate text.

Magnitude conventions
---------------------
* ``scale_factor`` s is a gain range: the pipeline draws the scale
  multiplier uniformly from [1 - s, 1 + s] (so stage 1's 0.7 means
  [0.3, 1.7]).  Saturation/value fractions work the same way; hue is an
  additive fraction of a full turn.
* Boxes surviving a warp must keep >= 1 px**2 and >= 10% of their
  transformed (pre-clip) area, otherwise they are dropped.

Reproducibility: every batch item i under seed S uses an independent
``numpy.random.Generator(Philox(key=[S, i]))`` stream, so outputs are
byte-identical across runs and stable under parallel scheduling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from platekit import kernels
from platekit.annot import AnnotatedImage, BoundingBox, clip_box
from platekit.errors import DataError

WARP_FILL = 114
MOSAIC_CENTER_JITTER = 0.2
COPY_PASTE_MAX_TRIES = 20
COPY_PASTE_OVERLAP_LIMIT = 0.3
MIN_BOX_AREA_PX = 1.0
MIN_BOX_AREA_FRACTION = 0.1


@dataclass(frozen=True)
class AugmentationPhasePreset:
    """All augmentation magnitudes/probabilities for one training phase."""

    rotation_deg: float
    translation_frac: float
    scale_factor: float
    shear_deg: float
    hflip_p: float
    mosaic_p: float
    mixup_p: float
    copypaste_p: float
    hue_frac: float
    sat_frac: float
    val_frac: float

    def __post_init__(self):
        for name in ("hflip_p", "mosaic_p", "mixup_p", "copypaste_p"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        for name in ("rotation_deg", "translation_frac", "scale_factor",
                     "shear_deg", "hue_frac", "sat_frac", "val_frac"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.scale_factor >= 1.0:
            raise ValueError("scale_factor must be < 1 (gain range 1 +/- s)")


def stage1_preset() -> AugmentationPhasePreset:
    """Spatially intensive stage-1 magnitudes."""
    return AugmentationPhasePreset(
        rotation_deg=8.0,
        translation_frac=0.15,
        scale_factor=0.7,
        shear_deg=3.0,
        hflip_p=0.50,
        mosaic_p=1.0,
        mixup_p=0.15,
        copypaste_p=0.40,
        hue_frac=0.01,
        sat_frac=0.80,
        val_frac=0.50,
    )


def stage2_preset() -> AugmentationPhasePreset:
    """Photometric-leaning stage-2 magnitudes with reduced spatial warps."""
    return AugmentationPhasePreset(
        rotation_deg=3.0,
        translation_frac=0.08,
        scale_factor=0.4,
        shear_deg=1.0,
        hflip_p=0.30,
        mosaic_p=0.70,
        mixup_p=0.08,
        copypaste_p=0.20,
        hue_frac=0.02,
        sat_frac=0.90,
        val_frac=0.70,
    )


@dataclass(frozen=True)
class AffineParams:
    rotation: float = 0.0
    tx: float = 0.0
    ty: float = 0.0
    scale: float = 1.0
    shear: float = 0.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be > 0")
        if abs(self.rotation) > 90 or abs(self.shear) > 90:
            raise ValueError("rotation/shear limited to +/-90 degrees")

    @property
    def is_identity(self) -> bool:
        return (self.rotation == 0.0 and self.tx == 0.0 and self.ty == 0.0
                and self.scale == 1.0 and self.shear == 0.0)


@dataclass
class LabeledImage:
    """Raster pixels plus propagated box labels; the engine's work item."""

    pixels: np.ndarray  # (H, W, 3) uint8
    boxes: tuple[tuple[BoundingBox, int], ...] = ()
    source_id: str = ""
    class_names: tuple[str, ...] = ("plate",)

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"pixels must be (H, W, 3) uint8, got {self.pixels.shape}")
        self.boxes = tuple(self.boxes)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def annotations(self) -> AnnotatedImage:
        return AnnotatedImage(self.width, self.height, self.boxes,
                              self.source_id, self.class_names)

    def copy(self) -> "LabeledImage":
        return LabeledImage(self.pixels.copy(), self.boxes, self.source_id,
                            self.class_names)


def item_rng(seed: int, index: int) -> np.random.Generator:
    """Per-item RNG stream: Philox keyed by (seed, item index)."""
    return np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), index]))


def affine_matrix(params: AffineParams, width: int, height: int) -> np.ndarray:
    """3x3 forward map: rotate/shear/scale about the image centre, then
    translate by (tx*width, ty*height)."""
    theta = math.radians(params.rotation)
    phi = math.radians(params.shear)
    cx, cy = width / 2.0, height / 2.0
    to_origin = np.array([[1, 0, -cx], [0, 1, -cy], [0, 0, 1]], dtype=np.float64)
    scale = np.array([[params.scale, 0, 0], [0, params.scale, 0], [0, 0, 1]],
                     dtype=np.float64)
    shear = np.array([[1, math.tan(phi), 0], [0, 1, 0], [0, 0, 1]], dtype=np.float64)
    rot = np.array(
        [[math.cos(theta), -math.sin(theta), 0],
         [math.sin(theta), math.cos(theta), 0],
         [0, 0, 1]],
        dtype=np.float64,
    )
    back = np.array(
        [[1, 0, cx + params.tx * width], [0, 1, cy + params.ty * height], [0, 0, 1]],
        dtype=np.float64,
    )
    return back @ rot @ shear @ scale @ to_origin


def transform_box(box: BoundingBox, matrix: np.ndarray):
    """Axis-aligned hull of the box's 4 corners under an affine map.

    Returns a raw (x0, y0, x1, y1) tuple: the hull may stick outside the
    image (or go negative) before clipping.
    """
    corners = np.array(
        [
            [box.x_min, box.y_min, 1.0],
            [box.x_max, box.y_min, 1.0],
            [box.x_min, box.y_max, 1.0],
            [box.x_max, box.y_max, 1.0],
        ],
        dtype=np.float64,
    )
    mapped = corners @ matrix.T
    xs, ys = mapped[:, 0], mapped[:, 1]
    return (float(xs.min()), float(ys.min()), float(xs.max()), float(ys.max()))


def _merged_class_names(samples):
    """Union class table over samples plus per-sample id remappings."""
    names: list[str] = []
    remaps = []
    for smp in samples:
        remap = {}
        for cid, name in enumerate(smp.class_names):
            if name not in names:
                names.append(name)
            remap[cid] = names.index(name)
        remaps.append(remap)
    return tuple(names), remaps


def _surviving_boxes(raw_boxes, width, height):
    kept = []
    for raw, class_id in raw_boxes:
        hull_area = max(raw[2] - raw[0], 0.0) * max(raw[3] - raw[1], 0.0)
        box = clip_box(raw, width, height)
        if box is None:
            continue
        if box.area < MIN_BOX_AREA_PX or (hull_area > 0 and box.area < MIN_BOX_AREA_FRACTION * hull_area):
            continue
        kept.append((box, class_id))
    return tuple(kept)


def apply_affine(sample: LabeledImage, params: AffineParams) -> LabeledImage:
    """Warp pixels about the centre and propagate boxes by corner hulls."""
    if params.is_identity:
        return sample.copy()
    matrix = affine_matrix(params, sample.width, sample.height)
    inverse = np.linalg.inv(matrix)
    coeffs = inverse[:2].ravel()
    pixels = kernels.warp_affine_u8(sample.pixels, coeffs, sample.height,
                                    sample.width, WARP_FILL)
    raw = [(transform_box(box, matrix), cid) for box, cid in sample.boxes]
    return LabeledImage(pixels, _surviving_boxes(raw, sample.width, sample.height),
                        sample.source_id, sample.class_names)


def hflip(sample: LabeledImage) -> LabeledImage:
    """Mirror pixels about the vertical axis; boxes map x -> W - x."""
    w = sample.width
    boxes = tuple(
        (BoundingBox(w - box.x_max, box.y_min, w - box.x_min, box.y_max), cid)
        for box, cid in sample.boxes
    )
    return LabeledImage(np.ascontiguousarray(sample.pixels[:, ::-1]), boxes,
                        sample.source_id, sample.class_names)


def _rgb_to_hsv(rgb):
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = np.maximum(np.maximum(r, g), b)
    minc = np.minimum(np.minimum(r, g), b)
    v = maxc
    c = maxc - minc
    safe_max = np.where(maxc > 0, maxc, 1.0)
    s = np.where(maxc > 0, c / safe_max, 0.0)
    safe_c = np.where(c > 0, c, 1.0)
    rc = (maxc - r) / safe_c
    gc = (maxc - g) / safe_c
    bc = (maxc - b) / safe_c
    h = np.where(r == maxc, bc - gc, np.where(g == maxc, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(c > 0, (h / 6.0) % 1.0, 0.0)
    return h, s, v


def _hsv_to_rgb(h, s, v):
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(np.int64) % 6
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def hsv_jitter(sample: LabeledImage, hue_shift: float, sat_gain: float,
               val_gain: float) -> LabeledImage:
    """Cyclic hue shift (fraction of a turn) plus clamped S/V gains."""
    rgb = sample.pixels.astype(np.float64) / 255.0
    h, s, v = _rgb_to_hsv(rgb)
    h = (h + hue_shift) % 1.0
    s = np.clip(s * sat_gain, 0.0, 1.0)
    v = np.clip(v * val_gain, 0.0, 1.0)
    out = np.floor(_hsv_to_rgb(h, s, v) * 255.0 + 0.5).astype(np.uint8)
    return LabeledImage(out, sample.boxes, sample.source_id, sample.class_names)


def resize_bilinear(pixels: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    src_h, src_w = pixels.shape[0], pixels.shape[1]
    if (out_w, out_h) == (src_w, src_h):
        return pixels.copy()
    coeffs = np.array([src_w / out_w, 0.0, 0.0, 0.0, src_h / out_h, 0.0])
    return kernels.warp_affine_u8(pixels, coeffs, out_h, out_w, WARP_FILL)


def mosaic(samples, center_jitter: float, rng: np.random.Generator) -> LabeledImage:
    """Composite exactly 4 samples on a double-size canvas split at a
    jittered centre, then resize back to the first sample's size."""
    samples = list(samples)
    if len(samples) != 4:
        raise ValueError(f"mosaic needs exactly 4 inputs, got {len(samples)}")
    base = samples[0]
    w, h = base.width, base.height
    cw, ch = 2 * w, 2 * h
    u = rng.uniform(-center_jitter, center_jitter, size=2)
    cx = min(max(int(round(cw * (0.5 + u[0]))), 1), cw - 1)
    cy = min(max(int(round(ch * (0.5 + u[1]))), 1), ch - 1)

    canvas = np.full((ch, cw, 3), WARP_FILL, dtype=np.uint8)
    quadrants = ((0, 0, cx, cy), (cx, 0, cw, cy), (0, cy, cx, ch), (cx, cy, cw, ch))
    names, remaps = _merged_class_names(samples)
    raw_boxes = []
    for smp, remap, (qx0, qy0, qx1, qy1) in zip(samples, remaps, quadrants):
        qw, qh = qx1 - qx0, qy1 - qy0
        canvas[qy0:qy1, qx0:qx1] = resize_bilinear(smp.pixels, qw, qh)
        sx, sy = qw / smp.width, qh / smp.height
        for box, cid in smp.boxes:
            raw_boxes.append((
                (box.x_min * sx + qx0, box.y_min * sy + qy0,
                 box.x_max * sx + qx0, box.y_max * sy + qy0),
                remap[cid],
            ))

    pixels = resize_bilinear(canvas, w, h)
    scaled = [((r[0] / 2.0, r[1] / 2.0, r[2] / 2.0, r[3] / 2.0), cid)
              for r, cid in raw_boxes]
    return LabeledImage(pixels, _surviving_boxes(scaled, w, h),
                        base.source_id, names)


def mixup(a: LabeledImage, b: LabeledImage, lam: float = 0.5) -> LabeledImage:
    """Blend pixels lam*a + (1-lam)*b (half-up rounding) and concatenate labels."""
    if (a.width, a.height) != (b.width, b.height):
        raise ValueError(
            f"mixup needs equal dimensions, got {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda {lam} outside [0, 1]")
    blend = lam * a.pixels.astype(np.float64) + (1.0 - lam) * b.pixels.astype(np.float64)
    pixels = np.floor(blend + 0.5).astype(np.uint8)
    names, (remap_a, remap_b) = _merged_class_names([a, b])
    boxes = tuple((box, remap_a[cid]) for box, cid in a.boxes) + \
        tuple((box, remap_b[cid]) for box, cid in b.boxes)
    return LabeledImage(pixels, boxes, a.source_id, names)


def copy_paste(dst: LabeledImage, src: LabeledImage,
               rng: np.random.Generator) -> LabeledImage:
    """Transplant one random source box region to a random location in dst.

    A placement is valid when its IoU with every existing dst box stays
    below 0.3; after 20 failed tries dst is returned unchanged.
    """
    if not src.boxes:
        raise ValueError("copy_paste needs a source with at least one box")
    box, class_id = src.boxes[int(rng.integers(0, len(src.boxes)))]
    x0 = max(int(math.floor(box.x_min)), 0)
    y0 = max(int(math.floor(box.y_min)), 0)
    x1 = min(int(math.ceil(box.x_max)), src.width)
    y1 = min(int(math.ceil(box.y_max)), src.height)
    crop = src.pixels[y0:y1, x0:x1]
    ph, pw = crop.shape[0], crop.shape[1]
    if ph < 1 or pw < 1 or pw > dst.width or ph > dst.height:
        return dst
    existing = np.array([bx.as_tuple() for bx, _ in dst.boxes], dtype=np.float64)
    for _ in range(COPY_PASTE_MAX_TRIES):
        px = int(rng.integers(0, dst.width - pw + 1))
        py = int(rng.integers(0, dst.height - ph + 1))
        candidate = (float(px), float(py), float(px + pw), float(py + ph))
        if existing.size:
            ious = kernels.iou_matrix([candidate], existing)
            if float(ious.max()) >= COPY_PASTE_OVERLAP_LIMIT:
                continue
        pixels = dst.pixels.copy()
        pixels[py:py + ph, px:px + pw] = crop
        names = dst.class_names
        src_name = (src.class_names[class_id] if class_id < len(src.class_names)
                    else f"class{class_id}")
        if src_name not in names:
            names = names + (src_name,)
        cid = names.index(src_name)
        return LabeledImage(pixels, dst.boxes + ((BoundingBox(*candidate), cid),),
                            dst.source_id, names)
    return dst


def sample_pipeline(batch, preset: AugmentationPhasePreset, seed: int,
                    mixup_beta: float | None = None, op_log=None):
    """Apply the phase pipeline to every batch item, fully determined by
    (seed, preset, batch order).

    Per item: mosaic with probability mosaic_p (3 extra items drawn with
    replacement), mixup with mixup_p, copy-paste with copypaste_p, an
    affine warp with per-parameter uniform draws in +/-magnitude, a
    horizontal flip with hflip_p, then HSV jitter with per-channel draws.
    Transforms whose drawn parameters are exactly the identity are skipped,
    so an all-zero preset is a byte-level no-op.
    """
    batch = list(batch)
    if not batch:
        raise ValueError("sample_pipeline needs a nonempty batch")
    n = len(batch)
    out = []
    for index, item in enumerate(batch):
        rng = item_rng(seed, index)
        applied = set()
        sample = item

        if rng.random() < preset.mosaic_p:
            extras = [batch[int(k)] for k in rng.integers(0, n, size=3)]
            sample = mosaic([sample, *extras], MOSAIC_CENTER_JITTER, rng)
            applied.add("mosaic")

        if rng.random() < preset.mixup_p:
            partner = batch[int(rng.integers(0, n))]
            lam = float(rng.beta(mixup_beta, mixup_beta)) if mixup_beta else 0.5
            if (partner.width, partner.height) != (sample.width, sample.height):
                partner = _resize_sample(partner, sample.width, sample.height)
            sample = mixup(sample, partner, lam)
            applied.add("mixup")

        if rng.random() < preset.copypaste_p:
            src = batch[int(rng.integers(0, n))]
            if src.boxes:
                pasted = copy_paste(sample, src, rng)
                if pasted is not sample:
                    applied.add("copy_paste")
                sample = pasted

        params = AffineParams(
            rotation=float(rng.uniform(-preset.rotation_deg, preset.rotation_deg)),
            tx=float(rng.uniform(-preset.translation_frac, preset.translation_frac)),
            ty=float(rng.uniform(-preset.translation_frac, preset.translation_frac)),
            scale=float(rng.uniform(1.0 - preset.scale_factor, 1.0 + preset.scale_factor)),
            shear=float(rng.uniform(-preset.shear_deg, preset.shear_deg)),
        )
        if not params.is_identity:
            sample = apply_affine(sample, params)
            applied.add("affine")

        if rng.random() < preset.hflip_p:
            sample = hflip(sample)
            applied.add("hflip")

        hue = float(rng.uniform(-preset.hue_frac, preset.hue_frac))
        sat = float(rng.uniform(1.0 - preset.sat_frac, 1.0 + preset.sat_frac))
        val = float(rng.uniform(1.0 - preset.val_frac, 1.0 + preset.val_frac))
        if not (hue == 0.0 and sat == 1.0 and val == 1.0):
            sample = hsv_jitter(sample, hue, sat, val)
            applied.add("hsv")

        if sample is item:
            sample = item.copy()
        out.append(sample)
        if op_log is not None:
            op_log.append(applied)
    return out


def _resize_sample(sample: LabeledImage, out_w: int, out_h: int) -> LabeledImage:
    sx, sy = out_w / sample.width, out_h / sample.height
    raw = [((b.x_min * sx, b.y_min * sy, b.x_max * sx, b.y_max * sy), cid)
           for b, cid in sample.boxes]
    return LabeledImage(resize_bilinear(sample.pixels, out_w, out_h),
                        _surviving_boxes(raw, out_w, out_h),
                        sample.source_id, sample.class_names)


_PRESET_FIELDS = {f.name for f in fields(AugmentationPhasePreset)}


def parse_preset_overrides(text: str) -> dict:
    """Parse a flat key-value override file ("name value" or "name=value")."""
    overrides = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" in stripped:
            key, _, value = stripped.partition("=")
        else:
            parts = stripped.split(None, 1)
            if len(parts) != 2:
                raise DataError(f"preset line {lineno}: expected 'name value'")
            key, value = parts
        key = key.strip()
        if key not in _PRESET_FIELDS:
            raise DataError(f"preset line {lineno}: unknown field {key!r}")
        try:
            overrides[key] = float(value.strip())
        except ValueError:
            raise DataError(f"preset line {lineno}: non-numeric value {value!r}") from None
    return overrides


def apply_preset_overrides(preset: AugmentationPhasePreset, overrides: dict):
    return replace(preset, **overrides)


def load_image(path) -> np.ndarray:
    """Read a PNG/JPEG as (H, W, 3) uint8 RGB."""
    from PIL import Image

    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def save_png(pixels: np.ndarray, path) -> None:
    from PIL import Image

    Image.fromarray(np.asarray(pixels, dtype=np.uint8), mode="RGB").save(path, format="PNG")
