"""File formats: PGM/PNG images and masks, run configuration, sequence manifests."""

import math
import re
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from ._validation import check_image, check_map, check_mask
from .exceptions import ConfigurationError, ImageReadError

IMAGE_SUFFIXES = (".png", ".pgm", ".ppm")

_PNM_MAGIC = {b"P5": 1, b"P6": 3}
_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _read_pnm(path, data):
    pos = 0
    tokens = []
    for _ in range(4):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise ImageReadError(path, "truncated header")
        tokens.append(m.group(1))
        pos = m.end()
    magic, w, h, maxval = tokens
    if magic not in _PNM_MAGIC:
        raise ImageReadError(path, f"unsupported magic {magic!r}")
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise ImageReadError(path, "non-numeric header field") from None
    if w <= 0 or h <= 0:
        raise ImageReadError(path, f"bad size {w}x{h}")
    if not 0 < maxval < 256:
        raise ImageReadError(path, f"only 8-bit samples are supported, maxval {maxval}")
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise ImageReadError(path, "truncated header")
    pos += 1
    channels = _PNM_MAGIC[magic]
    need = w * h * channels
    raster = data[pos:pos + need]
    if len(raster) < need:
        raise ImageReadError(path, f"truncated raster: {len(raster)} of {need} bytes")
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(h, w, channels)
    if arr.max(initial=0) > maxval:
        raise ImageReadError(path, f"sample exceeds maxval {maxval}")
    return arr.astype(np.float64) / maxval


def _read_png(path):
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise ImageReadError(path, f"not a PNG file ({im.format})")
            if im.info.get("interlace"):
                raise ImageReadError(path, "interlaced PNG is not supported")
            if im.mode not in ("L", "RGB"):
                raise ImageReadError(path, f"unsupported PNG mode {im.mode}; need 8-bit gray or RGB")
            arr = np.asarray(im.convert(im.mode), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        if isinstance(exc, ImageReadError):
            raise
        raise ImageReadError(path, f"cannot decode PNG: {exc}") from exc
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr.astype(np.float64) / 255.0


def _read_raw(path):
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            head = fh.read(8)
    except OSError as exc:
        raise ImageReadError(path, exc.strerror or str(exc)) from exc
    if head.startswith(b"\x89PNG"):
        return _read_png(path)
    if head[:2] in _PNM_MAGIC:
        return _read_pnm(path, path.read_bytes())
    raise ImageReadError(path, "unrecognized image format")


def load_image(path):
    """Decode a PGM/PPM (P5/P6, 8-bit) or 8-bit PNG into ``(H, W, 3)`` floats in ``[0, 1]``."""
    return check_image(_read_raw(path))


def load_mask(path):
    """Binary mask of a grayscale or colour file: first channel ``> 127`` is foreground."""
    arr = _read_raw(path)[:, :, 0]
    return (np.rint(arr * 255.0) > 127).astype(np.uint8)


def to_uint8(values):
    """``floor(255 * v + 0.5)`` of values clipped to ``[0, 1]``."""
    return np.floor(np.clip(values, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_image(path, image):
    """Write an RGB image in ``[0, 1]`` as PNG, or as P6 when the suffix is ``.ppm``/``.pgm``."""
    img = to_uint8(check_image(image))
    path = Path(path)
    if path.suffix.lower() in (".pgm", ".ppm"):
        gray = bool(np.all(img == img[:, :, :1]))
        body = img[:, :, 0] if gray else img
        header = f"{'P5' if gray else 'P6'}\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
        path.write_bytes(header + body.tobytes())
    else:
        Image.fromarray(img, mode="RGB").save(path, format="PNG")


def save_saliency(path, saliency):
    """Write a ``[0, 1]`` map as an 8-bit grayscale PNG."""
    Image.fromarray(to_uint8(check_map(saliency)), mode="L").save(path, format="PNG")


def save_mask(path, mask):
    """Write a binary mask as a 0/255 grayscale PNG."""
    Image.fromarray(check_mask(mask) * np.uint8(255), mode="L").save(path, format="PNG")


def _widths(text):
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("empty list")
    return tuple(int(p) for p in parts)


# key: (type, default, validity check, requirement shown in errors)
_SCHEMA = {
    "widths": (_widths, (8, 16, 32), lambda v: 1 <= len(v) <= 5 and min(v) >= 1, "1 to 5 positive ints"),
    "input_size": (int, 64, lambda v: v >= 8 and v % 8 == 0, "a multiple of 8, >= 8"),
    "train_iterations": (int, 500, lambda v: v >= 1, ">= 1"),
    "train_lr": (float, 5e-5, lambda v: v > 0, "> 0"),
    "momentum": (float, 0.9, lambda v: 0 <= v < 1, "in [0, 1)"),
    "weight_decay": (float, 5e-4, lambda v: v >= 0, ">= 0"),
    "n_scales": (int, 6, lambda v: v >= 1, ">= 1"),
    "sigma_s": (float, 10.0, lambda v: v > 0, "> 0"),
    "sigma_r": (float, 0.1, lambda v: v > 0, "> 0"),
    "dt_iterations": (int, 3, lambda v: v >= 1, ">= 1"),
    "fusion_iterations": (int, 200, lambda v: v >= 1, ">= 1"),
    "fusion_step": (float, 0.05, lambda v: v > 0, "> 0"),
    "tau": (int, 2, lambda v: v >= 0, ">= 0"),
    "c": (float, 1.1, lambda v: v > 1, "> 1"),
    "crop_scale": (float, 1.5, lambda v: v >= 1, ">= 1"),
    "threshold_low": (float, 0.1, lambda v: 0 <= v <= 1, "in [0, 1]"),
    "threshold_high": (float, 0.9, lambda v: 0 <= v <= 1, "in [0, 1]"),
    "finetune_iterations": (int, 10, lambda v: v >= 0, ">= 0"),
    "finetune_lr": (float, 5e-9, lambda v: v > 0, "> 0"),
    "seed": (int, 0, lambda v: v >= 0, ">= 0"),
}


@dataclass(frozen=True)
class RunConfig:
    """Every tunable of the pipeline with its default."""

    widths: tuple = _SCHEMA["widths"][1]
    input_size: int = _SCHEMA["input_size"][1]
    train_iterations: int = _SCHEMA["train_iterations"][1]
    train_lr: float = _SCHEMA["train_lr"][1]
    momentum: float = _SCHEMA["momentum"][1]
    weight_decay: float = _SCHEMA["weight_decay"][1]
    n_scales: int = _SCHEMA["n_scales"][1]
    sigma_s: float = _SCHEMA["sigma_s"][1]
    sigma_r: float = _SCHEMA["sigma_r"][1]
    dt_iterations: int = _SCHEMA["dt_iterations"][1]
    fusion_iterations: int = _SCHEMA["fusion_iterations"][1]
    fusion_step: float = _SCHEMA["fusion_step"][1]
    tau: int = _SCHEMA["tau"][1]
    c: float = _SCHEMA["c"][1]
    crop_scale: float = _SCHEMA["crop_scale"][1]
    threshold_low: float = _SCHEMA["threshold_low"][1]
    threshold_high: float = _SCHEMA["threshold_high"][1]
    finetune_iterations: int = _SCHEMA["finetune_iterations"][1]
    finetune_lr: float = _SCHEMA["finetune_lr"][1]
    seed: int = _SCHEMA["seed"][1]

    def network_kwargs(self):
        return dict(widths=self.widths, input_size=self.input_size, n_iterations=self.train_iterations,
                    learning_rate=self.train_lr, momentum=self.momentum,
                    weight_decay=self.weight_decay, random_state=self.seed)

    def fusion_kwargs(self):
        return dict(sigma_s=self.sigma_s, sigma_r=self.sigma_r, dt_iterations=self.dt_iterations,
                    fusion_iterations=self.fusion_iterations, fusion_step=self.fusion_step)

    def tracker_config(self):
        from .tracker import TrackerConfig

        names = {f.name for f in fields(TrackerConfig)}
        return TrackerConfig(**{k: getattr(self, k) for k in names if hasattr(self, k)})


def parse_config_text(text, source="<config>"):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values, seen = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        where = f"{source}:{lineno}"
        if not sep or not key:
            raise ConfigurationError(f"{where}: expected 'key = value'")
        if key not in _SCHEMA:
            raise ConfigurationError(f"{where}: unknown key '{key}'")
        if key in seen:
            raise ConfigurationError(f"{where}: duplicate key '{key}' (first set on line {seen[key]})")
        kind, _, valid, requirement = _SCHEMA[key]
        try:
            parsed = kind(value)
        except ValueError:
            raise ConfigurationError(f"{where}: bad value '{value}' for '{key}'") from None
        if isinstance(parsed, float) and not math.isfinite(parsed):
            raise ConfigurationError(f"{where}: '{key}' must be finite")
        if not valid(parsed):
            raise ConfigurationError(f"{where}: '{key}' = {value} out of range; must be {requirement}")
        values[key], seen[key] = parsed, lineno
    cfg = RunConfig(**values)
    if cfg.threshold_low > cfg.threshold_high:
        line = seen.get("threshold_low", seen.get("threshold_high"))
        at = f"{source}:{line}" if line else source
        raise ConfigurationError(f"{at}: threshold_low must not exceed threshold_high")
    return cfg


def parse_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"{path}: {exc.strerror or exc}") from exc
    return parse_config_text(text, str(path))


@dataclass(frozen=True)
class SequenceManifest:
    """Ordered frame paths, optional ground-truth masks and the first-frame box."""

    frames: tuple
    init: tuple
    gt_masks: tuple = None

    def check_init(self, frame_shape):
        """Raise unless the init box overlaps the first frame."""
        x, y, w, h = self.init
        fh, fw = frame_shape[:2]
        if w <= 0 or h <= 0 or x >= fw or y >= fh or x + w <= 0 or y + h <= 0:
            raise ConfigurationError(f"init box {self.init} lies outside the {fw}x{fh} first frame")


def parse_manifest(path):
    """Read a manifest: an ``init: x y w h`` line, then one frame per line.

    A frame line may carry a tab-separated mask path. Relative paths are
    resolved against the manifest's directory. Blank lines and ``#``
    comments are skipped.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigurationError(f"{path}: {exc.strerror or exc}") from exc
    base = path.parent
    init, frames, masks = None, [], []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        where = f"{path}:{lineno}"
        if init is None:
            key, _, rest = line.partition(":")
            if key.strip() != "init":
                raise ConfigurationError(f"{where}: first entry must be 'init: x y w h'")
            try:
                init = tuple(int(v) for v in rest.split())
            except ValueError:
                raise ConfigurationError(f"{where}: init box must be four integers") from None
            if len(init) != 4 or init[2] <= 0 or init[3] <= 0:
                raise ConfigurationError(f"{where}: init box must be 'x y w h' with positive size")
            continue
        cols = line.split("\t")
        if len(cols) > 2 or not cols[0].strip():
            raise ConfigurationError(f"{where}: expected 'frame' or 'frame<TAB>mask'")
        frames.append(base / cols[0].strip())
        masks.append(base / cols[1].strip() if len(cols) == 2 and cols[1].strip() else None)
    if init is None:
        raise ConfigurationError(f"{path}: missing 'init: x y w h' line")
    if not frames:
        raise ConfigurationError(f"{path}: no frames listed")
    n_masks = sum(m is not None for m in masks)
    if n_masks not in (0, len(frames)):
        raise ConfigurationError(f"{path}: masks given for {n_masks} of {len(frames)} frames")
    return SequenceManifest(tuple(frames), init, tuple(masks) if n_masks else None)


def write_manifest(path, frames, init, gt_masks=None):
    """Inverse of :func:`parse_manifest`; paths are written as given."""
    lines = ["init: " + " ".join(str(int(v)) for v in init)]
    for i, frame in enumerate(frames):
        lines.append(str(frame) if gt_masks is None else f"{frame}\t{gt_masks[i]}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def image_stem(path):
    """File name without its image suffix and a trailing ``.mask``/``.saliency`` tag."""
    name = Path(path).name
    for suffix in IMAGE_SUFFIXES:
        if name.lower().endswith(suffix):
            name = name[: -len(suffix)]
            break
    for tag in (".mask", ".saliency"):
        if name.endswith(tag):
            return name[: -len(tag)]
    return name


def list_images(directory, tag=None):
    """Image files in ``directory`` sorted by name.

    ``tag`` keeps only ``<stem>.<tag>.<ext>`` files; ``tag=""`` keeps only
    untagged files.
    """
    out = []
    for p in sorted(Path(directory).iterdir()):
        if not p.is_file() or p.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        inner = Path(p.stem).suffix
        if tag is None:
            out.append(p)
        elif tag == "":
            if inner not in (".mask", ".saliency"):
                out.append(p)
        elif inner == f".{tag}":
            out.append(p)
    return out
