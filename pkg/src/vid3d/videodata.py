"""Synthetic labeled video generation, dataset file I/O, frame resizing and
clip slicing.

The generator produces "motion blobs" videos: small shapes drifting across a
toroidal frame. In motion mode the class is the drift direction and classes
come in reversal pairs (class 2j+1 moves exactly opposite to class 2j), with
blob shape, color, start position and speed drawn identically across
classes; per-frame appearance carries no class information. In appearance
mode the class is the blob shape and the motion distribution is identical
across classes.
"""

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, FormatError

VSET_MAGIC = b"VSET"
VSET_VERSION = 1


@dataclass
class VideoRecord:
    label: int
    frames: np.ndarray  # (c, l, h, w) float64 in [0, 1]

    @property
    def channels(self):
        return self.frames.shape[0]

    @property
    def length(self):
        return self.frames.shape[1]


@dataclass(frozen=True)
class ClipIndex:
    video_id: int
    start: int
    length: int = 16


# reversal-paired drift directions: index 2j+1 is the exact reverse of 2j
DIRECTIONS = ((0, 1), (0, -1), (1, 0), (-1, 0),
              (1, 1), (-1, -1), (1, -1), (-1, 1))

SHAPE_NAMES = ("square", "disk", "ring", "frame", "plus", "cross",
               "hbar", "vbar", "triangle", "diamond", "checker", "corner")


def _shape_mask(kind, size):
    s = size
    yy, xx = np.mgrid[0:s, 0:s]
    c = (s - 1) / 2.0
    r = s / 2.0
    dist2 = (yy - c) ** 2 + (xx - c) ** 2
    thick = max(1, s // 3)
    if kind == "square":
        return np.ones((s, s), dtype=bool)
    if kind == "disk":
        return dist2 <= r * r
    if kind == "ring":
        return (dist2 <= r * r) & (dist2 >= (r - thick) ** 2)
    if kind == "frame":
        edge = (yy < thick) | (yy >= s - thick) | (xx < thick) | (xx >= s - thick)
        return edge
    if kind == "plus":
        return (np.abs(yy - c) <= thick / 2) | (np.abs(xx - c) <= thick / 2)
    if kind == "cross":
        return (np.abs(yy - xx) <= thick / 2) | (np.abs(yy + xx - (s - 1)) <= thick / 2)
    if kind == "hbar":
        return np.abs(yy - c) <= thick / 2
    if kind == "vbar":
        return np.abs(xx - c) <= thick / 2
    if kind == "triangle":
        return yy >= xx
    if kind == "diamond":
        return np.abs(yy - c) + np.abs(xx - c) <= r
    if kind == "checker":
        cell = max(1, s // 4)
        return ((yy // cell + xx // cell) % 2 == 0)
    if kind == "corner":
        return (yy >= s - thick * 2) | (xx < thick * 2)
    raise ConfigError(f"unknown shape kind {kind!r}")


@dataclass
class MotionBlobsConfig:
    mode: str = "motion"  # motion | appearance
    classes: int = 8
    videos_per_class: int = 50
    height: int = 24
    width: int = 24
    length: int = 16
    channels: int = 3
    blob_count: tuple = (1, 2)
    blob_size: tuple = (7, 10)
    speed: tuple = (1.0, 2.0)
    noise: float = 0.02
    background: float = 0.5  # blobs contrast both above and below this level
    seed: int = 0

    def validate(self):
        if self.mode not in ("motion", "appearance"):
            raise ConfigError(f"mode must be motion or appearance, got {self.mode!r}")
        if self.mode == "motion":
            if self.classes % 2 != 0 or not 2 <= self.classes <= len(DIRECTIONS):
                raise ConfigError(
                    f"motion mode needs an even class count in [2, {len(DIRECTIONS)}] "
                    f"for reversal pairing, got {self.classes}")
        else:
            if not 2 <= self.classes <= len(SHAPE_NAMES):
                raise ConfigError(
                    f"appearance mode supports 2-{len(SHAPE_NAMES)} classes, got {self.classes}")
        if self.channels not in (1, 3):
            raise ConfigError(f"channels must be 1 or 3, got {self.channels}")
        if self.blob_size[1] > min(self.height, self.width):
            raise ConfigError(
                f"blob size up to {self.blob_size[1]} does not fit a "
                f"{self.height}x{self.width} frame")
        if self.blob_size[0] < 2 or self.blob_size[0] > self.blob_size[1]:
            raise ConfigError(f"bad blob size range {self.blob_size}")
        if self.blob_count[0] < 1 or self.blob_count[0] > self.blob_count[1]:
            raise ConfigError(f"bad blob count range {self.blob_count}")
        if self.length < 16:
            raise ConfigError(f"videos must have at least 16 frames, got {self.length}")
        if not 0.0 <= self.noise <= 1.0:
            raise ConfigError(f"noise must be in [0, 1], got {self.noise}")
        if not 0.0 <= self.background <= 1.0:
            raise ConfigError(f"background must be in [0, 1], got {self.background}")
        return self


def _render_video(cfg, rng, label):
    h, w, l, c = cfg.height, cfg.width, cfg.length, cfg.channels
    canvas = np.full((c, l, h, w), cfg.background, dtype=np.float64)
    n_blobs = int(rng.integers(cfg.blob_count[0], cfg.blob_count[1] + 1))
    for _ in range(n_blobs):
        if cfg.mode == "appearance":
            kind = SHAPE_NAMES[label]
        else:
            kind = SHAPE_NAMES[int(rng.integers(len(SHAPE_NAMES)))]
        size = int(rng.integers(cfg.blob_size[0], cfg.blob_size[1] + 1))
        # per-channel contrast on either side of the background level
        signs = np.where(rng.random(3) < 0.5, -1.0, 1.0)
        color = np.clip(cfg.background + signs * rng.uniform(0.3, 0.5, size=3), 0.0, 1.0)[:c]
        # continuous-uniform start keeps the trajectory distribution exactly
        # reversal-symmetric between paired direction classes
        y0 = rng.uniform(0.0, h)
        x0 = rng.uniform(0.0, w)
        speed = rng.uniform(cfg.speed[0], cfg.speed[1])
        if cfg.mode == "motion":
            dy, dx = DIRECTIONS[label]
        else:
            dy, dx = DIRECTIONS[int(rng.integers(len(DIRECTIONS)))]
        norm = math.hypot(dy, dx)
        vy, vx = speed * dy / norm, speed * dx / norm
        mask_y, mask_x = np.nonzero(_shape_mask(kind, size))
        for t in range(l):
            yy = (int(math.floor(y0 + vy * t)) + mask_y) % h
            xx = (int(math.floor(x0 + vx * t)) + mask_x) % w
            for ch in range(c):
                canvas[ch, t, yy, xx] = color[ch]  # later blobs overdraw earlier ones
    if cfg.noise > 0:
        canvas = np.clip(canvas + rng.uniform(-cfg.noise, cfg.noise, size=canvas.shape),
                         0.0, 1.0)
    pixels = np.round(canvas * 255.0).astype(np.uint8)
    return VideoRecord(label, pixels.astype(np.float64) / 255.0)


def generate_motionblobs(cfg):
    """Balanced synthetic dataset, deterministic for a fixed (config, seed)."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    records = []
    for label in range(cfg.classes):
        for _ in range(cfg.videos_per_class):
            records.append(_render_video(cfg, rng, label))
    return records


# ---------------------------------------------------------------------------
# VSET dataset files

def save_dataset(records, path):
    with open(path, "wb") as f:
        f.write(VSET_MAGIC)
        f.write(struct.pack("<II", VSET_VERSION, len(records)))
        for rec in records:
            c, l, h, w = rec.frames.shape
            if c not in (1, 3):
                raise DataError(f"record channels must be 1 or 3, got {c}")
            f.write(struct.pack("<IBHHH", rec.label, c, l, h, w))
            pixels = np.round(np.clip(rec.frames, 0.0, 1.0) * 255.0).astype(np.uint8)
            f.write(pixels.tobytes())


def _read_exact(f, n, what):
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated dataset file while reading {what}")
    return buf


def load_dataset(path):
    """Lossless read of the stored 8-bit frames, promoted to floats in [0,1]."""
    records = []
    with open(path, "rb") as f:
        if _read_exact(f, 4, "magic") != VSET_MAGIC:
            raise FormatError(f"{path}: bad magic, not a dataset file")
        version, count = struct.unpack("<II", _read_exact(f, 8, "header"))
        if version != VSET_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        for i in range(count):
            label, c, l, h, w = struct.unpack("<IBHHH", _read_exact(f, 11, f"record {i} header"))
            if c not in (1, 3):
                raise FormatError(f"record {i}: channels must be 1 or 3, got {c}")
            nbytes = c * l * h * w
            raw = _read_exact(f, nbytes, f"record {i} pixels")
            pixels = np.frombuffer(raw, dtype=np.uint8).reshape(c, l, h, w)
            records.append(VideoRecord(label, pixels.astype(np.float64) / 255.0))
    return records


# ---------------------------------------------------------------------------
# frame geometry

def resize_frames(frames, out_h, out_w):
    """Bilinear per-frame resize, channels independent; linear ramps are
    preserved exactly (endpoint-aligned sampling)."""
    if out_h < 1 or out_w < 1:
        raise ConfigError(f"resize targets must be positive, got {out_h}x{out_w}")
    c, l, h, w = frames.shape

    def coords(n_in, n_out):
        if n_out == 1 or n_in == 1:
            i0 = np.zeros(n_out, dtype=np.int64)
            return i0, i0.copy(), np.zeros(n_out)
        src = np.arange(n_out) * (n_in - 1) / (n_out - 1)
        i0 = np.minimum(np.floor(src).astype(np.int64), n_in - 2)
        return i0, i0 + 1, src - i0

    y0, y1, fy = coords(h, out_h)
    x0, x1, fx = coords(w, out_w)
    fy = fy[:, None]
    fx = fx[None, :]
    tl = frames[:, :, y0[:, None], x0[None, :]]
    tr = frames[:, :, y0[:, None], x1[None, :]]
    bl = frames[:, :, y1[:, None], x0[None, :]]
    br = frames[:, :, y1[:, None], x1[None, :]]
    top = tl * (1 - fx) + tr * fx
    bot = bl * (1 - fx) + br * fx
    return top * (1 - fy) + bot * fy


def split_into_clips(length, clip_len=16, overlap=0):
    """Clip start offsets: 0, step, 2*step, ... with step = clip_len - overlap.
    Trailing frames that cannot fill a clip are dropped."""
    if overlap < 0 or overlap >= clip_len:
        raise ConfigError(f"overlap must be in [0, {clip_len}), got {overlap}")
    if length < clip_len:
        raise DataError(f"video of {length} frames is shorter than a {clip_len}-frame clip")
    step = clip_len - overlap
    return list(range(0, length - clip_len + 1, step))


def clip_indices(video_id, length, clip_len=16, overlap=0):
    return [ClipIndex(video_id, s, clip_len) for s in split_into_clips(length, clip_len, overlap)]


def center_crop(clip, out_h, out_w):
    """Spatially centered window with offsets floor((in - crop) / 2)."""
    c, l, h, w = clip.shape
    if out_h > h or out_w > w:
        raise DataError(f"cannot crop {out_h}x{out_w} from {h}x{w} frames")
    oy = (h - out_h) // 2
    ox = (w - out_w) // 2
    return clip[:, :, oy:oy + out_h, ox:ox + out_w]
