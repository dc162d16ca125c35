"""Video descriptors: per-clip activations averaged over overlapping clips
and L2-normalized, plus clip-averaged video prediction.

A descriptor is built from 16-frame clips with an 8-frame overlap, each
center-cropped to the network's input size. Named features are taken after
the layer's nonlinearity when one follows it (asking for "fc6" gives the
rectified fc6 activations).
"""

import struct
from dataclasses import dataclass

import numpy as np

from . import network, ops
from .errors import DataError, FormatError
from .videodata import center_crop, split_into_clips

DESC_MAGIC = b"DESC"
DESC_VERSION = 1
DEFAULT_OVERLAP = 8


@dataclass
class VideoDescriptor:
    layer: str
    values: np.ndarray
    video_id: int = -1
    degenerate: bool = False  # all-dead activations: values stay zero


def extract_clip_features(net, clip, layer):
    """Flattened activation of the named layer for one (c, l, h, w) clip."""
    resolved = network.feature_layer_name(net.spec, layer)
    fwd = network.forward(net, clip[None])
    return fwd.activations[resolved][0].ravel().copy()


def l2_normalize(vec):
    """Unit-norm copy; the zero vector is returned unchanged (flagged by
    callers as degenerate)."""
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        return vec.copy(), True
    return vec / norm, False


def _clip_starts(net, frames, overlap):
    c, clip_len, crop_h, crop_w = net.spec.input_shape
    if frames.shape[0] != c:
        raise DataError(f"video has {frames.shape[0]} channels, network expects {c}")
    return split_into_clips(frames.shape[1], clip_len, overlap), clip_len, crop_h, crop_w


def video_descriptor(net, frames, layer, video_id=-1, overlap=DEFAULT_OVERLAP):
    """Mean of per-clip features over the overlap-`overlap` clip set, then
    L2 normalization. Clip order does not affect the result."""
    starts, clip_len, crop_h, crop_w = _clip_starts(net, frames, overlap)
    resolved = network.feature_layer_name(net.spec, layer)
    total = None
    for start in starts:  # fixed clip-index reduction order
        clip = center_crop(frames[:, start:start + clip_len], crop_h, crop_w)
        fwd = network.forward(net, np.ascontiguousarray(clip)[None])
        feat = fwd.activations[resolved][0].ravel()
        total = feat.copy() if total is None else total + feat
    mean = total / len(starts)
    values, degenerate = l2_normalize(mean)
    return VideoDescriptor(layer, values, video_id, degenerate)


def video_predict(net, frames, n_clips=10, seed=0):
    """Mean softmax probabilities over randomly extracted center-cropped
    clips; the argmax is the video label."""
    c, clip_len, crop_h, crop_w = net.spec.input_shape
    if frames.shape[1] < clip_len:
        raise DataError(f"video of {frames.shape[1]} frames is shorter than "
                        f"a {clip_len}-frame clip")
    rng = np.random.default_rng(seed)
    starts = rng.integers(0, frames.shape[1] - clip_len + 1, size=n_clips)
    total = np.zeros(net.spec.class_count)
    for start in starts:
        clip = center_crop(frames[:, start:start + clip_len], crop_h, crop_w)
        fwd = network.forward(net, np.ascontiguousarray(clip)[None])
        total += fwd.activations["prob"][0]
    return total / n_clips


# ---------------------------------------------------------------------------
# descriptor export

def save_descriptors_csv(descriptors, path):
    with open(path, "w") as f:
        for d in descriptors:
            f.write(str(d.video_id))
            for v in d.values:
                f.write(f",{v!r}")
            f.write("\n")


def save_descriptors(descriptors, path):
    """Binary export: magic, version, count, dim, then count*dim 32-bit values."""
    if not descriptors:
        raise DataError("no descriptors to save")
    dim = len(descriptors[0].values)
    with open(path, "wb") as f:
        f.write(DESC_MAGIC)
        f.write(struct.pack("<III", DESC_VERSION, len(descriptors), dim))
        for d in descriptors:
            if len(d.values) != dim:
                raise DataError(f"descriptor for video {d.video_id} has dimension "
                                f"{len(d.values)} != {dim}")
            f.write(np.asarray(d.values).astype("<f4").tobytes())


def load_descriptors(path):
    """Read a binary descriptor file back as a (count, dim) float64 matrix."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != DESC_MAGIC:
            raise FormatError(f"{path}: bad magic, not a descriptor file")
        header = f.read(12)
        if len(header) != 12:
            raise FormatError(f"{path}: truncated header")
        version, count, dim = struct.unpack("<III", header)
        if version != DESC_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        raw = f.read(4 * count * dim)
        if len(raw) != 4 * count * dim:
            raise FormatError(f"{path}: truncated payload")
        return np.frombuffer(raw, dtype="<f4").reshape(count, dim).astype(np.float64)
