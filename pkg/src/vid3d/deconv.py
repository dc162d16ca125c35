"""Project a chosen feature-map activation back to input pixel space through
max-unpooling (via recorded switches), rectification and transposed
convolution with the layer's own weights.

The reverse chain is linear in the selected activation (biases are skipped),
so deconvolutions of multiple activations add. The reverse ReLU gates by the
reverse signal's own sign by default; "forward-mask" gating by the forward
activation pattern is available as an option.
"""

import os
from dataclasses import dataclass

import numpy as np

from . import network, ops
from .errors import ConfigError, DataError, ShapeError

RELU_MODES = ("deconvnet", "forward-mask")


@dataclass(frozen=True)
class DeconvRequest:
    layer: str
    channel: int
    selection: object = "top-1"  # "top-1" or an explicit (t, y, x) position
    relu_mode: str = "deconvnet"


def _resolve_layer_index(spec, name):
    resolved = network.feature_layer_name(spec, name)
    names = spec.layer_names()
    return names.index(resolved), resolved


def deconv_from_map(net, fwd, layer, signal, relu_mode="deconvnet"):
    """Reverse an activation-space signal at `layer` (post-nonlinearity)
    back to the input clip space. signal: (n, ...) shaped like the layer's
    activation. Linear in the signal."""
    if relu_mode not in RELU_MODES:
        raise ConfigError(f"relu_mode must be one of {RELU_MODES}, got {relu_mode!r}")
    spec = net.spec
    idx, resolved = _resolve_layer_index(spec, layer)
    act = fwd.activations[resolved]
    if signal.shape != act.shape:
        raise ShapeError(f"signal shape {signal.shape} != activation {act.shape}")
    r = signal
    for i in range(idx, -1, -1):
        lay = spec.layers[i]
        if lay.kind == "relu":
            if relu_mode == "deconvnet":
                r = np.maximum(r, 0.0)
            else:
                r = np.where(fwd.layer_inputs[i] > 0.0, r, 0.0)
        elif lay.kind == "maxpool3d":
            if lay.name not in fwd.switches:
                raise DataError(f"layer {lay.name}: forward pass was run without "
                                "record_switches")
            r = ops.maxpool3d_backward(fwd.switches[lay.name], r,
                                       fwd.layer_inputs[i].shape)
        elif lay.kind == "conv3d":
            r = ops.conv3d_transposed(r, net.params[f"{lay.name}.weight"])
        elif lay.kind == "flatten":
            r = r.reshape(fwd.layer_inputs[i].shape)
        elif lay.kind == "linear":
            r = r @ net.params[f"{lay.name}.weight"]
        elif lay.kind == "softmax_xent":
            raise ConfigError("cannot reverse through the softmax head")
    return r


def deconv_feature_map(net, clip, request):
    """Zero all activations at the target layer except the selected one, then
    reverse to pixel space. Returns a tensor with the clip's own shape."""
    fwd = network.forward(net, np.ascontiguousarray(clip)[None], record_switches=True)
    spec = net.spec
    _, resolved = _resolve_layer_index(spec, request.layer)
    act = fwd.activations[resolved]
    if act.ndim != 5:
        raise ConfigError(f"layer {request.layer} has no spatial feature map to select from")
    n, channels, l, h, w = act.shape
    if not 0 <= request.channel < channels:
        raise ConfigError(f"channel {request.channel} out of range [0, {channels})")
    vol = act[0, request.channel]
    if request.selection == "top-1":
        pos = np.unravel_index(int(np.argmax(vol)), vol.shape)
    else:
        pos = tuple(int(p) for p in request.selection)
        if len(pos) != 3 or any(p < 0 or p >= e for p, e in zip(pos, (l, h, w))):
            raise ConfigError(f"position {request.selection} outside layer extents {(l, h, w)}")
    signal = np.zeros_like(act)
    signal[(0, request.channel) + pos] = vol[pos]
    return deconv_from_map(net, fwd, request.layer, signal, request.relu_mode)[0]


def top_activations(net, clips, layer, channel, count):
    """All activation positions of the channel across the clips, ranked by
    descending value with ties broken by (clip index, flat position).
    Returns [(clip_index, (t, y, x), value), ...] of length <= count."""
    if len(clips) == 0:
        raise DataError("empty clip set")
    values, clip_ids, flat_pos = [], [], []
    vol_shape = None
    resolved = network.feature_layer_name(net.spec, layer)
    for ci, clip in enumerate(clips):
        fwd = network.forward(net, np.ascontiguousarray(clip)[None])
        act = fwd.activations[resolved]
        if act.ndim != 5:
            raise ConfigError(f"layer {layer} has no spatial feature map")
        if not 0 <= channel < act.shape[1]:
            raise ConfigError(f"channel {channel} out of range [0, {act.shape[1]})")
        vol = act[0, channel]
        vol_shape = vol.shape
        flat = vol.ravel()
        values.append(flat)
        clip_ids.append(np.full(flat.size, ci, dtype=np.int64))
        flat_pos.append(np.arange(flat.size, dtype=np.int64))
    values = np.concatenate(values)
    clip_ids = np.concatenate(clip_ids)
    flat_pos = np.concatenate(flat_pos)
    order = np.lexsort((flat_pos, clip_ids, -values))
    out = []
    for j in order[:count]:
        pos = np.unravel_index(int(flat_pos[j]), vol_shape)
        out.append((int(clip_ids[j]), tuple(int(p) for p in pos), float(values[j])))
    return out


# ---------------------------------------------------------------------------
# image sequence output (binary PGM for 1 channel, PPM for 3)

def write_image_sequence(clip, dir_path):
    """One image per frame, min-max normalized to [0, 255] per frame;
    zero-range frames render mid-gray (128). Returns the file paths."""
    c, l, h, w = clip.shape
    if c not in (1, 3):
        raise DataError(f"can only render 1- or 3-channel clips, got {c}")
    os.makedirs(dir_path, exist_ok=True)
    ext = "pgm" if c == 1 else "ppm"
    paths = []
    for t in range(l):
        frame = clip[:, t]
        lo, hi = float(frame.min()), float(frame.max())
        if hi > lo:
            pixels = np.round((frame - lo) / (hi - lo) * 255.0).astype(np.uint8)
        else:
            pixels = np.full(frame.shape, 128, dtype=np.uint8)
        path = os.path.join(dir_path, f"frame_{t:04d}.{ext}")
        with open(path, "wb") as f:
            magic = b"P5" if c == 1 else b"P6"
            f.write(magic + b"\n%d %d\n255\n" % (w, h))
            f.write(pixels.transpose(1, 2, 0).tobytes())  # rows of (interleaved) pixels
        paths.append(path)
    return paths


def read_image(path):
    """Read back a binary PGM/PPM written by write_image_sequence; returns a
    (c, h, w) uint8 array."""
    with open(path, "rb") as f:
        data = f.read()
    fields = data.split(maxsplit=4)
    if len(fields) < 5 or fields[0] not in (b"P5", b"P6"):
        raise ShapeError(f"{path}: not a binary PGM/PPM file")
    c = 1 if fields[0] == b"P5" else 3
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ShapeError(f"{path}: unsupported max value {maxval}")
    pixels = np.frombuffer(fields[4][:c * h * w], dtype=np.uint8)
    if pixels.size != c * h * w:
        raise ShapeError(f"{path}: truncated pixel data")
    return pixels.reshape(h, w, c).transpose(2, 0, 1)
