"""Declarative layer-chain architectures: specs, presets, instantiation,
forward/backward over the chain, parameter counting and weight files.

Presets cover a family of 5-conv/5-pool nets whose convolution temporal
depths vary per layer, three input-resolution variants of the same family,
and an 8-conv net with 4096-wide fully connected layers. All presets share
the pooling stack pool1=(1,2,2), pool2..pool5=(2,2,2).
"""

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import ConfigError, FormatError, ShapeError

WEIGHT_MAGIC = b"C3DW"
WEIGHT_VERSION = 1


@dataclass(frozen=True)
class ConvSpec:
    out_channels: int
    in_channels: int
    temporal_depth: int
    spatial_size: int

    def __post_init__(self):
        if self.temporal_depth % 2 == 0 or self.spatial_size % 2 == 0:
            raise ConfigError(
                f"conv kernel extents must be odd, got d={self.temporal_depth}, "
                f"k={self.spatial_size}")

    @property
    def padding(self):
        return ((self.temporal_depth - 1) // 2, (self.spatial_size - 1) // 2,
                (self.spatial_size - 1) // 2)

    @property
    def weight_shape(self):
        return (self.out_channels, self.in_channels, self.temporal_depth,
                self.spatial_size, self.spatial_size)


@dataclass(frozen=True)
class PoolSpec:
    kernel: tuple  # (kl, kh, kw); stride equals kernel, ceiling mode


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # conv3d | maxpool3d | relu | flatten | linear | softmax_xent
    name: str
    conv: ConvSpec = None
    pool: PoolSpec = None
    in_features: int = 0
    out_features: int = 0
    init: object = None  # per-layer weight init override, None = uniform-fan-in


def conv_layer(name, out_channels, in_channels, temporal_depth, spatial_size=3, init=None):
    return LayerSpec("conv3d", name,
                     conv=ConvSpec(out_channels, in_channels, temporal_depth, spatial_size),
                     init=init)


def pool_layer(name, kernel):
    return LayerSpec("maxpool3d", name, pool=PoolSpec(tuple(int(k) for k in kernel)))


def relu_layer(name):
    return LayerSpec("relu", name)


def flatten_layer(name="flatten"):
    return LayerSpec("flatten", name)


def linear_layer(name, out_features, in_features, init=None):
    return LayerSpec("linear", name, in_features=int(in_features),
                     out_features=int(out_features), init=init)


def softmax_layer(name="prob"):
    return LayerSpec("softmax_xent", name)


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple  # (c, l, h, w)
    layers: tuple
    class_count: int
    input_offset: float = 0.0  # subtracted from the batch before the first layer

    def __post_init__(self):
        names = [l.name for l in self.layers]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ConfigError(f"duplicate layer names {dupes}")
        if not self.layers or self.layers[-1].kind != "softmax_xent":
            raise ConfigError("last layer must be the softmax classifier head")
        self.infer_shapes()

    def infer_shapes(self):
        """Per-layer output shapes (without the batch axis); raises ShapeError
        naming the first offending layer."""
        shape = tuple(self.input_shape)
        shapes = []
        for layer in self.layers:
            if layer.kind == "conv3d":
                if len(shape) != 4:
                    raise ShapeError(f"layer {layer.name}: conv3d on non-volume input {shape}")
                if shape[0] != layer.conv.in_channels:
                    raise ShapeError(
                        f"layer {layer.name}: expects {layer.conv.in_channels} input "
                        f"channels, got {shape[0]}")
                shape = (layer.conv.out_channels,) + shape[1:]
            elif layer.kind == "maxpool3d":
                if len(shape) != 4:
                    raise ShapeError(f"layer {layer.name}: maxpool3d on non-volume input {shape}")
                kl, kh, kw = layer.pool.kernel
                shape = (shape[0], math.ceil(shape[1] / kl), math.ceil(shape[2] / kh),
                         math.ceil(shape[3] / kw))
            elif layer.kind == "flatten":
                shape = (math.prod(shape),)
            elif layer.kind == "linear":
                if len(shape) != 1:
                    raise ShapeError(f"layer {layer.name}: linear on non-flat input {shape}")
                if shape[0] != layer.in_features:
                    raise ShapeError(
                        f"layer {layer.name}: expects {layer.in_features} inputs, "
                        f"got {shape[0]}")
                shape = (layer.out_features,)
            elif layer.kind in ("relu", "softmax_xent"):
                pass
            else:
                raise ConfigError(f"layer {layer.name}: unknown kind {layer.kind!r}")
            shapes.append((layer.name, shape))
        if shapes[-1][1] != (self.class_count,):
            raise ShapeError(
                f"classifier head width {shapes[-1][1]} != class count {self.class_count}")
        return shapes

    def layer_names(self):
        return [l.name for l in self.layers]

    def parametric_layers(self):
        return [l for l in self.layers if l.kind in ("conv3d", "linear")]


def feature_layer_name(spec, name):
    """Resolve a layer name to the activation that represents its feature:
    the ReLU immediately following it when there is one (fc6 means
    post-ReLU fc6), otherwise the layer itself."""
    names = spec.layer_names()
    if name not in names:
        raise ConfigError(f"unknown layer {name!r}; valid names: {', '.join(names)}")
    idx = names.index(name)
    if idx + 1 < len(names) and spec.layers[idx + 1].kind == "relu":
        return names[idx + 1]
    return name


class Network:
    """A spec plus its parameter tensors, keyed "<layer>.weight"/"<layer>.bias"."""

    def __init__(self, spec, params):
        self.spec = spec
        self.params = params
        for layer in spec.parametric_layers():
            w = params[f"{layer.name}.weight"]
            b = params[f"{layer.name}.bias"]
            expected = layer.conv.weight_shape if layer.kind == "conv3d" \
                else (layer.out_features, layer.in_features)
            if w.shape != expected:
                raise ShapeError(f"layer {layer.name}: weight shape {w.shape} != {expected}")
            if b.shape != (expected[0],):
                raise ShapeError(f"layer {layer.name}: bias shape {b.shape} != ({expected[0]},)")

    def param_names(self):
        out = []
        for layer in self.spec.parametric_layers():
            out.append(f"{layer.name}.weight")
            out.append(f"{layer.name}.bias")
        return out


def build(spec, seed=0):
    """Instantiate parameters: weights uniform-fan-in (or the layer's init
    override), biases zero. Deterministic for a fixed (spec, seed)."""
    rng = np.random.default_rng(seed)
    params = {}
    for layer in spec.parametric_layers():
        wshape = layer.conv.weight_shape if layer.kind == "conv3d" \
            else (layer.out_features, layer.in_features)
        nout = wshape[0]
        init = layer.init if layer.init is not None else "uniform-fan-in"
        if init == "uniform-fan-in":
            init = ("uniform-fan-in", 1.0)
        if isinstance(init, tuple) and init[0] == "uniform-fan-in":
            bound = float(init[1]) * math.sqrt(1.0 / math.prod(wshape[1:]))
            w = rng.uniform(-bound, bound, size=wshape)
        elif isinstance(init, tuple) and init[0] == "constant":
            w = np.full(wshape, float(init[1]))
        else:
            raise ConfigError(f"layer {layer.name}: unknown init {layer.init!r}")
        params[f"{layer.name}.weight"] = w
        params[f"{layer.name}.bias"] = np.zeros(nout, dtype=np.float64)
    return Network(spec, params)


class ForwardResult:
    """Activations by layer name, pooling switches, and the inputs each
    layer saw (needed by backward)."""

    def __init__(self, batch, activations, switches, layer_inputs):
        self.batch = batch
        self.activations = activations
        self.switches = switches
        self.layer_inputs = layer_inputs

    def __getitem__(self, name):
        return self.activations[name]


def forward(net, batch, record_switches=False):
    """Run the chain on a (n, c, l, h, w) batch; every intermediate
    activation is retrievable by layer name. Bit-deterministic."""
    spec = net.spec
    batch = np.ascontiguousarray(batch, dtype=np.float64)
    expected = (batch.shape[0],) + tuple(spec.input_shape)
    if batch.shape != expected:
        raise ShapeError(f"batch shape {batch.shape} != {expected}")
    x = batch - spec.input_offset if spec.input_offset else batch
    activations = {}
    switches = {}
    layer_inputs = []
    for layer in spec.layers:
        layer_inputs.append(x)
        if layer.kind == "conv3d":
            x = ops.conv3d_forward(x, net.params[f"{layer.name}.weight"],
                                   net.params[f"{layer.name}.bias"])
        elif layer.kind == "maxpool3d":
            x, sw = ops.maxpool3d_forward(x, layer.pool.kernel)
            if record_switches:
                switches[layer.name] = sw
        elif layer.kind == "relu":
            x = ops.relu(x)
        elif layer.kind == "flatten":
            x = x.reshape(x.shape[0], -1)
        elif layer.kind == "linear":
            x = ops.linear_forward(x, net.params[f"{layer.name}.weight"],
                                   net.params[f"{layer.name}.bias"])
        elif layer.kind == "softmax_xent":
            x = ops.softmax(x)
        activations[layer.name] = x
    return ForwardResult(batch, activations, switches, layer_inputs)


def logits_name(spec):
    """Name of the linear layer feeding the softmax head."""
    return spec.layers[-2].name


def backward(net, fwd, grad_logits):
    """Backpropagate from the classifier logits; returns parameter gradients
    keyed like net.params, plus the gradient w.r.t. the input batch."""
    spec = net.spec
    if fwd is None or not fwd.layer_inputs:
        raise ShapeError("missing forward cache; call forward() first")
    logits = fwd.activations[logits_name(spec)]
    if grad_logits.shape != logits.shape:
        raise ShapeError(f"grad_logits shape {grad_logits.shape} != {logits.shape}")
    grads = {}
    g = grad_logits
    for i in range(len(spec.layers) - 2, -1, -1):  # softmax head carries no params
        layer = spec.layers[i]
        x = fwd.layer_inputs[i]
        if layer.kind == "conv3d":
            g, gw, gb = ops.conv3d_backward(x, net.params[f"{layer.name}.weight"],
                                            net.params[f"{layer.name}.bias"], g)
            grads[f"{layer.name}.weight"] = gw
            grads[f"{layer.name}.bias"] = gb
        elif layer.kind == "maxpool3d":
            if layer.name not in fwd.switches:
                raise ShapeError(f"layer {layer.name}: forward was run without "
                                 "record_switches, cannot backprop")
            g = ops.maxpool3d_backward(fwd.switches[layer.name], g, x.shape)
        elif layer.kind == "relu":
            g = ops.relu_backward(x, g)
        elif layer.kind == "flatten":
            g = g.reshape(x.shape)
        elif layer.kind == "linear":
            g, gw, gb = ops.linear_backward(x, net.params[f"{layer.name}.weight"], g)
            grads[f"{layer.name}.weight"] = gw
            grads[f"{layer.name}.bias"] = gb
    grads["__input__"] = g
    return grads


def count_params(spec):
    """Exact per-layer and total parameter counts, biases included."""
    per_layer = []
    for layer in spec.parametric_layers():
        if layer.kind == "conv3d":
            c = layer.conv
            n = c.out_channels * c.in_channels * c.temporal_depth * c.spatial_size ** 2 \
                + c.out_channels
        else:
            n = layer.out_features * layer.in_features + layer.out_features
        per_layer.append((layer.name, n))
    return per_layer, sum(n for _, n in per_layer)


# ---------------------------------------------------------------------------
# presets

def family_spec(temporal_depths, class_count, input_shape=(3, 16, 112, 112),
                filters=(64, 128, 256, 256, 256), fc_width=2048, spatial_size=3,
                init=None, input_offset=0.0):
    """The 5-conv/5-pool architecture family: conv1..conv5 with the given
    per-layer temporal depths, pool1=(1,2,2) then (2,2,2) pools, two
    fc layers of fc_width, and the classifier."""
    if len(temporal_depths) != len(filters):
        raise ConfigError(f"{len(temporal_depths)} temporal depths for {len(filters)} convs")
    c, l, h, w = input_shape
    layers = []
    in_ch = c
    lt, lh, lw = l, h, w
    for i, (d, f) in enumerate(zip(temporal_depths, filters), start=1):
        layers.append(conv_layer(f"conv{i}", f, in_ch, d, spatial_size, init=init))
        layers.append(relu_layer(f"conv{i}_relu"))
        kernel = (1, 2, 2) if i == 1 else (2, 2, 2)
        layers.append(pool_layer(f"pool{i}", kernel))
        lt, lh, lw = (math.ceil(lt / kernel[0]), math.ceil(lh / kernel[1]),
                      math.ceil(lw / kernel[2]))
        in_ch = f
    flat = in_ch * lt * lh * lw
    layers.append(flatten_layer())
    layers.append(linear_layer("fc6", fc_width, flat, init=init))
    layers.append(relu_layer("fc6_relu"))
    layers.append(linear_layer("fc7", fc_width, fc_width, init=init))
    layers.append(relu_layer("fc7_relu"))
    layers.append(linear_layer("fc8", class_count, fc_width, init=init))
    layers.append(softmax_layer())
    return NetworkSpec(tuple(input_shape), tuple(layers), class_count, input_offset)


def deep_spec(class_count, input_shape=(3, 16, 112, 112), fc_width=4096,
              stage_filters=((64,), (128,), (256, 256), (512, 512), (512, 512)),
              temporal_depth=3, spatial_size=3):
    """The 8-conv net: stages of homogeneous 3x3x3 convs named conv1a,
    conv2a, conv3a/conv3b, ... with a pool after each stage and 4096-wide
    fc layers."""
    c, l, h, w = input_shape
    layers = []
    in_ch = c
    lt, lh, lw = l, h, w
    for i, stage in enumerate(stage_filters, start=1):
        for j, f in enumerate(stage):
            name = f"conv{i}{'abcd'[j]}"
            layers.append(conv_layer(name, f, in_ch, temporal_depth, spatial_size))
            layers.append(relu_layer(f"{name}_relu"))
            in_ch = f
        kernel = (1, 2, 2) if i == 1 else (2, 2, 2)
        layers.append(pool_layer(f"pool{i}", kernel))
        lt, lh, lw = (math.ceil(lt / kernel[0]), math.ceil(lh / kernel[1]),
                      math.ceil(lw / kernel[2]))
    flat = in_ch * lt * lh * lw
    layers.append(flatten_layer())
    layers.append(linear_layer("fc6", fc_width, flat))
    layers.append(relu_layer("fc6_relu"))
    layers.append(linear_layer("fc7", fc_width, fc_width))
    layers.append(relu_layer("fc7_relu"))
    layers.append(linear_layer("fc8", class_count, fc_width))
    layers.append(softmax_layer())
    return NetworkSpec(tuple(input_shape), tuple(layers), class_count)


PRESET_NAMES = ("depth-1", "depth-3", "depth-5", "depth-7", "increase", "decrease",
                "net-64", "net-128", "net-256", "c3d")


def preset_spec(name, class_count):
    if name in ("depth-1", "depth-3", "depth-5", "depth-7"):
        d = int(name.split("-")[1])
        return family_spec((d,) * 5, class_count)
    if name == "increase":
        return family_spec((3, 3, 5, 5, 7), class_count)
    if name == "decrease":
        return family_spec((7, 5, 5, 3, 3), class_count)
    if name == "net-64":
        return family_spec((3,) * 5, class_count, input_shape=(3, 16, 64, 64))
    if name == "net-128":
        return family_spec((3,) * 5, class_count)  # same net as depth-3
    if name == "net-256":
        # 224x224 crops of 256x256 inputs; a full 256 input would not match
        # the reported parameter total
        return family_spec((3,) * 5, class_count, input_shape=(3, 16, 224, 224))
    if name == "c3d":
        return deep_spec(class_count)
    raise ConfigError(f"unknown preset {name!r}; valid: {', '.join(PRESET_NAMES)}")


# ---------------------------------------------------------------------------
# weight files

def _write_record(f, name, arr):
    raw = name.encode("utf-8")
    f.write(struct.pack("<I", len(raw)))
    f.write(raw)
    f.write(struct.pack("<I", arr.ndim))
    f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    f.write(arr.astype("<f4").tobytes())


def save_weights(net, path):
    """Binary weight file: magic, version, record count, then one record per
    tensor in spec order (weights before biases per layer) at 32-bit
    precision."""
    names = net.param_names()
    with open(path, "wb") as f:
        f.write(WEIGHT_MAGIC)
        f.write(struct.pack("<II", WEIGHT_VERSION, len(names)))
        for name in names:
            _write_record(f, name, net.params[name])


def _read_exact(f, n, what):
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated weight file while reading {what}")
    return buf


def load_weights(path, spec):
    """Read a weight file back into a Network for the given spec. Shape or
    name mismatches raise ShapeError naming the offending record."""
    with open(path, "rb") as f:
        if _read_exact(f, 4, "magic") != WEIGHT_MAGIC:
            raise FormatError(f"{path}: bad magic, not a weight file")
        version, count = struct.unpack("<II", _read_exact(f, 8, "header"))
        if version != WEIGHT_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        params = {}
        for i in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(f, 4, f"record {i} name length"))
            name = _read_exact(f, name_len, f"record {i} name").decode("utf-8")
            (ndim,) = struct.unpack("<I", _read_exact(f, 4, f"{name} ndim"))
            dims = struct.unpack(f"<{ndim}I", _read_exact(f, 4 * ndim, f"{name} extents"))
            nbytes = 4 * math.prod(dims)
            raw = _read_exact(f, nbytes, f"{name} values")
            params[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float64)
    net_names = []
    for layer in spec.parametric_layers():
        net_names.extend([f"{layer.name}.weight", f"{layer.name}.bias"])
    for name in net_names:
        if name not in params:
            raise ShapeError(f"weight file is missing record {name!r}")
    extra = sorted(set(params) - set(net_names))
    if extra:
        raise ShapeError(f"weight file has records not in the spec: {extra}")
    net = Network(spec, {n: params[n] for n in net_names})
    return net
