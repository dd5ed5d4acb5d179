"""Small convolutional network, forward and backward, written on numpy.

Layer vocabulary: valid cross-correlation convolutions (stride 1), ReLU,
max/average pooling, fully connected layers and a terminal softmax over
(11+1) classes. Everything is float64 and deterministic: weight init comes
from a seeded generator and max-pool backward routes to the first maximum
in row-major order.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imaging import Image

__all__ = [
    "Conv",
    "ReLU",
    "MaxPool",
    "AvgPool",
    "FullyConnected",
    "Softmax",
    "NetworkSpec",
    "init_parameters",
    "conv_forward",
    "relu",
    "pool_forward",
    "softmax",
    "cross_entropy",
    "forward",
    "forward_batch",
    "backward",
    "backward_batch",
    "gradient_check",
    "default_network",
    "tiny_network",
    "save_checkpoint",
    "load_checkpoint",
    "parameter_checksum",
]

CHECKPOINT_MAGIC = b"FSCN"
CHECKPOINT_VERSION = 1
LOG_CLAMP = 1e-12


class CheckpointFormatError(ValueError):
    """Corrupt or unsupported checkpoint file."""


@dataclass(frozen=True)
class Conv:
    in_maps: int
    out_maps: int
    kernel_h: int
    kernel_w: int


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class MaxPool:
    window: int
    stride: int


@dataclass(frozen=True)
class AvgPool:
    window: int
    stride: int


@dataclass(frozen=True)
class FullyConnected:
    in_dim: int
    out_dim: int


@dataclass(frozen=True)
class Softmax:
    pass


LayerSpec = Conv | ReLU | MaxPool | AvgPool | FullyConnected | Softmax


@dataclass(frozen=True)
class NetworkSpec:
    input: tuple[int, int, int]  # (channels, height, width)
    layers: tuple[LayerSpec, ...]
    class_count: int = 12
    preprocess: str = "none"  # or "mean_subtract", applied to patches

    def __post_init__(self):
        if not isinstance(self.layers[-1], Softmax):
            raise ValueError("network must end in a single Softmax")
        if sum(isinstance(l, Softmax) for l in self.layers) != 1:
            raise ValueError("exactly one Softmax allowed")
        shape = self.input
        for layer in self.layers[:-1]:
            shape = _out_shape(layer, shape)
        dim = shape if isinstance(shape, int) else int(np.prod(shape))
        if dim != self.class_count:
            raise ValueError(f"final layer emits {dim} values, expected {self.class_count}")


def _out_shape(layer: LayerSpec, shape):
    if isinstance(layer, Conv):
        c, h, w = shape
        if c != layer.in_maps:
            raise ValueError(f"conv expects {layer.in_maps} maps, got {c}")
        oh, ow = h - layer.kernel_h + 1, w - layer.kernel_w + 1
        if oh < 1 or ow < 1:
            raise ValueError("kernel larger than input")
        return (layer.out_maps, oh, ow)
    if isinstance(layer, (MaxPool, AvgPool)):
        c, h, w = shape
        if layer.window > h or layer.window > w:
            raise ValueError("pool window exceeds input")
        return (c, (h - layer.window) // layer.stride + 1, (w - layer.window) // layer.stride + 1)
    if isinstance(layer, FullyConnected):
        dim = shape if isinstance(shape, int) else int(np.prod(shape))
        if dim != layer.in_dim:
            raise ValueError(f"fc expects {layer.in_dim} inputs, got {dim}")
        return layer.out_dim
    return shape  # ReLU / Softmax


def init_parameters(net: NetworkSpec, seed: int = 0) -> list:
    """He-style scaled uniform weights, zero biases; one entry per layer."""
    rng = np.random.default_rng(seed)
    params = []
    for layer in net.layers:
        if isinstance(layer, Conv):
            fan_in = layer.in_maps * layer.kernel_h * layer.kernel_w
            limit = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-limit, limit, (layer.out_maps, layer.in_maps, layer.kernel_h, layer.kernel_w))
            params.append((w, np.zeros(layer.out_maps)))
        elif isinstance(layer, FullyConnected):
            limit = np.sqrt(6.0 / layer.in_dim)
            w = rng.uniform(-limit, limit, (layer.out_dim, layer.in_dim))
            params.append((w, np.zeros(layer.out_dim)))
        else:
            params.append(None)
    return params


# --- layer primitives (leading batch axis) ---------------------------------

def conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Valid cross-correlation, stride 1. x: (C,H,W) or (B,C,H,W)."""
    single = x.ndim == 3
    if single:
        x = x[None]
    kh, kw = w.shape[2], w.shape[3]
    if kh > x.shape[2] or kw > x.shape[3]:
        raise ValueError("kernel larger than input")
    cols = sliding_window_view(x, (kh, kw), axis=(2, 3))  # (B,C,OH,OW,kh,kw)
    out = np.einsum("bcyxuv,ocuv->boyx", cols, w, optimize=True) + b[None, :, None, None]
    return out[0] if single else out


def _conv_backward(x, w, dout):
    cols = sliding_window_view(x, (w.shape[2], w.shape[3]), axis=(2, 3))
    dw = np.einsum("bcyxuv,boyx->ocuv", cols, dout, optimize=True)
    db = dout.sum(axis=(0, 2, 3))
    dx = np.zeros_like(x)
    oh, ow = dout.shape[2], dout.shape[3]
    spread = np.tensordot(dout, w, axes=([1], [0]))  # (B, OH, OW, C, kh, kw)
    for u in range(w.shape[2]):
        for v in range(w.shape[3]):
            dx[:, :, u:u + oh, v:v + ow] += spread[..., u, v].transpose(0, 3, 1, 2)
    return dx, dw, db


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def pool_forward(x: np.ndarray, kind: str, window: int, stride: int) -> np.ndarray:
    """Max or average pooling. x: (C,H,W) or (B,C,H,W)."""
    single = x.ndim == 3
    if single:
        x = x[None]
    if window > x.shape[2] or window > x.shape[3]:
        raise ValueError("pool window exceeds input")
    wv = sliding_window_view(x, (window, window), axis=(2, 3))[:, :, ::stride, ::stride]
    if kind == "max":
        out = wv.max(axis=(4, 5))
    elif kind == "avg":
        out = wv.mean(axis=(4, 5))
    else:
        raise ValueError(f"unknown pool kind {kind!r}")
    return out[0] if single else out


def _pool_backward(x, dout, kind, window, stride):
    b, c, h, w = x.shape
    _, _, oh, ow = dout.shape
    dx = np.zeros_like(x)
    if kind == "avg":
        share = dout / (window * window)
        for u in range(window):
            for v in range(window):
                dx[:, :, u:u + oh * stride:stride, v:v + ow * stride:stride] += share
        return dx
    wv = sliding_window_view(x, (window, window), axis=(2, 3))[:, :, ::stride, ::stride]
    flat = wv.reshape(b, c, oh, ow, window * window)
    arg = flat.argmax(axis=4)  # first max in row-major order
    uu, vv = arg // window, arg % window
    bi, ci, yi, xi = np.ix_(np.arange(b), np.arange(c), np.arange(oh), np.arange(ow))
    np.add.at(dx, (bi, ci, yi * stride + uu, xi * stride + vv), dout)
    return dx


def softmax(logits: np.ndarray) -> np.ndarray:
    """Shift-invariant softmax over the last axis."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(p: np.ndarray, target: int) -> float:
    """-log p[target], with p clamped below at 1e-12."""
    if not 0 <= target < p.shape[-1]:
        raise ValueError(f"target {target} out of range for {p.shape[-1]} classes")
    return float(-np.log(max(p[target], LOG_CLAMP)))


# --- network-level forward / backward --------------------------------------

def _patch_to_input(net: NetworkSpec, patch: Image) -> np.ndarray:
    x = patch.pixels.transpose(2, 0, 1)
    c, h, w = net.input
    if x.shape != (c, h, w):
        raise ValueError(f"patch shape {x.shape} does not match network input {(c, h, w)}")
    if net.preprocess == "mean_subtract":
        x = x - x.mean()
    return x


def forward_batch(net: NetworkSpec, params: list, xs: np.ndarray) -> tuple[np.ndarray, list]:
    """xs: (B, C, H, W). Returns (probabilities (B, K), per-layer cache)."""
    cache = []
    a = xs
    for layer, p in zip(net.layers, params):
        if isinstance(layer, Conv):
            cache.append(a)
            a = conv_forward(a, p[0], p[1])
        elif isinstance(layer, ReLU):
            a = relu(a)
            cache.append(a)
        elif isinstance(layer, (MaxPool, AvgPool)):
            cache.append(a)
            kind = "max" if isinstance(layer, MaxPool) else "avg"
            a = pool_forward(a, kind, layer.window, layer.stride)
        elif isinstance(layer, FullyConnected):
            a = a.reshape(a.shape[0], -1)
            cache.append(a)
            a = a @ p[0].T + p[1]
        elif isinstance(layer, Softmax):
            a = softmax(a.reshape(a.shape[0], -1))
            cache.append(a)
    return a, cache


def forward(net: NetworkSpec, params: list, patch: Image) -> tuple[np.ndarray, list]:
    """Classify one patch; returns (probability vector, cache for backward)."""
    probs, cache = forward_batch(net, params, _patch_to_input(net, patch)[None])
    return probs[0], cache


def backward_batch(net: NetworkSpec, params: list, cache: list, targets: np.ndarray) -> list:
    """Mean cross-entropy gradient over the batch; shapes mirror params."""
    if len(cache) != len(net.layers):
        raise ValueError("cache does not match network (stale forward?)")
    probs = cache[-1]
    bsz = probs.shape[0]
    onehot = np.zeros_like(probs)
    onehot[np.arange(bsz), targets] = 1.0
    grad = (probs - onehot) / bsz  # d(mean CE)/d logits

    grads: list = [None] * len(params)
    for i in range(len(net.layers) - 2, -1, -1):
        layer = net.layers[i]
        a_in = cache[i]
        if isinstance(layer, Conv):
            grad = grad.reshape(a_in.shape[0], *_conv_out_dims(layer, a_in))
            dx, dw, db = _conv_backward(a_in, params[i][0], grad)
            grads[i] = (dw, db)
            grad = dx
        elif isinstance(layer, ReLU):
            grad = grad.reshape(a_in.shape) * (a_in > 0)
        elif isinstance(layer, (MaxPool, AvgPool)):
            kind = "max" if isinstance(layer, MaxPool) else "avg"
            oh = (a_in.shape[2] - layer.window) // layer.stride + 1
            ow = (a_in.shape[3] - layer.window) // layer.stride + 1
            grad = grad.reshape(a_in.shape[0], a_in.shape[1], oh, ow)
            grad = _pool_backward(a_in, grad, kind, layer.window, layer.stride)
        elif isinstance(layer, FullyConnected):
            grad = grad.reshape(a_in.shape[0], layer.out_dim)
            grads[i] = (grad.T @ a_in, grad.sum(axis=0))
            grad = grad @ params[i][0]
    return grads


def _conv_out_dims(layer: Conv, a_in):
    return (layer.out_maps, a_in.shape[2] - layer.kernel_h + 1, a_in.shape[3] - layer.kernel_w + 1)


def backward(net: NetworkSpec, params: list, cache: list, target: int) -> list:
    """Gradients of cross_entropy(forward(patch), target) for one sample."""
    return backward_batch(net, params, cache, np.array([target]))


def gradient_check(net: NetworkSpec, params: list, patch: Image, target: int, step: float = 1e-5) -> float:
    """Max relative error between analytic and central-finite-difference gradients."""
    x = _patch_to_input(net, patch)[None]
    _, cache = forward_batch(net, params, x)
    grads = backward_batch(net, params, cache, np.array([target]))

    def loss() -> float:
        probs, _ = forward_batch(net, params, x)
        return cross_entropy(probs[0], target)

    worst = 0.0
    for layer_params, layer_grads in zip(params, grads):
        if layer_params is None:
            continue
        for arr, grad in zip(layer_params, layer_grads):
            flat = arr.ravel()
            gflat = grad.ravel()
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + step
                lp = loss()
                flat[j] = orig - step
                lm = loss()
                flat[j] = orig
                numeric = (lp - lm) / (2 * step)
                denom = max(abs(gflat[j]), abs(numeric), 1e-8)
                worst = max(worst, abs(gflat[j] - numeric) / denom)
    return worst


# --- stock architectures ----------------------------------------------------

def default_network(preprocess: str = "none") -> NetworkSpec:
    """Desk-scale 5-conv/3-FC network on 64x64x3 input, 128-wide penultimate layer."""
    return NetworkSpec(
        input=(3, 64, 64),
        layers=(
            Conv(3, 16, 5, 5), ReLU(), MaxPool(2, 2),
            Conv(16, 32, 5, 5), ReLU(), MaxPool(2, 2),
            Conv(32, 32, 3, 3), ReLU(),
            Conv(32, 32, 3, 3), ReLU(),
            Conv(32, 64, 3, 3), ReLU(), MaxPool(2, 2),
            FullyConnected(64 * 3 * 3, 128), ReLU(),
            FullyConnected(128, 128), ReLU(),
            FullyConnected(128, 12),
            Softmax(),
        ),
        class_count=12,
        preprocess=preprocess,
    )


def tiny_network(input_side: int = 32, preprocess: str = "none") -> NetworkSpec:
    """Two-conv/two-FC network for fast end-to-end runs on small patches."""
    s1 = input_side - 4          # conv 5x5
    s2 = s1 // 2                 # pool 2
    s3 = s2 - 4                  # conv 5x5
    s4 = s3 // 2                 # pool 2
    return NetworkSpec(
        input=(3, input_side, input_side),
        layers=(
            Conv(3, 8, 5, 5), ReLU(), MaxPool(2, 2),
            Conv(8, 16, 5, 5), ReLU(), MaxPool(2, 2),
            FullyConnected(16 * s4 * s4, 64), ReLU(),
            FullyConnected(64, 12),
            Softmax(),
        ),
        class_count=12,
        preprocess=preprocess,
    )


# --- checkpoint serialization ----------------------------------------------

_LAYER_TAGS = {"Conv": Conv, "ReLU": ReLU, "MaxPool": MaxPool,
               "AvgPool": AvgPool, "FullyConnected": FullyConnected, "Softmax": Softmax}


def _spec_to_json(net: NetworkSpec) -> bytes:
    layers = []
    for layer in net.layers:
        entry = {"kind": type(layer).__name__}
        entry.update(vars(layer))
        layers.append(entry)
    doc = {"input": list(net.input), "layers": layers,
           "class_count": net.class_count, "preprocess": net.preprocess}
    return json.dumps(doc, sort_keys=True).encode("utf-8")


def _spec_from_json(blob: bytes) -> NetworkSpec:
    doc = json.loads(blob.decode("utf-8"))
    layers = []
    for entry in doc["layers"]:
        kind = _LAYER_TAGS[entry.pop("kind")]
        layers.append(kind(**entry))
    return NetworkSpec(input=tuple(doc["input"]), layers=tuple(layers),
                       class_count=doc["class_count"], preprocess=doc["preprocess"])


def parameter_checksum(params: list) -> str:
    digest = hashlib.sha256()
    for p in params:
        if p is not None:
            digest.update(np.ascontiguousarray(p[0], dtype="<f8").tobytes())
            digest.update(np.ascontiguousarray(p[1], dtype="<f8").tobytes())
    return digest.hexdigest()


def save_checkpoint(path, net: NetworkSpec, params: list) -> None:
    """Binary checkpoint plus a `<path>.manifest.txt` with shapes and checksum."""
    blob = _spec_to_json(net)
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for p in params:
            if p is not None:
                f.write(np.ascontiguousarray(p[0], dtype="<f8").tobytes())
                f.write(np.ascontiguousarray(p[1], dtype="<f8").tobytes())
    with open(str(path) + ".manifest.txt", "w", encoding="utf-8") as f:
        for i, (layer, p) in enumerate(zip(net.layers, params)):
            if p is None:
                f.write(f"layer {i} {type(layer).__name__}\n")
            else:
                f.write(f"layer {i} {type(layer).__name__} weights={p[0].shape} bias={p[1].shape}\n")
        f.write(f"checksum sha256 {parameter_checksum(params)}\n")


def load_checkpoint(path) -> tuple[NetworkSpec, list]:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic at offset 0")
    version, = struct.unpack_from("<I", data, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"{path}: unsupported version {version} at offset 4")
    blob_len, = struct.unpack_from("<I", data, 8)
    offset = 12 + blob_len
    try:
        net = _spec_from_json(data[12:offset])
    except (ValueError, KeyError) as e:
        raise CheckpointFormatError(f"{path}: bad spec block at offset 12: {e}") from e
    fresh = init_parameters(net, seed=0)
    params = []
    for p in fresh:
        if p is None:
            params.append(None)
            continue
        loaded = []
        for ref in p:
            nbytes = ref.size * 8
            if offset + nbytes > len(data):
                raise CheckpointFormatError(f"{path}: truncated parameters at offset {offset}")
            arr = np.frombuffer(data, dtype="<f8", count=ref.size, offset=offset).reshape(ref.shape)
            loaded.append(arr.copy())
            offset += nbytes
        params.append(tuple(loaded))
    if offset != len(data):
        raise CheckpointFormatError(f"{path}: {len(data) - offset} trailing bytes at offset {offset}")
    return net, params
