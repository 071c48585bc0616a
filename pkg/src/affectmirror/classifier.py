"""CNN emotion classifier: a 48x48 grayscale crop in, a 7-way distribution out.

The network is declared as data: the weight container's "arch" metadata holds
an ordered layer descriptor (conv / sepconv / bnfold / relu / pool / gap /
dense) and tensors are named by layer index. Batchnorm parameters are folded
into per-channel scale/shift at load time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (
    BoxOutOfBounds,
    MissingTensor,
    ShapeInconsistent,
    ShapeMismatch,
    UnknownArchitecture,
)
from .frames import Frame, resize_bilinear
from .mrw import WeightContainer

CATEGORIES = ("anger", "disgust", "fear", "happiness", "sadness", "surprise", "neutral")
N_CATEGORIES = 7
INPUT_SPEC = "48x48x1:[-1,1]"
INPUT_SIDE = 48


def category_index(label: str) -> int:
    try:
        return CATEGORIES.index(label)
    except ValueError:
        raise ValueError(f"unknown emotion category {label!r}") from None


@dataclass(frozen=True)
class EmotionDistribution:
    probs: tuple[float, ...]
    source_timestamp: int = 0

    def __post_init__(self):
        if len(self.probs) != N_CATEGORIES:
            raise ValueError(f"need {N_CATEGORIES} probabilities, got {len(self.probs)}")
        if any(p < 0 or p > 1 for p in self.probs):
            raise ValueError("probabilities outside [0, 1]")
        if abs(sum(self.probs) - 1.0) > 1e-6:
            raise ValueError(f"probabilities sum to {sum(self.probs)}, not 1")

    def argmax(self) -> int:
        best = 0
        for i, p in enumerate(self.probs):
            if p > self.probs[best]:
                best = i
        return best

    def top_label(self) -> str:
        return CATEGORIES[self.argmax()]


@dataclass(frozen=True)
class Layer:
    kind: str
    out_channels: int = 0
    k: int = 0
    stride: int = 1
    padding: str = "same"
    pool_mode: str = "max"


def parse_arch(text: str) -> list[Layer]:
    """Parse a descriptor like "conv:8:3:1:same;relu;gap;dense:7"."""
    layers = []
    for part in text.strip().split(";"):
        fields = part.strip().split(":")
        kind = fields[0]
        try:
            if kind in ("conv", "sepconv"):
                layers.append(
                    Layer(kind, int(fields[1]), int(fields[2]), int(fields[3]), fields[4])
                )
            elif kind == "pool":
                layers.append(Layer(kind, k=int(fields[2]), stride=int(fields[3]), pool_mode=fields[1]))
            elif kind == "dense":
                layers.append(Layer(kind, out_channels=int(fields[1])))
            elif kind in ("bnfold", "relu", "gap"):
                layers.append(Layer(kind))
            else:
                raise UnknownArchitecture(f"unknown layer kind {kind!r}")
        except (IndexError, ValueError) as e:
            raise UnknownArchitecture(f"bad layer spec {part!r}: {e}") from None
    if not layers:
        raise UnknownArchitecture("empty architecture descriptor")
    return layers


@dataclass
class ClassifierModel:
    layers: list[Layer]
    weights: list[dict[str, np.ndarray]]  # per-layer tensors (possibly empty)


def _spatial_out(size: int, k: int, stride: int, padding: str) -> int:
    if padding == "same":
        return -(-size // stride)
    return (size - k) // stride + 1


def load_classifier(container: WeightContainer) -> ClassifierModel:
    arch = container.metadata.get("arch")
    if not arch:
        raise UnknownArchitecture("container metadata lacks 'arch'")
    if container.metadata.get("input") != INPUT_SPEC:
        raise UnknownArchitecture(
            f"declared input {container.metadata.get('input')!r}, need {INPUT_SPEC!r}"
        )
    if container.metadata.get("categories") != ",".join(CATEGORIES):
        raise UnknownArchitecture("category order does not match the canonical order")
    layers = parse_arch(arch)
    bn_eps = float(container.metadata.get("bn_eps", "1e-3"))

    def need(name):
        if name not in container.entries:
            raise MissingTensor(name)
        return container.entries[name]

    weights: list[dict[str, np.ndarray]] = []
    h = w = INPUT_SIDE
    c = 1
    flat: int | None = None
    for i, layer in enumerate(layers):
        p = f"l{i}"
        lw: dict[str, np.ndarray] = {}
        if flat is not None and layer.kind not in ("dense", "relu"):
            raise ShapeInconsistent(f"{layer.kind} at layer {i} after the spatial dims collapsed")
        if layer.kind == "conv":
            kern = need(f"{p}.w")
            bias = need(f"{p}.b")
            if kern.shape != (layer.k, layer.k, c, layer.out_channels):
                raise ShapeInconsistent(
                    f"{p}.w is {kern.shape}, expected {(layer.k, layer.k, c, layer.out_channels)}"
                )
            if bias.shape != (layer.out_channels,):
                raise ShapeInconsistent(f"{p}.b is {bias.shape}")
            lw = {"w": kern, "b": bias}
            h, w = _spatial_out(h, layer.k, layer.stride, layer.padding), _spatial_out(
                w, layer.k, layer.stride, layer.padding
            )
            c = layer.out_channels
        elif layer.kind == "sepconv":
            dw = need(f"{p}.dw")
            pw = need(f"{p}.pw")
            bias = need(f"{p}.b")
            if dw.shape != (layer.k, layer.k, 1, c):
                raise ShapeInconsistent(f"{p}.dw is {dw.shape}, expected {(layer.k, layer.k, 1, c)}")
            if pw.shape != (1, 1, c, layer.out_channels):
                raise ShapeInconsistent(f"{p}.pw is {pw.shape}")
            if bias.shape != (layer.out_channels,):
                raise ShapeInconsistent(f"{p}.b is {bias.shape}")
            lw = {"dw": dw, "pw": pw, "b": bias}
            h, w = _spatial_out(h, layer.k, layer.stride, layer.padding), _spatial_out(
                w, layer.k, layer.stride, layer.padding
            )
            c = layer.out_channels
        elif layer.kind == "bnfold":
            if f"{p}.scale" in container.entries:
                scale, shift = need(f"{p}.scale"), need(f"{p}.shift")
            else:
                gamma, beta = need(f"{p}.bn.gamma"), need(f"{p}.bn.beta")
                mean, var = need(f"{p}.bn.mean"), need(f"{p}.bn.var")
                scale = gamma / np.sqrt(var + bn_eps)
                shift = beta - mean * scale
            if scale.shape != (c,) or shift.shape != (c,):
                raise ShapeInconsistent(f"{p} scale/shift must be ({c},)")
            lw = {"scale": scale.astype(np.float32), "shift": shift.astype(np.float32)}
        elif layer.kind == "pool":
            h = _spatial_out(h, layer.k, layer.stride, "valid")
            w = _spatial_out(w, layer.k, layer.stride, "valid")
            if h < 1 or w < 1:
                raise ShapeInconsistent(f"pool at layer {i} exhausts spatial dims")
        elif layer.kind == "gap":
            flat = c
        elif layer.kind == "dense":
            if flat is None:
                raise ShapeInconsistent("dense layer requires a preceding gap or dense")
            kern = need(f"{p}.w")
            bias = need(f"{p}.b")
            if kern.shape != (flat, layer.out_channels):
                raise ShapeInconsistent(
                    f"{p}.w is {kern.shape}, expected {(flat, layer.out_channels)}"
                )
            if bias.shape != (layer.out_channels,):
                raise ShapeInconsistent(f"{p}.b is {bias.shape}")
            lw = {"w": kern, "b": bias}
            flat = layer.out_channels
        weights.append(lw)
        if layer.kind != "gap" and flat is None and (h < 1 or w < 1):
            raise ShapeInconsistent(f"spatial dims collapse at layer {i}")
    if flat != N_CATEGORIES:
        raise ShapeInconsistent(f"final layer width {flat}, must be {N_CATEGORIES}")
    return ClassifierModel(layers, weights)


def preprocess_face(frame: Frame, box) -> np.ndarray:
    """Crop the detection box, resize to 48x48, and map intensity to [-1, 1]."""
    if frame.channels != 1:
        raise ValueError("preprocess_face needs a grayscale frame")
    if box.x < 0 or box.y < 0 or box.x + box.w > frame.width or box.y + box.h > frame.height:
        raise BoxOutOfBounds(f"box {box} outside {frame.width}x{frame.height} frame")
    crop = Frame(frame.pixels[box.y : box.y + box.h, box.x : box.x + box.w].copy(), frame.timestamp)
    resized = resize_bilinear(crop, INPUT_SIDE, INPUT_SIDE)
    x = resized.pixels.astype(np.float32) / np.float32(127.5) - np.float32(1.0)
    return x[:, :, None]


def classify(model: ClassifierModel, x: np.ndarray, source_timestamp: int = 0) -> EmotionDistribution:
    if x.shape != (INPUT_SIDE, INPUT_SIDE, 1):
        raise ShapeMismatch(f"classifier input must be (48, 48, 1), got {x.shape}")
    out = x.astype(np.float32)
    for layer, lw in zip(model.layers, model.weights):
        if layer.kind == "conv":
            out = kernels.conv2d(out, lw["w"], layer.stride, layer.padding) + lw["b"]
        elif layer.kind == "sepconv":
            out = kernels.conv2d(out, lw["dw"], layer.stride, layer.padding, groups=out.shape[2])
            out = kernels.conv2d(out, lw["pw"], 1, "valid") + lw["b"]
        elif layer.kind == "bnfold":
            out = out * lw["scale"] + lw["shift"]
        elif layer.kind == "relu":
            out = kernels.relu(out)
        elif layer.kind == "pool":
            out = kernels.pool2d(out, layer.k, layer.stride, layer.pool_mode)
        elif layer.kind == "gap":
            out = kernels.global_avg_pool(out)
        elif layer.kind == "dense":
            out = kernels.matmul(out[None, :], lw["w"])[0] + lw["b"]
        out = out.astype(np.float32)
    probs = kernels.softmax(out.astype(np.float32))
    p = probs.astype(np.float64)
    p = p / p.sum()  # exact simplex for downstream float checks
    return EmotionDistribution(tuple(float(v) for v in p), source_timestamp)
