"""Decoder-only transformer forward pass (pre-layernorm, tied output head)
with an incremental key/value cache.

Weights come from an MRW1 container with metadata arch=gpt2 and the layer
tensors named h{i}.attn.w, h{i}.mlp.fc.w, ... as documented in
docs/gpt2_conversion.md.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContextOverflow, MissingTensor, ShapeInconsistent, UnknownArchitecture
from .kernels import gelu, layernorm, softmax
from .mrw import WeightContainer

F32 = np.float32


@dataclass(frozen=True)
class LmConfig:
    n_layer: int
    n_head: int
    d_model: int
    n_ctx: int
    vocab_size: int
    eot_id: int | None = None

    def __post_init__(self):
        if self.d_model % self.n_head:
            raise ShapeInconsistent(
                f"d_model {self.d_model} not divisible by n_head {self.n_head}"
            )


@dataclass
class LmLayer:
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    attn_w: np.ndarray  # (d, 3d)
    attn_b: np.ndarray
    proj_w: np.ndarray  # (d, d)
    proj_b: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray
    fc_w: np.ndarray  # (d, 4d)
    fc_b: np.ndarray
    out_w: np.ndarray  # (4d, d)
    out_b: np.ndarray


@dataclass
class LmModel:
    config: LmConfig
    wte: np.ndarray  # (V, d)
    wpe: np.ndarray  # (n_ctx, d)
    layers: list[LmLayer]
    lnf_g: np.ndarray
    lnf_b: np.ndarray


@dataclass
class KvCache:
    """Per-layer attention keys/values, each (n_head, seq, head_dim)."""

    layers: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    @property
    def length(self) -> int:
        return self.layers[0][0].shape[1] if self.layers else 0


def load_lm(container: WeightContainer) -> LmModel:
    if container.metadata.get("arch") != "gpt2":
        raise UnknownArchitecture(f"arch {container.metadata.get('arch')!r}, expected 'gpt2'")
    try:
        cfg = LmConfig(
            n_layer=int(container.metadata["n_layer"]),
            n_head=int(container.metadata["n_head"]),
            d_model=int(container.metadata["d_model"]),
            n_ctx=int(container.metadata["n_ctx"]),
            vocab_size=int(container.metadata["vocab_size"]),
            eot_id=int(container.metadata["eot_id"]) if "eot_id" in container.metadata else None,
        )
    except KeyError as e:
        raise UnknownArchitecture(f"missing metadata key {e}") from None

    def need(name, shape):
        if name not in container.entries:
            raise MissingTensor(name)
        t = container.entries[name].astype(F32)
        if t.shape != shape:
            raise ShapeInconsistent(f"{name} is {t.shape}, expected {shape}")
        return t

    d = cfg.d_model
    layers = []
    for i in range(cfg.n_layer):
        p = f"h{i}"
        layers.append(
            LmLayer(
                ln1_g=need(f"{p}.ln1.g", (d,)),
                ln1_b=need(f"{p}.ln1.b", (d,)),
                attn_w=need(f"{p}.attn.w", (d, 3 * d)),
                attn_b=need(f"{p}.attn.b", (3 * d,)),
                proj_w=need(f"{p}.attn.proj.w", (d, d)),
                proj_b=need(f"{p}.attn.proj.b", (d,)),
                ln2_g=need(f"{p}.ln2.g", (d,)),
                ln2_b=need(f"{p}.ln2.b", (d,)),
                fc_w=need(f"{p}.mlp.fc.w", (d, 4 * d)),
                fc_b=need(f"{p}.mlp.fc.b", (4 * d,)),
                out_w=need(f"{p}.mlp.proj.w", (4 * d, d)),
                out_b=need(f"{p}.mlp.proj.b", (d,)),
            )
        )
    return LmModel(
        config=cfg,
        wte=need("wte", (cfg.vocab_size, d)),
        wpe=need("wpe", (cfg.n_ctx, d)),
        layers=layers,
        lnf_g=need("lnf.g", (d,)),
        lnf_b=need("lnf.b", (d,)),
    )


def lm_forward(
    model: LmModel, ids: list[int], cache: KvCache | None = None
) -> tuple[np.ndarray, KvCache]:
    """Forward `ids` given an optional cache of already-processed tokens.

    Returns logits of shape (len(ids), V) and the extended cache. Position i
    only attends to cached positions and to positions <= i of the new chunk.
    """
    cfg = model.config
    pos0 = cache.length if cache else 0
    T = len(ids)
    if T < 1:
        raise ValueError("need at least one token")
    if pos0 + T > cfg.n_ctx:
        raise ContextOverflow(f"{pos0} cached + {T} new tokens exceed n_ctx {cfg.n_ctx}")
    if any(i < 0 or i >= cfg.vocab_size for i in ids):
        raise ValueError("token id outside vocabulary")

    nh = cfg.n_head
    hd = cfg.d_model // nh
    x = model.wte[np.asarray(ids)] + model.wpe[pos0 : pos0 + T]
    x = x.astype(F32)
    new_layers: list[tuple[np.ndarray, np.ndarray]] = []
    rows = np.arange(T)[:, None]
    for li, layer in enumerate(model.layers):
        h = layernorm(x, layer.ln1_g, layer.ln1_b)
        qkv = h @ layer.attn_w + layer.attn_b
        q, k, v = np.split(qkv, 3, axis=-1)
        q = q.reshape(T, nh, hd).transpose(1, 0, 2)
        k = k.reshape(T, nh, hd).transpose(1, 0, 2)
        v = v.reshape(T, nh, hd).transpose(1, 0, 2)
        if cache and cache.layers:
            pk, pv = cache.layers[li]
            k = np.concatenate([pk, k], axis=1)
            v = np.concatenate([pv, v], axis=1)
        new_layers.append((k, v))
        S = k.shape[1]
        att = (q @ k.transpose(0, 2, 1)) / F32(np.sqrt(hd))
        allowed = np.arange(S)[None, :] <= (pos0 + rows)
        att = np.where(allowed[None, :, :], att, F32(-np.inf))
        att = softmax(att, axis=-1)
        o = (att @ v).transpose(1, 0, 2).reshape(T, cfg.d_model)
        x = x + (o @ layer.proj_w + layer.proj_b)
        h2 = layernorm(x, layer.ln2_g, layer.ln2_b)
        m = gelu(h2 @ layer.fc_w + layer.fc_b) @ layer.out_w + layer.out_b
        x = (x + m).astype(F32)
    x = layernorm(x, model.lnf_g, model.lnf_b)
    logits = (x @ model.wte.T).astype(F32)
    return logits, KvCache(new_layers)
