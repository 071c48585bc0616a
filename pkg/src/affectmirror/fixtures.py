"""Deterministic fixture builders: the tiny classifier and language model used
by tests, demos, and `bench`. Run as a module to regenerate the binary assets:

    python -m affectmirror.fixtures src/affectmirror/assets
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

from .classifier import CATEGORIES, INPUT_SPEC
from .mrw import WeightContainer, write_container

TINY_CLASSIFIER_ARCH = "conv:4:3:2:same;bnfold;relu;sepconv:8:3:2:same;relu;gap;dense:7"


def build_tiny_classifier(seed: int = 11) -> WeightContainer:
    rng = np.random.default_rng(seed)

    def t(*shape, scale=0.4):
        return (rng.standard_normal(shape) * scale).astype(np.float32)

    c = WeightContainer()
    c.metadata = {
        "arch": TINY_CLASSIFIER_ARCH,
        "input": INPUT_SPEC,
        "categories": ",".join(CATEGORIES),
        "bn_eps": "1e-3",
    }
    c.entries = {
        "l0.w": t(3, 3, 1, 4),
        "l0.b": t(4, scale=0.1),
        "l1.bn.gamma": 1.0 + t(4, scale=0.1),
        "l1.bn.beta": t(4, scale=0.1),
        "l1.bn.mean": t(4, scale=0.1),
        "l1.bn.var": np.abs(1.0 + t(4, scale=0.1)).astype(np.float32),
        "l3.dw": t(3, 3, 1, 4),
        "l3.pw": t(1, 1, 4, 8),
        "l3.b": t(8, scale=0.1),
        "l6.w": t(8, 7),
        "l6.b": t(7, scale=0.1),
    }
    return c


def random_classifier(rng: np.random.Generator, scale: float = 0.5) -> WeightContainer:
    """A small random conv/gap/dense model for property tests."""
    cout = int(rng.integers(2, 6))
    k = int(rng.choice([1, 3]))
    stride = int(rng.choice([1, 2]))
    padding = str(rng.choice(["same", "valid"]))
    c = WeightContainer()
    c.metadata = {
        "arch": f"conv:{cout}:{k}:{stride}:{padding};relu;gap;dense:7",
        "input": INPUT_SPEC,
        "categories": ",".join(CATEGORIES),
    }
    c.entries = {
        "l0.w": (rng.standard_normal((k, k, 1, cout)) * scale).astype(np.float32),
        "l0.b": (rng.standard_normal(cout) * 0.1).astype(np.float32),
        "l3.w": (rng.standard_normal((cout, 7)) * scale).astype(np.float32),
        "l3.b": (rng.standard_normal(7) * 0.1).astype(np.float32),
    }
    return c


TINY_LM = {"n_layer": 2, "n_head": 2, "d_model": 32, "n_ctx": 64, "vocab_size": 256}


def build_tiny_lm(seed: int = 5, **overrides) -> WeightContainer:
    cfg = dict(TINY_LM, **overrides)
    rng = np.random.default_rng(seed)
    d, four_d = cfg["d_model"], 4 * cfg["d_model"]

    def t(*shape, scale):
        return (rng.standard_normal(shape) * scale).astype(np.float32)

    c = WeightContainer()
    c.metadata = {"arch": "gpt2", **{k: str(v) for k, v in cfg.items()}}
    c.entries = {
        "wte": t(cfg["vocab_size"], d, scale=0.5),
        "wpe": t(cfg["n_ctx"], d, scale=0.1),
        "lnf.g": 1.0 + t(d, scale=0.05),
        "lnf.b": t(d, scale=0.05),
    }
    for i in range(cfg["n_layer"]):
        p = f"h{i}"
        c.entries.update(
            {
                f"{p}.ln1.g": 1.0 + t(d, scale=0.05),
                f"{p}.ln1.b": t(d, scale=0.05),
                f"{p}.attn.w": t(d, 3 * d, scale=0.25),
                f"{p}.attn.b": t(3 * d, scale=0.02),
                f"{p}.attn.proj.w": t(d, d, scale=0.25),
                f"{p}.attn.proj.b": t(d, scale=0.02),
                f"{p}.ln2.g": 1.0 + t(d, scale=0.05),
                f"{p}.ln2.b": t(d, scale=0.05),
                f"{p}.mlp.fc.w": t(d, four_d, scale=0.25),
                f"{p}.mlp.fc.b": t(four_d, scale=0.02),
                f"{p}.mlp.proj.w": t(four_d, d, scale=0.25),
                f"{p}.mlp.proj.b": t(d, scale=0.02),
            }
        )
    return c


def zero_lm(**overrides) -> WeightContainer:
    c = build_tiny_lm(**overrides)
    for name, arr in c.entries.items():
        c.entries[name] = np.zeros_like(arr)
    return c


def write_assets(out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "tiny_classifier.mrw").write_bytes(write_container(build_tiny_classifier()))
    (out / "tiny_lm.mrw").write_bytes(write_container(build_tiny_lm()))
    from .frames import face_pattern, write_pnm

    px, _ = face_pattern(128, 128, size=48)
    (out / "sample_face.pgm").write_bytes(write_pnm(px))


if __name__ == "__main__":
    write_assets(sys.argv[1] if len(sys.argv) > 1 else "src/affectmirror/assets")
