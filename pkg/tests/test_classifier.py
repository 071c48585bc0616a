import numpy as np
import pytest

import oracles
from affectmirror.classifier import (
    CATEGORIES,
    EmotionDistribution,
    classify,
    load_classifier,
    parse_arch,
    preprocess_face,
)
from affectmirror.detect import FaceBox
from affectmirror.errors import (
    BoxOutOfBounds,
    MissingTensor,
    ShapeInconsistent,
    ShapeMismatch,
    UnknownArchitecture,
)
from affectmirror.fixtures import build_tiny_classifier, random_classifier
from affectmirror.frames import Frame
from affectmirror.mrw import WeightContainer


def test_category_order_is_fixed():
    assert CATEGORIES == (
        "anger", "disgust", "fear", "happiness", "sadness", "surprise", "neutral"
    )


class TestDistribution:
    def test_valid(self):
        d = EmotionDistribution((0.1, 0.1, 0.1, 0.4, 0.1, 0.1, 0.1), 5)
        assert d.top_label() == "happiness"

    def test_bad_sum(self):
        with pytest.raises(ValueError):
            EmotionDistribution((0.5, 0.5, 0.5, 0, 0, 0, 0))

    def test_wrong_arity(self):
        with pytest.raises(ValueError):
            EmotionDistribution((1.0,))


class TestLoadClassifier:
    def test_tiny_fixture_loads(self):
        model = load_classifier(build_tiny_classifier())
        assert [l.kind for l in model.layers] == [
            "conv", "bnfold", "relu", "sepconv", "relu", "gap", "dense",
        ]

    def test_missing_tensor(self):
        c = build_tiny_classifier()
        del c.entries["l6.w"]
        with pytest.raises(MissingTensor):
            load_classifier(c)

    def test_wrong_head_width(self):
        c = build_tiny_classifier()
        c.metadata["arch"] = c.metadata["arch"].replace("dense:7", "dense:5")
        c.entries["l6.w"] = c.entries["l6.w"][:, :5].copy()
        c.entries["l6.b"] = c.entries["l6.b"][:5].copy()
        with pytest.raises(ShapeInconsistent):
            load_classifier(c)

    def test_unknown_arch(self):
        c = build_tiny_classifier()
        c.metadata["arch"] = "alchemy:3"
        with pytest.raises(UnknownArchitecture):
            load_classifier(c)

    def test_wrong_category_order(self):
        c = build_tiny_classifier()
        c.metadata["categories"] = "neutral,anger,disgust,fear,happiness,sadness,surprise"
        with pytest.raises(UnknownArchitecture):
            load_classifier(c)

    def test_bn_folding_matches_prefolded(self):
        raw = build_tiny_classifier()
        folded = build_tiny_classifier()
        eps = 1e-3
        gamma = folded.entries.pop("l1.bn.gamma")
        beta = folded.entries.pop("l1.bn.beta")
        mean = folded.entries.pop("l1.bn.mean")
        var = folded.entries.pop("l1.bn.var")
        scale = gamma / np.sqrt(var + eps)
        folded.entries["l1.scale"] = scale.astype(np.float32)
        folded.entries["l1.shift"] = (beta - mean * scale).astype(np.float32)
        x = np.random.default_rng(3).uniform(-1, 1, (48, 48, 1)).astype(np.float32)
        a = classify(load_classifier(raw), x)
        b = classify(load_classifier(folded), x)
        assert np.max(np.abs(np.array(a.probs) - np.array(b.probs))) < 1e-6

    def test_parse_arch_errors(self):
        with pytest.raises(UnknownArchitecture):
            parse_arch("conv:banana")
        with pytest.raises(UnknownArchitecture):
            parse_arch("")


class TestPreprocess:
    def frame(self, value):
        px = np.full((64, 64), value, dtype=np.uint8)
        return Frame(px, 0)

    def test_black_maps_to_minus_one(self):
        x = preprocess_face(self.frame(0), FaceBox(0, 0, 64, 64))
        assert np.allclose(x, -1.0)

    def test_white_maps_to_plus_one(self):
        x = preprocess_face(self.frame(255), FaceBox(0, 0, 64, 64))
        assert np.allclose(x, 1.0)

    def test_mid_gray(self):
        x = preprocess_face(self.frame(128), FaceBox(8, 8, 48, 48))
        assert np.allclose(x, 128 / 127.5 - 1.0, atol=1e-6)
        assert x.shape == (48, 48, 1)

    def test_box_out_of_bounds(self):
        with pytest.raises(BoxOutOfBounds):
            preprocess_face(self.frame(0), FaceBox(40, 40, 48, 48))


def classify_oracle(container: WeightContainer, x: np.ndarray) -> np.ndarray:
    """Layer-by-layer forward built from the brute-force kernels."""
    from affectmirror.classifier import parse_arch

    layers = parse_arch(container.metadata["arch"])
    out = x.astype(np.float64)
    eps = float(container.metadata.get("bn_eps", "1e-3"))
    for i, layer in enumerate(layers):
        p = f"l{i}"
        if layer.kind == "conv":
            out = oracles.conv2d(out, container.entries[f"{p}.w"], layer.stride, layer.padding)
            out = out + container.entries[f"{p}.b"]
        elif layer.kind == "sepconv":
            out = oracles.conv2d(
                out, container.entries[f"{p}.dw"], layer.stride, layer.padding,
                groups=out.shape[2],
            )
            out = oracles.conv2d(out, container.entries[f"{p}.pw"], 1, "valid")
            out = out + container.entries[f"{p}.b"]
        elif layer.kind == "bnfold":
            if f"{p}.scale" in container.entries:
                scale, shift = container.entries[f"{p}.scale"], container.entries[f"{p}.shift"]
            else:
                g, b = container.entries[f"{p}.bn.gamma"], container.entries[f"{p}.bn.beta"]
                m, v = container.entries[f"{p}.bn.mean"], container.entries[f"{p}.bn.var"]
                scale = g / np.sqrt(v + eps)
                shift = b - m * scale
            out = out * scale + shift
        elif layer.kind == "relu":
            out = np.maximum(out, 0.0)
        elif layer.kind == "gap":
            out = out.mean(axis=(0, 1))
        elif layer.kind == "dense":
            out = oracles.matmul(out[None, :], container.entries[f"{p}.w"])[0]
            out = out + container.entries[f"{p}.b"]
    return np.array(oracles.softmax_row(out))


class TestClassify:
    def test_zero_weights_give_uniform(self):
        c = build_tiny_classifier()
        for name in c.entries:
            c.entries[name] = np.zeros_like(c.entries[name])
        # zero bn variance is degenerate; make it a clean identity scale
        c.entries["l1.bn.var"] = np.ones_like(c.entries["l1.bn.var"])
        dist = classify(load_classifier(c), np.zeros((48, 48, 1), dtype=np.float32))
        assert np.max(np.abs(np.array(dist.probs) - 1 / 7)) < 1e-6

    def test_wrong_input_shape(self, tiny_classifier):
        with pytest.raises(ShapeMismatch):
            classify(tiny_classifier, np.zeros((32, 32, 1), dtype=np.float32))

    def test_fixture_matches_oracle(self):
        container = build_tiny_classifier()
        model = load_classifier(container)
        rng = np.random.default_rng(17)
        x = rng.uniform(-1, 1, (48, 48, 1)).astype(np.float32)
        got = np.array(classify(model, x).probs)
        want = classify_oracle(container, x)
        assert np.max(np.abs(got - want)) < 1e-5

    def test_random_models_match_oracle_and_simplex(self):
        rng = np.random.default_rng(31)
        for _ in range(10):
            container = random_classifier(rng)
            model = load_classifier(container)
            x = rng.uniform(-1, 1, (48, 48, 1)).astype(np.float32)
            dist = classify(model, x)
            probs = np.array(dist.probs)
            assert abs(probs.sum() - 1.0) < 1e-6
            assert (probs >= 0).all() and (probs <= 1).all()
            assert np.max(np.abs(probs - classify_oracle(container, x))) < 1e-4

    def test_deterministic(self, tiny_classifier):
        x = np.random.default_rng(5).uniform(-1, 1, (48, 48, 1)).astype(np.float32)
        a = classify(tiny_classifier, x)
        b = classify(tiny_classifier, x)
        assert a.probs == b.probs
