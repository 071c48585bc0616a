from pathlib import Path

import numpy as np
import pytest

import oracles
from affectmirror.affect import SeedSelection
from affectmirror.bpe import tiny_tokenizer
from affectmirror.poems import (
    SamplingParams,
    SplitMix64,
    generate_poem,
    make_session_nonce,
    make_template_poem,
    mix_seed,
    normalize_poem_text,
    poem_from_dict,
    poem_to_dict,
    sample_next,
)

GOLDEN = Path(__file__).parent / "golden"


class ScriptedRng:
    def __init__(self, values):
        self.values = list(values)

    def random(self):
        return self.values.pop(0)


def logits_for(probs):
    return np.log(np.array(probs, dtype=np.float64))


class TestSampleNext:
    def test_temperature_zero_argmax(self):
        row = np.array([0.1, 2.0, 0.3], dtype=np.float32)
        params = SamplingParams(temperature=0.0)
        assert sample_next(row, params, ScriptedRng([0.99])) == 1

    def test_temperature_zero_tie_breaks_low(self):
        row = np.array([2.0, 2.0, 0.1], dtype=np.float32)
        assert sample_next(row, SamplingParams(temperature=0.0), ScriptedRng([0.5])) == 0

    def test_top_k_one_is_argmax(self):
        row = logits_for([0.2, 0.5, 0.3])
        params = SamplingParams(temperature=1.0, top_k=1, top_p=1.0)
        for u in (0.01, 0.5, 0.99):
            assert sample_next(row, params, ScriptedRng([u])) == 1

    def test_inverse_cdf_matches_oracle(self):
        probs = [0.5, 0.3, 0.2]
        row = logits_for(probs)
        params = SamplingParams(temperature=1.0, top_k=0, top_p=1.0)
        kept = [(0, 0.5), (1, 0.3), (2, 0.2)]  # descending, ties low-id first
        for u in (0.0, 0.1, 0.49999, 0.5, 0.7, 0.79999, 0.8, 0.95, 0.999999):
            got = sample_next(row, params, ScriptedRng([u]))
            want = oracles.inverse_cdf_draw(kept, u)
            assert got == want

    def test_nucleus_restricts_support(self):
        probs = [0.4, 0.3, 0.2, 0.1]
        row = logits_for(probs)
        params = SamplingParams(temperature=1.0, top_p=0.5)
        rng = SplitMix64(123)
        seen = {sample_next(row, params, rng) for _ in range(10_000)}
        assert seen == {0, 1}  # smallest prefix reaching 0.5 is {0.4, 0.3}

    def test_nucleus_renormalizes(self):
        probs = [0.5, 0.3, 0.2]
        row = logits_for(probs)
        params = SamplingParams(temperature=1.0, top_p=0.5)
        # single token 0 reaches the mass bound; always chosen
        for u in (0.0, 0.5, 0.999):
            assert sample_next(row, params, ScriptedRng([u])) == 0

    def test_temperature_sharpens(self):
        row = logits_for([0.4, 0.6])
        cold = SamplingParams(temperature=0.25, top_p=1.0)
        draws = [sample_next(row, cold, SplitMix64(s)) for s in range(400)]
        assert draws.count(1) > 300


class TestSeeds:
    def test_splitmix_deterministic(self):
        a = [SplitMix64(42).next_u64() for _ in range(3)]
        b = [SplitMix64(42).next_u64() for _ in range(3)]
        assert a == b

    def test_mix_seed_spreads(self):
        seeds = {mix_seed(7, n, 1000) for n in range(100)}
        assert len(seeds) == 100

    def test_session_nonces_differ(self):
        assert len({make_session_nonce() for _ in range(20)}) == 20

    def test_random_in_unit_interval(self):
        g = SplitMix64(9)
        for _ in range(100):
            assert 0.0 <= g.random() < 1.0


class TestNormalize:
    def test_collapses_blank_runs(self):
        text = "one\n\n\n\ntwo\n\n"
        assert normalize_poem_text(text) == "one\n\ntwo"

    def test_strips_control_chars(self):
        assert normalize_poem_text("a\x07b\ncd\x00e") == "ab\ncde"

    def test_wraps_prose(self):
        out = normalize_poem_text("word " * 30)
        lines = out.split("\n")
        assert 2 <= len(lines) <= 6

    def test_truncates_to_max(self):
        out = normalize_poem_text("\n".join(str(i) for i in range(12)))
        assert len(out.split("\n")) == 6

    def test_empty_returns_empty(self):
        assert normalize_poem_text("  \n\x01 \n") == ""


class TestTemplateBackend:
    def sel(self, word="joy"):
        return SeedSelection("happiness", "high", word, 7)

    def test_contains_word_and_line_bounds(self):
        poem = make_template_poem(self.sel(), SamplingParams(rng_seed=7))
        assert "joy" in poem.text
        assert 2 <= len(poem.text.split("\n")) <= 6
        assert poem.backend == "template"

    def test_deterministic(self):
        a = make_template_poem(self.sel(), SamplingParams(rng_seed=7), created_at=10)
        b = make_template_poem(self.sel(), SamplingParams(rng_seed=7), created_at=10)
        assert a == b

    def test_seeds_differ(self):
        a = make_template_poem(self.sel(), SamplingParams(rng_seed=1))
        b = make_template_poem(self.sel(), SamplingParams(rng_seed=2))
        assert a.text != b.text

    def test_roundtrip_dict(self):
        poem = make_template_poem(self.sel(), SamplingParams(rng_seed=3), created_at=55)
        assert poem_from_dict(poem_to_dict(poem)) == poem


class TestGeneratePoem:
    def sel(self):
        return SeedSelection("happiness", "high", "joy", 0)

    def test_template_backend_direct(self):
        poem = generate_poem("template", None, self.sel(), SamplingParams(rng_seed=7))
        assert "joy" in poem.text and poem.backend == "template"

    def test_requires_placeholder(self, tiny_lm):
        with pytest.raises(ValueError):
            generate_poem(tiny_lm, tiny_tokenizer(), self.sel(), SamplingParams(),
                          prompt_template="no slot here")

    def test_fixed_seed_is_byte_identical(self, tiny_lm):
        tok = tiny_tokenizer()
        params = SamplingParams(rng_seed=5, max_tokens=40)
        texts = {generate_poem(tiny_lm, tok, self.sel(), params).text for _ in range(10)}
        assert len(texts) == 1

    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_matches_golden(self, tiny_lm, seed):
        tok = tiny_tokenizer()
        poem = generate_poem(
            tiny_lm, tok, self.sel(), SamplingParams(rng_seed=seed, max_tokens=60),
            created_at=1000,
        )
        want = (GOLDEN / f"tiny_lm_seed{seed}.txt").read_text(encoding="utf-8")
        assert poem.text == want

    def test_goldens_differ_across_seeds(self):
        texts = {(GOLDEN / f"tiny_lm_seed{s}.txt").read_text(encoding="utf-8") for s in (1, 2, 3)}
        assert len(texts) == 3

    def test_line_bounds_hold(self, tiny_lm):
        tok = tiny_tokenizer()
        for seed in range(8):
            poem = generate_poem(
                tiny_lm, tok, self.sel(), SamplingParams(rng_seed=seed, max_tokens=50)
            )
            assert 1 <= len(poem.text.split("\n")) <= 6
            assert poem.text.strip()

    def test_empty_generation_falls_back(self, tiny_lm):
        # max_tokens=1 with an immediate line break yields no usable text for
        # some seeds; whatever happens the caller must still get a poem
        tok = tiny_tokenizer()
        poem = generate_poem(
            tiny_lm, tok, self.sel(), SamplingParams(rng_seed=0, max_tokens=1)
        )
        assert poem.text.strip()
        assert poem.backend in ("transformer", "template")
