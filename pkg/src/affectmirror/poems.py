"""Poem generation: nucleus/top-k sampling over the transformer, a
deterministic template backend, text normalization, and seed mixing.

The template backend doubles as the fallback when the transformer produces
nothing usable; an engagement must never end without a poem.
"""

from __future__ import annotations

import hashlib
import os
import time
from dataclasses import dataclass

import numpy as np

from .affect import SeedSelection
from .errors import ContextOverflow, EmptyGeneration
from .bpe import Tokenizer
from .lm import LmModel, lm_forward

_M64 = (1 << 64) - 1


class SplitMix64:
    """Tiny deterministic generator; stable across platforms and library
    versions, which keeps golden outputs reproducible forever."""

    def __init__(self, seed: int):
        self._state = seed & _M64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _M64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
        return z ^ (z >> 31)

    def random(self) -> float:
        return self.next_u64() / 2.0**64

    def randrange(self, n: int) -> int:
        return self.next_u64() % n


def mix_seed(*parts: int) -> int:
    """Fold integers into one 64-bit seed."""
    acc = 0x6C62272E07BB0142
    for p in parts:
        g = SplitMix64(acc ^ (p & _M64))
        acc = g.next_u64()
    return acc


def make_session_nonce() -> int:
    """Live-mode nonce: wall-clock nanoseconds mixed with the process id, so
    separate runs and repeated engagements never share seeds."""
    return mix_seed(time.time_ns(), os.getpid())


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 0.9
    top_k: int = 0  # 0 = off
    top_p: float = 0.95
    max_tokens: int = 80
    rng_seed: int = 0

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError("top_p must be in (0, 1]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.top_k < 0:
            raise ValueError("top_k must be >= 0")


@dataclass(frozen=True)
class Poem:
    id: str
    text: str
    emotion: str
    seed_word: str
    params: SamplingParams
    created_at: int
    backend: str  # "transformer" | "template"

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("poem text must be nonempty")
        if self.backend not in ("transformer", "template"):
            raise ValueError(f"unknown backend {self.backend!r}")


def poem_to_dict(poem: Poem) -> dict:
    return {
        "id": poem.id,
        "text": poem.text,
        "emotion": poem.emotion,
        "seed_word": poem.seed_word,
        "params": {
            "temperature": poem.params.temperature,
            "top_k": poem.params.top_k,
            "top_p": poem.params.top_p,
            "max_tokens": poem.params.max_tokens,
            "rng_seed": poem.params.rng_seed,
        },
        "created_at": poem.created_at,
        "backend": poem.backend,
    }


def poem_from_dict(d: dict) -> Poem:
    p = d["params"]
    return Poem(
        id=d["id"],
        text=d["text"],
        emotion=d["emotion"],
        seed_word=d["seed_word"],
        params=SamplingParams(
            temperature=p["temperature"],
            top_k=p["top_k"],
            top_p=p["top_p"],
            max_tokens=p["max_tokens"],
            rng_seed=p["rng_seed"],
        ),
        created_at=d["created_at"],
        backend=d["backend"],
    )


def _poem_id(seed_word: str, rng_seed: int, created_at: int, backend: str) -> str:
    digest = hashlib.sha1(
        f"{seed_word}|{rng_seed}|{created_at}|{backend}".encode()
    ).hexdigest()
    return f"p{digest[:12]}"


# --- sampling ----------------------------------------------------------------


def sample_next(logits_row: np.ndarray, params: SamplingParams, rng) -> int:
    """Draw one token id: temperature -> softmax -> top-k -> nucleus ->
    inverse-CDF over the kept tokens, ordered by descending probability with
    ties broken toward lower ids. temperature 0 short-circuits to argmax."""
    logits = np.asarray(logits_row, dtype=np.float64).reshape(-1)
    if logits.size < 1:
        raise ValueError("empty logits row")
    if params.temperature == 0.0:
        return int(np.argmax(logits))
    scaled = logits / params.temperature
    scaled -= scaled.max()
    probs = np.exp(scaled)
    probs /= probs.sum()
    order = np.argsort(-probs, kind="stable")
    if params.top_k > 0:
        order = order[: params.top_k]
    kept_probs = probs[order]
    if params.top_p < 1.0:
        cum = np.cumsum(kept_probs)
        cut = int(np.searchsorted(cum, params.top_p, side="left"))
        order = order[: cut + 1]
        kept_probs = probs[order]
    kept_probs = kept_probs / kept_probs.sum()
    u = rng.random()
    acc = 0.0
    for idx, p in zip(order, kept_probs):
        acc += p
        if u < acc:
            return int(idx)
    return int(order[-1])


# --- text shaping ------------------------------------------------------------


def normalize_poem_text(
    text: str, min_lines: int = 2, max_lines: int = 6, wrap_width: int = 48
) -> str:
    """Normalize whitespace and shape the text into min_lines..max_lines lines.

    Control characters (except newlines) are dropped, blank-line runs
    collapse, and prose with too few line breaks is wrapped at word
    boundaries. Returns "" when nothing printable remains.
    """
    cleaned = "".join(c for c in text.replace("\r", "\n") if c == "\n" or ord(c) >= 32)
    lines = [" ".join(l.split()) for l in cleaned.split("\n")]
    out: list[str] = []
    for line in lines:
        if line:
            out.append(line)
        elif out and out[-1]:
            out.append("")
    while out and not out[-1]:
        out.pop()
    nonempty = [l for l in out if l]
    if not nonempty:
        return ""
    if len(nonempty) < min_lines:
        blob = " ".join(nonempty)
        if len(blob) < 2 * min_lines:
            return ""  # too little material to shape; caller falls back
        width = min(wrap_width, max(4, -(-len(blob) // min_lines)))
        out = []
        cur = ""
        for w in blob.split(" "):
            while len(w) > width:  # unbroken runs split at character level
                if cur:
                    out.append(cur)
                    cur = ""
                out.append(w[:width])
                w = w[width:]
            cand = f"{cur} {w}".strip()
            if len(cand) >= width:
                out.append(cand)
                cur = ""
            else:
                cur = cand
        if cur:
            out.append(cur)
    if len(out) > max_lines:
        out = out[:max_lines]
        while out and not out[-1]:
            out.pop()
    if not any(out):
        return ""
    return "\n".join(out)


# --- template backend --------------------------------------------------------

_OPENERS = (
    "the mirror holds its breath and finds {word}",
    "somewhere behind the glass, {word} is waiting",
    "you arrive carrying {word} like a small lantern",
    "this hour tastes of {word}",
    "look closer: the day has folded itself into {word}",
)

_MIDDLES = (
    "it moves the way light moves over water,",
    "quiet as a room after the music ends,",
    "familiar as a coat left on a chair,",
    "it asks nothing, and still you answer,",
    "the window darkens, the street goes on,",
    "old letters know this weather by heart,",
    "even the dust seems to lean toward it,",
)

_CLOSERS = (
    "and what you name, you can carry.",
    "let it sit beside you a while.",
    "tomorrow will ask what you called it.",
    "say it once, and the room is yours.",
    "it was yours before you looked.",
)


def make_template_poem(
    sel: SeedSelection,
    params: SamplingParams,
    created_at: int = 0,
    min_lines: int = 2,
    max_lines: int = 6,
) -> Poem:
    rng = SplitMix64(mix_seed(params.rng_seed, len(sel.word)))
    lines = [_OPENERS[rng.randrange(len(_OPENERS))].format(word=sel.word)]
    for _ in range(1 + rng.randrange(min(3, max_lines - 2))):
        lines.append(_MIDDLES[rng.randrange(len(_MIDDLES))])
    lines.append(_CLOSERS[rng.randrange(len(_CLOSERS))])
    text = normalize_poem_text("\n".join(lines), min_lines, max_lines)
    return Poem(
        id=_poem_id(sel.word, params.rng_seed, created_at, "template"),
        text=text,
        emotion=sel.label,
        seed_word=sel.word,
        params=params,
        created_at=created_at,
        backend="template",
    )


# --- generation --------------------------------------------------------------

DEFAULT_PROMPT_TEMPLATE = "A poem about {word}:\n"


def _transformer_text(
    model: LmModel,
    tok: Tokenizer,
    prompt: str,
    params: SamplingParams,
    max_lines: int,
) -> str:
    prompt_ids = tok.encode(prompt)
    if not prompt_ids:
        raise EmptyGeneration("prompt encodes to no tokens")
    if len(prompt_ids) >= model.config.n_ctx:
        raise ContextOverflow(
            f"prompt of {len(prompt_ids)} tokens fills the {model.config.n_ctx} context"
        )
    rng = SplitMix64(params.rng_seed)
    logits, cache = lm_forward(model, prompt_ids, None)
    generated: list[int] = []
    eot = model.config.eot_id
    for _ in range(params.max_tokens):
        if cache.length >= model.config.n_ctx:
            break
        next_id = sample_next(logits[-1], params, rng)
        if eot is not None and next_id == eot:
            break
        generated.append(next_id)
        if tok.decode(generated).count("\n") > max_lines:
            break
        logits, cache = lm_forward(model, [next_id], cache)
    if not generated:
        raise EmptyGeneration("model stopped before emitting any token")
    return tok.decode(generated)


def generate_poem(
    backend: LmModel | str,
    tok: Tokenizer | None,
    sel: SeedSelection,
    params: SamplingParams,
    prompt_template: str = DEFAULT_PROMPT_TEMPLATE,
    created_at: int = 0,
    min_lines: int = 2,
    max_lines: int = 6,
) -> Poem:
    """Produce a poem for the selection. The transformer backend samples a
    continuation of the slot-filled prompt; an empty or unusable generation
    falls back to the template backend so the caller always gets a poem."""
    if "{word}" not in prompt_template:
        raise ValueError("prompt template must contain the {word} placeholder")
    if isinstance(backend, str):
        if backend != "template":
            raise ValueError(f"unknown backend {backend!r}")
        return make_template_poem(sel, params, created_at, min_lines, max_lines)
    if tok is None:
        raise ValueError("transformer backend requires a tokenizer")
    prompt = prompt_template.replace("{word}", sel.word)
    try:
        raw = _transformer_text(backend, tok, prompt, params, max_lines)
        text = normalize_poem_text(raw, min_lines, max_lines)
        if not text:
            raise EmptyGeneration("generation normalized to nothing")
    except EmptyGeneration:
        return make_template_poem(sel, params, created_at, min_lines, max_lines)
    return Poem(
        id=_poem_id(sel.word, params.rng_seed, created_at, "transformer"),
        text=text,
        emotion=sel.label,
        seed_word=sel.word,
        params=params,
        created_at=created_at,
        backend="transformer",
    )
