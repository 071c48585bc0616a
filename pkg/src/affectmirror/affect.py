"""Temporal stabilization of the per-frame emotion stream and the mapping from
a stabilized distribution to a seed word.

The raw classifier output jitters frame to frame; an exponential moving
average plus margin-and-dwell hysteresis keeps the displayed emotion from
flickering. The stabilized label and its smoothed probability select a word
from a lexicon of (category, intensity) buckets.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .classifier import CATEGORIES, EmotionDistribution, N_CATEGORIES, category_index
from .errors import EmptyBucket

INTENSITIES = ("low", "high")


@dataclass(frozen=True)
class AffectState:
    ema: tuple[float, ...] | None = None  # None until the first observation
    current_label: str | None = None
    label_since: int = 0
    last_update: int = 0
    candidate: str | None = None
    candidate_since: int = 0


@dataclass(frozen=True)
class SeedSelection:
    label: str
    intensity: str
    word: str
    rng_seed: int


@dataclass(frozen=True)
class Lexicon:
    buckets: dict[tuple[str, str], tuple[str, ...]]

    def words(self, label: str, intensity: str) -> tuple[str, ...]:
        bucket = self.buckets.get((label, intensity), ())
        if not bucket:
            raise EmptyBucket(f"no words for ({label}, {intensity})")
        return bucket


def load_lexicon(text: str) -> Lexicon:
    """Parse "category:intensity:word,word,..." lines; all 14 buckets required."""
    buckets: dict[tuple[str, str], tuple[str, ...]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(":", 2)
        if len(parts) != 3:
            raise ValueError(f"lexicon line {lineno}: expected category:intensity:words")
        label, intensity, words = (p.strip() for p in parts)
        if label not in CATEGORIES:
            raise ValueError(f"lexicon line {lineno}: unknown category {label!r}")
        if intensity not in INTENSITIES:
            raise ValueError(f"lexicon line {lineno}: unknown intensity {intensity!r}")
        wordlist = tuple(w.strip() for w in words.split(",") if w.strip())
        if not wordlist:
            raise EmptyBucket(f"lexicon line {lineno}: empty bucket")
        buckets[(label, intensity)] = wordlist
    for label in CATEGORIES:
        for intensity in INTENSITIES:
            if (label, intensity) not in buckets:
                raise EmptyBucket(f"missing bucket ({label}, {intensity})")
    return Lexicon(buckets)


def smooth_ema(state: AffectState, dist: EmotionDistribution, alpha: float) -> AffectState:
    """ema' = alpha * dist + (1 - alpha) * ema; the first observation seeds the ema."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if state.ema is None:
        ema = tuple(dist.probs)
    else:
        ema = tuple(
            alpha * d + (1.0 - alpha) * e for d, e in zip(dist.probs, state.ema)
        )
    return replace(state, ema=ema, last_update=dist.source_timestamp)


def _argmax_tie_low(values) -> int:
    best = 0
    for i in range(1, len(values)):
        if values[i] > values[best]:
            best = i
    return best


def stable_label(
    state: AffectState, margin: float, dwell_ms: int, now: int
) -> tuple[AffectState, str | None]:
    """Hysteresis: the argmax category (ties to the lowest index) becomes the
    label only after beating the current label's ema by `margin` continuously
    for `dwell_ms`. Returns the updated state and the current label."""
    if margin < 0:
        raise ValueError("margin must be >= 0")
    if state.ema is None:
        return state, state.current_label
    cand_idx = _argmax_tie_low(state.ema)
    cand = CATEGORIES[cand_idx]
    if cand == state.current_label:
        return replace(state, candidate=None), state.current_label
    cur_val = state.ema[category_index(state.current_label)] if state.current_label else 0.0
    if state.ema[cand_idx] - cur_val >= margin:
        if state.candidate != cand:
            return replace(state, candidate=cand, candidate_since=now), state.current_label
        if now - state.candidate_since >= dwell_ms:
            new = replace(
                state, current_label=cand, label_since=now, candidate=None
            )
            return new, cand
        return state, state.current_label
    return replace(state, candidate=None), state.current_label


def pick_seed_word(
    lexicon: Lexicon,
    label: str,
    ema: tuple[float, ...],
    rng_seed: int,
    intensity_threshold: float = 0.6,
) -> SeedSelection:
    """Deterministic word choice: high intensity iff the label's smoothed
    probability clears the threshold; the seed indexes into the bucket."""
    if len(ema) != N_CATEGORIES:
        raise ValueError(f"ema must have {N_CATEGORIES} entries")
    intensity = "high" if ema[category_index(label)] >= intensity_threshold else "low"
    bucket = lexicon.words(label, intensity)
    word = bucket[rng_seed % len(bucket)]
    return SeedSelection(label, intensity, word, rng_seed)
